use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor};

use super::Mode;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNormSpec {
    pub channels: usize,
    pub eps: f64,
    /// Weight kept on the old running statistic at each update.
    pub momentum: f64,
}

impl BatchNormSpec {
    pub fn new(channels: usize) -> Self {
        BatchNormSpec {
            channels,
            eps: 1e-5,
            momentum: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::Parameter(format!(
                "batchnorm eps must be > 0, got {}",
                self.eps
            )));
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return Err(Error::Parameter(format!(
                "batchnorm momentum must lie in (0,1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Per-channel running mean and variance used at inference.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormContext {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

/// Spatial batch normalization over `(N, H, W)` per channel.
///
/// In training mode the batch statistics normalize the input and are folded
/// into `running`; inference mode reads `running` and returns no context.
pub fn batchnorm2d_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running: &mut RunningStats,
    spec: &BatchNormSpec,
    mode: Mode,
) -> Result<(Tensor, Option<BatchNormContext>)> {
    spec.validate()?;
    let s = x.shape();
    if s.c != spec.channels
        || gamma.len() != s.c
        || beta.len() != s.c
        || running.mean.len() != s.c
        || running.var.len() != s.c
    {
        return Err(Error::shape(format!(
            "batchnorm over {} channels given input {s}",
            spec.channels
        )));
    }
    let plane = s.plane();
    let (g, b) = (gamma.as_slice(), beta.as_slice());
    let xs = x.as_slice();
    let mut y = Tensor::zeros(s);

    if mode == Mode::Inference {
        let ys = y.as_mut_slice();
        for n in 0..s.n {
            for c in 0..s.c {
                let inv = 1.0 / (running.var[c] + spec.eps).sqrt();
                let o = s.offset(n, c, 0, 0);
                for i in o..o + plane {
                    ys[i] = g[c] * (xs[i] - running.mean[c]) * inv + b[c];
                }
            }
        }
        return Ok((y, None));
    }

    if s.n < 2 {
        return Err(Error::Usage(
            "batchnorm in training mode needs a batch of at least 2".into(),
        ));
    }
    let m = (s.n * plane) as f64;
    let mut xhat = Tensor::zeros(s);
    let mut inv_std = vec![0.0; s.c];
    for c in 0..s.c {
        let mut sum = 0.0;
        for n in 0..s.n {
            let o = s.offset(n, c, 0, 0);
            sum += xs[o..o + plane].iter().sum::<f64>();
        }
        let mean = sum / m;
        let mut sq = 0.0;
        for n in 0..s.n {
            let o = s.offset(n, c, 0, 0);
            sq += xs[o..o + plane]
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>();
        }
        let var = sq / m;
        let inv = 1.0 / (var + spec.eps).sqrt();
        inv_std[c] = inv;
        for n in 0..s.n {
            let o = s.offset(n, c, 0, 0);
            for i in o..o + plane {
                let h = (xs[i] - mean) * inv;
                xhat.as_mut_slice()[i] = h;
                y.as_mut_slice()[i] = g[c] * h + b[c];
            }
        }
        running.mean[c] = spec.momentum * running.mean[c] + (1.0 - spec.momentum) * mean;
        running.var[c] = spec.momentum * running.var[c] + (1.0 - spec.momentum) * var;
    }
    Ok((y, Some(BatchNormContext { xhat, inv_std })))
}

/// Training-mode derivative, including the paths through the batch mean
/// and variance. Returns `(dx, dgamma, dbeta)`.
pub fn batchnorm2d_backward(
    ctx: &BatchNormContext,
    gamma: &Tensor,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let s = ctx.xhat.shape();
    super::same_shape("batchnorm upstream gradient", s, dy.shape())?;
    let plane = s.plane();
    let m = (s.n * plane) as f64;
    let (xh, g, d) = (ctx.xhat.as_slice(), gamma.as_slice(), dy.as_slice());
    let mut dx = Tensor::zeros(s);
    let mut dgamma = Tensor::zeros(Shape4::new(1, s.c, 1, 1));
    let mut dbeta = Tensor::zeros(Shape4::new(1, s.c, 1, 1));
    for c in 0..s.c {
        let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
        for n in 0..s.n {
            let o = s.offset(n, c, 0, 0);
            for i in o..o + plane {
                sum_dy += d[i];
                sum_dy_xhat += d[i] * xh[i];
            }
        }
        dgamma.as_mut_slice()[c] = sum_dy_xhat;
        dbeta.as_mut_slice()[c] = sum_dy;
        let k = g[c] * ctx.inv_std[c] / m;
        for n in 0..s.n {
            let o = s.offset(n, c, 0, 0);
            for i in o..o + plane {
                dx.as_mut_slice()[i] = k * (m * d[i] - sum_dy - xh[i] * sum_dy_xhat);
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

/// Cross-channel local response normalization constants:
/// `b_c = a_c * (k + alpha * sum_{|j-c| <= size/2} a_j^2)^(-beta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrnSpec {
    pub size: usize,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LrnSpec {
    fn default() -> Self {
        LrnSpec {
            size: 5,
            k: 2.0,
            alpha: 1e-4,
            beta: 0.75,
        }
    }
}

impl LrnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size % 2 == 0 {
            return Err(Error::Parameter(format!(
                "lrn size must be odd, got {}",
                self.size
            )));
        }
        if !(self.k > 0.0 && self.alpha >= 0.0 && self.beta > 0.0) {
            return Err(Error::Parameter(format!(
                "lrn needs k > 0, alpha >= 0, beta > 0 (got k={}, alpha={}, beta={})",
                self.k, self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LrnContext {
    spec: LrnSpec,
    input: Tensor,
    /// The energy term `k + alpha * sum a^2` for every cell.
    energy: Vec<f64>,
}

fn window(c: usize, channels: usize, half: usize) -> std::ops::Range<usize> {
    c.saturating_sub(half)..(c + half + 1).min(channels)
}

pub fn lrn_forward(x: &Tensor, spec: &LrnSpec) -> Result<(Tensor, LrnContext)> {
    spec.validate()?;
    let s = x.shape();
    let half = spec.size / 2;
    let xs = x.as_slice();
    let mut energy = vec![0.0; xs.len()];
    let mut y = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            for p in 0..s.plane() {
                let sq: f64 = window(c, s.c, half)
                    .map(|j| {
                        let a = xs[s.offset(n, j, 0, 0) + p];
                        a * a
                    })
                    .sum();
                let i = s.offset(n, c, 0, 0) + p;
                energy[i] = spec.k + spec.alpha * sq;
                y.as_mut_slice()[i] = xs[i] * energy[i].powf(-spec.beta);
            }
        }
    }
    Ok((
        y,
        LrnContext {
            spec: *spec,
            input: x.clone(),
            energy,
        },
    ))
}

pub fn lrn_backward(ctx: &LrnContext, dy: &Tensor) -> Result<Tensor> {
    let s = ctx.input.shape();
    super::same_shape("lrn upstream gradient", s, dy.shape())?;
    let LrnSpec {
        size, alpha, beta, ..
    } = ctx.spec;
    let half = size / 2;
    let (a, e, d) = (ctx.input.as_slice(), &ctx.energy, dy.as_slice());
    // t_c = dy_c * a_c * e_c^(-beta-1)
    let t: Vec<f64> = (0..a.len())
        .map(|i| d[i] * a[i] * e[i].powf(-beta - 1.0))
        .collect();
    let mut dx = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            for p in 0..s.plane() {
                let i = s.offset(n, c, 0, 0) + p;
                let cross: f64 = window(c, s.c, half)
                    .map(|j| t[s.offset(n, j, 0, 0) + p])
                    .sum();
                dx.as_mut_slice()[i] = d[i] * e[i].powf(-beta) - 2.0 * alpha * beta * a[i] * cross;
            }
        }
    }
    Ok(dx)
}
