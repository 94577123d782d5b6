use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor};

use super::conv::conv_output_size;

/// Square max-pooling window. Padded cells never win the max.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PoolSpec {
    pub fn new(kernel: usize, stride: usize) -> Self {
        PoolSpec {
            kernel,
            stride,
            padding: 0,
        }
    }

    pub fn padded(kernel: usize, stride: usize, padding: usize) -> Self {
        PoolSpec {
            kernel,
            stride,
            padding,
        }
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::Parameter(
                "pool kernel and stride must be >= 1".into(),
            ));
        }
        if self.padding >= self.kernel {
            return Err(Error::Parameter(format!(
                "pool padding {} must be smaller than the window {}",
                self.padding, self.kernel
            )));
        }
        let out = |len| conv_output_size(len, self.kernel, self.stride, self.padding);
        match (out(input.h), out(input.w)) {
            (Some(h), Some(w)) => Ok(Shape4::new(input.n, input.c, h, w)),
            _ => Err(Error::shape(format!(
                "pool window {} larger than padded {}x{} input",
                self.kernel, input.h, input.w
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MaxPoolContext {
    input: Shape4,
    /// Flat input index of the winning cell, one per output cell.
    argmax: Vec<usize>,
}

impl MaxPoolContext {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// Ties resolve to the first maximal cell in row-major window order.
pub fn maxpool_forward(x: &Tensor, spec: &PoolSpec) -> Result<(Tensor, MaxPoolContext)> {
    let input = x.shape();
    let out = spec.output_shape(input)?;
    let mut y = Tensor::zeros(out);
    let mut argmax = vec![0; out.len()];
    let xs = x.as_slice();
    let p = spec.padding as isize;
    let mut o = 0;
    for n in 0..out.n {
        for c in 0..out.c {
            let base = input.offset(n, c, 0, 0);
            for i in 0..out.h {
                for j in 0..out.w {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    for u in 0..spec.kernel {
                        let yy = (i * spec.stride + u) as isize - p;
                        if yy < 0 || yy >= input.h as isize {
                            continue;
                        }
                        for v in 0..spec.kernel {
                            let xx = (j * spec.stride + v) as isize - p;
                            if xx < 0 || xx >= input.w as isize {
                                continue;
                            }
                            let idx = base + yy as usize * input.w + xx as usize;
                            if best_idx == usize::MAX || xs[idx] > best {
                                best = xs[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    y.as_mut_slice()[o] = best;
                    argmax[o] = best_idx;
                    o += 1;
                }
            }
        }
    }
    Ok((y, MaxPoolContext { input, argmax }))
}

pub fn maxpool_backward(ctx: &MaxPoolContext, dy: &Tensor) -> Result<Tensor> {
    if dy.len() != ctx.argmax.len() {
        return Err(Error::shape(format!(
            "maxpool upstream gradient has {} cells, expected {}",
            dy.len(),
            ctx.argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(ctx.input);
    let d = dx.as_mut_slice();
    for (&idx, &g) in ctx.argmax.iter().zip(dy.as_slice()) {
        d[idx] += g;
    }
    Ok(dx)
}

/// Mean of each feature map: `(N, C, H, W) -> (N, C, 1, 1)`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.plane() == 0 {
        return Err(Error::shape(format!(
            "global average pool over empty plane {s}"
        )));
    }
    let plane = s.plane();
    let data = x
        .as_slice()
        .chunks(plane)
        .map(|ch| ch.iter().sum::<f64>() / plane as f64)
        .collect();
    Tensor::new(Shape4::new(s.n, s.c, 1, 1), data)
}

pub fn global_avg_pool_backward(input: Shape4, dy: &Tensor) -> Result<Tensor> {
    super::same_shape(
        "gap upstream gradient",
        Shape4::new(input.n, input.c, 1, 1),
        dy.shape(),
    )?;
    let plane = input.plane();
    let inv = 1.0 / plane as f64;
    let mut data = Vec::with_capacity(input.len());
    for &g in dy.as_slice() {
        data.extend(std::iter::repeat_n(g * inv, plane));
    }
    Tensor::new(input, data)
}
