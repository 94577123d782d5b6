use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Shape4, Tensor};

/// 2D convolution hyperparameters. Kernels are square and odd-sized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub has_bias: bool,
}

impl Conv2dSpec {
    /// Biased convolution with padding `(k - 1) / 2`.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Conv2dSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: kernel.saturating_sub(1) / 2,
            has_bias: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Parameter(format!(
                "conv kernel must be odd and >= 1, got {}",
                self.kernel
            )));
        }
        if self.stride == 0 {
            return Err(Error::Parameter("conv stride must be >= 1".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Parameter("conv channel counts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> Shape4 {
        Shape4::new(
            self.out_channels,
            self.in_channels,
            self.kernel,
            self.kernel,
        )
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        self.validate()?;
        if input.c != self.in_channels {
            return Err(Error::shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, input.c
            )));
        }
        let out = |len| conv_output_size(len, self.kernel, self.stride, self.padding);
        match (out(input.h), out(input.w)) {
            (Some(h), Some(w)) => Ok(Shape4::new(input.n, self.out_channels, h, w)),
            _ => Err(Error::shape(format!(
                "conv k={} p={} does not fit a {}x{} input",
                self.kernel, self.padding, input.h, input.w
            ))),
        }
    }
}

/// `floor((len + 2p - k) / s) + 1`, or `None` when the window does not fit.
pub fn conv_output_size(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Debug)]
pub struct ConvContext {
    spec: Conv2dSpec,
    input: Shape4,
    output: Shape4,
    /// Per-sample im2col matrices, each `(C*k*k) x (Ho*Wo)`.
    cols: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ConvGradients {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

fn check_params(x: Shape4, w: &Tensor, b: Option<&Tensor>, spec: &Conv2dSpec) -> Result<Shape4> {
    let out = spec.output_shape(x)?;
    if w.shape() != spec.weight_shape() {
        return Err(Error::shape(format!(
            "conv weight shape {} does not match {}",
            w.shape(),
            spec.weight_shape()
        )));
    }
    match (spec.has_bias, b) {
        (true, Some(b)) if b.len() == spec.out_channels => {}
        (false, None) => {}
        (true, _) => {
            return Err(Error::shape(format!(
                "conv expects a bias of length {}",
                spec.out_channels
            )))
        }
        (false, Some(_)) => return Err(Error::shape("conv spec has no bias but one was given")),
    }
    Ok(out)
}

fn im2col(x: &[f64], input: Shape4, out: Shape4, spec: &Conv2dSpec, col: &mut [f64]) {
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding);
    let plane = out.h * out.w;
    for c in 0..input.c {
        let xc = &x[c * input.h * input.w..(c + 1) * input.h * input.w];
        for u in 0..k {
            for v in 0..k {
                let row = (c * k + u) * k + v;
                let dst = &mut col[row * plane..(row + 1) * plane];
                for i in 0..out.h {
                    let y = (i * s + u) as isize - p as isize;
                    let line = &mut dst[i * out.w..(i + 1) * out.w];
                    if y < 0 || y >= input.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &xc[y as usize * input.w..(y as usize + 1) * input.w];
                    for (j, d) in line.iter_mut().enumerate() {
                        let xx = (j * s + v) as isize - p as isize;
                        *d = if xx < 0 || xx >= input.w as isize {
                            0.0
                        } else {
                            src[xx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f64], input: Shape4, out: Shape4, spec: &Conv2dSpec, dx: &mut [f64]) {
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding);
    let plane = out.h * out.w;
    for c in 0..input.c {
        let dxc = &mut dx[c * input.h * input.w..(c + 1) * input.h * input.w];
        for u in 0..k {
            for v in 0..k {
                let row = (c * k + u) * k + v;
                let srcrow = &col[row * plane..(row + 1) * plane];
                for i in 0..out.h {
                    let y = (i * s + u) as isize - p as isize;
                    if y < 0 || y >= input.h as isize {
                        continue;
                    }
                    let base = y as usize * input.w;
                    for j in 0..out.w {
                        let xx = (j * s + v) as isize - p as isize;
                        if xx >= 0 && (xx as usize) < input.w {
                            dxc[base + xx as usize] += srcrow[i * out.w + j];
                        }
                    }
                }
            }
        }
    }
}

/// im2col + GEMM convolution.
pub fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    spec: &Conv2dSpec,
) -> Result<(Tensor, ConvContext)> {
    let input = x.shape();
    let out = check_params(input, w, b, spec)?;
    let rows = spec.in_channels * spec.kernel * spec.kernel;
    let plane = out.h * out.w;
    let mut cols = vec![0.0; input.n * rows * plane];
    let mut y = Tensor::zeros(out);
    for n in 0..input.n {
        let col = &mut cols[n * rows * plane..(n + 1) * rows * plane];
        im2col(x.sample(n), input, out, spec, col);
        let yn = &mut y.as_mut_slice()[n * out.sample_len()..(n + 1) * out.sample_len()];
        if let Some(b) = b {
            for (f, chunk) in yn.chunks_mut(plane).enumerate() {
                chunk.fill(b.as_slice()[f]);
            }
        }
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        gemm(
            1.0,
            MatRef::new(w.as_slice(), spec.out_channels, rows),
            MatRef::new(col, rows, plane),
            beta,
            yn,
        );
    }
    Ok((
        y,
        ConvContext {
            spec: *spec,
            input,
            output: out,
            cols,
        },
    ))
}

pub fn conv2d_backward(ctx: &ConvContext, w: &Tensor, dy: &Tensor) -> Result<ConvGradients> {
    let (spec, input, out) = (&ctx.spec, ctx.input, ctx.output);
    super::same_shape("conv upstream gradient", out, dy.shape())?;
    super::same_shape("conv weight", spec.weight_shape(), w.shape())?;
    let rows = spec.in_channels * spec.kernel * spec.kernel;
    let plane = out.h * out.w;
    let mut dx = Tensor::zeros(input);
    let mut dw = Tensor::zeros(spec.weight_shape());
    let mut db = spec
        .has_bias
        .then(|| Tensor::zeros(Shape4::new(1, spec.out_channels, 1, 1)));
    let mut dcol = vec![0.0; rows * plane];
    for n in 0..input.n {
        let col = &ctx.cols[n * rows * plane..(n + 1) * rows * plane];
        let dyn_ = dy.sample(n);
        let g = MatRef::new(dyn_, spec.out_channels, plane);
        gemm(
            1.0,
            g,
            MatRef::new(col, rows, plane).t(),
            1.0,
            dw.as_mut_slice(),
        );
        gemm(
            1.0,
            MatRef::new(w.as_slice(), spec.out_channels, rows).t(),
            g,
            0.0,
            &mut dcol,
        );
        let dxn = &mut dx.as_mut_slice()[n * input.sample_len()..(n + 1) * input.sample_len()];
        col2im(&dcol, input, out, spec, dxn);
        if let Some(db) = db.as_mut() {
            for (f, chunk) in dyn_.chunks(plane).enumerate() {
                db.as_mut_slice()[f] += chunk.iter().sum::<f64>();
            }
        }
    }
    Ok(ConvGradients {
        input: dx,
        weight: dw,
        bias: db,
    })
}

/// Direct sliding-window convolution. Slow; kept as the reference the
/// GEMM path is checked against.
pub fn conv2d_reference(
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    spec: &Conv2dSpec,
) -> Result<Tensor> {
    let input = x.shape();
    let out = check_params(input, w, b, spec)?;
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding as isize);
    let mut y = Tensor::zeros(out);
    for n in 0..out.n {
        for f in 0..out.c {
            for i in 0..out.h {
                for j in 0..out.w {
                    let mut acc = b.map_or(0.0, |b| b.as_slice()[f]);
                    for c in 0..input.c {
                        for u in 0..k {
                            for v in 0..k {
                                let yy = (i * s + u) as isize - p;
                                let xx = (j * s + v) as isize - p;
                                if yy < 0
                                    || xx < 0
                                    || yy >= input.h as isize
                                    || xx >= input.w as isize
                                {
                                    continue;
                                }
                                acc += x.at(n, c, yy as usize, xx as usize) * w.at(f, c, u, v);
                            }
                        }
                    }
                    let o = out.offset(n, f, i, j);
                    y.as_mut_slice()[o] = acc;
                }
            }
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{sample_normal, Rng};

    #[test]
    fn unit_kernel_is_identity() {
        let x = sample_normal(&mut Rng::new(3), Shape4::new(2, 1, 5, 4), 0.0, 1.0).unwrap();
        let spec = Conv2dSpec {
            in_channels: 1,
            out_channels: 1,
            kernel: 1,
            stride: 1,
            padding: 0,
            has_bias: true,
        };
        let w = Tensor::full(spec.weight_shape(), 1.0);
        let b = Tensor::zeros(Shape4::new(1, 1, 1, 1));
        let (y, _) = conv2d_forward(&x, &w, Some(&b), &spec).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn all_ones_kernel_sums_window() {
        let x = Tensor::new(Shape4::new(1, 1, 3, 3), (1..=9).map(f64::from).collect()).unwrap();
        let spec = Conv2dSpec {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            stride: 1,
            padding: 0,
            has_bias: false,
        };
        let w = Tensor::full(spec.weight_shape(), 1.0);
        let (y, _) = conv2d_forward(&x, &w, None, &spec).unwrap();
        assert_eq!(y.shape(), Shape4::new(1, 1, 1, 1));
        assert_eq!(y.as_slice(), &[45.0]);
    }

    #[test]
    fn stride_two_on_512_patch() {
        let spec = Conv2dSpec::same(3, 8, 7, 2);
        assert_eq!(spec.padding, 3);
        let out = spec.output_shape(Shape4::new(1, 3, 512, 512)).unwrap();
        assert_eq!((out.h, out.w), (256, 256));
    }

    #[test]
    fn rejects_even_kernel_and_channel_mismatch() {
        assert!(Conv2dSpec::same(1, 1, 2, 1).validate().is_err());
        let spec = Conv2dSpec::same(2, 1, 3, 1);
        assert!(matches!(
            spec.output_shape(Shape4::new(1, 3, 4, 4)),
            Err(Error::Shape(_))
        ));
        let tight = Conv2dSpec {
            padding: 0,
            ..Conv2dSpec::same(1, 1, 5, 1)
        };
        assert!(tight.output_shape(Shape4::new(1, 1, 3, 3)).is_err());
    }

    #[test]
    fn odd_kernels_share_output_size_at_stride_two() {
        for len in 1..40 {
            let sizes: Vec<_> = [3, 5, 7]
                .iter()
                .map(|&k| conv_output_size(len, k, 2, (k - 1) / 2).unwrap())
                .collect();
            assert!(
                sizes.windows(2).all(|w| w[0] == w[1]),
                "len {len}: {sizes:?}"
            );
        }
    }

    #[test]
    fn gemm_path_matches_reference() {
        let mut rng = Rng::new(2024);
        for _ in 0..50 {
            let c = 1 + rng.below(4);
            let f = 1 + rng.below(4);
            let k = [1, 3, 5, 7][rng.below(4)];
            let s = 1 + rng.below(2);
            let h = k.max(1 + rng.below(12));
            let w = k.max(1 + rng.below(12));
            let spec = Conv2dSpec {
                in_channels: c,
                out_channels: f,
                kernel: k,
                stride: s,
                padding: rng.below(k / 2 + 1),
                has_bias: rng.below(2) == 1,
            };
            let n = 1 + rng.below(2);
            let x = sample_normal(&mut rng, Shape4::new(n, c, h, w), 0.0, 1.0).unwrap();
            let wt = sample_normal(&mut rng, spec.weight_shape(), 0.0, 1.0).unwrap();
            let b = sample_normal(&mut rng, Shape4::new(1, f, 1, 1), 0.0, 1.0).unwrap();
            let b = spec.has_bias.then_some(&b);
            let (fast, _) = conv2d_forward(&x, &wt, b, &spec).unwrap();
            let slow = conv2d_reference(&x, &wt, b, &spec).unwrap();
            assert_eq!(fast.shape(), slow.shape());
            let scale = slow.max_abs().max(1e-300);
            for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
                assert!((a - b).abs() <= 1e-10 * scale);
            }
        }
    }
}
