//! Dense NCHW tensors, 2D matrix views and the seeded random generator.
//!
//! Every activation, gradient and parameter in the crate is a [`Tensor`]:
//! a [`Shape4`] plus a flat `Vec<f64>` in row-major `n -> c -> h -> w` order.
//! Matrices are tensors of shape `(1, 1, rows, cols)`.

use std::fmt;

use rand_core::{RngCore, SeedableRng};
use rand_pcg::Pcg64;

use crate::error::{Error, Result};

/// Batch, channel, height, width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape4 { n, c, h, w }
    }

    /// Element count, or `None` if it overflows `usize`.
    pub fn checked_len(&self) -> Option<usize> {
        self.n
            .checked_mul(self.c)?
            .checked_mul(self.h)?
            .checked_mul(self.w)
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one sample (`c * h * w`).
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn with_n(self, n: usize) -> Self {
        Shape4 { n, ..self }
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.n, self.c, self.h, self.w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape4,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from either a single broadcast value or exactly
    /// `shape.len()` values in canonical order.
    pub fn new(shape: Shape4, values: Vec<f64>) -> Result<Self> {
        let expected = shape
            .checked_len()
            .ok_or_else(|| Error::shape(format!("element count of {shape} overflows")))?;
        match values.len() {
            n if n == expected => Ok(Tensor {
                shape,
                data: values,
            }),
            1 => Ok(Tensor::full(shape, values[0])),
            got => Err(Error::Construction { expected, got }),
        }
    }

    pub fn full(shape: Shape4, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn zeros(shape: Shape4) -> Self {
        Tensor::full(shape, 0.0)
    }

    /// A `(1, 1, rows, cols)` matrix from row-major values.
    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Tensor::new(Shape4::new(1, 1, rows, cols), values)
    }

    pub fn identity(size: usize) -> Self {
        let mut t = Tensor::zeros(Shape4::new(1, 1, size, size));
        for i in 0..size {
            t.data[i * size + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.shape.offset(n, c, h, w)]
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(self, shape: Shape4) -> Result<Self> {
        if shape.len() != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {} into {shape}",
                self.shape
            )));
        }
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    /// Borrow sample `i` as a flat slice.
    pub fn sample(&self, i: usize) -> &[f64] {
        let len = self.shape.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    /// Stacks per-sample tensors (each with `n == 1`) along the batch axis.
    pub fn stack(samples: &[&Tensor]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::shape("cannot stack an empty list"))?
            .shape;
        let mut data = Vec::with_capacity(first.len() * samples.len());
        for s in samples {
            if s.shape != first {
                return Err(Error::shape(format!(
                    "stack: sample shape {} differs from {first}",
                    s.shape
                )));
            }
            data.extend_from_slice(&s.data);
        }
        Ok(Tensor {
            shape: first.with_n(first.n * samples.len()),
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "add: {} vs {}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    fn as_mat(&self) -> Result<MatRef<'_>> {
        if self.shape.n != 1 || self.shape.c != 1 {
            return Err(Error::shape(format!(
                "expected a (1,1,rows,cols) matrix, got {}",
                self.shape
            )));
        }
        Ok(MatRef::new(&self.data, self.shape.h, self.shape.w))
    }
}

/// Matrix product of two `(1, 1, rows, cols)` tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (am, bm) = (a.as_mat()?, b.as_mat()?);
    if am.cols != bm.rows {
        return Err(Error::shape(format!(
            "matmul inner dims disagree: ({}x{}) x ({}x{})",
            am.rows, am.cols, bm.rows, bm.cols
        )));
    }
    let mut out = Tensor::zeros(Shape4::new(1, 1, am.rows, bm.cols));
    gemm(1.0, am, bm, 0.0, &mut out.data);
    Ok(out)
}

/// Strided read-only matrix view over a flat slice.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    row_stride: isize,
    col_stride: isize,
}

impl<'a> MatRef<'a> {
    /// Row-major view. Panics if the slice is too short.
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "matrix view out of bounds");
        MatRef {
            data,
            rows,
            cols,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    pub fn t(self) -> Self {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

/// `c = alpha * a * b + beta * c`, with `c` row-major `a.rows x b.cols`.
pub(crate) fn gemm(alpha: f64, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: &mut [f64]) {
    assert_eq!(a.cols, b.rows, "gemm inner dims");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(c.len() >= m * n, "gemm output too short");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v *= beta;
        }
        return;
    }
    // SAFETY: the views were bounds-checked on construction (transposition
    // only swaps strides), and `c` holds at least m*n elements laid out
    // with row stride n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.row_stride,
            a.col_stride,
            b.data.as_ptr(),
            b.row_stride,
            b.col_stride,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Seeded PCG-XSL-RR 128/64 generator (`Pcg64`) with Box–Muller normals.
///
/// The stream for a given seed is fixed by the PCG definition and the
/// `seed_from_u64` expansion, so results reproduce across machines.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: Pcg64,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: Pcg64::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for a sub-task, derived from the original seed.
    pub fn fork(&self, tag: u64) -> Rng {
        // splitmix64 finalizer over the pair
        let mut z = self
            .seed
            .wrapping_add(tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Rng::new(z ^ (z >> 31))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, bound)`; `bound` must be positive.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "below(0)");
        let bound = bound as u64;
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % bound) as usize;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(v) = self.spare_normal.take() {
            return v;
        }
        // 1 - u keeps the log argument in (0, 1]
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher–Yates shuffle driven by [`Rng::below`].
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

pub fn sample_normal(rng: &mut Rng, shape: Shape4, mean: f64, stdev: f64) -> Result<Tensor> {
    if !(stdev >= 0.0) || !stdev.is_finite() {
        return Err(Error::Parameter(format!(
            "stdev must be finite and non-negative, got {stdev}"
        )));
    }
    let data = (0..shape.len())
        .map(|_| mean + stdev * rng.standard_normal())
        .collect();
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::Rng;
    use super::*;
    use proptest::prelude::*;

    fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, p: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * p];
        for i in 0..m {
            for j in 0..p {
                let mut s = 0.0;
                for t in 0..k {
                    s += a[i * k + t] * b[t * p + j];
                }
                c[i * p + j] = s;
            }
        }
        c
    }

    #[test]
    fn make_tensor_fill_and_values() {
        let z = Tensor::new(Shape4::new(1, 1, 2, 2), vec![0.0]).unwrap();
        assert_eq!(z.as_slice(), &[0.0; 4]);
        let t = Tensor::new(Shape4::new(1, 2, 1, 1), vec![3.0, 4.0]).unwrap();
        assert_eq!(t.at(0, 0, 0, 0), 3.0);
        assert_eq!(t.at(0, 1, 0, 0), 4.0);
    }

    #[test]
    fn make_tensor_length_mismatch() {
        let err = Tensor::new(Shape4::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0]).unwrap_err();
        assert_eq!(err.to_string(), "expected 4 values, got 3");
    }

    #[test]
    fn matmul_examples() {
        let b = Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(matmul(&Tensor::identity(3), &b).unwrap(), b);

        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let v = Tensor::matrix(2, 1, vec![5.0, 6.0]).unwrap();
        assert_eq!(matmul(&a, &v).unwrap().as_slice(), &[17.0, 39.0]);

        let x = Tensor::zeros(Shape4::new(1, 1, 2, 3));
        let y = Tensor::zeros(Shape4::new(1, 1, 4, 2));
        assert!(matches!(matmul(&x, &y), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_matches_naive_on_random_cases() {
        let mut rng = Rng::new(11);
        for _ in 0..100 {
            let (m, k, p) = (1 + rng.below(16), 1 + rng.below(16), 1 + rng.below(16));
            let a: Vec<f64> = (0..m * k).map(|_| rng.standard_normal()).collect();
            let b: Vec<f64> = (0..k * p).map(|_| rng.standard_normal()).collect();
            let want = naive_matmul(&a, &b, m, k, p);
            let got = matmul(
                &Tensor::matrix(m, k, a).unwrap(),
                &Tensor::matrix(k, p, b).unwrap(),
            )
            .unwrap();
            let scale = want.iter().fold(1e-300f64, |s, v| s.max(v.abs()));
            for (g, w) in got.as_slice().iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * scale, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn transposed_views() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let mut c = vec![0.0; 4];
        gemm(
            1.0,
            MatRef::new(&a, 2, 3),
            MatRef::new(&a, 2, 3).t(),
            0.0,
            &mut c,
        );
        assert_eq!(c, vec![14.0, 32.0, 32.0, 77.0]);
    }

    #[test]
    fn sample_normal_contracts() {
        let shape = Shape4::new(1, 1, 4, 4);
        let t = sample_normal(&mut Rng::new(1), shape, 2.5, 0.0).unwrap();
        assert!(t.as_slice().iter().all(|&v| v == 2.5));

        let a = sample_normal(&mut Rng::new(42), shape, 0.0, 1.0).unwrap();
        let b = sample_normal(&mut Rng::new(42), shape, 0.0, 1.0).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());

        assert!(matches!(
            sample_normal(&mut Rng::new(1), shape, 0.0, -1.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn sample_normal_moments() {
        let t = sample_normal(&mut Rng::new(42), Shape4::new(1, 1, 1000, 1000), 0.0, 1.0).unwrap();
        let n = t.len() as f64;
        let mean = t.sum() / n;
        let var = t.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.01, "stdev {}", var.sqrt());
    }

    #[test]
    fn fork_is_deterministic_and_distinct() {
        let base = Rng::new(7);
        assert_eq!(base.fork(3).next_u64(), base.fork(3).next_u64());
        assert_ne!(base.fork(3).next_u64(), base.fork(4).next_u64());
    }

    proptest! {
        #[test]
        fn make_tensor_round_trip(vals in prop::collection::vec(-1e6f64..1e6, 1..64)) {
            let shape = Shape4::new(1, 1, 1, vals.len());
            let t = Tensor::new(shape, vals.clone()).unwrap();
            prop_assert_eq!(t.as_slice(), &vals[..]);
        }

        #[test]
        fn identity_is_neutral(m in 1usize..8, n in 1usize..8, seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let a = Tensor::matrix(m, n, (0..m * n).map(|_| rng.standard_normal()).collect()).unwrap();
            prop_assert_eq!(&matmul(&Tensor::identity(m), &a).unwrap(), &a);
            prop_assert_eq!(&matmul(&a, &Tensor::identity(n)).unwrap(), &a);
        }
    }
}
