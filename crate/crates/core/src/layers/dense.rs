use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Shape4, Tensor};

#[derive(Clone, Debug)]
pub struct DenseContext {
    input: Tensor,
}

/// `out = flatten(x) * w + b` with `w` stored as a `(1, 1, D, M)` matrix and
/// `b` as `(1, M, 1, 1)`. Output shape is `(N, M, 1, 1)`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(Tensor, DenseContext)> {
    let s = x.shape();
    let ws = w.shape();
    let (d, m) = (ws.h, ws.w);
    if ws.n != 1 || ws.c != 1 {
        return Err(Error::shape(format!(
            "dense weight must be a matrix, got {ws}"
        )));
    }
    if s.sample_len() != d {
        return Err(Error::shape(format!(
            "dense input length {} does not match weight rows {d}",
            s.sample_len()
        )));
    }
    if b.len() != m {
        return Err(Error::shape(format!(
            "dense bias length {} does not match {m} outputs",
            b.len()
        )));
    }
    let mut y = Tensor::zeros(Shape4::new(s.n, m, 1, 1));
    for row in y.as_mut_slice().chunks_mut(m) {
        row.copy_from_slice(b.as_slice());
    }
    gemm(
        1.0,
        MatRef::new(x.as_slice(), s.n, d),
        MatRef::new(w.as_slice(), d, m),
        1.0,
        y.as_mut_slice(),
    );
    Ok((y, DenseContext { input: x.clone() }))
}

/// Returns `(dx, dw, db)`.
pub fn dense_backward(
    ctx: &DenseContext,
    w: &Tensor,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let s = ctx.input.shape();
    let (d, m) = (w.shape().h, w.shape().w);
    super::same_shape(
        "dense upstream gradient",
        Shape4::new(s.n, m, 1, 1),
        dy.shape(),
    )?;
    let g = MatRef::new(dy.as_slice(), s.n, m);
    let mut dx = Tensor::zeros(s);
    gemm(
        1.0,
        g,
        MatRef::new(w.as_slice(), d, m).t(),
        0.0,
        dx.as_mut_slice(),
    );
    let mut dw = Tensor::zeros(w.shape());
    gemm(
        1.0,
        MatRef::new(ctx.input.as_slice(), s.n, d).t(),
        g,
        0.0,
        dw.as_mut_slice(),
    );
    let mut db = Tensor::zeros(Shape4::new(1, m, 1, 1));
    for row in dy.as_slice().chunks(m) {
        for (acc, v) in db.as_mut_slice().iter_mut().zip(row) {
            *acc += v;
        }
    }
    Ok((dx, dw, db))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let x = Tensor::new(Shape4::new(2, 3, 1, 1), vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap();
        let b = Tensor::zeros(Shape4::new(1, 3, 1, 1));
        let (y, _) = dense_forward(&x, &Tensor::identity(3), &b).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn affine_by_inspection() {
        let x = Tensor::new(Shape4::new(1, 2, 1, 1), vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(Shape4::new(1, 2, 1, 1), vec![10.0, 20.0]).unwrap();
        let (y, _) = dense_forward(&x, &Tensor::identity(2), &b).unwrap();
        assert_eq!(y.as_slice(), &[11.0, 22.0]);
    }

    #[test]
    fn length_mismatch_names_both_sizes() {
        let x = Tensor::zeros(Shape4::new(1, 3072, 1, 1));
        let w = Tensor::zeros(Shape4::new(1, 1, 4096, 2));
        let b = Tensor::zeros(Shape4::new(1, 2, 1, 1));
        let msg = dense_forward(&x, &w, &b).unwrap_err().to_string();
        assert!(msg.contains("3072") && msg.contains("4096"), "{msg}");
    }
}
