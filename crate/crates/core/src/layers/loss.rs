use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor};

#[derive(Clone, Debug)]
pub struct SoftmaxCe {
    /// Mean negative log-likelihood of the true classes.
    pub loss: f64,
    /// `(N, K, 1, 1)` class probabilities.
    pub probs: Tensor,
    /// `(prob - onehot) / N`, shaped like the logits.
    pub grad: Tensor,
}

/// Softmax (max-shifted) fused with cross-entropy. Each sample's logits are
/// its `c * h * w` values.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<SoftmaxCe> {
    let s = logits.shape();
    let k = s.sample_len();
    if labels.len() != s.n {
        return Err(Error::Data(format!(
            "{} labels for a batch of {}",
            labels.len(),
            s.n
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Data(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    let mut probs = Vec::with_capacity(s.len());
    let mut grad = Vec::with_capacity(s.len());
    let mut loss = 0.0;
    let inv_n = 1.0 / s.n as f64;
    for (row, &label) in logits.as_slice().chunks(k).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        loss -= (row[label] - max) - total.ln();
        for (j, e) in exps.iter().enumerate() {
            let p = e / total;
            probs.push(p);
            grad.push((p - if j == label { 1.0 } else { 0.0 }) * inv_n);
        }
    }
    Ok(SoftmaxCe {
        loss: loss * inv_n,
        probs: Tensor::new(Shape4::new(s.n, k, 1, 1), probs)?,
        grad: Tensor::new(s, grad)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::finite_difference_grad;
    use crate::tensor::{sample_normal, Rng};

    fn logits(n: usize, k: usize, v: Vec<f64>) -> Tensor {
        Tensor::new(Shape4::new(n, k, 1, 1), v).unwrap()
    }

    #[test]
    fn uniform_logits() {
        let r = softmax_cross_entropy(&logits(1, 2, vec![0.3, 0.3]), &[1]).unwrap();
        assert!((r.loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(r.probs.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn extreme_logits_do_not_overflow() {
        let r = softmax_cross_entropy(&logits(1, 2, vec![1000.0, -1000.0]), &[0]).unwrap();
        assert!(r.loss.abs() < 1e-300);
        assert!(r.probs.all_finite() && r.grad.all_finite());
    }

    #[test]
    fn out_of_range_label() {
        assert!(matches!(
            softmax_cross_entropy(&logits(1, 2, vec![0.0, 0.0]), &[2]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn rows_sum_to_one() {
        let x = sample_normal(&mut Rng::new(4), Shape4::new(6, 5, 1, 1), 0.0, 10.0).unwrap();
        let r = softmax_cross_entropy(&x, &[0, 1, 2, 3, 4, 0]).unwrap();
        for row in r.probs.as_slice().chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = sample_normal(&mut Rng::new(8), Shape4::new(3, 4, 1, 1), 0.0, 1.0).unwrap();
        let labels = [2, 0, 3];
        let analytic = softmax_cross_entropy(&x, &labels).unwrap().grad;
        let numeric = finite_difference_grad(
            |t| softmax_cross_entropy(t, &labels).unwrap().loss,
            &x,
            1e-5,
        )
        .unwrap();
        assert!(crate::layers::relative_error(&analytic, &numeric) < 1e-6);
    }
}
