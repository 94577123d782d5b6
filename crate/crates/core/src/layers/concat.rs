use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor};

/// Stacks inputs along the channel axis in argument order.
pub fn concat_channels(xs: &[&Tensor]) -> Result<Tensor> {
    let first = xs
        .first()
        .ok_or_else(|| Error::shape("concat of zero tensors"))?
        .shape();
    for x in xs {
        let s = x.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(Error::shape(format!(
                "concat inputs disagree on (n,h,w): {first} vs {s}"
            )));
        }
    }
    let channels: usize = xs.iter().map(|x| x.shape().c).sum();
    let out = Shape4::new(first.n, channels, first.h, first.w);
    let mut data = Vec::with_capacity(out.len());
    for n in 0..first.n {
        for x in xs {
            data.extend_from_slice(x.sample(n));
        }
    }
    Tensor::new(out, data)
}

/// Splits a channel-concatenated gradient back into per-input pieces.
pub fn concat_backward(channels: &[usize], dy: &Tensor) -> Result<Vec<Tensor>> {
    let s = dy.shape();
    if channels.iter().sum::<usize>() != s.c {
        return Err(Error::shape(format!(
            "concat gradient has {} channels, inputs had {:?}",
            s.c, channels
        )));
    }
    let mut parts: Vec<Vec<f64>> = channels
        .iter()
        .map(|c| Vec::with_capacity(s.n * c * s.plane()))
        .collect();
    for n in 0..s.n {
        let sample = dy.sample(n);
        let mut start = 0;
        for (part, &c) in parts.iter_mut().zip(channels) {
            let len = c * s.plane();
            part.extend_from_slice(&sample[start..start + len]);
            start += len;
        }
    }
    parts
        .into_iter()
        .zip(channels)
        .map(|(data, &c)| Tensor::new(Shape4::new(s.n, c, s.h, s.w), data))
        .collect()
}

/// `(N, C, H, W) -> (N, C*H*W, 1, 1)`.
pub fn flatten(x: &Tensor) -> Tensor {
    let s = x.shape();
    Tensor::new(
        Shape4::new(s.n, s.sample_len(), 1, 1),
        x.as_slice().to_vec(),
    )
    .expect("flatten preserves length")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{sample_normal, Rng};

    #[test]
    fn single_input_is_identity() {
        let x = sample_normal(&mut Rng::new(1), Shape4::new(2, 3, 2, 2), 0.0, 1.0).unwrap();
        assert_eq!(concat_channels(&[&x]).unwrap(), x);
    }

    #[test]
    fn channels_stack_in_order() {
        let mut rng = Rng::new(2);
        let a = sample_normal(&mut rng, Shape4::new(1, 2, 4, 4), 0.0, 1.0).unwrap();
        let b = sample_normal(&mut rng, Shape4::new(1, 3, 4, 4), 0.0, 1.0).unwrap();
        let y = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(y.shape(), Shape4::new(1, 5, 4, 4));
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(y.at(0, 2, i, j), b.at(0, 0, i, j));
            }
        }
        let parts = concat_backward(&[2, 3], &y).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn spatial_mismatch() {
        let a = Tensor::zeros(Shape4::new(1, 1, 4, 4));
        let b = Tensor::zeros(Shape4::new(1, 1, 5, 4));
        assert!(matches!(concat_channels(&[&a, &b]), Err(Error::Shape(_))));
    }
}
