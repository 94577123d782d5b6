use crate::error::Result;
use crate::tensor::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Passes the gradient where the input was strictly positive; the
/// subgradient at exactly zero is taken as 0.
pub fn relu_backward(input: &Tensor, dy: &Tensor) -> Result<Tensor> {
    super::same_shape("relu upstream gradient", input.shape(), dy.shape())?;
    let data = input
        .as_slice()
        .iter()
        .zip(dy.as_slice())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape(), data)
}
