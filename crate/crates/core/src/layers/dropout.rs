use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

use super::Mode;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutSpec {
    /// Probability of zeroing each value during training.
    pub p: f64,
}

impl DropoutSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p) {
            return Err(Error::Parameter(format!(
                "dropout probability must lie in [0,1), got {}",
                self.p
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DropoutContext {
    /// 0 for dropped cells, `1/(1-p)` for survivors.
    mask: Vec<f64>,
}

impl DropoutContext {
    pub fn mask(&self) -> &[f64] {
        &self.mask
    }
}

/// Inverted dropout. Inference mode is the identity and draws nothing from `rng`.
pub fn dropout_forward(
    x: &Tensor,
    spec: &DropoutSpec,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Tensor, Option<DropoutContext>)> {
    spec.validate()?;
    if mode == Mode::Inference {
        return Ok((x.clone(), None));
    }
    let scale = 1.0 / (1.0 - spec.p);
    let mask: Vec<f64> = if spec.p == 0.0 {
        vec![scale; x.len()]
    } else {
        (0..x.len())
            .map(|_| if rng.uniform() < spec.p { 0.0 } else { scale })
            .collect()
    };
    let data = x
        .as_slice()
        .iter()
        .zip(&mask)
        .map(|(&v, &m)| if m == 0.0 { 0.0 } else { v * scale })
        .collect();
    Ok((Tensor::new(x.shape(), data)?, Some(DropoutContext { mask })))
}

pub fn dropout_backward(ctx: &DropoutContext, dy: &Tensor) -> Result<Tensor> {
    if dy.len() != ctx.mask.len() {
        return Err(Error::shape("dropout upstream gradient length mismatch"));
    }
    let data = dy
        .as_slice()
        .iter()
        .zip(&ctx.mask)
        .map(|(g, m)| g * m)
        .collect();
    Tensor::new(dy.shape(), data)
}
