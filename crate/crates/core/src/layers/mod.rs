//! Forward and backward rules for every primitive layer.
//!
//! Each forward function returns its output together with the context the
//! matching backward rule needs. [`layer_backward`] dispatches on that
//! context, so a graph executor can store contexts without knowing layer
//! internals.

mod activation;
mod concat;
mod conv;
mod dense;
mod dropout;
pub mod gradcheck;
mod loss;
mod norm;
mod pool;

pub use activation::{relu, relu_backward};
pub use concat::{concat_backward, concat_channels, flatten};
pub use conv::{
    conv2d_backward, conv2d_forward, conv2d_reference, conv_output_size, Conv2dSpec, ConvContext,
    ConvGradients,
};
pub use dense::{dense_backward, dense_forward, DenseContext};
pub use dropout::{dropout_backward, dropout_forward, DropoutContext, DropoutSpec};
pub use gradcheck::{finite_difference_grad, relative_error};
pub use loss::{softmax_cross_entropy, SoftmaxCe};
pub use norm::{
    batchnorm2d_backward, batchnorm2d_forward, lrn_backward, lrn_forward, BatchNormContext,
    BatchNormSpec, LrnContext, LrnSpec, RunningStats,
};
pub use pool::{
    global_avg_pool, global_avg_pool_backward, maxpool_backward, maxpool_forward, MaxPoolContext,
    PoolSpec,
};

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor};

/// Training mode uses batch statistics and stochastic masks; inference is
/// deterministic and never records backward state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

/// Saved forward state for one layer application.
#[derive(Clone, Debug)]
pub enum Context {
    Conv(ConvContext),
    MaxPool(MaxPoolContext),
    Gap { input: Shape4 },
    BatchNorm(BatchNormContext),
    Dropout(DropoutContext),
    Lrn(LrnContext),
    Dense(DenseContext),
    Relu { input: Tensor },
    Concat { channels: Vec<usize> },
    Flatten { input: Shape4 },
}

impl Context {
    pub fn kind(&self) -> &'static str {
        match self {
            Context::Conv(_) => "conv2d",
            Context::MaxPool(_) => "maxpool",
            Context::Gap { .. } => "gap",
            Context::BatchNorm(_) => "batchnorm",
            Context::Dropout(_) => "dropout",
            Context::Lrn(_) => "lrn",
            Context::Dense(_) => "dense",
            Context::Relu { .. } => "relu",
            Context::Concat { .. } => "concat",
            Context::Flatten { .. } => "flatten",
        }
    }
}

/// Input gradients (one per layer input) and parameter gradients, in the
/// same order the parameters were passed.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub inputs: Vec<Tensor>,
    pub params: Vec<Tensor>,
}

/// Reverse-mode rule for any layer.
///
/// `params` are the layer's parameters in declaration order: `[weight, bias?]`
/// for conv and dense, `[gamma, beta]` for batchnorm, empty otherwise.
pub fn layer_backward(
    ctx: Option<&Context>,
    params: &[&Tensor],
    upstream: &Tensor,
) -> Result<Gradients> {
    let ctx =
        ctx.ok_or_else(|| Error::Usage("backward called without a saved forward context".into()))?;
    let param = |i: usize| -> Result<&Tensor> {
        params.get(i).copied().ok_or_else(|| {
            Error::Usage(format!("{} backward is missing parameter {i}", ctx.kind()))
        })
    };
    let single = |dx: Tensor| Gradients {
        inputs: vec![dx],
        params: vec![],
    };
    Ok(match ctx {
        Context::Conv(c) => {
            let g = conv2d_backward(c, param(0)?, upstream)?;
            let mut params = vec![g.weight];
            params.extend(g.bias);
            Gradients {
                inputs: vec![g.input],
                params,
            }
        }
        Context::MaxPool(c) => single(maxpool_backward(c, upstream)?),
        Context::Gap { input } => single(global_avg_pool_backward(*input, upstream)?),
        Context::BatchNorm(c) => {
            let (dx, dgamma, dbeta) = batchnorm2d_backward(c, param(0)?, upstream)?;
            Gradients {
                inputs: vec![dx],
                params: vec![dgamma, dbeta],
            }
        }
        Context::Dropout(c) => single(dropout_backward(c, upstream)?),
        Context::Lrn(c) => single(lrn_backward(c, upstream)?),
        Context::Dense(c) => {
            let (dx, dw, db) = dense_backward(c, param(0)?, upstream)?;
            Gradients {
                inputs: vec![dx],
                params: vec![dw, db],
            }
        }
        Context::Relu { input } => single(relu_backward(input, upstream)?),
        Context::Concat { channels } => Gradients {
            inputs: concat_backward(channels, upstream)?,
            params: vec![],
        },
        Context::Flatten { input } => single(upstream.clone().reshape(*input)?),
    })
}

pub(crate) fn same_shape(what: &str, a: Shape4, b: Shape4) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{what}: expected {a}, got {b}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_without_context_is_usage_error() {
        let dy = Tensor::zeros(Shape4::new(1, 1, 1, 1));
        assert!(matches!(
            layer_backward(None, &[], &dy),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn gap_backward_spreads_uniformly() {
        let ctx = Context::Gap {
            input: Shape4::new(1, 1, 2, 2),
        };
        let dy = Tensor::full(Shape4::new(1, 1, 1, 1), 2.0);
        let g = layer_backward(Some(&ctx), &[], &dy).unwrap();
        assert_eq!(g.inputs[0].as_slice(), &[0.5; 4]);
    }
}
