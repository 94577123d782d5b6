//! Forward and reverse-mode evaluation of a [`NetGraph`].

use crate::error::{Error, Result};
use crate::layers::{
    batchnorm2d_forward, concat_channels, conv2d_forward, dense_forward, dropout_forward, flatten,
    global_avg_pool, layer_backward, lrn_forward, maxpool_forward, relu, softmax_cross_entropy,
    Context, Mode,
};
use crate::tensor::{Rng, Tensor};

use super::net::{LayerKind, NetGraph};
use super::params::ParameterStore;

/// Saved per-node contexts of a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    contexts: Vec<Option<Context>>,
    /// Gradient of the mean loss with respect to the logits.
    logits_grad: Tensor,
}

impl Tape {
    /// Context recorded for node index `i`, if the node has one.
    pub fn context(&self, i: usize) -> Option<&Context> {
        self.contexts.get(i).and_then(Option::as_ref)
    }
}

#[derive(Clone, Debug)]
pub struct ForwardResult {
    /// Mean cross-entropy; `None` when no labels were supplied.
    pub loss: Option<f64>,
    /// `(N, K, 1, 1)` class probabilities.
    pub probs: Tensor,
    /// Present only for training-mode passes with labels.
    pub tape: Option<Tape>,
}

fn param<'a>(store: &'a ParameterStore, node: &str, suffix: &str) -> Result<&'a Tensor> {
    Ok(&store.slot(&format!("{node}.{suffix}"))?.value)
}

/// Evaluates the graph on a batch `x` of shape `(N, C, H, W)`.
///
/// Training mode uses batchnorm batch statistics (updating the running
/// estimates in `store`) and draws dropout masks from `rng`; it requires
/// labels so the tape can seed the backward pass. Inference mode is
/// deterministic and leaves `store` and `rng` untouched.
pub fn forward_pass(
    g: &NetGraph,
    store: &mut ParameterStore,
    x: &Tensor,
    labels: Option<&[usize]>,
    mode: Mode,
    rng: &mut Rng,
) -> Result<ForwardResult> {
    let expected = g.input_shape().with_n(x.shape().n);
    if x.shape() != expected || x.shape().n == 0 {
        return Err(Error::shape(format!(
            "network expects input {expected}, got {}",
            x.shape()
        )));
    }
    if mode == Mode::Training && labels.is_none() {
        return Err(Error::Usage(
            "training-mode forward pass needs labels".into(),
        ));
    }
    let n_nodes = g.nodes().len();
    let mut outputs: Vec<Option<Tensor>> = vec![None; n_nodes];
    let mut contexts: Vec<Option<Context>> = vec![None; n_nodes];
    let mut result = None;

    for &i in g.order() {
        let node = &g.nodes()[i];
        let ins: Vec<&Tensor> = g
            .sources(i)
            .iter()
            .map(|s| match s {
                None => x,
                Some(j) => outputs[*j].as_ref().expect("producer evaluated first"),
            })
            .collect();
        let input = ins[0];
        let id = node.id.as_str();
        let (out, ctx) = match &node.kind {
            LayerKind::Conv(spec) => {
                let w = param(store, id, "weight")?;
                let b = if spec.has_bias {
                    Some(param(store, id, "bias")?)
                } else {
                    None
                };
                let (y, c) = conv2d_forward(input, w, b, spec)?;
                (y, Some(Context::Conv(c)))
            }
            LayerKind::MaxPool(spec) => {
                let (y, c) = maxpool_forward(input, spec)?;
                (y, Some(Context::MaxPool(c)))
            }
            LayerKind::Gap => (
                global_avg_pool(input)?,
                Some(Context::Gap {
                    input: input.shape(),
                }),
            ),
            LayerKind::BatchNorm(spec) => {
                let gamma = param(store, id, "gamma")?.clone();
                let beta = param(store, id, "beta")?.clone();
                let running = store.running_mut(id)?;
                let (y, c) = batchnorm2d_forward(input, &gamma, &beta, running, spec, mode)?;
                (y, c.map(Context::BatchNorm))
            }
            LayerKind::Dropout(spec) => {
                let (y, c) = dropout_forward(input, spec, mode, rng)?;
                (y, c.map(Context::Dropout))
            }
            LayerKind::Lrn(spec) => {
                let (y, c) = lrn_forward(input, spec)?;
                (y, Some(Context::Lrn(c)))
            }
            LayerKind::Dense { .. } => {
                let (y, c) = dense_forward(
                    input,
                    param(store, id, "weight")?,
                    param(store, id, "bias")?,
                )?;
                (y, Some(Context::Dense(c)))
            }
            LayerKind::Relu => (
                relu(input),
                Some(Context::Relu {
                    input: input.clone(),
                }),
            ),
            LayerKind::Concat => (
                concat_channels(&ins)?,
                Some(Context::Concat {
                    channels: ins.iter().map(|t| t.shape().c).collect(),
                }),
            ),
            LayerKind::Flatten => (
                flatten(input),
                Some(Context::Flatten {
                    input: input.shape(),
                }),
            ),
            LayerKind::SoftmaxCe => {
                let logits = input;
                let (loss, probs, grad) = match labels {
                    Some(l) => {
                        let sm = softmax_cross_entropy(logits, l)?;
                        (Some(sm.loss), sm.probs, Some(sm.grad))
                    }
                    None => (None, softmax_only(logits), None),
                };
                if !probs.all_finite() || loss.is_some_and(|l| !l.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "non-finite loss or probabilities at node '{id}'"
                    )));
                }
                result = Some((loss, probs, grad));
                continue;
            }
        };
        if mode == Mode::Training {
            contexts[i] = ctx;
        }
        outputs[i] = Some(out);
        // Free activations nobody reads any more would require consumer
        // counts; batches here are small, so everything is kept.
    }

    let (loss, probs, grad) = result.expect("graph has a softmax-ce node");
    let tape = match (mode, grad) {
        (Mode::Training, Some(logits_grad)) => Some(Tape {
            contexts,
            logits_grad,
        }),
        _ => None,
    };
    Ok(ForwardResult { loss, probs, tape })
}

fn softmax_only(logits: &Tensor) -> Tensor {
    let s = logits.shape();
    let k = s.sample_len();
    let mut out = Vec::with_capacity(s.n * k);
    for i in 0..s.n {
        let row = logits.sample(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / z));
    }
    Tensor::new(crate::tensor::Shape4::new(s.n, k, 1, 1), out).expect("length matches")
}

/// Reverse pass over a training-mode tape. Parameter gradients are added to
/// the `grad` fields of `store` (call [`ParameterStore::zero_grads`] between
/// steps); the gradient with respect to the network input is returned.
pub fn backward_pass(
    g: &NetGraph,
    store: &mut ParameterStore,
    fwd: &ForwardResult,
) -> Result<Tensor> {
    let tape = fwd.tape.as_ref().ok_or_else(|| {
        Error::Usage("backward pass needs a training-mode forward pass with labels".into())
    })?;
    let n_nodes = g.nodes().len();
    let mut grads: Vec<Option<Tensor>> = vec![None; n_nodes];
    let batch = fwd.probs.shape().n;
    let mut input_grad = Tensor::zeros(g.input_shape().with_n(batch));

    let out_idx = g.index_of(g.output()).expect("output exists");
    route(
        g,
        out_idx,
        0,
        tape.logits_grad.clone(),
        &mut grads,
        &mut input_grad,
    )?;

    for &i in g.order().iter().rev() {
        if i == out_idx {
            continue;
        }
        let Some(upstream) = grads[i].take() else {
            // Node does not influence the loss.
            continue;
        };
        let node = &g.nodes()[i];
        let input = g.input_shape_of(&node.id).expect("node exists");
        let suffixes: Vec<&str> = node
            .kind
            .param_shapes(input)
            .into_iter()
            .map(|(s, _)| s)
            .collect();
        let values: Vec<Tensor> = suffixes
            .iter()
            .map(|s| param(store, &node.id, s).cloned())
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor> = values.iter().collect();
        let out = if matches!(node.kind, LayerKind::Dropout(_)) && tape.context(i).is_none() {
            // p = 0 dropout in training records no mask; it is the identity.
            crate::layers::Gradients {
                inputs: vec![upstream],
                params: vec![],
            }
        } else {
            layer_backward(tape.context(i), &refs, &upstream)
                .map_err(|e| Error::graph(&node.id, e.to_string()))?
        };
        for (suffix, pg) in suffixes.iter().zip(&out.params) {
            store
                .slot_mut(&format!("{}.{suffix}", node.id))?
                .grad
                .add_assign(pg)?;
        }
        for (k, dx) in out.inputs.into_iter().enumerate() {
            route(g, i, k, dx, &mut grads, &mut input_grad)?;
        }
    }
    Ok(input_grad)
}

/// Sends the gradient for input `k` of node `i` to its producer.
fn route(
    g: &NetGraph,
    i: usize,
    k: usize,
    dx: Tensor,
    grads: &mut [Option<Tensor>],
    input_grad: &mut Tensor,
) -> Result<()> {
    match g.sources(i)[k] {
        None => input_grad.add_assign(&dx),
        Some(j) => match &mut grads[j] {
            Some(acc) => acc.add_assign(&dx),
            slot @ None => {
                *slot = Some(dx);
                Ok(())
            }
        },
    }
}
