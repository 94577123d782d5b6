//! Nesterov momentum and the epoch/batch training loop.
//!
//! The update for every parameter slot is
//!
//! ```text
//! v <- mu * v - lr * grad f(theta + mu * v)
//! theta <- theta + v
//! ```
//!
//! The loop realizes the lookahead literally: parameters are shifted to
//! `theta + mu * v` before the forward pass, gradients are taken there, the
//! saved `theta` is restored bit for bit, and then [`nesterov_step`] applies
//! the update.

use std::fmt::Write as _;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{backward_pass, forward_pass, NetGraph, ParameterStore};
use crate::layers::Mode;
use crate::metrics::accuracy;
use crate::tensor::{Rng, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            momentum: 0.9,
            batch_size: 10,
            epochs: 100,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    /// A learning rate of exactly 0 is accepted so that the null-update
    /// property can be exercised.
    pub fn validate(&self, g: &NetGraph) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.batch_size < 2 && g.has_batchnorm() {
            return Err(Error::Config(
                "batch size must be >= 2 for networks with batchnorm".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Saved parameter values while the store sits at the lookahead point.
#[derive(Debug)]
pub struct Lookahead {
    saved: Vec<Tensor>,
}

/// Moves every slot to `theta + mu * v` and remembers `theta`.
pub fn begin_lookahead(store: &mut ParameterStore, momentum: f64) -> Lookahead {
    let mut saved = Vec::with_capacity(store.len());
    for (_, slot) in store.slots_mut() {
        saved.push(slot.value.clone());
        for (t, v) in slot
            .value
            .as_mut_slice()
            .iter_mut()
            .zip(slot.velocity.as_slice())
        {
            *t += momentum * v;
        }
    }
    Lookahead { saved }
}

/// Restores the values saved by [`begin_lookahead`] exactly.
pub fn end_lookahead(store: &mut ParameterStore, lookahead: Lookahead) {
    for ((_, slot), saved) in store.slots_mut().zip(lookahead.saved) {
        slot.value = saved;
    }
}

/// `v <- mu v - lr g; theta <- theta + v` for every slot, where `g` is the
/// gradient already stored in the slot (taken at the lookahead point).
pub fn nesterov_step(store: &mut ParameterStore, learning_rate: f64, momentum: f64) {
    for (_, slot) in store.slots_mut() {
        let grad = slot.grad.as_slice();
        let vel = slot.velocity.as_mut_slice();
        let val = slot.value.as_mut_slice();
        for i in 0..val.len() {
            vel[i] = momentum * vel[i] - learning_rate * grad[i];
            val[i] += vel[i];
        }
    }
}

/// Splits `order` into consecutive batches of `batch_size`. A final short
/// batch is kept only when it holds at least two samples.
pub fn partition_batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    assert!(batch_size > 0, "batch size must be positive");
    order
        .chunks(batch_size)
        .filter(|c| c.len() == batch_size || c.len() >= 2)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// Sample-weighted mean training loss (at the lookahead points).
    pub loss: f64,
    pub accuracy: f64,
}

/// One pass over `data`: optional seeded shuffle, then forward, backward and
/// a Nesterov update per batch.
pub fn train_epoch(
    g: &NetGraph,
    store: &mut ParameterStore,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(Error::Usage("cannot train on an empty split".into()));
    }
    cfg.validate(g)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    if cfg.shuffle {
        rng.shuffle(&mut order);
    }
    let batches = partition_batches(&order, cfg.batch_size);
    if batches.is_empty() {
        return Err(Error::Usage(format!(
            "split of {} samples yields no batch of at least two",
            data.len()
        )));
    }
    let (mut loss_sum, mut hits, mut seen) = (0.0, 0.0, 0usize);
    for rows in batches {
        let (x, labels) = data.batch(rows);
        store.zero_grads();
        let lookahead = begin_lookahead(store, cfg.momentum);
        let step = forward_pass(g, store, &x, Some(&labels), Mode::Training, rng)
            .and_then(|fwd| backward_pass(g, store, &fwd).map(|_| fwd));
        end_lookahead(store, lookahead);
        let fwd = step?;
        let loss = fwd.loss.expect("labels supplied");
        nesterov_step(store, cfg.learning_rate, cfg.momentum);
        loss_sum += loss * rows.len() as f64;
        hits += accuracy(&fwd.probs, &labels)? * rows.len() as f64;
        seen += rows.len();
    }
    Ok(EpochStats {
        loss: loss_sum / seen as f64,
        accuracy: hits / seen as f64,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    /// `(N, K, 1, 1)` class probabilities in dataset order.
    pub probs: Tensor,
}

/// Inference-mode evaluation in batches of `batch_size`.
pub fn evaluate(
    g: &NetGraph,
    store: &mut ParameterStore,
    data: &Dataset,
    batch_size: usize,
) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Usage("cannot evaluate an empty split".into()));
    }
    let order: Vec<usize> = (0..data.len()).collect();
    let mut probs = Vec::with_capacity(data.len() * data.num_classes());
    let mut loss_sum = 0.0;
    // Inference draws nothing; the generator only satisfies the signature.
    let mut rng = Rng::new(0);
    for rows in order.chunks(batch_size.max(1)) {
        let (x, labels) = data.batch(rows);
        let fwd = forward_pass(g, store, &x, Some(&labels), Mode::Inference, &mut rng)?;
        loss_sum += fwd.loss.expect("labels supplied") * rows.len() as f64;
        probs.extend_from_slice(fwd.probs.as_slice());
    }
    let k = probs.len() / data.len();
    let probs = Tensor::new(crate::tensor::Shape4::new(data.len(), k, 1, 1), probs)?;
    Ok(Evaluation {
        loss: loss_sum / data.len() as f64,
        accuracy: accuracy(&probs, data.labels())?,
        probs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub rows: Vec<EpochRecord>,
}

impl History {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.rows.last()
    }

    /// CSV with header `epoch,train_loss,train_acc,val_loss,val_acc`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
            );
        }
        out
    }
}

/// Trains for `cfg.epochs` epochs, evaluating `val` in inference mode after
/// each one. `observe` sees every record as it is produced.
pub fn fit_with(
    g: &NetGraph,
    store: &mut ParameterStore,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochRecord),
) -> Result<History> {
    cfg.validate(g)?;
    let mut rng = Rng::new(cfg.seed);
    let mut history = History::default();
    for epoch in 1..=cfg.epochs {
        let stats = train_epoch(g, store, train, cfg, &mut rng)?;
        let eval = evaluate(g, store, val, cfg.batch_size)?;
        let record = EpochRecord {
            epoch,
            train_loss: stats.loss,
            train_acc: stats.accuracy,
            val_loss: eval.loss,
            val_acc: eval.accuracy,
        };
        observe(&record);
        history.rows.push(record);
    }
    Ok(history)
}

pub fn fit(
    g: &NetGraph,
    store: &mut ParameterStore,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<History> {
    fit_with(g, store, train, val, cfg, |_| {})
}
