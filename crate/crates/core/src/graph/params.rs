use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::data::{read_rawf32, write_rawf32};
use crate::error::{Error, Result};
use crate::layers::RunningStats;
use crate::tensor::{sample_normal, Rng, Shape4, Tensor};

use super::net::{LayerKind, NetGraph};

/// A learnable tensor with its gradient and momentum velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSlot {
    pub value: Tensor,
    pub grad: Tensor,
    pub velocity: Tensor,
}

impl ParamSlot {
    fn new(value: Tensor) -> Self {
        let zeros = Tensor::zeros(value.shape());
        ParamSlot {
            value,
            grad: zeros.clone(),
            velocity: zeros,
        }
    }
}

/// Named parameter slots (`<node id>.<weight|bias|gamma|beta>`) plus the
/// batchnorm running statistics keyed by node id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    slots: BTreeMap<String, ParamSlot>,
    running: BTreeMap<String, RunningStats>,
}

impl ParameterStore {
    /// Adds (or replaces) a slot holding `value` with zero gradient and
    /// velocity.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.slots.insert(name.into(), ParamSlot::new(value));
    }

    pub fn get(&self, name: &str) -> Option<&ParamSlot> {
        self.slots.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamSlot> {
        self.slots.get_mut(name)
    }

    pub(crate) fn slot(&self, name: &str) -> Result<&ParamSlot> {
        self.slots
            .get(name)
            .ok_or_else(|| Error::Usage(format!("parameter store has no slot '{name}'")))
    }

    pub(crate) fn slot_mut(&mut self, name: &str) -> Result<&mut ParamSlot> {
        self.slots
            .get_mut(name)
            .ok_or_else(|| Error::Usage(format!("parameter store has no slot '{name}'")))
    }

    pub fn running(&self, node: &str) -> Option<&RunningStats> {
        self.running.get(node)
    }

    pub(crate) fn running_mut(&mut self, node: &str) -> Result<&mut RunningStats> {
        self.running
            .get_mut(node)
            .ok_or_else(|| Error::Usage(format!("no running statistics for '{node}'")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn slots(&self) -> impl Iterator<Item = (&str, &ParamSlot)> {
        self.slots.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn slots_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamSlot)> {
        self.slots.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total learnable scalars.
    pub fn param_count(&self) -> usize {
        self.slots.values().map(|s| s.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for slot in self.slots.values_mut() {
            slot.grad.as_mut_slice().fill(0.0);
        }
    }

    /// Writes every slot value and running statistic as a RAWF32 file under
    /// `dir`, plus `index.txt` mapping names to files.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = String::new();
        for (name, slot) in &self.slots {
            let file = format!("{name}.rawf32");
            write_rawf32(&dir.join(&file), &as_single_sample(&slot.value))?;
            index.push_str(&format!("{name} {file}\n"));
        }
        for (node, stats) in &self.running {
            for (what, vals) in [("running_mean", &stats.mean), ("running_var", &stats.var)] {
                let name = format!("{node}.{what}");
                let file = format!("{name}.rawf32");
                let t = Tensor::new(Shape4::new(1, vals.len(), 1, 1), vals.clone())?;
                write_rawf32(&dir.join(&file), &t)?;
                index.push_str(&format!("{name} {file}\n"));
            }
        }
        let path = dir.join("index.txt");
        fs::write(&path, index).map_err(|e| Error::io(path, e))
    }

    /// Loads values written by [`ParameterStore::save_checkpoint`] into an
    /// already-initialized store with the same slots.
    pub fn load_checkpoint(&mut self, dir: &Path) -> Result<()> {
        let path = dir.join("index.txt");
        let index = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        for line in index.lines().filter(|l| !l.trim().is_empty()) {
            let (name, file) = line
                .split_once(' ')
                .ok_or_else(|| Error::Data(format!("malformed checkpoint index line '{line}'")))?;
            let t = read_rawf32(&dir.join(file))?;
            if let Some(slot) = self.slots.get_mut(name) {
                let want = slot.value.shape();
                if as_single_sample(&slot.value).shape() != t.shape() {
                    return Err(Error::Data(format!(
                        "checkpoint slot {name} has shape {}, expected {want}",
                        t.shape()
                    )));
                }
                slot.value = t.reshape(want)?;
                continue;
            }
            let (node, what) = name
                .rsplit_once('.')
                .ok_or_else(|| Error::Data(format!("unknown checkpoint entry '{name}'")))?;
            let stats = self
                .running
                .get_mut(node)
                .ok_or_else(|| Error::Data(format!("unknown checkpoint entry '{name}'")))?;
            let target = match what {
                "running_mean" => &mut stats.mean,
                "running_var" => &mut stats.var,
                _ => return Err(Error::Data(format!("unknown checkpoint entry '{name}'"))),
            };
            if target.len() != t.len() {
                return Err(Error::Data(format!(
                    "checkpoint entry {name} has wrong length"
                )));
            }
            *target = t.into_vec();
        }
        Ok(())
    }
}

/// RAWF32 holds one `(C, H, W)` sample; conv weights fold their output
/// channels into `C`.
fn as_single_sample(t: &Tensor) -> Tensor {
    let s = t.shape();
    t.clone()
        .reshape(Shape4::new(1, s.n * s.c, s.h, s.w))
        .expect("same length")
}

/// He-normal weights (`N(0, sqrt(2 / fan_in))`), zero biases, unit gamma,
/// zero beta, zero velocities. Slots are drawn in graph evaluation order.
pub fn init_parameters(g: &NetGraph, rng: &mut Rng) -> Result<ParameterStore> {
    let mut store = ParameterStore::default();
    for (name, shape, fan_in) in g.param_slots() {
        let value = if name.ends_with(".weight") {
            sample_normal(rng, shape, 0.0, (2.0 / fan_in as f64).sqrt())?
        } else if name.ends_with(".gamma") {
            Tensor::full(shape, 1.0)
        } else {
            Tensor::zeros(shape)
        };
        store.insert(name, value);
    }
    for node in g.nodes() {
        if let LayerKind::BatchNorm(spec) = &node.kind {
            store
                .running
                .insert(node.id.clone(), RunningStats::new(spec.channels));
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_preset, GraphBuilder, INPUT};
    use crate::layers::Conv2dSpec;

    #[test]
    fn biases_zero_and_deterministic() {
        let g = build_preset("alexnet_mini+transition", 2, Shape4::new(1, 1, 32, 32)).unwrap();
        let a = init_parameters(&g, &mut Rng::new(5)).unwrap();
        let b = init_parameters(&g, &mut Rng::new(5)).unwrap();
        assert_eq!(a, b);
        for (name, slot) in a.slots() {
            assert_eq!(slot.value.shape(), slot.grad.shape());
            assert_eq!(slot.value.shape(), slot.velocity.shape());
            if name.ends_with(".bias") || name.ends_with(".beta") {
                assert!(slot.value.as_slice().iter().all(|&v| v == 0.0), "{name}");
            }
            if name.ends_with(".gamma") {
                assert!(slot.value.as_slice().iter().all(|&v| v == 1.0));
            }
        }
        assert_eq!(a.param_count(), g.param_count());
        assert_eq!(a.len(), g.param_slots().len());
    }

    #[test]
    fn he_init_moments() {
        let mut b = GraphBuilder::new(Shape4::new(1, 64, 4, 4));
        b.add(
            "conv",
            crate::graph::LayerKind::Conv(Conv2dSpec::same(64, 32, 3, 1)),
            &[INPUT],
        );
        b.add("flat", crate::graph::LayerKind::Flatten, &["conv"]);
        b.add("loss", crate::graph::LayerKind::SoftmaxCe, &["flat"]);
        let g = b.build("loss").unwrap();
        let store = init_parameters(&g, &mut Rng::new(17)).unwrap();
        let w = &store.get("conv.weight").unwrap().value;
        assert_eq!(w.len(), 36 * 64 * 32 / 4);
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let sd = (w.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let want = (2.0f64 / 576.0).sqrt();
        assert!((sd - want).abs() < 0.1 * want, "{sd} vs {want}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let g = build_preset("alexnet_mini+transition", 2, Shape4::new(1, 1, 16, 16)).unwrap();
        let store = init_parameters(&g, &mut Rng::new(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        store.save_checkpoint(dir.path()).unwrap();
        let mut other = init_parameters(&g, &mut Rng::new(2)).unwrap();
        other.load_checkpoint(dir.path()).unwrap();
        for (name, slot) in store.slots() {
            let loaded = &other.get(name).unwrap().value;
            for (a, b) in slot.value.as_slice().iter().zip(loaded.as_slice()) {
                assert_eq!(*a as f32, *b as f32);
            }
        }
    }
}
