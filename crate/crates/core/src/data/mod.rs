//! Dataset ingestion, resampling, fold planning and the synthetic benchmark.

mod kfold;
mod manifest;
mod patch;
mod resample;
mod synth;

pub use kfold::{kfold_split, kfold_split_grouped, FoldPlan};
pub use manifest::{load_manifest, Manifest, ManifestRow};
pub use patch::{
    decode_patch, decode_rawf32, encode_rawf32, load_patch, read_patch, read_rawf32, write_pnm,
    write_rawf32, RAWF32_MAGIC,
};
pub use resample::{resample_patch, ResampleMode};
pub use synth::{
    radial_power_spectrum, spectral_separation, synth_generate, SynthSpec, BLOB_BRIGHTNESS,
    SPECTRAL_SEPARATION_THRESHOLD,
};

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor};

/// Immutable labelled samples stored as one `(N, C, H, W)` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != inputs.shape().n {
            return Err(Error::Data(format!(
                "{} labels for {} samples",
                labels.len(),
                inputs.shape().n
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!("label {bad} outside 0..{num_classes}")));
        }
        Ok(Dataset {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Per-sample shape (`n == 1`).
    pub fn sample_shape(&self) -> Shape4 {
        self.inputs.shape().with_n(1)
    }

    /// Gathers the given rows into a batch tensor and label vector.
    pub fn batch(&self, rows: &[usize]) -> (Tensor, Vec<usize>) {
        let len = self.inputs.shape().sample_len();
        let mut data = Vec::with_capacity(rows.len() * len);
        for &r in rows {
            data.extend_from_slice(self.inputs.sample(r));
        }
        let t = Tensor::new(self.inputs.shape().with_n(rows.len()), data).expect("batch length");
        (t, rows.iter().map(|&r| self.labels[r]).collect())
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let (inputs, labels) = self.batch(rows);
        Dataset {
            inputs,
            labels,
            num_classes: self.num_classes,
        }
    }
}
