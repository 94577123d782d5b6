//! Dataset manifests: a CSV with header `path,label,group`.
//!
//! `path` is relative to the manifest's directory, `label` is a class index
//! and `group` (which may be empty or omitted) names the patient or source
//! the patch came from. Lines starting with `#` are ignored.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor};

use super::kfold::{kfold_split, kfold_split_grouped, FoldPlan};
use super::patch::load_patch;
use super::Dataset;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub path: String,
    pub label: usize,
    pub group: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    rows: Vec<ManifestRow>,
    histogram: Vec<usize>,
    base_dir: PathBuf,
}

impl Manifest {
    /// Validates rows: unique paths and labels forming `0..K`.
    pub fn from_rows(rows: Vec<ManifestRow>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("manifest has no rows".into()));
        }
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert(r.path.as_str()) {
                return Err(Error::Data(format!(
                    "duplicate path '{}' in manifest",
                    r.path
                )));
            }
        }
        let k = rows.iter().map(|r| r.label).max().expect("non-empty") + 1;
        let mut histogram = vec![0; k];
        for r in &rows {
            histogram[r.label] += 1;
        }
        if let Some(missing) = histogram.iter().position(|&c| c == 0) {
            return Err(Error::Data(format!(
                "labels must be contiguous from 0; label {missing} never occurs"
            )));
        }
        Ok(Manifest {
            rows,
            histogram,
            base_dir: base_dir.into(),
        })
    }

    /// Parses manifest text without touching the file system.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(path_col), Some(label_col)) = (col("path"), col("label")) else {
            return Err(Error::Data(format!(
                "manifest header must be 'path,label,group', got '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        };
        let group_col = col("group");
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let path = rec.get(path_col).unwrap_or("");
            if path.is_empty() {
                return Err(Error::Data(format!("manifest line {line}: empty path")));
            }
            let label_text = rec.get(label_col).unwrap_or("");
            let label = label_text.parse().map_err(|_| {
                Error::Data(format!("manifest line {line}: bad label '{label_text}'"))
            })?;
            let group = group_col
                .and_then(|c| rec.get(c))
                .filter(|g| !g.is_empty())
                .map(str::to_string);
            rows.push(ManifestRow {
                path: path.to_string(),
                label,
                group,
            });
        }
        Self::from_rows(rows, base_dir)
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.histogram.len()
    }

    /// Row count per label.
    pub fn histogram(&self) -> &[usize] {
        &self.histogram
    }

    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        self.base_dir.join(&row.path)
    }

    /// Fold plan over the rows; `grouped` keeps each group in one fold.
    pub fn folds(&self, k: usize, seed: u64, grouped: bool) -> Result<FoldPlan> {
        if grouped {
            let groups: Vec<Option<&str>> = self.rows.iter().map(|r| r.group.as_deref()).collect();
            kfold_split_grouped(&groups, k, seed)
        } else {
            kfold_split(self.rows.len(), k, seed)
        }
    }

    /// Loads every patch, each of which must have the per-sample `shape`.
    pub fn load_dataset(&self, shape: Shape4) -> Result<Dataset> {
        let patches = self
            .rows
            .iter()
            .map(|r| load_patch(&self.resolve(r), shape))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor> = patches.iter().collect();
        Dataset::new(
            Tensor::stack(&refs)?,
            self.rows.iter().map(|r| r.label).collect(),
            self.num_classes(),
        )
    }
}

/// Reads and validates a manifest, checking that every patch file exists.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let m = Manifest::parse(&text, base)?;
    for r in &m.rows {
        if !m.resolve(r).is_file() {
            return Err(Error::Data(format!(
                "manifest entry '{}' does not exist at {}",
                r.path,
                m.resolve(r).display()
            )));
        }
    }
    Ok(m)
}
