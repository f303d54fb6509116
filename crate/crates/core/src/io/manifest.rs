use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_file, write_file};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub tensor_path: PathBuf,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_top1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_logits_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub records: Vec<Record>,
}

impl Manifest {
    pub fn check_labels(&self, num_classes: usize) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            if r.label >= num_classes {
                return Err(Error::input(format!(
                    "record {i}: label {} outside [0, {num_classes})",
                    r.label
                )));
            }
            if let Some(t) = r.reference_top1.filter(|&t| t >= num_classes) {
                return Err(Error::input(format!(
                    "record {i}: reference_top1 {t} outside [0, {num_classes})"
                )));
            }
        }
        Ok(())
    }

    /// Rewrites relative paths so they are relative to `base` instead.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for r in &mut self.records {
            fix(&mut r.tensor_path);
            if let Some(p) = r.reference_logits_path.as_mut() {
                fix(p);
            }
        }
    }
}

/// Parses a JSON manifest, validates labels against `num_classes` and
/// resolves relative paths against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>, num_classes: usize) -> Result<Manifest> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let mut m: Manifest = serde_json::from_slice(&bytes).map_err(|source| Error::Manifest {
        path: path.to_path_buf(),
        source,
    })?;
    m.check_labels(num_classes)?;
    if let Some(dir) = path.parent() {
        m.resolve_paths(dir);
    }
    Ok(m)
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let json = serde_json::to_vec_pretty(manifest).map_err(|source| Error::Manifest {
        path: path.as_ref().to_path_buf(),
        source,
    })?;
    write_file(path.as_ref(), &json)
}
