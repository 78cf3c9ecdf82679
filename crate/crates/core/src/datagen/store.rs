//! Dataset directories: `manifest.json` plus one motion file per sample
//! under `motions/`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatagenError, DatasetSpec, Split};
use crate::motion::{load_motion, save_motion, standard_skeleton};
use crate::Scalar;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub skeleton: String,
    pub spec: DatasetSpec,
    pub class_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub label: usize,
    pub split: Split,
    /// Relative to the dataset directory.
    pub file: String,
}

fn store_err(path: &Path, message: impl ToString) -> DatagenError {
    DatagenError::Store {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

pub fn write_dataset<T: Scalar>(dataset: &Dataset<T>, dir: impl AsRef<Path>) -> Result<(), DatagenError> {
    let dir = dir.as_ref();
    let motions_dir = dir.join("motions");
    fs::create_dir_all(&motions_dir).map_err(|e| store_err(&motions_dir, e))?;
    let mut entries = Vec::with_capacity(dataset.motions.len());
    for (m, split) in dataset.motions.iter().zip(&dataset.split) {
        let label = m
            .label()
            .ok_or_else(|| store_err(dir, format!("motion {} has no label", m.id())))?;
        let file = format!("motions/{}.json", m.id());
        save_motion(m, dir.join(&file))?;
        entries.push(ManifestEntry {
            id: m.id().to_string(),
            label,
            split: *split,
            file,
        });
    }
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        skeleton: standard_skeleton().id().to_string(),
        spec: dataset.spec.clone(),
        class_names: dataset.class_names.clone(),
        entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| store_err(&path, e))?;
    fs::write(&path, text).map_err(|e| store_err(&path, e))
}

pub fn read_dataset<T: Scalar>(dir: impl AsRef<Path>) -> Result<Dataset<T>, DatagenError> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| store_err(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| store_err(&path, e))?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(store_err(&path, format!("unsupported format_version {}", manifest.format_version)));
    }
    if manifest.skeleton != standard_skeleton().id() {
        return Err(store_err(&path, format!("unknown skeleton {}", manifest.skeleton)));
    }
    let mut motions = Vec::with_capacity(manifest.entries.len());
    let mut split = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        if e.label >= manifest.class_names.len() {
            return Err(store_err(&path, format!("{}: label {} out of range", e.id, e.label)));
        }
        let mut m: crate::motion::Motion<T> = load_motion(dir.join(&e.file))?;
        if m.label() != Some(e.label) {
            return Err(store_err(&path, format!("{}: label disagrees with motion file", e.id)));
        }
        m.set_id(e.id.clone());
        motions.push(m);
        split.push(e.split);
    }
    Ok(Dataset {
        spec: manifest.spec,
        class_names: manifest.class_names,
        motions,
        split,
    })
}
