//! Parameter checkpoints: a directory holding `manifest.json` and one LFT1
//! tensor file per parameter.

use std::fs;
use std::path::{Path, PathBuf};

use lfcs_core::io::RawTensor;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layer::Param;
use crate::scalar::Scalar;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FORMAT: &str = "lfcs-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub step: u64,
    pub epoch: usize,
    /// Human-readable layer list, e.g. `conv3x3(d=2) 32->32`.
    pub layers: Vec<String>,
    pub hyperparameters: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub info: CheckpointInfo,
    pub tensors: Vec<TensorEntry>,
}

fn file_name(index: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{index:03}_{clean}.lft")
}

/// Writes `params` (values only) and the manifest. The directory is built
/// next to `dir` and renamed into place, so a crash never leaves a partial
/// checkpoint under the final name.
pub fn save_checkpoint<T: Scalar>(
    dir: impl AsRef<Path>,
    params: &[&Param<T>],
    info: &CheckpointInfo,
) -> Result<()> {
    let dir = dir.as_ref();
    let staging = staging_path(dir);
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    let mut tensors = Vec::with_capacity(params.len());
    for (i, p) in params.iter().enumerate() {
        let file = file_name(i, &p.name);
        let data = p.value.iter().map(|v| v.f64() as f32).collect();
        RawTensor::new(p.shape.clone(), data)?.save(staging.join(&file))?;
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            file,
            trainable: p.trainable,
        });
    }
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        info: info.clone(),
        tensors,
    };
    let json =
        serde_json::to_string_pretty(&manifest).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    fs::write(staging.join(MANIFEST_FILE), json)?;
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&staging, dir)?;
    Ok(())
}

fn staging_path(dir: &Path) -> PathBuf {
    let mut name = dir
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".partial");
    dir.with_file_name(name)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let text = fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    if manifest.format != CHECKPOINT_FORMAT || manifest.version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported format {} v{}",
            manifest.format, manifest.version
        )));
    }
    Ok(manifest)
}

/// Loads values into `params`, which must match the manifest by name and
/// shape, in order.
pub fn load_checkpoint<T: Scalar>(
    dir: impl AsRef<Path>,
    params: &mut [&mut Param<T>],
) -> Result<Manifest> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    if manifest.tensors.len() != params.len() {
        return Err(NnError::Checkpoint(format!(
            "checkpoint has {} tensors, model has {}",
            manifest.tensors.len(),
            params.len()
        )));
    }
    let mut loaded = Vec::with_capacity(params.len());
    for (entry, p) in manifest.tensors.iter().zip(params.iter()) {
        if entry.name != p.name || entry.shape != p.shape {
            return Err(NnError::Checkpoint(format!(
                "tensor {} {:?} does not match model parameter {} {:?}",
                entry.name, entry.shape, p.name, p.shape
            )));
        }
        let raw = RawTensor::load(dir.join(&entry.file))?;
        if raw.dims != entry.shape {
            return Err(NnError::Checkpoint(format!(
                "{} holds dims {:?}, manifest says {:?}",
                entry.file, raw.dims, entry.shape
            )));
        }
        if raw.data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite(entry.name.clone()));
        }
        loaded.push(raw.data);
    }
    for (p, data) in params.iter_mut().zip(loaded) {
        p.value = data.into_iter().map(|v| T::of(v as f64)).collect();
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_restores_values_and_info() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("ckpt");
        let a = Param::new(
            "conv1.kernel",
            vec![1, 1, 2, 3],
            vec![0.5f32, -1.0, 2.0, 0.25, 3.0, -0.125],
        );
        let b = Param::buffer("bn1.running_var", vec![3], vec![1.0f32, 2.0, 0.5]);
        let info = CheckpointInfo {
            step: 42,
            epoch: 3,
            layers: vec!["conv".into(), "bn".into()],
            hyperparameters: serde_json::json!({"lr": 5e-4}),
        };
        save_checkpoint(&dir, &[&a, &b], &info).unwrap();
        // Saving again overwrites in place.
        save_checkpoint(&dir, &[&a, &b], &info).unwrap();

        let mut a2 = Param::new("conv1.kernel", vec![1, 1, 2, 3], vec![0.0f32; 6]);
        let mut b2 = Param::buffer("bn1.running_var", vec![3], vec![0.0f32; 3]);
        let manifest = load_checkpoint(&dir, &mut [&mut a2, &mut b2]).unwrap();
        assert_eq!(manifest.info, info);
        assert_eq!(a2.value, a.value);
        assert_eq!(b2.value, b.value);
        assert!(!manifest.tensors[1].trainable);
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let a = Param::new("w", vec![2], vec![1.0f64, 2.0]);
        save_checkpoint(tmp.path().join("c"), &[&a], &CheckpointInfo::default()).unwrap();
        let mut wrong_shape = Param::new("w", vec![3], vec![0.0f64; 3]);
        assert!(load_checkpoint(tmp.path().join("c"), &mut [&mut wrong_shape]).is_err());
        let mut wrong_name = Param::new("v", vec![2], vec![0.0f64; 2]);
        assert!(load_checkpoint(tmp.path().join("c"), &mut [&mut wrong_name]).is_err());
    }
}
