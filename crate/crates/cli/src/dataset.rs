//! Light field datasets on disk.
//!
//! ```text
//! dataset/
//!   manifest.json        {"train": ["a", ...], "test": ["b", ...]}
//!   a/meta.json          {"Nv": 2, "H": 48, "W": 48, "color_space": "srgb"}
//!   a/view_0_0.png ...   one 8-bit RGB image per viewpoint
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use lfcs_core::io::{read_view_dir, write_view_dir, RawTensor};
use lfcs_core::{LfError, LightField};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct NamedField {
    pub name: String,
    pub field: LightField,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<NamedField>,
    pub test: Vec<NamedField>,
}

impl Dataset {
    pub fn train_fields(&self) -> Vec<LightField> {
        self.train.iter().map(|n| n.field.clone()).collect()
    }

    pub fn test_fields(&self) -> Vec<LightField> {
        self.test.iter().map(|n| n.field.clone()).collect()
    }
}

fn dataset_error(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Dataset {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Loads and validates every light field listed in the manifest. All fields
/// must share the same number of views.
pub fn ingest_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| dataset_error(&manifest_path, e.to_string()))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| dataset_error(&manifest_path, e.to_string()))?;
    if manifest.train.is_empty() && manifest.test.is_empty() {
        return Err(dataset_error(
            &manifest_path,
            "manifest lists no light fields",
        ));
    }
    let mut views = None;
    let mut load = |names: &[String]| -> Result<Vec<NamedField>> {
        names
            .iter()
            .map(|name| {
                let path = dir.join(name);
                let field = read_view_dir(&path).map_err(|e| match e {
                    LfError::MissingView { u, v, .. } => {
                        dataset_error(&path, format!("missing view ({u}, {v}) of '{name}'"))
                    }
                    other => dataset_error(&path, other.to_string()),
                })?;
                let n = field.views();
                if *views.get_or_insert(n) != n {
                    return Err(dataset_error(
                        &path,
                        format!(
                            "'{name}' has {n}x{n} views, earlier fields have {}",
                            views.unwrap_or(n)
                        ),
                    ));
                }
                Ok(NamedField {
                    name: name.clone(),
                    field,
                })
            })
            .collect()
    };
    let train = load(&manifest.train)?;
    let test = load(&manifest.test)?;
    Ok(Dataset { train, test })
}

/// Writes `dataset` in the layout read by [`ingest_dataset`]. Values are
/// quantized to 8 bits.
pub fn export_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for nf in dataset.train.iter().chain(&dataset.test) {
        write_view_dir(&nf.field, dir.join(&nf.name))?;
    }
    let manifest = DatasetManifest {
        train: dataset.train.iter().map(|n| n.name.clone()).collect(),
        test: dataset.test.iter().map(|n| n.name.clone()).collect(),
    };
    fs::write(
        dir.join(MANIFEST),
        serde_json::to_string_pretty(&manifest).expect("manifest is serializable"),
    )?;
    Ok(())
}

/// A light field from either a view directory or an LFT1 file.
pub fn load_lightfield(path: impl AsRef<Path>) -> Result<LightField> {
    let path = path.as_ref();
    if path.is_dir() {
        Ok(read_view_dir(path)?)
    } else {
        Ok(LightField::try_from(RawTensor::load(path)?)?)
    }
}

pub fn lft_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.lft"))
}
