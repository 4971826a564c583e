use std::fs;
use std::path::{Path, PathBuf};

use lfcs_core::io::RawTensor;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SparseError};

/// Tolerance on the unit-norm column invariant.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Overcomplete atom matrix `[k, s]` with unit-norm columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
}

impl Dictionary {
    /// Normalizes every column of `atoms`. Zero columns are rejected.
    pub fn normalized(mut atoms: DMatrix<f64>) -> Result<Self> {
        for (j, mut col) in atoms.column_iter_mut().enumerate() {
            let n = col.norm();
            if n == 0.0 || !n.is_finite() {
                return Err(SparseError::ZeroColumn(j));
            }
            col /= n;
        }
        Ok(Self { atoms })
    }

    /// Wraps `atoms` after checking the unit-norm invariant.
    pub fn from_unit_columns(atoms: DMatrix<f64>) -> Result<Self> {
        for (j, col) in atoms.column_iter().enumerate() {
            if (col.norm() - 1.0).abs() > UNIT_NORM_TOL {
                return Err(SparseError::Invalid(format!(
                    "column {j} has norm {}, expected 1",
                    col.norm()
                )));
            }
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    /// Patch dimension `k`.
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Atom count `s`.
    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    pub fn max_norm_error(&self) -> f64 {
        self.atoms
            .column_iter()
            .map(|c| (c.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `D · α`.
    pub fn synthesize(&self, code: &SparseCode) -> DVector<f64> {
        &self.atoms * &code.coeffs
    }

    /// Largest absolute inner product between distinct atoms.
    pub fn mutual_coherence(&self) -> f64 {
        mutual_coherence(&self.atoms)
    }

    pub(crate) fn atoms_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.atoms
    }

    /// Writes `<stem>.lft` (`[k, s]`, row-major) and `<stem>.json`.
    pub fn save(
        &self,
        stem: impl AsRef<Path>,
        meta: &DictionaryMeta,
    ) -> Result<(PathBuf, PathBuf)> {
        let stem = stem.as_ref();
        let tensor_path = stem.with_extension("lft");
        let meta_path = stem.with_extension("json");
        let (k, s) = self.atoms.shape();
        let mut data = Vec::with_capacity(k * s);
        for r in 0..k {
            for c in 0..s {
                data.push(self.atoms[(r, c)] as f32);
            }
        }
        RawTensor::new(vec![k, s], data)?.save(&tensor_path)?;
        let json =
            serde_json::to_string_pretty(meta).map_err(|e| SparseError::Sidecar(e.to_string()))?;
        fs::write(&meta_path, json)?;
        Ok((tensor_path, meta_path))
    }

    /// Loads a dictionary saved by [`Dictionary::save`]; columns are renormalized
    /// to absorb the `f32` storage rounding.
    pub fn load(stem: impl AsRef<Path>) -> Result<(Self, DictionaryMeta)> {
        let stem = stem.as_ref();
        let raw = RawTensor::load(stem.with_extension("lft"))?;
        let meta: DictionaryMeta =
            serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)
                .map_err(|e| SparseError::Sidecar(e.to_string()))?;
        let (k, s) = match raw.dims.as_slice() {
            &[k, s] => (k, s),
            other => {
                return Err(SparseError::Dimension(format!(
                    "dictionary tensor dims {other:?}"
                )))
            }
        };
        if meta.atoms != s || meta.patch * meta.patch * meta.views * meta.views * 3 != k {
            return Err(SparseError::Sidecar(format!(
                "sidecar (patch {}, Nv {}, s {}) does not match tensor [{k}, {s}]",
                meta.patch, meta.views, meta.atoms
            )));
        }
        let atoms = DMatrix::from_row_iterator(k, s, raw.data.iter().map(|&v| v as f64));
        Ok((Self::normalized(atoms)?, meta))
    }
}

pub fn mutual_coherence(m: &DMatrix<f64>) -> f64 {
    let norms: Vec<f64> = m.column_iter().map(|c| c.norm()).collect();
    let gram = m.transpose() * m;
    let mut best = 0.0f64;
    for i in 0..m.ncols() {
        for j in 0..i {
            if norms[i] > 0.0 && norms[j] > 0.0 {
                best = best.max(gram[(i, j)].abs() / (norms[i] * norms[j]));
            }
        }
    }
    best
}

/// JSON sidecar stored next to a dictionary tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryMeta {
    pub patch: usize,
    #[serde(rename = "Nv")]
    pub views: usize,
    #[serde(rename = "s")]
    pub atoms: usize,
    pub lambda: f64,
}

/// Sparse coefficient vector `α` with its support.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCode {
    pub coeffs: DVector<f64>,
    /// Atom indices allowed to be nonzero (selection order for OMP).
    pub support: Vec<usize>,
}

impl SparseCode {
    pub fn zeros(len: usize) -> Self {
        Self {
            coeffs: DVector::zeros(len),
            support: Vec::new(),
        }
    }

    /// Builds a code whose support is exactly the nonzero entries.
    pub fn from_dense(coeffs: DVector<f64>) -> Self {
        let support = coeffs
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        Self { coeffs, support }
    }

    pub fn nnz(&self) -> usize {
        self.coeffs.iter().filter(|v| **v != 0.0).count()
    }

    /// Checks `nonzeros(coeffs) ⊆ support`.
    pub fn is_consistent(&self) -> bool {
        self.coeffs
            .iter()
            .enumerate()
            .all(|(i, v)| *v == 0.0 || self.support.contains(&i))
    }
}
