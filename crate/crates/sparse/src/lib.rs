//! Sparse-coding baselines for coded light field recovery.
//!
//! Each light field patch is modelled as `l = D α` with an overcomplete
//! dictionary `D` and a sparse code `α`. Dictionaries are trained with K-SVD
//! and online dictionary learning; codes are recovered from the coded image by
//! OMP or by ADMM on the basis pursuit denoising problem.

pub mod admm;
pub mod dictionary;
pub mod error;
pub mod ksvd;
pub mod omp;
pub mod online;
pub mod recon;

pub use admm::{admm_bpdn, bpdn_objective, soft_threshold, AdmmOutcome, AdmmParams};
pub use dictionary::{mutual_coherence, Dictionary, DictionaryMeta, SparseCode, UNIT_NORM_TOL};
pub use error::{Result, SparseError};
pub use ksvd::{ksvd, KsvdConfig, KsvdOutcome};
pub use omp::{omp, omp_gram, omp_trace};
pub use online::{online_dict_learn, OnlineDictLearner};
pub use recon::{patch_system, recon_sparse, PatchLayout, SparseRecon, SparseSolver};
