//! Versioned experiment configuration.
//!
//! A config file plus its seeds fully determines a run. Every section has
//! defaults, so a file only needs the fields it changes.

use std::fs;
use std::path::{Path, PathBuf};

use lfcs_core::{MaskKind, RayShape};
use lfcs_nets::{
    DispNetConfig, DispTrainConfig, FineTuneRule, ReconNetConfig, ReconTrainConfig, RECON_DILATIONS,
};
use lfcs_sparse::{AdmmParams, KsvdConfig, PatchLayout};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Backprojection,
    Sparse,
    Net,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispSource {
    /// Ground-truth light fields.
    Gt,
    /// Light fields reconstructed by the configured method.
    Recon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSection {
    pub kind: MaskKind,
    pub seed: u64,
}

impl Default for MaskSection {
    fn default() -> Self {
        Self {
            kind: MaskKind::Rgbw,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub height: usize,
    pub width: usize,
    pub views: usize,
    /// Training patch side.
    pub patch: usize,
    /// Step between training patches.
    pub stride: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            height: 48,
            width: 48,
            views: 2,
            patch: 20,
            stride: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory in the dataset layout; synthetic scenes when absent.
    pub dataset: Option<PathBuf>,
    pub train_scenes: usize,
    pub test_scenes: usize,
    /// Foreground shapes per synthetic scene.
    pub foreground: usize,
    pub max_disparity: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            dataset: None,
            train_scenes: 12,
            test_scenes: 4,
            foreground: 3,
            max_disparity: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparseSection {
    pub patch: usize,
    pub overlap: usize,
    pub atoms: usize,
    pub sparsity: usize,
    pub iterations: usize,
    pub training_patches: usize,
    pub lambda: f64,
    pub rho: f64,
    pub adaptive_rho: bool,
    pub max_iter: usize,
}

impl Default for SparseSection {
    fn default() -> Self {
        Self {
            patch: 8,
            overlap: 2,
            atoms: 128,
            sparsity: 6,
            iterations: 5,
            training_patches: 1500,
            lambda: 1e-5,
            rho: 1.0,
            adaptive_rho: true,
            max_iter: 500,
        }
    }
}

impl SparseSection {
    pub fn layout(&self) -> PatchLayout {
        PatchLayout {
            patch: self.patch,
            overlap: self.overlap,
        }
    }

    pub fn admm(&self) -> AdmmParams {
        AdmmParams {
            lambda: self.lambda,
            rho: self.rho,
            max_iter: self.max_iter,
            adaptive_rho: self.adaptive_rho,
            ..AdmmParams::default()
        }
    }

    pub fn ksvd(&self, seed: u64) -> KsvdConfig {
        KsvdConfig {
            atoms: self.atoms,
            iterations: self.iterations,
            sparsity: self.sparsity,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSection {
    pub channels: usize,
    pub steps: usize,
    pub steps_per_epoch: usize,
    pub batch: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub beta: f64,
    /// Random crops of the sensing tensor used as the Φ training source.
    pub phi_patches: usize,
    pub fine_tune: bool,
    pub fine_tune_window: usize,
    pub fine_tune_min_improvement: f64,
    /// Reconstruct in overlapping windows of the training patch size instead
    /// of the whole image at once.
    pub tiled_inference: bool,
}

impl Default for ReconSection {
    fn default() -> Self {
        let rule = FineTuneRule::default();
        Self {
            channels: 32,
            steps: 1000,
            steps_per_epoch: 50,
            batch: 8,
            lr: 2e-3,
            lr_decay: 0.98,
            beta: lfcs_nets::RECON_BETA,
            phi_patches: 64,
            fine_tune: true,
            fine_tune_window: rule.window_epochs,
            fine_tune_min_improvement: rule.min_improvement,
            tiled_inference: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispSection {
    pub enabled: bool,
    pub widths: [usize; 3],
    pub steps: usize,
    pub steps_per_epoch: usize,
    pub batch: usize,
    pub lr: f64,
    pub gamma: f64,
    pub dmax: f64,
    pub patch: Option<usize>,
    pub source: DispSource,
}

impl Default for DispSection {
    fn default() -> Self {
        Self {
            enabled: false,
            widths: DispNetConfig::toy().widths,
            steps: 300,
            steps_per_epoch: 50,
            batch: 2,
            lr: lfcs_nets::DISP_LR,
            gamma: lfcs_nets::DISP_GAMMA,
            dmax: lfcs_nets::DEFAULT_DMAX,
            patch: None,
            source: DispSource::Gt,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub experiment: String,
    pub seed: u64,
    pub method: Method,
    pub noise_sigma: f64,
    pub output: PathBuf,
    pub mask: MaskSection,
    pub geometry: GeometrySection,
    pub data: DataSection,
    pub sparse: SparseSection,
    pub recon: ReconSection,
    pub disp: DispSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            experiment: "toy".into(),
            seed: 0,
            method: Method::Net,
            noise_sigma: 0.0,
            output: PathBuf::from("runs"),
            mask: MaskSection::default(),
            geometry: GeometrySection::default(),
            data: DataSection::default(),
            sparse: SparseSection::default(),
            recon: ReconSection::default(),
            disp: DispSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        if self.experiment.is_empty() || self.experiment.contains(['/', '\\']) {
            return bad(format!(
                "experiment name '{}' must be a plain file stem",
                self.experiment
            ));
        }
        let g = &self.geometry;
        RayShape::new(g.height, g.width, g.views)?;
        if g.patch == 0 || g.stride == 0 || g.patch > g.height || g.patch > g.width {
            return bad(format!(
                "patch {} / stride {} do not fit {}x{}",
                g.patch, g.stride, g.height, g.width
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        if self.data.dataset.is_none()
            && (self.data.train_scenes == 0 || self.data.test_scenes == 0)
        {
            return bad("synthetic data needs at least one train and one test scene".into());
        }
        let r = &self.recon;
        if r.channels == 0 || r.batch == 0 || r.steps_per_epoch == 0 || r.phi_patches == 0 {
            return bad(
                "recon channels, batch, steps_per_epoch and phi_patches must be >= 1".into(),
            );
        }
        if !(r.lr >= 0.0 && r.beta >= 0.0 && r.lr_decay > 0.0) {
            return bad("recon lr and beta must be >= 0 and lr_decay > 0".into());
        }
        let d = &self.disp;
        if d.batch == 0
            || d.steps_per_epoch == 0
            || d.widths.contains(&0)
            || d.dmax.is_nan()
            || d.dmax <= 0.0
            || d.gamma < 0.0
        {
            return bad(
                "disp batch, steps_per_epoch, widths and dmax must be positive, gamma >= 0".into(),
            );
        }
        if self.data.max_disparity > d.dmax {
            return bad(format!(
                "max_disparity {} exceeds dmax {}",
                self.data.max_disparity, d.dmax
            ));
        }
        self.sparse.layout().stride()?;
        Ok(())
    }

    pub fn shape(&self) -> RayShape {
        RayShape {
            height: self.geometry.height,
            width: self.geometry.width,
            views: self.geometry.views,
        }
    }

    /// SHA-256 of everything that affects results (the output directory
    /// excluded), as 16 hex digits.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config is always serializable");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn recon_net(&self) -> ReconNetConfig {
        ReconNetConfig {
            views: self.geometry.views,
            channels: self.recon.channels,
            dilations: RECON_DILATIONS.to_vec(),
        }
    }

    pub fn recon_train(&self, seed: u64) -> ReconTrainConfig {
        let r = &self.recon;
        ReconTrainConfig {
            steps: r.steps,
            steps_per_epoch: r.steps_per_epoch,
            batch: r.batch,
            lr: r.lr,
            lr_decay: r.lr_decay,
            beta: r.beta,
            noise_sigma: self.noise_sigma,
            seed,
            fine_tune: r.fine_tune.then_some(FineTuneRule {
                window_epochs: r.fine_tune_window,
                min_improvement: r.fine_tune_min_improvement,
            }),
            monitor_batches: 2,
        }
    }

    pub fn disp_net(&self) -> DispNetConfig {
        DispNetConfig {
            views: self.geometry.views,
            dmax: self.disp.dmax,
            rates: lfcs_nets::DISP_RATES.to_vec(),
            widths: self.disp.widths,
        }
    }

    pub fn disp_train(&self, seed: u64) -> DispTrainConfig {
        let d = &self.disp;
        DispTrainConfig {
            steps: d.steps,
            steps_per_epoch: d.steps_per_epoch,
            batch: d.batch,
            lr: d.lr,
            lr_decay: self.recon.lr_decay,
            gamma: d.gamma,
            seed,
            patch: d.patch,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn round_trip_through_toml() {
        let mut cfg = ExperimentConfig {
            method: Method::Sparse,
            ..ExperimentConfig::default()
        };
        cfg.mask.kind = MaskKind::Uniform;
        cfg.disp.patch = Some(16);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.fingerprint(), cfg.fingerprint());
    }

    #[test]
    fn fingerprint_ignores_output_but_not_settings() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output = PathBuf::from("elsewhere");
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.recon.beta = 0.01;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }

    #[test]
    fn rejects_bad_versions_fields_and_values() {
        assert!(ExperimentConfig::from_toml("version = 2").is_err());
        assert!(ExperimentConfig::from_toml("colour = 1").is_err());
        assert!(ExperimentConfig::from_toml("[geometry]\npatch = 100").is_err());
        assert!(ExperimentConfig::from_toml("noise_sigma = -0.1").is_err());
        assert!(ExperimentConfig::from_toml("[sparse]\noverlap = 8").is_err());
    }

    #[test]
    fn parses_a_partial_file() {
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"noisy\"\nnoise_sigma = 0.02\nmethod = \"sparse\"\n[mask]\nkind = \"rgb\"\n[disp]\nsource = \"recon\"\n",
        )
        .unwrap();
        assert_eq!(cfg.noise_sigma, 0.02);
        assert_eq!(cfg.method, Method::Sparse);
        assert_eq!(cfg.mask.kind, MaskKind::Rgb);
        assert_eq!(cfg.disp.source, DispSource::Recon);
        assert_eq!(cfg.geometry, GeometrySection::default());
    }
}
