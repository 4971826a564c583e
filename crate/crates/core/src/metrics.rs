//! PSNR / SSIM and the report types built on them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LfError, Result};
use crate::field::LightField;
use crate::optics::MaskKind;
use crate::shape::COLORS;

pub fn mse(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(LfError::Shape(format!(
            "mse over {} vs {} values",
            a.len(),
            b.len()
        )));
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// `10 · log10(peak² / MSE)` in dB, `+∞` for identical inputs.
pub fn psnr(a: &[f32], b: &[f32], peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// PSNR over every entry of the 5-D tensor jointly (peak 1).
pub fn psnr_lf(a: &LightField, b: &LightField) -> Result<f64> {
    same_shape(a, b)?;
    psnr(a.as_slice(), b.as_slice(), 1.0)
}

/// PSNR of each sub-aperture view, row-major over `(u, v)`.
pub fn psnr_per_view(a: &LightField, b: &LightField) -> Result<Vec<f64>> {
    same_shape(a, b)?;
    let nv = a.views();
    let mut out = Vec::with_capacity(nv * nv);
    for u in 0..nv {
        for v in 0..nv {
            out.push(psnr(&a.view(u, v), &b.view(u, v), 1.0)?);
        }
    }
    Ok(out)
}

fn same_shape(a: &LightField, b: &LightField) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(LfError::Shape(format!(
            "{:?} vs {:?}",
            a.shape().dims(),
            b.shape().dims()
        )));
    }
    Ok(())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    for (i, x) in w.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *x = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// Separable "valid" Gaussian filtering of an `h × w` plane.
fn filter_valid(src: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            tmp[r * ow + c] = (0..SSIM_WINDOW).map(|k| g[k] * src[r * w + c + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..SSIM_WINDOW).map(|k| g[k] * tmp[(r + k) * ow + c]).sum();
        }
    }
    out
}

/// Mean SSIM and its contrast-structure factor for one plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParts {
    pub ssim: f64,
    pub contrast_structure: f64,
}

/// Single-scale SSIM (11×11 Gaussian, σ = 1.5, K₁ = 0.01, K₂ = 0.03, dynamic range 1)
/// over the valid window positions of an `h × w` plane.
pub fn ssim_plane(a: &[f32], b: &[f32], h: usize, w: usize) -> Result<SsimParts> {
    if a.len() != h * w || b.len() != h * w {
        return Err(LfError::Shape(format!(
            "planes of {} / {} values for {h}x{w}",
            a.len(),
            b.len()
        )));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(LfError::Invalid(format!(
            "image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let g = gaussian_window();
    let x: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let mx = filter_valid(&x, h, w, &g);
    let my = filter_valid(&y, h, w, &g);
    let sxx = filter_valid(&xx, h, w, &g);
    let syy = filter_valid(&yy, h, w, &g);
    let sxy = filter_valid(&xy, h, w, &g);
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let n = mx.len() as f64;
    let (mut total, mut cs_total) = (0.0, 0.0);
    for k in 0..mx.len() {
        let vx = sxx[k] - mx[k] * mx[k];
        let vy = syy[k] - my[k] * my[k];
        let cov = sxy[k] - mx[k] * my[k];
        let lum = (2.0 * mx[k] * my[k] + c1) / (mx[k] * mx[k] + my[k] * my[k] + c1);
        let cs = (2.0 * cov + c2) / (vx + vy + c2);
        total += lum * cs;
        cs_total += cs;
    }
    Ok(SsimParts {
        ssim: total / n,
        contrast_structure: cs_total / n,
    })
}

fn channel_plane(view: &[f32], c: usize) -> Vec<f32> {
    view.iter().skip(c).step_by(COLORS).copied().collect()
}

/// Mean SSIM over every view and color channel.
pub fn ssim_lf(a: &LightField, b: &LightField) -> Result<f64> {
    same_shape(a, b)?;
    let s = a.shape();
    let mut total = 0.0;
    for u in 0..s.views {
        for v in 0..s.views {
            let (va, vb) = (a.view(u, v), b.view(u, v));
            for c in 0..COLORS {
                total += ssim_plane(
                    &channel_plane(&va, c),
                    &channel_plane(&vb, c),
                    s.height,
                    s.width,
                )?
                .ssim;
            }
        }
    }
    Ok(total / (s.views * s.views * COLORS) as f64)
}

/// Mean SSIM over the color channels of the center view only.
pub fn ssim_center_view(a: &LightField, b: &LightField) -> Result<f64> {
    same_shape(a, b)?;
    let s = a.shape();
    let (va, vb) = (a.center_view(), b.center_view());
    let mut total = 0.0;
    for c in 0..COLORS {
        total += ssim_plane(
            &channel_plane(&va, c),
            &channel_plane(&vb, c),
            s.height,
            s.width,
        )?
        .ssim;
    }
    Ok(total / COLORS as f64)
}

/// Serde for dB values where `+∞` means a perfect reconstruction.
mod db {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(serde::Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad dB value '{t}'"))),
        }
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

/// Quality of one reconstructed light field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEval {
    pub name: String,
    #[serde(with = "db")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub ssim_center: f64,
    pub per_view_psnr_db: Vec<f64>,
}

impl ImageEval {
    pub fn compute(
        name: impl Into<String>,
        recon: &LightField,
        truth: &LightField,
    ) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            psnr_db: psnr_lf(recon, truth)?,
            ssim: ssim_lf(recon, truth)?,
            ssim_center: ssim_center_view(recon, truth)?,
            per_view_psnr_db: psnr_per_view(recon, truth)?
                .into_iter()
                .map(|v| if v.is_finite() { v } else { f64::MAX })
                .collect(),
        })
    }
}

/// Per-image and mean quality for one method on one image set.
///
/// Wall-clock reconstruction times are kept in `recon_seconds` but written to
/// a separate file, so the quality report itself is a pure function of the
/// configuration and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub experiment: String,
    pub method: String,
    pub config_fingerprint: String,
    pub seed: u64,
    pub images: Vec<ImageEval>,
    #[serde(with = "db")]
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    #[serde(skip)]
    pub recon_seconds: Vec<f64>,
}

impl EvalReport {
    pub fn new(
        experiment: impl Into<String>,
        method: impl Into<String>,
        config_fingerprint: impl Into<String>,
        seed: u64,
        images: Vec<ImageEval>,
        recon_seconds: Vec<f64>,
    ) -> Self {
        let n = images.len().max(1) as f64;
        let mean_psnr_db = images.iter().map(|i| i.psnr_db).sum::<f64>() / n;
        let mean_ssim = images.iter().map(|i| i.ssim).sum::<f64>() / n;
        Self {
            experiment: experiment.into(),
            method: method.into(),
            config_fingerprint: config_fingerprint.into(),
            seed,
            images,
            mean_psnr_db,
            mean_ssim,
            recon_seconds,
        }
    }

    pub fn mean_recon_seconds(&self) -> f64 {
        if self.recon_seconds.is_empty() {
            0.0
        } else {
            self.recon_seconds.iter().sum::<f64>() / self.recon_seconds.len() as f64
        }
    }

    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.experiment, self.seed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,method,psnr_db,ssim,ssim_center\n");
        for i in &self.images {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6}",
                i.name,
                self.method,
                fmt_db(i.psnr_db),
                i.ssim,
                i.ssim_center
            );
        }
        let _ = writeln!(
            out,
            "mean,{},{},{:.6},",
            self.method,
            fmt_db(self.mean_psnr_db),
            self.mean_ssim
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    /// Writes `{experiment}_{seed}.csv`, `.json` and `_timing.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let stem = self.file_stem();
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        let timing = dir.join(format!("{stem}_timing.csv"));
        fs::write(&csv, self.to_csv())?;
        fs::write(&json, self.to_json())?;
        let mut t = String::from("image,recon_seconds\n");
        for (i, s) in self.images.iter().zip(&self.recon_seconds) {
            let _ = writeln!(t, "{},{s:.6}", i.name);
        }
        let _ = writeln!(t, "mean,{:.6}", self.mean_recon_seconds());
        fs::write(&timing, t)?;
        Ok(vec![csv, json, timing])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    #[serde(with = "db")]
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossMaskCell {
    pub train: MaskKind,
    pub test: MaskKind,
    pub score: Option<CellScore>,
    pub error: Option<String>,
}

/// Train-distribution × test-distribution quality grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossMaskReport {
    pub experiment: String,
    pub seed: u64,
    pub config_fingerprint: String,
    pub distributions: Vec<MaskKind>,
    /// `cells[row][col]`: row = training distribution, col = test distribution.
    pub cells: Vec<Vec<CrossMaskCell>>,
}

/// Trains one model per distribution and scores it against test data from
/// every distribution. Failures are recorded per cell rather than aborting.
pub fn cross_mask_matrix<M>(
    distributions: &[MaskKind],
    mut train: impl FnMut(MaskKind) -> std::result::Result<M, String>,
    mut evaluate: impl FnMut(&M, MaskKind) -> std::result::Result<CellScore, String>,
) -> Vec<Vec<CrossMaskCell>> {
    distributions
        .iter()
        .map(|&row| {
            let model = train(row);
            distributions
                .iter()
                .map(|&col| {
                    let outcome = match &model {
                        Ok(m) => evaluate(m, col),
                        Err(e) => Err(format!("training on {row} failed: {e}")),
                    };
                    let (score, error) = match outcome {
                        Ok(s) => (Some(s), None),
                        Err(e) => (None, Some(e)),
                    };
                    CrossMaskCell {
                        train: row,
                        test: col,
                        score,
                        error,
                    }
                })
                .collect()
        })
        .collect()
}

impl CrossMaskReport {
    pub fn is_complete(&self) -> bool {
        let n = self.distributions.len();
        self.cells.len() == n
            && self
                .cells
                .iter()
                .all(|r| r.len() == n && r.iter().all(|c| c.score.is_some()))
    }

    /// Highest-PSNR cell as `(train, test)`.
    pub fn best_cell(&self) -> Option<(MaskKind, MaskKind, CellScore)> {
        self.cells
            .iter()
            .flatten()
            .filter_map(|c| c.score.map(|s| (c.train, c.test, s)))
            .max_by(|a, b| a.2.psnr_db.total_cmp(&b.2.psnr_db))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("train,test,psnr_db,ssim,error\n");
        for c in self.cells.iter().flatten() {
            match (&c.score, &c.error) {
                (Some(s), _) => {
                    let _ = writeln!(
                        out,
                        "{},{},{},{:.6},",
                        c.train,
                        c.test,
                        fmt_db(s.psnr_db),
                        s.ssim
                    );
                }
                (None, e) => {
                    let msg = e.as_deref().unwrap_or("").replace([',', '\n'], ";");
                    let _ = writeln!(out, "{},{},,,{msg}", c.train, c.test);
                }
            }
        }
        out
    }

    /// Markdown table, rows = train distribution, columns = test distribution, `PSNR/SSIM`.
    pub fn render_table(&self) -> String {
        let mut out = String::from("| train \\ test |");
        for d in &self.distributions {
            let _ = write!(out, " {d} |");
        }
        out.push_str("\n|---|");
        for _ in &self.distributions {
            out.push_str("---|");
        }
        out.push('\n');
        for row in &self.cells {
            let _ = write!(
                out,
                "| {} |",
                row.first().map(|c| c.train.name()).unwrap_or("")
            );
            for c in row {
                match c.score {
                    Some(s) => {
                        let _ = write!(out, " {:.2}/{:.2} |", s.psnr_db, s.ssim);
                    }
                    None => out.push_str(" failed |"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let stem = format!("{}_{}", self.experiment, self.seed);
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        let md = dir.join(format!("{stem}.md"));
        fs::write(&csv, self.to_csv())?;
        fs::write(
            &json,
            serde_json::to_string_pretty(self).expect("serializable"),
        )?;
        fs::write(&md, self.render_table())?;
        Ok(vec![csv, json, md])
    }
}
