//! Experiment stages and the end-to-end orchestrator.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lfcs_core::io::{write_gray_png, RawTensor};
use lfcs_core::metrics::{CrossMaskReport, EvalReport, ImageEval};
use lfcs_core::{
    add_noise, backproject_mean, forward, gen_scene, gen_sensing_tensor, CodedImage, DisparityMap,
    LightField, MaskDistribution, MaskKind, NoiseModel, PatchSpec, SceneSpec, SensingTensor,
    Spatial,
};
use lfcs_nets::{
    derive_seed, disp_forward, extract_patches, random_phi_patches, recon_forward,
    recon_forward_tiled, train_disp, train_recon, DispNet, ReconNet, TrainLog,
};
use lfcs_sparse::{ksvd, recon_sparse, Dictionary, SparseSolver};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{DispSource, ExperimentConfig, Method};
use crate::dataset::{ingest_dataset, Dataset, NamedField};
use crate::error::{CliError, Result};
use crate::render::{write_heat_map, write_mosaic};

/// Stream tags for seeds derived from the experiment seed.
pub mod streams {
    pub const TRAIN_SCENES: u64 = 10;
    pub const TEST_SCENES: u64 = 11;
    pub const NOISE: u64 = 12;
    pub const PHI_PATCHES: u64 = 13;
    pub const NET_INIT: u64 = 14;
    pub const NET_TRAIN: u64 = 15;
    pub const DICTIONARY: u64 = 16;
    pub const DISP_INIT: u64 = 17;
    pub const DISP_TRAIN: u64 = 18;
    pub const CROSS_TRAIN_MASK: u64 = 19;
    pub const CROSS_TEST_MASK: u64 = 20;
}

pub fn seed_for(cfg: &ExperimentConfig, tag: u64, index: u64) -> u64 {
    derive_seed(cfg.seed, tag, index)
}

/// Runs `f` and tags any failure with the stage name and config fingerprint.
pub fn stage<T>(name: &'static str, fingerprint: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| match e {
        e @ CliError::Stage { .. } => e,
        other => CliError::Stage {
            stage: name,
            fingerprint: fingerprint.to_string(),
            message: other.to_string(),
        },
    })
}

fn synthetic(
    cfg: &ExperimentConfig,
    tag: u64,
    count: usize,
    prefix: &str,
) -> Result<Vec<NamedField>> {
    let shape = cfg.shape();
    (0..count)
        .map(|i| {
            let seed = seed_for(cfg, tag, i as u64);
            let spec = SceneSpec::random(
                shape,
                cfg.data.foreground,
                cfg.data.max_disparity,
                cfg.disp.dmax,
                seed,
            );
            Ok(NamedField {
                name: format!("{prefix}_{i:03}"),
                field: gen_scene(&spec, seed)?.light_field,
            })
        })
        .collect()
}

/// The configured dataset, or synthetic scenes drawn from the experiment seed.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    let data = match &cfg.data.dataset {
        Some(dir) => ingest_dataset(dir)?,
        None => Dataset {
            train: synthetic(cfg, streams::TRAIN_SCENES, cfg.data.train_scenes, "train")?,
            test: synthetic(cfg, streams::TEST_SCENES, cfg.data.test_scenes, "test")?,
        },
    };
    if data.train.is_empty() || data.test.is_empty() {
        return Err(CliError::Config(
            "both train and test splits must be non-empty".into(),
        ));
    }
    let shape = cfg.shape();
    if let Some(nf) = data
        .train
        .iter()
        .chain(&data.test)
        .find(|nf| nf.field.shape() != shape)
    {
        return Err(CliError::Config(format!(
            "'{}' has shape {:?}, geometry says {:?}",
            nf.name,
            nf.field.shape().dims(),
            shape.dims()
        )));
    }
    Ok(data)
}

pub fn sensing_tensor(cfg: &ExperimentConfig, kind: MaskKind, seed: u64) -> SensingTensor {
    gen_sensing_tensor(cfg.shape(), MaskDistribution::new(kind, seed))
}

/// `forward(Φ, l)` plus the configured noise, seeded per image.
pub fn simulate(
    cfg: &ExperimentConfig,
    phi: &SensingTensor,
    lf: &LightField,
    index: u64,
) -> Result<CodedImage> {
    let clean = forward(phi, lf)?;
    if cfg.noise_sigma > 0.0 {
        let noise = NoiseModel::new(cfg.noise_sigma)?;
        Ok(add_noise(
            &clean,
            noise,
            seed_for(cfg, streams::NOISE, index),
        ))
    } else {
        Ok(clean)
    }
}

pub enum Model {
    Backprojection,
    Sparse(Dictionary),
    Net(Box<ReconNet<f32>>, TrainLog),
}

impl Model {
    pub fn method(&self) -> Method {
        match self {
            Model::Backprojection => Method::Backprojection,
            Model::Sparse(_) => Method::Sparse,
            Model::Net(..) => Method::Net,
        }
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Backprojection => "backprojection",
        Method::Sparse => "sparse",
        Method::Net => "net",
    }
}

/// `patch × patch` light field crops at seeded random positions, one per column.
pub fn patch_matrix(
    fields: &[LightField],
    patch: usize,
    count: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let first = fields
        .first()
        .ok_or_else(|| CliError::Config("no training light fields".into()))?;
    let (h, w) = first.spatial_dims();
    let k = first.shape().with_spatial(patch, patch).len();
    let mut m = DMatrix::zeros(k, count);
    for c in 0..count {
        let s = derive_seed(seed, 0, c as u64);
        let lf = &fields[(s % fields.len() as u64) as usize];
        let origin = (
            ((s >> 16) % (h - patch + 1) as u64) as usize,
            ((s >> 40) % (w - patch + 1) as u64) as usize,
        );
        let p = lf.extract_patch(&PatchSpec::new(origin, (patch, patch), 1)?)?;
        for (r, v) in p.as_slice().iter().enumerate() {
            m[(r, c)] = *v as f64;
        }
    }
    Ok(m)
}

pub fn train_dictionary(cfg: &ExperimentConfig, fields: &[LightField]) -> Result<Dictionary> {
    let seed = seed_for(cfg, streams::DICTIONARY, 0);
    let patches = patch_matrix(fields, cfg.sparse.patch, cfg.sparse.training_patches, seed)?;
    Ok(ksvd(&patches, &cfg.sparse.ksvd(seed))?.dictionary)
}

/// Trains the reconstruction network on patches of `fields` paired with
/// random crops of `phi`.
pub fn train_network(
    cfg: &ExperimentConfig,
    fields: &[LightField],
    phi: &SensingTensor,
    checkpoint: Option<&Path>,
) -> Result<(ReconNet<f32>, TrainLog)> {
    let g = &cfg.geometry;
    let patches = extract_patches(fields, g.patch, g.stride)?;
    let phis = random_phi_patches(
        phi,
        g.patch,
        cfg.recon.phi_patches,
        seed_for(cfg, streams::PHI_PATCHES, 0),
    )?;
    let mut net = ReconNet::new(cfg.recon_net(), seed_for(cfg, streams::NET_INIT, 0))?;
    let log = train_recon(
        &mut net,
        &patches,
        &phis,
        &cfg.recon_train(seed_for(cfg, streams::NET_TRAIN, 0)),
        checkpoint,
    )?;
    Ok((net, log))
}

pub fn train_model(
    cfg: &ExperimentConfig,
    fields: &[LightField],
    phi: &SensingTensor,
) -> Result<Model> {
    Ok(match cfg.method {
        Method::Backprojection => Model::Backprojection,
        Method::Sparse => Model::Sparse(train_dictionary(cfg, fields)?),
        Method::Net => {
            let (net, log) = train_network(cfg, fields, phi, None)?;
            Model::Net(Box::new(net), log)
        }
    })
}

pub fn reconstruct(
    cfg: &ExperimentConfig,
    model: &mut Model,
    image: &CodedImage,
    phi: &SensingTensor,
) -> Result<LightField> {
    Ok(match model {
        Model::Backprojection => backproject_mean(image, phi)?,
        Model::Sparse(dict) => {
            let solver = SparseSolver::Admm(cfg.sparse.admm());
            recon_sparse(image, phi, dict, &solver, cfg.sparse.layout())?.field
        }
        Model::Net(net, _) if cfg.recon.tiled_inference => {
            let tile = cfg.geometry.patch;
            recon_forward_tiled(net, image, phi, tile, (tile / 2).max(1))?
        }
        Model::Net(net, _) => recon_forward(net, image, phi)?,
    })
}

/// Simulates, reconstructs and scores every test field. Only the
/// reconstruction call is timed.
pub fn evaluate(
    cfg: &ExperimentConfig,
    model: &mut Model,
    test: &[NamedField],
    phi: &SensingTensor,
) -> Result<(EvalReport, Vec<LightField>)> {
    let mut images = Vec::with_capacity(test.len());
    let mut seconds = Vec::with_capacity(test.len());
    let mut recons = Vec::with_capacity(test.len());
    for (i, nf) in test.iter().enumerate() {
        let coded = simulate(cfg, phi, &nf.field, i as u64)?;
        let t = Instant::now();
        let recon = reconstruct(cfg, model, &coded, phi)?;
        seconds.push(t.elapsed().as_secs_f64());
        images.push(ImageEval::compute(&nf.name, &recon, &nf.field)?);
        recons.push(recon);
    }
    let report = EvalReport::new(
        &cfg.experiment,
        method_name(model.method()),
        cfg.fingerprint(),
        cfg.seed,
        images,
        seconds,
    );
    Ok((report, recons))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub mask_seed: u64,
    pub config_fingerprint: String,
    pub derived: Vec<(String, u64)>,
}

impl SeedRecord {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        let named = [
            ("net_init", streams::NET_INIT),
            ("net_train", streams::NET_TRAIN),
            ("phi_patches", streams::PHI_PATCHES),
            ("dictionary", streams::DICTIONARY),
            ("disp_init", streams::DISP_INIT),
            ("disp_train", streams::DISP_TRAIN),
        ];
        Self {
            seed: cfg.seed,
            mask_seed: cfg.mask.seed,
            config_fingerprint: cfg.fingerprint(),
            derived: named
                .iter()
                .map(|&(n, tag)| (n.to_string(), seed_for(cfg, tag, 0)))
                .collect(),
        }
    }
}

/// Writes the resolved config and every seed into `dir`.
pub fn write_provenance(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let config = dir.join("config.toml");
    let seeds = dir.join("seeds.json");
    fs::write(&config, cfg.to_toml())?;
    fs::write(
        &seeds,
        serde_json::to_string_pretty(&SeedRecord::new(cfg)).expect("seed record is serializable"),
    )?;
    Ok(vec![config, seeds])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisparitySummary {
    pub source: DispSource,
    pub image: String,
    pub final_loss: f64,
    pub median: Option<f32>,
    pub min: f32,
    pub max: f32,
}

pub fn train_disparity(
    cfg: &ExperimentConfig,
    fields: &[LightField],
) -> Result<(DispNet<f32>, TrainLog)> {
    let mut net = DispNet::new(cfg.disp_net(), seed_for(cfg, streams::DISP_INIT, 0))?;
    let log = train_disp(
        &mut net,
        fields,
        &cfg.disp_train(seed_for(cfg, streams::DISP_TRAIN, 0)),
        None,
    )?;
    Ok((net, log))
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub report: EvalReport,
    pub disparity: Option<(DisparityMap, DisparitySummary)>,
    pub files: Vec<PathBuf>,
}

/// simulate → train → reconstruct → evaluate → (disparity) → emit.
pub fn run_pipeline(cfg: &ExperimentConfig, out: &Path) -> Result<PipelineOutput> {
    let fp = cfg.fingerprint();
    stage("config", &fp, || cfg.validate())?;
    let data = stage("data", &fp, || load_data(cfg))?;
    let phi = sensing_tensor(cfg, cfg.mask.kind, cfg.mask.seed);
    let train_fields = data.train_fields();
    let mut model = stage("train", &fp, || train_model(cfg, &train_fields, &phi))?;
    let (report, recons) = stage("evaluate", &fp, || {
        evaluate(cfg, &mut model, &data.test, &phi)
    })?;

    let disparity = if cfg.disp.enabled {
        Some(stage("disparity", &fp, || {
            let (sources, probe) = match cfg.disp.source {
                DispSource::Gt => (train_fields.clone(), data.test[0].field.clone()),
                DispSource::Recon => {
                    let mut fields = Vec::with_capacity(train_fields.len());
                    for (i, lf) in train_fields.iter().enumerate() {
                        let coded = simulate(cfg, &phi, lf, 1_000_000 + i as u64)?;
                        fields.push(reconstruct(cfg, &mut model, &coded, &phi)?);
                    }
                    (fields, recons[0].clone())
                }
            };
            let (mut net, log) = train_disparity(cfg, &sources)?;
            let d = disp_forward(&mut net, &probe)?;
            let summary = DisparitySummary {
                source: cfg.disp.source,
                image: data.test[0].name.clone(),
                final_loss: log.losses.last().copied().unwrap_or(f64::NAN),
                median: d.interior_median(4),
                min: d.as_slice().iter().copied().fold(f32::INFINITY, f32::min),
                max: d
                    .as_slice()
                    .iter()
                    .copied()
                    .fold(f32::NEG_INFINITY, f32::max),
            };
            Ok((d, summary))
        })?)
    } else {
        None
    };

    let files = stage("emit", &fp, || {
        let mut files = write_provenance(cfg, out)?;
        files.extend(report.write(out)?);
        let first = &data.test[0];
        let coded = simulate(cfg, &phi, &first.field, 0)?;
        let paths = [
            out.join(format!("{}_coded.png", first.name)),
            out.join(format!("{}_truth.png", first.name)),
            out.join(format!("{}_recon.png", first.name)),
            out.join(format!("{}_recon.lft", first.name)),
        ];
        write_gray_png(coded.as_slice(), coded.height(), coded.width(), &paths[0])?;
        write_mosaic(&first.field, &paths[1])?;
        write_mosaic(&recons[0], &paths[2])?;
        RawTensor::from(&recons[0]).save(&paths[3])?;
        files.extend(paths);
        if let Some((d, summary)) = &disparity {
            let heat = out.join(format!("{}_disparity.png", first.name));
            let raw = out.join(format!("{}_disparity.lft", first.name));
            let json = out.join(format!("{}_disparity.json", first.name));
            write_heat_map(d, &heat)?;
            d.to_raw().save(&raw)?;
            fs::write(
                &json,
                serde_json::to_string_pretty(summary).expect("summary is serializable"),
            )?;
            files.extend([heat, raw, json]);
        }
        Ok(files)
    })?;
    Ok(PipelineOutput {
        report,
        disparity,
        files,
    })
}

/// Trains one model per mask distribution and scores it on test data coded
/// with a fresh mask of every distribution.
pub fn run_cross_mask(cfg: &ExperimentConfig) -> Result<CrossMaskReport> {
    let fp = cfg.fingerprint();
    let data = stage("data", &fp, || load_data(cfg))?;
    let train_fields = data.train_fields();
    let kinds = MaskKind::ALL;
    let index = |k: MaskKind| kinds.iter().position(|&x| x == k).unwrap_or(0) as u64;
    let cells = lfcs_core::metrics::cross_mask_matrix(
        &kinds,
        |kind| {
            let phi = sensing_tensor(
                cfg,
                kind,
                seed_for(cfg, streams::CROSS_TRAIN_MASK, index(kind)),
            );
            train_model(cfg, &train_fields, &phi).map_err(|e| e.to_string())
        },
        |model, kind| {
            let phi = sensing_tensor(
                cfg,
                kind,
                seed_for(cfg, streams::CROSS_TEST_MASK, index(kind)),
            );
            // Models are reused across columns; evaluation only reads them.
            let mut model = match model {
                Model::Net(net, log) => {
                    let mut copy =
                        ReconNet::new(net.config.clone(), 0).map_err(|e| e.to_string())?;
                    copy.load_values_from(net.as_ref())
                        .map_err(|e| e.to_string())?;
                    Model::Net(Box::new(copy), log.clone())
                }
                Model::Sparse(d) => Model::Sparse(d.clone()),
                Model::Backprojection => Model::Backprojection,
            };
            let (report, _) =
                evaluate(cfg, &mut model, &data.test, &phi).map_err(|e| e.to_string())?;
            Ok(lfcs_core::metrics::CellScore {
                psnr_db: report.mean_psnr_db,
                ssim: report.mean_ssim,
            })
        },
    );
    Ok(CrossMaskReport {
        experiment: cfg.experiment.clone(),
        seed: cfg.seed,
        config_fingerprint: fp,
        distributions: kinds.to_vec(),
        cells,
    })
}
