//! Command-line surface. Every stochastic command requires `--seed`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use lfcs_core::io::{read_gray_png, write_gray_png, write_view_dir, RawTensor};
use lfcs_core::metrics::{EvalReport, ImageEval};
use lfcs_core::{
    gen_scene, CodedImage, LightField, MaskKind, NoiseModel, RayShape, SceneSpec, SensingTensor,
};
use lfcs_nets::{disp_forward, recon_forward, recon_forward_tiled, train_disp, DispNet, ReconNet};
use lfcs_sparse::{recon_sparse, Dictionary, DictionaryMeta, SparseSolver};

use crate::config::{DispSource, ExperimentConfig};
use crate::dataset::load_lightfield;
use crate::pipeline::{
    load_data, run_cross_mask, run_pipeline, seed_for, sensing_tensor, simulate, streams,
    train_dictionary, train_network,
};
use crate::render::{write_heat_map, write_mosaic};

#[derive(Debug, Parser)]
#[command(
    name = "lfcs",
    version,
    about = "Coded color-mask light field capture, reconstruction and evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random sensing tensor.
    GenMask(GenMaskArgs),
    /// Render a synthetic layered scene with its ground-truth disparity.
    GenScene(GenSceneArgs),
    /// Code a light field through a sensing tensor.
    Simulate(SimulateArgs),
    /// Learn a K-SVD dictionary from training light fields.
    TrainDict(TrainArgs),
    /// Dictionary-based reconstruction of a coded image.
    ReconSparse(ReconSparseArgs),
    /// Train the reconstruction network.
    TrainRecon(TrainArgs),
    /// Reconstruct a coded image with a trained network.
    Infer(InferArgs),
    /// Train the disparity network without ground-truth disparity.
    TrainDisp(TrainDispArgs),
    /// Estimate disparity from a light field or a coded image.
    Disp(DispArgs),
    /// Score a reconstruction against ground truth.
    Eval(EvalArgs),
    /// Train on each mask distribution and test on every distribution.
    CrossMask(RunArgs),
    /// Run the whole experiment described by a config file.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct GenMaskArgs {
    #[arg(long, default_value = "rgbw")]
    pub kind: MaskKind,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 48)]
    pub height: usize,
    #[arg(long, default_value_t = 48)]
    pub width: usize,
    #[arg(long, default_value_t = 2)]
    pub views: usize,
    /// Output LFT1 file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the weights as a view-grid PNG.
    #[arg(long)]
    pub preview: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSceneArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 48)]
    pub height: usize,
    #[arg(long, default_value_t = 48)]
    pub width: usize,
    #[arg(long, default_value_t = 2)]
    pub views: usize,
    #[arg(long, default_value_t = 3)]
    pub foreground: usize,
    #[arg(long, default_value_t = 1.5)]
    pub max_disparity: f64,
    #[arg(long, default_value_t = lfcs_nets::DEFAULT_DMAX)]
    pub dmax: f64,
    /// Output directory (view PNGs, meta.json, LFT1 tensors, figures).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Light field view directory or LFT1 file.
    #[arg(long)]
    pub lf: PathBuf,
    #[arg(long)]
    pub phi: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset directory; overrides the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconSparseArgs {
    /// Dictionary path stem (`.lft` and `.json`).
    #[arg(long)]
    pub dict: PathBuf,
    /// Coded image as LFT1 or grayscale PNG.
    #[arg(long)]
    pub coded: PathBuf,
    #[arg(long)]
    pub phi: PathBuf,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 2)]
    pub overlap: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Reconstruct in overlapping windows of this size (half-window step).
    #[arg(long)]
    pub tile: Option<usize>,
    #[arg(long)]
    pub coded: PathBuf,
    #[arg(long)]
    pub phi: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainDispArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Overrides the config's disparity source.
    #[arg(long)]
    pub source: Option<String>,
    /// Reconstruction checkpoint, required for `--source recon`.
    #[arg(long)]
    pub recon_ckpt: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DispArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Light field view directory or LFT1 file.
    #[arg(long, conflicts_with_all = ["coded", "phi"])]
    pub lf: Option<PathBuf>,
    #[arg(long, requires_all = ["phi", "recon_ckpt"])]
    pub coded: Option<PathBuf>,
    #[arg(long)]
    pub phi: Option<PathBuf>,
    #[arg(long)]
    pub recon_ckpt: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub recon: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value = "eval")]
    pub experiment: String,
    #[arg(long, default_value = "unknown")]
    pub method: String,
    /// Recorded in the report and its file name.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Output directory; defaults to the config's.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load_config(path: &Path, seed: u64, data: Option<&PathBuf>) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.seed = seed;
    if let Some(d) = data {
        cfg.data.dataset = Some(d.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_phi(path: &Path) -> anyhow::Result<SensingTensor> {
    let raw = RawTensor::load(path)
        .with_context(|| format!("reading sensing tensor {}", path.display()))?;
    Ok(SensingTensor::try_from(raw)?)
}

fn load_coded(path: &Path) -> anyhow::Result<CodedImage> {
    let png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let coded = if png {
        read_gray_png(path)?
    } else {
        CodedImage::try_from(RawTensor::load(path)?)?
    };
    Ok(coded)
}

fn write_field(lf: &LightField, dir: &Path) -> anyhow::Result<()> {
    write_view_dir(lf, dir.join("views"))?;
    RawTensor::from(lf).save(dir.join("recon.lft"))?;
    write_mosaic(lf, dir.join("mosaic.png"))?;
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenMask(a) => {
            let shape = RayShape::new(a.height, a.width, a.views)?;
            let phi = lfcs_core::gen_sensing_tensor(
                shape,
                lfcs_core::MaskDistribution::new(a.kind, a.seed),
            );
            RawTensor::from(&phi).save(&a.out)?;
            if let Some(p) = a.preview {
                write_mosaic(&LightField::from_vec(shape, phi.weights().to_vec())?, p)?;
            }
        }
        Command::GenScene(a) => {
            let shape = RayShape::new(a.height, a.width, a.views)?;
            let spec = SceneSpec::random(shape, a.foreground, a.max_disparity, a.dmax, a.seed);
            let scene = gen_scene(&spec, a.seed)?;
            write_view_dir(&scene.light_field, &a.out)?;
            RawTensor::from(&scene.light_field).save(a.out.join("scene.lft"))?;
            scene.disparity.to_raw().save(a.out.join("disparity.lft"))?;
            write_heat_map(&scene.disparity, a.out.join("disparity.png"))?;
            write_mosaic(&scene.light_field, a.out.join("mosaic.png"))?;
            fs::write(
                a.out.join("scene.json"),
                serde_json::to_string_pretty(&spec)?,
            )?;
        }
        Command::Simulate(a) => {
            let lf = load_lightfield(&a.lf)?;
            let phi = load_phi(&a.phi)?;
            let mut coded = lfcs_core::forward(&phi, &lf)?;
            if a.sigma > 0.0 {
                coded = lfcs_core::add_noise(&coded, NoiseModel::new(a.sigma)?, a.seed);
            }
            fs::create_dir_all(&a.out)?;
            RawTensor::from(&coded).save(a.out.join("coded.lft"))?;
            write_gray_png(
                coded.as_slice(),
                coded.height(),
                coded.width(),
                a.out.join("coded.png"),
            )?;
        }
        Command::TrainDict(a) => {
            let cfg = load_config(&a.config, a.seed, a.data.as_ref())?;
            let data = load_data(&cfg)?;
            let dict = train_dictionary(&cfg, &data.train_fields())?;
            let meta = DictionaryMeta {
                patch: cfg.sparse.patch,
                views: cfg.geometry.views,
                atoms: cfg.sparse.atoms,
                lambda: cfg.sparse.lambda,
            };
            dict.save(&a.out, &meta)?;
        }
        Command::ReconSparse(a) => {
            let (dict, meta) = Dictionary::load(&a.dict)?;
            let phi = load_phi(&a.phi)?;
            let coded = load_coded(&a.coded)?;
            let mut cfg = ExperimentConfig::default();
            cfg.sparse.patch = meta.patch;
            cfg.sparse.overlap = a.overlap;
            cfg.sparse.lambda = a.lambda.unwrap_or(meta.lambda);
            let solver = SparseSolver::Admm(cfg.sparse.admm());
            let out = recon_sparse(&coded, &phi, &dict, &solver, cfg.sparse.layout())?;
            if !out.failed.is_empty() {
                eprintln!(
                    "warning: {} tiles failed and were zero-filled",
                    out.failed.len()
                );
            }
            write_field(&out.field, &a.out)?;
        }
        Command::TrainRecon(a) => {
            let cfg = load_config(&a.config, a.seed, a.data.as_ref())?;
            let data = load_data(&cfg)?;
            let phi = sensing_tensor(&cfg, cfg.mask.kind, cfg.mask.seed);
            let (_, log) = train_network(&cfg, &data.train_fields(), &phi, Some(&a.out))?;
            fs::write(
                a.out.join("train_log.json"),
                serde_json::to_string_pretty(&log)?,
            )?;
            fs::write(a.out.join("config.toml"), cfg.to_toml())?;
        }
        Command::Infer(a) => {
            let (mut net, _) = ReconNet::load(&a.ckpt)?;
            let (coded, phi) = (load_coded(&a.coded)?, load_phi(&a.phi)?);
            let lf = match a.tile {
                Some(t) => recon_forward_tiled(&mut net, &coded, &phi, t, (t / 2).max(1))?,
                None => recon_forward(&mut net, &coded, &phi)?,
            };
            write_field(&lf, &a.out)?;
        }
        Command::TrainDisp(a) => {
            let mut cfg = load_config(&a.train.config, a.train.seed, a.train.data.as_ref())?;
            if let Some(s) = &a.source {
                cfg.disp.source = match s.as_str() {
                    "gt" => DispSource::Gt,
                    "recon" => DispSource::Recon,
                    other => bail!("unknown disparity source '{other}' (expected gt or recon)"),
                };
            }
            let data = load_data(&cfg)?;
            let fields = match cfg.disp.source {
                DispSource::Gt => data.train_fields(),
                DispSource::Recon => {
                    let ckpt = a
                        .recon_ckpt
                        .as_ref()
                        .context("--source recon needs --recon-ckpt")?;
                    let (mut net, _) = ReconNet::load(ckpt)?;
                    let phi = sensing_tensor(&cfg, cfg.mask.kind, cfg.mask.seed);
                    let mut out = Vec::new();
                    for (i, lf) in data.train.iter().enumerate() {
                        let coded = simulate(&cfg, &phi, &lf.field, i as u64)?;
                        let tile = cfg.geometry.patch;
                        out.push(if cfg.recon.tiled_inference {
                            recon_forward_tiled(&mut net, &coded, &phi, tile, (tile / 2).max(1))?
                        } else {
                            recon_forward(&mut net, &coded, &phi)?
                        });
                    }
                    out
                }
            };
            let mut net = DispNet::new(cfg.disp_net(), seed_for(&cfg, streams::DISP_INIT, 0))?;
            let tcfg = cfg.disp_train(seed_for(&cfg, streams::DISP_TRAIN, 0));
            let log = train_disp(&mut net, &fields, &tcfg, Some(&a.train.out))?;
            fs::write(
                a.train.out.join("train_log.json"),
                serde_json::to_string_pretty(&log)?,
            )?;
            fs::write(a.train.out.join("config.toml"), cfg.to_toml())?;
        }
        Command::Disp(a) => {
            let (mut net, _) = DispNet::load(&a.ckpt)?;
            let lf = match (&a.lf, &a.coded, &a.phi, &a.recon_ckpt) {
                (Some(p), ..) => load_lightfield(p)?,
                (None, Some(coded), Some(phi), Some(ckpt)) => {
                    let (mut recon, _) = ReconNet::load(ckpt)?;
                    recon_forward(&mut recon, &load_coded(coded)?, &load_phi(phi)?)?
                }
                _ => bail!("give either --lf or --coded with --phi and --recon-ckpt"),
            };
            let d = disp_forward(&mut net, &lf)?;
            fs::create_dir_all(&a.out)?;
            d.to_raw().save(a.out.join("disparity.lft"))?;
            write_heat_map(&d, a.out.join("disparity.png"))?;
        }
        Command::Eval(a) => {
            let recon = load_lightfield(&a.recon)?;
            let truth = load_lightfield(&a.truth)?;
            let name = a
                .truth
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("image")
                .to_string();
            let image = ImageEval::compute(name, &recon, &truth)?;
            let report = EvalReport::new(
                &a.experiment,
                &a.method,
                "",
                a.seed,
                vec![image],
                Vec::new(),
            );
            report.write(&a.out)?;
            println!("{}", report.to_csv().trim_end());
        }
        Command::CrossMask(a) => {
            let cfg = load_config(&a.config, a.seed, None)?;
            let out = a.out.unwrap_or_else(|| cfg.output.clone());
            let report = run_cross_mask(&cfg)?;
            report.write(&out)?;
            crate::pipeline::write_provenance(&cfg, &out)?;
            print!("{}", report.render_table());
            if let Some((train, test, s)) = report.best_cell() {
                println!(
                    "best cell: train {train}, test {test} ({:.2} dB)",
                    s.psnr_db
                );
            }
        }
        Command::Run(a) => {
            let cfg = load_config(&a.config, a.seed, None)?;
            let out = a.out.unwrap_or_else(|| cfg.output.clone());
            let result = run_pipeline(&cfg, &out)?;
            println!(
                "{}: mean PSNR {:.2} dB, SSIM {:.4} over {} images",
                result.report.method,
                result.report.mean_psnr_db,
                result.report.mean_ssim,
                result.report.images.len()
            );
        }
    }
    Ok(())
}
