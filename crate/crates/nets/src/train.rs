//! Training loops. Batches are assembled on a producer thread while the
//! optimizer runs; every batch is drawn from its own derived seed, so a run
//! is reproducible regardless of scheduling.

use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;

use lfcs_core::{LightField, NoiseModel, PatchSpec, SensingTensor, Spatial};
use lfcs_nn::{Adam, AdamConfig, ExponentialDecay, Layer, Mode, Param, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch::{derive_seed, sample_batch, streams, TrainBatch};
use crate::disparity::DispNet;
use crate::error::{NetsError, Result};
use crate::pack::{lightfield_tensor, stack};
use crate::recon::{recon_loss, DataNorm, ReconNet, RECON_BETA, RECON_LR};
use crate::warp::{disp_loss_batch, DISP_GAMMA, DISP_LR};

/// Switch the data term from L1 to squared L2 once the monitored loss has
/// improved by less than `min_improvement` (relative) over `window_epochs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineTuneRule {
    pub window_epochs: usize,
    pub min_improvement: f64,
}

impl Default for FineTuneRule {
    fn default() -> Self {
        Self {
            window_epochs: 20,
            min_improvement: 0.005,
        }
    }
}

impl FineTuneRule {
    /// Whether the last `window_epochs` entries of `history` failed to improve
    /// on the best earlier value by `min_improvement`.
    pub fn triggered(&self, history: &[f64]) -> bool {
        if self.window_epochs == 0 || history.len() <= self.window_epochs {
            return false;
        }
        let split = history.len() - self.window_epochs;
        let before = history[..split]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let recent = history[split..]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        before.is_finite() && before > 0.0 && (before - recent) / before < self.min_improvement
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconTrainConfig {
    pub steps: usize,
    pub steps_per_epoch: usize,
    pub batch: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub beta: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub fine_tune: Option<FineTuneRule>,
    /// Fixed batches used to monitor convergence at each epoch end.
    pub monitor_batches: usize,
}

impl Default for ReconTrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            steps_per_epoch: 50,
            batch: 8,
            lr: RECON_LR,
            lr_decay: ExponentialDecay::DEFAULT_DECAY,
            beta: RECON_BETA,
            noise_sigma: 0.0,
            seed: 0,
            fine_tune: Some(FineTuneRule::default()),
            monitor_batches: 2,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Training loss of every step.
    pub losses: Vec<f64>,
    /// Learning rate of every epoch.
    pub epoch_lr: Vec<f64>,
    /// Monitored loss at the end of every epoch.
    pub monitor: Vec<f64>,
    /// First epoch trained with the squared-L2 data term.
    pub fine_tune_epoch: Option<usize>,
}

impl TrainLog {
    /// Mean loss over steps `[from, to)`.
    pub fn mean_loss(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.losses.len());
        let w = &self.losses[from.min(to)..to];
        w.iter().sum::<f64>() / w.len().max(1) as f64
    }
}

fn snapshot(params: Vec<&Param<f32>>) -> Vec<Vec<f32>> {
    params.into_iter().map(|p| p.value.clone()).collect()
}

fn restore(params: Vec<&mut Param<f32>>, saved: &[Vec<f32>]) {
    for (p, v) in params.into_iter().zip(saved) {
        p.value.clone_from(v);
    }
}

fn validate_schedule(steps_per_epoch: usize, batch: usize) -> Result<()> {
    if steps_per_epoch == 0 || batch == 0 {
        return Err(NetsError::Config(
            "steps_per_epoch and batch must be >= 1".into(),
        ));
    }
    Ok(())
}

/// A training step that produced a non-finite loss, before any update.
struct Divergence {
    step: usize,
    loss: f64,
}

/// Optimizes the reconstruction loss over `(l, Φ)` pairs drawn from the two
/// sources. A checkpoint is written to `checkpoint_dir` after every epoch. A
/// non-finite loss aborts training and restores the last epoch's parameters.
pub fn train_recon(
    net: &mut ReconNet<f32>,
    fields: &[LightField],
    phis: &[SensingTensor],
    cfg: &ReconTrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainLog> {
    validate_schedule(cfg.steps_per_epoch, cfg.batch)?;
    let noise = NoiseModel::new(cfg.noise_sigma)?;
    let monitor: Vec<TrainBatch<f32>> = (0..cfg.monitor_batches)
        .map(|k| {
            sample_batch(
                fields,
                phis,
                cfg.batch,
                noise,
                derive_seed(cfg.seed, streams::VALIDATION, k as u64),
            )
        })
        .collect::<Result<_>>()?;
    // Surface empty-source errors before spawning the producer.
    sample_batch::<f32>(fields, phis, 1, noise, 0)?;

    let schedule = ExponentialDecay {
        initial: cfg.lr,
        decay: cfg.lr_decay,
    };
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut log = TrainLog::default();
    let mut norm = DataNorm::L1;
    let mut good = snapshot(net.params());
    let mut checkpointed = false;

    let outcome = std::thread::scope(|scope| -> Result<Option<Divergence>> {
        let (tx, rx) = sync_channel::<Result<TrainBatch<f32>>>(2);
        scope.spawn(move || {
            for step in 0..cfg.steps {
                let seed = derive_seed(cfg.seed, streams::TRAIN_BATCH, step as u64);
                if tx
                    .send(sample_batch(fields, phis, cfg.batch, noise, seed))
                    .is_err()
                {
                    break;
                }
            }
        });
        for step in 0..cfg.steps {
            let epoch = step / cfg.steps_per_epoch;
            if step % cfg.steps_per_epoch == 0 {
                opt.set_lr(schedule.lr(epoch));
                log.epoch_lr.push(schedule.lr(epoch));
            }
            let batch = rx.recv().expect("producer sends one batch per step")?;
            net.params_mut().into_iter().for_each(|p| p.zero_grad());
            let y = net.forward(&batch.input, Mode::Train)?;
            let (loss, grad) = recon_loss(&y, &batch.target, &batch.input, cfg.beta, norm)?;
            if !loss.is_finite() {
                return Ok(Some(Divergence { step, loss }));
            }
            net.backward(&grad)?;
            opt.step(&mut net.params_mut())?;
            log.losses.push(loss);

            if (step + 1) % cfg.steps_per_epoch == 0 || step + 1 == cfg.steps {
                let mut total = 0.0;
                for b in &monitor {
                    let y = net.forward(&b.input, Mode::Infer)?;
                    total += recon_loss(&y, &b.target, &b.input, cfg.beta, norm)?.0;
                }
                let m = total / monitor.len().max(1) as f64;
                if !m.is_finite() {
                    return Ok(Some(Divergence { step, loss: m }));
                }
                log.monitor.push(m);
                good = snapshot(net.params());
                if let Some(dir) = checkpoint_dir {
                    net.save(dir, step as u64 + 1, epoch)?;
                    checkpointed = true;
                }
                if norm == DataNorm::L1 {
                    if let Some(rule) = cfg.fine_tune {
                        if rule.triggered(&log.monitor) {
                            norm = DataNorm::L2;
                            log.fine_tune_epoch = Some(epoch + 1);
                        }
                    }
                }
            }
        }
        Ok(None)
    })?;

    match outcome {
        None => Ok(log),
        Some(Divergence { step, loss }) => {
            restore(net.params_mut(), &good);
            Err(NetsError::Diverged {
                step,
                loss,
                restored_from: checkpoint_dir.filter(|_| checkpointed).map(PathBuf::from),
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispTrainConfig {
    pub steps: usize,
    pub steps_per_epoch: usize,
    pub batch: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Random square crops of this size; whole fields when `None`.
    pub patch: Option<usize>,
}

impl Default for DispTrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            steps_per_epoch: 50,
            batch: 4,
            lr: DISP_LR,
            lr_decay: ExponentialDecay::DEFAULT_DECAY,
            gamma: DISP_GAMMA,
            seed: 0,
            patch: None,
        }
    }
}

/// Stacks `batch` light fields drawn uniformly (optionally cropped) from `fields`.
pub fn sample_fields(
    fields: &[LightField],
    batch: usize,
    patch: Option<usize>,
    seed: u64,
) -> Result<Tensor4<f32>> {
    if fields.is_empty() {
        return Err(NetsError::EmptySource("light field"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parts = (0..batch)
        .map(|_| {
            let lf = &fields[rng.random_range(0..fields.len())];
            let lf = match patch {
                Some(p) => {
                    let (h, w) = lf.spatial_dims();
                    if p > h || p > w {
                        return Err(NetsError::Shape(format!(
                            "{p}x{p} crop from {h}x{w} light field"
                        )));
                    }
                    let origin = (rng.random_range(0..=h - p), rng.random_range(0..=w - p));
                    lf.extract_patch(&PatchSpec::new(origin, (p, p), 1)?)?
                }
                None => lf.clone(),
            };
            Ok(lightfield_tensor(&lf))
        })
        .collect::<Result<Vec<_>>>()?;
    stack(&parts)
}

/// Unsupervised training of the disparity network on light fields, which may
/// be ground truth or reconstructions.
pub fn train_disp(
    net: &mut DispNet<f32>,
    fields: &[LightField],
    cfg: &DispTrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainLog> {
    validate_schedule(cfg.steps_per_epoch, cfg.batch)?;
    sample_fields(fields, 1, cfg.patch, 0)?;
    if let Some(lf) = fields
        .iter()
        .find(|lf| lf.shape().views != net.config.views)
    {
        return Err(NetsError::Shape(format!(
            "network expects {} views, got a field with {}",
            net.config.views,
            lf.shape().views
        )));
    }
    let schedule = ExponentialDecay {
        initial: cfg.lr,
        decay: cfg.lr_decay,
    };
    let views = net.config.views;
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut log = TrainLog::default();
    let mut good = snapshot(net.params());
    let mut checkpointed = false;

    let outcome = std::thread::scope(|scope| -> Result<Option<Divergence>> {
        let (tx, rx) = sync_channel::<Result<Tensor4<f32>>>(2);
        scope.spawn(move || {
            for step in 0..cfg.steps {
                let seed = derive_seed(cfg.seed, streams::DISP_BATCH, step as u64);
                if tx
                    .send(sample_fields(fields, cfg.batch, cfg.patch, seed))
                    .is_err()
                {
                    break;
                }
            }
        });
        let mut epoch_total = 0.0;
        let mut epoch_count = 0;
        for step in 0..cfg.steps {
            let epoch = step / cfg.steps_per_epoch;
            if step % cfg.steps_per_epoch == 0 {
                opt.set_lr(schedule.lr(epoch));
                log.epoch_lr.push(schedule.lr(epoch));
            }
            let x = rx.recv().expect("producer sends one batch per step")?;
            net.params_mut().into_iter().for_each(|p| p.zero_grad());
            let d = net.forward(&x, Mode::Train)?;
            let (loss, grad) = disp_loss_batch(&x, &d, views, cfg.gamma)?;
            if !loss.is_finite() {
                return Ok(Some(Divergence { step, loss }));
            }
            net.backward(&grad)?;
            opt.step(&mut net.params_mut())?;
            log.losses.push(loss);
            epoch_total += loss;
            epoch_count += 1;
            if (step + 1) % cfg.steps_per_epoch == 0 || step + 1 == cfg.steps {
                log.monitor.push(epoch_total / epoch_count as f64);
                epoch_total = 0.0;
                epoch_count = 0;
                good = snapshot(net.params());
                if let Some(dir) = checkpoint_dir {
                    net.save(dir, step as u64 + 1, epoch)?;
                    checkpointed = true;
                }
            }
        }
        Ok(None)
    })?;

    match outcome {
        None => Ok(log),
        Some(Divergence { step, loss }) => {
            restore(net.params_mut(), &good);
            Err(NetsError::Diverged {
                step,
                loss,
                restored_from: checkpoint_dir.filter(|_| checkpointed).map(PathBuf::from),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fine_tune_rule_waits_for_a_plateau() {
        let rule = FineTuneRule {
            window_epochs: 3,
            min_improvement: 0.005,
        };
        assert!(!rule.triggered(&[1.0, 0.9, 0.8]));
        assert!(!rule.triggered(&[1.0, 0.9, 0.8, 0.7]));
        assert!(rule.triggered(&[1.0, 0.9, 0.8, 0.799, 0.7999, 0.801]));
        assert!(!rule.triggered(&[1.0, 0.9, 0.8, 0.79, 0.78, 0.77]));
    }

    #[test]
    fn mean_loss_window() {
        let log = TrainLog {
            losses: vec![4.0, 2.0, 1.0, 1.0],
            ..TrainLog::default()
        };
        assert_eq!(log.mean_loss(0, 2), 3.0);
        assert_eq!(log.mean_loss(2, 10), 1.0);
    }
}
