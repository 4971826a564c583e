//! Finite-difference checks of both training losses and both networks on
//! small random 64-bit instances.

use lfcs_core::{
    forward, gen_sensing_tensor, CodedImage, LightField, MaskDistribution, MaskKind, RayShape,
};
use lfcs_nn::gradcheck::{check_with_loss, numeric_grad, rel_error, GradReport, STEP};
use lfcs_nn::{Mode, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::disparity::{DispNet, DispNetConfig, DISP_RATES};
use crate::error::Result;
use crate::pack::{lightfield_tensor, pack_input, stack};
use crate::recon::{recon_loss, DataNorm, ReconNet, ReconNetConfig, RECON_DILATIONS};
use crate::warp::{disp_loss_batch, tv_loss};

fn uniform(shape: [usize; 4], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor4<f64> {
    Tensor4::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Packed inputs and targets for `n` random `h × w` instances with 2×2 views.
fn recon_instance(
    n: usize,
    h: usize,
    w: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor4<f64>, Tensor4<f64>)> {
    let shape = RayShape::new(h, w, 2)?;
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..n {
        let lf = LightField::from_fn(shape, |_, _, _, _, _| rng.random_range(0.0..1.0));
        let phi = gen_sensing_tensor(shape, MaskDistribution::new(MaskKind::Rgbw, rng.random()));
        let clean = forward(&phi, &lf)?;
        // Offset the measurement so the consistency term is not at its minimum.
        let offset = clean
            .as_slice()
            .iter()
            .map(|v| v + rng.random_range(-0.05..0.05))
            .collect();
        let coded = CodedImage::from_vec(h, w, offset)?;
        inputs.push(pack_input(&coded, &phi)?);
        targets.push(lightfield_tensor(&lf));
    }
    Ok((stack(&inputs)?, stack(&targets)?))
}

/// Gradient of the reconstruction loss with respect to the estimate.
pub fn recon_loss_report(beta: f64, norm: DataNorm, seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (input, target) = recon_instance(2, 4, 5, &mut rng)?;
    let lhat = uniform(target.shape(), 0.0, 1.0, &mut rng);
    let (_, analytic) = recon_loss(&lhat, &target, &input, beta, norm)?;
    let numeric = numeric_grad(
        |v| {
            let l = Tensor4::from_vec(lhat.shape(), v.to_vec()).expect("same shape");
            recon_loss(&l, &target, &input, beta, norm)
                .expect("aligned")
                .0
        },
        lhat.as_slice(),
        STEP,
    );
    Ok(GradReport {
        entries: vec![("l_hat".into(), rel_error(analytic.as_slice(), &numeric))],
    })
}

/// Gradient of the disparity loss with respect to the disparity map.
pub fn disp_loss_report(gamma: f64, seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let views = 3;
    let lf = uniform([2, 6, 7, views * views * 3], 0.0, 1.0, &mut rng);
    let d = uniform([2, 6, 7, 1], -1.5, 1.5, &mut rng);
    let (_, analytic) = disp_loss_batch(&lf, &d, views, gamma)?;
    let numeric = numeric_grad(
        |v| {
            let dv = Tensor4::from_vec(d.shape(), v.to_vec()).expect("same shape");
            disp_loss_batch(&lf, &dv, views, gamma).expect("aligned").0
        },
        d.as_slice(),
        STEP,
    );
    Ok(GradReport {
        entries: vec![("d".into(), rel_error(analytic.as_slice(), &numeric))],
    })
}

/// Gradient of the total-variation regularizer.
pub fn tv_report(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (7, 9);
    let d: Vec<f64> = (0..h * w).map(|_| rng.random_range(-2.0..2.0)).collect();
    let (_, analytic) = tv_loss(&d, h, w);
    let numeric = numeric_grad(|v| tv_loss(v, h, w).0, &d, STEP);
    GradReport {
        entries: vec![("tv".into(), rel_error(&analytic, &numeric))],
    }
}

/// Every parameter of a narrow 11-layer reconstruction network on 8×8
/// instances with 2×2 views, under the composite reconstruction loss.
pub fn recon_net_report(channels: usize, seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ReconNetConfig {
        views: 2,
        channels,
        dilations: RECON_DILATIONS.to_vec(),
    };
    let mut net = ReconNet::<f64>::new(config, rng.random())?;
    let (input, target) = recon_instance(2, 8, 8, &mut rng)?;
    let packed = input.clone();
    Ok(check_with_loss(&mut net, &input, Mode::Train, |y| {
        recon_loss(y, &target, &packed, 0.5, DataNorm::L1).expect("aligned")
    })?)
}

/// Every parameter of a narrow disparity network on 8×8 light fields with
/// 2×2 views, under the disparity loss.
pub fn disp_net_report(seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = DispNetConfig {
        views: 2,
        dmax: 4.0,
        rates: DISP_RATES.to_vec(),
        widths: [3, 4, 5],
    };
    let mut net = DispNet::<f64>::new(config, rng.random())?;
    let lf = uniform([2, 8, 8, 12], 0.0, 1.0, &mut rng);
    let fixed = lf.clone();
    Ok(check_with_loss(&mut net, &lf, Mode::Train, |d| {
        disp_loss_batch(&fixed, d, 2, 0.1).expect("aligned")
    })?)
}
