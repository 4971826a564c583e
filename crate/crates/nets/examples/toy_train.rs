//! Trains the reduced-width reconstruction network on synthetic scenes and
//! compares it against mean backprojection on held-out patches.

use std::time::Instant;

use lfcs_core::metrics::psnr_lf;
use lfcs_core::{
    backproject_mean, forward, gen_scene, gen_sensing_tensor, MaskDistribution, MaskKind, RayShape,
    SceneSpec,
};
use lfcs_nets::{
    extract_patches, random_phi_patches, recon_forward, recon_forward_tiled, train_recon, ReconNet,
    ReconNetConfig, ReconTrainConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().unwrap())
        .collect();
    let steps = args.first().copied().unwrap_or(200);
    let batch = args.get(1).copied().unwrap_or(8);
    let lr = args.get(2).map(|v| *v as f64 * 1e-4).unwrap_or(5e-4);
    let shape = RayShape::new(48, 48, 2)?;
    let scenes = |range: std::ops::Range<u64>| -> Result<Vec<_>, Box<dyn std::error::Error>> {
        range
            .map(|s| Ok(gen_scene(&SceneSpec::random(shape, 3, 1.5, 4.0, s), s)?.light_field))
            .collect()
    };
    let train = extract_patches(&scenes(0..12)?, 20, 7)?;
    let test = extract_patches(&scenes(100..104)?, 20, 14)?;
    let phi = gen_sensing_tensor(shape, MaskDistribution::new(MaskKind::Rgbw, 1));
    let phis = random_phi_patches(&phi, 20, 64, 2)?;
    let test_phi = random_phi_patches(&phi, 20, test.len(), 3)?;

    let mut net = ReconNet::<f32>::new(ReconNetConfig::toy(), 5)?;
    let cfg = ReconTrainConfig {
        steps,
        batch,
        steps_per_epoch: 50,
        seed: 9,
        lr,
        ..ReconTrainConfig::default()
    };
    let t = Instant::now();
    let log = train_recon(&mut net, &train, &phis, &cfg, None)?;
    let secs = t.elapsed().as_secs_f64();
    let (mut p_net, mut p_bp) = (0.0, 0.0);
    for (lf, phi) in test.iter().zip(&test_phi) {
        let i = forward(phi, lf)?;
        p_net += psnr_lf(&recon_forward(&mut net, &i, phi)?, lf)?;
        p_bp += psnr_lf(&backproject_mean(&i, phi)?, lf)?;
    }
    let n = test.len() as f64;
    let (mut f_net, mut f_bp, mut t_net) = (0.0, 0.0, 0.0);
    let full = scenes(100..104)?;
    for lf in &full {
        let i = forward(&phi, lf)?;
        f_net += psnr_lf(&recon_forward(&mut net, &i, &phi)?, lf)?;
        t_net += psnr_lf(&recon_forward_tiled(&mut net, &i, &phi, 20, 10)?, lf)?;
        f_bp += psnr_lf(&backproject_mean(&i, &phi)?, lf)?;
    }
    println!(
        "full-image PSNR: net {:.2} dB, backprojection {:.2} dB",
        f_net / 4.0,
        f_bp / 4.0
    );
    println!("tiled: {:.2} dB", t_net / 4.0);
    println!(
        "{} train patches, {} steps in {secs:.1}s ({:.3}s/step)",
        train.len(),
        steps,
        secs / steps as f64
    );
    println!(
        "loss: first10 {:.4} last10 {:.4}",
        log.mean_loss(0, 10),
        log.mean_loss(steps - 10, steps)
    );
    for k in (0..steps).step_by(50) {
        print!("{:.0} ", log.mean_loss(k, k + 50));
    }
    println!();
    println!(
        "held-out PSNR: net {:.2} dB, backprojection {:.2} dB",
        p_net / n,
        p_bp / n
    );
    Ok(())
}
