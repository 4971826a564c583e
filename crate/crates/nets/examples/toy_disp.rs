//! Unsupervised disparity training on fronto-parallel scenes with a planted
//! disparity of 2 px.

use std::time::Instant;

use lfcs_core::{gen_scene, RayShape, SceneSpec};
use lfcs_nets::{disp_forward, train_disp, DispNet, DispNetConfig, DispTrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().unwrap())
        .collect();
    let steps = args.first().copied().unwrap_or(300);
    let size = args.get(1).copied().unwrap_or(32);
    let lr = args.get(2).map(|v| *v as f64 * 1e-4).unwrap_or(1e-3);
    let shape = RayShape::new(size, size, 2)?;
    let fields = (0..6)
        .map(|s| Ok(gen_scene(&SceneSpec::fronto_parallel(shape, 2.0, 4.0), s)?.light_field))
        .collect::<Result<Vec<_>, Box<dyn std::error::Error>>>()?;
    let mut net = DispNet::<f32>::new(DispNetConfig::toy(), 3)?;
    let cfg = DispTrainConfig {
        steps,
        steps_per_epoch: 50,
        batch: 2,
        lr,
        seed: 4,
        ..DispTrainConfig::default()
    };
    let t = Instant::now();
    let log = train_disp(&mut net, &fields, &cfg, None)?;
    println!("{steps} steps in {:.1}s", t.elapsed().as_secs_f64());
    println!(
        "loss: first10 {:.4} last10 {:.4}",
        log.mean_loss(0, 10),
        log.mean_loss(steps - 10, steps)
    );
    let test = gen_scene(&SceneSpec::fronto_parallel(shape, 2.0, 4.0), 77)?.light_field;
    let d = disp_forward(&mut net, &test)?;
    println!("interior median {:?}", d.interior_median(4));
    Ok(())
}
