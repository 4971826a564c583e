use std::fs;
use std::path::Path;

use lfcs::pipeline::{load_data, sensing_tensor, simulate};
use lfcs::{run_pipeline, CliError, ExperimentConfig, Method};
use lfcs_core::forward;
use lfcs_core::metrics::psnr_lf;

/// Small geometry that keeps every method under a few seconds.
fn small(method: Method) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        experiment: "small".into(),
        seed: 5,
        method,
        ..ExperimentConfig::default()
    };
    cfg.geometry.height = 16;
    cfg.geometry.width = 16;
    cfg.geometry.patch = 12;
    cfg.geometry.stride = 4;
    cfg.data.train_scenes = 3;
    cfg.data.test_scenes = 2;
    cfg.sparse.atoms = 48;
    cfg.sparse.training_patches = 300;
    cfg.sparse.iterations = 3;
    cfg.recon.channels = 4;
    cfg.recon.steps = 12;
    cfg.recon.steps_per_epoch = 4;
    cfg.recon.batch = 2;
    cfg.recon.phi_patches = 4;
    cfg.disp.widths = [3, 4, 5];
    cfg.disp.steps = 6;
    cfg.disp.steps_per_epoch = 3;
    cfg.disp.batch = 1;
    cfg
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn noiseless_sparse_run_beats_the_zero_image() {
    let cfg = small(Method::Sparse);
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&cfg, dir.path()).unwrap();
    let data = load_data(&cfg).unwrap();
    let zero_psnr: f64 = data
        .test
        .iter()
        .map(|nf| {
            let zero = lfcs_core::LightField::constant(nf.field.shape(), 0.0).unwrap();
            psnr_lf(&zero, &nf.field).unwrap()
        })
        .sum::<f64>()
        / data.test.len() as f64;
    assert_eq!(out.report.method, "sparse");
    assert_eq!(out.report.images.len(), 2);
    assert!(
        out.report.mean_psnr_db > zero_psnr,
        "sparse {} dB vs zero image {zero_psnr} dB",
        out.report.mean_psnr_db
    );
    for f in &out.files {
        assert!(f.exists(), "{}", f.display());
    }
    let stem = out.report.file_stem();
    for name in [
        "config.toml",
        "seeds.json",
        "test_000_recon.png",
        "test_000_coded.png",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    assert!(dir.path().join(format!("{stem}.csv")).exists());
    let saved = ExperimentConfig::load(dir.path().join("config.toml")).unwrap();
    assert_eq!(saved.fingerprint(), cfg.fingerprint());
}

#[test]
fn noisy_config_runs_the_noisy_path() {
    let mut cfg = small(Method::Backprojection);
    cfg.noise_sigma = 0.02;
    let data = load_data(&cfg).unwrap();
    let phi = sensing_tensor(&cfg, cfg.mask.kind, cfg.mask.seed);
    let lf = &data.test[0].field;
    let clean = forward(&phi, lf).unwrap();
    let noisy = simulate(&cfg, &phi, lf, 0).unwrap();
    let n = clean.as_slice().len() as f64;
    let sd = (clean
        .as_slice()
        .iter()
        .zip(noisy.as_slice())
        .map(|(a, b)| ((a - b) as f64).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    assert!((sd - 0.02).abs() < 0.004, "noise deviation {sd}");

    let dir = tempfile::tempdir().unwrap();
    let noisy_report = run_pipeline(&cfg, dir.path()).unwrap().report;
    cfg.noise_sigma = 0.0;
    let clean_report = run_pipeline(&cfg, tempfile::tempdir().unwrap().path())
        .unwrap()
        .report;
    assert!(noisy_report.mean_psnr_db.is_finite());
    assert!(noisy_report.mean_psnr_db < clean_report.mean_psnr_db);
    assert_ne!(
        noisy_report.config_fingerprint,
        clean_report.config_fingerprint
    );
}

#[test]
fn reruns_reproduce_reports_bit_identically() {
    for method in [Method::Sparse, Method::Net] {
        let mut cfg = small(method);
        cfg.noise_sigma = 0.01;
        cfg.disp.enabled = method == Method::Net;
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = run_pipeline(&cfg, a.path()).unwrap();
        let rb = run_pipeline(&cfg, b.path()).unwrap();
        let stem = ra.report.file_stem();
        let mut names = vec![
            format!("{stem}.csv"),
            format!("{stem}.json"),
            "seeds.json".into(),
            "config.toml".into(),
            "test_000_recon.lft".into(),
        ];
        if cfg.disp.enabled {
            names.push("test_000_disparity.lft".into());
            names.push("test_000_disparity.json".into());
        }
        for name in names {
            assert_eq!(
                read(&a.path().join(&name)),
                read(&b.path().join(&name)),
                "{method:?}: {name} differs"
            );
        }
        assert_eq!(ra.disparity.map(|d| d.1), rb.disparity.map(|d| d.1));
    }
}

#[test]
fn different_seeds_give_different_reports() {
    let cfg = small(Method::Backprojection);
    let other = ExperimentConfig {
        seed: 6,
        ..cfg.clone()
    };
    let a = run_pipeline(&cfg, tempfile::tempdir().unwrap().path())
        .unwrap()
        .report;
    let b = run_pipeline(&other, tempfile::tempdir().unwrap().path())
        .unwrap()
        .report;
    assert_ne!(a.mean_psnr_db, b.mean_psnr_db);
}

#[test]
fn stage_failures_name_the_stage_and_fingerprint() {
    let mut cfg = small(Method::Backprojection);
    cfg.data.dataset = Some("/nonexistent/dataset".into());
    match run_pipeline(&cfg, tempfile::tempdir().unwrap().path()) {
        Err(CliError::Stage {
            stage,
            fingerprint,
            message,
        }) => {
            assert_eq!(stage, "data");
            assert_eq!(fingerprint, cfg.fingerprint());
            assert!(message.contains("manifest.json"), "{message}");
        }
        other => panic!("expected a stage error, got {other:?}"),
    }

    let mut bad = small(Method::Backprojection);
    bad.geometry.views = 0;
    match run_pipeline(&bad, tempfile::tempdir().unwrap().path()) {
        Err(CliError::Stage { stage, .. }) => assert_eq!(stage, "config"),
        other => panic!("expected a stage error, got {other:?}"),
    }
}

#[test]
fn dataset_geometry_must_match_the_config() {
    let cfg = small(Method::Backprojection);
    let dir = tempfile::tempdir().unwrap();
    let data = load_data(&cfg).unwrap();
    lfcs::export_dataset(&data, dir.path()).unwrap();
    let mut wrong = cfg.clone();
    wrong.data.dataset = Some(dir.path().to_path_buf());
    wrong.geometry.height = 20;
    assert!(matches!(load_data(&wrong), Err(CliError::Config(_))));
    let mut right = cfg;
    right.data.dataset = Some(dir.path().to_path_buf());
    let back = load_data(&right).unwrap();
    assert_eq!(back.train.len(), 3);
    assert_eq!(back.test[1].name, "test_001");
}
