use lfcs_core::metrics::psnr_lf;
use lfcs_core::*;
use lfcs_sparse::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_shape() -> RayShape {
    RayShape::new(32, 32, 2).unwrap()
}

fn training_patches(patch: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let shape = toy_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenes: Vec<_> = (0..8)
        .map(|i| {
            gen_scene(
                &SceneSpec::random(shape, 2, 1.0, 4.0, seed + i),
                seed + 100 + i,
            )
            .unwrap()
        })
        .collect();
    let k = patch * patch * shape.rays_per_pixel();
    let mut m = DMatrix::zeros(k, n);
    for c in 0..n {
        let origin = (
            rng.random_range(0..=32 - patch),
            rng.random_range(0..=32 - patch),
        );
        let spec = PatchSpec::new(origin, (patch, patch), 1).unwrap();
        let p = scenes[c % scenes.len()]
            .light_field
            .extract_patch(&spec)
            .unwrap();
        for (r, v) in p.as_slice().iter().enumerate() {
            m[(r, c)] = *v as f64;
        }
    }
    m
}

fn relative_error(a: &LightField, b: &LightField) -> f64 {
    let num: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| ((x - y) as f64).powi(2))
        .sum();
    let den: f64 = b.as_slice().iter().map(|y| (*y as f64).powi(2)).sum();
    (num / den).sqrt()
}

#[test]
fn admm_beats_mean_backprojection_on_a_toy_scene() {
    let layout = PatchLayout::default();
    let dict = ksvd(
        &training_patches(layout.patch, 1500, 1),
        &KsvdConfig {
            atoms: 128,
            iterations: 5,
            sparsity: 6,
            seed: 2,
        },
    )
    .unwrap()
    .dictionary;

    let shape = toy_shape();
    let scene = gen_scene(&SceneSpec::random(shape, 2, 1.0, 4.0, 999), 1999).unwrap();
    let phi = gen_sensing_tensor(shape, MaskDistribution::new(MaskKind::Uniform, 5));
    let image = forward(&phi, &scene.light_field).unwrap();
    let baseline = psnr_lf(&backproject_mean(&image, &phi).unwrap(), &scene.light_field).unwrap();
    let params = AdmmParams {
        lambda: 1e-5,
        adaptive_rho: true,
        ..Default::default()
    };
    let out = recon_sparse(&image, &phi, &dict, &SparseSolver::Admm(params), layout).unwrap();
    assert!(out.failed.is_empty());
    let sparse = psnr_lf(&out.field, &scene.light_field).unwrap();
    assert!(
        sparse >= baseline + 3.0,
        "ADMM {sparse:.2} dB vs backprojection {baseline:.2} dB"
    );
}

/// Nonnegative dictionary over a single `4 × 4` patch with `Nv = 2`.
fn positive_dictionary(atoms: usize, seed: u64) -> (RayShape, Dictionary) {
    let shape = RayShape::new(4, 4, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = DMatrix::from_fn(shape.len(), atoms, |_, _| rng.random::<f64>());
    (shape, Dictionary::normalized(d).unwrap())
}

fn field_from(shape: RayShape, v: &DVector<f64>) -> LightField {
    LightField::from_vec(shape, v.iter().map(|&x| x as f32).collect()).unwrap()
}

#[test]
fn one_sparse_patch_is_recovered() {
    let (shape, dict) = positive_dictionary(40, 3);
    let mut alpha = DVector::zeros(40);
    alpha[11] = 0.9 / dict.atoms().column(11).max();
    let lf = field_from(shape, &(dict.atoms() * &alpha));
    let phi = gen_sensing_tensor(shape, MaskDistribution::new(MaskKind::Uniform, 8));
    let image = forward(&phi, &lf).unwrap();
    let solver = SparseSolver::Omp {
        max_nnz: 1,
        residual_tol: 0.0,
    };
    let out = recon_sparse(
        &image,
        &phi,
        &dict,
        &solver,
        PatchLayout {
            patch: 4,
            overlap: 0,
        },
    )
    .unwrap();
    let err = out
        .field
        .as_slice()
        .iter()
        .zip(lf.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn exactly_sparse_field_is_recovered_with_small_relative_error() {
    let (shape, dict) = positive_dictionary(24, 4);
    let mut alpha = DVector::zeros(24);
    alpha[2] = 0.3;
    alpha[17] = 0.4;
    let lf_vec = dict.atoms() * &alpha;
    assert!(lf_vec.max() <= 1.0);
    let lf = field_from(shape, &lf_vec);
    let phi = gen_sensing_tensor(shape, MaskDistribution::new(MaskKind::Rgbw, 1));
    let a = patch_system(&phi, &dict).unwrap();
    let sub = a.select_columns(&[2, 17]);
    let sv = sub.clone().svd(false, false).singular_values;
    assert!(
        sv.min() / sv.max() > 1e-2,
        "support system is ill-conditioned"
    );

    let image = forward(&phi, &lf).unwrap();
    let solver = SparseSolver::Omp {
        max_nnz: 2,
        residual_tol: 0.0,
    };
    let out = recon_sparse(
        &image,
        &phi,
        &dict,
        &solver,
        PatchLayout {
            patch: 4,
            overlap: 0,
        },
    )
    .unwrap();
    assert!(relative_error(&out.field, &lf) < 1e-3);
}

#[test]
fn dictionary_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let (_, dict) = positive_dictionary(10, 9);
    let meta = DictionaryMeta {
        patch: 4,
        views: 2,
        atoms: 10,
        lambda: 1e-5,
    };
    dict.save(dir.path().join("toy"), &meta).unwrap();
    let (back, back_meta) = Dictionary::load(dir.path().join("toy")).unwrap();
    assert_eq!(back_meta, meta);
    assert!((back.atoms() - dict.atoms()).abs().max() < 1e-6);
    assert!(back.max_norm_error() < UNIT_NORM_TOL);
}

#[test]
fn mismatched_dictionary_is_rejected() {
    let (shape, dict) = positive_dictionary(10, 2);
    let phi = SensingTensor::ones(shape);
    let image = CodedImage::zeros(4, 4);
    let solver = SparseSolver::Omp {
        max_nnz: 1,
        residual_tol: 0.0,
    };
    assert!(recon_sparse(
        &image,
        &phi,
        &dict,
        &solver,
        PatchLayout {
            patch: 2,
            overlap: 0
        }
    )
    .is_err());
}
