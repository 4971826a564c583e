//! Training batches: light field patches paired with sensing-tensor patches.

use lfcs_core::{add_noise, forward, LightField, NoiseModel, PatchSpec, SensingTensor, Spatial};
use lfcs_nn::{Scalar, Tensor4};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NetsError, Result};
use crate::pack::{lightfield_tensor, pack_input, stack};

/// Seed for draw `index` of an independent stream `tag` derived from `seed`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng.set_word_pos(index as u128 * 2);
    rng.next_u64()
}

/// Stream tags used with [`derive_seed`].
pub mod streams {
    pub const TRAIN_BATCH: u64 = 1;
    pub const VALIDATION: u64 = 2;
    pub const PHI_PATCHES: u64 = 3;
    pub const INIT: u64 = 4;
    pub const DISP_BATCH: u64 = 5;
}

#[derive(Clone, Debug)]
pub struct TrainBatch<T> {
    /// Packed network input `[B, h, w, 1 + Nv²·3]`.
    pub input: Tensor4<T>,
    /// Ground-truth light fields `[B, h, w, Nv²·3]`.
    pub target: Tensor4<T>,
    /// `(light field index, sensing patch index)` per sample.
    pub pairs: Vec<(usize, usize)>,
}

/// Draws `batch` independent `(l_q, Φ_q)` pairs uniformly from the two sources
/// and simulates `i_q = forward(Φ_q, l_q) + n`.
pub fn sample_batch<T: Scalar>(
    fields: &[LightField],
    phis: &[SensingTensor],
    batch: usize,
    noise: NoiseModel,
    seed: u64,
) -> Result<TrainBatch<T>> {
    if fields.is_empty() {
        return Err(NetsError::EmptySource("light field"));
    }
    if phis.is_empty() {
        return Err(NetsError::EmptySource("sensing tensor"));
    }
    if batch == 0 {
        return Err(NetsError::Config("batch size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(batch);
    let mut targets = Vec::with_capacity(batch);
    let mut pairs = Vec::with_capacity(batch);
    for _ in 0..batch {
        let li = rng.random_range(0..fields.len());
        let pi = rng.random_range(0..phis.len());
        let noise_seed = rng.next_u64();
        let (lf, phi) = (&fields[li], &phis[pi]);
        if lf.shape() != phi.shape() {
            return Err(NetsError::Shape(format!(
                "light field {:?} vs sensing tensor {:?}",
                lf.shape().dims(),
                phi.shape().dims()
            )));
        }
        let clean = forward(phi, lf)?;
        let coded = if noise.sigma > 0.0 {
            add_noise(&clean, noise, noise_seed)
        } else {
            clean
        };
        inputs.push(pack_input(&coded, phi)?);
        targets.push(lightfield_tensor(lf));
        pairs.push((li, pi));
    }
    Ok(TrainBatch {
        input: stack(&inputs)?,
        target: stack(&targets)?,
        pairs,
    })
}

/// All `patch × patch` crops of `fields` on a grid with step `stride`.
pub fn extract_patches(
    fields: &[LightField],
    patch: usize,
    stride: usize,
) -> Result<Vec<LightField>> {
    let mut out = Vec::new();
    for lf in fields {
        for spec in PatchSpec::tile(lf.spatial_dims(), (patch, patch), stride)? {
            out.push(lf.extract_patch(&spec)?);
        }
    }
    Ok(out)
}

/// `count` crops of `phi` at uniformly random locations.
pub fn random_phi_patches(
    phi: &SensingTensor,
    patch: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<SensingTensor>> {
    let (h, w) = phi.spatial_dims();
    if patch > h || patch > w {
        return Err(NetsError::Shape(format!(
            "{patch}x{patch} patch from {h}x{w} sensing tensor"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let origin = (
                rng.random_range(0..=h - patch),
                rng.random_range(0..=w - patch),
            );
            let spec = PatchSpec::new(origin, (patch, patch), 1)?;
            Ok(phi.extract_patch(&spec)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use lfcs_core::{gen_sensing_tensor, MaskDistribution, MaskKind, RayShape};
    use std::collections::HashSet;

    fn sources(nf: usize, np: usize) -> (Vec<LightField>, Vec<SensingTensor>) {
        let shape = RayShape::new(4, 4, 2).unwrap();
        let fields = (0..nf)
            .map(|k| {
                LightField::from_fn(shape, |x, y, u, v, c| {
                    ((x + y + u + v + c + k) % 9) as f32 / 9.0
                })
            })
            .collect();
        let phis = (0..np)
            .map(|k| gen_sensing_tensor(shape, MaskDistribution::new(MaskKind::Rgbw, k as u64)))
            .collect();
        (fields, phis)
    }

    #[test]
    fn noiseless_batches_reproduce_the_measurement() {
        let (fields, phis) = sources(3, 2);
        let b: TrainBatch<f32> =
            sample_batch(&fields, &phis, 5, NoiseModel::noiseless(), 7).unwrap();
        for (q, &(li, pi)) in b.pairs.iter().enumerate() {
            let i = forward(&phis[pi], &fields[li]).unwrap();
            let coded: Vec<f32> = b.input.sample(q).iter().step_by(13).copied().collect();
            assert_eq!(coded, i.as_slice());
        }
        let again: TrainBatch<f32> =
            sample_batch(&fields, &phis, 5, NoiseModel::noiseless(), 7).unwrap();
        assert_eq!(again.input, b.input);
    }

    #[test]
    fn pairing_covers_all_combinations() {
        let (fields, phis) = sources(10, 4);
        let mut seen = HashSet::new();
        for s in 0..100 {
            let b: TrainBatch<f32> =
                sample_batch(&fields, &phis, 8, NoiseModel::noiseless(), s).unwrap();
            seen.extend(b.pairs);
        }
        assert_eq!(seen.len(), 40);
    }

    #[test]
    fn empty_sources_are_errors() {
        let (fields, phis) = sources(1, 1);
        assert!(sample_batch::<f32>(&[], &phis, 1, NoiseModel::noiseless(), 0).is_err());
        assert!(sample_batch::<f32>(&fields, &[], 1, NoiseModel::noiseless(), 0).is_err());
    }

    #[test]
    fn derived_seeds_are_distinct_and_stable() {
        let a: Vec<u64> = (0..50)
            .map(|i| derive_seed(3, streams::TRAIN_BATCH, i))
            .collect();
        let b: HashSet<u64> = a.iter().copied().collect();
        assert_eq!(b.len(), 50);
        assert_eq!(derive_seed(3, streams::TRAIN_BATCH, 7), a[7]);
        assert_ne!(derive_seed(3, streams::VALIDATION, 7), a[7]);
    }
}
