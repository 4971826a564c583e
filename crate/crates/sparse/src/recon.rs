//! Patchwise light field recovery from a coded image with a learned dictionary.

use lfcs_core::{
    stitch_patches, CodedImage, LightField, PatchSpec, RayShape, SensingTensor, Spatial,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{admm_bpdn, AdmmParams};
use crate::dictionary::Dictionary;
use crate::error::{Result, SparseError};
use crate::omp::omp;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "lowercase")]
pub enum SparseSolver {
    Omp { max_nnz: usize, residual_tol: f64 },
    Admm(AdmmParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchLayout {
    /// Square patch side in pixels.
    pub patch: usize,
    /// Pixels shared by neighbouring patches.
    pub overlap: usize,
}

impl Default for PatchLayout {
    fn default() -> Self {
        Self {
            patch: 8,
            overlap: 2,
        }
    }
}

impl PatchLayout {
    pub fn stride(&self) -> Result<usize> {
        if self.patch == 0 || self.overlap >= self.patch {
            return Err(SparseError::Invalid(format!(
                "overlap {} must be smaller than patch {}",
                self.overlap, self.patch
            )));
        }
        Ok(self.patch - self.overlap)
    }

    /// Patch dimension `k = patch² · Nv² · 3`.
    pub fn dim(&self, views: usize) -> usize {
        RayShape {
            height: self.patch,
            width: self.patch,
            views,
        }
        .len()
    }

    pub fn tiles(&self, canvas: (usize, usize)) -> Result<Vec<PatchSpec>> {
        Ok(PatchSpec::tile(
            canvas,
            (self.patch, self.patch),
            self.stride()?,
        )?)
    }
}

#[derive(Clone, Debug)]
pub struct SparseRecon {
    pub field: LightField,
    /// Tile indices whose solve failed and were filled with zeros.
    pub failed: Vec<usize>,
    /// Tiles where ADMM stopped at the iteration cap.
    pub unconverged: usize,
}

/// Effective patch system `A = Φ_patch · D` (`[pixels, s]`) built from the
/// per-pixel ray weights without forming the sparse sensing matrix.
pub fn patch_system(phi: &SensingTensor, dict: &Dictionary) -> Result<DMatrix<f64>> {
    let shape = phi.shape();
    let d = dict.atoms();
    if d.nrows() != shape.len() {
        return Err(SparseError::Dimension(format!(
            "dictionary dimension {} vs patch rays {}",
            d.nrows(),
            shape.len()
        )));
    }
    let rays = shape.rays_per_pixel();
    let att = phi.attenuation();
    let mut a = DMatrix::zeros(shape.pixels(), d.ncols());
    for p in 0..shape.pixels() {
        for r in 0..rays {
            let w = att * phi.weights()[p * rays + r] as f64;
            if w != 0.0 {
                for j in 0..d.ncols() {
                    a[(p, j)] += w * d[(p * rays + r, j)];
                }
            }
        }
    }
    Ok(a)
}

struct PatchResult {
    values: Vec<f32>,
    failed: bool,
    unconverged: bool,
}

fn solve_patch(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    dict: &Dictionary,
    solver: &SparseSolver,
) -> PatchResult {
    let (code, unconverged) = match solver {
        SparseSolver::Omp {
            max_nnz,
            residual_tol,
        } => (omp(a, y, *max_nnz, *residual_tol).map(|c| c.coeffs), false),
        SparseSolver::Admm(p) => match admm_bpdn(a, y, p) {
            Ok(o) => (Ok(o.code.coeffs), !o.converged),
            Err(e) => (Err(e), false),
        },
    };
    match code {
        Ok(alpha) => PatchResult {
            values: (dict.atoms() * alpha)
                .iter()
                .map(|&v| v.clamp(0.0, 1.0) as f32)
                .collect(),
            failed: false,
            unconverged,
        },
        Err(_) => PatchResult {
            values: vec![0.0; dict.dim()],
            failed: true,
            unconverged,
        },
    }
}

/// Recovers every overlapping tile independently by solving
/// `y_patch ≈ Φ_patch · D · α` and stitches `D · α` with mean blending.
pub fn recon_sparse(
    image: &CodedImage,
    phi: &SensingTensor,
    dict: &Dictionary,
    solver: &SparseSolver,
    layout: PatchLayout,
) -> Result<SparseRecon> {
    let shape = phi.shape();
    let canvas = shape.spatial();
    if image.spatial_dims() != canvas {
        return Err(SparseError::Dimension(format!(
            "coded image {:?} vs sensing tensor {canvas:?}",
            image.spatial_dims()
        )));
    }
    if dict.dim() != layout.dim(shape.views) {
        return Err(SparseError::Dimension(format!(
            "dictionary dimension {} does not match {}x{} patches with Nv={}",
            dict.dim(),
            layout.patch,
            layout.patch,
            shape.views
        )));
    }
    let specs = layout.tiles(canvas)?;
    let patch_shape = RayShape::new(layout.patch, layout.patch, shape.views)?;

    let results = specs
        .par_iter()
        .map(|spec| {
            let a = patch_system(&phi.extract_patch(spec)?, dict)?;
            let y = image.extract_patch(spec)?;
            let y =
                DVector::from_iterator(y.as_slice().len(), y.as_slice().iter().map(|&v| v as f64));
            Ok(solve_patch(&a, &y, dict, solver))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut failed = Vec::new();
    let mut unconverged = 0;
    let mut patches = Vec::with_capacity(specs.len());
    for (idx, (spec, r)) in specs.iter().zip(results).enumerate() {
        if r.failed {
            failed.push(idx);
        }
        unconverged += usize::from(r.unconverged);
        patches.push((LightField::from_vec(patch_shape, r.values)?, *spec));
    }
    Ok(SparseRecon {
        field: stitch_patches(&patches, canvas)?,
        failed,
        unconverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use lfcs_core::{forward, gen_sensing_tensor, matrix_form, MaskDistribution, MaskKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn patch_system_matches_dense_matrix_form() {
        let shape = RayShape::new(3, 3, 2).unwrap();
        let phi = gen_sensing_tensor(shape, MaskDistribution::new(MaskKind::Uniform, 4));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dict = Dictionary::normalized(DMatrix::from_fn(shape.len(), 20, |_, _| {
            rng.random::<f64>() - 0.3
        }))
        .unwrap();
        let a = patch_system(&phi, &dict).unwrap();
        let dense = matrix_form(&phi) * dict.atoms();
        assert!((a - dense).abs().max() < 1e-12);
    }

    #[test]
    fn layout_validation() {
        assert_eq!(PatchLayout::default().stride().unwrap(), 6);
        assert!(PatchLayout {
            patch: 4,
            overlap: 4
        }
        .stride()
        .is_err());
        assert_eq!(
            PatchLayout {
                patch: 2,
                overlap: 0
            }
            .dim(3),
            2 * 2 * 9 * 3
        );
    }

    #[test]
    fn true_patch_as_atom_is_recovered_by_one_sparse_omp() {
        let shape = RayShape::new(4, 4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let lf = LightField::from_fn(shape, |_, _, _, _, _| rng.random::<f32>());
        let phi = gen_sensing_tensor(shape, MaskDistribution::new(MaskKind::Rgbw, 2));
        let mut atoms = DMatrix::from_fn(shape.len(), 30, |_, _| rng.random::<f64>());
        atoms.set_column(
            17,
            &DVector::from_iterator(shape.len(), lf.as_slice().iter().map(|&v| v as f64)),
        );
        let dict = Dictionary::normalized(atoms).unwrap();
        let image = forward(&phi, &lf).unwrap();
        let out = recon_sparse(
            &image,
            &phi,
            &dict,
            &SparseSolver::Omp {
                max_nnz: 1,
                residual_tol: 0.0,
            },
            PatchLayout {
                patch: 4,
                overlap: 0,
            },
        )
        .unwrap();
        assert!(out.failed.is_empty());
        let err = out
            .field
            .as_slice()
            .iter()
            .zip(lf.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err < 1e-5, "{err}");
    }
}
