//! Orthogonal Matching Pursuit.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::dictionary::SparseCode;
use crate::error::{Result, SparseError};

/// Relative pivot below which a refit is reported as ill-conditioned.
const PIVOT_TOL: f64 = 1e-12;

/// Greedy sparse solve of `A α ≈ y`.
///
/// Each iteration adds the unused column with the largest normalized
/// correlation `|⟨a_j, r⟩| / ‖a_j‖` and refits all selected coefficients by
/// least squares. Stops after `max_nnz` atoms or once `‖r‖² ≤ residual_tol`.
pub fn omp(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    max_nnz: usize,
    residual_tol: f64,
) -> Result<SparseCode> {
    omp_trace(a, y, max_nnz, residual_tol).map(|(code, _)| code)
}

/// [`omp`] that also returns the residual norm before the first pick and
/// after every iteration.
pub fn omp_trace(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    max_nnz: usize,
    residual_tol: f64,
) -> Result<(SparseCode, Vec<f64>)> {
    let (m, s) = a.shape();
    if y.len() != m {
        return Err(SparseError::Dimension(format!(
            "A is {m}x{s} but y has {} entries",
            y.len()
        )));
    }
    if max_nnz > m.min(s) {
        return Err(SparseError::Invalid(format!(
            "max_nnz {max_nnz} exceeds min(m, s) = {}",
            m.min(s)
        )));
    }
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    if let Some(j) = norms.iter().position(|&n| n == 0.0) {
        return Err(SparseError::ZeroColumn(j));
    }

    let mut support: Vec<usize> = Vec::with_capacity(max_nnz);
    let mut used = vec![false; s];
    let mut residual = y.clone();
    let mut trace = vec![residual.norm()];
    let mut sub_coeffs = DVector::zeros(0);

    while support.len() < max_nnz && residual.norm_squared() > residual_tol {
        let corr = a.tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..s {
            if used[j] {
                continue;
            }
            let score = corr[j].abs() / norms[j];
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((j, score));
            }
        }
        let Some((j, score)) = best else { break };
        if score == 0.0 {
            break;
        }
        used[j] = true;
        support.push(j);

        let sub = a.select_columns(&support);
        let gram = sub.tr_mul(&sub);
        let chol = Cholesky::new(gram.clone()).ok_or_else(|| SparseError::IllConditioned {
            support: support.clone(),
        })?;
        let l = chol.l();
        let scale = gram.diagonal().max();
        if (0..support.len()).any(|i| l[(i, i)] * l[(i, i)] < PIVOT_TOL * scale) {
            return Err(SparseError::IllConditioned { support });
        }
        sub_coeffs = chol.solve(&sub.tr_mul(y));
        residual = y - &sub * &sub_coeffs;
        trace.push(residual.norm());
    }

    let mut coeffs = DVector::zeros(s);
    for (k, &j) in support.iter().enumerate() {
        coeffs[j] = sub_coeffs[k];
    }
    Ok((SparseCode { coeffs, support }, trace))
}

/// OMP driven by precomputed `G = AᵀA` and `Aᵀy`, for coding many signals
/// against the same matrix. Selection and refits are identical to [`omp`].
pub fn omp_gram(
    gram: &DMatrix<f64>,
    aty: &DVector<f64>,
    y_norm_sq: f64,
    max_nnz: usize,
    residual_tol: f64,
) -> Result<SparseCode> {
    let s = gram.nrows();
    if gram.ncols() != s || aty.len() != s {
        return Err(SparseError::Dimension(format!(
            "Gram matrix is {}x{} but Aᵀy has {} entries",
            gram.nrows(),
            gram.ncols(),
            aty.len()
        )));
    }
    if max_nnz > s {
        return Err(SparseError::Invalid(format!(
            "max_nnz {max_nnz} exceeds s = {s}"
        )));
    }
    if let Some(j) = (0..s).find(|&j| gram[(j, j)] <= 0.0) {
        return Err(SparseError::ZeroColumn(j));
    }

    let mut support: Vec<usize> = Vec::with_capacity(max_nnz);
    let mut used = vec![false; s];
    let mut corr = aty.clone();
    let mut sub_coeffs = DVector::zeros(0);
    let mut residual_sq = y_norm_sq;

    while support.len() < max_nnz && residual_sq > residual_tol {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..s {
            if used[j] {
                continue;
            }
            let score = corr[j].abs() / gram[(j, j)].sqrt();
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((j, score));
            }
        }
        let Some((j, score)) = best else { break };
        if score == 0.0 {
            break;
        }
        used[j] = true;
        support.push(j);

        let sub_gram = gram.select_rows(&support).select_columns(&support);
        let chol = Cholesky::new(sub_gram.clone()).ok_or_else(|| SparseError::IllConditioned {
            support: support.clone(),
        })?;
        let l = chol.l();
        let scale = sub_gram.diagonal().max();
        if (0..support.len()).any(|i| l[(i, i)] * l[(i, i)] < PIVOT_TOL * scale) {
            return Err(SparseError::IllConditioned { support });
        }
        let rhs = aty.select_rows(&support);
        sub_coeffs = chol.solve(&rhs);
        corr = aty - gram.select_columns(&support) * &sub_coeffs;
        residual_sq = y_norm_sq - sub_coeffs.dot(&rhs);
    }

    let mut coeffs = DVector::zeros(s);
    for (k, &j) in support.iter().enumerate() {
        coeffs[j] = sub_coeffs[k];
    }
    Ok(SparseCode { coeffs, support })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identity_one_sparse() {
        let a = DMatrix::identity(4, 4);
        let y = DVector::from_vec(vec![0.0, 3.0, 0.0, 0.0]);
        let code = omp(&a, &y, 1, 0.0).unwrap();
        assert_eq!(code.coeffs, y);
        assert_eq!(code.support, vec![1]);
    }

    #[test]
    fn orthonormal_two_sparse_exact() {
        // Rotation matrices are orthonormal.
        let (c, s) = (0.6f64, 0.8f64);
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, c, -s, 0.0, 0.0, s, c,
            ],
        );
        let alpha0 = DVector::from_vec(vec![0.0, 1.5, -2.0, 0.0]);
        let code = omp(&a, &(&a * &alpha0), 2, 0.0).unwrap();
        assert!((code.coeffs - alpha0).norm() < 1e-12);
    }

    #[test]
    fn stops_on_residual_tolerance() {
        let a = DMatrix::identity(3, 3);
        let y = DVector::from_vec(vec![1.0, 0.01, 0.0]);
        let code = omp(&a, &y, 3, 1e-3).unwrap();
        assert_eq!(code.support, vec![0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            omp(&a, &y, 1, 0.0),
            Err(SparseError::ZeroColumn(1))
        ));
        assert!(omp(&DMatrix::identity(2, 2), &y, 3, 0.0).is_err());
        assert!(omp(&DMatrix::identity(3, 3), &y, 1, 0.0).is_err());
    }

    #[test]
    fn duplicate_columns_are_ill_conditioned() {
        let a = DMatrix::from_column_slice(3, 3, &[1.0, 0.0, 0.0, 1.0, 1e-9, 0.0, 0.0, 0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        assert!(matches!(
            omp(&a, &y, 2, 0.0),
            Err(SparseError::IllConditioned { .. })
        ));
    }

    #[test]
    fn gram_variant_matches_plain_omp() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = DMatrix::from_fn(15, 40, |_, _| rng.sample::<f64, _>(StandardNormal));
        for _ in 0..20 {
            let y = DVector::from_fn(15, |_, _| rng.sample::<f64, _>(StandardNormal));
            let plain = omp(&a, &y, 5, 1e-9).unwrap();
            let fast = omp_gram(&a.tr_mul(&a), &a.tr_mul(&y), y.norm_squared(), 5, 1e-9).unwrap();
            assert_eq!(plain.support, fast.support);
            assert!((plain.coeffs - fast.coeffs).norm() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn residual_decreases_and_atoms_are_unique(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(12, 30, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = DVector::from_fn(12, |_, _| rng.random::<f64>() - 0.5);
            let (code, trace) = omp_trace(&a, &y, 6, 0.0).unwrap();
            let mut sorted = code.support.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), code.support.len());
            for w in trace.windows(2) {
                prop_assert!(w[1] < w[0]);
            }
            prop_assert!(code.is_consistent());
        }
    }
}
