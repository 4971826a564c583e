//! K-SVD dictionary training.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Result, SparseError};
use crate::omp::omp_gram;

/// Power iterations used for each rank-1 atom update.
const POWER_ITERS: usize = 8;

/// Patches this correlated with an atom already chosen in the same pass are
/// skipped when seeding atoms, so atoms do not start out as duplicates.
const RESEED_COHERENCE: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsvdConfig {
    /// Atom count `s`.
    pub atoms: usize,
    pub iterations: usize,
    /// Nonzeros per patch during the coding stage.
    pub sparsity: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct KsvdOutcome {
    pub dictionary: Dictionary,
    /// RMS representation error `‖X − DA‖_F / √(k·n)` after every iteration.
    pub errors: Vec<f64>,
    /// Atoms re-seeded because no patch used them.
    pub reseeded: usize,
}

/// Per-patch sparse code as `(atom, coefficient)` pairs.
type Code = Vec<(usize, f64)>;

fn residual(d: &DMatrix<f64>, x: &DVector<f64>, code: &Code) -> DVector<f64> {
    let mut r = x.clone();
    for &(j, a) in code {
        r.axpy(-a, &d.column(j), 1.0);
    }
    r
}

fn code_patch(
    d: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    dtx: DVector<f64>,
    x: &DVector<f64>,
    sparsity: usize,
    previous: &Code,
) -> Code {
    let fresh = omp_gram(gram, &dtx, x.norm_squared(), sparsity, 0.0)
        .map(|c| {
            c.support
                .iter()
                .map(|&j| (j, c.coeffs[j]))
                .collect::<Code>()
        })
        .unwrap_or_default();
    // OMP is greedy, so keep the previous code when it was better; this makes
    // the training error monotone.
    if previous.is_empty()
        || residual(d, x, &fresh).norm_squared() <= residual(d, x, previous).norm_squared()
    {
        fresh
    } else {
        previous.clone()
    }
}

/// Trains an `s`-atom dictionary on the columns of `patches` (`[k, n]`).
///
/// Atoms are initialized from `s` random, mutually non-collinear patches. Each
/// iteration sparse-codes every patch by OMP and then replaces every atom and
/// its coefficient row by the best rank-1 fit of the residual restricted to
/// the patches that use it. An atom used by no patch is re-seeded from the
/// patch with the largest current residual.
///
/// The training error is non-increasing: a patch keeps its previous code when
/// the new OMP code is worse, and every atom update is a descent step.
pub fn ksvd(patches: &DMatrix<f64>, config: &KsvdConfig) -> Result<KsvdOutcome> {
    let (k, n) = patches.shape();
    let s = config.atoms;
    if s == 0 || n < s {
        return Err(SparseError::Invalid(format!(
            "K-SVD needs 1 <= s <= n, got s={s}, n={n}"
        )));
    }
    if config.sparsity == 0 || config.sparsity > k.min(s) {
        return Err(SparseError::Invalid(format!(
            "sparsity {} must be in 1..={}",
            config.sparsity,
            k.min(s)
        )));
    }
    let columns: Vec<DVector<f64>> = patches.column_iter().map(|c| c.into_owned()).collect();
    let nonzero: Vec<usize> = (0..n).filter(|&i| columns[i].norm() > 0.0).collect();
    if nonzero.len() < s {
        return Err(SparseError::Invalid(format!(
            "only {} nonzero patches for {s} atoms",
            nonzero.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = nonzero.clone();
    order.shuffle(&mut rng);
    let mut picked: Vec<usize> = Vec::with_capacity(s);
    for &i in &order {
        if picked.len() == s {
            break;
        }
        let x = &columns[i];
        let norm = x.norm();
        if picked
            .iter()
            .all(|&p| x.dot(&columns[p]).abs() < RESEED_COHERENCE * norm * columns[p].norm())
        {
            picked.push(i);
        }
    }
    // Fewer than `s` distinct directions: fall back to repeats.
    for &i in &order {
        if picked.len() == s {
            break;
        }
        if !picked.contains(&i) {
            picked.push(i);
        }
    }
    let mut d = DMatrix::zeros(k, s);
    for (j, &i) in picked.iter().enumerate() {
        let x = &columns[i];
        d.set_column(j, &(x / x.norm()));
    }

    let mut codes: Vec<Code> = vec![Vec::new(); n];
    let mut errors = Vec::with_capacity(config.iterations);
    let mut reseeded = 0;
    for _ in 0..config.iterations {
        let gram = d.tr_mul(&d);
        let dtx = d.tr_mul(patches);
        codes = columns
            .par_iter()
            .zip(codes.par_iter())
            .enumerate()
            .map(|(i, (x, prev))| {
                code_patch(
                    &d,
                    &gram,
                    dtx.column(i).into_owned(),
                    x,
                    config.sparsity,
                    prev,
                )
            })
            .collect();

        let mut users: Vec<Vec<(usize, usize)>> = vec![Vec::new(); s];
        for (i, code) in codes.iter().enumerate() {
            for (slot, &(j, _)) in code.iter().enumerate() {
                users[j].push((i, slot));
            }
        }
        let mut residual_sq: Option<Vec<f64>> = None;
        let mut reseeds: Vec<usize> = Vec::new();

        for (j, used_by) in users.iter().enumerate() {
            if used_by.is_empty() {
                let res = residual_sq.get_or_insert_with(|| {
                    columns
                        .par_iter()
                        .zip(codes.par_iter())
                        .map(|(x, c)| residual(&d, x, c).norm_squared())
                        .collect()
                });
                let fresh = |i: usize| {
                    let x = &columns[i];
                    let norm = x.norm();
                    norm > 0.0
                        && reseeds
                            .iter()
                            .all(|&r| x.dot(&d.column(r)).abs() < RESEED_COHERENCE * norm)
                };
                let worst = (0..n)
                    .filter(|&i| fresh(i))
                    .max_by(|&a, &b| res[a].total_cmp(&res[b]));
                if let Some(i) = worst {
                    reseeds.push(j);
                    let x = &columns[i];
                    d.set_column(j, &(x / x.norm()));
                    reseeded += 1;
                }
                continue;
            }
            update_atom(&mut d, j, used_by, &columns, &mut codes);
            residual_sq = None;
        }

        let total: f64 = columns
            .par_iter()
            .zip(codes.par_iter())
            .map(|(x, c)| residual(&d, x, c).norm_squared())
            .sum();
        errors.push((total / (k * n) as f64).sqrt());
    }

    Ok(KsvdOutcome {
        dictionary: Dictionary::normalized(d)?,
        errors,
        reseeded,
    })
}

/// Rank-1 refit of atom `j` and its coefficient row on the patches using it.
///
/// Power iteration on `E Eᵀ` warm-started from the current atom never
/// increases the restricted residual, so neither does this update.
fn update_atom(
    d: &mut DMatrix<f64>,
    j: usize,
    users: &[(usize, usize)],
    columns: &[DVector<f64>],
    codes: &mut [Code],
) {
    let k = d.nrows();
    let mut e = DMatrix::zeros(k, users.len());
    for (col, &(i, _)) in users.iter().enumerate() {
        let mut r = residual(d, &columns[i], &codes[i]);
        let a = codes[i]
            .iter()
            .find(|(atom, _)| *atom == j)
            .map_or(0.0, |p| p.1);
        r.axpy(a, &d.column(j), 1.0);
        e.set_column(col, &r);
    }
    let mut atom: DVector<f64> = d.column(j).into_owned();
    let mut g = e.tr_mul(&atom);
    for _ in 0..POWER_ITERS {
        let next = &e * &g;
        let norm = next.norm();
        if norm == 0.0 {
            break;
        }
        atom = next / norm;
        g = e.tr_mul(&atom);
    }
    d.set_column(j, &atom);
    for (col, &(i, slot)) in users.iter().enumerate() {
        codes[i][slot].1 = g[col];
    }
}
