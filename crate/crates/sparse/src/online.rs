//! Online dictionary learning with accumulated sufficient statistics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::admm::{admm_bpdn, AdmmParams};
use crate::dictionary::Dictionary;
use crate::error::{Result, SparseError};

/// Diagonal entries of `A` below this leave the corresponding atom untouched.
const MIN_USAGE: f64 = 1e-12;

/// Mini-batch learner: codes each batch by BPDN, accumulates
/// `A += Σ ααᵀ` and `B += Σ xαᵀ`, then sweeps the atoms once with block
/// coordinate descent on `½ tr(DᵀDA) − tr(DᵀB)`.
#[derive(Clone, Debug)]
pub struct OnlineDictLearner {
    dict: Dictionary,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    params: AdmmParams,
    steps: usize,
}

impl OnlineDictLearner {
    pub fn new(d0: Dictionary, params: AdmmParams) -> Self {
        let (k, s) = d0.atoms().shape();
        Self {
            dict: d0,
            a: DMatrix::zeros(s, s),
            b: DMatrix::zeros(k, s),
            params,
            steps: 0,
        }
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    pub fn into_dictionary(self) -> Dictionary {
        self.dict
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Consumes one mini-batch `[k, m]`.
    pub fn step(&mut self, batch: &DMatrix<f64>) -> Result<()> {
        let (k, s) = self.dict.atoms().shape();
        if batch.nrows() != k {
            return Err(SparseError::Dimension(format!(
                "batch rows {} vs dictionary dimension {k}",
                batch.nrows()
            )));
        }
        let d = self.dict.atoms();
        let columns: Vec<DVector<f64>> = batch.column_iter().map(|c| c.into_owned()).collect();
        let codes = columns
            .par_iter()
            .map(|x| admm_bpdn(d, x, &self.params).map(|o| o.code.coeffs))
            .collect::<Result<Vec<_>>>()?;
        for (x, alpha) in columns.iter().zip(&codes) {
            self.a.ger(1.0, alpha, alpha, 1.0);
            self.b.ger(1.0, x, alpha, 1.0);
        }

        let d = self.dict.atoms_mut();
        for j in 0..s {
            let ajj = self.a[(j, j)];
            if ajj < MIN_USAGE {
                continue;
            }
            let mut u = (self.b.column(j) - &*d * self.a.column(j)) / ajj;
            u += d.column(j);
            let norm = u.norm();
            if norm > 0.0 {
                d.set_column(j, &(u / norm));
            }
        }
        self.steps += 1;
        Ok(())
    }
}

/// Runs `steps` mini-batches from `stream` starting at `d0`.
pub fn online_dict_learn<I>(
    stream: I,
    d0: Dictionary,
    steps: usize,
    params: AdmmParams,
) -> Result<Dictionary>
where
    I: IntoIterator<Item = DMatrix<f64>>,
{
    let mut learner = OnlineDictLearner::new(d0, params);
    for batch in stream.into_iter().take(steps) {
        learner.step(&batch)?;
    }
    Ok(learner.into_dictionary())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_dict(k: usize, s: usize, seed: u64) -> Dictionary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dictionary::normalized(DMatrix::from_fn(k, s, |_, _| {
            StandardNormal.sample(&mut rng)
        }))
        .unwrap()
    }

    #[test]
    fn zero_steps_returns_the_initial_dictionary() {
        let d0 = random_dict(6, 10, 1);
        let batches = std::iter::repeat_with(|| DMatrix::from_element(6, 4, 1.0));
        let d = online_dict_learn(batches, d0.clone(), 0, AdmmParams::default()).unwrap();
        assert_eq!(d, d0);
    }

    #[test]
    fn columns_stay_unit_norm_after_every_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut learner = OnlineDictLearner::new(
            random_dict(8, 16, 3),
            AdmmParams {
                lambda: 0.05,
                ..Default::default()
            },
        );
        for _ in 0..5 {
            let batch = DMatrix::from_fn(8, 6, |_, _| StandardNormal.sample(&mut rng));
            learner.step(&batch).unwrap();
            assert!(learner.dictionary().max_norm_error() < 1e-6);
        }
        assert_eq!(learner.steps(), 5);
    }

    #[test]
    fn rejects_mismatched_batches() {
        let mut learner = OnlineDictLearner::new(random_dict(4, 6, 0), AdmmParams::default());
        assert!(learner.step(&DMatrix::zeros(5, 2)).is_err());
    }
}
