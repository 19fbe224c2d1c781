use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ecdf::t_l2_sorted;
use super::scorer::ScoreFunction;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShiftTestConfig {
    pub alpha: f64,
    pub n_permutations: usize,
    pub rng_seed: u64,
}

impl Default for ShiftTestConfig {
    fn default() -> Self {
        ShiftTestConfig {
            alpha: 0.05,
            n_permutations: 199,
            rng_seed: 0,
        }
    }
}

impl ShiftTestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.n_permutations == 0 {
            return Err(Error::Config("n_permutations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftVerdict<T> {
    pub p_value: f64,
    pub shift_detected: bool,
    pub t_observed: T,
}

/// Scores both batches with `scorer` and runs the permutation test on the
/// resulting scores.
pub fn permutation_test<T: Scalar, V: AsRef<[T]>>(
    scorer: &ScoreFunction<T>,
    cal_batch: &[V],
    test_batch: &[V],
    cfg: &ShiftTestConfig,
) -> Result<ShiftVerdict<T>> {
    if cal_batch.is_empty() || test_batch.is_empty() {
        return Err(Error::Empty("shift test batch"));
    }
    let cal = scorer.score_all(cal_batch);
    let test = scorer.score_all(test_batch);
    permutation_test_scores(&cal, &test, cfg)
}

/// Permutation p-value `(1 + #{k : T_k >= T_obs}) / (I + 1)` for the L2
/// distance between the two score ECDFs.
///
/// Permutations are drawn from a ChaCha stream keyed by `cfg.rng_seed`; each
/// one is a uniform shuffle of the pooled scores split back into groups of
/// the original sizes.
pub fn permutation_test_scores<T: Scalar>(
    cal_scores: &[T],
    test_scores: &[T],
    cfg: &ShiftTestConfig,
) -> Result<ShiftVerdict<T>> {
    if cal_scores.is_empty() || test_scores.is_empty() {
        return Err(Error::Empty("shift test scores"));
    }
    cfg.validate()?;
    if cal_scores.iter().chain(test_scores).any(|s| !s.is_finite()) {
        return Err(Error::InsufficientData("non-finite score".into()));
    }
    let n_cal = cal_scores.len();
    let mut pooled: Vec<T> = cal_scores.iter().chain(test_scores).copied().collect();

    let mut a = cal_scores.to_vec();
    let mut b = test_scores.to_vec();
    sort(&mut a);
    sort(&mut b);
    let t_observed = t_l2_sorted(&a, &b);

    let mut rng = substream(cfg.rng_seed, 0);
    let mut exceed = 0usize;
    for _ in 0..cfg.n_permutations {
        pooled.shuffle(&mut rng);
        let (left, right) = pooled.split_at(n_cal);
        a.copy_from_slice(left);
        b.copy_from_slice(right);
        sort(&mut a);
        sort(&mut b);
        if t_l2_sorted(&a, &b) >= t_observed {
            exceed += 1;
        }
    }
    let p_value = (1 + exceed) as f64 / (cfg.n_permutations + 1) as f64;
    Ok(ShiftVerdict {
        p_value,
        shift_detected: p_value <= cfg.alpha,
        t_observed,
    })
}

fn sort<T: Scalar>(v: &mut [T]) {
    v.sort_by(|x, y| x.partial_cmp(y).expect("finite scores"));
}
