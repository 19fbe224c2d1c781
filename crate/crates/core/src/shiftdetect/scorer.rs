use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sq_dist, Scalar};

/// Largest number of training points used for the median-distance
/// bandwidth. Larger sets are subsampled at a fixed stride.
pub const MEDIAN_SUBSAMPLE: usize = 1000;

pub const MAHALANOBIS_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    #[default]
    KernelMean,
    Mahalanobis,
}

/// Fitted one-class novelty score; larger means more novel.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreFunction<T> {
    KernelMean(KernelMeanScorer<T>),
    Mahalanobis(MahalanobisScorer<T>),
}

impl<T: Scalar> ScoreFunction<T> {
    pub fn score(&self, x: &[T]) -> T {
        match self {
            ScoreFunction::KernelMean(s) => s.score(x),
            ScoreFunction::Mahalanobis(s) => s.score(x),
        }
    }

    pub fn score_all<V: AsRef<[T]>>(&self, xs: &[V]) -> Vec<T> {
        xs.iter().map(|x| self.score(x.as_ref())).collect()
    }
}

pub fn fit_scorer<T: Scalar, V: AsRef<[T]>>(kind: ScorerKind, training: &[V]) -> Result<ScoreFunction<T>> {
    Ok(match kind {
        ScorerKind::KernelMean => ScoreFunction::KernelMean(KernelMeanScorer::fit(training)?),
        ScorerKind::Mahalanobis => ScoreFunction::Mahalanobis(MahalanobisScorer::fit(training)?),
    })
}

fn check_training<T, V: AsRef<[T]>>(training: &[V]) -> Result<usize> {
    if training.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "scorer needs at least 2 training points, got {}",
            training.len()
        )));
    }
    let dim = training[0].as_ref().len();
    if let Some(bad) = training.iter().find(|x| x.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.as_ref().len(),
        });
    }
    Ok(dim)
}

/// Negative mean RBF similarity to the training set:
/// `s(x) = -(1/n) Σ exp(-|x - x_t|² / (2h²))`, with `h` the median pairwise
/// distance of the training set (or 1 if that median is 0).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMeanScorer<T> {
    points: Vec<Vec<T>>,
    bandwidth: T,
}

impl<T: Scalar> KernelMeanScorer<T> {
    pub fn fit<V: AsRef<[T]>>(training: &[V]) -> Result<Self> {
        check_training(training)?;
        let points: Vec<Vec<T>> = training.iter().map(|x| x.as_ref().to_vec()).collect();
        let h = median_pairwise_distance(&points);
        let bandwidth = if h > T::zero() && h.is_finite() { h } else { T::one() };
        Ok(KernelMeanScorer { points, bandwidth })
    }

    pub fn with_bandwidth<V: AsRef<[T]>>(training: &[V], bandwidth: T) -> Result<Self> {
        check_training(training)?;
        Ok(KernelMeanScorer {
            points: training.iter().map(|x| x.as_ref().to_vec()).collect(),
            bandwidth,
        })
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn score(&self, x: &[T]) -> T {
        let denom = T::lit(2.0) * self.bandwidth * self.bandwidth;
        let total: T = self.points.iter().map(|p| (-sq_dist(x, p) / denom).exp()).sum();
        -total / T::from_usize_lossy(self.points.len())
    }
}

fn median_pairwise_distance<T: Scalar>(points: &[Vec<T>]) -> T {
    let stride = points.len().div_ceil(MEDIAN_SUBSAMPLE).max(1);
    let sub: Vec<&Vec<T>> = points.iter().step_by(stride).collect();
    let mut d: Vec<T> = Vec::with_capacity(sub.len() * (sub.len().saturating_sub(1)) / 2);
    for (i, a) in sub.iter().enumerate() {
        for b in &sub[i + 1..] {
            d.push(sq_dist(a, b).sqrt());
        }
    }
    if d.is_empty() {
        return T::zero();
    }
    let cmp = |x: &T, y: &T| x.partial_cmp(y).expect("finite distances");
    let mid = d.len() / 2;
    let (_, &mut upper, _) = d.select_nth_unstable_by(mid, cmp);
    if d.len() % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(T::neg_infinity(), T::max);
        (lower + upper) / T::lit(2.0)
    }
}

/// `(x - μ)ᵀ (Σ + λI)⁻¹ (x - μ)` with the sample mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisScorer<T> {
    mean: Vec<T>,
    /// Lower Cholesky factor of `Σ + λI`, row-major.
    chol: Vec<T>,
}

impl<T: Scalar> MahalanobisScorer<T> {
    pub fn fit<V: AsRef<[T]>>(training: &[V]) -> Result<Self> {
        let dim = check_training(training)?;
        let n = T::from_usize_lossy(training.len());
        let mut mean = vec![T::zero(); dim];
        for x in training {
            for (m, &v) in mean.iter_mut().zip(x.as_ref()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut cov = vec![T::zero(); dim * dim];
        for x in training {
            let x = x.as_ref();
            for i in 0..dim {
                let di = x[i] - mean[i];
                for j in 0..=i {
                    cov[i * dim + j] += di * (x[j] - mean[j]);
                }
            }
        }
        let denom = n - T::one();
        for i in 0..dim {
            for j in 0..=i {
                let v = cov[i * dim + j] / denom;
                cov[i * dim + j] = v;
                cov[j * dim + i] = v;
            }
        }
        Self::from_moments(mean, &cov, T::lit(MAHALANOBIS_RIDGE))
    }

    /// Builds the scorer from an explicit mean and row-major covariance.
    pub fn from_moments(mean: Vec<T>, cov: &[T], ridge: T) -> Result<Self> {
        let dim = mean.len();
        if cov.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: cov.len(),
            });
        }
        let mut a = cov.to_vec();
        for i in 0..dim {
            a[i * dim + i] += ridge;
        }
        let chol = cholesky(&a, dim)
            .ok_or_else(|| Error::InsufficientData("covariance is not positive definite".into()))?;
        Ok(MahalanobisScorer { mean, chol })
    }

    pub fn score(&self, x: &[T]) -> T {
        let dim = self.mean.len();
        // Forward substitution: L y = x - μ; score = |y|².
        let mut y = vec![T::zero(); dim];
        for i in 0..dim {
            let mut s = x[i] - self.mean[i];
            for (k, &yk) in y[..i].iter().enumerate() {
                s -= self.chol[i * dim + k] * yk;
            }
            y[i] = s / self.chol[i * dim + i];
        }
        y.iter().map(|&v| v * v).sum()
    }
}

fn cholesky<T: Scalar>(a: &[T], dim: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = a[i * dim + j];
            for k in 0..j {
                s -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if s.is_nan() || s <= T::zero() {
                    return None;
                }
                l[i * dim + i] = s.sqrt();
            } else {
                l[i * dim + j] = s / l[j * dim + j];
            }
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng as _;

    fn cloud(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = substream(seed, 0);
        (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn needs_two_points() {
        let one = vec![vec![1.0, 2.0]];
        assert!(matches!(fit_scorer::<f64, _>(ScorerKind::KernelMean, &one), Err(Error::InsufficientData(_))));
        assert!(fit_scorer::<f64, _>(ScorerKind::Mahalanobis, &one).is_err());
    }

    #[test]
    fn zero_median_distance_falls_back_to_unit_bandwidth() {
        let same = vec![vec![0.5, 0.5]; 5];
        let s = KernelMeanScorer::<f64>::fit(&same).unwrap();
        assert_eq!(s.bandwidth(), 1.0);
    }

    #[test]
    fn median_bandwidth_small_set() {
        // Pairwise distances 1, 2, 3 -> median 2.
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        assert!((KernelMeanScorer::<f64>::fit(&pts).unwrap().bandwidth() - 2.0).abs() < 1e-12);
        // Distances 1, 1, 2, 2, 3, 4 -> median of middle pair (2, 2) = 2.
        let pts = vec![vec![0.0], vec![1.0], vec![2.0], vec![4.0]];
        assert!((KernelMeanScorer::<f64>::fit(&pts).unwrap().bandwidth() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_score_is_locally_minimal_at_isolated_point() {
        // One training point at the origin dominates near itself.
        let pts = vec![vec![0.0, 0.0], vec![50.0, 50.0]];
        let s = KernelMeanScorer::<f64>::with_bandwidth(&pts, 1.0).unwrap();
        let at = s.score(&[0.0, 0.0]);
        let mut rng = substream(3, 3);
        for _ in 0..500 {
            let x = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            assert!(s.score(&x) >= at);
        }
    }

    #[test]
    fn kernel_scores_far_points_as_novel() {
        let train = cloud(1, 200, 3);
        let s = fit_scorer::<f64, _>(ScorerKind::KernelMean, &train).unwrap();
        assert!(s.score(&[5.0, 5.0, 5.0]) > s.score(&[0.0, 0.0, 0.0]));
        assert!(s.score(&[0.0, 0.0, 0.0]) < 0.0);
    }

    #[test]
    fn mahalanobis_identity_covariance() {
        let mean: Vec<f64> = vec![1.0, -1.0, 0.0];
        let eye = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let s = MahalanobisScorer::from_moments(mean.clone(), &eye, 0.0).unwrap();
        assert_eq!(s.score(&mean), 0.0);
        assert!((s.score(&[4.0, 3.0, 0.0]) - 25.0).abs() < 1e-12);
        let ridged = MahalanobisScorer::from_moments(mean, &eye, 1e-6).unwrap();
        assert!((ridged.score(&[4.0, 3.0, 0.0]) - 25.0).abs() < 1e-4);
    }

    #[test]
    fn mahalanobis_matches_explicit_inverse_in_2d() {
        let cov: [f64; 4] = [2.0, 0.5, 0.5, 1.0];
        let s = MahalanobisScorer::from_moments(vec![0.0, 0.0], &cov, 0.0).unwrap();
        let det = 2.0 - 0.25;
        let inv = [1.0 / det, -0.5 / det, -0.5 / det, 2.0 / det];
        let x = [1.3, -0.7];
        let expected = x[0] * (inv[0] * x[0] + inv[1] * x[1]) + x[1] * (inv[2] * x[0] + inv[3] * x[1]);
        assert!((s.score(&x) - expected).abs() < 1e-12);
    }

    #[test]
    fn fitted_mahalanobis_is_zero_at_mean() {
        let train = cloud(2, 100, 4);
        let s = MahalanobisScorer::fit(&train).unwrap();
        let mut mean = vec![0.0; 4];
        for x in &train {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / 100.0;
            }
        }
        assert!(s.score(&mean).abs() < 1e-12);
    }
}
