use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::mix;
use crate::shiftdetect::{fit_scorer, permutation_test, ShiftTestConfig};
use crate::stream::{Batch, ShiftSchedule, StreamGenerator};

use super::config::ExperimentConfig;

pub const MIN_NULL_TRIALS: usize = 100;

/// Empirical level of the shift test under no shift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullTestReport {
    pub trials: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    /// 95% Wilson score interval for the rejection probability.
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
    pub n_permutations: usize,
    /// Rejections at the smallest attainable p-value, `1 / (I + 1)`.
    pub rejections_at_floor: usize,
}

impl NullTestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Each trial draws three clean batches from a fresh stream: one fits the
/// scorer, the other two are the calibration and test batches.
pub fn nulltest(config: &ExperimentConfig, n_trials: usize) -> Result<NullTestReport> {
    if n_trials < MIN_NULL_TRIALS {
        return Err(Error::Config(format!("nulltest needs at least {MIN_NULL_TRIALS} trials")));
    }
    config.validate()?;
    let mut rejections = 0;
    let mut at_floor = 0;
    let floor = 1.0 / (config.n_permutations + 1) as f64;
    for trial in 0..n_trials as u64 {
        let gen = StreamGenerator::new(
            config.stream_config(),
            ShiftSchedule::stationary(3),
            mix(config.seeds.stream, trial),
        )?;
        let features = |b: Batch<f64>| -> Vec<Vec<f64>> { b.samples.into_iter().map(|s| s.features).collect() };
        let train = features(gen.next_batch(1));
        let cal = features(gen.next_batch(2));
        let test = features(gen.next_batch(3));
        let scorer = fit_scorer(config.scorer, &train)?;
        let cfg = ShiftTestConfig {
            rng_seed: mix(config.seeds.detector, trial),
            ..config.detector()
        };
        let v = permutation_test(&scorer, &cal, &test, &cfg)?;
        if v.shift_detected {
            rejections += 1;
            if v.p_value <= floor {
                at_floor += 1;
            }
        }
    }
    let rate = rejections as f64 / n_trials as f64;
    let (ci_low, ci_high) = wilson_interval(rejections, n_trials, 1.959_963_984_540_054);
    Ok(NullTestReport {
        trials: n_trials,
        rejections,
        rejection_rate: rate,
        ci_low,
        ci_high,
        alpha: config.alpha,
        n_permutations: config.n_permutations,
        rejections_at_floor: at_floor,
    })
}

fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_trials_is_error() {
        assert!(nulltest(&ExperimentConfig::default(), 99).is_err());
    }

    #[test]
    fn wilson_brackets_estimate() {
        let (lo, hi) = wilson_interval(50, 1000, 1.96);
        assert!(lo < 0.05 && hi > 0.05);
        assert!((lo - 0.0382).abs() < 1e-3 && (hi - 0.0653).abs() < 1e-3);
        assert_eq!(wilson_interval(0, 100, 1.96).0, 0.0);
    }

    #[test]
    fn minimal_alpha_rejects_only_at_floor() {
        let cfg = ExperimentConfig {
            alpha: 1.0 / 200.0,
            ..ExperimentConfig::default()
        };
        let r = nulltest(&cfg, 150).unwrap();
        assert_eq!(r.rejections, r.rejections_at_floor);
    }

    #[test]
    fn report_is_reproducible() {
        let cfg = ExperimentConfig::default();
        assert_eq!(nulltest(&cfg, 100).unwrap(), nulltest(&cfg, 100).unwrap());
    }
}
