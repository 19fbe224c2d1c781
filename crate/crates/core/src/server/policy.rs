use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Policy names as used in configuration files and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Oclads,
    AllUpdate,
    RandomUpdate,
    OracleOclads,
    NoUpdate,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Oclads,
        PolicyKind::AllUpdate,
        PolicyKind::RandomUpdate,
        PolicyKind::OracleOclads,
        PolicyKind::NoUpdate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Oclads => "oclads",
            PolicyKind::AllUpdate => "all-update",
            PolicyKind::RandomUpdate => "random-update",
            PolicyKind::OracleOclads => "oracle-oclads",
            PolicyKind::NoUpdate => "no-update",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy {s:?}")))
    }
}

/// When the server transmits its retrained model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UpdatePolicy {
    /// After a detected shift.
    Oclads,
    /// Every round.
    AllUpdate,
    /// At pre-drawn rounds.
    RandomUpdate(BTreeSet<usize>),
    /// At the true shift rounds.
    OracleOclads(BTreeSet<usize>),
    NoUpdate,
}

impl UpdatePolicy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            UpdatePolicy::Oclads => PolicyKind::Oclads,
            UpdatePolicy::AllUpdate => PolicyKind::AllUpdate,
            UpdatePolicy::RandomUpdate(_) => PolicyKind::RandomUpdate,
            UpdatePolicy::OracleOclads(_) => PolicyKind::OracleOclads,
            UpdatePolicy::NoUpdate => PolicyKind::NoUpdate,
        }
    }

    /// Transmission decision for `round`. Every policy except `NoUpdate`
    /// and `AllUpdate` transmits during the calibration warm-up.
    pub fn transmits(&self, round: usize, calibration_rounds: usize, shift_detected: bool) -> bool {
        let warm_up = round <= calibration_rounds;
        match self {
            UpdatePolicy::Oclads => warm_up || shift_detected,
            UpdatePolicy::AllUpdate => true,
            UpdatePolicy::RandomUpdate(rounds) | UpdatePolicy::OracleOclads(rounds) => {
                warm_up || rounds.contains(&round)
            }
            UpdatePolicy::NoUpdate => false,
        }
    }
}

/// Spreads `n_updates` transmissions over rounds `(calibration_rounds, n_rounds]`.
///
/// The range is cut into `n_updates` equal segments; each contributes one
/// round drawn from a Gaussian centred on the segment midpoint with
/// standard deviation a quarter of the segment length, rounded and clamped
/// into the segment. A round already taken is replaced by the nearest free
/// round (lower one on ties).
pub fn make_random_schedule(
    n_rounds: usize,
    n_updates: usize,
    calibration_rounds: usize,
    rng: &mut Rng,
) -> Result<BTreeSet<usize>> {
    let available = n_rounds.saturating_sub(calibration_rounds);
    if n_updates > available {
        return Err(Error::Infeasible(format!(
            "{n_updates} updates requested but only {available} post-calibration rounds"
        )));
    }
    let mut chosen = BTreeSet::new();
    if n_updates == 0 {
        return Ok(chosen);
    }
    let first = calibration_rounds + 1;
    let seg_len = available as f64 / n_updates as f64;
    for k in 0..n_updates {
        let start = calibration_rounds as f64 + k as f64 * seg_len;
        let end = start + seg_len;
        // Integer rounds inside (start, end].
        let lo = (start.floor() as usize + 1).max(first);
        let hi = (end.floor() as usize).clamp(lo, n_rounds);
        let mid = (start + end) / 2.0 + 0.5;
        let normal = Normal::new(mid, seg_len / 4.0).expect("positive spread");
        let draw = normal.sample(rng).round();
        let round = (draw.max(lo as f64) as usize).clamp(lo, hi);
        let round = nearest_free(&chosen, round, first, n_rounds);
        chosen.insert(round);
    }
    Ok(chosen)
}

fn nearest_free(taken: &BTreeSet<usize>, target: usize, lo: usize, hi: usize) -> usize {
    if !taken.contains(&target) {
        return target;
    }
    for d in 1..=(hi - lo) {
        if target >= lo + d && !taken.contains(&(target - d)) {
            return target - d;
        }
        if target + d <= hi && !taken.contains(&(target + d)) {
            return target + d;
        }
    }
    unreachable!("n_updates bounded by available rounds")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn full_budget_selects_every_round() {
        let s = make_random_schedule(50, 40, 10, &mut substream(1, 1)).unwrap();
        assert_eq!(s, (11..=50).collect());
    }

    #[test]
    fn empty_budget() {
        assert!(make_random_schedule(50, 0, 10, &mut substream(1, 1)).unwrap().is_empty());
    }

    #[test]
    fn infeasible_budget() {
        assert!(matches!(
            make_random_schedule(50, 41, 10, &mut substream(1, 1)),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn deterministic_and_well_formed() {
        for seed in 0..100u64 {
            let n = 5 + (seed as usize % 60);
            let a = make_random_schedule(400, n, 10, &mut substream(seed, 7)).unwrap();
            let b = make_random_schedule(400, n, 10, &mut substream(seed, 7)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), n);
            assert!(a.iter().all(|&r| (11..=400).contains(&r)));
        }
    }

    #[test]
    fn one_update_per_segment_when_sparse() {
        let s: Vec<usize> = make_random_schedule(410, 4, 10, &mut substream(3, 3)).unwrap().into_iter().collect();
        for (k, r) in s.iter().enumerate() {
            assert!((10 + k * 100 + 1..=10 + (k + 1) * 100).contains(r), "{s:?}");
        }
    }

    #[test]
    fn transmission_rules() {
        let rounds: BTreeSet<usize> = [12, 30].into_iter().collect();
        let oracle = UpdatePolicy::OracleOclads(rounds);
        let sent: Vec<usize> = (1..=40).filter(|&r| oracle.transmits(r, 10, false)).collect();
        let mut expected: Vec<usize> = (1..=10).collect();
        expected.extend([12, 30]);
        assert_eq!(sent, expected);
        assert!(!UpdatePolicy::NoUpdate.transmits(3, 10, true));
        assert!(UpdatePolicy::AllUpdate.transmits(300, 10, false));
        assert!(UpdatePolicy::Oclads.transmits(20, 10, true));
        assert!(!UpdatePolicy::Oclads.transmits(20, 10, false));
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.name().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("sometimes".parse::<PolicyKind>().is_err());
    }
}
