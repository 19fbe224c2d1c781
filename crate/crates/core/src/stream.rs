//! Non-stationary labeled sample stream.
//!
//! Normal samples come from an isotropic unit Gaussian at the origin and
//! anomalies from a unit Gaussian at a fixed offset. A [`ShiftSchedule`]
//! switches the active [`Regime`] between batches; the regime's transform
//! acts on the features of a whole batch after the base draw, so the label
//! of a sample given its untransformed features never changes.

use std::fmt;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Rng};
use crate::scalar::Scalar;

const SCHEDULE_STREAM: u64 = 1;
const BOOTSTRAP_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    None,
    ShiftMean,
    Scale,
    RotatePair,
}

impl CorruptionKind {
    pub const ACTIVE: [CorruptionKind; 3] = [
        CorruptionKind::ShiftMean,
        CorruptionKind::Scale,
        CorruptionKind::RotatePair,
    ];
}

/// Severity levels that a regime may take.
pub const SEVERITIES: [u8; 3] = [0, 3, 5];

/// A covariate transform applied to every sample of a batch.
///
/// Severity 0 is the identity whatever the kind, so it is normalized to
/// `CorruptionKind::None` on construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Regime {
    kind: CorruptionKind,
    severity: u8,
}

impl Default for Regime {
    fn default() -> Self {
        Self::clean()
    }
}

impl Regime {
    pub const fn clean() -> Self {
        Regime {
            kind: CorruptionKind::None,
            severity: 0,
        }
    }

    pub fn new(kind: CorruptionKind, severity: u8) -> Result<Self> {
        if !SEVERITIES.contains(&severity) {
            return Err(Error::Config(format!(
                "severity must be one of {SEVERITIES:?}, got {severity}"
            )));
        }
        if severity == 0 || kind == CorruptionKind::None {
            return Ok(Self::clean());
        }
        Ok(Regime { kind, severity })
    }

    pub fn kind(&self) -> CorruptionKind {
        self.kind
    }

    pub fn severity(&self) -> u8 {
        self.severity
    }

    pub fn is_clean(&self) -> bool {
        self.severity == 0
    }

    /// Draws a regime: severity uniform over {0, 3, 5}, kind uniform over the
    /// active kinds.
    pub fn draw(rng: &mut Rng) -> Self {
        let severity = SEVERITIES[rng.random_range(0..SEVERITIES.len())];
        if severity == 0 {
            return Self::clean();
        }
        let kind = CorruptionKind::ACTIVE[rng.random_range(0..CorruptionKind::ACTIVE.len())];
        Regime { kind, severity }
    }

    /// Applies the transform in place. Severity 0 leaves `x` untouched.
    pub fn apply<T: Scalar>(&self, x: &mut [T], geometry: &Geometry) {
        match (self.kind, self.severity) {
            (_, 0) | (CorruptionKind::None, _) => {}
            (CorruptionKind::ShiftMean, s) => {
                let delta = T::lit(shift_magnitude(s));
                for (xi, &u) in x.iter_mut().zip(&geometry.shift_direction) {
                    *xi += delta * T::lit(u);
                }
            }
            (CorruptionKind::Scale, s) => {
                let factor = T::lit(1.0 + 0.15 * f64::from(s) / 3.0);
                for xi in x.iter_mut() {
                    *xi *= factor;
                }
            }
            (CorruptionKind::RotatePair, s) => {
                let (a, b) = geometry.rotation_pair;
                let theta = (6.0 * f64::from(s)).to_radians();
                let (sin, cos) = (T::lit(theta.sin()), T::lit(theta.cos()));
                let (xa, xb) = (x[a], x[b]);
                x[a] = cos * xa - sin * xb;
                x[b] = sin * xa + cos * xb;
            }
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{}", self.kind, self.severity)
    }
}

/// Mean offset, in units of the base standard deviation.
fn shift_magnitude(severity: u8) -> f64 {
    match severity {
        3 => 1.5,
        5 => 3.0,
        _ => 0.0,
    }
}

/// Fixed directions used by the generator and the regime transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub anomaly_mean: Vec<f64>,
    pub shift_direction: Vec<f64>,
    pub rotation_pair: (usize, usize),
}

impl Geometry {
    /// Anomalies sit at `anomaly_distance · e₀`. The mean shift moves along a
    /// unit vector in the (e₀, e₁) plane at `shift_angle_deg` from e₀, and the
    /// rotation acts on coordinates (0, 1).
    pub fn new(dim: usize, anomaly_distance: f64, shift_angle_deg: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!("feature dimension must be >= 2, got {dim}")));
        }
        let mut anomaly_mean = vec![0.0; dim];
        anomaly_mean[0] = anomaly_distance;
        let mut shift_direction = vec![0.0; dim];
        let angle = shift_angle_deg.to_radians();
        shift_direction[0] = angle.cos();
        shift_direction[1] = angle.sin();
        Ok(Geometry {
            anomaly_mean,
            shift_direction,
            rotation_pair: (0, 1),
        })
    }

    pub fn dim(&self) -> usize {
        self.anomaly_mean.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub round: usize,
    pub regime: Regime,
}

/// Ground-truth sequence of accepted shifts. Before the first entry the
/// clean regime is active.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ShiftSchedule {
    entries: Vec<ScheduleEntry>,
    n_rounds: usize,
}

#[derive(Serialize, Deserialize)]
struct ScheduleRecord {
    n_rounds: usize,
    entries: Vec<ScheduleRow>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleRow {
    round: usize,
    kind: CorruptionKind,
    severity: u8,
}

impl ShiftSchedule {
    /// A schedule with no shifts.
    pub fn stationary(n_rounds: usize) -> Self {
        ShiftSchedule {
            entries: Vec::new(),
            n_rounds,
        }
    }

    /// Validates and wraps explicit entries.
    pub fn from_entries(n_rounds: usize, entries: Vec<ScheduleEntry>, min_gap: usize) -> Result<Self> {
        let mut current = Regime::clean();
        let mut last: Option<usize> = None;
        for e in &entries {
            if e.round == 0 || e.round > n_rounds {
                return Err(Error::Config(format!("shift round {} outside 1..={n_rounds}", e.round)));
            }
            if let Some(prev) = last {
                if e.round <= prev {
                    return Err(Error::Config("shift rounds must be strictly increasing".into()));
                }
                if e.round - prev < min_gap {
                    return Err(Error::Config(format!(
                        "shifts at rounds {prev} and {} closer than {min_gap}",
                        e.round
                    )));
                }
            }
            if e.regime == current {
                return Err(Error::Config(format!("shift at round {} keeps regime {current}", e.round)));
            }
            current = e.regime;
            last = Some(e.round);
        }
        Ok(ShiftSchedule { entries, n_rounds })
    }

    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.entries
    }

    pub fn n_rounds(&self) -> usize {
        self.n_rounds
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn shift_rounds(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.round).collect()
    }

    /// Regime active at `round`: the last entry at or before it.
    pub fn regime_at(&self, round: usize) -> Regime {
        let idx = self.entries.partition_point(|e| e.round <= round);
        if idx == 0 {
            Regime::clean()
        } else {
            self.entries[idx - 1].regime
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let record = ScheduleRecord {
            n_rounds: self.n_rounds,
            entries: self
                .entries
                .iter()
                .map(|e| ScheduleRow {
                    round: e.round,
                    kind: e.regime.kind(),
                    severity: e.regime.severity(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&record)?)
    }

    /// Parses the JSON export. Gap constraints are not re-checked beyond
    /// ordering and regime changes.
    pub fn from_json(text: &str) -> Result<Self> {
        let record: ScheduleRecord = serde_json::from_str(text)?;
        let entries = record
            .entries
            .into_iter()
            .map(|r| Ok(ScheduleEntry { round: r.round, regime: Regime::new(r.kind, r.severity)? }))
            .collect::<Result<Vec<_>>>()?;
        Self::from_entries(record.n_rounds, entries, 1)
    }
}

/// Draws the shift schedule.
///
/// Every round proposes a candidate with probability `shift_prob`. A
/// candidate is accepted when at least `min_gap` rounds have passed since
/// the last accepted shift and the drawn regime differs from the active one.
/// Rejected candidates do not reset the gap counter.
pub fn build_schedule(n_rounds: usize, shift_prob: f64, min_gap: usize, rng_seed: u64) -> ShiftSchedule {
    let mut rng = substream(rng_seed, SCHEDULE_STREAM);
    let mut entries = Vec::new();
    if shift_prob.is_nan() || shift_prob <= 0.0 || min_gap == 0 {
        return ShiftSchedule { entries, n_rounds };
    }
    let mut current = Regime::clean();
    let mut last: Option<usize> = None;
    for round in 1..=n_rounds {
        if !rng.random_bool(shift_prob.min(1.0)) {
            continue;
        }
        let candidate = Regime::draw(&mut rng);
        let spaced = last.is_none_or(|l| round - l >= min_gap);
        if spaced && candidate != current {
            entries.push(ScheduleEntry { round, regime: candidate });
            current = candidate;
            last = Some(round);
        }
    }
    ShiftSchedule { entries, n_rounds }
}

/// One labeled observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub features: Vec<T>,
    pub label: u8,
    pub round: usize,
    pub index_in_batch: usize,
}

/// Access to a labeled feature vector, used by the trainer.
pub trait Labeled<T> {
    fn features(&self) -> &[T];
    fn label(&self) -> u8;
}

impl<T> Labeled<T> for Sample<T> {
    fn features(&self) -> &[T] {
        &self.features
    }
    fn label(&self) -> u8 {
        self.label
    }
}

impl<T> Labeled<T> for (Vec<T>, u8) {
    fn features(&self) -> &[T] {
        &self.0
    }
    fn label(&self) -> u8 {
        self.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub round: usize,
    pub samples: Vec<Sample<T>>,
}

impl<T> Batch<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    pub dim: usize,
    pub batch_size: usize,
    pub anomaly_rate: f64,
    pub anomaly_distance: f64,
    pub shift_angle_deg: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            dim: 16,
            batch_size: 64,
            anomaly_rate: 0.07,
            anomaly_distance: 3.0,
            shift_angle_deg: 60.0,
        }
    }
}

/// Synthetic batch source. Batch `i` is a pure function of
/// `(config, schedule, seed, i)`, so every consumer sees the same stream.
#[derive(Debug, Clone)]
pub struct StreamGenerator {
    config: StreamConfig,
    geometry: Geometry,
    schedule: ShiftSchedule,
    seed: u64,
}

impl StreamGenerator {
    pub fn new(config: StreamConfig, schedule: ShiftSchedule, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&config.anomaly_rate) {
            return Err(Error::Config(format!("anomaly_rate {} outside [0, 1]", config.anomaly_rate)));
        }
        if config.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let geometry = Geometry::new(config.dim, config.anomaly_distance, config.shift_angle_deg)?;
        Ok(StreamGenerator {
            config,
            geometry,
            schedule,
            seed,
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn schedule(&self) -> &ShiftSchedule {
        &self.schedule
    }

    /// Untransformed draw for one sample.
    fn base_sample<T: Scalar>(&self, rng: &mut Rng, label: u8) -> Vec<T> {
        let anomalous = label == 1;
        self.geometry
            .anomaly_mean
            .iter()
            .map(|&mu| {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(if anomalous { z + mu } else { z })
            })
            .collect()
    }

    /// Batch for `round` under the scheduled regime.
    pub fn next_batch<T: Scalar>(&self, round: usize) -> Batch<T> {
        self.batch_with_regime(round, self.schedule.regime_at(round))
    }

    /// Batch for `round` with an explicit regime, sharing the same base draw
    /// as [`next_batch`](Self::next_batch).
    pub fn batch_with_regime<T: Scalar>(&self, round: usize, regime: Regime) -> Batch<T> {
        // Stream ids 0..16 are reserved for non-batch draws.
        let mut rng = substream(self.seed, 16 + round as u64);
        let samples = (0..self.config.batch_size)
            .map(|j| {
                let label = u8::from(rng.random_bool(self.config.anomaly_rate));
                let mut features = self.base_sample::<T>(&mut rng, label);
                regime.apply(&mut features, &self.geometry);
                Sample {
                    features,
                    label,
                    round,
                    index_in_batch: j,
                }
            })
            .collect();
        Batch { round, samples }
    }

    /// Clean-regime labeled set with a fixed class composition, used to
    /// bootstrap the initial model.
    pub fn bootstrap_set<T: Scalar>(&self, n_normal: usize, n_anomalous: usize) -> Vec<(Vec<T>, u8)> {
        let mut rng = substream(self.seed, BOOTSTRAP_STREAM);
        let mut out = Vec::with_capacity(n_normal + n_anomalous);
        for _ in 0..n_normal {
            out.push((self.base_sample(&mut rng, 0), 0));
        }
        for _ in 0..n_anomalous {
            out.push((self.base_sample(&mut rng, 1), 1));
        }
        out
    }
}

/// Reads a feature stream from CSV: one row per sample, feature columns
/// followed by a 0/1 label column. A first row in which no field parses as
/// a number is treated as a header. Rows are cut into batches of
/// `batch_size` in file order; the last batch may be short.
pub fn ingest_stream<T: Scalar>(path: impl AsRef<Path>, batch_size: usize) -> Result<Vec<Batch<T>>> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, batch_size)
}

pub fn ingest_reader<T: Scalar, R: std::io::Read>(reader: R, batch_size: usize) -> Result<Vec<Batch<T>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<(Vec<T>, u8)> = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0 && record.iter().all(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if record.len() < 2 {
            return Err(Error::Parse {
                row: line,
                message: "need at least one feature and a label".into(),
            });
        }
        let n_features = record.len() - 1;
        match dim {
            None => dim = Some(n_features),
            Some(d) if d != n_features => {
                return Err(Error::Parse {
                    row: line,
                    message: format!("dimension mismatch: expected {d} features, found {n_features}"),
                })
            }
            _ => {}
        }
        let mut features = Vec::with_capacity(n_features);
        for (col, field) in record.iter().take(n_features).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row: line,
                message: format!("column {}: non-numeric feature {field:?}", col + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    message: format!("column {}: non-finite feature", col + 1),
                });
            }
            features.push(T::lit(v));
        }
        let label_field = &record[n_features];
        let label = match label_field.parse::<f64>() {
            Ok(0.0) => 0,
            Ok(1.0) => 1,
            _ => {
                return Err(Error::Parse {
                    row: line,
                    message: format!("label must be 0 or 1, got {label_field:?}"),
                })
            }
        };
        rows.push((features, label));
    }
    Ok(rows
        .chunks(batch_size)
        .enumerate()
        .map(|(b, chunk)| Batch {
            round: b + 1,
            samples: chunk
                .iter()
                .enumerate()
                .map(|(j, (f, l))| Sample {
                    features: f.clone(),
                    label: *l,
                    round: b + 1,
                    index_in_batch: j,
                })
                .collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generator(rate: f64, schedule: ShiftSchedule) -> StreamGenerator {
        let cfg = StreamConfig {
            anomaly_rate: rate,
            ..StreamConfig::default()
        };
        StreamGenerator::new(cfg, schedule, 7).unwrap()
    }

    #[test]
    fn zero_probability_gives_empty_schedule() {
        for seed in 0..20 {
            assert!(build_schedule(500, 0.0, 5, seed).is_empty());
        }
    }

    /// Straight re-statement of the acceptance rule used as an oracle:
    /// replay the same candidate draws and check each accept/reject.
    #[test]
    fn certain_candidates_respect_gap_grid() {
        for seed in 0..200 {
            let s = build_schedule(20, 1.0, 5, seed);
            let rounds = s.shift_rounds();
            // With a candidate every round, the first shift lands on the first
            // round whose draw is not clean, and each later one exactly
            // `min_gap` after the previous unless the draw repeats the regime.
            let mut rng = substream(seed, SCHEDULE_STREAM);
            let mut current = Regime::clean();
            let mut last: Option<usize> = None;
            let mut expected = Vec::new();
            for round in 1..=20 {
                assert!(rng.random_bool(1.0));
                let cand = Regime::draw(&mut rng);
                if last.is_none_or(|l| round - l >= 5) && cand != current {
                    expected.push(round);
                    current = cand;
                    last = Some(round);
                }
            }
            assert_eq!(rounds, expected);
            assert!(rounds.windows(2).all(|w| w[1] - w[0] >= 5));
        }
        // Some seed realizes the full grid {1, 6, 11, 16}.
        assert!((0..200).any(|seed| build_schedule(20, 1.0, 5, seed).shift_rounds() == vec![1, 6, 11, 16]));
    }

    #[test]
    fn schedule_invariants_hold() {
        for seed in 0..50 {
            let s = build_schedule(300, 0.15, 5, seed);
            let mut current = Regime::clean();
            for w in s.entries().windows(2) {
                assert!(w[1].round - w[0].round >= 5);
            }
            for e in s.entries() {
                assert_ne!(e.regime, current);
                current = e.regime;
            }
            // regime persistence
            for round in 1..=300 {
                let expected = s
                    .entries()
                    .iter()
                    .filter(|e| e.round <= round)
                    .last()
                    .map_or(Regime::clean(), |e| e.regime);
                assert_eq!(s.regime_at(round), expected);
            }
        }
    }

    #[test]
    fn long_run_shift_count_is_plausible() {
        let mean = (0..40)
            .map(|seed| build_schedule(755, 0.15, 5, seed).len() as f64)
            .sum::<f64>()
            / 40.0;
        assert!((40.0..=75.0).contains(&mean), "mean shifts {mean}");
    }

    #[test]
    fn same_seed_same_schedule() {
        assert_eq!(build_schedule(400, 0.15, 5, 3), build_schedule(400, 0.15, 5, 3));
    }

    #[test]
    fn schedule_json_round_trip() {
        let s = build_schedule(200, 0.2, 5, 11);
        let back = ShiftSchedule::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn from_entries_rejects_identity_shift() {
        let e = vec![ScheduleEntry { round: 3, regime: Regime::clean() }];
        assert!(ShiftSchedule::from_entries(10, e, 1).is_err());
    }

    #[test]
    fn zero_anomaly_rate_gives_all_normal() {
        let g = generator(0.0, ShiftSchedule::stationary(50));
        for round in 1..=50 {
            assert!(g.next_batch::<f64>(round).labels().iter().all(|&l| l == 0));
        }
    }

    #[test]
    fn clean_regime_is_exact_identity() {
        let g = generator(0.07, ShiftSchedule::stationary(10));
        let mut x = vec![0.3, -1.2, 4.0, 0.0];
        let before = x.clone();
        let geo = Geometry::new(4, 3.0, 60.0).unwrap();
        for kind in CorruptionKind::ACTIVE {
            Regime::new(kind, 0).unwrap().apply(&mut x, &geo);
        }
        assert_eq!(x, before);
        let a: Batch<f64> = g.next_batch(4);
        let b: Batch<f64> = g.batch_with_regime(4, Regime::clean());
        assert_eq!(a, b);
    }

    #[test]
    fn regime_transforms_match_definitions() {
        let geo = Geometry::new(3, 3.0, 90.0).unwrap();
        let mut x = vec![1.0f64, 0.0, 2.0];
        Regime::new(CorruptionKind::ShiftMean, 5).unwrap().apply(&mut x, &geo);
        approx::assert_abs_diff_eq!(x.as_slice(), [1.0, 3.0, 2.0].as_slice(), epsilon = 1e-12);

        let mut x = vec![1.0f64, 2.0, -1.0];
        Regime::new(CorruptionKind::Scale, 3).unwrap().apply(&mut x, &geo);
        approx::assert_abs_diff_eq!(x.as_slice(), [1.15, 2.3, -1.15].as_slice(), epsilon = 1e-12);

        let mut x = vec![1.0f64, 0.0, 5.0];
        Regime::new(CorruptionKind::RotatePair, 5).unwrap().apply(&mut x, &geo);
        let t = 30f64.to_radians();
        approx::assert_abs_diff_eq!(x.as_slice(), [t.cos(), t.sin(), 5.0].as_slice(), epsilon = 1e-12);
    }

    #[test]
    fn within_batch_regime_is_shared() {
        let entries = vec![ScheduleEntry { round: 3, regime: Regime::new(CorruptionKind::Scale, 5).unwrap() }];
        let g = generator(0.07, ShiftSchedule::from_entries(10, entries, 5).unwrap());
        let shifted: Batch<f64> = g.next_batch(3);
        let clean: Batch<f64> = g.batch_with_regime(3, Regime::clean());
        for (s, c) in shifted.samples.iter().zip(&clean.samples) {
            assert_eq!(s.label, c.label);
            for (a, b) in s.features.iter().zip(&c.features) {
                approx::assert_abs_diff_eq!(*a, b * 1.25, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn anomaly_fraction_converges() {
        let g = generator(0.07, ShiftSchedule::stationary(1000));
        let total: usize = (1..=1000)
            .map(|r| g.next_batch::<f64>(r).labels().iter().map(|&l| l as usize).sum::<usize>())
            .sum();
        let frac = total as f64 / 64_000.0;
        assert!((frac - 0.07).abs() <= 0.01, "fraction {frac}");
    }

    #[test]
    fn stream_is_reproducible() {
        let sched = build_schedule(30, 0.3, 5, 9);
        let a = generator(0.07, sched.clone());
        let b = generator(0.07, sched);
        for r in 1..=30 {
            assert_eq!(a.next_batch::<f64>(r), b.next_batch::<f64>(r));
        }
    }

    #[test]
    fn bootstrap_set_composition() {
        let g = generator(0.07, ShiftSchedule::stationary(1));
        let set = g.bootstrap_set::<f32>(100, 20);
        assert_eq!(set.iter().filter(|(_, l)| *l == 0).count(), 100);
        assert_eq!(set.iter().filter(|(_, l)| *l == 1).count(), 20);
    }

    fn csv_rows(n: usize) -> String {
        (0..n).map(|i| format!("{}.5,{},{}\n", i, -(i as i64), i % 2)).collect()
    }

    #[test]
    fn ingest_exact_multiple() {
        let batches = ingest_reader::<f64, _>(csv_rows(128).as_bytes(), 64).unwrap();
        assert_eq!(batches.iter().map(Batch::len).collect::<Vec<_>>(), vec![64, 64]);
        assert_eq!(batches[1].round, 2);
    }

    #[test]
    fn ingest_short_tail_and_header() {
        let text = format!("f1,f2,label\n{}", csv_rows(130));
        let batches = ingest_reader::<f64, _>(text.as_bytes(), 64).unwrap();
        assert_eq!(batches.iter().map(Batch::len).collect::<Vec<_>>(), vec![64, 64, 2]);
        assert_eq!(batches[0].samples[1].features, vec![1.5, -1.0]);
        assert_eq!(batches[0].samples[1].label, 1);
    }

    #[test]
    fn ingest_reports_bad_row() {
        let text = "1,2,0\n3,4,1\n5,abc,0\n";
        match ingest_reader::<f64, _>(text.as_bytes(), 2) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_reports_dimension_mismatch() {
        let text = "1,2,0\n3,4,5,1\n";
        match ingest_reader::<f64, _>(text.as_bytes(), 2) {
            Err(Error::Parse { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("dimension"));
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_bad_label() {
        assert!(ingest_reader::<f64, _>("1,2,0.5\n".as_bytes(), 2).is_err());
    }
}
