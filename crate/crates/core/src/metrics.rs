//! Per-batch macro F1, online (running-mean) F1 and detection matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a class that appears in neither truth nor prediction is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsentClass {
    /// The class contributes F1 = 1.
    #[default]
    CountAsPerfect,
    /// The class is left out of the macro average.
    Exclude,
}

/// Class F1 as the exact fraction `2tp / (2tp + fp + fn)`.
fn class_f1(truth: &[u8], pred: &[u8], class: u8) -> Option<(u128, u128)> {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&t, &p) in truth.iter().zip(pred) {
        match (t == class, p == class) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fn_ == 0 {
        return None;
    }
    // 2PR/(P+R) == 2tp / (2tp + fp + fn); zero when tp == 0.
    Some((2 * tp as u128, (2 * tp + fp + fn_) as u128))
}

/// Macro F1 over classes {0, 1} with absent classes scored as perfect.
pub fn macro_f1(truth: &[u8], pred: &[u8]) -> Result<f64> {
    macro_f1_with(truth, pred, AbsentClass::CountAsPerfect)
}

pub fn macro_f1_with(truth: &[u8], pred: &[u8], absent: AbsentClass) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("macro_f1 input"));
    }
    // Summed as an exact fraction so the result is rounded once.
    let (mut num, mut den, mut n) = (0u128, 1u128, 0u128);
    for f in [class_f1(truth, pred, 0), class_f1(truth, pred, 1)] {
        let (a, b) = match (f, absent) {
            (Some(v), _) => v,
            (None, AbsentClass::CountAsPerfect) => (1, 1),
            (None, AbsentClass::Exclude) => continue,
        };
        num = num * b + a * den;
        den *= b;
        n += 1;
    }
    Ok(num as f64 / (den * n) as f64)
}

/// Mean of the per-batch F1 history.
pub fn online_f1(history: &[f64]) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::Empty("online_f1 history"));
    }
    Ok(history.iter().sum::<f64>() / history.len() as f64)
}

/// Running mean accumulated one batch at a time.
#[derive(Debug, Clone, Default)]
pub struct OnlineF1 {
    sum: f64,
    count: usize,
}

impl OnlineF1 {
    pub fn push(&mut self, batch_f1: f64) -> f64 {
        self.sum += batch_f1;
        self.count += 1;
        self.value()
    }

    pub fn value(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub round: usize,
    pub p_value: Option<f64>,
    pub detected: bool,
    pub matched_true_shift: bool,
    pub is_false_alarm: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub true_detections: usize,
    pub false_alarms: usize,
    pub missed_shifts: usize,
}

/// Matches detections against true shift rounds.
///
/// A detection at round `i` claims the earliest still-unmatched shift in
/// `[i - window, i]`; window 0 means the shift round itself. Unclaimed
/// detections are false alarms and unclaimed shifts are misses.
pub fn match_detections(
    detections: &[(usize, bool)],
    shift_rounds: &[usize],
    window: usize,
) -> (DetectionSummary, Vec<DetectionRecord>) {
    let mut shifts = shift_rounds.to_vec();
    shifts.sort_unstable();
    let mut matched = vec![false; shifts.len()];
    let mut records = Vec::with_capacity(detections.len());
    let mut summary = DetectionSummary::default();
    for &(round, detected) in detections {
        let mut rec = DetectionRecord {
            round,
            p_value: None,
            detected,
            matched_true_shift: false,
            is_false_alarm: false,
        };
        if detected {
            let lo = round.saturating_sub(window);
            let hit = (shifts.partition_point(|&s| s < lo)..shifts.partition_point(|&s| s <= round))
                .find(|&k| !matched[k]);
            match hit {
                Some(k) => {
                    matched[k] = true;
                    rec.matched_true_shift = true;
                    summary.true_detections += 1;
                }
                None => {
                    rec.is_false_alarm = true;
                    summary.false_alarms += 1;
                }
            }
        }
        records.push(rec);
    }
    summary.missed_shifts = matched.iter().filter(|m| !**m).count();
    (summary, records)
}
