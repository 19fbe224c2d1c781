use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::server::PolicyKind;

use super::config::Seeds;

/// One per-round CSV row. Column order is the file contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub policy: PolicyKind,
    pub k_i: usize,
    pub buffer_size: usize,
    pub p_value: Option<f64>,
    pub detected: Option<bool>,
    pub t_observed: Option<f64>,
    pub testable: bool,
    pub transmitted: bool,
    pub batch_f1: f64,
    pub online_f1: f64,
}

/// End-of-run summary written as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: PolicyKind,
    pub total_rounds: usize,
    /// Downlinks over the whole run, warm-up included.
    pub total_updates: usize,
    /// Downlinks after the calibration rounds.
    pub post_calibration_updates: usize,
    pub true_shifts: usize,
    pub post_calibration_true_shifts: usize,
    /// Detection matching, over post-calibration rounds; absent when the
    /// policy did not run the shift test.
    pub true_detections: Option<usize>,
    pub false_alarms: Option<usize>,
    pub missed: Option<usize>,
    pub final_online_f1: f64,
    pub downlink_bytes: usize,
    pub uplink_samples: usize,
    pub seeds: Seeds,
}

pub fn write_trace<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceReport {
    pub rows: usize,
    pub transmissions: usize,
    pub detections: usize,
}

/// Prefix-mean tolerance for the online F1 column.
pub const ONLINE_F1_TOLERANCE: f64 = 1e-12;

/// Checks the per-row invariants of a trace.
pub fn validate_rows(rows: &[TraceRow]) -> Result<TraceReport> {
    let mut prev_online = 0.0;
    let mut report = TraceReport {
        rows: rows.len(),
        transmissions: 0,
        detections: 0,
    };
    for (i, r) in rows.iter().enumerate() {
        let n = (i + 1) as f64;
        let fail = |msg: String| Err(Error::Trace(format!("round {}: {msg}", r.round)));
        if r.round != i + 1 {
            return fail(format!("expected round {}", i + 1));
        }
        if r.policy != rows[0].policy {
            return fail("mixed policies in one trace".into());
        }
        if !(0.0..=1.0).contains(&r.batch_f1) || !(0.0..=1.0).contains(&r.online_f1) {
            return fail("F1 outside [0, 1]".into());
        }
        let residual = n * r.online_f1 - (n - 1.0) * prev_online - r.batch_f1;
        if residual.abs() > ONLINE_F1_TOLERANCE * n.max(1.0) {
            return fail(format!("online_f1 is not the running mean (residual {residual:e})"));
        }
        if r.testable != r.p_value.is_some() || r.testable != r.detected.is_some() {
            return fail("testable flag disagrees with p_value/detected".into());
        }
        if let Some(p) = r.p_value {
            if !(p > 0.0 && p <= 1.0) {
                return fail(format!("p_value {p} outside (0, 1]"));
            }
        }
        if r.k_i == 0 {
            return fail("empty uplink".into());
        }
        report.transmissions += usize::from(r.transmitted);
        report.detections += usize::from(r.detected == Some(true));
        prev_online = r.online_f1;
    }
    Ok(report)
}

pub fn validate_trace(path: impl AsRef<Path>) -> Result<TraceReport> {
    let rows = read_trace(std::fs::File::open(path)?)?;
    validate_rows(&rows)
}
