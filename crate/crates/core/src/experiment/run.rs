use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::device::{DeviceState, UplinkPayload};
use crate::error::{Error, Result};
use crate::metrics::{macro_f1_with, match_detections, OnlineF1};
use crate::model::{bootstrap_finetune, ModelParams};
use crate::rng::{mix, substream};
use crate::server::{make_random_schedule, PolicyKind, ServerState, UpdatePolicy};
use crate::stream::{build_schedule, Batch, ShiftSchedule, StreamGenerator};

use super::config::ExperimentConfig;
use super::trace::{write_trace, RunSummary, TraceRow};

const RANDOM_SCHEDULE_STREAM: u64 = 5;

/// Transport between device and server. Both directions are lossless in
/// the simulator; the counters feed the run summary.
#[derive(Debug, Default, Clone)]
pub struct Channel {
    pub uplink_samples: usize,
    pub downlink_bytes: usize,
}

impl Channel {
    pub fn uplink<T>(&mut self, payload: UplinkPayload<T>) -> UplinkPayload<T> {
        self.uplink_samples += payload.selected.len();
        payload
    }

    pub fn downlink(&mut self, model: String) -> String {
        self.downlink_bytes += model.len();
        model
    }
}

enum Source {
    Synthetic(StreamGenerator),
    Recorded(Vec<Batch<f64>>),
}

/// A configured experiment: stream, shift schedule and the bootstrapped
/// initial model shared by every policy.
pub struct Experiment {
    config: ExperimentConfig,
    source: Source,
    schedule: ShiftSchedule,
    initial_model: ModelParams<f64>,
}

/// Trace and summary of one policy run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub trace: Vec<TraceRow>,
    pub summary: RunSummary,
}

impl RunArtifacts {
    pub fn policy(&self) -> PolicyKind {
        self.summary.policy
    }

    pub fn trace_csv(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_trace(&self.trace, &mut buf)?;
        Ok(buf)
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes") + "\n"
    }

    /// Writes `trace_<policy>.csv` and `summary_<policy>.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("trace_{}.csv", self.policy())), self.trace_csv()?)?;
        fs::write(dir.join(format!("summary_{}.json", self.policy())), self.summary_json())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub summaries: Vec<RunSummary>,
    #[serde(skip)]
    pub runs: Vec<RunArtifacts>,
}

impl Comparison {
    pub fn run(&self, policy: PolicyKind) -> Option<&RunArtifacts> {
        self.runs.iter().find(|r| r.policy() == policy)
    }

    /// Online F1 per round, one column per policy.
    pub fn trajectories_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["round".to_string()];
        header.extend(self.runs.iter().map(|r| format!("{}_online_f1", r.policy())));
        w.write_record(&header)?;
        let n = self.runs.first().map_or(0, |r| r.trace.len());
        for i in 0..n {
            let mut rec = vec![(i + 1).to_string()];
            rec.extend(self.runs.iter().map(|r| r.trace[i].online_f1.to_string()));
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes") + "\n"
    }

    /// Per-policy files plus `comparison.csv` and `comparison.json`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for r in &self.runs {
            r.write(dir)?;
        }
        fs::write(dir.join("comparison.csv"), self.trajectories_csv()?)?;
        fs::write(dir.join("comparison.json"), self.report_json())?;
        Ok(())
    }

    /// Plain-text table of the headline numbers.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<14} {:>9} {:>9} {:>8} {:>8} {:>8}\n",
            "policy", "updates", "post-cal", "online_f1", "detect", "false"
        );
        for r in &self.summaries {
            s += &format!(
                "{:<14} {:>9} {:>9} {:>8.4} {:>8} {:>8}\n",
                r.policy.name(),
                r.total_updates,
                r.post_calibration_updates,
                r.final_online_f1,
                r.true_detections.map_or("-".into(), |v| v.to_string()),
                r.false_alarms.map_or("-".into(), |v| v.to_string()),
            );
        }
        s
    }
}

impl Experiment {
    /// Synthetic stream with a schedule drawn from the configured seeds.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let schedule = build_schedule(config.n_rounds, config.shift_prob, config.min_gap, config.seeds.schedule);
        Self::with_schedule(config, schedule)
    }

    /// Synthetic stream following an explicit schedule.
    pub fn with_schedule(config: ExperimentConfig, schedule: ShiftSchedule) -> Result<Self> {
        config.validate()?;
        let generator = StreamGenerator::new(config.stream_config(), schedule.clone(), config.seeds.stream)?;
        let boot = generator.bootstrap_set::<f64>(config.model.bootstrap_normal, config.model.bootstrap_anomalous);
        let initial_model = bootstrap(&config, &boot)?;
        Ok(Experiment {
            config,
            source: Source::Synthetic(generator),
            schedule,
            initial_model,
        })
    }

    /// Pre-recorded batches (e.g. from [`crate::stream::ingest_stream`]). The
    /// bootstrap set is taken from the earliest samples of each class and the
    /// true schedule is unknown (empty).
    pub fn from_batches(mut config: ExperimentConfig, batches: Vec<Batch<f64>>) -> Result<Self> {
        let first = batches.first().and_then(|b| b.samples.first()).ok_or(Error::Empty("recorded stream"))?;
        config.model.input_dim = first.features.len();
        config.n_rounds = batches.len();
        config.validate()?;
        let mut boot: Vec<(Vec<f64>, u8)> = Vec::new();
        let (mut normal, mut anomalous) = (0, 0);
        for s in batches.iter().flat_map(|b| &b.samples) {
            let want = if s.label == 0 {
                &mut normal
            } else {
                &mut anomalous
            };
            let cap = if s.label == 0 {
                config.model.bootstrap_normal
            } else {
                config.model.bootstrap_anomalous
            };
            if *want < cap {
                *want += 1;
                boot.push((s.features.clone(), s.label));
            }
        }
        let initial_model = bootstrap(&config, &boot)?;
        Ok(Experiment {
            schedule: ShiftSchedule::stationary(config.n_rounds),
            config,
            source: Source::Recorded(batches),
            initial_model,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn schedule(&self) -> &ShiftSchedule {
        &self.schedule
    }

    pub fn initial_model(&self) -> &ModelParams<f64> {
        &self.initial_model
    }

    pub fn n_rounds(&self) -> usize {
        match &self.source {
            Source::Synthetic(_) => self.config.n_rounds,
            Source::Recorded(b) => b.len(),
        }
    }

    fn batch(&self, round: usize) -> Batch<f64> {
        match &self.source {
            Source::Synthetic(g) => g.next_batch(round),
            Source::Recorded(b) => b[round - 1].clone(),
        }
    }

    /// Post-calibration true shift rounds.
    pub fn oracle_rounds(&self) -> BTreeSet<usize> {
        self.schedule
            .shift_rounds()
            .into_iter()
            .filter(|&r| r > self.config.calibration_rounds)
            .collect()
    }

    /// Builds the concrete policy. `RandomUpdate` needs the OCLADS
    /// post-calibration update count of the paired run.
    pub fn policy(&self, kind: PolicyKind, random_budget: Option<usize>) -> Result<UpdatePolicy> {
        Ok(match kind {
            PolicyKind::Oclads => UpdatePolicy::Oclads,
            PolicyKind::AllUpdate => UpdatePolicy::AllUpdate,
            PolicyKind::NoUpdate => UpdatePolicy::NoUpdate,
            PolicyKind::OracleOclads => UpdatePolicy::OracleOclads(self.oracle_rounds()),
            PolicyKind::RandomUpdate => {
                let budget = random_budget
                    .ok_or_else(|| Error::Config("random-update needs the paired OCLADS update count".into()))?;
                let mut rng = substream(self.config.seeds.schedule, RANDOM_SCHEDULE_STREAM);
                UpdatePolicy::RandomUpdate(make_random_schedule(
                    self.n_rounds(),
                    budget,
                    self.config.calibration_rounds,
                    &mut rng,
                )?)
            }
        })
    }

    /// Runs a single policy. `RandomUpdate` first runs OCLADS to fix its
    /// budget.
    pub fn run(&self, kind: PolicyKind) -> Result<RunArtifacts> {
        let budget = if kind == PolicyKind::RandomUpdate {
            Some(self.run(PolicyKind::Oclads)?.summary.post_calibration_updates)
        } else {
            None
        };
        self.run_policy(self.policy(kind, budget)?)
    }

    /// Full round loop for one policy.
    pub fn run_policy(&self, policy: UpdatePolicy) -> Result<RunArtifacts> {
        let cfg = &self.config;
        let kind = policy.kind();
        let mut device = DeviceState::new(self.initial_model.clone(), cfg.selection());
        let mut server = ServerState::new(
            self.initial_model.clone(),
            policy,
            cfg.server(),
            mix(cfg.seeds.model, 2),
        )?;
        let mut channel = Channel::default();
        let mut online = OnlineF1::default();
        let mut trace = Vec::with_capacity(self.n_rounds());

        for round in 1..=self.n_rounds() {
            let batch = self.batch(round);
            let (predicted, scores) = device.infer_batch(&batch)?;
            let batch_f1 = macro_f1_with(&batch.labels(), &predicted, cfg.absent_class)?;
            let online_f1 = online.push(batch_f1);

            let payload = channel.uplink(device.select_samples(&batch, &scores));
            let k_i = payload.k();
            let outcome = server.process_round(payload)?;
            let transmitted = outcome.downlink.is_some();
            if let Some(model) = outcome.downlink {
                device.install_model(&channel.downlink(model))?;
            }
            trace.push(TraceRow {
                round,
                policy: kind,
                k_i,
                buffer_size: server.buffer().len(),
                p_value: outcome.verdict.map(|v| v.p_value),
                detected: outcome.verdict.map(|v| v.shift_detected),
                t_observed: outcome.verdict.map(|v| v.t_observed),
                testable: outcome.testable,
                transmitted,
                batch_f1,
                online_f1,
            });
        }

        let summary = self.summarize(kind, &trace, &channel, online.value());
        Ok(RunArtifacts { trace, summary })
    }

    fn summarize(&self, kind: PolicyKind, trace: &[TraceRow], channel: &Channel, final_f1: f64) -> RunSummary {
        let cal = self.config.calibration_rounds;
        let post = |r: &&TraceRow| r.round > cal;
        let total_updates = trace.iter().filter(|r| r.transmitted).count();
        let post_updates = trace.iter().filter(post).filter(|r| r.transmitted).count();
        let shifts: Vec<usize> = self.oracle_rounds().into_iter().collect();
        let ran_detector = trace.iter().any(|r| r.testable);
        let (true_detections, false_alarms, missed) = if ran_detector {
            let detections: Vec<(usize, bool)> = trace
                .iter()
                .filter(post)
                .map(|r| (r.round, r.detected == Some(true)))
                .collect();
            let (s, _) = match_detections(&detections, &shifts, self.config.match_window);
            (Some(s.true_detections), Some(s.false_alarms), Some(s.missed_shifts))
        } else {
            (None, None, None)
        };
        RunSummary {
            policy: kind,
            total_rounds: trace.len(),
            total_updates,
            post_calibration_updates: post_updates,
            true_shifts: self.schedule.len(),
            post_calibration_true_shifts: shifts.len(),
            true_detections,
            false_alarms,
            missed,
            final_online_f1: final_f1,
            downlink_bytes: channel.downlink_bytes,
            uplink_samples: channel.uplink_samples,
            seeds: self.config.seeds,
        }
    }

    /// Runs OCLADS first, then the remaining configured policies in parallel
    /// on the same stream. Results follow the configured policy order.
    pub fn compare(&self) -> Result<Comparison> {
        let mut kinds: Vec<PolicyKind> = Vec::new();
        for &k in &self.config.policies {
            if !kinds.contains(&k) {
                kinds.push(k);
            }
        }
        if kinds.len() < 2 {
            return Err(Error::Config("compare needs at least two policies".into()));
        }
        let oclads = if kinds.contains(&PolicyKind::Oclads) || kinds.contains(&PolicyKind::RandomUpdate) {
            Some(self.run_policy(UpdatePolicy::Oclads)?)
        } else {
            None
        };
        let budget = oclads.as_ref().map(|r| r.summary.post_calibration_updates);
        let others: Vec<Result<RunArtifacts>> = kinds
            .par_iter()
            .filter(|&&k| k != PolicyKind::Oclads)
            .map(|&k| self.run_policy(self.policy(k, budget)?))
            .collect();
        let mut others = others.into_iter().collect::<Result<Vec<_>>>()?.into_iter();
        let runs: Vec<RunArtifacts> = kinds
            .iter()
            .map(|&k| {
                if k == PolicyKind::Oclads {
                    oclads.clone().expect("oclads run")
                } else {
                    others.next().expect("one run per policy")
                }
            })
            .collect();
        Ok(Comparison {
            summaries: runs.iter().map(|r| r.summary.clone()).collect(),
            runs,
        })
    }
}

fn bootstrap(config: &ExperimentConfig, data: &[(Vec<f64>, u8)]) -> Result<ModelParams<f64>> {
    let init = ModelParams::init(
        config.model.input_dim,
        config.model.hidden_dim,
        &mut substream(config.seeds.model, 0),
    );
    bootstrap_finetune(&init, data, &config.model.train_config(), &mut substream(config.seeds.model, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::trace::validate_rows;

    fn small(policies: Vec<PolicyKind>) -> ExperimentConfig {
        ExperimentConfig {
            n_rounds: 40,
            policies,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn no_update_run_never_transmits() {
        let exp = Experiment::new(ExperimentConfig { n_rounds: 5, ..small(vec![PolicyKind::NoUpdate]) }).unwrap();
        let run = exp.run(PolicyKind::NoUpdate).unwrap();
        assert_eq!(run.trace.len(), 5);
        assert!(run.trace.iter().all(|r| !r.transmitted));
        assert_eq!(run.summary.total_updates, 0);
    }

    #[test]
    fn all_update_counts_every_round() {
        let exp = Experiment::new(small(vec![])).unwrap();
        let run = exp.run(PolicyKind::AllUpdate).unwrap();
        assert_eq!(run.summary.total_updates, 40);
        validate_rows(&run.trace).unwrap();
    }

    #[test]
    fn compare_pairs_random_with_oclads() {
        let exp = Experiment::new(small(PolicyKind::ALL.to_vec())).unwrap();
        let cmp = exp.compare().unwrap();
        assert_eq!(cmp.runs.len(), 5);
        assert!(cmp.runs.iter().all(|r| r.trace.len() == 40));
        let o = cmp.run(PolicyKind::Oclads).unwrap();
        let r = cmp.run(PolicyKind::RandomUpdate).unwrap();
        assert_eq!(o.summary.post_calibration_updates, r.summary.post_calibration_updates);
        assert_eq!(o.summary.total_updates, r.summary.total_updates);
        let oracle = cmp.run(PolicyKind::OracleOclads).unwrap();
        assert_eq!(oracle.summary.post_calibration_updates, exp.oracle_rounds().len());
        for run in &cmp.runs {
            validate_rows(&run.trace).unwrap();
        }
        assert!(cmp.table().contains("random-update"));
    }

    #[test]
    fn compare_needs_two_policies() {
        let exp = Experiment::new(small(vec![PolicyKind::Oclads])).unwrap();
        assert!(exp.compare().is_err());
    }

    #[test]
    fn random_without_budget_is_error() {
        let exp = Experiment::new(small(vec![])).unwrap();
        assert!(exp.policy(PolicyKind::RandomUpdate, None).is_err());
    }

    #[test]
    fn recorded_stream_runs() {
        let gen = StreamGenerator::new(
            ExperimentConfig::default().stream_config(),
            ShiftSchedule::stationary(12),
            3,
        )
        .unwrap();
        let batches: Vec<Batch<f64>> = (1..=12).map(|r| gen.next_batch(r)).collect();
        let exp = Experiment::from_batches(small(vec![]), batches).unwrap();
        assert_eq!(exp.n_rounds(), 12);
        let run = exp.run(PolicyKind::Oclads).unwrap();
        assert_eq!(run.trace.len(), 12);
        assert_eq!(run.summary.true_shifts, 0);
    }
}
