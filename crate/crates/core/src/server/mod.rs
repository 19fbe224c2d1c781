//! Edge server: replay buffer, continual training on every received batch
//! and the downlink decision.

mod buffer;
mod policy;

pub use buffer::ReplayBuffer;
pub use policy::{make_random_schedule, PolicyKind, UpdatePolicy};

use serde::{Deserialize, Serialize};

use crate::device::UplinkPayload;
use crate::error::{Error, Result};
use crate::model::{train_steps, ModelParams, TrainConfig};
use crate::rng::{mix, substream, Rng};
use crate::scalar::Scalar;
use crate::shiftdetect::{fit_scorer, permutation_test, ScorerKind, ShiftTestConfig, ShiftVerdict};
use crate::stream::Sample;

const TRAIN_STREAM: u64 = 1;
const BUFFER_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub calibration_rounds: usize,
    pub buffer_capacity: usize,
    pub train: TrainConfig,
    pub detector: ShiftTestConfig,
    pub scorer: ScorerKind,
    /// Run the shift test under every policy (for reporting), not only
    /// under OCLADS.
    pub detect_all_policies: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            calibration_rounds: 10,
            buffer_capacity: 3000,
            train: TrainConfig::default(),
            detector: ShiftTestConfig::default(),
            scorer: ScorerKind::KernelMean,
            detect_all_policies: false,
        }
    }
}

/// Result of one server round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome<T> {
    /// Serialized model when a downlink happens.
    pub downlink: Option<String>,
    pub verdict: Option<ShiftVerdict<T>>,
    /// Whether the shift test had enough data to run.
    pub testable: bool,
}

#[derive(Debug, Clone)]
pub struct ServerState<T> {
    master: ModelParams<T>,
    buffer: ReplayBuffer<T>,
    policy: UpdatePolicy,
    config: ServerConfig,
    last_received: Vec<Sample<T>>,
    last_round: Option<usize>,
    train_rng: Rng,
}

impl<T: Scalar> ServerState<T> {
    /// `seed` drives training minibatches and buffer eviction; the shift
    /// test draws from `config.detector.rng_seed`.
    pub fn new(master: ModelParams<T>, policy: UpdatePolicy, config: ServerConfig, seed: u64) -> Result<Self> {
        config.train.validate()?;
        config.detector.validate()?;
        Ok(ServerState {
            master,
            buffer: ReplayBuffer::new(config.buffer_capacity, substream(seed, BUFFER_STREAM)),
            policy,
            config,
            last_received: Vec::new(),
            last_round: None,
            train_rng: substream(seed, TRAIN_STREAM),
        })
    }

    pub fn master(&self) -> &ModelParams<T> {
        &self.master
    }

    pub fn buffer(&self) -> &ReplayBuffer<T> {
        &self.buffer
    }

    pub fn policy(&self) -> &UpdatePolicy {
        &self.policy
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    fn runs_detector(&self) -> bool {
        self.config.detect_all_policies || self.policy.kind() == PolicyKind::Oclads
    }

    /// Shift test between the previous and the current uplink, with the
    /// scorer fitted on buffer contents from earlier rounds. `None` when
    /// there is no previous uplink or fewer than two older samples.
    fn test_shift(&self, round: usize, incoming: &[Sample<T>]) -> Result<Option<ShiftVerdict<T>>> {
        let Some(prev_round) = self.last_round else {
            return Ok(None);
        };
        if self.last_received.is_empty() || incoming.is_empty() {
            return Ok(None);
        }
        let training: Vec<&[T]> = self
            .buffer
            .items()
            .iter()
            .filter(|s| s.round != prev_round)
            .map(|s| s.features.as_slice())
            .collect();
        if training.len() < 2 {
            return Ok(None);
        }
        let scorer = fit_scorer(self.config.scorer, &training)?;
        let cal: Vec<&[T]> = self.last_received.iter().map(|s| s.features.as_slice()).collect();
        let test: Vec<&[T]> = incoming.iter().map(|s| s.features.as_slice()).collect();
        let cfg = ShiftTestConfig {
            rng_seed: mix(self.config.detector.rng_seed, round as u64),
            ..self.config.detector
        };
        permutation_test(&scorer, &cal, &test, &cfg).map(Some)
    }

    /// Handles one uplink: optional shift test, buffer insertion, training
    /// and the transmission decision.
    pub fn process_round(&mut self, payload: UplinkPayload<T>) -> Result<RoundOutcome<T>> {
        let round = payload.round;
        if let Some(last) = self.last_round {
            if round <= last {
                return Err(Error::OutOfOrderRound { last, got: round });
            }
        }
        let verdict = if self.runs_detector() {
            self.test_shift(round, &payload.selected)?
        } else {
            None
        };

        self.buffer.extend(payload.selected.iter().cloned());
        if !self.buffer.is_empty() {
            self.master = train_steps(&self.master, self.buffer.items(), &self.config.train, &mut self.train_rng)?;
        }

        let detected = verdict.is_some_and(|v| v.shift_detected);
        let downlink = self
            .policy
            .transmits(round, self.config.calibration_rounds, detected)
            .then(|| self.master.to_payload());

        self.last_received = payload.selected;
        self.last_round = Some(round);
        Ok(RoundOutcome {
            downlink,
            testable: verdict.is_some(),
            verdict,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{DeviceState, SelectionConfig};
    use crate::stream::{build_schedule, StreamConfig, StreamGenerator};

    fn setup(policy: UpdatePolicy) -> (StreamGenerator, DeviceState<f64>, ServerState<f64>) {
        let gen = StreamGenerator::new(StreamConfig::default(), build_schedule(60, 0.15, 5, 4), 4).unwrap();
        let model = ModelParams::init(16, 32, &mut substream(4, 0));
        let device = DeviceState::new(model.clone(), SelectionConfig::default());
        let server = ServerState::new(model, policy, ServerConfig::default(), 4).unwrap();
        (gen, device, server)
    }

    fn uplink(gen: &StreamGenerator, device: &DeviceState<f64>, round: usize) -> UplinkPayload<f64> {
        let batch = gen.next_batch(round);
        let (_, scores) = device.infer_batch(&batch).unwrap();
        device.select_samples(&batch, &scores)
    }

    #[test]
    fn no_update_never_transmits() {
        let (gen, device, mut server) = setup(UpdatePolicy::NoUpdate);
        for r in 1..=30 {
            let out = server.process_round(uplink(&gen, &device, r)).unwrap();
            assert!(out.downlink.is_none());
            assert!(out.verdict.is_none());
        }
    }

    #[test]
    fn all_update_always_transmits() {
        let (gen, device, mut server) = setup(UpdatePolicy::AllUpdate);
        for r in 1..=25 {
            assert!(server.process_round(uplink(&gen, &device, r)).unwrap().downlink.is_some());
        }
    }

    #[test]
    fn oracle_transmits_at_true_shifts_only() {
        let shifts = [12usize, 30].into_iter().collect();
        let (gen, device, mut server) = setup(UpdatePolicy::OracleOclads(shifts));
        let sent: Vec<usize> = (1..=40)
            .filter(|&r| server.process_round(uplink(&gen, &device, r)).unwrap().downlink.is_some())
            .collect();
        let mut expected: Vec<usize> = (1..=10).collect();
        expected.extend([12, 30]);
        assert_eq!(sent, expected);
    }

    #[test]
    fn out_of_order_round_is_rejected() {
        let (gen, device, mut server) = setup(UpdatePolicy::AllUpdate);
        server.process_round(uplink(&gen, &device, 3)).unwrap();
        assert!(matches!(
            server.process_round(uplink(&gen, &device, 3)),
            Err(Error::OutOfOrderRound { last: 3, got: 3 })
        ));
    }

    #[test]
    fn oclads_downlinks_follow_detections() {
        let (gen, device, mut server) = setup(UpdatePolicy::Oclads);
        let mut tested = 0;
        for r in 1..=60 {
            let out = server.process_round(uplink(&gen, &device, r)).unwrap();
            // Test needs a previous uplink and >= 2 older buffered samples.
            assert_eq!(out.testable, r >= 3);
            if out.testable {
                tested += 1;
            }
            if r > 10 && out.downlink.is_some() {
                let v = out.verdict.expect("verdict behind every post-calibration downlink");
                assert!(v.p_value <= 0.05);
            }
        }
        assert_eq!(tested, 58);
    }

    #[test]
    fn master_trajectory_ignores_policy() {
        let (gen, device, mut all) = setup(UpdatePolicy::AllUpdate);
        let (_, _, mut none) = setup(UpdatePolicy::NoUpdate);
        let (_, _, mut oclads) = setup(UpdatePolicy::Oclads);
        for r in 1..=30 {
            let up = uplink(&gen, &device, r);
            all.process_round(up.clone()).unwrap();
            none.process_round(up.clone()).unwrap();
            oclads.process_round(up).unwrap();
            assert_eq!(all.master(), none.master());
            assert_eq!(all.master(), oclads.master());
        }
    }
}
