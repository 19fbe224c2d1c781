use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::device::SelectionConfig;
use crate::error::{Error, Result};
use crate::metrics::AbsentClass;
use crate::model::TrainConfig;
use crate::server::{PolicyKind, ServerConfig};
use crate::shiftdetect::{ScorerKind, ShiftTestConfig};
use crate::stream::StreamConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Feature dimension `M`.
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub steps_per_batch: usize,
    pub minibatch_size: usize,
    pub gamma_fl: f64,
    pub alpha_fl: f64,
    pub bootstrap_steps: usize,
    pub bootstrap_normal: usize,
    pub bootstrap_anomalous: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        ModelConfig {
            input_dim: 16,
            hidden_dim: 32,
            learning_rate: t.learning_rate,
            steps_per_batch: t.steps_per_batch,
            minibatch_size: t.minibatch_size,
            gamma_fl: t.gamma_fl,
            alpha_fl: t.alpha_fl,
            bootstrap_steps: t.bootstrap_steps,
            bootstrap_normal: 100,
            bootstrap_anomalous: 20,
        }
    }
}

impl ModelConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            steps_per_batch: self.steps_per_batch,
            minibatch_size: self.minibatch_size,
            gamma_fl: self.gamma_fl,
            alpha_fl: self.alpha_fl,
            bootstrap_steps: self.bootstrap_steps,
        }
    }
}

/// Independent randomness sources of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub stream: u64,
    pub schedule: u64,
    pub model: u64,
    pub detector: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::from_base(0)
    }
}

impl Seeds {
    /// Distinct seeds for the four sources derived from one number.
    pub fn from_base(base: u64) -> Self {
        Seeds {
            stream: 1000 + base,
            schedule: 2000 + base,
            model: 3000 + base,
            detector: 4000 + base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_rounds: usize,
    pub batch_size: usize,
    pub anomaly_rate: f64,
    pub anomaly_distance: f64,
    pub shift_angle_deg: f64,
    pub shift_prob: f64,
    pub min_gap: usize,
    pub calibration_rounds: usize,
    pub s_threshold: f64,
    pub k_min: usize,
    pub alpha: f64,
    pub n_permutations: usize,
    pub scorer: ScorerKind,
    pub buffer_capacity: usize,
    pub model: ModelConfig,
    pub seeds: Seeds,
    pub policies: Vec<PolicyKind>,
    pub detect_all_policies: bool,
    pub match_window: usize,
    pub absent_class: AbsentClass,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_rounds: 400,
            batch_size: 64,
            anomaly_rate: 0.07,
            anomaly_distance: 3.0,
            shift_angle_deg: 60.0,
            shift_prob: 0.15,
            min_gap: 5,
            calibration_rounds: 10,
            s_threshold: 0.25,
            k_min: 15,
            alpha: 0.05,
            n_permutations: 199,
            scorer: ScorerKind::KernelMean,
            buffer_capacity: 3000,
            model: ModelConfig::default(),
            seeds: Seeds::default(),
            policies: PolicyKind::ALL.to_vec(),
            detect_all_policies: false,
            match_window: 0,
            absent_class: AbsentClass::CountAsPerfect,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(Error::Config("n_rounds must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.anomaly_rate) || !(0.0..=1.0).contains(&self.shift_prob) {
            return Err(Error::Config("anomaly_rate and shift_prob must lie in [0, 1]".into()));
        }
        if self.min_gap == 0 {
            return Err(Error::Config("min_gap must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.s_threshold) {
            return Err(Error::Config("s_threshold must lie in [0, 1]".into()));
        }
        if self.model.input_dim < 2 || self.model.hidden_dim == 0 {
            return Err(Error::Config("model.input_dim must be >= 2 and hidden_dim >= 1".into()));
        }
        self.model.train_config().validate()?;
        self.detector().validate()?;
        Ok(())
    }

    pub fn stream_config(&self) -> StreamConfig {
        StreamConfig {
            dim: self.model.input_dim,
            batch_size: self.batch_size,
            anomaly_rate: self.anomaly_rate,
            anomaly_distance: self.anomaly_distance,
            shift_angle_deg: self.shift_angle_deg,
        }
    }

    pub fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            calibration_rounds: self.calibration_rounds,
            s_threshold: self.s_threshold,
            k_min: self.k_min,
        }
    }

    pub fn detector(&self) -> ShiftTestConfig {
        ShiftTestConfig {
            alpha: self.alpha,
            n_permutations: self.n_permutations,
            rng_seed: self.seeds.detector,
        }
    }

    pub fn server(&self) -> ServerConfig {
        ServerConfig {
            calibration_rounds: self.calibration_rounds,
            buffer_capacity: self.buffer_capacity,
            train: self.model.train_config(),
            detector: self.detector(),
            scorer: self.scorer,
            detect_all_policies: self.detect_all_policies,
        }
    }
}
