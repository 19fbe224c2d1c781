//! IoT device: on-device inference, uplink sample selection and model
//! installation on downlink.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ModelParams;
use crate::scalar::Scalar;
use crate::stream::{Batch, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Number of initial rounds in which the whole batch is sent.
    pub calibration_rounds: usize,
    pub s_threshold: f64,
    pub k_min: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            calibration_rounds: 10,
            s_threshold: 0.25,
            k_min: 15,
        }
    }
}

/// Samples chosen for the uplink in one round, ordered by decreasing
/// anomaly score.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkPayload<T> {
    pub round: usize,
    pub selected: Vec<Sample<T>>,
    pub scores: Vec<T>,
}

impl<T> UplinkPayload<T> {
    pub fn k(&self) -> usize {
        self.selected.len()
    }
}

#[derive(Debug, Clone)]
pub struct DeviceState<T> {
    installed_model: ModelParams<T>,
    selection: SelectionConfig,
}

impl<T: Scalar> DeviceState<T> {
    pub fn new(model: ModelParams<T>, selection: SelectionConfig) -> Self {
        DeviceState {
            installed_model: model,
            selection,
        }
    }

    pub fn model(&self) -> &ModelParams<T> {
        &self.installed_model
    }

    pub fn selection(&self) -> &SelectionConfig {
        &self.selection
    }

    /// Per-sample predicted labels and anomaly scores.
    pub fn infer_batch(&self, batch: &Batch<T>) -> Result<(Vec<u8>, Vec<T>)> {
        let mut labels = Vec::with_capacity(batch.len());
        let mut scores = Vec::with_capacity(batch.len());
        for s in &batch.samples {
            let p = self.installed_model.predict(&s.features)?;
            labels.push(p.label);
            scores.push(p.anomaly_score());
        }
        Ok((labels, scores))
    }

    pub fn select_samples(&self, batch: &Batch<T>, scores: &[T]) -> UplinkPayload<T> {
        let (order, k) = selection_order(
            batch.round,
            scores,
            T::lit(self.selection.s_threshold),
            self.selection.k_min,
            self.selection.calibration_rounds,
        );
        let chosen = &order[..k];
        UplinkPayload {
            round: batch.round,
            selected: chosen.iter().map(|&j| batch.samples[j].clone()).collect(),
            scores: chosen.iter().map(|&j| scores[j]).collect(),
        }
    }

    /// Replaces the installed model with a decoded downlink payload. On any
    /// error the current model stays installed.
    pub fn install_model(&mut self, payload: &str) -> Result<()> {
        let params = ModelParams::from_payload(payload)?;
        if !params.same_shape(&self.installed_model) {
            return Err(crate::error::Error::Payload(format!(
                "shape {}x{} does not match installed {}x{}",
                params.input_dim(),
                params.hidden_dim(),
                self.installed_model.input_dim(),
                self.installed_model.hidden_dim()
            )));
        }
        self.installed_model = params;
        Ok(())
    }
}

/// Indices sorted by decreasing score (ties by index) and the uplink size
/// `K = max(k_min, #{score >= threshold})`, capped at the batch size.
/// During calibration rounds `K` is the batch size.
pub fn selection_order<T: Scalar>(
    round: usize,
    scores: &[T],
    threshold: T,
    k_min: usize,
    calibration_rounds: usize,
) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let k = if round <= calibration_rounds {
        scores.len()
    } else {
        let above = scores.iter().filter(|&&s| s >= threshold).count();
        above.max(k_min).min(scores.len())
    };
    (order, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::stream::{ShiftSchedule, StreamConfig, StreamGenerator};

    fn batch(round: usize) -> Batch<f64> {
        StreamGenerator::new(StreamConfig::default(), ShiftSchedule::stationary(100), 5)
            .unwrap()
            .next_batch(round)
    }

    fn device(model: ModelParams<f64>) -> DeviceState<f64> {
        DeviceState::new(model, SelectionConfig::default())
    }

    #[test]
    fn zero_model_scores_half_and_predicts_normal() {
        let d = device(ModelParams::zeros(16, 4));
        let (labels, scores) = d.infer_batch(&batch(1)).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
        assert!(scores.iter().all(|&s| s == 0.5));
    }

    #[test]
    fn inference_matches_predict() {
        let m = ModelParams::init(16, 8, &mut substream(1, 1));
        let d = device(m.clone());
        let b = batch(3);
        let (labels, scores) = d.infer_batch(&b).unwrap();
        for (j, s) in b.samples.iter().enumerate() {
            let p = m.predict(&s.features).unwrap();
            assert_eq!(labels[j], p.label);
            assert_eq!(scores[j], p.anomaly_score());
            assert!((0.0..=1.0).contains(&scores[j]));
        }
    }

    #[test]
    fn fallback_sends_k_min() {
        let d = device(ModelParams::zeros(16, 4));
        let b = batch(20);
        let scores = vec![0.1; 64];
        let up = d.select_samples(&b, &scores);
        assert_eq!(up.k(), 15);
        // ties keep batch order
        let idx: Vec<usize> = up.selected.iter().map(|s| s.index_in_batch).collect();
        assert_eq!(idx, (0..15).collect::<Vec<_>>());
    }

    #[test]
    fn all_above_sends_everything() {
        let d = device(ModelParams::zeros(16, 4));
        let up = d.select_samples(&batch(20), &vec![0.9; 64]);
        assert_eq!(up.k(), 64);
    }

    #[test]
    fn worked_threshold_example() {
        let mut d = device(ModelParams::zeros(16, 4));
        d.selection.k_min = 2;
        let mut scores = vec![0.9, 0.3, 0.26, 0.24, 0.1];
        scores.extend(std::iter::repeat_n(0.05, 59));
        let up = d.select_samples(&batch(20), &scores);
        assert_eq!(up.k(), 3);
        assert_eq!(up.scores, vec![0.9, 0.3, 0.26]);
    }

    #[test]
    fn calibration_sends_full_batch() {
        let d = device(ModelParams::zeros(16, 4));
        for round in 1..=10 {
            assert_eq!(d.select_samples(&batch(round), &vec![0.0; 64]).k(), 64);
        }
        assert_eq!(d.select_samples(&batch(11), &vec![0.0; 64]).k(), 15);
    }

    #[test]
    fn k_min_larger_than_batch_is_clamped() {
        let (_, k) = selection_order(50, &[0.1f64, 0.2, 0.3], 0.25, 15, 10);
        assert_eq!(k, 3);
    }

    #[test]
    fn install_replaces_model() {
        let mut d = device(ModelParams::zeros(16, 8));
        let b = batch(2);
        let before = d.infer_batch(&b).unwrap();
        let mut m = ModelParams::<f64>::zeros(16, 8);
        m.b2 = vec![0.0, 5.0];
        d.install_model(&m.to_payload()).unwrap();
        let after = d.infer_batch(&b).unwrap();
        assert_ne!(before, after);
        assert!(after.0.iter().all(|&l| l == 1));
    }

    #[test]
    fn bad_payload_leaves_model_untouched() {
        let m = ModelParams::init(16, 8, &mut substream(2, 2));
        let mut d = device(m.clone());
        let other = ModelParams::<f64>::zeros(16, 9);
        assert!(d.install_model(&other.to_payload()).is_err());
        assert!(d.install_model("garbage").is_err());
        assert_eq!(d.model(), &m);
    }
}
