//! Two-class feed-forward classifier shared by device and server.
//!
//! Architecture: `input(M) -> tanh(H) -> softmax(2)`. Class 1 is the
//! anomaly class and its softmax probability is the anomaly score.
//! Training minimizes the class-weighted focal loss with plain SGD.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::stream::Labeled;

pub const N_CLASSES: usize = 2;
const FORMAT_VERSION: u32 = 1;

/// Weights and biases. Matrices are row-major: `w1` is `hidden x input`,
/// `w2` is `2 x hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    input_dim: usize,
    hidden_dim: usize,
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps_per_batch: usize,
    pub minibatch_size: usize,
    pub gamma_fl: f64,
    pub alpha_fl: f64,
    /// SGD steps used by [`bootstrap_finetune`].
    pub bootstrap_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            steps_per_batch: 20,
            minibatch_size: 32,
            gamma_fl: 2.0,
            alpha_fl: 0.8,
            bootstrap_steps: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        if self.steps_per_batch == 0 || self.minibatch_size == 0 {
            return Err(Error::Config("steps_per_batch and minibatch_size must be positive".into()));
        }
        if self.gamma_fl.is_nan() || self.gamma_fl < 0.0 {
            return Err(Error::Config("gamma_fl must be >= 0".into()));
        }
        if !(self.alpha_fl > 0.0 && self.alpha_fl < 1.0) {
            return Err(Error::Config("alpha_fl must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Softmax output and decision for one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<T> {
    pub probs: [T; N_CLASSES],
    pub label: u8,
}

impl<T: Scalar> Prediction<T> {
    pub fn anomaly_score(&self) -> T {
        self.probs[1]
    }
}

struct Forward<T> {
    hidden: Vec<T>,
    probs: [T; N_CLASSES],
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        ModelParams {
            input_dim,
            hidden_dim,
            w1: vec![T::zero(); hidden_dim * input_dim],
            b1: vec![T::zero(); hidden_dim],
            w2: vec![T::zero(); N_CLASSES * hidden_dim],
            b2: vec![T::zero(); N_CLASSES],
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        let b_in = 1.0 / (input_dim as f64).sqrt();
        let b_hid = 1.0 / (hidden_dim as f64).sqrt();
        for v in p.w1.iter_mut().chain(p.b1.iter_mut()) {
            *v = T::lit(rng.random_range(-b_in..=b_in));
        }
        for v in p.w2.iter_mut().chain(p.b2.iter_mut()) {
            *v = T::lit(rng.random_range(-b_hid..=b_hid));
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.input_dim == other.input_dim && self.hidden_dim == other.hidden_dim
    }

    /// All parameters in storage order `w1, b1, w2, b2`.
    pub fn to_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn from_flat(input_dim: usize, hidden_dim: usize, values: &[T]) -> Result<Self> {
        let mut p = Self::zeros(input_dim, hidden_dim);
        if values.len() != p.n_params() {
            return Err(Error::DimensionMismatch {
                expected: p.n_params(),
                found: values.len(),
            });
        }
        let (w1, rest) = values.split_at(p.w1.len());
        let (b1, rest) = rest.split_at(p.b1.len());
        let (w2, b2) = rest.split_at(p.w2.len());
        p.w1.copy_from_slice(w1);
        p.b1.copy_from_slice(b1);
        p.w2.copy_from_slice(w2);
        p.b2.copy_from_slice(b2);
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|v| v.is_finite())
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn forward(&self, x: &[T]) -> Forward<T> {
        let hidden: Vec<T> = self
            .w1
            .chunks_exact(self.input_dim)
            .zip(&self.b1)
            .map(|(row, &b)| (row.iter().zip(x).map(|(&w, &xi)| w * xi).sum::<T>() + b).tanh())
            .collect();
        let mut logits = [T::zero(); N_CLASSES];
        for (k, row) in self.w2.chunks_exact(self.hidden_dim.max(1)).take(N_CLASSES).enumerate() {
            logits[k] = row.iter().zip(&hidden).map(|(&w, &h)| w * h).sum::<T>();
        }
        for (l, &b) in logits.iter_mut().zip(&self.b2) {
            *l += b;
        }
        Forward {
            hidden,
            probs: softmax(logits),
        }
    }

    /// Softmax probabilities and argmax label. Exact 0.5/0.5 ties resolve
    /// to class 0.
    pub fn predict(&self, x: &[T]) -> Result<Prediction<T>> {
        self.check_dim(x)?;
        let probs = self.forward(x).probs;
        let label = u8::from(probs[1] > probs[0]);
        Ok(Prediction { probs, label })
    }

    /// Serializes the downlink payload: version tag, shape header and the
    /// flat parameter vector in storage order.
    pub fn to_payload(&self) -> String {
        let record = ModelRecord {
            version: FORMAT_VERSION,
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            output_dim: N_CLASSES,
            values: self.to_flat().into_iter().map(T::to_f64_lossy).collect(),
        };
        serde_json::to_string(&record).expect("model record serializes")
    }

    pub fn from_payload(payload: &str) -> Result<Self> {
        let record: ModelRecord =
            serde_json::from_str(payload).map_err(|e| Error::Payload(e.to_string()))?;
        if record.version != FORMAT_VERSION {
            return Err(Error::Payload(format!("unsupported version {}", record.version)));
        }
        if record.output_dim != N_CLASSES {
            return Err(Error::Payload(format!("output_dim must be {N_CLASSES}, got {}", record.output_dim)));
        }
        let values: Vec<T> = record.values.iter().map(|&v| T::lit(v)).collect();
        let params = Self::from_flat(record.input_dim, record.hidden_dim, &values)
            .map_err(|e| Error::Payload(e.to_string()))?;
        if !params.is_finite() {
            return Err(Error::Payload("non-finite parameter".into()));
        }
        Ok(params)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    version: u32,
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    values: Vec<f64>,
}

/// Log-sum-exp stabilized softmax.
pub fn softmax<T: Scalar>(logits: [T; N_CLASSES]) -> [T; N_CLASSES] {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out = logits.map(|z| (z - max).exp());
    let total: T = out.iter().copied().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

pub const PROB_EPS: f64 = 1e-12;

/// Per-sample focal loss `-a_c (1 - p)^g ln p` for true-class probability
/// `p`, clamped to `[eps, 1 - eps]`, together with `dL/dp` (zero where the
/// clamp is active).
fn focal_term<T: Scalar>(p: T, weight: T, gamma: T) -> (T, T) {
    let eps = T::lit(PROB_EPS);
    let one = T::one();
    let clamped = p < eps || p > one - eps;
    let p = p.max(eps).min(one - eps);
    let q = one - p;
    let loss = -weight * q.powf(gamma) * p.ln();
    if clamped {
        return (loss, T::zero());
    }
    let modulating_grad = if gamma == T::zero() {
        T::zero()
    } else {
        gamma * q.powf(gamma - one) * p.ln()
    };
    let dldp = -weight * (q.powf(gamma) / p - modulating_grad);
    (loss, dldp)
}

/// Mean focal loss over `minibatch` and its exact gradient.
///
/// The anomaly class is weighted by `alpha_fl` and the normal class by
/// `1 - alpha_fl`.
pub fn focal_loss<T: Scalar, S: Labeled<T>>(
    params: &ModelParams<T>,
    minibatch: &[&S],
    gamma_fl: f64,
    alpha_fl: f64,
) -> Result<(T, ModelParams<T>)> {
    if minibatch.is_empty() {
        return Err(Error::Empty("focal_loss minibatch"));
    }
    let gamma = T::lit(gamma_fl);
    let weights = [T::lit(1.0 - alpha_fl), T::lit(alpha_fl)];
    let n = T::from_usize_lossy(minibatch.len());
    let m = params.input_dim;
    let h = params.hidden_dim;

    let mut grad = ModelParams::zeros(m, h);
    let mut total = T::zero();
    let mut d_hidden = vec![T::zero(); h];
    for sample in minibatch {
        let x = sample.features();
        params.check_dim(x)?;
        let c = usize::from(sample.label().min(1));
        let fwd = params.forward(x);
        let p = fwd.probs[c];
        if !p.is_finite() {
            return Err(Error::TrainingFailure("non-finite probability in forward pass".into()));
        }
        let (loss, dldp) = focal_term(p, weights[c], gamma);
        total += loss;

        // dp_c/dz_k = p_c (delta_kc - p_k)
        let mut d_logits = [T::zero(); N_CLASSES];
        for (k, dz) in d_logits.iter_mut().enumerate() {
            let delta = if k == c { T::one() } else { T::zero() };
            *dz = dldp * p * (delta - fwd.probs[k]) / n;
        }

        for (k, &dz) in d_logits.iter().enumerate() {
            grad.b2[k] += dz;
            let row = &mut grad.w2[k * h..(k + 1) * h];
            for (g, &hv) in row.iter_mut().zip(&fwd.hidden) {
                *g += dz * hv;
            }
        }
        for (j, dh) in d_hidden.iter_mut().enumerate() {
            let back: T = (0..N_CLASSES).map(|k| params.w2[k * h + j] * d_logits[k]).sum();
            let hv = fwd.hidden[j];
            *dh = back * (T::one() - hv * hv);
        }
        for (j, &dh) in d_hidden.iter().enumerate() {
            grad.b1[j] += dh;
            let row = &mut grad.w1[j * m..(j + 1) * m];
            for (g, &xi) in row.iter_mut().zip(x) {
                *g += dh * xi;
            }
        }
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::TrainingFailure("non-finite loss".into()));
    }
    Ok((loss, grad))
}

fn sgd_step<T: Scalar>(params: &mut ModelParams<T>, grad: &ModelParams<T>, lr: T) {
    let pairs = params
        .w1
        .iter_mut()
        .zip(&grad.w1)
        .chain(params.b1.iter_mut().zip(&grad.b1))
        .chain(params.w2.iter_mut().zip(&grad.w2))
        .chain(params.b2.iter_mut().zip(&grad.b2));
    for (p, &g) in pairs {
        *p -= lr * g;
    }
}

/// Runs `cfg.steps_per_batch` SGD steps, each on a minibatch drawn
/// uniformly with replacement from `data`.
pub fn train_steps<T: Scalar, S: Labeled<T>>(
    params: &ModelParams<T>,
    data: &[S],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<ModelParams<T>> {
    run_sgd(params, data, cfg, cfg.steps_per_batch, rng)
}

fn run_sgd<T: Scalar, S: Labeled<T>>(
    params: &ModelParams<T>,
    data: &[S],
    cfg: &TrainConfig,
    steps: usize,
    rng: &mut Rng,
) -> Result<ModelParams<T>> {
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let lr = T::lit(cfg.learning_rate);
    let mut out = params.clone();
    let mut batch: Vec<&S> = Vec::with_capacity(cfg.minibatch_size);
    for _ in 0..steps {
        batch.clear();
        batch.extend((0..cfg.minibatch_size).map(|_| &data[rng.random_range(0..data.len())]));
        let (_, grad) = focal_loss(&out, &batch, cfg.gamma_fl, cfg.alpha_fl)?;
        sgd_step(&mut out, &grad, lr);
        if !out.is_finite() {
            return Err(Error::TrainingFailure("parameters diverged".into()));
        }
    }
    Ok(out)
}

/// Fine-tunes `params` on the small labeled bootstrap set for
/// `cfg.bootstrap_steps` steps. The result seeds every policy's device and
/// server model.
pub fn bootstrap_finetune<T: Scalar, S: Labeled<T>>(
    params: &ModelParams<T>,
    dataset: &[S],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<ModelParams<T>> {
    if dataset.is_empty() {
        return Err(Error::Empty("bootstrap dataset"));
    }
    run_sgd(params, dataset, cfg, cfg.bootstrap_steps, rng)
}
