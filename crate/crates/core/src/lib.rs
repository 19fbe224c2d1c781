//! Simulator for shift-aware model updates in on-device anomaly detection.
//!
//! A device classifies each incoming batch with its installed model and
//! uplinks the highest-scoring samples. The server keeps a replay buffer,
//! retrains every round and sends the model back only when a permutation
//! two-sample test on one-class scores flags a distribution shift.
//!
//! The numeric modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix them to `f64`, which is what the runner uses.

pub mod device;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod server;
pub mod shiftdetect;
pub mod stream;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ModelParams = model::ModelParams<f64>;
pub type Sample = stream::Sample<f64>;
pub type Batch = stream::Batch<f64>;
pub type DeviceState = device::DeviceState<f64>;
pub type UplinkPayload = device::UplinkPayload<f64>;
pub type ServerState = server::ServerState<f64>;
pub type ReplayBuffer = server::ReplayBuffer<f64>;
pub type ScoreFunction = shiftdetect::ScoreFunction<f64>;
pub type ShiftVerdict = shiftdetect::ShiftVerdict<f64>;
pub type Ecdf = shiftdetect::Ecdf<f64>;
