//! CERNet: a hierarchical predictive-coding recurrent network conditioned on a
//! class-embedding vector.
//!
//! The network keeps a prior/posterior pair of hidden states per layer. Each
//! timestep it predicts top-down, compares the bottom-layer prediction against
//! the observation, and corrects every layer bottom-up in proportion to the
//! propagated error. The same machinery serves three modes:
//!
//! - **training**: weights are fit by backpropagation through the unrolled
//!   prior/posterior dynamics, minimizing the prediction-error loss
//!   ([`train`]),
//! - **generation**: with frozen weights and a one-hot class embedding, the
//!   network drives a plant in a closed loop and recovers from perturbations
//!   ([`runtime`]),
//! - **inference**: with frozen weights, the class embedding itself is
//!   optimized online against the observed prefix of a trajectory, yielding a
//!   class estimate plus a reconstruction-error confidence signal
//!   ([`inference`]).
//!
//! Supporting modules provide the dataset format and synthetic trajectory
//! generator ([`dataset`]), DTW / rank-statistics scoring ([`eval`]), and
//! checkpoint serialization ([`checkpoint`]).

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod grad;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod params;
pub mod report;
pub mod rng;
pub mod runtime;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{ModelConfig, Preset, TopdownSource};
pub use error::{Error, Result};
pub use grad::{prediction_error_loss, sequence_gradients, GradOptions, SequenceGrad};
pub use model::{one_hot, rollout_step, ClassEmbedding, LayerState, StepRecord};
pub use optim::{clip_and_adam_step, OptimizerState, TrainConfig};
pub use params::NetworkParams;
pub use train::{train, TrainOutcome, TrainTrace};
