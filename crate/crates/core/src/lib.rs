//! Group-relative policy optimisation with pairwise trajectory sampling and
//! advantage-based batch shuffling, on a synthetic verifiable-reward task.
//!
//! The numeric core is generic over [`Scalar`] (`f64` or `f32`); the
//! `*64` / `*32` aliases below fix the scalar for callers that do not care.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advantage;
pub mod batch_shuffle;
pub mod codec;
pub mod config;
pub mod env;
pub mod error;
pub mod metrics;
pub mod optim;
pub mod pair_sampling;
pub mod policy;
pub mod rng;
pub mod scalar;
pub mod trainer;
pub mod types;

pub use config::{AbsStrategy, Algorithm, Mode, OptimizerKind, PtsStrategy, RunConfig};
pub use error::{Error, Result};
pub use policy::{GenConfig, Policy};
pub use rng::{Purpose, RngStream};
pub use scalar::Scalar;
pub use trainer::{StepMetrics, StepOutcome, Trainer};
pub use types::{PairId, Provenance, Query, RolloutGroup, TrainBatch, Trajectory, TrajectoryPair};

pub type Policy64 = Policy<f64>;
pub type Policy32 = Policy<f32>;
pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
pub type TrajectoryPair64 = TrajectoryPair<f64>;
pub type TrajectoryPair32 = TrajectoryPair<f32>;
pub type TrainBatch64 = TrainBatch<f64>;
pub type TrainBatch32 = TrainBatch<f32>;
pub type RolloutGroup64 = RolloutGroup<f64>;
pub type RolloutGroup32 = RolloutGroup<f32>;
pub type Trainer64 = Trainer<f64>;
pub type Trainer32 = Trainer<f32>;
