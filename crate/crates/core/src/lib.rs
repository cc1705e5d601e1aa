//! Event-driven recommendation engine with coevolving embeddings.
//!
//! Users and items carry low-dimensional embeddings that are piecewise
//! constant in time and updated by a recurrent rule whenever an interaction
//! event occurs. The compatibility `exp(f_u . g_i)` of the current
//! embeddings scales a Rayleigh intensity on every user-item dimension,
//! which yields closed forms for likelihood, survival mass, next-item
//! scores, and expected return times. Training maximizes the joint
//! likelihood of an event log by truncated backpropagation through sliding
//! windows with sampled survival dimensions.
//!
//! The crate is `no_std`-compatible (`alloc` required): disable the default
//! `std` feature and enable `libm` instead. File formats, CSV/JSON handling,
//! and the command-line driver live in the companion `coevolve-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod linalg;
mod math;

pub mod eval;
pub mod event;
pub mod graph;
pub mod params;
pub mod predict;
pub mod process;
pub mod sim;
pub mod state;
pub mod train;

pub use eval::{
    evaluate, evaluate_detailed, sweep_splits, EvalCounts, EvalError, EventDetail, Metrics,
    SplitOutcome, SweepReport, TIME_BINS,
};
pub use event::{Event, EventError, EventLog};
pub use graph::{build_window_graph, CompGraph, GradBundle, GraphError, GraphStats, SurvivalDim};
pub use params::{Activation, BlockSet, ModelParams};
pub use predict::{predict_return_time, rank_items, PredictError, PredictionRanking};
pub use process::{
    conditional_density, expected_return_time, intensity, survival_integral, DimensionIntensity,
    ProcessError, SurvivalBreakdown, SurvivalSegment,
};
pub use sim::{
    sample_interval, simulate, simulate_thinning, ContextMode, SimConfig, SimError, SimResult,
};
pub use state::{replay, DynamicState, EmbeddingTimeline, Replay, StateError};
pub use train::{
    holdout_nll, initial_params, train, window_objective, LossBreakdown, TrainConfig, TrainError,
    TrainOutcome, TrainTrace, WindowRecord,
};
