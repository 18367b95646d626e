//! Estimation: flat parameter vectors, the simulation-error loss with its
//! reverse-mode gradient, Adam and L-BFGS, and the multi-start fit.

mod fit;
mod layout;
mod loss;
mod optim;

pub use fit::{
    fit, fit_initial_state, init_params, FitResult, Phase, RestartSummary, TraceRecord,
    TrainConfig, MAX_INIT_ATTEMPTS,
};
pub use layout::{ModelSpec, ParamLayout, SchedulingKind};
pub use loss::{loss, loss_and_gradient, SimLoss};
pub use optim::{
    adam_run, lbfgs_run, AdamConfig, IterRecord, LbfgsConfig, Objective, OptimResult, StopReason,
};

use thiserror::Error;

use crate::bench::BenchError;
use crate::lfr::LfrError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("all {0} restarts ended with a non-finite loss")]
    AllRestartsFailed(usize),
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error(transparent)]
    Lfr(#[from] LfrError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}
