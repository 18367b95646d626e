//! LPV model in linear fractional representation: Δ-block structure,
//! well-posed `D_zw` construction, simulation, elimination to rational
//! state-space form, realization conversions and well-posedness checks.

mod delta;
mod model;
mod plant;
mod realization;
mod simulate;
mod verify;
mod wellposed;

pub use delta::DeltaStructure;
pub use model::{
    DataScalers, DocBlocks, DocDims, LfrModel, ModelDocument, ModelMode, SchedulingMap,
    SchedulingTag, MODEL_FORMAT,
};
pub use plant::{LfrPlant, PlantDims};
pub use realization::{
    affine_ss_to_lfr, normalize_scheduling, AffineRealization, AffineSsModel, ScheduleMap,
    SchedulingBox, DEFAULT_RANK_TOL,
};
pub(crate) use simulate::loop_matrix;
pub use simulate::{eliminate_to_ss, simulate, FrozenSs, Scheduling, Trajectory};
pub use verify::{is_well_posed, WellPosednessReport, SINGULAR_DET_TOL};
pub use wellposed::{FactorGradient, WellPosedFactors, DEFAULT_EPSILON, MAX_EPSILON};

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::sched::SchedError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LfrError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("block {0} has non-finite entries")]
    NonFinite(String),
    #[error("singular latent loop at step {0}: ill-posed scheduling excursion")]
    SingularStep(usize),
    #[error("state diverged at step {0}")]
    Diverged(usize),
    #[error("I - D_zw Delta(p) is singular at the requested scheduling point")]
    SingularPoint,
    #[error("I - D_zw Delta(c) is singular at the box center")]
    SingularCenter,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Sched(#[from] SchedError),
}
