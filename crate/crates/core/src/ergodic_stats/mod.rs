//! Birkhoff-average diagnostics along suspension orbits: sectional
//! expansion, volume growth, slow recurrence, return times and empirical
//! measures.

pub mod accumulator;
pub mod measure;
pub mod recurrence;
pub mod sweep;
pub mod verdicts;

use thiserror::Error;

use crate::field_library::ModelError;
use crate::flow_engine::FlowError;
use crate::suspension::SuspensionError;

pub use accumulator::{sr_average, truncated_distance, wsr_frequency, BirkhoffAccumulator, Checkpoint, TauCheckpoint};
pub use measure::{empirical_measure_update, tv_distance, EmpiricalMeasure, GridSpec};
pub use recurrence::{
    ball_passages, crossing_delta_integrals, fit_lebergodic, lebergodic_integral, lebesgue_recurrence_profile,
    linearized_ball_integral, recurrence_bound_oracle, BallPassage, RecurrenceBound, RecurrenceProfile, SingularSet,
};
pub use sweep::{slowdown_sweep, SweepConfig, SweepRow};
pub use verdicts::{condition_verdicts, tau_cesaro_stable, tau_loglaw_fit, window_check, ErgodicReport, LogLawFit, Verdict};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no data accumulated")]
    Empty,
    #[error("value {0} is not in the configured grid")]
    NotInGrid(f64),
    #[error("accumulators or measures use different grids")]
    IncompatibleGrids,
    #[error("point ({a}, {b}) lies outside the measure grid")]
    OutsideGrid { a: f64, b: f64 },
    #[error("entry offset {x0} must satisfy 0 < |x0| < r = {r}")]
    InvalidOffset { x0: f64, r: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("need at least {need} crossings, got {got}")]
    InsufficientCrossings { got: usize, need: usize },
    #[error("input lengths differ")]
    LengthMismatch,
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Suspension(#[from] SuspensionError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}
