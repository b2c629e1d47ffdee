//! Square-root UKF, validation scenarios and the metrics used to compare placements.

mod batch;
mod config;
mod metrics;
mod scenario;
mod srukf;

pub use batch::{run_batch, BatchReport, PlacementSummary, ScenarioSpec};
pub use config::{EstimatorConfig, NoiseLevels};
pub use metrics::{
    count_convergent, state_error, RunMetrics, StateKind, ABSOLUTE_FLOOR, DEFAULT_EPSILON_PERCENT,
    TAIL_SECONDS,
};
pub use scenario::{
    measurement_stream, method1_draw, method1_scenario, method1_with, method2_scenario,
    run_estimation, run_seeds, EstimationRun, FrameMap, Scenario, ScenarioKind,
};
pub use srukf::{
    cholupdate, srukf_step, FilterModel, FilterState, SrUkf, StepOutcome, UnscentedParams,
};
