//! State-space form, extended Kalman filter, two-step estimation and
//! synthetic panels.

mod estimate;
mod filter;
mod panel;
mod simulate;

pub use estimate::{
    estimate_stage1, estimate_stage2, stage1_standard_errors, stage1_start, EstimationError,
    EstimationOptions, EstimationReport, ParamStdErr, RunSummary, Stage1Layout,
};
pub use filter::{
    build_state_space, ekf_loglik, ekf_loglik_with, AugmentedState, FilterError, FilterOptions,
    FilterRun, FilterState, Mat5, MeasurementRow, Series, Stage, StateSpace, Vec5, VolEvaluation,
    MIN_MEASUREMENT_VARIANCE, SEASONAL_PRIOR_VARIANCE, SHORT_RATE_VARIANCE, VOL_EPS,
};
pub use panel::{MaturitySchedule, PanelData, Quarter, QuarterParseError, PANEL_MATURITIES};
pub use simulate::{simulate_panel, simulate_panel_with, PanelSimOptions, SimulatedPanel};
