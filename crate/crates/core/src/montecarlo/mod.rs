//! Monte Carlo bond pricing under the discretized dynamics.

mod engine;
pub mod normal;
pub mod rng;
pub mod step;

pub use engine::{
    price_bond_mc, yield_diff_curve, Dynamics, MCEstimate, McError, SimConfig, SimConfigError,
    SimulationRun, YieldDiffRecord, BAND_ROUNDING_BP,
};
pub use step::{step_p, step_q_cutoff, step_q_raw};
