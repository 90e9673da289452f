//! Reference computations written from textbook formulas, kept apart from
//! `zipe-core` so the two can check each other. Nothing here is tuned for
//! speed.

mod case;
mod gfl;
mod linalg;
mod powerflow;
mod rlc;
mod steady;

pub use case::{OracleBranch, OracleBus, OracleCase, OracleGenerator, OracleLoad};
pub use gfl::{single_gfl_step_response, GflOracleParams, StepTrace};
pub use linalg::solve_dense;
pub use powerflow::{gs_power_flow, textbook_ybus, GsSolution};
pub use rlc::{pi_line_resonance, rlc_eigs};
pub use steady::{droop_steady_state, DroopSettings, DroopSolution, GenSetting, LoadSetting};

/// A reference value together with how it was obtained and how closely the
/// method itself can be trusted.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    pub value: T,
    pub method: &'static str,
    pub tolerance: f64,
}
