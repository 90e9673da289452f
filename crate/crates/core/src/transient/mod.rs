//! Stiff time-domain simulation with a scheduled branch trip.
//!
//! The integrator is TR-BDF2 (trapezoid to `t + γh`, then BDF2 to `t + h`)
//! applied to `M z' = F(z)` with `M = diag(I, 0)`, so algebraic rows are
//! enforced at both stage points.

mod classify;
mod integrator;

pub use classify::{classify, overshoot, Classification};
pub use integrator::{simulate, SimOptions};

use serde::{Deserialize, Serialize};

use crate::dae::{BranchEvent, ScenarioSpec};
use crate::error::{Error, Result};

pub const PRIMARY_SIGNAL: &str = "bus3_inverter_current_mag";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// Final value of every recorded signal, in `signal_names` order.
    Converged { steady: Vec<f64> },
    Diverged { t_fail: f64, reason: String },
    MaxTimeReached,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Converged { .. } => "converged",
            Outcome::Diverged { .. } => "diverged",
            Outcome::MaxTimeReached => "max_time_reached",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub jacobians: usize,
    pub factorizations: usize,
    pub residual_evals: usize,
    pub h_min: f64,
    pub h_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientMetadata {
    pub scenario: ScenarioSpec,
    pub event: Option<BranchEvent>,
    pub horizon: f64,
    pub rtol: f64,
    pub atol: f64,
    pub sample_rate: f64,
    pub settle_window: f64,
    pub settle_tol: f64,
    pub stats: SolverStats,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientResult {
    pub t: Vec<f64>,
    pub signal_names: Vec<String>,
    /// One series per name, each the length of `t`.
    pub signals: Vec<Vec<f64>>,
    pub outcome: Outcome,
    pub metadata: TransientMetadata,
    /// Largest absolute departure of any state from the initial point before
    /// the event (over the whole run when there is none).
    pub pre_event_max_deviation: f64,
    pub final_x: Vec<f64>,
    pub final_y: Vec<f64>,
}

impl TransientResult {
    pub fn signal(&self, name: &str) -> Result<&[f64]> {
        self.signal_names
            .iter()
            .position(|n| n == name)
            .map(|k| self.signals[k].as_slice())
            .ok_or_else(|| Error::Config(format!("no recorded signal named '{name}'")))
    }

    pub fn steady_value(&self, name: &str) -> Result<f64> {
        match &self.outcome {
            Outcome::Converged { steady } => {
                let k = self
                    .signal_names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::Config(format!("no recorded signal named '{name}'")))?;
                Ok(steady[k])
            }
            _ => Err(Error::NotConverged),
        }
    }

    pub fn t_event(&self) -> f64 {
        self.metadata.event.as_ref().map_or(0.0, |e| e.t_trip)
    }

    /// `t,<signal>...` with one row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for n in &self.signal_names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (k, t) in self.t.iter().enumerate() {
            out.push_str(&format!("{t:.7}"));
            for s in &self.signals {
                out.push_str(&format!(",{:.12e}", s[k]));
            }
            out.push('\n');
        }
        out
    }

    pub fn metadata_json(&self) -> String {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            metadata: &'a TransientMetadata,
            outcome: &'a Outcome,
            signal_names: &'a [String],
            samples: usize,
        }
        serde_json::to_string_pretty(&Sidecar {
            metadata: &self.metadata,
            outcome: &self.outcome,
            signal_names: &self.signal_names,
            samples: self.t.len(),
        })
        .expect("metadata serializes")
    }
}
