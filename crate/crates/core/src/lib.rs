//! ZIP, E and composite ZIP-E loads on a dynamic transmission grid.
//!
//! The crate covers the whole study chain: network data and admittances,
//! Newton power flow, device and load dynamics in a common synchronous dq
//! frame, system assembly and initialization, small-signal analysis, stiff
//! time-domain simulation of branch trips and a batch harness that writes CSV,
//! JSON and SVG artifacts.

pub mod dae;
pub mod devices;
pub mod error;
pub mod harness;
pub mod loadmodels;
pub mod netdata;
pub mod par;
pub mod powerflow;
pub mod smallsignal;
pub mod transient;

pub use dae::{EquilibriumPoint, LineModel, ScenarioSpec, SystemModel};
pub use error::{Error, Result};
pub use loadmodels::{CompositionVector, Family};
pub use netdata::NetworkCase;
pub use powerflow::PFSolution;
