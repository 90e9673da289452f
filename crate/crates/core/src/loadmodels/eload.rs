use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::devices::converter::{self, ConverterParams, GridPath, Orientation};
use crate::error::Result;

/// E-load parameters on the load's own rating. `i_base` is that rating in
/// system per unit at full E share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EloadParams {
    pub kp_pll: f64,
    pub ki_pll: f64,
    pub kp_p: f64,
    pub ki_p: f64,
    pub kp_q: f64,
    pub ki_q: f64,
    pub kp_c: f64,
    pub ki_c: f64,
    pub lf: f64,
    pub rf: f64,
    pub cf: f64,
    pub lg: f64,
    pub rg: f64,
    #[serde(default = "one")]
    pub i_base: f64,
}

fn one() -> f64 {
    1.0
}

impl EloadParams {
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [("lf", self.lf), ("cf", self.cf), ("lg", self.lg), ("i_base", self.i_base)] {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        let nonneg = [
            ("rf", self.rf),
            ("rg", self.rg),
            ("kp_pll", self.kp_pll),
            ("ki_pll", self.ki_pll),
            ("kp_p", self.kp_p),
            ("ki_p", self.ki_p),
            ("kp_q", self.kp_q),
            ("ki_q", self.ki_q),
            ("kp_c", self.kp_c),
            ("ki_c", self.ki_c),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) {
                return Err(format!("{name} must be nonnegative, got {v}"));
            }
        }
        Ok(())
    }

    /// System-base converter parameters for an E load whose rating is
    /// `i_base · share` system per unit.
    pub fn converter(&self, share: f64, omega_b: f64) -> ConverterParams {
        ConverterParams {
            omega_b,
            lf: self.lf,
            rf: self.rf,
            cf: self.cf,
            lg: self.lg,
            rg: self.rg,
            kp_pll: self.kp_pll,
            ki_pll: self.ki_pll,
            kp_p: self.kp_p,
            ki_p: self.ki_p,
            kp_q: self.kp_q,
            ki_q: self.ki_q,
            kp_c: self.kp_c,
            ki_c: self.ki_c,
        }
        .rescaled(self.i_base * share)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EloadState {
    pub i_cv_d: f64,
    pub i_cv_q: f64,
    pub v_cf_d: f64,
    pub v_cf_q: f64,
    pub i_g_d: f64,
    pub i_g_q: f64,
    pub pll_eps: f64,
    pub pll_theta: f64,
    pub xi_p: f64,
    pub xi_q: f64,
    pub sigma_d: f64,
    pub sigma_q: f64,
}

impl EloadState {
    pub const LEN: usize = 12;
    pub const NAMES: [&'static str; 12] = [
        "i_cv_d", "i_cv_q", "v_cf_d", "v_cf_q", "i_g_d", "i_g_q", "pll_eps", "pll_theta", "xi_p", "xi_q",
        "sigma_d", "sigma_q",
    ];

    pub fn to_array(&self) -> [f64; 12] {
        [
            self.i_cv_d,
            self.i_cv_q,
            self.v_cf_d,
            self.v_cf_q,
            self.i_g_d,
            self.i_g_q,
            self.pll_eps,
            self.pll_theta,
            self.xi_p,
            self.xi_q,
            self.sigma_d,
            self.sigma_q,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        EloadState {
            i_cv_d: v[0],
            i_cv_q: v[1],
            v_cf_d: v[2],
            v_cf_q: v[3],
            i_g_d: v[4],
            i_g_q: v[5],
            pll_eps: v[6],
            pll_theta: v[7],
            xi_p: v[8],
            xi_q: v[9],
            sigma_d: v[10],
            sigma_q: v[11],
        }
    }
}

/// `P = ½(v_d i_d + v_q i_q)`, `Q = ½(v_q i_d − v_d i_q)`.
pub fn eload_power(v_d: f64, v_q: f64, i_d: f64, i_q: f64) -> (f64, f64) {
    (0.5 * (v_d * i_d + v_q * i_q), 0.5 * (v_q * i_d - v_d * i_q))
}

/// E-load dynamics at bus voltage `v_bus`. Parameters are on the system base
/// (see [`EloadParams::converter`]); positive references mean consumption.
pub fn eload_derivatives(
    state: &EloadState,
    v_bus: Complex64,
    params: &ConverterParams,
    p_ref: f64,
    q_ref: f64,
    w_sys: f64,
) -> EloadState {
    converter::evaluate(Orientation::Load, state, v_bus, GridPath::Bus, params, p_ref, q_ref, w_sys).deriv
}

pub fn initialize_eload(params: &ConverterParams, v_bus: Complex64, p_ref: f64, q_ref: f64) -> Result<EloadState> {
    converter::initialize(Orientation::Load, params, v_bus, p_ref, q_ref, 1.0)
}
