//! Grid-following converter with LCL filter, shared by the GFL source and the
//! E load. The two differ only in the direction of positive current.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loadmodels::{eload_power, EloadState, NET_PER_DQ_CURRENT};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Converter parameters on the system base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverterParams {
    pub omega_b: f64,
    pub lf: f64,
    pub rf: f64,
    pub cf: f64,
    pub lg: f64,
    pub rg: f64,
    pub kp_pll: f64,
    pub ki_pll: f64,
    pub kp_p: f64,
    pub ki_p: f64,
    pub kp_q: f64,
    pub ki_q: f64,
    pub kp_c: f64,
    pub ki_c: f64,
}

impl ConverterParams {
    /// Re-express device-base values on a system base, where `rating` is the
    /// device rating in system per unit.
    pub fn rescaled(&self, rating: f64) -> Self {
        ConverterParams {
            lf: self.lf / rating,
            rf: self.rf / rating,
            cf: self.cf * rating,
            lg: self.lg / rating,
            rg: self.rg / rating,
            kp_c: self.kp_c / rating,
            ki_c: self.ki_c / rating,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Positive current flows from the network into the converter.
    Load,
    /// Positive current flows from the converter into the network.
    Source,
}

impl Orientation {
    pub fn sigma(self) -> f64 {
        match self {
            Orientation::Load => 1.0,
            Orientation::Source => -1.0,
        }
    }
}

/// How the grid-side inductor reaches the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridPath {
    /// Directly at the terminal bus.
    Bus,
    /// Through an extra series branch whose far end is the given voltage. The
    /// terminal bus sits between the filter and the branch.
    Series { r: f64, x: f64 },
    /// Grid-side current forced to zero.
    Open,
}

#[derive(Debug, Clone, Copy)]
pub struct ConverterEval {
    pub deriv: EloadState,
    pub v_terminal: Complex64,
    /// Grid-side current in network per unit, positive in the orientation's
    /// direction.
    pub i_grid: Complex64,
    pub p: f64,
    pub q: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    orient: Orientation,
    s: &EloadState,
    v_far: Complex64,
    path: GridPath,
    prm: &ConverterParams,
    p_ref: f64,
    q_ref: f64,
    w_sys: f64,
) -> ConverterEval {
    let sg = orient.sigma();
    let k = NET_PER_DQ_CURRENT;
    let wb = prm.omega_b;
    let i_cv = Complex64::new(s.i_cv_d, s.i_cv_q);
    let v_cf = Complex64::new(s.v_cf_d, s.v_cf_q);
    let i_g = match path {
        GridPath::Open => Complex64::new(0.0, 0.0),
        _ => Complex64::new(s.i_g_d, s.i_g_q),
    };
    let (icv, ig) = (k * i_cv, k * i_g);

    let (dig, v_t) = match path {
        GridPath::Bus => {
            let z = Complex64::new(prm.rg, w_sys * prm.lg);
            (wb / prm.lg * (sg * (v_far - v_cf) - z * ig), v_far)
        }
        GridPath::Series { r, x } => {
            let l = prm.lg + x;
            let z = Complex64::new(prm.rg + r, w_sys * l);
            let dig = wb / l * (sg * (v_far - v_cf) - z * ig);
            let v_t = v_far - sg * (Complex64::new(r, w_sys * x) * ig + x / wb * dig);
            (dig, v_t)
        }
        GridPath::Open => (Complex64::new(0.0, 0.0), v_cf),
    };

    let rot = Complex64::from_polar(1.0, -s.pll_theta);
    let v_pll = v_cf * rot;
    let w_pll = 1.0 + prm.kp_pll * v_pll.im + prm.ki_pll * s.pll_eps;

    let (p, q) = eload_power(v_t.re, v_t.im, i_g.re, i_g.im);
    let (ep, eq) = (p_ref - p, q_ref - q);
    let i_ref = Complex64::new(
        prm.kp_p * ep + prm.ki_p * s.xi_p,
        -(prm.kp_q * eq + prm.ki_q * s.xi_q),
    );
    let e = i_ref - i_cv * rot;
    let pi = prm.kp_c * e + prm.ki_c * Complex64::new(s.sigma_d, s.sigma_q);
    let v_cv = v_cf - sg * (J * w_sys * prm.lf * icv + k * pi / rot);

    let dicv = wb / prm.lf * (sg * (v_cf - v_cv) - Complex64::new(prm.rf, w_sys * prm.lf) * icv);
    let dvcf = wb / prm.cf * (sg * (ig - icv) - J * w_sys * prm.cf * v_cf);

    let deriv = EloadState {
        i_cv_d: dicv.re / k,
        i_cv_q: dicv.im / k,
        v_cf_d: dvcf.re,
        v_cf_q: dvcf.im,
        i_g_d: dig.re / k,
        i_g_q: dig.im / k,
        pll_eps: v_pll.im,
        pll_theta: wb * (w_pll - w_sys),
        xi_p: ep,
        xi_q: eq,
        sigma_d: e.re,
        sigma_q: e.im,
    };
    ConverterEval {
        deriv,
        v_terminal: v_t,
        i_grid: ig,
        p,
        q,
    }
}

/// Equilibrium state delivering (`Source`) or consuming (`Load`) exactly
/// `p_ref + j q_ref` at a terminal held at `v_t`.
pub fn initialize(
    orient: Orientation,
    prm: &ConverterParams,
    v_t: Complex64,
    p_ref: f64,
    q_ref: f64,
    w_sys: f64,
) -> Result<EloadState> {
    if !(v_t.norm() > 0.0) || !v_t.is_finite() {
        return Err(Error::Infeasible(format!("converter terminal voltage {v_t} cannot transfer power")));
    }
    let sg = orient.sigma();
    let k = NET_PER_DQ_CURRENT;
    let ig = (Complex64::new(p_ref, q_ref) / v_t).conj();
    let v_cf = v_t - sg * Complex64::new(prm.rg, w_sys * prm.lg) * ig;
    let icv = ig - sg * J * w_sys * prm.cf * v_cf;
    let theta = v_cf.arg();
    let i_cv_pll = icv * Complex64::from_polar(1.0, -theta) / k;

    let solve = |target: f64, gain: f64, what: &str| -> Result<f64> {
        if target == 0.0 {
            Ok(0.0)
        } else if gain == 0.0 {
            Err(Error::Infeasible(format!("{what} integral gain is zero but a nonzero output is required")))
        } else {
            Ok(target / gain)
        }
    };
    let xi_p = solve(i_cv_pll.re, prm.ki_p, "active-power")?;
    let xi_q = solve(-i_cv_pll.im, prm.ki_q, "reactive-power")?;
    let sigma_d = solve(prm.rf * i_cv_pll.re, prm.ki_c, "current-loop")?;
    let sigma_q = solve(prm.rf * i_cv_pll.im, prm.ki_c, "current-loop")?;
    let state = EloadState {
        i_cv_d: icv.re / k,
        i_cv_q: icv.im / k,
        v_cf_d: v_cf.re,
        v_cf_q: v_cf.im,
        i_g_d: ig.re / k,
        i_g_q: ig.im / k,
        pll_eps: 0.0,
        pll_theta: theta,
        xi_p,
        xi_q,
        sigma_d,
        sigma_q,
    };
    if !state.to_array().iter().all(|v| v.is_finite()) {
        return Err(Error::Infeasible("nonfinite converter operating point".into()));
    }
    Ok(state)
}
