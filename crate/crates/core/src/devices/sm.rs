//! Two-axis synchronous machine with algebraic stator, first-order exciter
//! and first-order droop governor.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{GridPath, SmParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SmState {
    pub delta: f64,
    pub omega: f64,
    pub eq_p: f64,
    pub ed_p: f64,
    pub efd: f64,
    pub pm: f64,
    /// Stator current toward the network, network frame. Only a state when
    /// stator transients are modeled.
    pub i_g_d: f64,
    pub i_g_q: f64,
}

impl SmState {
    pub const LEN: usize = 8;
    pub const NAMES: [&'static str; 8] = ["delta", "omega", "eq_p", "ed_p", "efd", "pm", "i_g_d", "i_g_q"];

    pub fn to_array(&self) -> [f64; 8] {
        [self.delta, self.omega, self.eq_p, self.ed_p, self.efd, self.pm, self.i_g_d, self.i_g_q]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        SmState {
            delta: v[0],
            omega: v[1],
            eq_p: v[2],
            ed_p: v[3],
            efd: v[4],
            pm: v[5],
            i_g_d: v[6],
            i_g_q: v[7],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmSetpoint {
    pub p_ref: f64,
    pub v_ref: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SmEval {
    pub deriv: SmState,
    /// Stator current injected toward the network, network frame.
    pub current: Complex64,
    pub v_terminal: Complex64,
}

fn to_machine(delta: f64) -> Complex64 {
    Complex64::from_polar(1.0, -(delta - FRAC_PI_2))
}

/// Evaluate the machine against the voltage `v_far` at the end of `path`.
/// With `stator_dynamic` the stator current is the `i_g` state pair, carried
/// through the transient reactance as an inductance; otherwise the stator is
/// algebraic. Parameters must be on the system base.
#[allow(clippy::too_many_arguments)]
pub fn sm_evaluate(
    s: &SmState,
    v_far: Complex64,
    path: GridPath,
    p: &SmParams,
    sp: &SmSetpoint,
    omega_b: f64,
    w_sys: f64,
    stator_dynamic: bool,
) -> SmEval {
    let m = to_machine(s.delta);
    let e = Complex64::new(s.ed_p, s.eq_p);
    let zero = Complex64::new(0.0, 0.0);
    let (re, xe) = match path {
        GridPath::Series { r, x } => (r, x),
        _ => (0.0, 0.0),
    };
    let (current, v_t, di) = match path {
        GridPath::Open => (zero, e / m, zero),
        _ if stator_dynamic => {
            let i = Complex64::new(s.i_g_d, s.i_g_q);
            let im = i * m;
            let e_eff = Complex64::new(s.ed_p + (p.xq_p - p.xd_p) * im.im, s.eq_p) / m;
            let l = p.xd_p + xe;
            let di = omega_b / l * (e_eff - v_far - Complex64::new(p.ra + re, w_sys * l) * i);
            (i, v_far + Complex64::new(re, w_sys * xe) * i + xe / omega_b * di, di)
        }
        _ => {
            let v = v_far * m;
            let r = p.ra + re;
            let (xd, xq) = (p.xd_p + xe, p.xq_p + xe);
            let (a, b) = (s.ed_p - v.re, s.eq_p - v.im);
            let det = r * r + xd * xq;
            let id = (r * a + xq * b) / det;
            let iq = (r * b - xd * a) / det;
            let i = Complex64::new(id, iq) / m;
            (i, v_far + Complex64::new(re, xe) * i, zero)
        }
    };
    let im = current * m;
    let e_eff = Complex64::new(s.ed_p + (p.xq_p - p.xd_p) * im.im, s.eq_p);
    let te = (e_eff * im.conj()).re;
    let deriv = SmState {
        delta: omega_b * (s.omega - w_sys),
        omega: (s.pm - te - p.d * (s.omega - w_sys)) / (2.0 * p.h),
        eq_p: (s.efd - s.eq_p - (p.xd - p.xd_p) * im.re) / p.td0_p,
        ed_p: (-s.ed_p + (p.xq - p.xq_p) * im.im) / p.tq0_p,
        efd: (p.avr.ka * (sp.v_ref - v_t.norm()) - s.efd) / p.avr.ta,
        pm: (sp.p_ref - (s.omega - 1.0) / p.gov.r_droop - s.pm) / p.gov.tg,
        i_g_d: di.re,
        i_g_q: di.im,
    };
    SmEval {
        deriv,
        current,
        v_terminal: v_t,
    }
}

/// Time derivatives for a machine connected directly to `v_terminal`.
pub fn sm_derivatives(s: &SmState, v_terminal: Complex64, p: &SmParams, sp: &SmSetpoint, omega_b: f64, w_sys: f64) -> SmState {
    sm_evaluate(s, v_terminal, GridPath::Bus, p, sp, omega_b, w_sys, false).deriv
}

/// Back-solve the machine states and setpoints for terminal voltage `v_t`
/// and delivered power `s_out`.
pub fn initialize_sm(p: &SmParams, v_t: Complex64, s_out: Complex64) -> Result<(SmState, SmSetpoint)> {
    if !(v_t.norm() > 0.0) {
        return Err(Error::Infeasible("synchronous machine terminal voltage is zero".into()));
    }
    let i = (s_out / v_t).conj();
    let e_q = v_t + Complex64::new(p.ra, p.xq) * i;
    let delta = e_q.arg();
    let m = to_machine(delta);
    let (v, im) = (v_t * m, i * m);
    let ed_p = v.re + p.ra * im.re - p.xq_p * im.im;
    let eq_p = v.im + p.ra * im.im + p.xd_p * im.re;
    let efd = eq_p + (p.xd - p.xd_p) * im.re;
    let te = (v_t * i.conj()).re + p.ra * i.norm_sqr();
    let state = SmState {
        delta,
        omega: 1.0,
        eq_p,
        ed_p,
        efd,
        pm: te,
        i_g_d: i.re,
        i_g_q: i.im,
    };
    let sp = SmSetpoint {
        p_ref: te,
        v_ref: v_t.norm() + efd / p.avr.ka,
    };
    Ok((state, sp))
}
