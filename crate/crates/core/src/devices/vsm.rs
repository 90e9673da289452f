//! Grid-forming converter with virtual-synchronous-machine power control,
//! cascaded voltage and current PI loops and an LCL output filter. Currents
//! are in network per unit.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{GridPath, VsmParams};
use crate::error::{Error, Result};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VsmState {
    pub delta: f64,
    pub omega: f64,
    pub xi_v_d: f64,
    pub xi_v_q: f64,
    pub zeta_d: f64,
    pub zeta_q: f64,
    pub i_cv_d: f64,
    pub i_cv_q: f64,
    pub v_cf_d: f64,
    pub v_cf_q: f64,
    pub i_g_d: f64,
    pub i_g_q: f64,
}

impl VsmState {
    pub const LEN: usize = 12;
    pub const NAMES: [&'static str; 12] = [
        "delta", "omega", "xi_v_d", "xi_v_q", "zeta_d", "zeta_q", "i_cv_d", "i_cv_q", "v_cf_d", "v_cf_q", "i_g_d",
        "i_g_q",
    ];

    pub fn to_array(&self) -> [f64; 12] {
        [
            self.delta,
            self.omega,
            self.xi_v_d,
            self.xi_v_q,
            self.zeta_d,
            self.zeta_q,
            self.i_cv_d,
            self.i_cv_q,
            self.v_cf_d,
            self.v_cf_q,
            self.i_g_d,
            self.i_g_q,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        VsmState {
            delta: v[0],
            omega: v[1],
            xi_v_d: v[2],
            xi_v_q: v[3],
            zeta_d: v[4],
            zeta_q: v[5],
            i_cv_d: v[6],
            i_cv_q: v[7],
            v_cf_d: v[8],
            v_cf_q: v[9],
            i_g_d: v[10],
            i_g_q: v[11],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VsmSetpoint {
    pub p_ref: f64,
    pub q_ref: f64,
    pub v_ref: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct VsmEval {
    pub deriv: VsmState,
    pub current: Complex64,
    pub v_terminal: Complex64,
}

pub fn vsm_evaluate(
    s: &VsmState,
    v_far: Complex64,
    path: GridPath,
    p: &VsmParams,
    sp: &VsmSetpoint,
    omega_b: f64,
    w_sys: f64,
) -> VsmEval {
    let wb = omega_b;
    let i_cv = Complex64::new(s.i_cv_d, s.i_cv_q);
    let v_cf = Complex64::new(s.v_cf_d, s.v_cf_q);
    let i_g = match path {
        GridPath::Open => Complex64::new(0.0, 0.0),
        _ => Complex64::new(s.i_g_d, s.i_g_q),
    };
    let (dig, v_t) = match path {
        GridPath::Bus => (wb / p.lg * (v_cf - v_far - Complex64::new(p.rg, w_sys * p.lg) * i_g), v_far),
        GridPath::Series { r, x } => {
            let l = p.lg + x;
            let dig = wb / l * (v_cf - v_far - Complex64::new(p.rg + r, w_sys * l) * i_g);
            (dig, v_far + Complex64::new(r, w_sys * x) * i_g + x / wb * dig)
        }
        GridPath::Open => (Complex64::new(0.0, 0.0), v_cf),
    };

    let s_e = v_cf * i_g.conj();
    let domega = (sp.p_ref - s_e.re - p.kd * (s.omega - w_sys) - p.k_omega * (s.omega - 1.0)) / p.ta;

    let rot = Complex64::from_polar(1.0, -s.delta);
    let (v_cf_r, i_g_r, i_cv_r) = (v_cf * rot, i_g * rot, i_cv * rot);
    let v_ref = sp.v_ref + p.kq * (sp.q_ref - s_e.im) - Complex64::new(p.rv, s.omega * p.lv) * i_g_r;
    let e_v = v_ref - v_cf_r;
    let i_ref = p.kff_i * i_g_r + J * s.omega * p.cf * v_cf_r + p.kp_v * e_v + p.ki_v * Complex64::new(s.xi_v_d, s.xi_v_q);
    let e_i = i_ref - i_cv_r;
    let v_cv_r = v_cf_r + J * s.omega * p.lf * i_cv_r + p.kp_c * e_i + p.ki_c * Complex64::new(s.zeta_d, s.zeta_q);
    let v_cv = v_cv_r / rot;

    let dicv = wb / p.lf * (v_cv - v_cf - Complex64::new(p.rf, w_sys * p.lf) * i_cv);
    let dvcf = wb / p.cf * (i_cv - i_g - J * w_sys * p.cf * v_cf);

    VsmEval {
        deriv: VsmState {
            delta: wb * (s.omega - w_sys),
            omega: domega,
            xi_v_d: e_v.re,
            xi_v_q: e_v.im,
            zeta_d: e_i.re,
            zeta_q: e_i.im,
            i_cv_d: dicv.re,
            i_cv_q: dicv.im,
            v_cf_d: dvcf.re,
            v_cf_q: dvcf.im,
            i_g_d: dig.re,
            i_g_q: dig.im,
        },
        current: i_g,
        v_terminal: v_t,
    }
}

pub fn vsm_derivatives(s: &VsmState, v_terminal: Complex64, p: &VsmParams, sp: &VsmSetpoint, omega_b: f64, w_sys: f64) -> VsmState {
    vsm_evaluate(s, v_terminal, GridPath::Bus, p, sp, omega_b, w_sys).deriv
}

/// Back-solve states and references so the converter delivers `s_out` at
/// terminal voltage `v_t` with zero frequency deviation.
pub fn initialize_vsm(p: &VsmParams, v_t: Complex64, s_out: Complex64) -> Result<(VsmState, VsmSetpoint)> {
    if !(v_t.norm() > 0.0) {
        return Err(Error::Infeasible("VSM terminal voltage is zero".into()));
    }
    let i_g = (s_out / v_t).conj();
    let v_cf = v_t + Complex64::new(p.rg, p.lg) * i_g;
    let i_cv = i_g + J * p.cf * v_cf;
    let emf = v_cf + Complex64::new(p.rv, p.lv) * i_g;
    let delta = emf.arg();
    let rot = Complex64::from_polar(1.0, -delta);
    let (i_cv_r, i_g_r, v_cf_r) = (i_cv * rot, i_g * rot, v_cf * rot);
    let xi_v = if p.ki_v == 0.0 {
        return Err(Error::Infeasible("VSM voltage-loop integral gain is zero".into()));
    } else {
        (i_cv_r - p.kff_i * i_g_r - J * p.cf * v_cf_r) / p.ki_v
    };
    let zeta = if p.rf == 0.0 {
        Complex64::new(0.0, 0.0)
    } else if p.ki_c == 0.0 {
        return Err(Error::Infeasible("VSM current-loop integral gain is zero".into()));
    } else {
        p.rf * i_cv_r / p.ki_c
    };
    let s_e = v_cf * i_g.conj();
    let state = VsmState {
        delta,
        omega: 1.0,
        xi_v_d: xi_v.re,
        xi_v_q: xi_v.im,
        zeta_d: zeta.re,
        zeta_q: zeta.im,
        i_cv_d: i_cv.re,
        i_cv_q: i_cv.im,
        v_cf_d: v_cf.re,
        v_cf_q: v_cf.im,
        i_g_d: i_g.re,
        i_g_q: i_g.im,
    };
    let sp = VsmSetpoint {
        p_ref: s_e.re,
        q_ref: s_e.im,
        v_ref: emf.norm(),
    };
    Ok((state, sp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netdata::{DeviceParams, NetworkCase};

    #[test]
    fn fixed_point() {
        let case = NetworkCase::case9();
        let DeviceParams::Vsm(p) = &case.generators[1].params else { unreachable!() };
        let p = p.on_system_base(case.base_mva);
        let v = Complex64::from_polar(1.025, 0.16);
        let (s, sp) = initialize_vsm(&p, v, Complex64::new(1.0, 0.1)).unwrap();
        let ev = vsm_evaluate(&s, v, GridPath::Bus, &p, &sp, case.omega_base(), 1.0);
        assert!(ev.deriv.to_array().iter().all(|x| x.abs() < 1e-9), "{:?}", ev.deriv);
        assert!((v * ev.current.conj() - Complex64::new(1.0, 0.1)).norm() < 1e-12);
    }
}
