//! Generation devices (synchronous machine, virtual synchronous machine,
//! grid-following source) and the two transmission-line representations.
//!
//! Parameter blocks are stored on the device rating (`mva_base`) and turned
//! into system-base values by the `on_system_base` methods.

pub mod converter;
pub mod lines;
pub mod sm;
pub mod vsm;

use serde::{Deserialize, Serialize};

pub use converter::{ConverterParams, GridPath, Orientation};
pub use lines::{dynpi_derivatives, solve_algebraic, statpi_network_solve, NetworkSolveOptions};
pub use sm::{initialize_sm, sm_derivatives, SmSetpoint, SmState};
pub use vsm::{initialize_vsm, vsm_derivatives, VsmSetpoint, VsmState};

fn check_positive(items: &[(&str, f64)]) -> Result<(), String> {
    for (name, v) in items {
        if !(*v > 0.0) {
            return Err(format!("{name} must be positive, got {v}"));
        }
    }
    Ok(())
}

fn check_nonnegative(items: &[(&str, f64)]) -> Result<(), String> {
    for (name, v) in items {
        if !(*v >= 0.0) {
            return Err(format!("{name} must be nonnegative, got {v}"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvrParams {
    pub ka: f64,
    pub ta: f64,
    pub v_ref: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GovParams {
    pub r_droop: f64,
    pub tg: f64,
    pub p_ref: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmParams {
    pub h: f64,
    pub d: f64,
    pub xd: f64,
    pub xq: f64,
    pub xd_p: f64,
    pub xq_p: f64,
    pub td0_p: f64,
    pub tq0_p: f64,
    pub ra: f64,
    pub avr: AvrParams,
    pub gov: GovParams,
    /// Machine rating; absent means the system base.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mva_base: Option<f64>,
}

impl SmParams {
    pub fn validate(&self) -> Result<(), String> {
        check_positive(&[
            ("h", self.h),
            ("xd", self.xd),
            ("xq", self.xq),
            ("xd_p", self.xd_p),
            ("xq_p", self.xq_p),
            ("td0_p", self.td0_p),
            ("tq0_p", self.tq0_p),
            ("avr.ka", self.avr.ka),
            ("avr.ta", self.avr.ta),
            ("gov.r_droop", self.gov.r_droop),
            ("gov.tg", self.gov.tg),
            ("mva_base", self.mva_base.unwrap_or(1.0)),
        ])?;
        check_nonnegative(&[("d", self.d), ("ra", self.ra)])
    }

    pub fn on_system_base(&self, base_mva: f64) -> SmParams {
        let k = self.mva_base.map_or(1.0, |m| m / base_mva);
        SmParams {
            h: self.h * k,
            d: self.d * k,
            xd: self.xd / k,
            xq: self.xq / k,
            xd_p: self.xd_p / k,
            xq_p: self.xq_p / k,
            ra: self.ra / k,
            gov: GovParams {
                r_droop: self.gov.r_droop / k,
                ..self.gov
            },
            mva_base: None,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VsmParams {
    pub ta: f64,
    pub kd: f64,
    pub k_omega: f64,
    /// Reactive-power droop on the capacitor voltage reference.
    #[serde(default)]
    pub kq: f64,
    pub kp_v: f64,
    pub ki_v: f64,
    /// Virtual impedance subtracted from the voltage reference.
    #[serde(default)]
    pub rv: f64,
    #[serde(default)]
    pub lv: f64,
    /// Grid-current feedforward gain in the voltage loop.
    #[serde(default)]
    pub kff_i: f64,
    pub kp_c: f64,
    pub ki_c: f64,
    pub lf: f64,
    pub rf: f64,
    pub cf: f64,
    pub lg: f64,
    pub rg: f64,
    pub mva_base: f64,
}

impl VsmParams {
    pub fn validate(&self) -> Result<(), String> {
        check_positive(&[
            ("ta", self.ta),
            ("lf", self.lf),
            ("cf", self.cf),
            ("lg", self.lg),
            ("mva_base", self.mva_base),
        ])?;
        check_nonnegative(&[
            ("kd", self.kd),
            ("k_omega", self.k_omega),
            ("kq", self.kq),
            ("kp_v", self.kp_v),
            ("ki_v", self.ki_v),
            ("kp_c", self.kp_c),
            ("ki_c", self.ki_c),
            ("rf", self.rf),
            ("rg", self.rg),
        ])
    }

    pub fn on_system_base(&self, base_mva: f64) -> VsmParams {
        let k = self.mva_base / base_mva;
        VsmParams {
            ta: self.ta * k,
            kd: self.kd * k,
            k_omega: self.k_omega * k,
            kq: self.kq / k,
            kp_v: self.kp_v * k,
            ki_v: self.ki_v * k,
            rv: self.rv / k,
            lv: self.lv / k,
            kff_i: self.kff_i,
            kp_c: self.kp_c / k,
            ki_c: self.ki_c / k,
            lf: self.lf / k,
            rf: self.rf / k,
            cf: self.cf * k,
            lg: self.lg / k,
            rg: self.rg / k,
            mva_base: base_mva,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GflParams {
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
    pub mva_base: f64,
}

impl GflParams {
    pub fn validate(&self) -> Result<(), String> {
        check_positive(&[("lf", self.lf), ("cf", self.cf), ("lg", self.lg), ("mva_base", self.mva_base)])?;
        check_nonnegative(&[
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
        ])
    }

    pub fn converter(&self, base_mva: f64, omega_b: f64) -> ConverterParams {
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
        .rescaled(self.mva_base / base_mva)
    }
}

/// GFL source dynamics: the E-load converter with positive current leaving
/// the converter.
#[allow(clippy::too_many_arguments)]
pub fn gfl_source_derivatives(
    state: &crate::loadmodels::EloadState,
    v_terminal: num_complex::Complex64,
    params: &ConverterParams,
    p_ref: f64,
    q_ref: f64,
    w_sys: f64,
) -> crate::loadmodels::EloadState {
    converter::evaluate(Orientation::Source, state, v_terminal, GridPath::Bus, params, p_ref, q_ref, w_sys).deriv
}

pub fn initialize_gfl(
    params: &ConverterParams,
    v_terminal: num_complex::Complex64,
    p_ref: f64,
    q_ref: f64,
) -> crate::error::Result<crate::loadmodels::EloadState> {
    converter::initialize(Orientation::Source, params, v_terminal, p_ref, q_ref, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loadmodels::{eload_power, EloadState};
    use crate::netdata::{DeviceParams, NetworkCase};
    use num_complex::Complex64;

    fn gfl() -> ConverterParams {
        let case = NetworkCase::case9();
        match &case.generators[2].params {
            DeviceParams::Gfl(p) => p.converter(case.base_mva, case.omega_base()),
            _ => unreachable!(),
        }
    }

    #[test]
    fn gfl_equilibrium_delivers_setpoint() {
        let p = gfl();
        let v = Complex64::from_polar(1.025, 0.08);
        let s = initialize_gfl(&p, v, 0.6, -0.1).unwrap();
        let d = gfl_source_derivatives(&s, v, &p, 0.6, -0.1, 1.0);
        assert!(d.to_array().iter().all(|x| x.abs() < 1e-9), "{d:?}");
        let (pp, qq) = eload_power(v.re, v.im, s.i_g_d, s.i_g_q);
        assert!((pp - 0.6).abs() < 1e-12 && (qq + 0.1).abs() < 1e-12);
    }

    #[test]
    fn gfl_mirrors_eload_under_sign_flip() {
        let p = gfl();
        let v = Complex64::from_polar(1.0, 0.0);
        let src = initialize_gfl(&p, v, 0.4, 0.0).unwrap();
        let load = crate::loadmodels::initialize_eload(&p, v, -0.4, 0.0).unwrap();
        let (ps, _) = eload_power(v.re, v.im, src.i_g_d, src.i_g_q);
        let (pl, _) = eload_power(v.re, v.im, load.i_g_d, load.i_g_q);
        assert!((ps - 0.4).abs() < 1e-12 && (pl + 0.4).abs() < 1e-12);
        assert!((src.i_g_d + load.i_g_d).abs() < 1e-12);
    }

    #[test]
    fn rescaling_preserves_loop_ratios() {
        let p = gfl();
        let r = p.rescaled(2.5);
        assert!((r.kp_c / r.lf - p.kp_c / p.lf).abs() < 1e-12);
        assert!((r.cf * r.lf - p.cf * p.lf).abs() < 1e-15);
        let s = EloadState::default();
        assert_eq!(s.to_array().len(), EloadState::LEN);
    }

    #[test]
    fn vsm_base_conversion() {
        let case = NetworkCase::case9();
        let DeviceParams::Vsm(v) = &case.generators[1].params else { unreachable!() };
        let s = v.on_system_base(case.base_mva);
        assert!((s.ta - 2.0 * v.ta).abs() < 1e-12);
        assert!((s.lg - v.lg / 2.0).abs() < 1e-12);
        assert!((s.kp_c / s.lf - v.kp_c / v.lf).abs() < 1e-9);
    }
}
