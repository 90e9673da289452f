//! Static (exponential, ZIP) and dynamic (E) load models and their ZIP-E
//! combination.
//!
//! The E load is a grid-following rectifier. Its currents are kept in dq
//! units in which `P = ½(v_d i_d + v_q i_q)`; the current it draws from the
//! network, in network per unit, is [`NET_PER_DQ_CURRENT`] times that.

mod eload;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netdata::LoadSpec;

pub use eload::{eload_derivatives, eload_power, initialize_eload, EloadParams, EloadState};

/// Network per-unit current per dq-unit current. With the ½ in the E-load
/// power expression, a balanced 1 pu voltage has `‖v_dq‖ = 1` and the
/// network current is half the dq current.
pub const NET_PER_DQ_CURRENT: f64 = 0.5;

/// Below this voltage magnitude a constant-power component cannot be
/// converted to a current.
pub const DEFAULT_VOLTAGE_FLOOR: f64 = 1e-6;

const SUM_TOL: f64 = 1e-12;

/// Weights over {Z, I, P, E}. Serialized as `[z, i, p, e]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct CompositionVector {
    pub z: f64,
    pub i: f64,
    pub p: f64,
    pub e: f64,
}

impl From<[f64; 4]> for CompositionVector {
    fn from([z, i, p, e]: [f64; 4]) -> Self {
        CompositionVector { z, i, p, e }
    }
}

impl From<CompositionVector> for [f64; 4] {
    fn from(c: CompositionVector) -> Self {
        [c.z, c.i, c.p, c.e]
    }
}

impl CompositionVector {
    pub fn new(z: f64, i: f64, p: f64, e: f64) -> Result<Self> {
        let c = CompositionVector { z, i, p, e };
        c.validate().map_err(Error::Validation)?;
        Ok(c)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let w: [f64; 4] = (*self).into();
        if w.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format!("composition weights must lie in [0, 1], got {w:?}"));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(format!("composition weights must sum to 1, got {sum}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "ZIP")]
    Zip,
    #[serde(rename = "ZI-E")]
    ZiE,
}

impl Family {
    pub fn label(&self) -> &'static str {
        match self {
            Family::Zip => "ZIP",
            Family::ZiE => "ZI-E",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zip" => Ok(Family::Zip),
            "zie" | "zi-e" => Ok(Family::ZiE),
            _ => Err(Error::Config(format!("unknown load family '{s}' (expected zip or zie)"))),
        }
    }
}

/// ZIP family: `((1−x)/2, (1−x)/2, x, 0)`. ZI-E family: `((1−x)/2, (1−x)/2, 0, x)`.
pub fn composition_from_x(x: f64, family: Family) -> Result<CompositionVector> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Range(format!("composition fraction x = {x} outside [0, 1]")));
    }
    let half = (1.0 - x) / 2.0;
    Ok(match family {
        Family::Zip => CompositionVector { z: half, i: half, p: x, e: 0.0 },
        Family::ZiE => CompositionVector { z: half, i: half, p: 0.0, e: x },
    })
}

pub fn eval_exponential(p0: f64, q0: f64, v0: f64, n_p: f64, n_q: f64, v: f64) -> Result<(f64, f64)> {
    if v < 0.0 || !(v0 > 0.0) {
        return Err(Error::Domain(format!("need v >= 0 and v0 > 0, got v = {v}, v0 = {v0}")));
    }
    if v == 0.0 && (n_p < 0.0 || n_q < 0.0) {
        return Err(Error::Domain("zero voltage with a negative exponent".into()));
    }
    let r = v / v0;
    Ok((p0 * r.powf(n_p), q0 * r.powf(n_q)))
}

/// ZIP power; the `e` weights are ignored.
pub fn eval_zip(p0: f64, q0: f64, v0: f64, eta: &CompositionVector, gamma: &CompositionVector, v: f64) -> (f64, f64) {
    let r = v / v0;
    (
        p0 * (eta.z * r * r + eta.i * r + eta.p),
        q0 * (gamma.z * r * r + gamma.i * r + gamma.p),
    )
}

/// Nominal complex powers of the Z, I and P parts at `v0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZipParts {
    pub z: Complex64,
    pub i: Complex64,
    pub p: Complex64,
    pub v0: f64,
}

impl ZipParts {
    pub fn new(p0: f64, q0: f64, v0: f64, eta: &CompositionVector, gamma: &CompositionVector) -> Self {
        ZipParts {
            z: Complex64::new(p0 * eta.z, q0 * gamma.z),
            i: Complex64::new(p0 * eta.i, q0 * gamma.i),
            p: Complex64::new(p0 * eta.p, q0 * gamma.p),
            v0,
        }
    }

    /// Network current drawn at bus voltage `v`.
    pub fn current(&self, v: Complex64, floor: f64) -> Result<Complex64> {
        let mag = v.norm();
        let mut i = self.z.conj() / (self.v0 * self.v0) * v;
        if mag > 0.0 {
            i += self.i.conj() / self.v0 * (v / mag);
        }
        if self.p != Complex64::new(0.0, 0.0) {
            if mag < floor {
                return Err(Error::VoltageFloor { v: mag, floor });
            }
            i += (self.p / v).conj();
        }
        Ok(i)
    }
}

/// Total current drawn by a ZIP-E load, in network per unit: the ZIP part
/// evaluated at `‖v_dq‖` plus the E-load grid-side current.
pub fn zipe_injection(
    spec: &LoadSpec,
    load_scale: f64,
    v_bus: Complex64,
    eload_state: Option<&EloadState>,
) -> Result<Complex64> {
    zipe_injection_with_floor(spec, load_scale, v_bus, eload_state, DEFAULT_VOLTAGE_FLOOR)
}

pub fn zipe_injection_with_floor(
    spec: &LoadSpec,
    load_scale: f64,
    v_bus: Complex64,
    eload_state: Option<&EloadState>,
    floor: f64,
) -> Result<Complex64> {
    if spec.has_eload() != eload_state.is_some() {
        return Err(Error::Config(format!(
            "load at bus {}: E-load state must be present exactly when the E weight is nonzero",
            spec.bus
        )));
    }
    let parts = ZipParts::new(spec.p0 * load_scale, spec.q0 * load_scale, spec.v0, &spec.eta, &spec.gamma);
    let mut i = parts.current(v_bus, floor)?;
    if let Some(s) = eload_state {
        i += NET_PER_DQ_CURRENT * Complex64::new(s.i_g_d, s.i_g_q);
    }
    Ok(i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netdata::NetworkCase;

    #[test]
    fn exponential_laws() {
        let (p, _) = eval_exponential(1.0, 0.0, 1.0, 2.0, 2.0, 0.9).unwrap();
        assert!((p - 0.81).abs() < 1e-15);
        let (p, _) = eval_exponential(1.0, 0.0, 1.0, 0.0, 0.0, 0.5).unwrap();
        assert_eq!(p, 1.0);
        let (p, q) = eval_exponential(2.0, 1.0, 1.0, 1.0, 1.0, 1.1).unwrap();
        assert!((p - 2.2).abs() < 1e-15 && (q - 1.1).abs() < 1e-15);
        assert!(eval_exponential(1.0, 1.0, 1.0, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn zip_arithmetic() {
        let third = 1.0 / 3.0;
        let c = CompositionVector { z: third, i: third, p: third, e: 0.0 };
        let (p, _) = eval_zip(1.0, 0.0, 1.0, &c, &c, 1.1);
        assert!((p - 3.31 / 3.0).abs() < 1e-14);
        let (p, q) = eval_zip(1.7, 0.4, 1.02, &c, &c, 1.02);
        assert!((p - 1.7).abs() < 1e-14 && (q - 0.4).abs() < 1e-14);
        let z = CompositionVector { z: 1.0, i: 0.0, p: 0.0, e: 0.0 };
        assert_eq!(eval_zip(1.0, 1.0, 1.0, &z, &z, 0.0), (0.0, 0.0));
    }

    #[test]
    fn compositions() {
        let c = composition_from_x(0.3, Family::Zip).unwrap();
        assert!((c.z - 0.35).abs() < 1e-15 && (c.i - 0.35).abs() < 1e-15 && c.p == 0.3 && c.e == 0.0);
        assert_eq!(composition_from_x(1.0, Family::ZiE).unwrap(), CompositionVector { z: 0.0, i: 0.0, p: 0.0, e: 1.0 });
        assert_eq!(composition_from_x(0.0, Family::Zip).unwrap(), composition_from_x(0.0, Family::ZiE).unwrap());
        assert!(matches!(composition_from_x(1.2, Family::Zip), Err(Error::Range(_))));
        assert!(composition_from_x(-0.1, Family::ZiE).is_err());
    }

    #[test]
    fn composition_validation() {
        assert!(CompositionVector::new(0.5, 0.5, 0.0, 0.0).is_ok());
        assert!(CompositionVector::new(0.5, 0.6, 0.0, 0.0).is_err());
        assert!(CompositionVector::new(1.5, -0.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn composition_serializes_as_array() {
        let c = CompositionVector { z: 0.25, i: 0.25, p: 0.5, e: 0.0 };
        assert_eq!(serde_json::to_string(&c).unwrap(), "[0.25,0.25,0.5,0.0]");
        let back: CompositionVector = serde_json::from_str("[0.25,0.25,0.5,0.0]").unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn impedance_load_is_linear() {
        let mut spec = NetworkCase::case9().loads[0].clone();
        spec.eta = CompositionVector { z: 1.0, i: 0.0, p: 0.0, e: 0.0 };
        spec.gamma = spec.eta;
        spec.v0 = 1.0;
        let v = Complex64::new(0.9, -0.2);
        let i = zipe_injection(&spec, 1.0, v, None).unwrap();
        let y = Complex64::new(spec.p0, -spec.q0);
        assert!((i - y * v).norm() < 1e-14);
    }

    #[test]
    fn constant_power_hits_floor() {
        let mut spec = NetworkCase::case9().loads[0].clone();
        spec.eta = CompositionVector { z: 0.0, i: 0.0, p: 1.0, e: 0.0 };
        spec.gamma = spec.eta;
        let err = zipe_injection(&spec, 1.0, Complex64::new(1e-9, 0.0), None).unwrap_err();
        assert!(matches!(err, Error::VoltageFloor { .. }));
    }

    #[test]
    fn state_presence_must_match_weights() {
        let spec = NetworkCase::case9().loads[0].clone();
        let s = EloadState::default();
        assert!(zipe_injection(&spec, 1.0, Complex64::new(1.0, 0.0), Some(&s)).is_err());
    }
}
