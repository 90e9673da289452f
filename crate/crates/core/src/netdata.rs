//! Network data model, per-unit conventions, the embedded WSCC 9-bus case and
//! bus-admittance construction.
//!
//! All quantities are per unit on the common system base (`base_mva`). Device
//! parameter blocks that carry their own rating (`mva_base`, `i_base`) are
//! converted to the system base when the dynamic model is assembled.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::devices::{GflParams, SmParams, VsmParams};
use crate::error::{Error, Result};
use crate::loadmodels::{CompositionVector, EloadParams};

const CASE9_JSON: &str = include_str!("../data/case9.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Reference,
    PV,
    PQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_set: Option<f64>,
    /// Nominal voltage in kV. Informational only.
    pub v_nom: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    #[default]
    Line,
    Transformer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchParams {
    pub id: String,
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    /// Total shunt susceptance, split evenly between the two ends.
    pub b: f64,
    #[serde(default, skip_serializing_if = "is_line")]
    pub kind: BranchKind,
}

fn is_line(kind: &BranchKind) -> bool {
    *kind == BranchKind::Line
}

impl BranchParams {
    pub fn series_admittance(&self) -> Complex64 {
        Complex64::new(self.r, self.x).inv()
    }

    /// 2x2 π-model stamp ordered (from, to).
    pub fn pi_stamp(&self) -> [[Complex64; 2]; 2] {
        let ys = self.series_admittance();
        let ysh = Complex64::new(0.0, self.b / 2.0);
        [[ys + ysh, -ys], [-ys, ys + ysh]]
    }

    pub fn connects(&self, a: usize, b: usize) -> bool {
        (self.from_bus == a && self.to_bus == b) || (self.from_bus == b && self.to_bus == a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratorKind {
    SM,
    #[serde(rename = "GFM_VSM")]
    GfmVsm,
    GFL,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeviceParams {
    Sm(SmParams),
    Vsm(VsmParams),
    Gfl(GflParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGenerator", into = "RawGenerator")]
pub struct GeneratorSpec {
    pub bus: usize,
    pub kind: GeneratorKind,
    pub p_set: f64,
    pub q_set: f64,
    pub params: DeviceParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    bus: usize,
    kind: GeneratorKind,
    p_set: f64,
    #[serde(default)]
    q_set: f64,
    params: serde_json::Value,
}

impl TryFrom<RawGenerator> for GeneratorSpec {
    type Error = String;

    fn try_from(raw: RawGenerator) -> std::result::Result<Self, String> {
        let params = match raw.kind {
            GeneratorKind::SM => serde_json::from_value(raw.params).map(DeviceParams::Sm),
            GeneratorKind::GfmVsm => serde_json::from_value(raw.params).map(DeviceParams::Vsm),
            GeneratorKind::GFL => serde_json::from_value(raw.params).map(DeviceParams::Gfl),
        }
        .map_err(|e| format!("generator at bus {}: {e}", raw.bus))?;
        Ok(GeneratorSpec {
            bus: raw.bus,
            kind: raw.kind,
            p_set: raw.p_set,
            q_set: raw.q_set,
            params,
        })
    }
}

impl From<GeneratorSpec> for RawGenerator {
    fn from(g: GeneratorSpec) -> Self {
        let params = match &g.params {
            DeviceParams::Sm(p) => serde_json::to_value(p),
            DeviceParams::Vsm(p) => serde_json::to_value(p),
            DeviceParams::Gfl(p) => serde_json::to_value(p),
        }
        .expect("parameter blocks serialize");
        RawGenerator {
            bus: g.bus,
            kind: g.kind,
            p_set: g.p_set,
            q_set: g.q_set,
            params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub bus: usize,
    pub p0: f64,
    pub q0: f64,
    pub v0: f64,
    pub eta: CompositionVector,
    pub gamma: CompositionVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eload_params: Option<EloadParams>,
}

impl LoadSpec {
    pub fn has_eload(&self) -> bool {
        self.eta.e > 0.0 || self.gamma.e > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub f_nom: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<BranchParams>,
    pub generators: Vec<GeneratorSpec>,
    pub loads: Vec<LoadSpec>,
}

/// Parse and validate a JSON case description.
pub fn load_case(text: &str) -> Result<NetworkCase> {
    let case: NetworkCase = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    case.validate()?;
    Ok(case)
}

impl NetworkCase {
    /// The embedded WSCC 9-bus case: SM at bus 1 (reference), VSM at bus 2,
    /// GFL at bus 3, loads at buses 5, 6 and 8.
    pub fn case9() -> Self {
        load_case(CASE9_JSON).expect("embedded case9 is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }

    pub fn omega_base(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f_nom
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if !(self.base_mva > 0.0) {
            return bad(format!("base_mva must be positive, got {}", self.base_mva));
        }
        if !(self.f_nom > 0.0) {
            return bad(format!("f_nom must be positive, got {}", self.f_nom));
        }
        let mut ids = BTreeSet::new();
        for bus in &self.buses {
            if !ids.insert(bus.id) {
                return bad(format!("duplicate bus id {}", bus.id));
            }
            if let Some(v) = bus.v_set {
                if !(v > 0.0) {
                    return bad(format!("bus {}: v_set must be positive", bus.id));
                }
            } else if bus.kind != BusKind::PQ {
                return bad(format!("bus {}: {:?} bus needs v_set", bus.id, bus.kind));
            }
        }
        let n_ref = self.buses.iter().filter(|b| b.kind == BusKind::Reference).count();
        if n_ref != 1 {
            return bad(format!("exactly one reference bus required, found {n_ref}"));
        }
        let mut branch_ids = BTreeSet::new();
        for br in &self.branches {
            if !branch_ids.insert(br.id.as_str()) {
                return bad(format!("duplicate branch id {}", br.id));
            }
            for end in [br.from_bus, br.to_bus] {
                if !ids.contains(&end) {
                    return bad(format!("branch {} references unknown bus {end}", br.id));
                }
            }
            if br.from_bus == br.to_bus {
                return bad(format!("branch {} connects bus {} to itself", br.id, br.from_bus));
            }
            if br.x == 0.0 || !br.x.is_finite() {
                return bad(format!("branch {}: x must be nonzero", br.id));
            }
            if !(br.b >= 0.0) || !(br.r >= 0.0) {
                return bad(format!("branch {}: r and b must be nonnegative", br.id));
            }
        }
        for g in &self.generators {
            if !ids.contains(&g.bus) {
                return bad(format!("generator references unknown bus {}", g.bus));
            }
            let kind_ok = matches!(
                (g.kind, &g.params),
                (GeneratorKind::SM, DeviceParams::Sm(_))
                    | (GeneratorKind::GfmVsm, DeviceParams::Vsm(_))
                    | (GeneratorKind::GFL, DeviceParams::Gfl(_))
            );
            if !kind_ok {
                return bad(format!("generator at bus {}: parameter block does not match kind", g.bus));
            }
            let check = match &g.params {
                DeviceParams::Sm(p) => p.validate(),
                DeviceParams::Vsm(p) => p.validate(),
                DeviceParams::Gfl(p) => p.validate(),
            };
            check.map_err(|m| Error::Validation(format!("generator at bus {}: {m}", g.bus)))?;
        }
        for (k, load) in self.loads.iter().enumerate() {
            if !ids.contains(&load.bus) {
                return bad(format!("load {k} references unknown bus {}", load.bus));
            }
            if !(load.p0 >= 0.0) {
                return bad(format!("load {k}: p0 must be nonnegative"));
            }
            if !(load.v0 > 0.0) {
                return bad(format!("load {k}: v0 must be positive"));
            }
            if let Some(p) = &load.eload_params {
                p.validate()
                    .map_err(|m| Error::Validation(format!("load {k}: {m}")))?;
            }
        }
        Ok(())
    }

    pub fn bus_position(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Map from bus id to its row in admittance matrices and state vectors.
    pub fn bus_positions(&self) -> BTreeMap<usize, usize> {
        self.buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect()
    }

    pub fn reference_bus(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Reference)
            .expect("validated case has a reference bus")
    }

    pub fn branch_position(&self, id: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    /// Resolve `"<from>-<to>"` (either orientation) or a literal branch id.
    pub fn find_branch(&self, label: &str) -> Result<usize> {
        if let Some(k) = self.branch_position(label) {
            return Ok(k);
        }
        let parsed = label
            .split_once('-')
            .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
        if let Some((a, b)) = parsed {
            if let Some(k) = self.branches.iter().position(|br| br.connects(a, b)) {
                return Ok(k);
            }
        }
        Err(Error::UnknownBranch(label.to_string()))
    }
}

/// Set of in-service branches, by position in `NetworkCase::branches`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchSet(Vec<bool>);

impl BranchSet {
    pub fn all(case: &NetworkCase) -> Self {
        BranchSet(vec![true; case.branches.len()])
    }

    pub fn none(case: &NetworkCase) -> Self {
        BranchSet(vec![false; case.branches.len()])
    }

    pub fn contains(&self, k: usize) -> bool {
        self.0.get(k).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, k: usize) {
        self.0[k] = true;
    }

    pub fn remove(&mut self, k: usize) {
        self.0[k] = false;
    }

    pub fn without(&self, k: usize) -> Self {
        let mut s = self.clone();
        s.remove(k);
        s
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &on)| on).map(|(k, _)| k)
    }

    pub fn len(&self) -> usize {
        self.0.iter().filter(|&&on| on).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bus-admittance matrix of the in-service branches, rows ordered as
/// `case.buses`.
pub fn build_ybus(case: &NetworkCase, in_service: &BranchSet) -> DMatrix<Complex64> {
    let pos = case.bus_positions();
    let n = case.buses.len();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for k in in_service.iter() {
        let br = &case.branches[k];
        let (f, t) = (pos[&br.from_bus], pos[&br.to_bus]);
        let s = br.pi_stamp();
        y[(f, f)] += s[0][0];
        y[(f, t)] += s[0][1];
        y[(t, f)] += s[1][0];
        y[(t, t)] += s[1][1];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case9_shape() {
        let case = NetworkCase::case9();
        assert_eq!(case.buses.len(), 9);
        let transformers = case
            .branches
            .iter()
            .filter(|b| b.kind == BranchKind::Transformer)
            .count();
        assert_eq!(case.branches.len() - transformers, 6);
        assert_eq!(transformers, 3);
        assert_eq!(case.generators.len(), 3);
        assert_eq!(case.loads.len(), 3);
        assert_eq!(case.buses[case.reference_bus()].id, 1);
        let kinds: Vec<_> = case.generators.iter().map(|g| (g.bus, g.kind)).collect();
        assert_eq!(
            kinds,
            vec![(1, GeneratorKind::SM), (2, GeneratorKind::GfmVsm), (3, GeneratorKind::GFL)]
        );
        for br in case.branches.iter().filter(|b| b.kind == BranchKind::Transformer) {
            assert_eq!(br.b, 0.0);
        }
    }

    #[test]
    fn dangling_branch_is_rejected() {
        let mut case = NetworkCase::case9();
        case.branches[1].to_bus = 99;
        let err = load_case(&case.to_json()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn nonpositive_base_is_rejected() {
        let mut case = NetworkCase::case9();
        case.base_mva = 0.0;
        assert!(matches!(load_case(&case.to_json()), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_text_is_a_parse_error() {
        assert!(matches!(load_case("{\"base_mva\": 100"), Err(Error::Parse(_))));
        assert!(matches!(load_case("{}"), Err(Error::Parse(_))));
    }

    #[test]
    fn mismatched_parameter_block_is_rejected() {
        let text = NetworkCase::case9().to_json().replacen("\"GFL\"", "\"SM\"", 1);
        assert!(load_case(&text).is_err());
    }

    #[test]
    fn two_reference_buses_rejected() {
        let mut case = NetworkCase::case9();
        case.buses[1].kind = BusKind::Reference;
        assert!(matches!(case.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn single_branch_series_admittance() {
        let mut case = NetworkCase::case9();
        case.branches = vec![BranchParams {
            id: "a".into(),
            from_bus: 1,
            to_bus: 2,
            r: 0.0,
            x: 0.1,
            b: 0.0,
            kind: BranchKind::Line,
        }];
        let y = build_ybus(&case, &BranchSet::all(&case));
        assert!((y[(0, 1)] - Complex64::new(0.0, 10.0)).norm() < 1e-12);
        assert!((y[(1, 0)] - Complex64::new(0.0, 10.0)).norm() < 1e-12);
        assert!((y[(0, 0)] - Complex64::new(0.0, -10.0)).norm() < 1e-12);
    }

    #[test]
    fn trip_zeroes_coupling() {
        let case = NetworkCase::case9();
        let k = case.find_branch("4-5").unwrap();
        let y = build_ybus(&case, &BranchSet::all(&case).without(k));
        let (a, b) = (case.bus_position(4).unwrap(), case.bus_position(5).unwrap());
        assert_eq!(y[(a, b)], Complex64::new(0.0, 0.0));
        assert_eq!(y[(b, a)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn empty_set_is_shunt_only() {
        let case = NetworkCase::case9();
        let y = build_ybus(&case, &BranchSet::none(&case));
        assert!(y.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn branch_lookup_accepts_either_orientation() {
        let case = NetworkCase::case9();
        assert_eq!(case.find_branch("5-4").unwrap(), case.find_branch("4-5").unwrap());
        assert!(matches!(case.find_branch("1-9"), Err(Error::UnknownBranch(_))));
    }
}
