use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, Clone, Deserialize)]
pub struct OracleBus {
    pub id: usize,
    pub kind: String,
    #[serde(default)]
    pub v_set: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct OracleBranch {
    pub id: String,
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    #[serde(default)]
    pub kind: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct OracleGenerator {
    pub bus: usize,
    pub kind: String,
    pub p_set: f64,
    #[serde(default)]
    pub q_set: f64,
    pub params: Value,
}

#[derive(Debug, Clone, Deserialize)]
pub struct OracleLoad {
    pub bus: usize,
    pub p0: f64,
    pub q0: f64,
}

/// The subset of a case file the reference computations read.
#[derive(Debug, Clone, Deserialize)]
pub struct OracleCase {
    pub base_mva: f64,
    pub f_nom: f64,
    pub buses: Vec<OracleBus>,
    pub branches: Vec<OracleBranch>,
    pub generators: Vec<OracleGenerator>,
    pub loads: Vec<OracleLoad>,
}

impl OracleCase {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn position(&self, bus_id: usize) -> usize {
        self.buses
            .iter()
            .position(|b| b.id == bus_id)
            .unwrap_or_else(|| panic!("bus {bus_id} not in case"))
    }

    pub fn omega_b(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f_nom
    }

    /// Loads and generator active setpoints multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        for l in &mut out.loads {
            l.p0 *= k;
            l.q0 *= k;
        }
        for g in &mut out.generators {
            g.p_set *= k;
        }
        out
    }

    pub(crate) fn param(&self, gen: usize, path: &[&str]) -> f64 {
        let mut v = &self.generators[gen].params;
        for key in path {
            v = &v[*key];
        }
        v.as_f64().unwrap_or(0.0)
    }

    /// Device rating over the system base; 1 when the block has none.
    pub(crate) fn rating(&self, gen: usize) -> f64 {
        self.generators[gen].params["mva_base"].as_f64().map_or(1.0, |m| m / self.base_mva)
    }
}
