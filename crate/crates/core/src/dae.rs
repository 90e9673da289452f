//! System assembly, equilibrium initialization and branch-trip events.
//!
//! State layout is frozen: bus capacitor voltages (ascending bus order), then
//! generator states (case order), then dynamic branch currents (case order),
//! then E-load states (case order). Under statpi the algebraic vector holds
//! the real and imaginary bus voltages in bus order.
//!
//! Under dynpi a generator bus with no shunt charging, no load and a single
//! branch has no capacitor of its own. The branch is folded into the device
//! interface instead: into the stator for a synchronous machine, into the
//! grid-side inductor for converters.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::devices::converter::{self, ConverterParams, GridPath, Orientation};
use crate::devices::lines::{bus_capacitor_derivative, dynpi_derivatives, solve_algebraic, NetworkSolveOptions};
use crate::devices::sm::{initialize_sm, sm_evaluate, SmSetpoint, SmState};
use crate::devices::vsm::{initialize_vsm, vsm_evaluate, VsmSetpoint, VsmState};
use crate::devices::{SmParams, VsmParams};
use crate::error::{Error, Result};
use crate::loadmodels::{composition_from_x, EloadState, Family, ZipParts, DEFAULT_VOLTAGE_FLOOR, NET_PER_DQ_CURRENT};
use crate::netdata::{build_ybus, BranchSet, BusKind, DeviceParams, NetworkCase};
use crate::powerflow::{scale_loading, solve_power_flow_with, PFSolution, PowerFlowOptions};

/// Capacitance given to a bus that has none under dynpi and cannot be
/// folded into a device.
pub const FICTITIOUS_CAPACITANCE: f64 = 1e-4;
pub const INIT_RESIDUAL_TOL: f64 = 1e-8;
/// Power-flow mismatch used for equilibria. Bus-capacitor residuals scale the
/// mismatch by `omega_b / c`, so this sits well below the residual limit.
pub const EQUILIBRIUM_PF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineModel {
    Statpi,
    Dynpi,
}

impl LineModel {
    pub fn label(&self) -> &'static str {
        match self {
            LineModel::Statpi => "statpi",
            LineModel::Dynpi => "dynpi",
        }
    }
}

impl fmt::Display for LineModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for LineModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "statpi" => Ok(LineModel::Statpi),
            "dynpi" => Ok(LineModel::Dynpi),
            _ => Err(Error::Config(format!("unknown line model '{s}' (expected statpi or dynpi)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchEvent {
    pub branch: String,
    pub t_trip: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub family: Family,
    pub x: f64,
    pub line_model: LineModel,
    pub load_scale: f64,
    #[serde(default)]
    pub event: Option<BranchEvent>,
    #[serde(default = "default_portfolio")]
    pub generation_portfolio: String,
}

fn default_portfolio() -> String {
    "case".into()
}

impl ScenarioSpec {
    pub fn new(family: Family, x: f64, line_model: LineModel, load_scale: f64) -> Self {
        ScenarioSpec {
            family,
            x,
            line_model,
            load_scale,
            event: None,
            generation_portfolio: default_portfolio(),
        }
    }

    pub fn with_event(mut self, branch: &str, t_trip: f64) -> Self {
        self.event = Some(BranchEvent {
            branch: branch.into(),
            t_trip,
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.x) {
            return Err(Error::Config(format!("x = {} outside [0, 1]", self.x)));
        }
        if !(self.load_scale >= 0.0) || !self.load_scale.is_finite() {
            return Err(Error::Config(format!("load_scale must be nonnegative, got {}", self.load_scale)));
        }
        Ok(())
    }

    /// Stable identifier, e.g. `zie_x0.50_dynpi_ls0.250`.
    pub fn id(&self) -> String {
        let fam = match self.family {
            Family::Zip => "zip",
            Family::ZiE => "zie",
        };
        format!("{fam}_x{:.2}_{}_ls{:.3}", self.x, self.line_model, self.load_scale)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    Bus(usize),
    Generator(usize),
    Branch(String),
    Load(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateKey {
    pub component: Component,
    pub name: String,
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.component {
            Component::Bus(id) => write!(f, "bus{id}.{}", self.name),
            Component::Generator(k) => write!(f, "gen{k}.{}", self.name),
            Component::Branch(id) => write!(f, "branch{id}.{}", self.name),
            Component::Load(k) => write!(f, "load{k}.{}", self.name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Interface {
    Bus,
    Folded { branch: usize, far: usize, r: f64, x: f64 },
    Open,
}

#[derive(Debug, Clone)]
enum Dynamics {
    Sm(SmParams),
    Vsm(VsmParams),
    Gfl(ConverterParams),
}

#[derive(Debug, Clone)]
struct GenModel {
    bus: usize,
    dynamics: Dynamics,
    interface: Interface,
    folded_branch: Option<usize>,
    offset: usize,
    /// Positions within the device's full state array that are states.
    slots: Vec<usize>,
}

#[derive(Debug, Clone)]
struct LoadModel {
    bus: usize,
    eload: Option<(ConverterParams, usize)>,
}

#[derive(Debug, Clone)]
struct BranchModel {
    from: usize,
    to: usize,
    r: f64,
    x: f64,
    offset: usize,
}

#[derive(Debug, Clone, Copy)]
struct BusCap {
    c: f64,
    fictitious: bool,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GenSetpoint {
    Sm(SmSetpoint),
    Vsm(VsmSetpoint),
    Gfl { p_ref: f64, q_ref: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSetpoint {
    /// Nominal Z/I/P powers, referred to the calibrated voltage `v0`.
    pub zip_z: (f64, f64),
    pub zip_i: (f64, f64),
    pub zip_p: (f64, f64),
    pub v0: f64,
    pub e_ref: Option<(f64, f64)>,
}

impl LoadSetpoint {
    fn parts(&self) -> ZipParts {
        ZipParts {
            z: Complex64::new(self.zip_z.0, self.zip_z.1),
            i: Complex64::new(self.zip_i.0, self.zip_i.1),
            p: Complex64::new(self.zip_p.0, self.zip_p.1),
            v0: self.v0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setpoints {
    pub generators: Vec<GenSetpoint>,
    pub loads: Vec<LoadSetpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub pf: PFSolution,
    pub residual_inf_norm: f64,
    pub setpoints: Setpoints,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCountReport {
    pub n_diff: usize,
    pub n_alg: usize,
    pub bus_states: usize,
    pub generator_states: usize,
    pub branch_states: usize,
    pub eload_states: usize,
}

/// Quantities observed during one residual evaluation.
#[derive(Debug, Clone, Default)]
pub struct Observation {
    /// Bus voltage per bus; folded generator buses report the device
    /// terminal voltage.
    pub bus_voltage: Vec<Complex64>,
    /// Current delivered by each generator, network per unit.
    pub gen_current: Vec<Complex64>,
    /// Speed of synchronous and virtual-synchronous machines.
    pub gen_speed: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    pub case: NetworkCase,
    pub scenario: ScenarioSpec,
    pub in_service: BranchSet,
    pub state_index: Vec<StateKey>,
    pub n_diff: usize,
    pub n_alg: usize,
    pub voltage_floor: f64,
    omega_b: f64,
    gens: Vec<GenModel>,
    loads: Vec<LoadModel>,
    branches: Vec<BranchModel>,
    caps: Vec<Option<BusCap>>,
    ybus: DMatrix<Complex64>,
}

fn foldable_branch(case: &NetworkCase, bus_pos: usize) -> Option<usize> {
    let id = case.buses[bus_pos].id;
    let gens = case.generators.iter().filter(|g| g.bus == id).count();
    let loads = case.loads.iter().filter(|l| l.bus == id).count();
    let incident: Vec<usize> = (0..case.branches.len())
        .filter(|&k| case.branches[k].from_bus == id || case.branches[k].to_bus == id)
        .collect();
    if gens == 1 && loads == 0 && incident.len() == 1 && case.branches[incident[0]].b == 0.0 {
        Some(incident[0])
    } else {
        None
    }
}

/// Assemble the system for `scenario` on `case` (unscaled; scaling and the
/// load composition are applied here).
pub fn assemble(case: &NetworkCase, scenario: &ScenarioSpec) -> Result<SystemModel> {
    scenario.validate()?;
    let mut scaled = scale_loading(case, scenario.load_scale);
    let comp = composition_from_x(scenario.x, scenario.family)?;
    for (k, load) in scaled.loads.iter_mut().enumerate() {
        load.eta = comp;
        load.gamma = comp;
        if load.has_eload() && load.eload_params.is_none() {
            return Err(Error::Config(format!(
                "load {k} at bus {} has an E weight but no eload_params",
                load.bus
            )));
        }
    }
    let pos = scaled.bus_positions();
    let folded: Vec<Option<usize>> = scaled
        .generators
        .iter()
        .map(|g| match scenario.line_model {
            LineModel::Dynpi => foldable_branch(&scaled, pos[&g.bus]),
            LineModel::Statpi => None,
        })
        .collect();
    let in_service = BranchSet::all(&scaled);
    SystemModel::build(scaled, scenario.clone(), in_service, folded)
}

impl SystemModel {
    fn build(case: NetworkCase, scenario: ScenarioSpec, in_service: BranchSet, folded: Vec<Option<usize>>) -> Result<Self> {
        let omega_b = case.omega_base();
        let pos = case.bus_positions();
        let nb = case.buses.len();
        let dynpi = scenario.line_model == LineModel::Dynpi;
        let mut index: Vec<StateKey> = Vec::new();
        let push = |index: &mut Vec<StateKey>, c: Component, name: &str| {
            index.push(StateKey {
                component: c,
                name: name.to_string(),
            });
            index.len() - 1
        };

        let folded_buses: Vec<usize> = folded
            .iter()
            .zip(&case.generators)
            .filter(|(f, _)| f.is_some())
            .map(|(_, g)| pos[&g.bus])
            .collect();

        let mut caps = vec![None; nb];
        if dynpi {
            for p in 0..nb {
                if folded_buses.contains(&p) {
                    continue;
                }
                let id = case.buses[p].id;
                let c: f64 = in_service
                    .iter()
                    .map(|k| &case.branches[k])
                    .filter(|br| br.from_bus == id || br.to_bus == id)
                    .map(|br| br.b / 2.0)
                    .sum();
                let offset = push(&mut index, Component::Bus(id), "v_d");
                push(&mut index, Component::Bus(id), "v_q");
                caps[p] = Some(if c > 0.0 {
                    BusCap {
                        c,
                        fictitious: false,
                        offset,
                    }
                } else {
                    BusCap {
                        c: FICTITIOUS_CAPACITANCE,
                        fictitious: true,
                        offset,
                    }
                });
            }
        }

        let mut gens = Vec::new();
        for (k, g) in case.generators.iter().enumerate() {
            let interface = match folded[k] {
                None => Interface::Bus,
                Some(b) if !in_service.contains(b) => Interface::Open,
                Some(b) => {
                    let br = &case.branches[b];
                    let far = if br.from_bus == g.bus { br.to_bus } else { br.from_bus };
                    Interface::Folded {
                        branch: b,
                        far: pos[&far],
                        r: br.r,
                        x: br.x,
                    }
                }
            };
            let (dynamics, names): (Dynamics, &[&str]) = match &g.params {
                DeviceParams::Sm(p) => (Dynamics::Sm(p.on_system_base(case.base_mva)), &SmState::NAMES),
                DeviceParams::Vsm(p) => (Dynamics::Vsm(p.on_system_base(case.base_mva)), &VsmState::NAMES),
                DeviceParams::Gfl(p) => (Dynamics::Gfl(p.converter(case.base_mva, omega_b)), &EloadState::NAMES),
            };
            let drop_ig = interface == Interface::Open || (!dynpi && matches!(dynamics, Dynamics::Sm(_)));
            let slots: Vec<usize> = (0..names.len())
                .filter(|&j| !(drop_ig && names[j].starts_with("i_g_")))
                .collect();
            let offset = index.len();
            for &j in &slots {
                push(&mut index, Component::Generator(k), names[j]);
            }
            gens.push(GenModel {
                bus: pos[&g.bus],
                dynamics,
                interface,
                folded_branch: folded[k],
                offset,
                slots,
            });
        }

        let mut branches = Vec::new();
        if dynpi {
            for k in in_service.iter() {
                if folded.contains(&Some(k)) {
                    continue;
                }
                let br = &case.branches[k];
                let offset = push(&mut index, Component::Branch(br.id.clone()), "i_s_d");
                push(&mut index, Component::Branch(br.id.clone()), "i_s_q");
                branches.push(BranchModel {
                    from: pos[&br.from_bus],
                    to: pos[&br.to_bus],
                    r: br.r,
                    x: br.x,
                    offset,
                });
            }
        }

        let mut loads = Vec::new();
        for (k, l) in case.loads.iter().enumerate() {
            let eload = if l.has_eload() {
                let prm = l.eload_params.as_ref().expect("checked at assembly");
                let share = l.eta.e.max(l.gamma.e);
                let offset = index.len();
                for name in EloadState::NAMES {
                    push(&mut index, Component::Load(k), name);
                }
                Some((prm.converter(share, omega_b), offset))
            } else {
                None
            };
            loads.push(LoadModel { bus: pos[&l.bus], eload });
        }

        let n_diff = index.len();
        let n_alg = if dynpi { 0 } else { 2 * nb };
        if !dynpi {
            for b in &case.buses {
                push(&mut index, Component::Bus(b.id), "v_re");
                push(&mut index, Component::Bus(b.id), "v_im");
            }
        }
        let ybus = if dynpi { DMatrix::zeros(0, 0) } else { build_ybus(&case, &in_service) };
        Ok(SystemModel {
            case,
            scenario,
            in_service,
            state_index: index,
            n_diff,
            n_alg,
            voltage_floor: DEFAULT_VOLTAGE_FLOOR,
            omega_b,
            gens,
            loads,
            branches,
            caps,
            ybus,
        })
    }

    fn folded(&self) -> Vec<Option<usize>> {
        self.gens.iter().map(|g| g.folded_branch).collect()
    }

    pub fn omega_base(&self) -> f64 {
        self.omega_b
    }

    pub fn state_count_report(&self) -> StateCountReport {
        let count = |f: &dyn Fn(&Component) -> bool| self.state_index[..self.n_diff].iter().filter(|k| f(&k.component)).count();
        StateCountReport {
            n_diff: self.n_diff,
            n_alg: self.n_alg,
            bus_states: count(&|c| matches!(c, Component::Bus(_))),
            generator_states: count(&|c| matches!(c, Component::Generator(_))),
            branch_states: count(&|c| matches!(c, Component::Branch(_))),
            eload_states: count(&|c| matches!(c, Component::Load(_))),
        }
    }

    /// Position of a state or algebraic variable by its display name, e.g.
    /// `gen0.omega` or `bus4.v_d`.
    pub fn find_state(&self, name: &str) -> Option<usize> {
        self.state_index.iter().position(|k| k.to_string() == name)
    }

    pub fn solve_power_flow(&self, tol: f64) -> Result<PFSolution> {
        solve_power_flow_with(
            &self.case,
            &PowerFlowOptions {
                tol,
                in_service: Some(self.in_service.clone()),
                ..Default::default()
            },
        )
    }

    /// Differential and algebraic residuals `(ẋ, g)`.
    pub fn residual(&self, sp: &Setpoints, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut f = vec![0.0; self.n_diff];
        let mut g = vec![0.0; self.n_alg];
        self.residual_into(sp, x, y, &mut f, &mut g, None)?;
        Ok((f, g))
    }

    pub fn observe(&self, sp: &Setpoints, x: &[f64], y: &[f64]) -> Result<Observation> {
        let mut f = vec![0.0; self.n_diff];
        let mut g = vec![0.0; self.n_alg];
        let mut obs = Observation::default();
        self.residual_into(sp, x, y, &mut f, &mut g, Some(&mut obs))?;
        Ok(obs)
    }

    pub fn residual_into(
        &self,
        sp: &Setpoints,
        x: &[f64],
        y: &[f64],
        f: &mut [f64],
        g: &mut [f64],
        mut obs: Option<&mut Observation>,
    ) -> Result<()> {
        let nb = self.case.buses.len();
        let wb = self.omega_b;
        let w_sys = 1.0;
        let zero = Complex64::new(0.0, 0.0);
        let mut v = vec![zero; nb];
        if self.n_alg > 0 {
            for k in 0..nb {
                v[k] = Complex64::new(y[2 * k], y[2 * k + 1]);
            }
        } else {
            for k in 0..nb {
                if let Some(c) = &self.caps[k] {
                    v[k] = Complex64::new(x[c.offset], x[c.offset + 1]);
                }
            }
        }
        let mut inj = vec![zero; nb];
        if let Some(o) = obs.as_deref_mut() {
            o.bus_voltage = v.clone();
            o.gen_current = vec![zero; self.gens.len()];
            o.gen_speed = vec![None; self.gens.len()];
        }

        let mut full = [0.0; 12];
        for (k, gm) in self.gens.iter().enumerate() {
            full.iter_mut().for_each(|e| *e = 0.0);
            for (j, &slot) in gm.slots.iter().enumerate() {
                full[slot] = x[gm.offset + j];
            }
            let (v_far, path, at) = match gm.interface {
                Interface::Bus => (v[gm.bus], GridPath::Bus, Some(gm.bus)),
                Interface::Folded { far, r, x, .. } => (v[far], GridPath::Series { r, x }, Some(far)),
                Interface::Open => (zero, GridPath::Open, None),
            };
            let (deriv, current, v_t, speed): ([f64; 12], Complex64, Complex64, Option<f64>) = match (&gm.dynamics, &sp.generators[k]) {
                (Dynamics::Sm(p), GenSetpoint::Sm(s)) => {
                    let st = SmState::from_slice(&full);
                    let ev = sm_evaluate(&st, v_far, path, p, s, wb, w_sys, self.n_alg == 0);
                    let mut d = [0.0; 12];
                    d[..SmState::LEN].copy_from_slice(&ev.deriv.to_array());
                    (d, ev.current, ev.v_terminal, Some(st.omega))
                }
                (Dynamics::Vsm(p), GenSetpoint::Vsm(s)) => {
                    let st = VsmState::from_slice(&full);
                    let ev = vsm_evaluate(&st, v_far, path, p, s, wb, w_sys);
                    (ev.deriv.to_array(), ev.current, ev.v_terminal, Some(st.omega))
                }
                (Dynamics::Gfl(p), GenSetpoint::Gfl { p_ref, q_ref }) => {
                    let st = EloadState::from_slice(&full);
                    let ev = converter::evaluate(Orientation::Source, &st, v_far, path, p, *p_ref, *q_ref, w_sys);
                    (ev.deriv.to_array(), ev.i_grid, ev.v_terminal, None)
                }
                _ => return Err(Error::Config(format!("setpoint kind mismatch for generator {k}"))),
            };
            for (j, &slot) in gm.slots.iter().enumerate() {
                f[gm.offset + j] = deriv[slot];
            }
            if let Some(b) = at {
                inj[b] += current;
            }
            if let Some(o) = obs.as_deref_mut() {
                o.gen_current[k] = current;
                o.gen_speed[k] = speed;
                if gm.interface != Interface::Bus {
                    o.bus_voltage[gm.bus] = v_t;
                }
            }
        }

        for (k, lm) in self.loads.iter().enumerate() {
            let lsp = &sp.loads[k];
            let vb = v[lm.bus];
            let mut i = lsp.parts().current(vb, self.voltage_floor)?;
            if let Some((prm, off)) = &lm.eload {
                let st = EloadState::from_slice(&x[*off..*off + 12]);
                let (p_ref, q_ref) = lsp.e_ref.unwrap_or((0.0, 0.0));
                let ev = converter::evaluate(Orientation::Load, &st, vb, GridPath::Bus, prm, p_ref, q_ref, w_sys);
                f[*off..*off + 12].copy_from_slice(&ev.deriv.to_array());
                i += ev.i_grid;
            }
            inj[lm.bus] -= i;
        }

        for br in &self.branches {
            let i = Complex64::new(x[br.offset], x[br.offset + 1]);
            let d = dynpi_derivatives(i, v[br.from], v[br.to], br.r, br.x, wb, w_sys);
            f[br.offset] = d.re;
            f[br.offset + 1] = d.im;
            inj[br.from] -= i;
            inj[br.to] += i;
        }

        if self.n_alg > 0 {
            for k in 0..nb {
                let mut i = inj[k];
                for c in 0..nb {
                    i -= self.ybus[(k, c)] * v[c];
                }
                g[2 * k] = i.re;
                g[2 * k + 1] = i.im;
            }
        } else {
            for k in 0..nb {
                if let Some(c) = &self.caps[k] {
                    let d = bus_capacitor_derivative(c.c, inj[k], v[k], wb, w_sys, c.fictitious);
                    f[c.offset] = d.re;
                    f[c.offset + 1] = d.im;
                }
            }
        }
        Ok(())
    }

    /// Back-solve every state from a converged power flow of `self.case`.
    pub fn initialize(&self, pf: &PFSolution) -> Result<EquilibriumPoint> {
        let nb = self.case.buses.len();
        if pf.v.len() != nb {
            return Err(Error::Config("power-flow solution does not match the case".into()));
        }
        let v: Vec<Complex64> = pf.voltages();
        let mut x = vec![0.0; self.n_diff];
        let mut y = vec![0.0; self.n_alg];

        // Generator outputs: scheduled active power, reference-bus remainder
        // and reactive power shared equally among machines on a bus.
        let mut bus_gen = vec![Complex64::new(0.0, 0.0); nb];
        for k in 0..nb {
            bus_gen[k] = Complex64::new(pf.p_inj[k], pf.q_inj[k]);
        }
        for l in &self.case.loads {
            let p = self.case.bus_position(l.bus).expect("validated");
            bus_gen[p] += Complex64::new(l.p0, l.q0);
        }
        let mut gen_sp = Vec::new();
        for (k, gm) in self.gens.iter().enumerate() {
            let spec = &self.case.generators[k];
            let peers: Vec<usize> = (0..self.gens.len()).filter(|&j| self.gens[j].bus == gm.bus).collect();
            let n = peers.len() as f64;
            let scheduled: f64 = peers.iter().map(|&j| self.case.generators[j].p_set).sum();
            let mut s = Complex64::new(spec.p_set + (bus_gen[gm.bus].re - scheduled) / n, bus_gen[gm.bus].im / n);
            if self.case.buses[gm.bus].kind == BusKind::PQ {
                s = Complex64::new(spec.p_set, spec.q_set);
            }
            if gm.interface == Interface::Open {
                s = Complex64::new(0.0, 0.0);
            }
            let vt = v[gm.bus];
            let mut full = [0.0; 12];
            let sp = match &gm.dynamics {
                Dynamics::Sm(p) => {
                    let (st, sp) = initialize_sm(p, vt, s)?;
                    full[..SmState::LEN].copy_from_slice(&st.to_array());
                    GenSetpoint::Sm(sp)
                }
                Dynamics::Vsm(p) => {
                    let (st, sp) = initialize_vsm(p, vt, s)?;
                    full = st.to_array();
                    GenSetpoint::Vsm(sp)
                }
                Dynamics::Gfl(p) => {
                    let st = converter::initialize(Orientation::Source, p, vt, s.re, s.im, 1.0)?;
                    full = st.to_array();
                    GenSetpoint::Gfl { p_ref: s.re, q_ref: s.im }
                }
            };
            for (j, &slot) in gm.slots.iter().enumerate() {
                x[gm.offset + j] = full[slot];
            }
            gen_sp.push(sp);
        }

        let mut load_sp = Vec::new();
        for (k, lm) in self.loads.iter().enumerate() {
            let spec = &self.case.loads[k];
            let vb = v[lm.bus];
            let (p0, q0) = (spec.p0, spec.q0);
            let e_ref = spec.has_eload().then(|| (spec.eta.e * p0, spec.gamma.e * q0));
            if let (Some((prm, off)), Some((pr, qr))) = (&lm.eload, e_ref) {
                let st = converter::initialize(Orientation::Load, prm, vb, pr, qr, 1.0)?;
                x[*off..*off + 12].copy_from_slice(&st.to_array());
            }
            load_sp.push(LoadSetpoint {
                zip_z: (p0 * spec.eta.z, q0 * spec.gamma.z),
                zip_i: (p0 * spec.eta.i, q0 * spec.gamma.i),
                zip_p: (p0 * spec.eta.p, q0 * spec.gamma.p),
                v0: vb.norm(),
                e_ref,
            });
        }

        for br in &self.branches {
            let i = (v[br.from] - v[br.to]) / Complex64::new(br.r, br.x);
            x[br.offset] = i.re;
            x[br.offset + 1] = i.im;
        }
        for k in 0..nb {
            if let Some(c) = &self.caps[k] {
                x[c.offset] = v[k].re;
                x[c.offset + 1] = v[k].im;
            }
            if self.n_alg > 0 {
                y[2 * k] = v[k].re;
                y[2 * k + 1] = v[k].im;
            }
        }

        let setpoints = Setpoints {
            generators: gen_sp,
            loads: load_sp,
        };
        let (f, g) = self.residual(&setpoints, &x, &y)?;
        let (worst, norm) = f
            .iter()
            .chain(g.iter())
            .enumerate()
            .fold((0, 0.0f64), |(wk, wv), (k, r)| if r.abs() > wv { (k, r.abs()) } else { (wk, wv) });
        if !(norm < INIT_RESIDUAL_TOL) {
            let component = if worst < self.n_diff {
                self.state_index[worst].to_string()
            } else {
                let b = (worst - self.n_diff) / 2;
                format!("bus{}.balance", self.case.buses[b].id)
            };
            return Err(Error::InitResidual { residual: norm, component });
        }
        Ok(EquilibriumPoint {
            x0: x,
            y0: y,
            pf: pf.clone(),
            residual_inf_norm: norm,
            setpoints,
        })
    }

    /// Power flow followed by [`SystemModel::initialize`].
    pub fn equilibrium(&self) -> Result<EquilibriumPoint> {
        let pf = self.solve_power_flow(EQUILIBRIUM_PF_TOL)?;
        self.initialize(&pf)
    }

    pub fn apply_branch_trip(&self, branch: &str) -> Result<SystemModel> {
        let k = self.case.find_branch(branch)?;
        if !self.in_service.contains(k) {
            return Err(Error::BranchOutOfService(self.case.branches[k].id.clone()));
        }
        SystemModel::build(self.case.clone(), self.scenario.clone(), self.in_service.without(k), self.folded())
    }

    pub fn restore_branch(&self, branch: &str) -> Result<SystemModel> {
        let k = self.case.find_branch(branch)?;
        if self.in_service.contains(k) {
            return Err(Error::BranchInService(self.case.branches[k].id.clone()));
        }
        let mut set = self.in_service.clone();
        set.insert(k);
        SystemModel::build(self.case.clone(), self.scenario.clone(), set, self.folded())
    }

    /// Carry a differential state vector of `from` over to this model by
    /// state name; states new to this model are zero.
    pub fn map_states(&self, from: &SystemModel, x: &[f64]) -> Vec<f64> {
        let lookup: HashMap<&StateKey, usize> = from.state_index[..from.n_diff].iter().enumerate().map(|(k, s)| (s, k)).collect();
        self.state_index[..self.n_diff]
            .iter()
            .map(|key| lookup.get(key).map_or(0.0, |&k| x[k]))
            .collect()
    }

    /// Solve the algebraic variables for fixed `x`, starting from `y_guess`.
    pub fn solve_algebraic(&self, sp: &Setpoints, x: &[f64], y_guess: &[f64]) -> Result<Vec<f64>> {
        if self.n_alg == 0 {
            return Ok(Vec::new());
        }
        let mut f = vec![0.0; self.n_diff];
        let g = |y: &[f64]| -> Result<Vec<f64>> {
            let mut f = f.clone();
            let mut g = vec![0.0; self.n_alg];
            self.residual_into(sp, x, y, &mut f, &mut g, None)?;
            Ok(g)
        };
        let (y, _) = solve_algebraic(g, y_guess, &NetworkSolveOptions::default())?;
        f.clear();
        Ok(y)
    }

    /// Magnitude of the grid-side current of every GFL source, keyed
    /// `bus<id>_inverter_current_mag`, plus the load-bus voltage magnitudes.
    pub fn signals(&self, sp: &Setpoints, x: &[f64], y: &[f64]) -> Result<Vec<(String, f64)>> {
        let obs = self.observe(sp, x, y)?;
        let mut out = Vec::new();
        for (k, gm) in self.gens.iter().enumerate() {
            if matches!(gm.dynamics, Dynamics::Gfl(_)) {
                let id = self.case.buses[gm.bus].id;
                out.push((format!("bus{id}_inverter_current_mag"), obs.gen_current[k].norm()));
            }
        }
        for (k, gm) in self.gens.iter().enumerate() {
            if let Some(w) = obs.gen_speed[k] {
                let id = self.case.buses[gm.bus].id;
                out.push((format!("bus{id}_gen_speed"), w));
            }
        }
        let load_buses = self.load_buses();
        for b in load_buses {
            out.push((format!("bus{}_v_mag", self.case.buses[b].id), obs.bus_voltage[b].norm()));
        }
        Ok(out)
    }

    pub fn signal_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for gm in &self.gens {
            if matches!(gm.dynamics, Dynamics::Gfl(_)) {
                names.push(format!("bus{}_inverter_current_mag", self.case.buses[gm.bus].id));
            }
        }
        for gm in &self.gens {
            if !matches!(gm.dynamics, Dynamics::Gfl(_)) {
                names.push(format!("bus{}_gen_speed", self.case.buses[gm.bus].id));
            }
        }
        let load_buses = self.load_buses();
        for b in load_buses {
            names.push(format!("bus{}_v_mag", self.case.buses[b].id));
        }
        names
    }

    fn load_buses(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.loads.iter().map(|l| l.bus).collect();
        b.sort_unstable();
        b.dedup();
        b
    }

    pub fn ybus(&self) -> &DMatrix<Complex64> {
        &self.ybus
    }

    /// Network current drawn by load `k` at the given point.
    pub fn load_current(&self, sp: &Setpoints, k: usize, x: &[f64], v_bus: Complex64) -> Result<Complex64> {
        let lm = &self.loads[k];
        let mut i = sp.loads[k].parts().current(v_bus, self.voltage_floor)?;
        if let Some((_, off)) = &lm.eload {
            i += NET_PER_DQ_CURRENT * Complex64::new(x[off + 4], x[off + 5]);
        }
        Ok(i)
    }
}
