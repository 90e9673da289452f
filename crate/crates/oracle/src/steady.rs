//! Synchronous steady state after a disturbance, with every device at its
//! droop operating point and the whole system turning at `1 + Δω`.
//!
//! Buses, transformers and filters are kept explicit here (nothing is folded
//! into the devices). Inductive and capacitive elements that carry
//! differential states see the offset frequency; algebraic ones stay at
//! nominal frequency. Converter filters and the transformers in front of
//! converters are always differential; lines, shunts and the machine
//! transformer only when `dynamic_network` is set.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::linalg::solve_dense;
use crate::{OracleCase, OracleResult};

#[derive(Debug, Clone, PartialEq)]
pub enum GenSetting {
    Sm { p_ref: f64, v_ref: f64 },
    Vsm { p_ref: f64, q_ref: f64, v_ref: f64 },
    Gfl { p_ref: f64, q_ref: f64 },
}

/// Z, I and P parts as complex powers at `v0`, plus an optional constant
/// PQ electronic part.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSetting {
    pub z: (f64, f64),
    pub i: (f64, f64),
    pub p: (f64, f64),
    pub v0: f64,
    pub e: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroopSettings {
    /// In case generator order.
    pub generators: Vec<GenSetting>,
    /// In case load order.
    pub loads: Vec<LoadSetting>,
    pub out_of_service: Vec<String>,
    pub dynamic_network: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroopSolution {
    /// Bus voltages in case order; the reference bus angle is zero.
    pub v: Vec<Complex64>,
    pub d_omega: f64,
    /// Current each generator injects at its own bus.
    pub gen_current: Vec<Complex64>,
    pub iterations: usize,
}

struct Sm {
    xd: f64,
    xq: f64,
    xd_p: f64,
    ra: f64,
    d: f64,
    ka: f64,
    r_droop: f64,
}

struct Vsm {
    lg: f64,
    rg: f64,
    lv: f64,
    rv: f64,
    kq: f64,
    damping: f64,
}

enum Device {
    Sm(Sm),
    Vsm(Vsm),
    Gfl,
}

struct Model<'a> {
    case: &'a OracleCase,
    set: &'a DroopSettings,
    devices: Vec<Device>,
    /// Unknown offsets: (slot of δ for machines, slot of the current for VSMs).
    slots: Vec<usize>,
    n_unknown: usize,
    reference: usize,
}

impl<'a> Model<'a> {
    fn new(case: &'a OracleCase, set: &'a DroopSettings) -> Self {
        let n = case.buses.len();
        let mut next = 2 * n + 1;
        let mut devices = Vec::new();
        let mut slots = Vec::new();
        for (g, gen) in case.generators.iter().enumerate() {
            let k = case.rating(g);
            let dev = match gen.kind.as_str() {
                "SM" => Device::Sm(Sm {
                    xd: case.param(g, &["xd"]) / k,
                    xq: case.param(g, &["xq"]) / k,
                    xd_p: case.param(g, &["xd_p"]) / k,
                    ra: case.param(g, &["ra"]) / k,
                    d: case.param(g, &["d"]) * k,
                    ka: case.param(g, &["avr", "ka"]),
                    r_droop: case.param(g, &["gov", "r_droop"]) / k,
                }),
                "GFM_VSM" => Device::Vsm(Vsm {
                    lg: case.param(g, &["lg"]) / k,
                    rg: case.param(g, &["rg"]) / k,
                    lv: case.param(g, &["lv"]) / k,
                    rv: case.param(g, &["rv"]) / k,
                    kq: case.param(g, &["kq"]) / k,
                    damping: (case.param(g, &["kd"]) + case.param(g, &["k_omega"])) * k,
                }),
                _ => Device::Gfl,
            };
            slots.push(next);
            next += match dev {
                Device::Sm(_) => 1,
                Device::Vsm(_) => 2,
                Device::Gfl => 0,
            };
            devices.push(dev);
        }
        let reference = case.buses.iter().position(|b| b.kind == "Reference").unwrap_or(0);
        Model {
            case,
            set,
            devices,
            slots,
            n_unknown: next,
            reference,
        }
    }

    fn ybus(&self, dw: f64) -> Vec<Vec<Complex64>> {
        let n = self.case.buses.len();
        let converter_bus: Vec<usize> = self
            .case
            .generators
            .iter()
            .filter(|g| g.kind != "SM")
            .map(|g| g.bus)
            .collect();
        let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for br in &self.case.branches {
            if self.set.out_of_service.contains(&br.id) {
                continue;
            }
            let dynamic = self.set.dynamic_network
                || converter_bus.contains(&br.from_bus)
                || converter_bus.contains(&br.to_bus);
            let w = if dynamic { 1.0 + dw } else { 1.0 };
            let (i, k) = (self.case.position(br.from_bus), self.case.position(br.to_bus));
            let ys = 1.0 / Complex64::new(br.r, w * br.x);
            let half = Complex64::new(0.0, w * br.b / 2.0);
            y[i][i] += ys + half;
            y[k][k] += ys + half;
            y[i][k] -= ys;
            y[k][i] -= ys;
        }
        y
    }

    /// Device injections and device-specific residuals.
    fn devices(&self, u: &[f64], v: &[Complex64], dw: f64, extra: &mut Vec<f64>) -> Vec<Complex64> {
        let mut inj = Vec::with_capacity(self.devices.len());
        for (g, dev) in self.devices.iter().enumerate() {
            let bus = self.case.position(self.case.generators[g].bus);
            let vt = v[bus];
            let at = self.slots[g];
            match (dev, &self.set.generators[g]) {
                (Device::Sm(m), GenSetting::Sm { p_ref, v_ref }) => {
                    let s = if self.set.dynamic_network { dw } else { 0.0 };
                    let rot = Complex64::from_polar(1.0, -(u[at] - FRAC_PI_2));
                    let vm = vt * rot;
                    let efd = m.ka * (v_ref - vt.norm());
                    let (xd, xq) = (m.xd + s * m.xd_p, m.xq + s * m.xd_p);
                    let det = m.ra * m.ra + xd * xq;
                    let id = (-m.ra * vm.re + xq * (efd - vm.im)) / det;
                    let iq = (m.ra * (efd - vm.im) + xd * vm.re) / det;
                    let te = efd * iq + (m.xq - m.xd) * id * iq;
                    extra.push(p_ref - dw / m.r_droop - te - m.d * dw);
                    inj.push(Complex64::new(id, iq) / rot);
                }
                (Device::Vsm(c), GenSetting::Vsm { p_ref, q_ref, v_ref }) => {
                    let w = 1.0 + dw;
                    let ig = Complex64::new(u[at], u[at + 1]);
                    let vcf = vt + Complex64::new(c.rg, w * c.lg) * ig;
                    let se = vcf * ig.conj();
                    extra.push(p_ref - se.re - c.damping * dw);
                    let emf = vcf + Complex64::new(c.rv, w * c.lv) * ig;
                    extra.push(emf.norm() - (v_ref + c.kq * (q_ref - se.im)));
                    inj.push(ig);
                }
                (Device::Gfl, GenSetting::Gfl { p_ref, q_ref }) => {
                    inj.push((Complex64::new(*p_ref, *q_ref) / vt).conj());
                }
                _ => panic!("generator {g}: setting does not match the device kind"),
            }
        }
        inj
    }

    fn residual(&self, u: &[f64]) -> Vec<f64> {
        let n = self.case.buses.len();
        let v: Vec<Complex64> = (0..n).map(|k| Complex64::new(u[k], u[n + k])).collect();
        let dw = u[2 * n];
        let y = self.ybus(dw);
        let mut extra = Vec::new();
        let inj = self.devices(u, &v, dw, &mut extra);
        let mut net: Vec<Complex64> = (0..n).map(|i| (0..n).map(|k| y[i][k] * v[k]).sum()).collect();
        for (g, i) in inj.iter().enumerate() {
            net[self.case.position(self.case.generators[g].bus)] -= i;
        }
        for (l, ls) in self.set.loads.iter().enumerate() {
            let b = self.case.position(self.case.loads[l].bus);
            let vb = v[b];
            let c = |s: (f64, f64)| Complex64::new(s.0, s.1);
            let mut i = c(ls.z).conj() / (ls.v0 * ls.v0) * vb + c(ls.i).conj() / ls.v0 * vb / vb.norm() + (c(ls.p) / vb).conj();
            if let Some(e) = ls.e {
                i += (c(e) / vb).conj();
            }
            net[b] += i;
        }
        let mut r: Vec<f64> = net.iter().map(|c| c.re).chain(net.iter().map(|c| c.im)).collect();
        r.extend(extra);
        r.push(v[self.reference].im);
        r
    }
}

/// Newton on the steady-state equations from the voltage guess `v_guess`
/// (case bus order). Returns `None` without convergence.
pub fn droop_steady_state(case: &OracleCase, set: &DroopSettings, v_guess: &[Complex64]) -> Option<OracleResult<DroopSolution>> {
    let model = Model::new(case, set);
    let n = case.buses.len();
    let mut u = vec![0.0; model.n_unknown];
    for k in 0..n {
        u[k] = v_guess[k].re;
        u[n + k] = v_guess[k].im;
    }
    for (g, dev) in model.devices.iter().enumerate() {
        let vt = v_guess[case.position(case.generators[g].bus)];
        let at = model.slots[g];
        match (dev, &set.generators[g]) {
            (Device::Sm(m), GenSetting::Sm { p_ref, .. }) => {
                let i = (Complex64::new(*p_ref, 0.0) / vt).conj();
                u[at] = (vt + Complex64::new(m.ra, m.xq) * i).arg();
            }
            (Device::Vsm(_), GenSetting::Vsm { p_ref, .. }) => {
                let i = (Complex64::new(*p_ref, 0.0) / vt).conj();
                u[at] = i.re;
                u[at + 1] = i.im;
            }
            _ => {}
        }
    }

    for iter in 1..=50 {
        let r = model.residual(&u);
        if r.iter().any(|x| !x.is_finite()) {
            return None;
        }
        if r.iter().fold(0.0f64, |m, x| m.max(x.abs())) < 1e-12 {
            let mut extra = Vec::new();
            let v: Vec<Complex64> = (0..n).map(|k| Complex64::new(u[k], u[n + k])).collect();
            let gen_current = model.devices(&u, &v, u[2 * n], &mut extra);
            return Some(OracleResult {
                value: DroopSolution {
                    v,
                    d_omega: u[2 * n],
                    gen_current,
                    iterations: iter,
                },
                method: "Newton with forward-difference Jacobian",
                tolerance: 1e-9,
            });
        }
        let m = u.len();
        let mut jac = vec![vec![0.0; m]; m];
        for c in 0..m {
            let h = 1e-7 * u[c].abs().max(1.0);
            let mut up = u.clone();
            up[c] += h;
            let rp = model.residual(&up);
            for (row, (a, b)) in rp.iter().zip(&r).enumerate() {
                jac[row][c] = (a - b) / h;
            }
        }
        let step = solve_dense(jac, r.iter().map(|x| -x).collect())?;
        for (a, s) in u.iter_mut().zip(step) {
            *a += s;
        }
    }
    None
}
