//! AC power flow (Newton-Raphson, polar form) and the loading protocol.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netdata::{build_ybus, BranchKind, BranchSet, BusKind, NetworkCase};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BranchFlow {
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

impl BranchFlow {
    /// Larger apparent power of the two ends.
    pub fn apparent_max(&self) -> f64 {
        self.p_from.hypot(self.q_from).max(self.p_to.hypot(self.q_to))
    }

    pub fn losses(&self) -> (f64, f64) {
        (self.p_from + self.p_to, self.q_from + self.q_to)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PFSolution {
    pub bus_ids: Vec<usize>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub residual_norm: f64,
    pub tolerance: f64,
    pub iterations: usize,
    pub in_service: BranchSet,
    /// Per branch in case order; zero for branches out of service.
    pub branch_flows: Vec<BranchFlow>,
}

impl PFSolution {
    pub fn voltage(&self, k: usize) -> Complex64 {
        Complex64::from_polar(self.v[k], self.theta[k])
    }

    pub fn voltages(&self) -> Vec<Complex64> {
        (0..self.v.len()).map(|k| self.voltage(k)).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bus,v_pu,theta_rad,p_inj,q_inj")?;
        for k in 0..self.v.len() {
            writeln!(
                out,
                "{},{:.12},{:.12},{:.12},{:.12}",
                self.bus_ids[k], self.v[k], self.theta[k], self.p_inj[k], self.q_inj[k]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PowerFlowOptions<'a> {
    pub tol: f64,
    pub max_iter: usize,
    pub in_service: Option<BranchSet>,
    pub warm_start: Option<&'a PFSolution>,
}

impl Default for PowerFlowOptions<'_> {
    fn default() -> Self {
        PowerFlowOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            in_service: None,
            warm_start: None,
        }
    }
}

/// Multiply every load's nominal powers and every generator's active-power
/// setpoint by `load_scale`.
pub fn scale_loading(case: &NetworkCase, load_scale: f64) -> NetworkCase {
    let mut out = case.clone();
    for load in &mut out.loads {
        load.p0 *= load_scale;
        load.q0 *= load_scale;
    }
    for g in &mut out.generators {
        g.p_set *= load_scale;
    }
    out
}

/// Specified net injections (generation minus load) per bus.
pub fn scheduled_injections(case: &NetworkCase) -> (Vec<f64>, Vec<f64>) {
    let pos = case.bus_positions();
    let n = case.buses.len();
    let (mut p, mut q) = (vec![0.0; n], vec![0.0; n]);
    for g in &case.generators {
        p[pos[&g.bus]] += g.p_set;
        q[pos[&g.bus]] += g.q_set;
    }
    for load in &case.loads {
        p[pos[&load.bus]] -= load.p0;
        q[pos[&load.bus]] -= load.q0;
    }
    (p, q)
}

pub fn solve_power_flow(case: &NetworkCase, tol: f64, max_iter: usize) -> Result<PFSolution> {
    solve_power_flow_with(
        case,
        &PowerFlowOptions {
            tol,
            max_iter,
            ..Default::default()
        },
    )
}

pub fn solve_power_flow_with(case: &NetworkCase, opts: &PowerFlowOptions) -> Result<PFSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::Domain(format!("power-flow tolerance must be positive, got {}", opts.tol)));
    }
    let in_service = opts.in_service.clone().unwrap_or_else(|| BranchSet::all(case));
    let y = build_ybus(case, &in_service);
    let n = case.buses.len();
    let (p_spec, q_spec) = scheduled_injections(case);

    let mut vm: Vec<f64> = case.buses.iter().map(|b| b.v_set.unwrap_or(1.0)).collect();
    let mut va = vec![0.0; n];
    if let Some(ws) = opts.warm_start {
        for k in 0..n {
            va[k] = ws.theta[k];
            if case.buses[k].kind == BusKind::PQ {
                vm[k] = ws.v[k];
            }
        }
    }

    let pvpq: Vec<usize> = (0..n).filter(|&k| case.buses[k].kind != BusKind::Reference).collect();
    let pq: Vec<usize> = (0..n).filter(|&k| case.buses[k].kind == BusKind::PQ).collect();
    let (npv, npq) = (pvpq.len(), pq.len());

    let mismatch = |vm: &[f64], va: &[f64]| -> (DVector<f64>, Vec<Complex64>, DVector<Complex64>) {
        let v = DVector::from_iterator(n, (0..n).map(|k| Complex64::from_polar(vm[k], va[k])));
        let ibus = &y * &v;
        let s: Vec<Complex64> = (0..n).map(|k| v[k] * ibus[k].conj()).collect();
        let mut f = DVector::zeros(npv + npq);
        for (r, &k) in pvpq.iter().enumerate() {
            f[r] = s[k].re - p_spec[k];
        }
        for (r, &k) in pq.iter().enumerate() {
            f[npv + r] = s[k].im - q_spec[k];
        }
        (f, s, ibus)
    };

    let mut iterations = 0;
    loop {
        let (f, _, ibus) = mismatch(&vm, &va);
        let norm = f.amax();
        if !norm.is_finite() {
            return Err(Error::PowerFlowDiverged { iterations, mismatch: norm });
        }
        if norm < opts.tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::PowerFlowDiverged { iterations, mismatch: norm });
        }
        iterations += 1;

        // dS/dVa = j diag(V) conj(diag(I) - Y diag(V));
        // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
        let v: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(vm[k], va[k])).collect();
        let j = Complex64::i();
        let mut jac = DMatrix::zeros(npv + npq, npv + npq);
        for (r, &a) in pvpq.iter().enumerate() {
            for (c, &b) in pvpq.iter().enumerate() {
                let mut ds = -v[a] * (y[(a, b)] * v[b]).conj();
                if a == b {
                    ds += v[a] * ibus[a].conj();
                }
                let ds = j * ds;
                jac[(r, c)] = ds.re;
            }
            for (c, &b) in pq.iter().enumerate() {
                let vn = v[b] / vm[b];
                let mut ds = v[a] * (y[(a, b)] * vn).conj();
                if a == b {
                    ds += ibus[a].conj() * vn;
                }
                jac[(r, npv + c)] = ds.re;
            }
        }
        for (r, &a) in pq.iter().enumerate() {
            for (c, &b) in pvpq.iter().enumerate() {
                let mut ds = -v[a] * (y[(a, b)] * v[b]).conj();
                if a == b {
                    ds += v[a] * ibus[a].conj();
                }
                let ds = j * ds;
                jac[(npv + r, c)] = ds.im;
            }
            for (c, &b) in pq.iter().enumerate() {
                let vn = v[b] / vm[b];
                let mut ds = v[a] * (y[(a, b)] * vn).conj();
                if a == b {
                    ds += ibus[a].conj() * vn;
                }
                jac[(npv + r, npv + c)] = ds.im;
            }
        }
        let dx = jac
            .lu()
            .solve(&(-f))
            .ok_or(Error::SingularJacobian(iterations))?;
        for (r, &k) in pvpq.iter().enumerate() {
            va[k] += dx[r];
        }
        for (r, &k) in pq.iter().enumerate() {
            vm[k] += dx[npv + r];
        }
    }

    let (f, s, _) = mismatch(&vm, &va);
    let branch_flows = branch_flows(case, &in_service, &vm, &va);
    Ok(PFSolution {
        bus_ids: case.buses.iter().map(|b| b.id).collect(),
        v: vm,
        theta: va,
        p_inj: s.iter().map(|s| s.re).collect(),
        q_inj: s.iter().map(|s| s.im).collect(),
        residual_norm: if f.is_empty() { 0.0 } else { f.amax() },
        tolerance: opts.tol,
        iterations,
        in_service,
        branch_flows,
    })
}

fn branch_flows(case: &NetworkCase, in_service: &BranchSet, vm: &[f64], va: &[f64]) -> Vec<BranchFlow> {
    let pos = case.bus_positions();
    case.branches
        .iter()
        .enumerate()
        .map(|(k, br)| {
            if !in_service.contains(k) {
                return BranchFlow::default();
            }
            let (f, t) = (pos[&br.from_bus], pos[&br.to_bus]);
            let vf = Complex64::from_polar(vm[f], va[f]);
            let vt = Complex64::from_polar(vm[t], va[t]);
            let ys = br.series_admittance();
            let ysh = Complex64::new(0.0, br.b / 2.0);
            let i_f = ys * (vf - vt) + ysh * vf;
            let i_t = ys * (vt - vf) + ysh * vt;
            let (sf, st) = (vf * i_f.conj(), vt * i_t.conj());
            BranchFlow {
                p_from: sf.re,
                q_from: sf.im,
                p_to: st.re,
                q_to: st.im,
            }
        })
        .collect()
}

/// The in-service transmission line with the largest end apparent power.
/// Transformers are only considered when the network has no lines. Ties go
/// to the lexically smaller branch id.
pub fn heaviest_loaded_branch(case: &NetworkCase, sol: &PFSolution) -> Option<usize> {
    let candidates: Vec<usize> = {
        let lines: Vec<usize> = sol
            .in_service
            .iter()
            .filter(|&k| case.branches[k].kind == BranchKind::Line)
            .collect();
        if lines.is_empty() {
            sol.in_service.iter().collect()
        } else {
            lines
        }
    };
    let mut best: Option<(usize, f64)> = None;
    for k in candidates {
        let s = sol.branch_flows[k].apparent_max();
        best = match best {
            None => Some((k, s)),
            Some((b, sb)) => {
                let tie = (s - sb).abs() <= 1e-9 * sb.max(1.0);
                if (tie && case.branches[k].id < case.branches[b].id) || (!tie && s > sb) {
                    Some((k, s))
                } else {
                    Some((b, sb))
                }
            }
        };
    }
    best.map(|(k, _)| k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netdata::{BranchParams, Bus};

    fn two_bus(branches: Vec<BranchParams>, load_p: f64) -> NetworkCase {
        let mut case = NetworkCase::case9();
        case.buses = vec![
            Bus { id: 1, kind: BusKind::Reference, v_set: Some(1.0), v_nom: 1.0 },
            Bus { id: 2, kind: BusKind::PQ, v_set: None, v_nom: 1.0 },
        ];
        case.branches = branches;
        case.generators.truncate(1);
        case.loads.truncate(1);
        case.loads[0].bus = 2;
        case.loads[0].p0 = load_p;
        case.loads[0].q0 = 0.0;
        case
    }

    fn line(id: &str, x: f64) -> BranchParams {
        BranchParams {
            id: id.into(),
            from_bus: 1,
            to_bus: 2,
            r: 0.0,
            x,
            b: 0.0,
            kind: BranchKind::Line,
        }
    }

    #[test]
    fn identity_scaling() {
        let case = NetworkCase::case9();
        assert_eq!(scale_loading(&case, 1.0), case);
    }

    #[test]
    fn scaling_multiplies_loads_and_dispatch() {
        let case = NetworkCase::case9();
        let s = scale_loading(&case, 0.2);
        let k = s.loads.iter().position(|l| l.bus == 5).unwrap();
        assert!((s.loads[k].p0 - 0.2 * case.loads[k].p0).abs() < 1e-15);
        assert!((s.generators[1].p_set - 0.2 * case.generators[1].p_set).abs() < 1e-15);
        assert_eq!(s.branches, case.branches);
        let z = scale_loading(&case, 0.0);
        assert!(z.loads.iter().all(|l| l.p0 == 0.0 && l.q0 == 0.0));
        assert!(z.generators.iter().all(|g| g.p_set == 0.0));
    }

    #[test]
    fn case9_converges_quickly() {
        let case = NetworkCase::case9();
        let sol = solve_power_flow(&case, 1e-8, 20).unwrap();
        assert!(sol.iterations <= 6, "{} iterations", sol.iterations);
        assert!(sol.residual_norm < 1e-8);
    }

    #[test]
    fn no_load_reference_supplies_losses() {
        let case = scale_loading(&NetworkCase::case9(), 0.0);
        let sol = solve_power_flow(&case, 1e-10, 20).unwrap();
        let losses: f64 = sol.branch_flows.iter().map(|f| f.losses().0).sum();
        for (k, bus) in case.buses.iter().enumerate() {
            if let Some(v) = bus.v_set {
                assert!((sol.v[k] - v).abs() < 1e-12);
            }
            if k != case.reference_bus() {
                assert!(sol.p_inj[k].abs() < 1e-9, "bus {} injects {}", bus.id, sol.p_inj[k]);
            }
        }
        assert!(losses > 0.0);
        assert!((sol.p_inj[case.reference_bus()] - losses).abs() < 1e-9);
    }

    #[test]
    fn beyond_loadability_fails() {
        let case = scale_loading(&NetworkCase::case9(), 10.0);
        let err = solve_power_flow(&case, 1e-8, 20).unwrap_err();
        assert!(matches!(err, Error::PowerFlowDiverged { .. } | Error::SingularJacobian(_)));
    }

    #[test]
    fn nominal_trip_target_is_line_4_5() {
        let case = NetworkCase::case9();
        let sol = solve_power_flow(&case, 1e-8, 20).unwrap();
        let k = heaviest_loaded_branch(&case, &sol).unwrap();
        assert_eq!(case.branches[k].id, "4-5");
    }

    #[test]
    fn singleton_network_picks_its_branch() {
        let case = two_bus(vec![line("only", 0.1)], 0.5);
        let sol = solve_power_flow(&case, 1e-10, 20).unwrap();
        assert_eq!(heaviest_loaded_branch(&case, &sol), Some(0));
    }

    #[test]
    fn equal_flows_break_ties_by_id() {
        let case = two_bus(vec![line("b", 0.1), line("a", 0.1)], 0.5);
        let sol = solve_power_flow(&case, 1e-12, 20).unwrap();
        assert_eq!(heaviest_loaded_branch(&case, &sol), Some(1));
    }

    #[test]
    fn csv_header() {
        let sol = solve_power_flow(&NetworkCase::case9(), 1e-8, 20).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("bus,v_pu,theta_rad,p_inj,q_inj\n"));
        assert_eq!(text.lines().count(), 10);
    }
}
