use num_complex::Complex64;

use crate::{OracleCase, OracleResult};

pub type CMatrix = Vec<Vec<Complex64>>;

/// Bus admittance matrix assembled branch by branch from the π model,
/// skipping the branch ids in `out`. Rows follow the case bus order.
pub fn textbook_ybus(case: &OracleCase, out: &[&str]) -> CMatrix {
    let n = case.buses.len();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for br in case.branches.iter().filter(|b| !out.contains(&b.id.as_str())) {
        let (i, k) = (case.position(br.from_bus), case.position(br.to_bus));
        let ys = 1.0 / Complex64::new(br.r, br.x);
        let half = Complex64::new(0.0, br.b / 2.0);
        y[i][i] += ys + half;
        y[k][k] += ys + half;
        y[i][k] -= ys;
        y[k][i] -= ys;
    }
    y
}

#[derive(Debug, Clone, PartialEq)]
pub struct GsSolution {
    pub v: Vec<Complex64>,
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub iterations: usize,
}

/// Gauss–Seidel power flow with constant-power loads. PV buses hold
/// `v_set`; the reference bus holds `v_set∠0`.
pub fn gs_power_flow(case: &OracleCase, out: &[&str], tol: f64, max_iter: usize) -> Option<OracleResult<GsSolution>> {
    let n = case.buses.len();
    let y = textbook_ybus(case, out);
    let (mut p, mut q) = (vec![0.0; n], vec![0.0; n]);
    for g in &case.generators {
        p[case.position(g.bus)] += g.p_set;
        q[case.position(g.bus)] += g.q_set;
    }
    for l in &case.loads {
        p[case.position(l.bus)] -= l.p0;
        q[case.position(l.bus)] -= l.q0;
    }
    let mut v: Vec<Complex64> = case
        .buses
        .iter()
        .map(|b| Complex64::new(b.v_set.unwrap_or(1.0), 0.0))
        .collect();
    let injection = |v: &[Complex64], i: usize| -> Complex64 {
        let current: Complex64 = (0..n).map(|k| y[i][k] * v[k]).sum();
        v[i] * current.conj()
    };

    for iter in 1..=max_iter {
        let mut change = 0.0f64;
        for i in 0..n {
            let kind = case.buses[i].kind.as_str();
            if kind == "Reference" {
                continue;
            }
            let qi = if kind == "PV" { injection(&v, i).im } else { q[i] };
            let others: Complex64 = (0..n).filter(|&k| k != i).map(|k| y[i][k] * v[k]).sum();
            let mut vi = (Complex64::new(p[i], -qi) / v[i].conj() - others) / y[i][i];
            if kind == "PV" {
                vi *= case.buses[i].v_set.unwrap_or(1.0) / vi.norm();
            } else {
                vi = v[i] + 1.2 * (vi - v[i]);
            }
            change = change.max((vi - v[i]).norm());
            v[i] = vi;
        }
        if change < tol {
            let s: Vec<Complex64> = (0..n).map(|i| injection(&v, i)).collect();
            let mismatch = (0..n)
                .filter(|&i| case.buses[i].kind != "Reference")
                .map(|i| {
                    let dp = (s[i].re - p[i]).abs();
                    let dq = if case.buses[i].kind == "PQ" { (s[i].im - q[i]).abs() } else { 0.0 };
                    dp.max(dq)
                })
                .fold(0.0, f64::max);
            if mismatch > 100.0 * tol {
                continue;
            }
            return Some(OracleResult {
                value: GsSolution {
                    p_inj: s.iter().map(|s| s.re).collect(),
                    q_inj: s.iter().map(|s| s.im).collect(),
                    v,
                    iterations: iter,
                },
                method: "Gauss-Seidel, acceleration 1.2 on PQ buses",
                tolerance: 1e-8,
            });
        }
    }
    None
}
