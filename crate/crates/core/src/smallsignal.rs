//! Linearization, algebraic reduction, eigenvalues and participation factors.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dae::{assemble, EquilibriumPoint, ScenarioSpec, SystemModel};
use crate::devices::lines::condition_number;
use crate::error::{Error, Result};
use crate::netdata::NetworkCase;
use crate::par::{self, Execution};

pub const DEFAULT_STEP: f64 = 1e-6;
pub const CONDITION_LIMIT: f64 = 1e12;
pub const REFERENCE_MODE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBlocks {
    pub f_x: DMatrix<f64>,
    pub f_y: DMatrix<f64>,
    pub g_x: DMatrix<f64>,
    pub g_y: DMatrix<f64>,
}

/// Central-difference Jacobian of `func: R^n → R^m` at `z`, with step
/// `h·max(|z_j|, 1)` per column.
pub fn jacobian_of<F>(func: F, z: &[f64], m: usize, h: f64, exec: Execution) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync + Send,
{
    if !(h > 0.0) {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {h}")));
    }
    let n = z.len();
    let cols = par::map_range(exec, n, |c| -> Result<Vec<f64>> {
        let step = h * z[c].abs().max(1.0);
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[c] += step;
        zm[c] -= step;
        let fp = func(&zp).map_err(|e| Error::Perturbation(Box::new(e)))?;
        let fm = func(&zm).map_err(|e| Error::Perturbation(Box::new(e)))?;
        Ok((0..m).map(|r| (fp[r] - fm[r]) / (2.0 * step)).collect())
    });
    let mut jac = DMatrix::zeros(m, n);
    for (c, col) in cols.into_iter().enumerate() {
        let col = col?;
        for r in 0..m {
            jac[(r, c)] = col[r];
        }
    }
    Ok(jac)
}

pub fn jacobian(system: &SystemModel, eq: &EquilibriumPoint, h: f64) -> Result<JacobianBlocks> {
    jacobian_with(system, eq, h, Execution::Parallel)
}

pub fn jacobian_with(system: &SystemModel, eq: &EquilibriumPoint, h: f64, exec: Execution) -> Result<JacobianBlocks> {
    let (nx, ny) = (system.n_diff, system.n_alg);
    let z: Vec<f64> = eq.x0.iter().chain(eq.y0.iter()).copied().collect();
    let func = |z: &[f64]| -> Result<Vec<f64>> {
        let (f, g) = system.residual(&eq.setpoints, &z[..nx], &z[nx..])?;
        Ok(f.into_iter().chain(g).collect())
    };
    let full = jacobian_of(func, &z, nx + ny, h, exec)?;
    Ok(JacobianBlocks {
        f_x: full.view((0, 0), (nx, nx)).into_owned(),
        f_y: full.view((0, nx), (nx, ny)).into_owned(),
        g_x: full.view((nx, 0), (ny, nx)).into_owned(),
        g_y: full.view((nx, nx), (ny, ny)).into_owned(),
    })
}

/// `A = f_x − f_y g_y⁻¹ g_x` and the condition number of `g_y` (1 when there
/// is no algebraic block).
pub fn reduce(blocks: &JacobianBlocks) -> Result<(DMatrix<f64>, f64)> {
    if blocks.g_y.nrows() != blocks.g_y.ncols() {
        return Err(Error::Domain("g_y must be square".into()));
    }
    if blocks.g_y.is_empty() {
        return Ok((blocks.f_x.clone(), 1.0));
    }
    let cond = condition_number(&blocks.g_y);
    if !(cond <= CONDITION_LIMIT) {
        return Err(Error::AlgebraicSingularity { condition: cond });
    }
    let sol = blocks
        .g_y
        .clone()
        .lu()
        .solve(&blocks.g_x)
        .ok_or(Error::AlgebraicSingularity { condition: f64::INFINITY })?;
    Ok((&blocks.f_x - &blocks.f_y * sol, cond))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub eigenvalues: Vec<Complex64>,
    pub freq_hz: Vec<f64>,
    pub damping_ratio: Vec<f64>,
    pub is_reference_mode: Vec<bool>,
    pub max_real_part: f64,
    pub stable: bool,
    pub reference_mode_present: bool,
    pub g_y_condition: Option<f64>,
}

impl EigenReport {
    /// Eigenvalues excluding the reference mode.
    pub fn modes(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|(k, _)| !self.is_reference_mode[*k])
            .map(|(k, l)| (k, *l))
    }
}

fn sort_key(l: &Complex64) -> (f64, f64) {
    (l.re, l.im)
}

pub fn eigenvalues(a: &DMatrix<f64>) -> Result<EigenReport> {
    let n = a.nrows();
    if n != a.ncols() || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenSolver(n));
    }
    let mut lambdas: Vec<Complex64> = if n == 0 {
        Vec::new()
    } else {
        let mut m = a.clone();
        nalgebra::linalg::balancing::balance_parlett_reinsch(&mut m);
        let schur = nalgebra::linalg::Schur::try_new(m, f64::EPSILON, 100_000).ok_or(Error::EigenSolver(n))?;
        schur.complex_eigenvalues().iter().copied().collect()
    };
    lambdas.sort_by(|a, b| sort_key(b).partial_cmp(&sort_key(a)).unwrap_or(std::cmp::Ordering::Equal));
    // Pick at most one reference mode: the smallest below the threshold.
    let reference = lambdas
        .iter()
        .enumerate()
        .filter(|(_, l)| l.norm() < REFERENCE_MODE_TOL)
        .min_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
        .map(|(k, _)| k);
    let is_reference_mode: Vec<bool> = (0..lambdas.len()).map(|k| Some(k) == reference).collect();
    let freq_hz = lambdas.iter().map(|l| l.im.abs() / (2.0 * std::f64::consts::PI)).collect();
    let damping_ratio = lambdas
        .iter()
        .map(|l| if l.norm() > 0.0 { -l.re / l.norm() } else { 1.0 })
        .collect();
    let max_real_part = lambdas
        .iter()
        .zip(&is_reference_mode)
        .filter(|(_, r)| !**r)
        .map(|(l, _)| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(EigenReport {
        stable: max_real_part < 0.0,
        reference_mode_present: reference.is_some(),
        eigenvalues: lambdas,
        freq_hz,
        damping_ratio,
        is_reference_mode,
        max_real_part,
        g_y_condition: None,
    })
}

/// Jacobian, reduction and eigenvalues in one call.
pub fn analyze(system: &SystemModel, eq: &EquilibriumPoint) -> Result<(EigenReport, DMatrix<f64>)> {
    analyze_with(system, eq, Execution::Parallel)
}

pub fn analyze_with(system: &SystemModel, eq: &EquilibriumPoint, exec: Execution) -> Result<(EigenReport, DMatrix<f64>)> {
    let blocks = jacobian_with(system, eq, DEFAULT_STEP, exec)?;
    let (a, cond) = reduce(&blocks)?;
    let mut rep = eigenvalues(&a)?;
    if system.n_alg > 0 {
        rep.g_y_condition = Some(cond);
    }
    Ok((rep, a))
}

fn inverse_iteration(m: &DMatrix<Complex64>, lambda: Complex64) -> DVector<Complex64> {
    let n = m.nrows();
    let shift = lambda + Complex64::new(1e-10 * lambda.norm().max(1.0), 1e-10 * lambda.norm().max(1.0));
    let shifted = m - DMatrix::from_diagonal_element(n, n, shift);
    let lu = shifted.lu();
    let mut v = DVector::from_fn(n, |k, _| Complex64::new(1.0 + 0.01 * k as f64, 0.3 - 0.007 * k as f64));
    for _ in 0..3 {
        match lu.solve(&v) {
            Some(w) => {
                let norm = w.norm();
                if !(norm > 0.0) || !norm.is_finite() {
                    break;
                }
                v = w / Complex64::new(norm, 0.0);
            }
            None => break,
        }
    }
    v
}

/// Participation factors, one row per eigenvalue of `report` (same order),
/// one column per state; each row sums to 1.
pub fn participation_factors(a: &DMatrix<f64>, report: &EigenReport) -> DMatrix<f64> {
    let n = a.nrows();
    let ac: DMatrix<Complex64> = a.map(|v| Complex64::new(v, 0.0));
    let at = ac.transpose();
    let rows: Vec<Vec<f64>> = par::map_range(Execution::Parallel, report.eigenvalues.len(), |k| {
        let l = report.eigenvalues[k];
        let r = inverse_iteration(&ac, l);
        let w = inverse_iteration(&at, l);
        let p: Vec<f64> = (0..n).map(|i| (w[i] * r[i]).norm()).collect();
        let s: f64 = p.iter().sum();
        if s > 0.0 && s.is_finite() {
            p.into_iter().map(|v| v / s).collect()
        } else {
            // Defective or failed: fall back to the right-vector magnitudes.
            let q: Vec<f64> = (0..n).map(|i| r[i].norm_sqr()).collect();
            let s: f64 = q.iter().sum::<f64>().max(f64::MIN_POSITIVE);
            q.into_iter().map(|v| v / s).collect()
        }
    });
    let mut out = DMatrix::zeros(report.eigenvalues.len(), n);
    for (k, row) in rows.into_iter().enumerate() {
        for (i, v) in row.into_iter().enumerate() {
            out[(k, i)] = v;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub load_scale: f64,
    pub condition: f64,
    pub det_sign: f64,
}

#[derive(Debug)]
pub struct SingularityScan {
    /// Points approaching the singularity from below, in increasing load.
    pub points: Vec<ScanPoint>,
    /// First point found past a determinant sign change, if any.
    pub beyond: Option<ScanPoint>,
    /// The error that ended the scan.
    pub terminated_by: Error,
}

fn gy_at(case: &NetworkCase, scenario: &ScenarioSpec, load_scale: f64) -> Result<DMatrix<f64>> {
    let mut sc = scenario.clone();
    sc.load_scale = load_scale;
    let sys = assemble(case, &sc)?;
    let eq = sys.equilibrium()?;
    Ok(jacobian(&sys, &eq, DEFAULT_STEP)?.g_y)
}

/// Sweep the load scale upward from `start` in steps of `step` under a
/// statpi scenario, tracking the condition and determinant sign of `g_y`.
/// When the sign flips the interval is bisected until the condition exceeds
/// [`CONDITION_LIMIT`], which ends the scan with an algebraic-singularity
/// error. Any other failure (e.g. the power flow diverging) also ends it.
pub fn singularity_scan(case: &NetworkCase, scenario: &ScenarioSpec, start: f64, step: f64, max_scale: f64) -> SingularityScan {
    let mut points: Vec<ScanPoint> = Vec::new();
    let mut beyond: Option<ScanPoint> = None;
    let probe = |s: f64| -> Result<ScanPoint> {
        let gy = gy_at(case, scenario, s)?;
        let cond = condition_number(&gy);
        let det = gy.clone().lu().determinant();
        Ok(ScanPoint {
            load_scale: s,
            condition: cond,
            det_sign: det.signum(),
        })
    };
    let mut s = start;
    while s <= max_scale + 1e-12 {
        let pt = match probe(s) {
            Ok(p) => p,
            Err(e) => return SingularityScan { points, beyond, terminated_by: e },
        };
        if pt.condition > CONDITION_LIMIT {
            let condition = pt.condition;
            points.push(pt);
            return SingularityScan {
                points,
                beyond,
                terminated_by: Error::AlgebraicSingularity { condition },
            };
        }
        if let Some(prev) = points.last().cloned() {
            if prev.det_sign != pt.det_sign {
                let (mut lo, mut hi) = (prev, pt.clone());
                beyond = Some(pt);
                for _ in 0..80 {
                    let mid = 0.5 * (lo.load_scale + hi.load_scale);
                    if mid <= lo.load_scale || mid >= hi.load_scale {
                        break;
                    }
                    let m = match probe(mid) {
                        Ok(p) => p,
                        Err(e) => return SingularityScan { points, beyond, terminated_by: e },
                    };
                    if m.condition > CONDITION_LIMIT {
                        let condition = m.condition;
                        points.push(m);
                        return SingularityScan {
                            points,
                            beyond,
                            terminated_by: Error::AlgebraicSingularity { condition },
                        };
                    }
                    if m.det_sign == lo.det_sign {
                        points.push(m.clone());
                        lo = m;
                    } else {
                        hi = m;
                    }
                }
                let condition = lo.condition.max(hi.condition);
                return SingularityScan {
                    points,
                    beyond,
                    terminated_by: Error::AlgebraicSingularity { condition },
                };
            }
        }
        points.push(pt);
        s += step;
    }
    SingularityScan {
        points,
        beyond,
        terminated_by: Error::Range(format!("no singularity up to load scale {max_scale}")),
    }
}

/// Smallest unstable load scale in `[lo, hi]` by bisection to `tol`, given
/// that `lo` is stable. Returns `None` when `hi` is still stable. A scale
/// whose analysis fails (no equilibrium, singular algebra) counts as
/// unstable.
pub fn instability_onset(case: &NetworkCase, scenario: &ScenarioSpec, lo: f64, hi: f64, tol: f64) -> Result<Option<f64>> {
    let unstable = |s: f64| -> bool {
        let mut sc = scenario.clone();
        sc.load_scale = s;
        let run = || -> Result<bool> {
            let sys = assemble(case, &sc)?;
            let eq = sys.equilibrium()?;
            Ok(!analyze(&sys, &eq)?.0.stable)
        };
        run().unwrap_or(true)
    };
    if unstable(lo) {
        return Err(Error::Range(format!("load scale {lo} is already unstable")));
    }
    if !unstable(hi) {
        return Ok(None);
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if unstable(m) {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(Some(b))
}
