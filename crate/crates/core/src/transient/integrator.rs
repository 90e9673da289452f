use std::time::Instant;

use nalgebra::{DMatrix, DVector, LU, Dyn};

use super::{Outcome, SolverStats, TransientMetadata, TransientResult};
use crate::dae::{BranchEvent, EquilibriumPoint, Setpoints, SystemModel};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::smallsignal::jacobian_of;

const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;
/// Shared diagonal coefficient of both stages, `γ/2 = (1−γ)/(2−γ)`.
const D: f64 = GAMMA / 2.0;
const DIVERGENCE_LIMIT: f64 = 1e6;
const H_FLOOR: f64 = 1e-12;
const NEWTON_MAX: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub horizon: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Dense-output sampling rate (Hz).
    pub sample_rate: f64,
    /// Trailing window (s) over which every signal must stay within
    /// `settle_tol` for the run to count as converged.
    pub settle_window: f64,
    pub settle_tol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
    pub exec: Execution,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            horizon: 5.0,
            rtol: 1e-6,
            atol: 1e-8,
            sample_rate: 1e4,
            settle_window: 0.5,
            settle_tol: 1e-4,
            h_init: 1e-5,
            h_max: 0.02,
            max_steps: 2_000_000,
            exec: Execution::Parallel,
        }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.horizon > 0.0
            && self.rtol > 0.0
            && self.atol > 0.0
            && self.sample_rate > 0.0
            && self.settle_window >= 0.0
            && self.settle_tol > 0.0
            && self.h_init > 0.0
            && self.h_max >= self.h_init;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid simulation options {self:?}")))
        }
    }
}

struct Segment<'a> {
    sys: &'a SystemModel,
    sp: &'a Setpoints,
    nx: usize,
    n: usize,
}

impl Segment<'_> {
    fn rhs(&self, z: &[f64], stats: &mut SolverStats) -> Result<Vec<f64>> {
        stats.residual_evals += 1;
        let (f, g) = self.sys.residual(self.sp, &z[..self.nx], &z[self.nx..])?;
        Ok(f.into_iter().chain(g).collect())
    }

    fn jacobian(&self, z: &[f64], exec: Execution, stats: &mut SolverStats) -> Result<DMatrix<f64>> {
        stats.jacobians += 1;
        stats.residual_evals += 2 * self.n;
        let (nx, sys, sp) = (self.nx, self.sys, self.sp);
        jacobian_of(
            |z: &[f64]| {
                let (f, g) = sys.residual(sp, &z[..nx], &z[nx..])?;
                Ok(f.into_iter().chain(g).collect())
            },
            z,
            self.n,
            1e-7,
            exec,
        )
    }

    fn iteration_matrix(&self, jac: &DMatrix<f64>, h: f64, stats: &mut SolverStats) -> LU<f64, Dyn, Dyn> {
        stats.factorizations += 1;
        let mut w = jac * (-D * h);
        for k in 0..self.nx {
            w[(k, k)] += 1.0;
        }
        w.lu()
    }
}

fn weights(a: &[f64], b: &[f64], opts: &SimOptions) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| opts.atol + opts.rtol * p.abs().max(q.abs())).collect()
}

fn wrms(v: &[f64], w: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().zip(w).map(|(a, b)| (a / b).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

enum Stage {
    Converged(Vec<f64>),
    Failed,
}

/// Newton solve of `M z − D h F(z) = rhs_const` (differential rows) and
/// `−D h g(z) = 0` (algebraic rows).
fn newton(
    seg: &Segment,
    lu: &LU<f64, Dyn, Dyn>,
    z_guess: &[f64],
    base: &[f64],
    h: f64,
    w: &[f64],
    stats: &mut SolverStats,
) -> Result<Stage> {
    let mut z = z_guess.to_vec();
    let mut prev = f64::INFINITY;
    for it in 0..NEWTON_MAX {
        let f = match seg.rhs(&z, stats) {
            Ok(f) => f,
            Err(_) => return Ok(Stage::Failed),
        };
        let mut r = DVector::zeros(seg.n);
        for k in 0..seg.n {
            r[k] = if k < seg.nx { z[k] - base[k] - D * h * f[k] } else { -D * h * f[k] };
        }
        let Some(dz) = lu.solve(&r) else { return Ok(Stage::Failed) };
        for k in 0..seg.n {
            z[k] -= dz[k];
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Ok(Stage::Failed);
        }
        let norm = wrms(dz.as_slice(), w);
        if norm < 1e-2 || (it > 0 && norm < 0.1 && norm / prev < 0.5 && norm * (norm / prev) < 1e-2) {
            return Ok(Stage::Converged(z));
        }
        if it > 0 && norm > 0.9 * prev {
            return Ok(Stage::Failed);
        }
        prev = norm;
    }
    Ok(Stage::Failed)
}

struct Recorder<'a> {
    t: Vec<f64>,
    signals: Vec<Vec<f64>>,
    names: &'a [String],
    next: usize,
    dt: f64,
}

impl Recorder<'_> {
    fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    fn push(&mut self, t: f64, values: &[(String, f64)]) {
        if let Some(&last) = self.t.last() {
            if t <= last {
                return;
            }
        }
        self.t.push(t);
        for (k, name) in self.names.iter().enumerate() {
            let v = values.iter().find(|(n, _)| n == name).map_or(f64::NAN, |(_, v)| *v);
            self.signals[k].push(v);
        }
    }

    /// Samples on the grid inside `(t0, t1]` from a cubic Hermite
    /// interpolant of the differential states and a linear one for the
    /// algebraic states.
    #[allow(clippy::too_many_arguments)]
    fn fill(
        &mut self,
        seg: &Segment,
        t0: f64,
        z0: &[f64],
        f0: &[f64],
        t1: f64,
        z1: &[f64],
        f1: &[f64],
    ) -> Result<()> {
        let h = t1 - t0;
        while self.time(self.next) <= t1 + 1e-12 * t1.abs().max(1.0) {
            let ts = self.time(self.next);
            self.next += 1;
            if ts < t0 - 1e-12 {
                continue;
            }
            let s = ((ts - t0) / h).clamp(0.0, 1.0);
            let (h00, h10, h01, h11) = (
                2.0 * s.powi(3) - 3.0 * s * s + 1.0,
                s.powi(3) - 2.0 * s * s + s,
                -2.0 * s.powi(3) + 3.0 * s * s,
                s.powi(3) - s * s,
            );
            let z: Vec<f64> = (0..seg.n)
                .map(|k| {
                    if k < seg.nx {
                        h00 * z0[k] + h10 * h * f0[k] + h01 * z1[k] + h11 * h * f1[k]
                    } else {
                        (1.0 - s) * z0[k] + s * z1[k]
                    }
                })
                .collect();
            let values = seg.sys.signals(seg.sp, &z[..seg.nx], &z[seg.nx..])?;
            self.push(ts, &values);
        }
        Ok(())
    }
}

enum SegmentEnd {
    Reached(Vec<f64>),
    Diverged { t: f64, reason: String },
}

#[allow(clippy::too_many_arguments)]
fn integrate_segment(
    seg: &Segment,
    z0: Vec<f64>,
    t_start: f64,
    t_end: f64,
    h: &mut f64,
    opts: &SimOptions,
    rec: &mut Recorder,
    stats: &mut SolverStats,
    origin: Option<&[f64]>,
    max_dev: &mut f64,
) -> Result<SegmentEnd> {
    let mut t = t_start;
    let mut z = z0;
    let mut fz = seg.rhs(&z, stats)?;
    let mut jac = seg.jacobian(&z, opts.exec, stats)?;
    let mut jac_fresh = true;
    let mut lu_h = *h;
    let mut lu = seg.iteration_matrix(&jac, *h, stats);
    let kerr = (-3.0 * GAMMA * GAMMA + 4.0 * GAMMA - 2.0) / (12.0 * (2.0 - GAMMA));
    let a2 = -(1.0 - GAMMA).powi(2) / (GAMMA * (2.0 - GAMMA));
    let b2 = 1.0 / (GAMMA * (2.0 - GAMMA));

    while t < t_end - 1e-14 * t_end.abs().max(1.0) {
        if stats.steps_accepted + stats.steps_rejected >= opts.max_steps {
            return Ok(SegmentEnd::Diverged {
                t,
                reason: format!("step budget of {} exhausted", opts.max_steps),
            });
        }
        let mut hs = h.min(opts.h_max).min(t_end - t);
        if t_end - t - hs < 1e-3 * hs {
            hs = t_end - t;
        }
        if hs < H_FLOOR {
            return Ok(SegmentEnd::Diverged {
                t,
                reason: format!("step size collapsed below {H_FLOOR:e} s"),
            });
        }
        if hs != lu_h {
            lu = seg.iteration_matrix(&jac, hs, stats);
            lu_h = hs;
        }
        let w = weights(&z, &z, opts);

        // Trapezoidal stage to t + γh.
        let base1: Vec<f64> = (0..seg.n).map(|k| if k < seg.nx { z[k] + D * hs * fz[k] } else { 0.0 }).collect();
        let guess1: Vec<f64> = (0..seg.n).map(|k| if k < seg.nx { z[k] + GAMMA * hs * fz[k] } else { z[k] }).collect();
        let z1 = match newton(seg, &lu, &guess1, &base1, hs, &w, stats)? {
            Stage::Converged(v) => v,
            Stage::Failed => {
                stats.steps_rejected += 1;
                if !jac_fresh {
                    jac = seg.jacobian(&z, opts.exec, stats)?;
                    jac_fresh = true;
                } else {
                    *h = hs * 0.25;
                }
                lu_h = f64::NAN;
                continue;
            }
        };
        let f1 = seg.rhs(&z1, stats)?;

        // BDF2 stage to t + h.
        let base2: Vec<f64> = (0..seg.n).map(|k| if k < seg.nx { a2 * z[k] + b2 * z1[k] } else { 0.0 }).collect();
        let guess2: Vec<f64> = (0..seg.n)
            .map(|k| if k < seg.nx { z[k] + hs * f1[k] } else { z1[k] })
            .collect();
        let z2 = match newton(seg, &lu, &guess2, &base2, hs, &w, stats)? {
            Stage::Converged(v) => v,
            Stage::Failed => {
                stats.steps_rejected += 1;
                if !jac_fresh {
                    jac = seg.jacobian(&z, opts.exec, stats)?;
                    jac_fresh = true;
                } else {
                    *h = hs * 0.25;
                }
                lu_h = f64::NAN;
                continue;
            }
        };
        let f2 = match seg.rhs(&z2, stats) {
            Ok(f) => f,
            Err(_) => {
                stats.steps_rejected += 1;
                *h = hs * 0.25;
                continue;
            }
        };

        let mut est = DVector::zeros(seg.n);
        for k in 0..seg.nx {
            est[k] = 2.0 * kerr * hs * (fz[k] / GAMMA - f1[k] / (GAMMA * (1.0 - GAMMA)) + f2[k] / (1.0 - GAMMA));
        }
        let filtered = lu.solve(&est).unwrap_or(est);
        let we = weights(&z[..seg.nx], &z2[..seg.nx], opts);
        let err = wrms(&filtered.as_slice()[..seg.nx], &we);
        if !err.is_finite() {
            stats.steps_rejected += 1;
            *h = hs * 0.25;
            continue;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0) };
        if err > 1.0 {
            stats.steps_rejected += 1;
            *h = hs * factor.min(0.9);
            continue;
        }

        stats.steps_accepted += 1;
        stats.h_min = stats.h_min.min(hs);
        stats.h_max = stats.h_max.max(hs);
        rec.fill(seg, t, &z, &fz, t + hs, &z2, &f2)?;
        t += hs;
        if let Some(o) = origin {
            for (a, b) in z2.iter().zip(o) {
                *max_dev = max_dev.max((a - b).abs());
            }
        }
        if let Some(bad) = z2.iter().position(|v| !(v.abs() <= DIVERGENCE_LIMIT)) {
            return Ok(SegmentEnd::Diverged {
                t,
                reason: format!("state {} exceeded {DIVERGENCE_LIMIT:e}", seg.sys.state_index[bad]),
            });
        }
        z = z2;
        fz = f2;
        *h = hs * factor;
        // A slow or stale iteration matrix is refreshed on the next failure;
        // after an accepted step the Jacobian is no longer fresh.
        jac_fresh = false;
    }
    Ok(SegmentEnd::Reached(z))
}

/// Integrate from `eq` to `opts.horizon`, tripping `event.branch` at
/// `event.t_trip` when given.
pub fn simulate(
    system: &SystemModel,
    eq: &EquilibriumPoint,
    event: Option<&BranchEvent>,
    opts: &SimOptions,
) -> Result<TransientResult> {
    opts.validate()?;
    if let Some(ev) = event {
        if !(ev.t_trip >= 0.0 && ev.t_trip < opts.horizon) {
            return Err(Error::Config(format!(
                "trip time {} must lie in [0, horizon = {})",
                ev.t_trip, opts.horizon
            )));
        }
        // Surface unknown or already open branches before integrating.
        system.apply_branch_trip(&ev.branch)?;
    }
    let started = Instant::now();
    let names = system.signal_names();
    let mut rec = Recorder {
        t: Vec::new(),
        signals: vec![Vec::new(); names.len()],
        names: &names,
        next: 1,
        dt: 1.0 / opts.sample_rate,
    };
    let mut stats = SolverStats {
        steps_accepted: 0,
        steps_rejected: 0,
        jacobians: 0,
        factorizations: 0,
        residual_evals: 0,
        h_min: f64::INFINITY,
        h_max: 0.0,
    };
    let sp = &eq.setpoints;
    let z0: Vec<f64> = eq.x0.iter().chain(eq.y0.iter()).copied().collect();
    rec.push(0.0, &system.signals(sp, &eq.x0, &eq.y0)?);

    let mut h = opts.h_init;
    let mut max_dev = 0.0;
    let pre_end = event.map_or(opts.horizon, |e| e.t_trip);
    let seg = Segment {
        sys: system,
        sp,
        nx: system.n_diff,
        n: system.n_diff + system.n_alg,
    };
    let mut outcome = None;
    let mut end_state = z0.clone();
    let mut final_sys = system.clone();
    match integrate_segment(&seg, z0.clone(), 0.0, pre_end, &mut h, opts, &mut rec, &mut stats, Some(&z0), &mut max_dev)? {
        SegmentEnd::Reached(z) => end_state = z,
        SegmentEnd::Diverged { t, reason } => outcome = Some(Outcome::Diverged { t_fail: t, reason }),
    }

    if let (None, Some(ev)) = (&outcome, event) {
        let post = system.apply_branch_trip(&ev.branch)?;
        let x = post.map_states(system, &end_state[..system.n_diff]);
        match post.solve_algebraic(sp, &x, &end_state[system.n_diff..]) {
            Err(e) => {
                outcome = Some(Outcome::Diverged {
                    t_fail: ev.t_trip,
                    reason: format!("algebraic re-solve after trip failed: {e}"),
                })
            }
            Ok(y) => {
                let z: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
                let seg = Segment {
                    sys: &post,
                    sp,
                    nx: post.n_diff,
                    n: post.n_diff + post.n_alg,
                };
                h = opts.h_init;
                match integrate_segment(&seg, z, ev.t_trip, opts.horizon, &mut h, opts, &mut rec, &mut stats, None, &mut max_dev)? {
                    SegmentEnd::Reached(z) => end_state = z,
                    SegmentEnd::Diverged { t, reason } => outcome = Some(Outcome::Diverged { t_fail: t, reason }),
                }
                final_sys = post;
            }
        }
    }

    let outcome = outcome.unwrap_or_else(|| settle(&rec, opts));
    Ok(TransientResult {
        t: rec.t,
        signal_names: names.clone(),
        signals: rec.signals,
        outcome,
        metadata: TransientMetadata {
            scenario: system.scenario.clone(),
            event: event.cloned(),
            horizon: opts.horizon,
            rtol: opts.rtol,
            atol: opts.atol,
            sample_rate: opts.sample_rate,
            settle_window: opts.settle_window,
            settle_tol: opts.settle_tol,
            stats,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
        pre_event_max_deviation: max_dev,
        final_x: end_state[..final_sys.n_diff].to_vec(),
        final_y: end_state[final_sys.n_diff..].to_vec(),
    })
}

fn settle(rec: &Recorder, opts: &SimOptions) -> Outcome {
    let Some(&t_end) = rec.t.last() else { return Outcome::MaxTimeReached };
    let from = rec.t.partition_point(|&t| t < t_end - opts.settle_window);
    let mut steady = Vec::with_capacity(rec.signals.len());
    for s in &rec.signals {
        let tail = &s[from..];
        let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !(hi - lo <= opts.settle_tol) {
            return Outcome::MaxTimeReached;
        }
        steady.push(*s.last().expect("nonempty"));
    }
    Outcome::Converged { steady }
}
