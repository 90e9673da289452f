//! π-line representations: the dynamic series RL branch with bus-owned shunt
//! capacitors (dynpi) and the algebraic nodal solve (statpi).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Series current derivative of a dynpi branch, current positive from the
/// `from` end.
pub fn dynpi_derivatives(i_s: Complex64, v_from: Complex64, v_to: Complex64, r: f64, x: f64, omega_b: f64, w_sys: f64) -> Complex64 {
    omega_b / x * (v_from - v_to - Complex64::new(r, w_sys * x) * i_s)
}

/// Bus capacitor voltage derivative for net injected current `i_net`. A
/// fictitious capacitor omits its own `jωCv` current so the steady state is
/// unchanged by its presence.
pub fn bus_capacitor_derivative(c: f64, i_net: Complex64, v: Complex64, omega_b: f64, w_sys: f64, fictitious: bool) -> Complex64 {
    let shunt = if fictitious { Complex64::new(0.0, 0.0) } else { J * w_sys * c * v };
    omega_b / c * (i_net - shunt)
}

#[derive(Debug, Clone, Copy)]
pub struct NetworkSolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub condition_limit: f64,
}

impl Default for NetworkSolveOptions {
    fn default() -> Self {
        NetworkSolveOptions {
            tol: 1e-11,
            max_iter: 30,
            condition_limit: 1e12,
        }
    }
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Newton solve of `g(y) = 0` with a forward-difference Jacobian. Returns the
/// solution and the condition number of the last Jacobian.
pub fn solve_algebraic<G>(g: G, y0: &[f64], opts: &NetworkSolveOptions) -> Result<(Vec<f64>, f64)>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    for _ in 0..=opts.max_iter {
        let r = g(&y)?;
        let norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !norm.is_finite() {
            return Err(Error::NetworkSolve("nonfinite mismatch".into()));
        }
        let mut jac = DMatrix::zeros(n, n);
        for c in 0..n {
            let h = 1e-7 * y[c].abs().max(1.0);
            let mut yp = y.clone();
            yp[c] += h;
            let rp = g(&yp)?;
            for k in 0..n {
                jac[(k, c)] = (rp[k] - r[k]) / h;
            }
        }
        let cond = condition_number(&jac);
        if cond > opts.condition_limit {
            return Err(Error::AlgebraicSingularity { condition: cond });
        }
        if norm < opts.tol {
            return Ok((y, cond));
        }
        let dy = jac
            .lu()
            .solve(&DVector::from_vec(r))
            .ok_or(Error::AlgebraicSingularity { condition: f64::INFINITY })?;
        for k in 0..n {
            y[k] -= dy[k];
        }
    }
    Err(Error::NetworkSolve(format!("no convergence in {} iterations", opts.max_iter)))
}

/// Bus voltages satisfying `injection(k, v_k) = (Y v)_k` at every bus, where
/// `injection` is the net current injected by devices and loads at bus `k`.
pub fn statpi_network_solve<F>(
    ybus: &DMatrix<Complex64>,
    injection: F,
    v_guess: &[Complex64],
    opts: &NetworkSolveOptions,
) -> Result<Vec<Complex64>>
where
    F: Fn(usize, Complex64) -> Result<Complex64>,
{
    let n = ybus.nrows();
    let g = |y: &[f64]| -> Result<Vec<f64>> {
        let v: Vec<Complex64> = (0..n).map(|k| Complex64::new(y[2 * k], y[2 * k + 1])).collect();
        let mut out = vec![0.0; 2 * n];
        for k in 0..n {
            let mut i = injection(k, v[k])?;
            for c in 0..n {
                i -= ybus[(k, c)] * v[c];
            }
            out[2 * k] = i.re;
            out[2 * k + 1] = i.im;
        }
        Ok(out)
    };
    let y0: Vec<f64> = v_guess.iter().flat_map(|v| [v.re, v.im]).collect();
    let (y, _) = solve_algebraic(g, &y0, opts)?;
    Ok((0..n).map(|k| Complex64::new(y[2 * k], y[2 * k + 1])).collect())
}
