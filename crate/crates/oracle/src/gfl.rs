//! A lone grid-following source on an infinite bus, integrated with classic
//! fourth-order Runge–Kutta.

use num_complex::Complex64;

use crate::OracleResult;

/// Converter parameters on the system base. Controller currents are counted
/// in units of `1/current_scale` network per unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GflOracleParams {
    pub omega_b: f64,
    pub lf: f64,
    pub rf: f64,
    pub cf: f64,
    pub lg: f64,
    pub rg: f64,
    pub kp_pll: f64,
    pub ki_pll: f64,
    pub kp_p: f64,
    pub ki_p: f64,
    pub kp_q: f64,
    pub ki_q: f64,
    pub kp_c: f64,
    pub ki_c: f64,
    pub current_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Grid-side current magnitude, network per unit.
    pub i_mag: Vec<f64>,
    pub diverged: bool,
}

const N: usize = 12;

// icv_d icv_q vcf_d vcf_q ig_d ig_q eps theta xp xq sd sq
fn rhs(z: &[f64; N], vg: Complex64, prm: &GflOracleParams, p_ref: f64, q_ref: f64) -> [f64; N] {
    let [icv_d, icv_q, vcf_d, vcf_q, ig_d, ig_q, eps, th, xp, xq, sd, sq] = *z;
    let (wb, k) = (prm.omega_b, prm.current_scale);
    let (c, s) = (th.cos(), th.sin());

    let vq_pll = -vcf_d * s + vcf_q * c;
    let p = vg.re * ig_d + vg.im * ig_q;
    let q = vg.im * ig_d - vg.re * ig_q;
    let (ep, eq) = (p_ref - p, q_ref - q);
    let iref_d = prm.kp_p * ep + prm.ki_p * xp;
    let iref_q = -(prm.kp_q * eq + prm.ki_q * xq);
    let ic_d = (icv_d * c + icv_q * s) / k;
    let ic_q = (-icv_d * s + icv_q * c) / k;
    let (e_d, e_q) = (iref_d - ic_d, iref_q - ic_q);
    let (u_d, u_q) = (prm.kp_c * e_d + prm.ki_c * sd, prm.kp_c * e_q + prm.ki_c * sq);
    let (un_d, un_q) = (k * (u_d * c - u_q * s), k * (u_d * s + u_q * c));
    let vcv_d = vcf_d - prm.lf * icv_q + un_d;
    let vcv_q = vcf_q + prm.lf * icv_d + un_q;

    [
        wb / prm.lf * (vcv_d - vcf_d - prm.rf * icv_d + prm.lf * icv_q),
        wb / prm.lf * (vcv_q - vcf_q - prm.rf * icv_q - prm.lf * icv_d),
        wb / prm.cf * (icv_d - ig_d + prm.cf * vcf_q),
        wb / prm.cf * (icv_q - ig_q - prm.cf * vcf_d),
        wb / prm.lg * (vcf_d - vg.re - prm.rg * ig_d + prm.lg * ig_q),
        wb / prm.lg * (vcf_q - vg.im - prm.rg * ig_q - prm.lg * ig_d),
        vq_pll,
        wb * (prm.kp_pll * vq_pll + prm.ki_pll * eps),
        ep,
        eq,
        e_d,
        e_q,
    ]
}

fn equilibrium(vg: Complex64, prm: &GflOracleParams, p: f64, q: f64) -> [f64; N] {
    let j = Complex64::new(0.0, 1.0);
    let ig = (Complex64::new(p, q) / vg).conj();
    let vcf = vg + Complex64::new(prm.rg, prm.lg) * ig;
    let icv = ig + j * prm.cf * vcf;
    let th = vcf.arg();
    let ic = icv * Complex64::from_polar(1.0, -th) / prm.current_scale;
    [
        icv.re,
        icv.im,
        vcf.re,
        vcf.im,
        ig.re,
        ig.im,
        0.0,
        th,
        ic.re / prm.ki_p,
        -ic.im / prm.ki_q,
        prm.rf * ic.re / prm.ki_c,
        prm.rf * ic.im / prm.ki_c,
    ]
}

/// Start at the equilibrium delivering `p0 + j q0` into `v_grid`, step the
/// references by `(dp, dq)` at `t = 0` and integrate to `t_end` with step
/// `dt`. Divergence is declared once any state exceeds 1e3 in magnitude.
#[allow(clippy::too_many_arguments)]
pub fn single_gfl_step_response(
    prm: &GflOracleParams,
    v_grid: Complex64,
    p0: f64,
    q0: f64,
    dp: f64,
    dq: f64,
    t_end: f64,
    dt: f64,
) -> OracleResult<StepTrace> {
    let (p_ref, q_ref) = (p0 + dp, q0 + dq);
    let mut z = equilibrium(v_grid, prm, p0, q0);
    let steps = (t_end / dt).round() as usize;
    let mut tr = StepTrace {
        t: Vec::with_capacity(steps + 1),
        p: Vec::with_capacity(steps + 1),
        q: Vec::with_capacity(steps + 1),
        i_mag: Vec::with_capacity(steps + 1),
        diverged: false,
    };
    let record = |tr: &mut StepTrace, t: f64, z: &[f64; N]| {
        tr.t.push(t);
        tr.p.push(v_grid.re * z[4] + v_grid.im * z[5]);
        tr.q.push(v_grid.im * z[4] - v_grid.re * z[5]);
        tr.i_mag.push(z[4].hypot(z[5]));
    };
    record(&mut tr, 0.0, &z);
    let axpy = |z: &[f64; N], k: &[f64; N], a: f64| -> [f64; N] { std::array::from_fn(|i| z[i] + a * k[i]) };
    for n in 1..=steps {
        let k1 = rhs(&z, v_grid, prm, p_ref, q_ref);
        let k2 = rhs(&axpy(&z, &k1, dt / 2.0), v_grid, prm, p_ref, q_ref);
        let k3 = rhs(&axpy(&z, &k2, dt / 2.0), v_grid, prm, p_ref, q_ref);
        let k4 = rhs(&axpy(&z, &k3, dt), v_grid, prm, p_ref, q_ref);
        for i in 0..N {
            z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if z.iter().any(|v| !v.is_finite() || v.abs() > 1e3) {
            tr.diverged = true;
            break;
        }
        record(&mut tr, n as f64 * dt, &z);
    }
    OracleResult {
        value: tr,
        method: "RK4, fixed step",
        tolerance: 1e-6,
    }
}
