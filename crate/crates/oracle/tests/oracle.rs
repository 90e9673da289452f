use num_complex::Complex64;
use zipe_oracle::*;

const CASE: &str = include_str!("../../core/data/case9.json");

fn case() -> OracleCase {
    OracleCase::from_json(CASE).unwrap()
}

#[test]
fn gauss_seidel_reproduces_published_wscc_base_case() {
    // Classic dispatch: 1.63 pu at bus 2 and 0.85 pu at bus 3.
    let mut c = case();
    c.generators[1].p_set = 1.63;
    c.generators[2].p_set = 0.85;
    let sol = gs_power_flow(&c, &[], 1e-11, 20_000).unwrap().value;
    let published = [
        (4, 1.0258, -2.2168),
        (5, 0.9956, -3.9888),
        (6, 1.0127, -3.6874),
        (7, 1.0258, 3.7197),
        (8, 1.0159, 0.7275),
        (9, 1.0323, 1.9667),
    ];
    for (bus, vm, deg) in published {
        let v = sol.v[c.position(bus)];
        assert!((v.norm() - vm).abs() < 2e-4, "bus {bus}: {}", v.norm());
        assert!((v.arg().to_degrees() - deg).abs() < 1e-3, "bus {bus}: {}", v.arg().to_degrees());
    }
    let slack = sol.p_inj[c.position(1)];
    assert!((slack - 0.716).abs() < 1e-3, "{slack}");
}

#[test]
fn gauss_seidel_balances_power() {
    let c = case();
    let sol = gs_power_flow(&c, &[], 1e-11, 20_000).unwrap().value;
    let y = textbook_ybus(&c, &[]);
    let n = c.buses.len();
    let mut loss = 0.0;
    for br in &c.branches {
        let (i, k) = (c.position(br.from_bus), c.position(br.to_bus));
        let i_series = (sol.v[i] - sol.v[k]) / Complex64::new(br.r, br.x);
        loss += br.r * i_series.norm_sqr();
    }
    let total: f64 = sol.p_inj.iter().sum();
    assert!((total - loss).abs() < 1e-8, "{total} vs {loss}");
    for (b, bus) in c.buses.iter().enumerate() {
        if let Some(vs) = bus.v_set {
            assert!((sol.v[b].norm() - vs).abs() < 1e-12);
        }
    }
    assert_eq!(y.len(), n);
}

#[test]
fn tripped_branch_leaves_ybus_symmetric_and_smaller() {
    let c = case();
    let full = textbook_ybus(&c, &[]);
    let cut = textbook_ybus(&c, &["4-5"]);
    let (i, k) = (c.position(4), c.position(5));
    assert_eq!(cut[i][k], Complex64::new(0.0, 0.0));
    assert!(full[i][k].norm() > 0.0);
    for r in 0..cut.len() {
        for s in 0..cut.len() {
            assert_eq!(cut[r][s], cut[s][r]);
        }
    }
}

#[test]
fn line_resonance_of_4_5_near_a_kilohertz() {
    let c = case();
    let br = c.branches.iter().find(|b| b.id == "4-5").unwrap();
    let [m, _] = pi_line_resonance(br.r, br.x, br.b, c.omega_b());
    let f = m.im / (2.0 * std::f64::consts::PI);
    assert!((900.0..1100.0).contains(&f), "{f}");
    assert!(m.re < 0.0);
}

fn gfl() -> GflOracleParams {
    GflOracleParams {
        omega_b: 2.0 * std::f64::consts::PI * 60.0,
        lf: 0.08,
        rf: 0.003,
        cf: 0.074,
        lg: 0.1,
        rg: 0.01,
        kp_pll: 0.2,
        ki_pll: 5.0,
        kp_p: 0.1,
        ki_p: 30.0,
        kp_q: 0.1,
        ki_q: 30.0,
        kp_c: 0.05,
        ki_c: 1.19,
        current_scale: 0.5,
    }
}

#[test]
fn zero_step_stays_at_equilibrium() {
    let tr = single_gfl_step_response(&gfl(), Complex64::new(1.0, 0.0), 0.6, 0.1, 0.0, 0.0, 0.2, 2e-5).value;
    assert!(!tr.diverged);
    assert!(tr.p.iter().all(|p| (p - 0.6).abs() < 1e-9));
    assert!(tr.q.iter().all(|q| (q - 0.1).abs() < 1e-9));
}

#[test]
fn small_step_settles_on_new_setpoint() {
    let tr = single_gfl_step_response(&gfl(), Complex64::new(1.0, 0.0), 0.6, 0.0, 0.05, 0.0, 2.0, 2e-5).value;
    assert!(!tr.diverged);
    let p_end = *tr.p.last().unwrap();
    assert!((p_end - 0.65).abs() < 1e-4, "{p_end}");
    let peak = tr.p.iter().fold(0.0f64, |m, p| m.max(*p));
    assert!(peak < 0.65 + 0.05, "overshoot {peak}");
}

#[test]
fn destabilizing_pll_gain_is_flagged() {
    let mut p = gfl();
    p.kp_pll = -0.5;
    p.ki_pll = -20.0;
    let tr = single_gfl_step_response(&p, Complex64::new(1.0, 0.0), 0.6, 0.0, 0.01, 0.0, 5.0, 2e-5).value;
    assert!(tr.diverged);
}

#[test]
fn generation_shortfall_lowers_frequency_by_droop() {
    let c = case();
    let pf = gs_power_flow(&c, &[], 1e-11, 20_000).unwrap().value;
    let loads = c
        .loads
        .iter()
        .map(|l| LoadSetting {
            z: (0.0, 0.0),
            i: (0.0, 0.0),
            p: (l.p0, l.q0),
            v0: 1.0,
            e: None,
        })
        .collect::<Vec<_>>();
    let settings = |shortfall: f64| DroopSettings {
        generators: vec![
            GenSetting::Sm {
                p_ref: pf.p_inj[0] - shortfall,
                v_ref: 1.14,
            },
            GenSetting::Vsm {
                p_ref: 1.0,
                q_ref: 0.0,
                v_ref: 1.03,
            },
            GenSetting::Gfl { p_ref: 0.6, q_ref: 0.0 },
        ],
        loads: loads.clone(),
        out_of_service: vec![],
        dynamic_network: true,
    };
    let base = droop_steady_state(&c, &settings(0.0), &pf.v).unwrap().value;
    let short = droop_steady_state(&c, &settings(0.1), &pf.v).unwrap().value;
    let dw = short.d_omega - base.d_omega;
    // Machine droop 1/0.05 + damping 2, VSM damping 20 on a 200 MVA rating.
    let stiffness = 20.0 + 2.0 + 40.0;
    assert!(dw < 0.0);
    assert!((dw + 0.1 / stiffness).abs() < 0.1 * 0.1 / stiffness, "{dw}");
    let gfl_i = short.gen_current[2].norm();
    let v3 = short.v[c.position(3)].norm();
    assert!((gfl_i * v3 - 0.6).abs() < 1e-9);
}

fn two_bus(p: f64, q: f64, b: f64) -> OracleCase {
    OracleCase::from_json(&format!(
        r#"{{"base_mva": 100, "f_nom": 60,
            "buses": [{{"id": 1, "kind": "Reference", "v_set": 1.0}}, {{"id": 2, "kind": "PQ"}}],
            "branches": [{{"id": "1-2", "from_bus": 1, "to_bus": 2, "r": 0.02, "x": 0.1, "b": {b}}}],
            "generators": [], "loads": [{{"bus": 2, "p0": {p}, "q0": {q}}}]}}"#
    ))
    .unwrap()
}

#[test]
fn two_bus_divider() {
    let c = two_bus(0.5, 0.2, 0.0);
    let v2 = gs_power_flow(&c, &[], 1e-12, 10_000).unwrap().value.v[1];
    let z = Complex64::new(0.02, 0.1);
    let drop = z * (Complex64::new(0.5, 0.2) / v2).conj();
    assert!((Complex64::new(1.0, 0.0) - drop - v2).norm() < 1e-10);
    assert!(v2.norm() < 1.0 && v2.arg() < 0.0);
}

#[test]
fn flat_no_load_case() {
    let sol = gs_power_flow(&two_bus(0.0, 0.0, 0.0), &[], 1e-12, 100).unwrap().value;
    assert!(sol.v.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    assert!(sol.p_inj.iter().chain(&sol.q_inj).all(|s| s.abs() < 1e-12));
}
