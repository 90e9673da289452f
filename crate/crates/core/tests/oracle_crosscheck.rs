use num_complex::Complex64;

use zipe_core::dae::{assemble, GenSetpoint, LineModel, ScenarioSpec};
use zipe_core::devices::{gfl_source_derivatives, initialize_gfl};
use zipe_core::loadmodels::{eload_power, EloadState, Family, NET_PER_DQ_CURRENT};
use zipe_core::netdata::{BranchSet, DeviceParams, NetworkCase};
use zipe_core::powerflow::{scale_loading, solve_power_flow_with, PowerFlowOptions};
use zipe_core::transient::{simulate, Outcome, SimOptions};
use zipe_oracle::{
    droop_steady_state, gs_power_flow, single_gfl_step_response, DroopSettings, GenSetting, GflOracleParams, LoadSetting,
    OracleCase,
};

const CASE: &str = include_str!("../data/case9.json");

fn oracle_case() -> OracleCase {
    OracleCase::from_json(CASE).unwrap()
}

#[test]
fn newton_matches_gauss_seidel_across_loading_and_outages() {
    let case = NetworkCase::case9();
    for ls in [0.2, 0.5, 1.0, 1.2] {
        for out in [None, Some("4-5"), Some("6-9")] {
            let scaled = scale_loading(&case, ls);
            let in_service = out.map(|b| {
                let k = case.branches.iter().position(|br| br.id == b).unwrap();
                BranchSet::all(&case).without(k)
            });
            let newton = solve_power_flow_with(
                &scaled,
                &PowerFlowOptions {
                    tol: 1e-10,
                    in_service,
                    ..PowerFlowOptions::default()
                },
            )
            .unwrap();
            let skip: Vec<&str> = out.into_iter().collect();
            let gs = gs_power_flow(&oracle_case().scaled(ls), &skip, 1e-10, 50_000).unwrap();
            for (k, v) in newton.voltages().iter().enumerate() {
                assert!(
                    (v - gs.value.v[k]).norm() < 1e-6,
                    "ls {ls} out {out:?} bus {}: {v} vs {}",
                    k + 1,
                    gs.value.v[k]
                );
            }
        }
    }
}

fn oracle_gfl(case: &NetworkCase) -> (GflOracleParams, zipe_core::devices::converter::ConverterParams) {
    let c = match &case.generators[2].params {
        DeviceParams::Gfl(p) => p.converter(case.base_mva, case.omega_base()),
        _ => unreachable!(),
    };
    let o = GflOracleParams {
        omega_b: c.omega_b,
        lf: c.lf,
        rf: c.rf,
        cf: c.cf,
        lg: c.lg,
        rg: c.rg,
        kp_pll: c.kp_pll,
        ki_pll: c.ki_pll,
        kp_p: c.kp_p,
        ki_p: c.ki_p,
        kp_q: c.kp_q,
        ki_q: c.ki_q,
        kp_c: c.kp_c,
        ki_c: c.ki_c,
        current_scale: NET_PER_DQ_CURRENT,
    };
    (o, c)
}

#[test]
fn gfl_step_response_matches_independent_model() {
    let case = NetworkCase::case9();
    let (o, c) = oracle_gfl(&case);
    let v = Complex64::from_polar(1.02, 0.1);
    let (p0, q0, dp, dq) = (0.5, 0.05, 0.05, -0.02);
    let dt = 2e-5;
    let t_end = 0.5;
    let reference = single_gfl_step_response(&o, v, p0, q0, dp, dq, t_end, dt).value;
    assert!(!reference.diverged);

    let mut s = initialize_gfl(&c, v, p0, q0).unwrap();
    let f = |s: &EloadState| gfl_source_derivatives(s, v, &c, p0 + dp, q0 + dq, 1.0).to_array();
    let axpy = |s: &EloadState, k: &[f64], a: f64| {
        let mut z = s.to_array();
        for (z, k) in z.iter_mut().zip(k) {
            *z += a * k;
        }
        EloadState::from_slice(&z)
    };
    let mut worst = 0.0f64;
    for n in 1..reference.t.len() {
        let k1 = f(&s);
        let k2 = f(&axpy(&s, &k1, dt / 2.0));
        let k3 = f(&axpy(&s, &k2, dt / 2.0));
        let k4 = f(&axpy(&s, &k3, dt));
        let k: Vec<f64> = (0..k1.len()).map(|i| (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0).collect();
        s = axpy(&s, &k, dt);
        let (p, q) = eload_power(v.re, v.im, s.i_g_d, s.i_g_q);
        worst = worst.max((p - reference.p[n]).abs()).max((q - reference.q[n]).abs());
    }
    assert!(worst < 1e-9, "largest power mismatch {worst:.3e}");
    let p_end = *reference.p.last().unwrap();
    assert!((p_end - (p0 + dp)).abs() < 1e-3, "{p_end}");
}

fn droop_settings(sys: &zipe_core::SystemModel, eq: &zipe_core::EquilibriumPoint, out: &[&str]) -> DroopSettings {
    DroopSettings {
        generators: eq
            .setpoints
            .generators
            .iter()
            .map(|g| match g {
                GenSetpoint::Sm(s) => GenSetting::Sm {
                    p_ref: s.p_ref,
                    v_ref: s.v_ref,
                },
                GenSetpoint::Vsm(s) => GenSetting::Vsm {
                    p_ref: s.p_ref,
                    q_ref: s.q_ref,
                    v_ref: s.v_ref,
                },
                GenSetpoint::Gfl { p_ref, q_ref } => GenSetting::Gfl {
                    p_ref: *p_ref,
                    q_ref: *q_ref,
                },
            })
            .collect(),
        loads: eq
            .setpoints
            .loads
            .iter()
            .map(|l| LoadSetting {
                z: l.zip_z,
                i: l.zip_i,
                p: l.zip_p,
                v0: l.v0,
                e: l.e_ref,
            })
            .collect(),
        out_of_service: out.iter().map(|s| s.to_string()).collect(),
        dynamic_network: sys.scenario.line_model == LineModel::Dynpi,
    }
}

#[test]
fn equilibrium_is_the_droop_steady_state_of_the_intact_grid() {
    let case = NetworkCase::case9();
    for (fam, x, line, ls) in [
        (Family::ZiE, 0.1, LineModel::Dynpi, 0.25),
        (Family::Zip, 0.7, LineModel::Statpi, 0.8),
        (Family::ZiE, 1.0, LineModel::Statpi, 0.5),
    ] {
        let sys = assemble(&case, &ScenarioSpec::new(fam, x, line, ls)).unwrap();
        let eq = sys.equilibrium().unwrap();
        let oc = oracle_case().scaled(ls);
        let sol = droop_steady_state(&oc, &droop_settings(&sys, &eq, &[]), &eq.pf.voltages()).unwrap().value;
        assert!(sol.d_omega.abs() < 1e-9, "{}", sol.d_omega);
        for (k, v) in eq.pf.voltages().iter().enumerate() {
            assert!((v - sol.v[k]).norm() < 1e-8, "bus {}: {v} vs {}", k + 1, sol.v[k]);
        }
    }
}

#[test]
fn post_trip_steady_state_matches_reduced_network_solution() {
    let case = NetworkCase::case9();
    let sc = ScenarioSpec::new(Family::ZiE, 0.1, LineModel::Dynpi, 0.25).with_event("4-5", 0.1);
    let sys = assemble(&case, &sc).unwrap();
    let eq = sys.equilibrium().unwrap();
    let opts = SimOptions {
        horizon: 12.0,
        sample_rate: 1e3,
        ..SimOptions::default()
    };
    let res = simulate(&sys, &eq, sc.event.as_ref(), &opts).unwrap();
    assert!(matches!(res.outcome, Outcome::Converged { .. }), "{:?}", res.outcome);

    let post = sys.apply_branch_trip("4-5").unwrap();
    let obs = post.observe(&eq.setpoints, &res.final_x, &res.final_y).unwrap();
    let oc = oracle_case().scaled(0.25);
    let sol = droop_steady_state(&oc, &droop_settings(&sys, &eq, &["4-5"]), &eq.pf.voltages())
        .unwrap()
        .value;

    for (k, v) in obs.bus_voltage.iter().enumerate() {
        assert!((v.norm() - sol.v[k].norm()).abs() < 1e-4, "bus {}: {} vs {}", k + 1, v.norm(), sol.v[k].norm());
    }
    for (k, w) in obs.gen_speed.iter().enumerate() {
        if let Some(w) = w {
            assert!((w - 1.0 - sol.d_omega).abs() < 1e-4, "gen {k}: {w} vs {}", 1.0 + sol.d_omega);
        }
    }
    let gfl = res.steady_value("bus3_inverter_current_mag").unwrap();
    assert!((gfl - sol.gen_current[2].norm()).abs() < 1e-4, "{gfl} vs {}", sol.gen_current[2].norm());
}
