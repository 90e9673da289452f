use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use zipe_core::dae::{assemble, LineModel, ScenarioSpec};
use zipe_core::harness::{run_sweep_with, SweepSpec};
use zipe_core::loadmodels::Family;
use zipe_core::netdata::NetworkCase;
use zipe_core::par::Execution;
use zipe_core::smallsignal::{jacobian_with, DEFAULT_STEP};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn sweep(c: &mut Criterion) {
    let case = NetworkCase::case9();
    let dir = tempfile::tempdir().unwrap();
    let spec = SweepSpec {
        line_models: vec![LineModel::Statpi, LineModel::Dynpi],
        output_dir: dir.path().to_path_buf(),
        ..SweepSpec::default()
    };
    let mut g = c.benchmark_group("small_signal_sweep");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_sweep_with(&spec, &case, exec).unwrap())
        });
    }
    g.finish();
}

fn jacobian(c: &mut Criterion) {
    let case = NetworkCase::case9();
    let mut g = c.benchmark_group("jacobian");
    for line in [LineModel::Statpi, LineModel::Dynpi] {
        let sys = assemble(&case, &ScenarioSpec::new(Family::ZiE, 0.5, line, 0.5)).unwrap();
        let eq = sys.equilibrium().unwrap();
        for (name, exec) in MODES {
            g.bench_function(BenchmarkId::new(name, line), |b| {
                b.iter(|| jacobian_with(&sys, &eq, DEFAULT_STEP, exec).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, sweep, jacobian);
criterion_main!(benches);
