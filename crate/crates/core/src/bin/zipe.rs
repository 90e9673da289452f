use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zipe_core::dae::{LineModel, ScenarioSpec};
use zipe_core::harness::{self, Analysis, Manifest, ManifestEntry, SweepSpec, TripChoice};
use zipe_core::loadmodels::Family;
use zipe_core::netdata::{load_case, NetworkCase};
use zipe_core::par::Execution;
use zipe_core::Error;

#[derive(Parser)]
#[command(name = "zipe", version, about = "ZIP / ZIP-E load studies on the 9-bus grid")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Branch-trip transient for one scenario.
    Sim(SimArgs),
    /// Small-signal analysis for one scenario.
    Eig(ScenarioArgs),
    /// Run a scenario matrix.
    Sweep(SweepArgs),
    /// Re-emit figures from the CSV artifacts of a finished sweep.
    Plot {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Case JSON; the bundled 9-bus case when omitted.
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ScenarioArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "zie")]
    family: Family,
    #[arg(long, default_value_t = 0.5)]
    x: f64,
    #[arg(long, default_value = "dynpi")]
    line: LineModel,
    #[arg(long = "load-scale", default_value_t = 1.0)]
    load_scale: f64,
}

#[derive(Args)]
struct TransientArgs {
    /// `<from>-<to>` or `auto` for the heaviest loaded line.
    #[arg(long, default_value = "auto")]
    trip: TripChoice,
    #[arg(long = "t-trip", default_value_t = 0.1)]
    t_trip: f64,
    #[arg(long, default_value_t = 5.0)]
    horizon: f64,
    /// Relative integration tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    transient: TransientArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Sweep description as JSON; the flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    family: Vec<Family>,
    #[arg(long, value_delimiter = ',')]
    x: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    line: Vec<LineModel>,
    #[arg(long = "load-scale", value_delimiter = ',')]
    load_scale: Vec<f64>,
    /// Also run the branch-trip transient for every scenario.
    #[arg(long)]
    transient: bool,
    /// Skip the small-signal analysis.
    #[arg(long = "no-eig")]
    no_eig: bool,
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    tr: TransientArgs,
}

enum Failure {
    Config(String),
    Scenario(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Parse(_) | Error::Validation(_) | Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Scenario(other.to_string()),
        }
    }
}

fn read_case(path: &Option<PathBuf>) -> Result<NetworkCase, Failure> {
    match path {
        None => Ok(NetworkCase::case9()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            Ok(load_case(&text)?)
        }
    }
}

fn report(entry: &ManifestEntry) -> Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(entry).expect("entry serializes"));
    match &entry.status {
        harness::EntryStatus::Succeeded => Ok(()),
        harness::EntryStatus::Failed { category, message, .. } => Err(Failure::Scenario(format!("{category}: {message}"))),
    }
}

fn single(args: &ScenarioArgs, spec: SweepSpec) -> Result<(), Failure> {
    let case = read_case(&args.common.case)?;
    let scenario = ScenarioSpec::new(args.family, args.x, args.line, args.load_scale);
    scenario.validate()?;
    spec.validate_for(&case)?;
    std::fs::create_dir_all(&args.common.out).map_err(|e| Failure::Config(format!("{}: {e}", args.common.out.display())))?;
    let entry = harness::run_scenario(&case, &scenario, &spec, &args.common.out, Execution::Parallel);
    if entry.succeeded() {
        harness::emit_figures(&args.common.out, std::slice::from_ref(&entry))?;
    }
    report(&entry)
}

fn transient_fields(spec: &mut SweepSpec, tr: &TransientArgs) {
    spec.trip = tr.trip.clone();
    spec.t_trip = tr.t_trip;
    spec.horizon = tr.horizon;
    spec.rtol = tr.tol;
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let case = read_case(&args.common.case)?;
    let mut spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => SweepSpec::default(),
    };
    spec.output_dir = args.common.out.clone();
    if !args.family.is_empty() {
        spec.families = args.family.clone();
    }
    if !args.x.is_empty() {
        spec.xs = args.x.clone();
    }
    if !args.line.is_empty() {
        spec.line_models = args.line.clone();
    }
    if !args.load_scale.is_empty() {
        spec.load_scales = args.load_scale.clone();
    }
    if args.transient && !spec.analyses.contains(&Analysis::Transient) {
        spec.analyses.push(Analysis::Transient);
    }
    if args.no_eig {
        spec.analyses.retain(|a| *a != Analysis::SmallSignal);
    }
    if let Some(j) = args.jobs {
        spec.parallelism = j;
    }
    transient_fields(&mut spec, &args.tr);
    let manifest = harness::run_sweep(&spec, &case)?;
    let failed = manifest.failures();
    println!(
        "{} scenarios, {} failed, {:.2} s; manifest at {}",
        manifest.entries.len(),
        failed,
        manifest.wall_time_s,
        spec.output_dir.join("manifest.json").display()
    );
    for e in manifest.entries.iter().filter(|e| !e.succeeded()) {
        if let harness::EntryStatus::Failed { category, message, .. } = &e.status {
            eprintln!("{}: {category}: {message}", e.scenario_id);
        }
    }
    if failed > 0 {
        Err(Failure::Scenario(format!("{failed} scenario(s) failed")))
    } else {
        Ok(())
    }
}

fn plot(out: &Path) -> Result<(), Failure> {
    let manifest = Manifest::load(out)?;
    let figures = harness::emit_figures(out, &manifest.entries)?;
    for f in figures {
        println!("{}", out.join(f).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Sim(a) => {
            let mut spec = SweepSpec {
                analyses: vec![Analysis::Transient],
                ..SweepSpec::default()
            };
            transient_fields(&mut spec, &a.transient);
            single(&a.scenario, spec)
        }
        Cmd::Eig(a) => single(
            a,
            SweepSpec {
                analyses: vec![Analysis::SmallSignal],
                ..SweepSpec::default()
            },
        ),
        Cmd::Sweep(a) => sweep(a),
        Cmd::Plot { out } => plot(out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Scenario(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
