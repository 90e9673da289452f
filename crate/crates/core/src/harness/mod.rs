//! Sweep orchestration over the scenario matrix, per-scenario artifacts and
//! figure emission.

mod artifacts;
mod svg;

pub use artifacts::{eigen_rows, read_eigen_csv, read_trace_csv, write_atomic, write_eigen_csv, EigenRow, TraceSeries};
pub use svg::{emit_eigen_map, emit_traces, PlotStyle};

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dae::{assemble, LineModel, ScenarioSpec};
use crate::error::{Error, Result};
use crate::loadmodels::Family;
use crate::netdata::NetworkCase;
use crate::par::{self, Execution};
use crate::powerflow::heaviest_loaded_branch;
use crate::smallsignal;
use crate::transient::{self, Outcome, SimOptions, PRIMARY_SIGNAL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    SmallSignal,
    Transient,
}

/// Which branch a transient run trips.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripChoice {
    /// The heaviest loaded line of the scenario's own power flow.
    Auto,
    Branch(String),
}

impl std::str::FromStr for TripChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(TripChoice::Auto);
        }
        match s.split_once('-') {
            Some((a, b)) if a.parse::<usize>().is_ok() && b.parse::<usize>().is_ok() => Ok(TripChoice::Branch(s.to_string())),
            _ => Err(Error::Config(format!("trip '{s}' is neither 'auto' nor '<from>-<to>'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub families: Vec<Family>,
    pub xs: Vec<f64>,
    pub line_models: Vec<LineModel>,
    pub load_scales: Vec<f64>,
    pub analyses: Vec<Analysis>,
    pub output_dir: PathBuf,
    /// Worker threads; 0 lets the pool decide.
    pub parallelism: usize,
    pub trip: TripChoice,
    pub t_trip: f64,
    pub horizon: f64,
    pub rtol: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            families: vec![Family::Zip, Family::ZiE],
            xs: (0..=10).map(|k| k as f64 / 10.0).collect(),
            line_models: vec![LineModel::Statpi, LineModel::Dynpi],
            load_scales: vec![0.2, 0.5, 0.8],
            analyses: vec![Analysis::SmallSignal],
            output_dir: PathBuf::from("out"),
            parallelism: 0,
            trip: TripChoice::Auto,
            t_trip: 0.1,
            horizon: 5.0,
            rtol: 1e-6,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(Error::Config(format!("sweep needs at least one {what}")));
        if self.families.is_empty() {
            return empty("family");
        }
        if self.xs.is_empty() {
            return empty("x value");
        }
        if self.line_models.is_empty() {
            return empty("line model");
        }
        if self.load_scales.is_empty() {
            return empty("load scale");
        }
        if self.analyses.is_empty() {
            return empty("analysis");
        }
        for s in self.scenarios() {
            s.validate()?;
        }
        if self.analyses.contains(&Analysis::Transient) {
            self.sim_options().validate()?;
            if !(self.t_trip >= 0.0 && self.t_trip < self.horizon) {
                return Err(Error::Config(format!("t_trip {} must lie in [0, horizon {})", self.t_trip, self.horizon)));
            }
        }
        Ok(())
    }

    /// [`SweepSpec::validate`] plus checks that need the case.
    pub fn validate_for(&self, case: &NetworkCase) -> Result<()> {
        self.validate()?;
        if let TripChoice::Branch(b) = &self.trip {
            if self.analyses.contains(&Analysis::Transient) && !case.branches.iter().any(|br| &br.id == b) {
                return Err(Error::Config(format!("trip branch '{b}' is not in the case")));
            }
        }
        Ok(())
    }

    /// The cartesian grid, ordered family, x, line model, load scale.
    pub fn scenarios(&self) -> Vec<ScenarioSpec> {
        let mut out = Vec::new();
        for &f in &self.families {
            for &x in &self.xs {
                for &l in &self.line_models {
                    for &ls in &self.load_scales {
                        out.push(ScenarioSpec::new(f, x, l, ls));
                    }
                }
            }
        }
        out
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            horizon: self.horizon,
            rtol: self.rtol,
            ..SimOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EntryStatus {
    Succeeded,
    Failed { category: String, stage: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EntrySummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_real_part: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_y_condition: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tripped_branch: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scenario_id: String,
    pub scenario: ScenarioSpec,
    #[serde(flatten)]
    pub status: EntryStatus,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub summary: EntrySummary,
    pub wall_time_s: f64,
}

impl ManifestEntry {
    pub fn succeeded(&self) -> bool {
        self.status == EntryStatus::Succeeded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SweepSpec,
    pub entries: Vec<ManifestEntry>,
    pub figures: Vec<String>,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| !e.succeeded()).count()
    }

    pub fn load(dir: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(dir.join("manifest.json"))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("manifest: {e}")))
    }
}

fn fail(stage: &str, e: &Error) -> EntryStatus {
    EntryStatus::Failed {
        category: e.category().into(),
        stage: stage.into(),
        message: e.to_string(),
    }
}

/// Run one scenario and write its artifacts under `out`. Errors never
/// escape: they become a `Failed` entry.
pub fn run_scenario(case: &NetworkCase, scenario: &ScenarioSpec, spec: &SweepSpec, out: &Path, exec: Execution) -> ManifestEntry {
    let start = Instant::now();
    let id = scenario.id();
    let mut entry = ManifestEntry {
        scenario_id: id.clone(),
        scenario: scenario.clone(),
        status: EntryStatus::Succeeded,
        artifacts: Vec::new(),
        summary: EntrySummary::default(),
        wall_time_s: 0.0,
    };
    let setup = assemble(case, scenario).and_then(|sys| sys.equilibrium().map(|eq| (sys, eq)));
    let (sys, eq) = match setup {
        Ok(v) => v,
        Err(e) => {
            entry.status = fail("equilibrium", &e);
            entry.wall_time_s = start.elapsed().as_secs_f64();
            return entry;
        }
    };

    if spec.analyses.contains(&Analysis::SmallSignal) {
        let res = smallsignal::analyze_with(&sys, &eq, exec).and_then(|(rep, _)| {
            let name = format!("{id}_eig.csv");
            let mut buf = Vec::new();
            write_eigen_csv(&mut buf, &eigen_rows(scenario, &rep))?;
            write_atomic(&out.join(&name), &buf)?;
            Ok((rep, name))
        });
        match res {
            Ok((rep, name)) => {
                entry.summary.max_real_part = Some(rep.max_real_part);
                entry.summary.stable = Some(rep.stable);
                entry.summary.g_y_condition = rep.g_y_condition;
                entry.artifacts.push(name);
            }
            Err(e) => entry.status = fail("smallsignal", &e),
        }
    }

    if spec.analyses.contains(&Analysis::Transient) && entry.succeeded() {
        let branch = match &spec.trip {
            TripChoice::Branch(b) => Some(b.clone()),
            TripChoice::Auto => heaviest_loaded_branch(&sys.case, &eq.pf).map(|k| sys.case.branches[k].id.clone()),
        };
        let res = match branch {
            None => Err(Error::Config("no branch in service to trip".into())),
            Some(b) => {
                let sc = scenario.clone().with_event(&b, spec.t_trip);
                transient::simulate(&sys, &eq, sc.event.as_ref(), &spec.sim_options()).and_then(|r| {
                    let csv = format!("{id}_trace.csv");
                    let meta = format!("{id}_trace.json");
                    write_atomic(&out.join(&csv), r.to_csv().as_bytes())?;
                    write_atomic(&out.join(&meta), r.metadata_json().as_bytes())?;
                    Ok((r, b, csv, meta))
                })
            }
        };
        match res {
            Ok((r, b, csv, meta)) => {
                entry.summary.tripped_branch = Some(b);
                entry.summary.outcome = Some(r.outcome.label().into());
                if matches!(r.outcome, Outcome::Converged { .. }) {
                    entry.summary.steady_value = r.steady_value(PRIMARY_SIGNAL).ok();
                }
                entry.artifacts.push(csv);
                entry.artifacts.push(meta);
            }
            Err(e) => entry.status = fail("transient", &e),
        }
    }
    entry.wall_time_s = start.elapsed().as_secs_f64();
    entry
}

/// Run the whole grid, write per-scenario artifacts, figures and
/// `manifest.json` into `spec.output_dir`.
pub fn run_sweep(spec: &SweepSpec, case: &NetworkCase) -> Result<Manifest> {
    run_sweep_with(spec, case, Execution::Parallel)
}

pub fn run_sweep_with(spec: &SweepSpec, case: &NetworkCase, exec: Execution) -> Result<Manifest> {
    spec.validate_for(case)?;
    let out = &spec.output_dir;
    std::fs::create_dir_all(out)?;
    let probe = out.join(".write_probe");
    std::fs::write(&probe, b"")?;
    std::fs::remove_file(&probe)?;

    let start = Instant::now();
    let scenarios = spec.scenarios();
    // Scenarios run concurrently; inside each one the work stays sequential.
    let entries = par::with_jobs(spec.parallelism, || {
        par::map(exec, &scenarios, |s| run_scenario(case, s, spec, out, Execution::Sequential))
    });
    let figures = emit_figures(out, &entries)?;
    let manifest = Manifest {
        spec: spec.clone(),
        entries,
        figures,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
    write_atomic(&out.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

/// One eigenvalue map per (line model, load scale) and one trace overlay per
/// (x, line model, load scale), built from the CSV artifacts on disk.
pub fn emit_figures(out: &Path, entries: &[ManifestEntry]) -> Result<Vec<String>> {
    use std::collections::BTreeMap;
    let mut eig_groups: BTreeMap<String, Vec<EigenRow>> = BTreeMap::new();
    let mut trace_groups: BTreeMap<String, Vec<TraceSeries>> = BTreeMap::new();
    for e in entries.iter().filter(|e| e.succeeded()) {
        let s = &e.scenario;
        for a in &e.artifacts {
            if a.ends_with("_eig.csv") {
                let key = format!("eigen_map_{}_ls{:.3}", s.line_model, s.load_scale);
                let rows = read_eigen_csv(std::fs::File::open(out.join(a))?)?;
                eig_groups.entry(key).or_default().extend(rows);
            } else if a.ends_with("_trace.csv") {
                let key = format!("traces_x{:.2}_{}_ls{:.3}", s.x, s.line_model, s.load_scale);
                let mut tr = read_trace_csv(std::fs::File::open(out.join(a))?, PRIMARY_SIGNAL)?;
                tr.label = s.family.label().to_string();
                tr.diverged = e.summary.outcome.as_deref() == Some("diverged");
                trace_groups.entry(key).or_default().push(tr);
            }
        }
    }
    let mut figures = Vec::new();
    for (key, rows) in eig_groups {
        let style = PlotStyle {
            title: key.replace('_', " "),
            ..PlotStyle::default()
        };
        let name = format!("{key}.svg");
        write_atomic(&out.join(&name), emit_eigen_map(&rows, &style)?.as_bytes())?;
        figures.push(name);
    }
    for (key, series) in trace_groups {
        let style = PlotStyle {
            title: format!("{PRIMARY_SIGNAL} {}", key.trim_start_matches("traces_").replace('_', " ")),
            ..PlotStyle::default()
        };
        let name = format!("{key}.svg");
        write_atomic(&out.join(&name), emit_traces(&series, &style)?.as_bytes())?;
        figures.push(name);
    }
    Ok(figures)
}
