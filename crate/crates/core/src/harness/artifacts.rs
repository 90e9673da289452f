use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dae::{LineModel, ScenarioSpec};
use crate::error::{Error, Result};
use crate::loadmodels::Family;
use crate::smallsignal::EigenReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenRow {
    pub scenario_id: String,
    pub family: Family,
    pub x: f64,
    pub line_model: LineModel,
    pub load_scale: f64,
    pub re: f64,
    pub im: f64,
    pub freq_hz: f64,
    pub damping_ratio: f64,
    pub is_reference_mode: bool,
}

pub fn eigen_rows(scenario: &ScenarioSpec, rep: &EigenReport) -> Vec<EigenRow> {
    let id = scenario.id();
    (0..rep.eigenvalues.len())
        .map(|k| EigenRow {
            scenario_id: id.clone(),
            family: scenario.family,
            x: scenario.x,
            line_model: scenario.line_model,
            load_scale: scenario.load_scale,
            re: rep.eigenvalues[k].re,
            im: rep.eigenvalues[k].im,
            freq_hz: rep.freq_hz[k],
            damping_ratio: rep.damping_ratio[k],
            is_reference_mode: rep.is_reference_mode[k],
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

pub fn write_eigen_csv<W: Write>(out: W, rows: &[EigenRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "scenario_id",
            "family",
            "x",
            "line_model",
            "load_scale",
            "re",
            "im",
            "freq_hz",
            "damping_ratio",
            "is_reference_mode",
        ])
        .map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_eigen_csv<R: Read>(input: R) -> Result<Vec<EigenRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<Vec<EigenRow>, _>>()
        .map_err(csv_err)
}

/// One recorded signal of one run, ready for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSeries {
    pub label: String,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub diverged: bool,
}

/// Pull column `signal` out of a trace CSV.
pub fn read_trace_csv<R: Read>(input: R, signal: &str) -> Result<TraceSeries> {
    let mut rd = csv::Reader::from_reader(input);
    let col = rd
        .headers()
        .map_err(csv_err)?
        .iter()
        .position(|h| h == signal)
        .ok_or_else(|| Error::Parse(format!("trace has no column '{signal}'")))?;
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let row = t.len() + 1;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad number in trace row {row}")))
        };
        let (tv, yv) = (num(0)?, num(col)?);
        t.push(tv);
        y.push(yv);
    }
    Ok(TraceSeries {
        label: signal.to_string(),
        t,
        y,
        diverged: false,
    })
}

/// Write through a temporary sibling and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
