//! CSV interchange. Every file starts with `# crosskit <version> seed=<n>`
//! followed by a header row.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dynamics::RabiTrace;
use crate::error::{Error, Result};
use crate::fitting::JeffCurve;
use crate::perturbation::MethodComparison;
use crate::pipeline::{DetuningSweep, MuCurve, SaturationCurve};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn comment_line(seed: u64) -> String {
    format!("# crosskit {VERSION} seed={seed}")
}

/// Writes `rows` under the provenance comment. An empty table still gets
/// its header row.
pub fn write_rows<T: Serialize + Default>(path: &Path, seed: u64, rows: &[T]) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "{}", comment_line(seed)).map_err(|e| Error::io(path, e))?;
    if rows.is_empty() {
        let mut probe = csv::Writer::from_writer(Vec::new());
        probe.serialize(T::default())?;
        let bytes = probe.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
        let header = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
        file.write_all(header).and_then(|_| file.write_all(b"\n")).map_err(|e| Error::io(path, e))?;
        return Ok(());
    }
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads rows after checking that every `required` column is present.
pub fn read_rows<T: DeserializeOwned>(path: &Path, required: &[&str]) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
    let headers = r.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Schema { path: path.display().to_string(), message: "no header row".into() });
    }
    for col in required {
        if !headers.iter().any(|h| h == *col) {
            return Err(Error::MissingColumn { path: path.display().to_string(), column: (*col).to_string() });
        }
    }
    r.deserialize()
        .map(|row| {
            row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::Schema { path: path.display().to_string(), message: format!("line {line}: {e}") }
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub delta_mhz: f64,
    pub amplitude: f64,
    pub control_state: u8,
    pub duration_ns: f64,
    pub p_excited: f64,
    #[serde(default)]
    pub p_leakage: Option<f64>,
    /// Simulation only; lets `fit` recover the rotation sense.
    #[serde(default)]
    pub target_y: Option<f64>,
}

pub const TRACE_COLUMNS: [&str; 5] = ["delta_mhz", "amplitude", "control_state", "duration_ns", "p_excited"];

fn ns(us: f64) -> f64 {
    (us * 1e9).round() / 1e6
}

pub fn write_traces(path: &Path, seed: u64, traces: &[(f64, &RabiTrace)]) -> Result<()> {
    let rows: Vec<TraceRow> = traces
        .iter()
        .flat_map(|&(delta, t)| {
            (0..t.len()).map(move |k| TraceRow {
                delta_mhz: delta,
                amplitude: t.amplitude,
                control_state: t.control_state,
                duration_ns: ns(t.durations_us[k]),
                p_excited: t.p_excited[k],
                p_leakage: Some(t.p_leakage[k]),
                target_y: t.target_y.as_ref().map(|y| y[k]),
            })
        })
        .collect();
    write_rows(path, seed, &rows)
}

/// Traces grouped by `(delta, amplitude, control_state)` in order of first
/// appearance, each sorted by duration.
pub fn read_traces(path: &Path) -> Result<Vec<(f64, RabiTrace)>> {
    let rows: Vec<TraceRow> = read_rows(path, &TRACE_COLUMNS)?;
    let mut index: HashMap<(u64, u64, u8), usize> = HashMap::new();
    let mut groups: Vec<(f64, Vec<TraceRow>)> = Vec::new();
    for row in rows {
        if row.control_state > 1 {
            return Err(Error::Schema { path: path.display().to_string(), message: format!("control_state {}", row.control_state) });
        }
        let key = (row.delta_mhz.to_bits(), row.amplitude.to_bits(), row.control_state);
        let i = *index.entry(key).or_insert_with(|| {
            groups.push((row.delta_mhz, Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push(row);
    }
    groups
        .into_iter()
        .map(|(delta, mut rows)| {
            rows.sort_by(|a, b| a.duration_ns.total_cmp(&b.duration_ns));
            let has_y = rows.iter().all(|r| r.target_y.is_some());
            let trace = RabiTrace {
                amplitude: rows[0].amplitude,
                control_state: rows[0].control_state,
                durations_us: rows.iter().map(|r| r.duration_ns * 1e-3).collect(),
                p_excited: rows.iter().map(|r| r.p_excited).collect(),
                p_leakage: rows.iter().map(|r| r.p_leakage.unwrap_or(0.0)).collect(),
                target_y: has_y.then(|| rows.iter().map(|r| r.target_y.unwrap()).collect()),
            };
            Ok((delta, trace))
        })
        .collect()
}

/// Control-ground and control-excited traces at one detuning.
pub type TracePairs = (f64, Vec<(RabiTrace, RabiTrace)>);

/// Pairs control-ground and control-excited traces per `(delta, amplitude)`,
/// grouped by detuning in order of appearance.
pub fn pair_traces(path: &Path, traces: Vec<(f64, RabiTrace)>) -> Result<Vec<TracePairs>> {
    let mut ground: Vec<(f64, RabiTrace)> = Vec::new();
    let mut excited: HashMap<(u64, u64), RabiTrace> = HashMap::new();
    for (d, t) in traces {
        if t.control_state == 0 {
            ground.push((d, t));
        } else {
            excited.insert((d.to_bits(), t.amplitude.to_bits()), t);
        }
    }
    let mut out: Vec<(f64, Vec<(RabiTrace, RabiTrace)>)> = Vec::new();
    for (d, g) in ground {
        let e = excited.remove(&(d.to_bits(), g.amplitude.to_bits())).ok_or_else(|| Error::Schema {
            path: path.display().to_string(),
            message: format!("delta {d}, amplitude {}: no control_state 1 trace", g.amplitude),
        })?;
        match out.iter_mut().find(|(x, _)| x.to_bits() == d.to_bits()) {
            Some((_, v)) => v.push((g, e)),
            None => out.push((d, vec![(g, e)])),
        }
    }
    if let Some(t) = excited.values().next() {
        return Err(Error::Schema {
            path: path.display().to_string(),
            message: format!("amplitude {}: no control_state 0 trace", t.amplitude),
        });
    }
    for (_, v) in out.iter_mut() {
        v.sort_by(|a, b| a.0.amplitude.total_cmp(&b.0.amplitude));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JeffRow {
    /// `point` or `summary`.
    pub kind: String,
    pub delta_mhz: f64,
    pub amplitude: Option<f64>,
    pub f0_mhz: Option<f64>,
    pub f0_ci95: Option<f64>,
    pub fpi_mhz: Option<f64>,
    pub fpi_ci95: Option<f64>,
    pub jeff_mhz: Option<f64>,
    pub jeff_ci95: Option<f64>,
    pub slope: Option<f64>,
    pub slope_ci95: Option<f64>,
    pub saturation: Option<f64>,
    pub saturation_ci95: Option<f64>,
    pub prefix_len: Option<usize>,
    pub status: String,
}

pub fn jeff_rows(curves: &[JeffCurve]) -> Vec<JeffRow> {
    let mut rows = Vec::new();
    for c in curves {
        for p in &c.points {
            rows.push(JeffRow {
                kind: "point".into(),
                delta_mhz: c.delta,
                amplitude: Some(p.amplitude),
                f0_mhz: Some(p.f0),
                f0_ci95: Some(p.f0_ci95),
                fpi_mhz: Some(p.fpi),
                fpi_ci95: Some(p.fpi_ci95),
                jeff_mhz: Some(p.jeff),
                jeff_ci95: Some(p.jeff_ci95),
                slope: None,
                slope_ci95: None,
                saturation: None,
                saturation_ci95: None,
                prefix_len: None,
                status: p.status.clone(),
            });
        }
        rows.push(JeffRow {
            kind: "summary".into(),
            delta_mhz: c.delta,
            amplitude: None,
            f0_mhz: None,
            f0_ci95: None,
            fpi_mhz: None,
            fpi_ci95: None,
            jeff_mhz: None,
            jeff_ci95: None,
            slope: c.linear.map(|l| l.slope),
            slope_ci95: c.linear.map(|l| l.slope_ci95),
            saturation: c.saturation.map(|s| s.sign * s.level),
            saturation_ci95: c.saturation.map(|s| s.level_ci95),
            prefix_len: c.linear.map(|l| l.prefix_len),
            status: c.status.clone(),
        });
    }
    rows
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub delta_mhz: f64,
    pub mu_closed: Option<f64>,
    pub mu_matrix_h1: Option<f64>,
    pub mu_matrix_h2: Option<f64>,
    pub mu_numeric: Option<f64>,
    pub flags: String,
}

impl From<&MethodComparison> for MethodRow {
    fn from(c: &MethodComparison) -> Self {
        MethodRow {
            delta_mhz: c.delta,
            mu_closed: c.closed,
            mu_matrix_h1: c.matrix_h1,
            mu_matrix_h2: c.matrix_h2,
            mu_numeric: c.numeric,
            flags: c.flags.join(";"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MuRowCsv {
    pub delta_mhz: f64,
    pub slope: Option<f64>,
    pub slope_ci95: Option<f64>,
    pub prefix_len: Option<usize>,
    pub mu_theory: Option<f64>,
    pub mu_numeric: Option<f64>,
}

pub const MU_COLUMNS: [&str; 4] = ["delta_mhz", "slope", "slope_ci95", "mu_theory"];

pub fn mu_rows(curve: &MuCurve) -> Vec<MuRowCsv> {
    curve
        .rows
        .iter()
        .map(|r| MuRowCsv {
            delta_mhz: r.delta,
            slope: r.slope,
            slope_ci95: r.slope_ci95,
            prefix_len: r.prefix_len,
            mu_theory: r.mu_theory,
            mu_numeric: r.mu_numeric,
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SaturationRowCsv {
    pub delta_mhz: f64,
    pub saturation: f64,
    pub saturation_ci95: f64,
    pub sign: f64,
    pub plateau_len: usize,
    pub j_mhz: f64,
    pub exceeds_j: bool,
}

pub const SATURATION_COLUMNS: [&str; 4] = ["delta_mhz", "saturation", "saturation_ci95", "j_mhz"];

pub fn saturation_rows(curve: &SaturationCurve) -> Vec<SaturationRowCsv> {
    curve
        .rows
        .iter()
        .map(|r| SaturationRowCsv {
            delta_mhz: r.delta,
            saturation: r.level,
            saturation_ci95: r.level_ci95,
            sign: r.sign,
            plateau_len: r.plateau_len,
            j_mhz: curve.j_mhz,
            exceeds_j: r.exceeds_j,
        })
        .collect()
}

pub const JEFF_COLUMNS: [&str; 4] = ["kind", "delta_mhz", "amplitude", "jeff_mhz"];

/// Files written by [`write_sweep`].
pub const SWEEP_FILES: [&str; 5] = ["traces.csv", "jeff.csv", "mu.csv", "saturation.csv", "diagnostics.txt"];

/// Writes every table of a detuning sweep into `dir`.
pub fn write_sweep(dir: &Path, seed: u64, sweep: &DetuningSweep) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let traces: Vec<(f64, &RabiTrace)> = sweep
        .sweeps
        .iter()
        .flat_map(|s| s.traces.iter().flat_map(move |(g, e)| [(s.curve.delta, g), (s.curve.delta, e)]))
        .collect();
    write_traces(&dir.join("traces.csv"), seed, &traces)?;
    let curves: Vec<JeffCurve> = sweep.sweeps.iter().map(|s| s.curve.clone()).collect();
    write_rows(&dir.join("jeff.csv"), seed, &jeff_rows(&curves))?;
    write_rows(&dir.join("mu.csv"), seed, &mu_rows(&sweep.mu))?;
    write_rows(&dir.join("saturation.csv"), seed, &saturation_rows(&sweep.saturation))?;
    let path = dir.join("diagnostics.txt");
    let mut text = comment_line(seed) + "\n";
    for line in sweep.diagnostics() {
        text.push_str(&line);
        text.push('\n');
    }
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
