//! CSV trace export/import and gain files.
//!
//! A trace is written as `NAME.csv` with columns
//! `t, x_1_1 … x_N_d, Jx, disagreement, V, w_1_2 … w_{N-1}_N` (9 significant
//! digits) plus a sibling `NAME.meta` TOML file holding the schedule, graphs,
//! gains (full precision) and the cost report.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, Graph, SwitchingSchedule, SwitchingSet, WeightState};
use crate::performance::{self, CostReport};
use crate::riccati::{GainSet, Mode};
use crate::simulator::{Sample, Trace};

pub const TRACE_DIGITS: usize = 9;
pub const GAIN_DIGITS: usize = 12;

/// Rounds to `digits` significant digits and prints the shortest decimal
/// that parses back to the rounded value (exponent form for very small or
/// large magnitudes).
pub fn format_sig(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), v)
        .parse()
        .expect("valid float");
    let mag = rounded.abs();
    if mag != 0.0 && !(1e-5..1e16).contains(&mag) {
        format!("{rounded:e}")
    } else {
        rounded.to_string()
    }
}

pub fn trace_header(n: usize, d: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for i in 1..=n {
        for j in 1..=d {
            h.push(format!("x_{i}_{j}"));
        }
    }
    h.extend(["Jx", "disagreement", "V"].map(String::from));
    for (i, k) in graph::pairs(n) {
        h.push(format!("w_{}_{}", i + 1, k + 1));
    }
    h
}

/// `trace.csv` → `trace.meta`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta")
}

/// `trace.csv` → `trace.summary.txt`.
pub fn summary_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("summary.txt")
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn from_rows(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidArgument(format!(
            "{field}: ragged or empty matrix"
        )));
    }
    Ok(DMatrix::from_row_iterator(
        r,
        c,
        rows.iter().flatten().copied(),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaGains {
    mode: String,
    gamma: f64,
    mu: f64,
    ku: Vec<Vec<f64>>,
    kw: Vec<Vec<f64>>,
    certificate: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaCost {
    jx_final: f64,
    j_star_initial: f64,
    j_star_integral: f64,
    j_star: f64,
    tail_estimate: f64,
    horizon: f64,
    satisfied: bool,
    margin: f64,
}

impl From<&CostReport> for MetaCost {
    fn from(c: &CostReport) -> Self {
        Self {
            jx_final: c.jx_final,
            j_star_initial: c.j_star_initial,
            j_star_integral: c.j_star_integral,
            j_star: c.j_star,
            tail_estimate: c.tail_estimate,
            horizon: c.horizon,
            satisfied: c.satisfied,
            margin: c.margin,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    agents: usize,
    state_dim: usize,
    seed: Option<u64>,
    dwell: f64,
    breakpoints: Vec<f64>,
    indices: Vec<usize>,
    /// 1-based edge lists.
    graphs: Vec<Vec<[usize; 2]>>,
    q: Vec<Vec<f64>>,
    gains: MetaGains,
    cost: MetaCost,
}

/// Writes `path` (CSV) and its `.meta` sibling. Returns the cost report that
/// was recorded.
pub fn export_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<CostReport> {
    let path = path.as_ref();
    let n = trace.agent_count();
    let d = trace.state_dim;
    let analysis = performance::analyze_trace(trace)?;

    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trace_header(n, d))?;
    let mut record = Vec::with_capacity(1 + n * d + 3 + graph::pair_count(n));
    for (s, v) in trace.samples.iter().zip(&analysis.lyapunov.values) {
        record.clear();
        record.push(format_sig(s.t, TRACE_DIGITS));
        record.extend(s.x.iter().map(|&x| format_sig(x, TRACE_DIGITS)));
        record.push(format_sig(s.jx, TRACE_DIGITS));
        record.push(format_sig(s.disagreement, TRACE_DIGITS));
        record.push(format_sig(*v, TRACE_DIGITS));
        record.extend(
            s.weights
                .values()
                .iter()
                .map(|&x| format_sig(x, TRACE_DIGITS)),
        );
        w.write_record(&record)?;
    }
    w.flush()?;

    let meta = Meta {
        agents: n,
        state_dim: d,
        seed: trace.seed,
        dwell: trace.set.dwell(),
        breakpoints: trace.schedule.breakpoints().to_vec(),
        indices: trace.schedule.indices().to_vec(),
        graphs: trace
            .set
            .graphs()
            .iter()
            .map(Graph::one_based_edges)
            .collect(),
        q: rows(&trace.q),
        gains: MetaGains {
            mode: trace.gains.mode.as_str().to_string(),
            gamma: trace.gains.gamma,
            mu: trace.gains.mu,
            ku: rows(&trace.gains.ku),
            kw: rows(&trace.gains.kw),
            certificate: rows(&trace.gains.certificate),
        },
        cost: MetaCost::from(&analysis.cost),
    };
    let text = toml::to_string(&meta)
        .map_err(|e| Error::InvalidArgument(format!("meta serialization: {e}")))?;
    fs::write(meta_path(path), text)?;
    Ok(analysis.cost)
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a trace written by [`export_trace`].
pub fn import_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let mpath = meta_path(path);
    let meta: Meta = toml::from_str(&fs::read_to_string(&mpath)?)
        .map_err(|e| parse_err(&mpath, e.to_string()))?;
    let (n, d) = (meta.agents, meta.state_dim);

    let graphs = meta
        .graphs
        .iter()
        .map(|edges| Graph::from_one_based(n, edges))
        .collect::<Result<Vec<_>>>()?;
    let set = SwitchingSet::new(graphs, meta.dwell)?;
    let schedule = SwitchingSchedule::new(meta.breakpoints, meta.indices, &set)?;
    let mode = match meta.gains.mode.as_str() {
        "linear" => Mode::Linear,
        "lipschitz" => Mode::Lipschitz,
        other => return Err(parse_err(&mpath, format!("unknown mode {other:?}"))),
    };
    let gains = GainSet {
        ku: from_rows(&meta.gains.ku, "gains.ku")?,
        kw: from_rows(&meta.gains.kw, "gains.kw")?,
        certificate: from_rows(&meta.gains.certificate, "gains.certificate")?,
        gamma: meta.gains.gamma,
        mode,
        mu: meta.gains.mu,
    };
    let q = from_rows(&meta.q, "q")?;

    let mut reader = csv::Reader::from_path(path)?;
    let expected = trace_header(n, d);
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if header != expected {
        return Err(parse_err(path, "CSV header does not match the metadata"));
    }
    let pairs = graph::pair_count(n);
    let mut samples = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, format!("row {}: {e}", line + 2)))?;
        let x = DVector::from_column_slice(&vals[1..1 + n * d]);
        let base = 1 + n * d;
        let weights = WeightState::from_values(n, vals[base + 3..base + 3 + pairs].to_vec())?;
        samples.push(Sample {
            t: vals[0],
            cost_rate: performance::cost_rate(&x, &q, n)?,
            x,
            weights,
            jx: vals[base],
            disagreement: vals[base + 1],
        });
    }
    if samples.is_empty() {
        return Err(parse_err(path, "trace has no rows"));
    }
    Ok(Trace {
        samples,
        set,
        schedule,
        gains,
        q,
        state_dim: d,
        seed: meta.seed,
    })
}

pub fn write_matrix_csv(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|&v| format_sig(v, GAIN_DIGITS)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut data = Vec::new();
    for rec in r.records() {
        let row = rec?
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, e.to_string()))?;
        data.push(row);
    }
    from_rows(&data, &path.display().to_string())
}

/// Writes `ku.csv`, `kw.csv`, `certificate.csv` into `dir`.
pub fn write_gains(gains: &GainSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_matrix_csv(&gains.ku, dir.join("ku.csv"))?;
    write_matrix_csv(&gains.kw, dir.join("kw.csv"))?;
    write_matrix_csv(&gains.certificate, dir.join("certificate.csv"))?;
    Ok(())
}
