//! On-disk formats. Floats are written with 17 significant digits so every
//! file reads back bit-identically.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::distributions::Distribution;
use crate::error::{Result, SbiError};
use crate::estimators::{decode_weights, encode_weights, Estimator, EstimatorHeader};
use crate::inference::MethodKind;
use crate::neural::TrainReport;
use crate::simgym::SimulationBatch;

pub const BATCH_CSV: &str = "batch.csv";
pub const BATCH_JSON: &str = "batch.json";
pub const CHECKPOINT: &str = "model.ckpt";
pub const SAMPLES_CSV: &str = "samples.csv";
pub const REPORT_JSON: &str = "report.json";
pub const MANIFEST_JSON: &str = "manifest.json";

const CHECKPOINT_FORMAT: &str = "sbi-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_err(path: &Path, line: u64, msg: impl std::fmt::Display) -> SbiError {
    SbiError::Format(format!("{}: line {line}: {msg}", path.display()))
}

/// Numeric CSV with an optional header row. Every row must have `ncols`
/// cells; errors name the offending line.
pub fn read_numeric_csv(path: &Path, ncols: usize) -> Result<(Option<Vec<String>>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    parse_numeric_csv(&text, ncols).map_err(|(line, msg)| format_err(path, line, msg))
}

fn parse_numeric_csv(
    text: &str,
    ncols: usize,
) -> std::result::Result<(Option<Vec<String>>, Vec<Vec<f64>>), (u64, String)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut header = None;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| (e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if rec.len() != ncols {
            return Err((line, format!("expected {ncols} columns, found {}", rec.len())));
        }
        if i == 0 && rec.iter().any(|c| c.trim().parse::<f64>().is_err()) {
            header = Some(rec.iter().map(|c| c.trim().to_string()).collect());
            continue;
        }
        let row = rec
            .iter()
            .map(|c| c.trim().parse::<f64>().map_err(|_| (line, format!("non-numeric cell '{c}'"))))
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn to_array(rows: &[Vec<f64>], cols: std::ops::Range<usize>) -> Array2<f64> {
    let w = cols.len();
    let flat: Vec<f64> = rows.iter().flat_map(|r| r[cols.clone()].iter().copied()).collect();
    Array2::from_shape_vec((rows.len(), w), flat).expect("rows checked")
}

fn write_matrix_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Sidecar of `batch.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchHeader {
    pub theta_dim: usize,
    pub x_dim: usize,
    pub n: usize,
    pub n_valid: usize,
    pub seed: u64,
    pub provenance: String,
    pub columns: Vec<String>,
}

fn batch_columns(d: usize, k: usize) -> Vec<String> {
    let mut c: Vec<String> = (0..d).map(|i| format!("theta_{i}")).collect();
    c.extend((0..k).map(|j| format!("x_{j}")));
    c.push("valid".into());
    c
}

/// Writes `batch.csv` (columns `theta_*, x_*, valid`) and `batch.json`.
pub fn write_batch(dir: &Path, batch: &SimulationBatch) -> Result<()> {
    let (d, k) = (batch.theta_dim(), batch.x_dim());
    let columns = batch_columns(d, k);
    let rows = (0..batch.len()).map(|i| {
        let mut r: Vec<String> = batch.theta.row(i).iter().map(|v| fmt_f64(*v)).collect();
        r.extend(batch.x.row(i).iter().map(|v| fmt_f64(*v)));
        r.push(if batch.valid[i] { "1" } else { "0" }.into());
        r
    });
    write_matrix_csv(&dir.join(BATCH_CSV), &columns, rows)?;
    let header = BatchHeader {
        theta_dim: d,
        x_dim: k,
        n: batch.len(),
        n_valid: batch.n_valid(),
        seed: batch.seed,
        provenance: batch.provenance.clone(),
        columns,
    };
    fs::write(dir.join(BATCH_JSON), serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

/// Reads a simulation CSV with `theta_dim + x_dim` value columns and an
/// optional trailing `valid` column. Validity is recomputed from finiteness.
pub fn import_batch_csv(
    path: &Path,
    theta_dim: usize,
    x_dim: usize,
    seed: u64,
    provenance: &str,
) -> Result<SimulationBatch> {
    let text = fs::read_to_string(path)?;
    let first_width = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes())
        .records()
        .next()
        .and_then(|r| r.ok())
        .map_or(0, |r| r.len());
    let ncols = if first_width == theta_dim + x_dim + 1 { first_width } else { theta_dim + x_dim };
    let (_, rows) = parse_numeric_csv(&text, ncols).map_err(|(line, msg)| format_err(path, line, msg))?;
    if rows.is_empty() {
        return Err(SbiError::Format(format!("{}: no data rows", path.display())));
    }
    let theta = to_array(&rows, 0..theta_dim);
    let x = to_array(&rows, theta_dim..theta_dim + x_dim);
    SimulationBatch::new(theta, x, seed, provenance)
}

/// Reads the `batch.csv`/`batch.json` pair in `dir`.
pub fn read_batch(dir: &Path) -> Result<SimulationBatch> {
    let header: BatchHeader = serde_json::from_str(&fs::read_to_string(dir.join(BATCH_JSON))?)?;
    let batch =
        import_batch_csv(&dir.join(BATCH_CSV), header.theta_dim, header.x_dim, header.seed, &header.provenance)?;
    if batch.len() != header.n {
        return Err(SbiError::Format(format!("batch.json declares {} rows, batch.csv has {}", header.n, batch.len())));
    }
    Ok(batch)
}

/// Samples file: header `theta_0,...`, one draw per row.
pub fn write_samples(path: &Path, samples: &Array2<f64>) -> Result<()> {
    let header: Vec<String> = (0..samples.ncols()).map(|j| format!("theta_{j}")).collect();
    let rows = samples.rows().into_iter().map(|r| r.iter().map(|v| fmt_f64(*v)).collect());
    write_matrix_csv(path, &header, rows)
}

/// Reads a numeric CSV of any width (header optional).
pub fn read_samples(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let width = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes())
        .records()
        .next()
        .and_then(|r| r.ok())
        .map_or(0, |r| r.len());
    let (_, rows) = parse_numeric_csv(&text, width).map_err(|(line, msg)| format_err(path, line, msg))?;
    if rows.is_empty() || width == 0 {
        return Err(SbiError::Format(format!("{}: no samples", path.display())));
    }
    Ok(to_array(&rows, 0..width))
}

/// First line of `model.ckpt`; the second line is the hex weight payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub method: MethodKind,
    pub prior: Distribution,
    pub estimator: EstimatorHeader,
    pub report: TrainReport,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub method: MethodKind,
    pub prior: Distribution,
    pub estimator: Estimator,
    pub report: TrainReport,
}

fn expected_kinds(method: MethodKind) -> &'static [&'static str] {
    match method {
        MethodKind::Npe | MethodKind::Nle => &["mdn", "maf"],
        MethodKind::Nre => &["ratio-classifier"],
    }
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        method: ck.method,
        prior: ck.prior.clone(),
        estimator: ck.estimator.header(),
        report: ck.report.clone(),
    };
    let mut s = serde_json::to_string(&header)?;
    s.push('\n');
    s.push_str(&encode_weights(&ck.estimator.params().flatten()));
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let bad = |m: &str| SbiError::Format(format!("{}: {m}", path.display()));
    let header: CheckpointHeader = serde_json::from_str(lines.next().ok_or_else(|| bad("empty checkpoint"))?)?;
    if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported checkpoint format {} v{}", header.format, header.version)));
    }
    if !expected_kinds(header.method).contains(&header.estimator.kind.as_str()) {
        return Err(bad(&format!(
            "method {} cannot use a '{}' estimator",
            header.method.name(),
            header.estimator.kind
        )));
    }
    let flat = decode_weights(lines.next().ok_or_else(|| bad("missing weight payload"))?)?;
    let estimator = Estimator::from_parts(&header.estimator, &flat)?;
    Ok(Checkpoint { method: header.method, prior: header.prior, estimator, report: header.report })
}
