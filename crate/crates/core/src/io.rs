//! File formats.
//!
//! - Trace CSV: header `t_ms,v0,...,v{n-1}`, one row per step, `t_ms = step * dt`.
//! - Model JSON: `{ "dt_ms", "neurons": [{a, b, c, d, u0}], "weights": [[...]] }`,
//!   weights row-major with `weights[i][j]` from `j` into `i`.
//! - GA config JSON, reconstruction report JSON and a set of CSV datasets
//!   for plotting.
//!
//! Numbers are written in shortest round-trip form so that re-reading and
//! re-writing a file reproduces it byte for byte. Files are written to a
//! temporary sibling and renamed into place.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::{GaConfig, ParameterRanges};
use crate::model::{NeuronParameters, TraceMatrix, WeightMatrix};
use crate::pipeline::{ComparisonMetrics, NetworkModel, ReconstructionConfig, ReconstructionReport, SurfacePoint, DEFAULT_WARMUP_STEPS};

/// Relative tolerance when checking the time column for a uniform step.
const TIME_TOLERANCE: f64 = 1e-9;

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn csv_bytes<F>(header: &[String], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        fill(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

fn num(x: f64) -> String {
    format!("{x}")
}

// ---------------------------------------------------------------------------
// Traces

pub fn trace_to_csv(trace: &TraceMatrix) -> Result<Vec<u8>> {
    let mut header = vec!["t_ms".to_string()];
    header.extend((0..trace.n()).map(|j| format!("v{j}")));
    csv_bytes(&header, |w| {
        for t in 0..trace.steps() {
            let mut record = vec![num(t as f64 * trace.dt())];
            record.extend(trace.row(t).iter().map(|&x| num(x)));
            w.write_record(&record)?;
        }
        Ok(())
    })
}

pub fn trace_from_csv<R: Read>(reader: R) -> Result<TraceMatrix> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || &headers[0] != "t_ms" {
        return Err(Error::Format("trace header must start with t_ms".into()));
    }
    let n = headers.len() - 1;
    for (j, h) in headers.iter().skip(1).enumerate() {
        if h != format!("v{j}") {
            return Err(Error::Format(format!("unexpected trace column {h:?}, expected v{j}")));
        }
    }
    if n == 0 {
        return Err(Error::Format("trace has no neuron columns".into()));
    }

    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != n + 1 {
            return Err(Error::Format(format!(
                "row {} has {} fields, expected {}",
                row + 1,
                record.len(),
                n + 1
            )));
        }
        let mut values = record.iter().map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("row {}: cannot parse {s:?}", row + 1)))
        });
        times.push(values.next().unwrap()?);
        for v in values {
            samples.push(v?);
        }
    }
    if times.len() < 2 {
        return Err(Error::Format(format!(
            "trace needs at least 2 rows, found {}",
            times.len()
        )));
    }
    let dt = times[1] - times[0];
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::Format(format!("non-increasing time column (dt = {dt})")));
    }
    for (k, &t) in times.iter().enumerate() {
        let expected = times[0] + k as f64 * dt;
        if (t - expected).abs() > TIME_TOLERANCE * expected.abs().max(dt) {
            return Err(Error::Format(format!("non-uniform time step at row {}: {t}", k + 1)));
        }
    }
    TraceMatrix::from_samples(n, dt, samples)
}

pub fn read_trace(path: &Path) -> Result<TraceMatrix> {
    trace_from_csv(fs::File::open(path)?)
}

pub fn write_trace(path: &Path, trace: &TraceMatrix) -> Result<()> {
    write_atomic(path, &trace_to_csv(trace)?)
}

// ---------------------------------------------------------------------------
// Models

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dt_ms: f64,
    pub neurons: Vec<NeuronParameters>,
    pub weights: Vec<Vec<f64>>,
}

impl ModelFile {
    pub fn from_model(model: &NetworkModel) -> Self {
        Self {
            dt_ms: model.dt,
            neurons: model.params.clone(),
            weights: model.weights.to_rows(),
        }
    }

    /// Validates dimensions and parameter ranges.
    pub fn into_model(self) -> Result<NetworkModel> {
        let weights = if self.neurons.is_empty() && self.weights.is_empty() {
            WeightMatrix::zeros(0)
        } else {
            WeightMatrix::from_rows(&self.weights)?
        };
        let model = NetworkModel::new(self.neurons, weights, self.dt_ms)?;
        model.check_ranges(&ParameterRanges::default())?;
        Ok(model)
    }
}

pub fn model_to_json(model: &NetworkModel) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(&ModelFile::from_model(model))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn model_from_json(bytes: &[u8]) -> Result<NetworkModel> {
    serde_json::from_slice::<ModelFile>(bytes)?.into_model()
}

pub fn read_model(path: &Path) -> Result<NetworkModel> {
    model_from_json(&fs::read(path)?)
}

pub fn write_model(path: &Path, model: &NetworkModel) -> Result<()> {
    write_atomic(path, &model_to_json(model)?)
}

// ---------------------------------------------------------------------------
// GA configuration

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeOverrides {
    pub a: Option<(f64, f64)>,
    pub b: Option<(f64, f64)>,
    pub c: Option<(f64, f64)>,
    pub d: Option<(f64, f64)>,
    pub u0: Option<(f64, f64)>,
}

impl RangeOverrides {
    pub fn apply(&self, base: ParameterRanges) -> ParameterRanges {
        ParameterRanges {
            a: self.a.unwrap_or(base.a),
            b: self.b.unwrap_or(base.b),
            c: self.c.unwrap_or(base.c),
            d: self.d.unwrap_or(base.d),
            u0: self.u0.unwrap_or(base.u0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfigFile {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub seed: u64,
    pub ranges: Option<RangeOverrides>,
    pub fix_u0: bool,
    pub warmup_steps: usize,
    pub reset_rows: bool,
}

impl Default for GaConfigFile {
    fn default() -> Self {
        let ga = GaConfig::default();
        Self {
            population: ga.population,
            generations: ga.generations,
            crossover_rate: ga.crossover_rate,
            mutation_rate: ga.mutation_rate,
            seed: ga.seed,
            ranges: None,
            fix_u0: false,
            warmup_steps: DEFAULT_WARMUP_STEPS,
            reset_rows: true,
        }
    }
}

impl GaConfigFile {
    pub fn to_config(&self) -> Result<ReconstructionConfig> {
        let ranges = self
            .ranges
            .as_ref()
            .map_or_else(ParameterRanges::default, |o| o.apply(ParameterRanges::default()));
        let ga = GaConfig {
            population: self.population,
            generations: self.generations,
            crossover_rate: self.crossover_rate,
            mutation_rate: self.mutation_rate,
            seed: self.seed,
            ranges,
        };
        ga.validate()?;
        Ok(ReconstructionConfig {
            ga,
            fix_u0: self.fix_u0,
            warmup_steps: self.warmup_steps,
            reset_rows: self.reset_rows,
        })
    }
}

pub fn read_ga_config(path: &Path) -> Result<ReconstructionConfig> {
    serde_json::from_slice::<GaConfigFile>(&fs::read(path)?)?.to_config()
}

// ---------------------------------------------------------------------------
// Reconstruction report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_mse: f64,
    pub mean_mse: f64,
    pub best: NeuronParameters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronRecord {
    pub neuron: usize,
    pub params: NeuronParameters,
    pub mse: f64,
    pub usable_transitions: usize,
    pub failed_evaluations: usize,
    pub failure: Option<String>,
    pub history: Vec<GenerationRecord>,
}

/// Reconstruction summary. Wall-clock time is deliberately absent so the
/// file is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub mode: String,
    pub neurons: Vec<NeuronRecord>,
    /// Present when the reconstruction was run against known parameters.
    pub max_abs_weight_error: Option<f64>,
}

impl ReportFile {
    pub fn from_report(report: &ReconstructionReport) -> Self {
        let neurons = report
            .neurons
            .iter()
            .map(|r| NeuronRecord {
                neuron: r.neuron,
                params: r.params,
                mse: r.mse,
                usable_transitions: r.usable_transitions,
                failed_evaluations: r.failed_evaluations,
                failure: r.failure.clone(),
                history: r
                    .history
                    .generations
                    .iter()
                    .enumerate()
                    .map(|(g, s)| GenerationRecord {
                        generation: g,
                        best_mse: s.best_error,
                        mean_mse: s.mean_error,
                        best: s.best,
                    })
                    .collect(),
            })
            .collect();
        Self {
            mode: "ga".into(),
            neurons,
            max_abs_weight_error: None,
        }
    }
}

pub fn report_to_json(report: &ReportFile) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn read_report(path: &Path) -> Result<ReportFile> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

const PARAM_COLUMNS: [&str; 5] = ["a", "b", "c", "d", "u0"];

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// All neurons' GA histories in one table.
pub fn history_to_csv(report: &ReportFile) -> Result<Vec<u8>> {
    let mut cols = vec!["neuron", "generation", "best_mse", "mean_mse"];
    cols.extend(PARAM_COLUMNS);
    csv_bytes(&header(&cols), |w| {
        for n in &report.neurons {
            for g in &n.history {
                let mut rec = vec![n.neuron.to_string(), g.generation.to_string(), num(g.best_mse), num(g.mean_mse)];
                rec.extend(g.best.to_array().iter().map(|&x| num(x)));
                w.write_record(&rec)?;
            }
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Figure data

/// Best and mean error per generation for one neuron.
pub fn fitness_curve_csv(history: &[GenerationRecord]) -> Result<Vec<u8>> {
    csv_bytes(&header(&["generation", "best_mse", "mean_mse"]), |w| {
        for g in history {
            w.write_record([g.generation.to_string(), num(g.best_mse), num(g.mean_mse)])?;
        }
        Ok(())
    })
}

/// Best phenotype per generation for one neuron.
pub fn parameter_curve_csv(history: &[GenerationRecord]) -> Result<Vec<u8>> {
    let mut cols = vec!["generation"];
    cols.extend(PARAM_COLUMNS);
    csv_bytes(&header(&cols), |w| {
        for g in history {
            let mut rec = vec![g.generation.to_string()];
            rec.extend(g.best.to_array().iter().map(|&x| num(x)));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

pub fn surface_csv(points: &[SurfacePoint]) -> Result<Vec<u8>> {
    csv_bytes(&header(&["a", "b", "mse"]), |w| {
        for p in points {
            w.write_record([num(p.a), num(p.b), num(p.mse)])?;
        }
        Ok(())
    })
}

/// Columns `t_ms, truth_v0, recon_v0, truth_v1, recon_v1, ...`.
pub fn trajectory_csv(truth: &TraceMatrix, recon: &TraceMatrix) -> Result<Vec<u8>> {
    if truth.n() != recon.n() || truth.steps() != recon.steps() {
        return Err(Error::Dimension {
            what: "trajectory shape",
            expected: truth.n() * truth.steps(),
            found: recon.n() * recon.steps(),
        });
    }
    let mut cols = vec!["t_ms".to_string()];
    for j in 0..truth.n() {
        cols.push(format!("truth_v{j}"));
        cols.push(format!("recon_v{j}"));
    }
    csv_bytes(&cols, |w| {
        for t in 0..truth.steps() {
            let mut rec = vec![num(t as f64 * truth.dt())];
            for j in 0..truth.n() {
                rec.push(num(truth.sample(t, j)));
                rec.push(num(recon.sample(t, j)));
            }
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

/// `metric,value` table; the trajectory row is omitted when absent.
pub fn metrics_csv(m: &ComparisonMetrics) -> Result<Vec<u8>> {
    csv_bytes(&header(&["metric", "value"]), |w| {
        w.write_record(["max_abs_weight_error".to_string(), num(m.max_abs_weight_error)])?;
        for (name, e) in PARAM_COLUMNS.iter().zip(m.param_errors) {
            w.write_record([format!("abs_error_{name}"), num(e)])?;
        }
        if let Some(mse) = m.trajectory_mse {
            w.write_record(["trajectory_mse".to_string(), num(mse)])?;
        }
        Ok(())
    })
}
