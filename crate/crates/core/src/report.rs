//! Run reports (JSON lines), merged CSV tables and field exports.

use crate::data::{DataSet, Normalization};
use crate::driver::{IterationRecord, StopReason};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::rbf::BaselineReport;
use crate::saddle::Smoother;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt::Write as _;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package_version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            threads: rayon::current_num_threads(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub source: String,
    pub points: usize,
    /// Largest nearest-neighbour gap in normalized coordinates.
    pub spacing: f64,
    pub normalization: Option<Normalization>,
}

impl DataSummary {
    pub fn of<T: Real>(source: &str, data: &DataSet<T>) -> Self {
        DataSummary {
            source: source.to_string(),
            points: data.len(),
            spacing: data.spacing,
            normalization: data.normalization.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub nodes: usize,
    pub solve_time_s: Option<f64>,
    pub rmse: f64,
    pub max: f64,
    pub near_boundary_ratio: Option<f64>,
    pub dropped_points: usize,
}

impl FinalMetrics {
    pub fn from_record(r: &IterationRecord) -> Self {
        FinalMetrics {
            nodes: r.nodes,
            solve_time_s: r.solve_time_s,
            rmse: r.rmse,
            max: r.max_residual,
            near_boundary_ratio: r.near_boundary_ratio,
            dropped_points: r.dropped_points,
        }
    }

    pub fn from_baseline(b: &BaselineReport) -> Self {
        FinalMetrics {
            nodes: b.basis,
            solve_time_s: b.solve_time_s,
            rmse: b.rmse,
            max: b.max,
            near_boundary_ratio: None,
            dropped_points: 0,
        }
    }
}

/// Everything one command produced. Written as JSON lines: a header, one
/// line per iteration or baseline, and a closing line.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub config: Value,
    pub environment: Environment,
    pub seed: u64,
    pub data: Option<DataSummary>,
    pub records: Vec<IterationRecord>,
    pub baselines: Vec<BaselineReport>,
    pub final_metrics: Option<FinalMetrics>,
    pub stop: Option<StopReason>,
    pub error: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header {
        schema_version: u32,
        command: String,
        config: Value,
        environment: Environment,
        seed: u64,
        data: Option<DataSummary>,
    },
    Iteration(IterationRecord),
    Baseline(BaselineReport),
    Final {
        metrics: Option<FinalMetrics>,
        stop: Option<StopReason>,
        error: Option<String>,
    },
}

impl RunReport {
    pub fn new(command: &str, config: &impl Serialize, seed: u64) -> Result<Self> {
        Ok(RunReport {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            environment: Environment::current(),
            seed,
            data: None,
            records: Vec::new(),
            baselines: Vec::new(),
            final_metrics: None,
            stop: None,
            error: None,
        })
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let mut push = |line: &Line| -> Result<()> {
            out.push_str(&serde_json::to_string(line)?);
            out.push('\n');
            Ok(())
        };
        push(&Line::Header {
            schema_version: self.schema_version,
            command: self.command.clone(),
            config: self.config.clone(),
            environment: self.environment.clone(),
            seed: self.seed,
            data: self.data.clone(),
        })?;
        for r in &self.records {
            push(&Line::Iteration(r.clone()))?;
        }
        for b in &self.baselines {
            push(&Line::Baseline(b.clone()))?;
        }
        push(&Line::Final {
            metrics: self.final_metrics.clone(),
            stop: self.stop,
            error: self.error.clone(),
        })?;
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut report: Option<RunReport> = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            match parsed {
                Line::Header {
                    schema_version,
                    command,
                    config,
                    environment,
                    seed,
                    data,
                } => {
                    if schema_version != SCHEMA_VERSION {
                        return Err(Error::parse(
                            i + 1,
                            format!("unsupported schema version {schema_version}"),
                        ));
                    }
                    report = Some(RunReport {
                        schema_version,
                        command,
                        config,
                        environment,
                        seed,
                        data,
                        records: Vec::new(),
                        baselines: Vec::new(),
                        final_metrics: None,
                        stop: None,
                        error: None,
                    });
                }
                other => {
                    let r = report.as_mut().ok_or_else(|| Error::parse(i + 1, "report has no header"))?;
                    match other {
                        Line::Iteration(rec) => r.records.push(rec),
                        Line::Baseline(b) => r.baselines.push(b),
                        Line::Final { metrics, stop, error } => {
                            r.final_metrics = metrics;
                            r.stop = stop;
                            r.error = error;
                        }
                        Line::Header { .. } => unreachable!(),
                    }
                }
            }
        }
        report.ok_or_else(|| Error::parse(1, "empty report"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }
}

pub const CSV_COLUMNS: [&str; 16] = [
    "source",
    "command",
    "method",
    "refinement",
    "indicator",
    "boundary",
    "seed",
    "nodes",
    "solve_time_s",
    "rmse",
    "max",
    "near_boundary_ratio",
    "nonzeros",
    "ratio",
    "stop",
    "error",
];

fn config_str(config: &Value, key: &str) -> String {
    match config.get(key) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(v) => v.to_string(),
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV row per report, columns in [`CSV_COLUMNS`] order.
pub fn merge_csv(reports: &[(String, RunReport)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for (source, r) in reports {
        let m = r.final_metrics.as_ref();
        let baseline = r.baselines.last();
        let nonzeros = baseline
            .map(|b| b.nonzeros)
            .or_else(|| r.records.last().map(|x| x.system_nnz));
        let ratio = baseline.map(|b| b.ratio).or_else(|| {
            r.records.last().map(|x| {
                let n = (4 * x.nodes) as f64;
                x.system_nnz as f64 / (n * n)
            })
        });
        let row = [
            source.clone(),
            r.command.clone(),
            config_str(&r.config, "method"),
            config_str(&r.config, "refinement"),
            config_str(&r.config, "indicator"),
            config_str(&r.config, "boundary"),
            r.seed.to_string(),
            opt(m.map(|m| m.nodes)),
            opt(m.and_then(|m| m.solve_time_s)),
            opt(m.map(|m| m.rmse)),
            opt(m.map(|m| m.max)),
            opt(m.and_then(|m| m.near_boundary_ratio)),
            opt(nonzeros),
            opt(ratio),
            opt(r.stop.map(|s| config_str(&serde_json::to_value(s).unwrap_or(Value::Null), ""))),
            r.error.clone().unwrap_or_default(),
        ];
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidConfig(format!("csv: {e}"))
}

/// `id c g1 g2 w`, one node per line.
pub fn node_table<T: Real>(s: &Smoother<T>) -> String {
    let mut out = String::from("id c g1 g2 w\n");
    for i in 0..s.mesh().num_nodes() {
        let [c, g1, g2, w] = s.node_values(i);
        writeln!(out, "{i} {} {} {} {}", c.as_f64(), g1.as_f64(), g2.as_f64(), w.as_f64()).unwrap();
    }
    out
}

/// `x,y,s` on an `n × n` grid over `[0,1]²`; empty `s` outside the domain.
pub fn surface_grid<T: Real>(s: &Smoother<T>, n: usize) -> String {
    let mut out = String::from("x,y,s\n");
    let step = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
    for j in 0..n {
        for i in 0..n {
            let (x, y) = (i as f64 * step, j as f64 * step);
            let v = s
                .evaluate(Point2::new(T::lit(x), T::lit(y)))
                .map(|v| v.as_f64().to_string())
                .unwrap_or_default();
            writeln!(out, "{x},{y},{v}").unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::RunConfig;

    fn record(i: usize) -> IterationRecord {
        IterationRecord {
            iteration: i,
            nodes: 25 * (i + 1),
            triangles: 32 * (i + 1),
            alpha: 1.234567890123e-7 / 3.0,
            gcv_score: Some(0.1 + 0.2),
            rmse: 1.0 / 3.0,
            max_residual: std::f64::consts::PI,
            solve_time_s: None,
            near_boundary_ratio: Some(0.0),
            marked_edges: i,
            refined_edges: i,
            waves: 1,
            dropped_points: 0,
            system_nnz: 100,
            constraint_residual: 1e-17,
            indicator: None,
        }
    }

    #[test]
    fn jsonl_round_trip_is_lossless() {
        let mut r = RunReport::new("fit", &RunConfig::default(), 7).unwrap();
        r.records = (0..3).map(record).collect();
        r.final_metrics = Some(FinalMetrics::from_record(&r.records[2]));
        r.stop = Some(StopReason::MaxIterations);
        let text = r.to_jsonl().unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().next().unwrap().contains("\"schema_version\":1"));
        let back = RunReport::from_jsonl(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn rejects_other_schema_versions() {
        let mut r = RunReport::new("fit", &RunConfig::default(), 0).unwrap();
        r.schema_version = 99;
        let text = r.to_jsonl().unwrap();
        assert!(matches!(RunReport::from_jsonl(&text), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn csv_has_stable_columns() {
        let mut a = RunReport::new("fit", &RunConfig::default(), 1).unwrap();
        a.records = vec![record(0)];
        a.final_metrics = Some(FinalMetrics::from_record(&a.records[0]));
        let b = a.clone();
        let csv = merge_csv(&[("a".into(), a), ("b".into(), b)]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CSV_COLUMNS.join(","));
        assert!(lines[1].starts_with("a,fit,,adaptive,recovery,nodal_average,1,25,"));
    }
}
