//! Stage reports, their JSON/CSV emission and run comparison.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::explain::FeatureWeight;
use crate::metrics::MetricBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Marker {
    #[serde(rename = "stage-internal")]
    StageInternal,
}

/// Tuned decision threshold, or a marker for post-processors that decide internally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdRecord {
    Tuned(f64),
    Internal(Marker),
}

impl std::fmt::Display for ThresholdRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdRecord::Tuned(t) => write!(f, "{t}"),
            ThresholdRecord::Internal(_) => f.write_str("stage-internal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub instance: usize,
    pub features: Vec<FeatureWeight>,
    pub intercept: f64,
    pub r2: f64,
    /// `None` when undefined.
    pub faithfulness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub model: String,
    pub stage: String,
    pub metrics: MetricBundle,
    pub threshold: ThresholdRecord,
    /// Configured hyperparameters of the stage's intervention (`null` for the baseline).
    pub params: Value,
    /// Summary of what the intervention fitted.
    pub fitted: Value,
    pub flags: Vec<String>,
    pub explanations: Vec<ExplanationRecord>,
    pub mean_faithfulness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub model: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub config_echo: Value,
    /// Choices not fixed by the configuration, declared for every run.
    pub declared: Value,
    pub explanation_instances: Vec<usize>,
    pub reports: Vec<StageReport>,
    pub errors: Vec<StageError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Both,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "both" => Ok(ReportFormat::Both),
            other => Err(Error::Config(format!("unknown report format `{other}` (json, csv, both)"))),
        }
    }
}

pub const JSON_FILE: &str = "report.json";
pub const CSV_FILE: &str = "report.csv";

pub fn report_json(run: &RunReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(run)?;
    s.push('\n');
    Ok(s)
}

pub(crate) fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub const CSV_METRICS: [&str; 7] = ["accuracy", "balanced_accuracy", "roc_auc", "spd", "di", "eod", "aod"];

pub fn report_csv(run: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model", "stage", "threshold"];
    header.extend(CSV_METRICS);
    header.extend(["mean_faithfulness", "flags"]);
    w.write_record(&header)?;
    for r in &run.reports {
        let mut row = vec![r.model.clone(), r.stage.clone(), r.threshold.to_string()];
        row.extend(r.metrics.scalars().iter().map(|(_, v)| fmt_num(*v)));
        row.push(fmt_opt(r.mean_faithfulness));
        row.push(r.flags.join(";"));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Report(e.to_string()))
}

/// Writes the requested files into `dir` (created if missing) and returns their paths.
pub fn emit_report(run: &RunReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    if run.reports.is_empty() {
        return Err(Error::Report("no stage reports to emit".into()));
    }
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    if matches!(format, ReportFormat::Json | ReportFormat::Both) {
        let p = dir.join(JSON_FILE);
        fs::write(&p, report_json(run)?)?;
        out.push(p);
    }
    if matches!(format, ReportFormat::Csv | ReportFormat::Both) {
        let p = dir.join(CSV_FILE);
        fs::write(&p, report_csv(run)?)?;
        out.push(p);
    }
    Ok(out)
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    let path = if path.is_dir() { path.join(JSON_FILE) } else { path.to_path_buf() };
    let text = fs::read_to_string(&path).map_err(|e| Error::Report(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaStatus {
    Ok,
    MissingInA,
    MissingInB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub model: String,
    pub stage: String,
    pub metric: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `b - a`; equal values (including equal infinities) give exactly 0.
    pub delta: Option<f64>,
    pub status: DeltaStatus,
}

fn metric_values(r: &StageReport) -> Vec<(&'static str, Option<f64>)> {
    let mut v: Vec<(&'static str, Option<f64>)> = r.metrics.scalars().iter().map(|&(k, x)| (k, Some(x))).collect();
    v.push(("mean_faithfulness", r.mean_faithfulness));
    v
}

/// Per (model, stage, metric) signed differences `B - A`, in A's report order
/// followed by stages only B has.
pub fn compare_runs(a: &RunReport, b: &RunReport) -> Result<Vec<DeltaRow>> {
    let dataset = |r: &RunReport| r.config_echo.get("dataset").cloned();
    if dataset(a) != dataset(b) {
        return Err(Error::Report("runs use different datasets".into()));
    }
    let models = |r: &RunReport| r.reports.iter().map(|s| s.model.clone()).collect::<BTreeSet<_>>();
    if models(a) != models(b) {
        return Err(Error::Report("runs use different model kinds".into()));
    }
    let find = |r: &'_ RunReport, m: &str, s: &str| r.reports.iter().find(|x| x.model == m && x.stage == s).cloned();
    let mut rows = Vec::new();
    let mut push = |ra: Option<&StageReport>, rb: Option<&StageReport>| {
        let base = ra.or(rb).expect("one side present");
        let va = ra.map(metric_values);
        let vb = rb.map(metric_values);
        for (k, (name, _)) in metric_values(base).iter().enumerate() {
            let x = va.as_ref().and_then(|v| v[k].1);
            let y = vb.as_ref().and_then(|v| v[k].1);
            let delta = match (x, y) {
                (Some(x), Some(y)) if x == y => Some(0.0),
                (Some(x), Some(y)) => Some(y - x),
                _ => None,
            };
            let status = match (ra, rb) {
                (Some(_), Some(_)) => DeltaStatus::Ok,
                (None, _) => DeltaStatus::MissingInA,
                (_, None) => DeltaStatus::MissingInB,
            };
            rows.push(DeltaRow {
                model: base.model.clone(),
                stage: base.stage.clone(),
                metric: (*name).to_string(),
                a: x,
                b: y,
                delta,
                status,
            });
        }
    };
    for ra in &a.reports {
        push(Some(ra), find(b, &ra.model, &ra.stage).as_ref());
    }
    for rb in &b.reports {
        if find(a, &rb.model, &rb.stage).is_none() {
            push(None, Some(rb));
        }
    }
    Ok(rows)
}

pub fn delta_csv(rows: &[DeltaRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "stage", "metric", "a", "b", "delta", "status"])?;
    for r in rows {
        let status = match r.status {
            DeltaStatus::Ok => "ok",
            DeltaStatus::MissingInA => "missing_in_a",
            DeltaStatus::MissingInB => "missing_in_b",
        };
        w.write_record([
            r.model.as_str(),
            r.stage.as_str(),
            r.metric.as_str(),
            &fmt_opt(r.a),
            &fmt_opt(r.b),
            &fmt_opt(r.delta),
            status,
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Report(e.to_string()))
}
