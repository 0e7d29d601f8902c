use super::{gap, round2};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;

pub const REPORT_SCHEMA: &str = "report.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub sequence: String,
    pub index: usize,
    pub mpjpe_mm: f64,
    pub pa_mpjpe_mm: f64,
}

/// Echo of the run that produced the predictions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Row label in grid tables, typically the teacher used for the run.
    pub label: String,
    pub sigma: Option<f64>,
    pub epochs: Option<usize>,
    pub weights_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub frames: usize,
    pub mean_mpjpe_mm: f64,
    pub mean_pa_mpjpe_mm: f64,
    pub baseline_mm: Option<f64>,
    pub gap_vs_initial_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: String,
    pub config: ReportConfig,
    pub aggregate: Aggregate,
    pub per_frame: Vec<FrameMetrics>,
}

/// Aggregates per-frame errors (left-to-right sums) and the gap to `baseline_mm`.
pub fn build_report(
    per_frame: Vec<FrameMetrics>,
    config: ReportConfig,
    baseline_mm: Option<f64>,
) -> Result<MetricsReport> {
    if per_frame.is_empty() {
        return Err(Error::Data("cannot build a report from zero frames".into()));
    }
    let n = per_frame.len() as f64;
    let mut sum = 0.0;
    let mut sum_pa = 0.0;
    for f in &per_frame {
        sum += f.mpjpe_mm;
        sum_pa += f.pa_mpjpe_mm;
    }
    let mean = sum / n;
    Ok(MetricsReport {
        schema: REPORT_SCHEMA.into(),
        config,
        aggregate: Aggregate {
            frames: per_frame.len(),
            mean_mpjpe_mm: mean,
            mean_pa_mpjpe_mm: sum_pa / n,
            baseline_mm,
            gap_vs_initial_mm: baseline_mm.map(|b| gap(b, mean)),
        },
        per_frame,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.schema != REPORT_SCHEMA {
            return Err(Error::Format {
                line: 1,
                message: format!("expected schema {REPORT_SCHEMA}, found {}", r.schema),
            });
        }
        Ok(r)
    }

    /// Per-frame table: `sequence,index,mpjpe_mm,pa_mpjpe_mm`.
    pub fn per_frame_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for f in &self.per_frame {
            w.serialize(f)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn fmt_sigma(s: f64) -> String {
    if s.fract() == 0.0 {
        format!("{s:.0}")
    } else {
        format!("{s}")
    }
}

/// Table with one row per run label and one `(MPJPE, gap)` column pair per
/// `(epochs, sigma)` bucket, both ascending.
pub fn report_grid_csv(reports: &[MetricsReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Data("no reports to tabulate".into()));
    }
    let key = |r: &MetricsReport| {
        (
            r.config.epochs.unwrap_or(0),
            ordered(r.config.sigma.unwrap_or(0.0)),
        )
    };
    let columns: BTreeSet<(usize, u64)> = reports.iter().map(key).collect();
    let mut labels: Vec<&str> = Vec::new();
    for r in reports {
        if !labels.contains(&r.config.label.as_str()) {
            labels.push(&r.config.label);
        }
    }

    let mut out = String::from("label");
    for (ep, s) in &columns {
        let s = fmt_sigma(f64::from_bits(*s));
        write!(out, ",ep{ep}_s{s}_mpjpe,ep{ep}_s{s}_gap").unwrap();
    }
    out.push('\n');
    for label in labels {
        out.push_str(label);
        for col in &columns {
            match reports.iter().find(|r| r.config.label == label && key(r) == *col) {
                Some(r) => {
                    let gap = r
                        .aggregate
                        .gap_vs_initial_mm
                        .map(|g| format!("{g:.2}"))
                        .unwrap_or_default();
                    write!(out, ",{:.2},{gap}", round2(r.aggregate.mean_mpjpe_mm)).unwrap();
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

// Non-negative floats order like their bit patterns.
fn ordered(x: f64) -> u64 {
    x.max(0.0).to_bits()
}
