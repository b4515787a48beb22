//! Side-by-side model comparison: cross-validated AUROC plus the
//! risk/coverage of the induced intervention groups.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::cv::CvReport;
use super::policy::InterventionMetrics;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub service: String,
    pub model: String,
    pub auroc_mean: Option<f64>,
    pub auroc_std: Option<f64>,
    pub risk: f64,
    pub coverage: f64,
}

impl ComparisonRow {
    /// `Service | Model | Risk | Coverage` with whole percentages.
    pub fn render(&self) -> String {
        format!(
            "{} | {} | {} | {}",
            self.service,
            self.model,
            percent(self.risk),
            percent(self.coverage)
        )
    }
}

fn percent(x: f64) -> String {
    format!("{:.0}%", x * 100.0)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn render_lines(&self) -> Vec<String> {
        self.rows.iter().map(ComparisonRow::render).collect()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["service", "model", "auroc_mean", "auroc_std", "risk", "coverage"])?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.service.clone(),
                r.model.clone(),
                opt(r.auroc_mean),
                opt(r.auroc_std),
                r.risk.to_string(),
                r.coverage.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Service | Model | Risk | Coverage")?;
        for line in self.render_lines() {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// Split a `service/model` tag. Tags without a service go under `ALL`.
pub fn split_tag(tag: &str) -> (String, String) {
    match tag.split_once('/') {
        Some((s, m)) => (s.to_string(), m.to_string()),
        None => ("ALL".to_string(), tag.to_string()),
    }
}

/// Pair each CV report with the intervention metrics of the same tag.
pub fn compare_models(reports: &[CvReport], metrics: &[(String, InterventionMetrics)]) -> Result<ComparisonTable> {
    if reports.len() != metrics.len() {
        return Err(Error::Validation(format!(
            "{} reports but {} metric sets",
            reports.len(),
            metrics.len()
        )));
    }
    let rows = reports
        .iter()
        .zip(metrics)
        .map(|(report, (tag, m))| {
            if &report.model_tag != tag {
                return Err(Error::Validation(format!(
                    "model tag mismatch: report {:?} vs metrics {:?}",
                    report.model_tag, tag
                )));
            }
            let (service, model) = split_tag(tag);
            Ok(ComparisonRow {
                service,
                model,
                auroc_mean: Some(report.mean),
                auroc_std: Some(report.std),
                risk: m.risk,
                coverage: m.coverage,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonTable { rows })
}
