//! Cross-validation report files.

use std::fs;
use std::path::Path;

use babynet_core::train::{Metrics, MetricsReport};
use serde::Serialize;

use crate::cli::{compare_variants, VariantOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Serialize)]
struct MetricsJson {
    n: usize,
    mae: f64,
    mae_std: f64,
    rmse: f64,
    mape: f64,
    mape_std: f64,
}

impl From<&Metrics> for MetricsJson {
    fn from(m: &Metrics) -> Self {
        MetricsJson {
            n: m.n,
            mae: m.mae,
            mae_std: m.abs_error_std,
            rmse: m.rmse,
            mape: m.mape,
            mape_std: m.ape_std,
        }
    }
}

#[derive(Debug, Serialize)]
struct ReportJson {
    overall: MetricsJson,
    folds: Vec<MetricsJson>,
    /// `[mean, std]` across folds.
    fold_mae: [f64; 2],
    fold_rmse: [f64; 2],
    fold_mape: [f64; 2],
}

pub fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    let json = ReportJson {
        overall: (&report.overall).into(),
        folds: report.folds.iter().map(MetricsJson::from).collect(),
        fold_mae: report.fold_mae.into(),
        fold_rmse: report.fold_rmse.into(),
        fold_mape: report.fold_mape.into(),
    };
    let text = serde_json::to_string_pretty(&json).map_err(|e| Error::parse(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// One row per variant; the last column is the paired t-test p-value of the
/// per-patient absolute percentage errors against the last variant listed.
pub fn write_summary(path: &Path, outcomes: &[VariantOutcome]) -> Result<()> {
    let mut text = String::from("variant,n,mae,mae_std,rmse,mape,mape_std,p_value\n");
    let reference = outcomes.last();
    for o in outcomes {
        let m = &o.report.overall;
        let p = match reference {
            Some(r) if r.variant != o.variant => match compare_variants(&o.report, &r.report) {
                Ok(t) => t.p.to_string(),
                Err(_) => String::new(),
            },
            _ => String::new(),
        };
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            o.variant.as_str(),
            m.n,
            m.mae,
            m.abs_error_std,
            m.rmse,
            m.mape,
            m.ape_std,
            p
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
