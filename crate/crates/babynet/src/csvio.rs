//! Comma-separated outputs: per-patient predictions, per-epoch losses and
//! external estimates. Floats are written in their shortest round-trip form.

use std::fs;
use std::path::Path;

use babynet_core::train::{LossRow, PredictionRow};

use crate::error::{Error, Result};

pub const PREDICTIONS_HEADER: [&str; 4] = ["patient_id", "target_g", "pred_g", "fold"];
pub const ENSEMBLE_HEADER: [&str; 6] = ["patient_id", "target_g", "pred_g", "fold", "estimate_g", "ensemble_g"];
pub const LOSS_HEADER: [&str; 3] = ["epoch", "lr", "train_mse"];
pub const ESTIMATES_HEADER: [&str; 2] = ["patient_id", "estimate_g"];

/// A predictions file row; `fold` is empty for models not trained within
/// cross-validation, `ensemble` is present only when external estimates
/// were supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLine {
    pub patient_id: String,
    pub target_g: f32,
    pub pred_g: f32,
    pub fold: Option<usize>,
    /// `(estimate_g, ensemble_g)`
    pub ensemble: Option<(f32, f64)>,
}

impl From<&PredictionRow> for PredictionLine {
    fn from(r: &PredictionRow) -> Self {
        PredictionLine {
            patient_id: r.patient_id.clone(),
            target_g: r.target_g,
            pred_g: r.pred_g,
            fold: Some(r.fold),
            ensemble: None,
        }
    }
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::parse(path, e.to_string())
}

pub fn write_predictions(path: &Path, rows: &[PredictionLine]) -> Result<()> {
    let with_ensemble = rows.iter().any(|r| r.ensemble.is_some());
    let mut w = writer(path)?;
    let err = csv_err(path);
    if with_ensemble {
        w.write_record(ENSEMBLE_HEADER).map_err(&err)?;
    } else {
        w.write_record(PREDICTIONS_HEADER).map_err(&err)?;
    }
    for r in rows {
        let mut rec = vec![
            r.patient_id.clone(),
            r.target_g.to_string(),
            r.pred_g.to_string(),
            r.fold.map(|f| f.to_string()).unwrap_or_default(),
        ];
        if with_ensemble {
            let (est, ens) = r
                .ensemble
                .ok_or_else(|| Error::Usage(format!("patient {} lacks an ensemble value", r.patient_id)))?;
            rec.push(est.to_string());
            rec.push(ens.to_string());
        }
        w.write_record(&rec).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows(path: &Path, expected: &[&[&str]]) -> Result<(usize, Vec<csv::StringRecord>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    let which = expected
        .iter()
        .position(|h| header.iter().map(str::trim).eq(h.iter().copied()))
        .ok_or_else(|| Error::parse(path, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())))?;
    let rows = r.records().collect::<std::result::Result<Vec<_>, _>>().map_err(csv_err(path))?;
    Ok((which, rows))
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let line = rec.position().map(|p| p.line()).unwrap_or(0);
    let raw = rec.get(i).unwrap_or("").trim();
    raw.parse()
        .map_err(|_| Error::parse(path, format!("line {line}: bad {name} {raw:?}")))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionLine>> {
    let (which, rows) = read_rows(path, &[&PREDICTIONS_HEADER, &ENSEMBLE_HEADER])?;
    rows.iter()
        .map(|rec| {
            let fold = match rec.get(3).unwrap_or("").trim() {
                "" => None,
                _ => Some(field(path, rec, 3, "fold")?),
            };
            let ensemble = if which == 1 {
                Some((field(path, rec, 4, "estimate_g")?, field(path, rec, 5, "ensemble_g")?))
            } else {
                None
            };
            Ok(PredictionLine {
                patient_id: rec.get(0).unwrap_or("").trim().to_string(),
                target_g: field(path, rec, 1, "target_g")?,
                pred_g: field(path, rec, 2, "pred_g")?,
                fold,
                ensemble,
            })
        })
        .collect()
}

pub fn write_losses(path: &Path, rows: &[LossRow]) -> Result<()> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record(LOSS_HEADER).map_err(&err)?;
    for r in rows {
        w.write_record([r.epoch.to_string(), r.lr.to_string(), r.train_mse.to_string()])
            .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_losses(path: &Path) -> Result<Vec<LossRow>> {
    let (_, rows) = read_rows(path, &[&LOSS_HEADER])?;
    rows.iter()
        .map(|rec| {
            Ok(LossRow {
                epoch: field(path, rec, 0, "epoch")?,
                lr: field(path, rec, 1, "lr")?,
                train_mse: field(path, rec, 2, "train_mse")?,
            })
        })
        .collect()
}

pub fn read_estimates(path: &Path) -> Result<Vec<(String, f32)>> {
    let (_, rows) = read_rows(path, &[&ESTIMATES_HEADER])?;
    rows.iter()
        .map(|rec| {
            let id = rec.get(0).unwrap_or("").trim().to_string();
            let v: f32 = field(path, rec, 1, "estimate_g")?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::parse(path, format!("estimate {v} for {id} must be positive")));
            }
            Ok((id, v))
        })
        .collect()
}

pub fn write_estimates(path: &Path, rows: &[(String, f32)]) -> Result<()> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record(ESTIMATES_HEADER).map_err(&err)?;
    for (id, v) in rows {
        w.write_record([id.clone(), v.to_string()]).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
