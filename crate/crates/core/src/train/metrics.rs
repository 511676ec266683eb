use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Patient-level error summary. Spreads are population standard deviations
/// across patients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    /// Percent.
    pub mape: f64,
    pub abs_error_std: f64,
    pub ape_std: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pop_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    libm::sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64)
}

pub fn evaluate_metrics(preds: &[f64], targets: &[f64]) -> Result<Metrics> {
    if preds.is_empty() {
        return Err(Error::Empty("no predictions to score".into()));
    }
    if preds.len() != targets.len() {
        return Err(Error::shape("evaluate_metrics", &[preds.len()], &[targets.len()]));
    }
    if let Some(t) = targets.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::invalid(format!("target {t} must be positive")));
    }
    let abs: Vec<f64> = preds.iter().zip(targets).map(|(p, t)| libm::fabs(p - t)).collect();
    let ape: Vec<f64> = abs.iter().zip(targets).map(|(e, t)| 100.0 * e / t).collect();
    let sq: Vec<f64> = abs.iter().map(|e| e * e).collect();
    Ok(Metrics {
        n: preds.len(),
        mae: mean(&abs),
        rmse: libm::sqrt(mean(&sq)),
        mape: mean(&ape),
        abs_error_std: pop_std(&abs),
        ape_std: pop_std(&ape),
    })
}

/// Mean and population std of one metric across folds.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    (mean(values), pop_std(values))
}

/// Per-patient mean of two estimates, in the order of `a`. Both inputs must
/// cover the same patients exactly once. For `f32`-representable inputs the
/// mean is exact.
pub fn ensemble_average(a: &[(String, f64)], b: &[(String, f64)]) -> Result<Vec<(String, f64)>> {
    let mut lookup = BTreeMap::new();
    for (id, v) in b {
        if lookup.insert(id.as_str(), *v).is_some() {
            return Err(Error::invalid(format!("patient {id} listed twice")));
        }
    }
    if let Some((id, _)) = b.iter().find(|(id, _)| !a.iter().any(|(x, _)| x == id)) {
        return Err(Error::invalid(format!("estimate given for unknown patient {id}")));
    }
    a.iter()
        .map(|(id, x)| match lookup.get(id.as_str()) {
            Some(y) => Ok((id.clone(), (x + y) / 2.0)),
            None => Err(Error::invalid(format!("patient {id} has no external estimate"))),
        })
        .collect()
}
