use alloc::vec::Vec;
use alloc::string::String;

use crate::data::PatientRecord;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::rng;
use crate::train::folds::{grouped_kfold_split, FoldAssignment};
use crate::train::metrics::{evaluate_metrics, mean_std, Metrics};
use crate::train::trainer::{patient_ids, predict_patient, train, LossRow, TrainConfig};
use crate::train::scaler::TargetScaler;

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub k: usize,
    /// Seed of the fold assignment; per-fold model and training seeds are
    /// derived from the model and training configs.
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// One out-of-fold patient prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub patient_id: String,
    pub target_g: f32,
    pub pred_g: f32,
    pub fold: usize,
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub model: Model,
    pub scaler: TargetScaler,
    pub losses: Vec<LossRow>,
    pub predictions: Vec<PredictionRow>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub folds: Vec<Metrics>,
    /// Pooled over every out-of-fold prediction.
    pub overall: Metrics,
    /// Mean and std across folds of MAE, RMSE and MAPE.
    pub fold_mae: (f64, f64),
    pub fold_rmse: (f64, f64),
    pub fold_mape: (f64, f64),
    pub predictions: Vec<PredictionRow>,
}

impl MetricsReport {
    /// Rebuilds the report from its per-patient table.
    pub fn from_predictions(mut predictions: Vec<PredictionRow>) -> Result<Self> {
        if predictions.is_empty() {
            return Err(Error::Empty("no out-of-fold predictions".into()));
        }
        predictions.sort_by(|a, b| a.fold.cmp(&b.fold).then_with(|| a.patient_id.cmp(&b.patient_id)));
        let k = predictions.iter().map(|r| r.fold).max().unwrap_or(0) + 1;
        let score = |rows: &[&PredictionRow]| {
            let p: Vec<f64> = rows.iter().map(|r| r.pred_g as f64).collect();
            let t: Vec<f64> = rows.iter().map(|r| r.target_g as f64).collect();
            evaluate_metrics(&p, &t)
        };
        let mut folds = Vec::with_capacity(k);
        for f in 0..k {
            let rows: Vec<&PredictionRow> = predictions.iter().filter(|r| r.fold == f).collect();
            if !rows.is_empty() {
                folds.push(score(&rows)?);
            }
        }
        let overall = score(&predictions.iter().collect::<Vec<_>>())?;
        let pick = |f: fn(&Metrics) -> f64| mean_std(&folds.iter().map(f).collect::<Vec<_>>());
        Ok(MetricsReport {
            fold_mae: pick(|m| m.mae),
            fold_rmse: pick(|m| m.rmse),
            fold_mape: pick(|m| m.mape),
            folds,
            overall,
            predictions,
        })
    }
}

/// Fold assignment for a cohort.
pub fn assign_folds(records: &[PatientRecord], config: &CvConfig) -> Result<FoldAssignment> {
    grouped_kfold_split(&patient_ids(records), config.k, config.seed)
}

/// Trains on every fold but `fold` and predicts the held-out patients.
/// Records must already match the model's frame size.
pub fn run_fold(
    records: &[PatientRecord],
    assignment: &FoldAssignment,
    fold: usize,
    config: &CvConfig,
) -> Result<FoldResult> {
    let held = assignment
        .folds
        .get(fold)
        .ok_or_else(|| Error::invalid(alloc::format!("fold {fold} out of range")))?;
    let (test, train_set): (Vec<PatientRecord>, Vec<PatientRecord>) =
        records.iter().cloned().partition(|r| held.contains(&r.patient_id));
    let mut model_config = config.model.clone();
    model_config.seed = rng::mix(&[config.model.seed, fold as u64]);
    let mut train_config = config.train.clone();
    train_config.seed = rng::mix(&[config.train.seed, fold as u64]);
    let mut model = Model::build(model_config)?;
    let outcome = train(&mut model, &train_set, &train_config)?;
    let predictions = test
        .iter()
        .map(|r| {
            Ok(PredictionRow {
                patient_id: r.patient_id.clone(),
                target_g: r.birth_weight_g,
                pred_g: predict_patient(&model, &outcome.scaler, r)?,
                fold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let metrics = evaluate_metrics(
        &predictions.iter().map(|r| r.pred_g as f64).collect::<Vec<_>>(),
        &predictions.iter().map(|r| r.target_g as f64).collect::<Vec<_>>(),
    )?;
    Ok(FoldResult {
        fold,
        model,
        scaler: outcome.scaler,
        losses: outcome.losses,
        predictions,
        metrics,
    })
}

/// Sequential K-fold cross-validation.
pub fn run_cross_validation(records: &[PatientRecord], config: &CvConfig) -> Result<(MetricsReport, Vec<FoldResult>)> {
    let assignment = assign_folds(records, config)?;
    let folds = (0..config.k)
        .map(|f| run_fold(records, &assignment, f, config))
        .collect::<Result<Vec<_>>>()?;
    let rows = folds.iter().flat_map(|f| f.predictions.iter().cloned()).collect();
    Ok((MetricsReport::from_predictions(rows)?, folds))
}
