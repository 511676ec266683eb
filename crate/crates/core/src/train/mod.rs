//! Optimization, cross-validation and evaluation.

mod cv;
mod folds;
mod metrics;
mod optim;
mod scaler;
mod stats;
mod trainer;

pub use cv::{assign_folds, run_cross_validation, run_fold, CvConfig, FoldResult, MetricsReport, PredictionRow};
pub use folds::{grouped_kfold_split, FoldAssignment};
pub use metrics::{ensemble_average, evaluate_metrics, mean_std, Metrics};
pub use optim::{Adam, AdamConfig, LrSchedule};
pub use scaler::TargetScaler;
pub use stats::{paired_t_test, regularized_incomplete_beta, student_t_cdf, student_t_two_sided, TTest};
pub use trainer::{
    batch_ranges, mean_prediction, patient_ids, predict_patient, predict_segments, prepare_records, stack_segments,
    train, train_with, LossRow, TrainConfig, TrainOutcome,
};

use crate::autodiff::Graph;
use crate::error::Result;
use crate::tensor::Tensor;

/// Mean squared error of two equal-shape tensors, as a plain number.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f32> {
    let mut g = Graph::new();
    let (p, t) = (g.constant(pred.clone()), g.constant(target.clone()));
    let loss = g.mse_loss(p, t)?;
    Ok(g.value(loss).data()[0])
}
