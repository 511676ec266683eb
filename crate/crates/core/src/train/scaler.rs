use crate::error::{Error, Result};

/// Affine target normalization fitted on training weights. The identity
/// scaler trains directly on grams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScaler {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaler {
    pub const IDENTITY: TargetScaler = TargetScaler { mean: 0.0, std: 1.0 };

    /// z-score parameters of `weights` (population std); a zero spread falls
    /// back to unit scale so a single patient can still be fitted.
    pub fn fit(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("no training targets".into()));
        }
        let n = weights.len() as f64;
        let mean = weights.iter().sum::<f64>() / n;
        let var = weights.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n;
        let std = libm::sqrt(var);
        Ok(TargetScaler {
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        })
    }

    pub fn transform(&self, w: f64) -> f64 {
        (w - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}
