use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::autodiff::{Graph, Mode};
use crate::data::{augment_segment, patient_segments, resize_video, segment_seed, AugmentPolicy, PatientRecord, Segment};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::rng;
use crate::tensor::Tensor;
use crate::train::optim::{Adam, AdamConfig, LrSchedule};
use crate::train::scaler::TargetScaler;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// `schedule.epochs` is the training budget.
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    pub augment: AugmentPolicy,
    pub seed: u64,
    /// Train on grams directly instead of z-scored targets.
    pub raw_targets: bool,
    /// Use this scaler instead of fitting one to the training weights.
    pub scaler: Option<TargetScaler>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 2,
            schedule: LrSchedule::default(),
            adam: AdamConfig::default(),
            augment: AugmentPolicy::default(),
            seed: 0,
            raw_targets: false,
            scaler: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if let Some(s) = self.scaler {
            if !(s.std > 0.0 && s.std.is_finite() && s.mean.is_finite()) {
                return Err(Error::Config(format!("invalid target scaler {s:?}")));
            }
        }
        self.schedule.validate()?;
        self.adam.validate()?;
        self.augment.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub epoch: usize,
    pub lr: f32,
    /// Mean squared error over the epoch's training segments, in the scaled
    /// target space, measured on the fly before each update.
    pub train_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub scaler: TargetScaler,
    pub losses: Vec<LossRow>,
}

/// Brings every video to the model's frame size.
pub fn prepare_records(records: &[PatientRecord], config: &ModelConfig) -> Result<Vec<PatientRecord>> {
    let target = (config.in_height, config.in_width);
    records
        .iter()
        .map(|r| {
            let videos = r.videos.iter().map(|v| resize_video(v, target)).collect::<Result<_>>()?;
            PatientRecord::new(r.patient_id.clone(), r.birth_weight_g, videos)
        })
        .collect()
}

/// Stacks clips into a model batch `[N, 1, L, h, w]`.
pub fn stack_segments(segments: &[&Segment]) -> Result<Tensor> {
    let first = segments.first().ok_or_else(|| Error::Empty("no segments to batch".into()))?;
    let s = first.frames.shape();
    let mut data = Vec::with_capacity(segments.len() * first.frames.numel());
    for seg in segments {
        if seg.frames.shape() != s {
            return Err(Error::shape("stack_segments", seg.frames.shape(), s));
        }
        data.extend_from_slice(seg.frames.data());
    }
    Tensor::new(&[segments.len(), 1, s[0], s[2], s[3]], data)
}

/// Consecutive batches of `size` indices; a trailing singleton joins the
/// previous batch so no batch-norm step sees a single clip.
pub fn batch_ranges(len: usize, size: usize) -> Vec<core::ops::Range<usize>> {
    let mut out: Vec<_> = (0..len).step_by(size.max(1)).map(|s| s..(s + size).min(len)).collect();
    if size > 1 && out.len() > 1 && out.last().is_some_and(|r| r.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().end = last.end;
    }
    out
}

/// Trains `model` on the clips of `records`. Records must already match the
/// model's frame size (see [`prepare_records`]).
pub fn train(model: &mut Model, records: &[PatientRecord], config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(model, records, config, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with(
    model: &mut Model,
    records: &[PatientRecord],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&LossRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::Empty("training fold has no patients".into()));
    }
    let weights: Vec<f64> = records.iter().map(|r| r.birth_weight_g as f64).collect();
    let scaler = match (config.raw_targets, config.scaler) {
        (true, _) => TargetScaler::IDENTITY,
        (false, Some(s)) => s,
        (false, None) => TargetScaler::fit(&weights)?,
    };
    let mut items: Vec<(Segment, f32)> = Vec::new();
    for (r, w) in records.iter().zip(&weights) {
        let target = scaler.transform(*w) as f32;
        items.extend(patient_segments(r, model.config.in_frames)?.into_iter().map(|s| (s, target)));
    }
    if items.is_empty() {
        return Err(Error::Empty(format!(
            "training patients yield no {}-frame segments",
            model.config.in_frames
        )));
    }

    let mut adam = Adam::new(config.adam);
    let mut losses = Vec::with_capacity(config.schedule.epochs);
    let mut order: Vec<usize> = (0..items.len()).collect();
    for epoch in 0..config.schedule.epochs {
        let lr = config.schedule.lr_at(epoch);
        order.shuffle(&mut rng::seeded(rng::mix(&[config.seed, epoch as u64, 0x5EF1])));
        let mut sq_sum = 0.0f64;
        for range in batch_ranges(order.len(), config.batch_size) {
            let mut segs = Vec::with_capacity(range.len());
            let mut targets = Vec::with_capacity(range.len());
            for &i in &order[range] {
                let (seg, target) = &items[i];
                let seed = segment_seed(config.seed, epoch, &seg.patient_id, seg.video_index, seg.segment_index);
                segs.push(augment_segment(seg, seed, &config.augment)?);
                targets.push(*target);
            }
            let input = stack_segments(&segs.iter().collect::<Vec<_>>())?;
            let n = targets.len();
            sq_sum += step(model, &mut adam, input, Tensor::new(&[n, 1], targets)?, lr)? * n as f64;
        }
        let row = LossRow {
            epoch,
            lr,
            train_mse: sq_sum / items.len() as f64,
        };
        if !row.train_mse.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        on_epoch(&row);
        losses.push(row);
    }
    Ok(TrainOutcome { scaler, losses })
}

/// One optimizer update on a batch; returns the batch loss.
fn step(model: &mut Model, adam: &mut Adam, input: Tensor, target: Tensor, lr: f32) -> Result<f64> {
    let mut g = Graph::new();
    let x = g.constant(input);
    let out = model.forward(&mut g, x, Mode::Train)?;
    let y = g.constant(target);
    let loss = g.mse_loss(out.prediction, y)?;
    let value = g.value(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    g.backward(loss)?;
    model.params.zero_grad();
    model.params.accumulate_grads(&g, &out.vars)?;
    adam.step(&mut model.params.params, lr)?;
    model.params.zero_grad();
    model.apply_moments(&out.moments);
    Ok(value as f64)
}

/// Eval-mode predictions of clips, in the scaled target space.
pub fn predict_segments(model: &Model, segments: &[Segment]) -> Result<Vec<f64>> {
    const CHUNK: usize = 8;
    let mut out = Vec::with_capacity(segments.len());
    for chunk in segments.chunks(CHUNK) {
        let input = stack_segments(&chunk.iter().collect::<Vec<_>>())?;
        out.extend(model.predict(&input)?.data().iter().map(|&v| v as f64));
    }
    Ok(out)
}

/// Arithmetic mean of segment-level predictions.
pub fn mean_prediction(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("no segment predictions".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Patient estimate in grams: the mean of the patient's segment predictions
/// over all videos, mapped back through `scaler`. The mean is accumulated in
/// `f64` and reported at the model's `f32` precision.
pub fn predict_patient(model: &Model, scaler: &TargetScaler, record: &PatientRecord) -> Result<f32> {
    let segments = patient_segments(record, model.config.in_frames)?;
    if segments.is_empty() {
        return Err(Error::Empty(format!(
            "patient {} has no {}-frame segments",
            record.patient_id, model.config.in_frames
        )));
    }
    let grams: Vec<f64> = predict_segments(model, &segments)?
        .into_iter()
        .map(|z| scaler.inverse(z))
        .collect();
    Ok(mean_prediction(&grams)? as f32)
}

/// Convenience for collecting ids.
pub fn patient_ids(records: &[PatientRecord]) -> Vec<String> {
    records.iter().map(|r| r.patient_id.clone()).collect()
}
