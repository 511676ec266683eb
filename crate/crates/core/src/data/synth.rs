//! Synthetic ultrasound-like clips with a planted weight signal: each frame
//! shows a filled ellipse whose size grows linearly with the patient's birth
//! weight, drifting in position from frame to frame under Gaussian noise.
//!
//! Mean radius (pixels) as a function of weight `g` in grams:
//!
//! ```text
//! t(g) = (g - 2085) / (4995 - 2085)
//! r(g) = (1 - t) · r_lo + t · r_hi
//! ```
//!
//! The ellipse has semi-axes `1.2·r` (horizontal) and `0.8·r` (vertical), so
//! its area is `0.96·π·r²`.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::record::{PatientRecord, Plane, VideoTensor};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

pub const WEIGHT_MIN_G: f32 = 2085.0;
pub const WEIGHT_MAX_G: f32 = 4995.0;

pub const AXIS_X: f32 = 1.2;
pub const AXIS_Y: f32 = 0.8;

const BACKGROUND: f32 = 0.1;
/// Supersampling grid per pixel axis used for anti-aliased coverage.
const SUBSAMPLES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_patients: usize,
    pub videos_per_patient: usize,
    pub frames_per_video: usize,
    pub height: usize,
    pub width: usize,
    /// Standard deviation of the additive pixel noise.
    pub noise_sigma: f32,
    pub seed: u64,
    pub weight_range: (f32, f32),
    /// Mean radius in pixels at the lower and upper ends of the weight range.
    pub radius_at_min: f32,
    pub radius_at_max: f32,
    /// Maximum per-frame displacement of the ellipse center, pixels.
    pub jitter: f32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self::sized(15, 64, 64)
    }
}

impl SyntheticConfig {
    /// Defaults for `num_patients` patients and `height × width` frames: one
    /// video per plane, 32 frames each, radii spanning 10–30 % of the shorter
    /// side.
    pub fn sized(num_patients: usize, height: usize, width: usize) -> Self {
        let side = height.min(width) as f32;
        SyntheticConfig {
            num_patients,
            videos_per_patient: 3,
            frames_per_video: 32,
            height,
            width,
            noise_sigma: 0.01,
            seed: 0,
            weight_range: (WEIGHT_MIN_G, WEIGHT_MAX_G),
            radius_at_min: 0.1 * side,
            radius_at_max: 0.3 * side,
            jitter: 0.1 * side,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.weight_range;
        let bad = |msg: &str| Err(Error::Config(format!("synthetic config: {msg}")));
        if self.num_patients == 0 || self.videos_per_patient == 0 || self.frames_per_video == 0 {
            return bad("patient, video and frame counts must be positive");
        }
        if self.height == 0 || self.width == 0 {
            return bad("frame size must be positive");
        }
        if !(lo > 0.0 && lo <= hi) {
            return bad("weight range must be positive and ordered");
        }
        if !(self.noise_sigma >= 0.0) || !(self.jitter >= 0.0) {
            return bad("noise and jitter must be non-negative");
        }
        if !(self.radius_at_min > 0.0 && self.radius_at_max > 0.0) {
            return bad("radii must be positive");
        }
        Ok(())
    }

    /// Mean ellipse radius for a birth weight, pixels.
    pub fn radius_for_weight(&self, weight_g: f32) -> f32 {
        let (lo, hi) = (WEIGHT_MIN_G, WEIGHT_MAX_G);
        let t = (weight_g - lo) / (hi - lo);
        (1.0 - t) * self.radius_at_min + t * self.radius_at_max
    }
}

fn foreground(plane: Plane) -> f32 {
    match plane {
        Plane::Head => 0.8,
        Plane::Abdomen => 0.7,
        Plane::Femur => 0.9,
    }
}

/// Anti-aliased ellipse coverage on an `h × w` grid, values in `[0, 1]`.
pub fn ellipse_coverage(h: usize, w: usize, cy: f32, cx: f32, ry: f32, rx: f32) -> Vec<f32> {
    let step = 1.0 / SUBSAMPLES as f32;
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let mut hits = 0;
            for si in 0..SUBSAMPLES {
                let dy = (i as f32 - 0.5 + (si as f32 + 0.5) * step - cy) / ry;
                for sj in 0..SUBSAMPLES {
                    let dx = (j as f32 - 0.5 + (sj as f32 + 0.5) * step - cx) / rx;
                    hits += (dx * dx + dy * dy <= 1.0) as usize;
                }
            }
            out.push(hits as f32 / (SUBSAMPLES * SUBSAMPLES) as f32);
        }
    }
    out
}

/// Foreground area of a frame rendered by this generator, estimated from its
/// intensities, in square pixels.
pub fn foreground_area(frame: &[f32], plane: Plane) -> f32 {
    let fg = foreground(plane);
    frame.iter().map(|&v| (v - BACKGROUND) / (fg - BACKGROUND)).sum()
}

/// Builds the synthetic cohort. Patient `i` is named `P{i+1:03}`; videos
/// cycle through head, abdomen and femur planes.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<PatientRecord>> {
    config.validate()?;
    let (h, w) = (config.height, config.width);
    let mut records = Vec::with_capacity(config.num_patients);
    for p in 0..config.num_patients {
        let id = format!("P{:03}", p + 1);
        let mut r = rng::seeded(rng::mix(&[config.seed, p as u64]));
        let (lo, hi) = config.weight_range;
        let weight = libm::roundf(if hi > lo { r.gen_range(lo..=hi) } else { lo }).clamp(lo, hi);
        let radius = config.radius_for_weight(weight);
        let mut videos = Vec::with_capacity(config.videos_per_patient);
        for v in 0..config.videos_per_patient {
            let plane = Plane::ALL[v % Plane::ALL.len()];
            let fg = foreground(plane);
            let mut data = Vec::with_capacity(config.frames_per_video * h * w);
            for _ in 0..config.frames_per_video {
                let mut jit = || {
                    if config.jitter > 0.0 {
                        r.gen_range(-config.jitter..=config.jitter)
                    } else {
                        0.0
                    }
                };
                let cy = (h as f32 - 1.0) / 2.0 + jit();
                let cx = (w as f32 - 1.0) / 2.0 + jit();
                let cover = ellipse_coverage(h, w, cy, cx, AXIS_Y * radius, AXIS_X * radius);
                for c in cover {
                    let noise = if config.noise_sigma > 0.0 {
                        config.noise_sigma * rng::standard_normal(&mut r)
                    } else {
                        0.0
                    };
                    data.push((BACKGROUND + c * (fg - BACKGROUND) + noise).clamp(0.0, 1.0));
                }
            }
            let frames = Tensor::new(&[config.frames_per_video, 1, h, w], data)?;
            videos.push(VideoTensor::new(frames, plane)?);
        }
        records.push(PatientRecord::new(id, weight, videos)?);
    }
    Ok(records)
}
