//! Training-time clip augmentation. Parameters are sampled once per clip and
//! applied in a fixed order: rotation, brightness/contrast, horizontal flip,
//! intensity quantization, Gaussian blur.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::record::Segment;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPolicy {
    /// Master switch; when false clips pass through untouched.
    pub enabled: bool,
    pub rotate: bool,
    /// Angles are drawn from `U(-max, max)` degrees.
    pub max_rotation_deg: f32,
    pub photometric: bool,
    /// Brightness shift drawn from `U(-max, max)`.
    pub max_brightness: f32,
    pub contrast_range: (f32, f32),
    pub flip: bool,
    pub flip_p: f32,
    /// Stand-in for lossy compression: snap intensities to one of these
    /// level counts, chosen uniformly.
    pub quantize: bool,
    pub quant_levels: Vec<u32>,
    pub blur: bool,
    pub blur_p: f32,
    pub max_blur_sigma: f32,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            enabled: true,
            rotate: true,
            max_rotation_deg: 25.0,
            photometric: true,
            max_brightness: 0.2,
            contrast_range: (0.8, 1.2),
            flip: true,
            flip_p: 0.5,
            quantize: true,
            quant_levels: vec![32, 64, 128],
            blur: true,
            blur_p: 0.5,
            max_blur_sigma: 1.0,
        }
    }
}

impl AugmentPolicy {
    pub fn disabled() -> Self {
        AugmentPolicy {
            enabled: false,
            ..Default::default()
        }
    }

    /// Only the horizontal flip, always applied.
    pub fn flip_only() -> Self {
        AugmentPolicy {
            rotate: false,
            photometric: false,
            flip_p: 1.0,
            quantize: false,
            blur: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f32| (0.0..=1.0).contains(&p);
        if !(self.max_rotation_deg >= 0.0)
            || !(self.max_brightness >= 0.0)
            || !(self.contrast_range.0 > 0.0 && self.contrast_range.0 <= self.contrast_range.1)
            || !prob(self.flip_p)
            || !prob(self.blur_p)
            || !(self.max_blur_sigma >= 0.0)
            || self.quant_levels.iter().any(|&l| l < 2)
            || (self.quantize && self.quant_levels.is_empty())
        {
            return Err(Error::Config(alloc::format!("invalid augmentation policy {self:?}")));
        }
        Ok(())
    }
}

/// Concrete parameters of one augmentation draw; disabled stages hold their
/// identity values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub angle_deg: f32,
    pub brightness: f32,
    pub contrast: f32,
    pub flip: bool,
    pub levels: Option<u32>,
    pub blur_sigma: Option<f32>,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        angle_deg: 0.0,
        brightness: 0.0,
        contrast: 1.0,
        flip: false,
        levels: None,
        blur_sigma: None,
    };

    /// Every draw is made whether or not its stage is enabled, so toggling one
    /// stage never shifts the values sampled for another.
    pub fn sample(policy: &AugmentPolicy, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let mut sym = |max: f32| if max > 0.0 { r.gen_range(-max..=max) } else { 0.0 };
        let angle = sym(policy.max_rotation_deg);
        let brightness = sym(policy.max_brightness);
        let (lo, hi) = policy.contrast_range;
        let contrast = if hi > lo { r.gen_range(lo..=hi) } else { lo };
        let flip = r.gen::<f32>() < policy.flip_p;
        let level_idx = r.gen_range(0..policy.quant_levels.len().max(1));
        let blur = r.gen::<f32>() < policy.blur_p;
        let sigma = r.gen::<f32>() * policy.max_blur_sigma;

        if !policy.enabled {
            return Self::IDENTITY;
        }
        AugmentParams {
            angle_deg: if policy.rotate { angle } else { 0.0 },
            brightness: if policy.photometric { brightness } else { 0.0 },
            contrast: if policy.photometric { contrast } else { 1.0 },
            flip: policy.flip && flip,
            levels: (policy.quantize && !policy.quant_levels.is_empty()).then(|| policy.quant_levels[level_idx]),
            blur_sigma: (policy.blur && blur).then_some(sigma),
        }
    }
}

/// Seed of one clip's augmentation in one epoch.
pub fn segment_seed(global: u64, epoch: usize, patient_id: &str, video_index: usize, segment_index: usize) -> u64 {
    rng::mix(&[
        global,
        epoch as u64,
        rng::hash_str(patient_id),
        video_index as u64,
        segment_index as u64,
    ])
}

/// Augments clip frames `[L, 1, H, W]` with parameters drawn from `seed`.
pub fn augment(frames: &Tensor, seed: u64, policy: &AugmentPolicy) -> Result<Tensor> {
    if !policy.enabled {
        return Ok(frames.clone());
    }
    apply(frames, &AugmentParams::sample(policy, seed))
}

pub fn augment_segment(segment: &Segment, seed: u64, policy: &AugmentPolicy) -> Result<Segment> {
    Ok(Segment {
        frames: augment(&segment.frames, seed, policy)?,
        ..segment.clone()
    })
}

/// Applies fixed parameters to every frame of a clip `[L, 1, H, W]`.
pub fn apply(frames: &Tensor, p: &AugmentParams) -> Result<Tensor> {
    let s = frames.shape();
    if s.len() != 4 || s[1] != 1 {
        return Err(Error::shape("augment", s, &[0, 1, 0, 0]));
    }
    let (h, w) = (s[2], s[3]);
    let mut out = Vec::with_capacity(frames.numel());
    let kernel = p.blur_sigma.and_then(gaussian_kernel);
    for src in frames.data().chunks_exact(h * w) {
        let mut f = if p.angle_deg != 0.0 {
            rotate(src, h, w, p.angle_deg)
        } else {
            src.to_vec()
        };
        if p.contrast != 1.0 || p.brightness != 0.0 {
            for v in &mut f {
                *v = (p.contrast * (*v - 0.5) + 0.5 + p.brightness).clamp(0.0, 1.0);
            }
        }
        if p.flip {
            f.chunks_exact_mut(w).for_each(|row| row.reverse());
        }
        if let Some(levels) = p.levels {
            let q = (levels - 1) as f32;
            for v in &mut f {
                *v = libm::roundf(*v * q) / q;
            }
        }
        if let Some(k) = &kernel {
            f = blur(&f, h, w, k);
        }
        out.extend(f.into_iter().map(|v| v.clamp(0.0, 1.0)));
    }
    Tensor::new(s, out)
}

/// Rotation about the frame center, bilinear, zero outside the source.
fn rotate(src: &[f32], h: usize, w: usize, angle_deg: f32) -> Vec<f32> {
    let (sin, cos) = libm::sincosf(angle_deg.to_radians());
    let (cy, cx) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
    let at = |y: isize, x: isize| {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            src[y as usize * w + x as usize]
        }
    };
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let (dy, dx) = (i as f32 - cy, j as f32 - cx);
            // inverse map: rotate the output coordinate back by -angle
            let y = cos * dy - sin * dx + cy;
            let x = sin * dy + cos * dx + cx;
            let (y0, x0) = (libm::floorf(y), libm::floorf(x));
            let (fy, fx) = (y - y0, x - x0);
            let (y0, x0) = (y0 as isize, x0 as isize);
            let v = at(y0, x0) * (1.0 - fy) * (1.0 - fx)
                + at(y0, x0 + 1) * (1.0 - fy) * fx
                + at(y0 + 1, x0) * fy * (1.0 - fx)
                + at(y0 + 1, x0 + 1) * fy * fx;
            out.push(v);
        }
    }
    out
}

/// Normalized 1D Gaussian taps with radius `ceil(3σ)`; `None` for σ so small
/// that the blur is the identity.
fn gaussian_kernel(sigma: f32) -> Option<Vec<f32>> {
    if sigma < 1e-3 {
        return None;
    }
    let radius = libm::ceilf(3.0 * sigma) as isize;
    let taps: Vec<f32> = (-radius..=radius)
        .map(|i| libm::expf(-((i * i) as f32) / (2.0 * sigma * sigma)))
        .collect();
    let total: f32 = taps.iter().sum();
    Some(taps.into_iter().map(|t| t / total).collect())
}

/// Separable convolution with clamped borders.
fn blur(src: &[f32], h: usize, w: usize, k: &[f32]) -> Vec<f32> {
    let r = (k.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * src[y * w + clamp(x as isize + t as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * tmp[clamp(y as isize + t as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}
