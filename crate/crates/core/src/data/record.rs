use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ultrasound plane a video was acquired in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Plane {
    Head,
    Abdomen,
    Femur,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Head, Plane::Abdomen, Plane::Femur];

    pub fn as_str(self) -> &'static str {
        match self {
            Plane::Head => "head",
            Plane::Abdomen => "abdomen",
            Plane::Femur => "femur",
        }
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Plane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Plane::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown plane label {s:?}")))
    }
}

/// Single-channel video, frames `[T, 1, H, W]` with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    frames: Tensor,
    pub plane: Plane,
}

impl VideoTensor {
    pub fn new(frames: Tensor, plane: Plane) -> Result<Self> {
        let s = frames.shape();
        if s.len() != 4 || s[1] != 1 {
            return Err(Error::shape("video frames", s, &[0, 1, 0, 0]));
        }
        if let Some(v) = frames.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("video intensity {v} outside [0, 1]")));
        }
        Ok(VideoTensor { frames, plane })
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn into_frames(self) -> Tensor {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(H, W)`
    pub fn frame_size(&self) -> (usize, usize) {
        (self.frames.shape()[2], self.frames.shape()[3])
    }

    /// Frame `t` as a `[1, H, W]` slice of the underlying data.
    pub fn frame(&self, t: usize) -> &[f32] {
        let (h, w) = self.frame_size();
        &self.frames.data()[t * h * w..(t + 1) * h * w]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub patient_id: String,
    pub birth_weight_g: f32,
    pub videos: Vec<VideoTensor>,
}

impl PatientRecord {
    pub fn new(patient_id: impl Into<String>, birth_weight_g: f32, videos: Vec<VideoTensor>) -> Result<Self> {
        let patient_id = patient_id.into();
        validate_id(&patient_id)?;
        if birth_weight_g <= 0.0 || !birth_weight_g.is_finite() {
            return Err(Error::invalid(format!(
                "patient {patient_id}: birth weight {birth_weight_g} must be positive"
            )));
        }
        if videos.is_empty() {
            return Err(Error::invalid(format!("patient {patient_id} has no videos")));
        }
        Ok(PatientRecord {
            patient_id,
            birth_weight_g,
            videos,
        })
    }
}

/// Identifiers end up in comma-separated files, so they must be non-empty and
/// free of separators and whitespace.
pub fn validate_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(|c| c == ',' || c == ':' || c.is_whitespace()) {
        return Err(Error::invalid(format!("invalid patient id {id:?}")));
    }
    Ok(())
}

/// Fixed-length clip cut from one video: frames `[L, 1, h, w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub frames: Tensor,
    pub patient_id: String,
    pub video_index: usize,
    pub segment_index: usize,
}

impl Segment {
    /// The clip as one model input item, `[1, L, h, w]`.
    pub fn as_item(&self) -> Tensor {
        let s = self.frames.shape();
        self.frames
            .clone()
            .reshape(&[1, s[0], s[2], s[3]])
            .expect("same element count")
    }
}
