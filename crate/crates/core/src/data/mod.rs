//! Patient records, clip extraction, augmentation and the synthetic cohort.

mod augment;
mod frames;
mod record;
mod synth;

pub use augment::{augment, augment_segment, apply as apply_augment, segment_seed, AugmentParams, AugmentPolicy};
pub use frames::{letterbox, resize_video, resize_with_padding, segment_video, Letterbox};
pub use record::{validate_id, PatientRecord, Plane, Segment, VideoTensor};
pub use synth::{
    ellipse_coverage, foreground_area, generate_synthetic, SyntheticConfig, AXIS_X, AXIS_Y, WEIGHT_MAX_G,
    WEIGHT_MIN_G,
};

use alloc::vec::Vec;

use crate::error::Result;

/// Every clip of a patient, pooled over videos in video order.
pub fn patient_segments(record: &PatientRecord, seg_len: usize) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for (i, v) in record.videos.iter().enumerate() {
        out.extend(segment_video(v, &record.patient_id, i, seg_len)?);
    }
    Ok(out)
}
