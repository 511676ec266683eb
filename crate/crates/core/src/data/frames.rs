use alloc::vec;
use alloc::vec::Vec;

use crate::data::record::{Segment, VideoTensor};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Placement of resized content inside the target canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Letterbox {
    pub content_h: usize,
    pub content_w: usize,
    pub top: usize,
    pub left: usize,
}

/// Aspect-preserving fit of an `h × w` frame into `target`: scale by
/// `min(th/h, tw/w)`, round the content size, and center it with the odd
/// leftover pixel on the bottom/right.
pub fn letterbox(h: usize, w: usize, target: (usize, usize)) -> Letterbox {
    let (th, tw) = target;
    let scale = f64::min(th as f64 / h as f64, tw as f64 / w as f64);
    let fit = |len: usize, max: usize| (libm::round(len as f64 * scale) as usize).clamp(1, max);
    let (content_h, content_w) = (fit(h, th), fit(w, tw));
    Letterbox {
        content_h,
        content_w,
        top: (th - content_h) / 2,
        left: (tw - content_w) / 2,
    }
}

/// Bilinear sample with edge clamping.
pub(crate) fn sample_clamped(src: &[f32], h: usize, w: usize, y: f32, x: f32) -> f32 {
    let y = y.clamp(0.0, (h - 1) as f32);
    let x = x.clamp(0.0, (w - 1) as f32);
    let (y0, x0) = (y as usize, x as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f32, x - x0 as f32);
    let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
    let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Bilinear resize of one `h × w` plane to `oh × ow` (pixel-center aligned).
pub(crate) fn resize_plane(src: &[f32], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    if (h, w) == (oh, ow) {
        return src.to_vec();
    }
    let (sy, sx) = (h as f32 / oh as f32, w as f32 / ow as f32);
    let mut out = Vec::with_capacity(oh * ow);
    for i in 0..oh {
        let y = (i as f32 + 0.5) * sy - 0.5;
        for j in 0..ow {
            let x = (j as f32 + 0.5) * sx - 0.5;
            out.push(sample_clamped(src, h, w, y, x));
        }
    }
    out
}

fn fit_plane(src: &[f32], h: usize, w: usize, target: (usize, usize)) -> Vec<f32> {
    let lb = letterbox(h, w, target);
    let content = resize_plane(src, h, w, lb.content_h, lb.content_w);
    let mut out = vec![0.0; target.0 * target.1];
    for (r, row) in content.chunks(lb.content_w).enumerate() {
        let start = (lb.top + r) * target.1 + lb.left;
        out[start..start + lb.content_w].copy_from_slice(row);
    }
    out
}

/// Resizes a `[1, H, W]` frame into `target` without cropping or distorting
/// it; the uncovered border is zero.
pub fn resize_with_padding(frame: &Tensor, target: (usize, usize)) -> Result<Tensor> {
    let s = frame.shape();
    if s.len() != 3 || s[0] != 1 {
        return Err(Error::shape("resize_with_padding", s, &[1, 0, 0]));
    }
    if target.0 == 0 || target.1 == 0 {
        return Err(Error::invalid("resize target must be positive"));
    }
    Tensor::new(&[1, target.0, target.1], fit_plane(frame.data(), s[1], s[2], target))
}

/// Applies [`resize_with_padding`] to every frame of a video.
pub fn resize_video(video: &VideoTensor, target: (usize, usize)) -> Result<VideoTensor> {
    let (h, w) = video.frame_size();
    if (h, w) == target {
        return Ok(video.clone());
    }
    let mut data = Vec::with_capacity(video.len() * target.0 * target.1);
    for t in 0..video.len() {
        data.extend(fit_plane(video.frame(t), h, w, target));
    }
    let frames = Tensor::new(&[video.len(), 1, target.0, target.1], data)?;
    VideoTensor::new(frames, video.plane)
}

/// Cuts `video` into non-overlapping clips of `seg_len` frames starting at
/// frame 0; a trailing remainder shorter than `seg_len` is dropped.
pub fn segment_video(
    video: &VideoTensor,
    patient_id: &str,
    video_index: usize,
    seg_len: usize,
) -> Result<Vec<Segment>> {
    if seg_len == 0 {
        return Err(Error::invalid("segment length must be positive"));
    }
    let (h, w) = video.frame_size();
    let per = seg_len * h * w;
    let segments = video
        .frames()
        .data()
        .chunks_exact(per)
        .enumerate()
        .map(|(i, chunk)| Segment {
            frames: Tensor::new(&[seg_len, 1, h, w], chunk.to_vec()).expect("exact chunk"),
            patient_id: patient_id.into(),
            video_index,
            segment_index: i,
        })
        .collect();
    Ok(segments)
}
