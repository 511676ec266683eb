//! Dataset directories: `manifest.csv` with one patient per line,
//!
//! ```text
//! patient_id,weight_g,videos
//! P001,3250,head:videos/P001_0.bnt;abdomen:videos/P001_1.bnt
//! ```
//!
//! plus one `BNT1` file of shape `[T, 1, H, W]` per video. Paths are relative
//! to the dataset directory.

use std::fs;
use std::path::{Path, PathBuf};

use babynet_core::data::{PatientRecord, Plane, VideoTensor};

use crate::error::{Error, Result};
use crate::tensor_io::{load_tensor, save_tensor};

pub const MANIFEST: &str = "manifest.csv";
const HEADER: &str = "patient_id,weight_g,videos";

/// One manifest line before the video files are loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub patient_id: String,
    pub weight_g: f32,
    pub videos: Vec<(Plane, PathBuf)>,
}

pub fn write_dataset(dir: &Path, records: &[PatientRecord]) -> Result<()> {
    let videos_dir = dir.join("videos");
    fs::create_dir_all(&videos_dir).map_err(|e| Error::io(&videos_dir, e))?;
    let mut manifest = String::from(HEADER);
    manifest.push('\n');
    for r in records {
        let mut files = Vec::with_capacity(r.videos.len());
        for (i, v) in r.videos.iter().enumerate() {
            let rel = format!("videos/{}_{i}.bnt", r.patient_id);
            save_tensor(&dir.join(&rel), v.frames())?;
            files.push(format!("{}:{rel}", v.plane));
        }
        manifest.push_str(&format!("{},{},{}\n", r.patient_id, r.birth_weight_g, files.join(";")));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        _ => return Err(Error::parse(&path, format!("missing header line {HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        let bad = |msg: String| Error::parse(&path, format!("line {}: {msg}", n + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [id, weight, videos] = fields[..] else {
            return Err(bad(format!("expected 3 fields, found {}", fields.len())));
        };
        babynet_core::data::validate_id(id).map_err(|e| bad(e.to_string()))?;
        let weight_g: f32 = weight.parse().map_err(|_| bad(format!("weight {weight:?} is not a number")))?;
        if weight_g <= 0.0 || !weight_g.is_finite() {
            return Err(bad(format!("weight {weight_g} must be positive")));
        }
        let videos = videos
            .split(';')
            .filter(|v| !v.is_empty())
            .map(|v| {
                let (plane, file) = v.split_once(':').ok_or_else(|| bad(format!("video {v:?} lacks a plane label")))?;
                let plane: Plane = plane.parse().map_err(|e: babynet_core::Error| bad(e.to_string()))?;
                Ok((plane, PathBuf::from(file)))
            })
            .collect::<Result<Vec<_>>>()?;
        if videos.is_empty() {
            return Err(bad(format!("patient {id} lists no videos")));
        }
        if out.iter().any(|e: &ManifestEntry| e.patient_id == id) {
            return Err(bad(format!("duplicate patient id {id}")));
        }
        out.push(ManifestEntry {
            patient_id: id.to_string(),
            weight_g,
            videos,
        });
    }
    if out.is_empty() {
        return Err(Error::parse(&path, "manifest lists no patients"));
    }
    Ok(out)
}

pub fn read_dataset(dir: &Path) -> Result<Vec<PatientRecord>> {
    read_manifest(dir)?
        .into_iter()
        .map(|entry| {
            let videos = entry
                .videos
                .iter()
                .map(|(plane, rel)| {
                    let path = dir.join(rel);
                    let frames = load_tensor(&path)?;
                    VideoTensor::new(frames, *plane).map_err(|e| Error::parse(&path, e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PatientRecord::new(entry.patient_id, entry.weight_g, videos)?)
        })
        .collect()
}
