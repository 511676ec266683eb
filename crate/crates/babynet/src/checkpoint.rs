//! Checkpoint directories: `manifest.txt` holds `key=value` lines for the
//! model configuration and target scaler, then one
//! `param <name>=<file>` line per parameter tensor and one
//! `stats <name>=<file>` line per batch-norm layer. Statistics files hold a
//! `[3, C]` tensor: running mean, running variance, and the update count in
//! every column.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use babynet_core::autodiff::RunningStats;
use babynet_core::model::{Model, ModelConfig, Variant, WidthMultiplier};
use babynet_core::train::TargetScaler;
use babynet_core::Tensor;

use crate::error::{Error, Result};
use crate::tensor_io::{load_tensor, save_tensor};

pub const MANIFEST: &str = "manifest.txt";
const FORMAT_LINE: &str = "format=babynet-checkpoint-1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub scaler: TargetScaler,
    /// Fold the model was trained for, when it comes from cross-validation.
    pub fold: Option<usize>,
}

fn file_name(name: &str) -> String {
    name.replace(['/', '\\'], "_")
}

pub fn save_checkpoint(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    for sub in ["params", "stats"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let c = &ckpt.model.config;
    let mut lines = vec![
        FORMAT_LINE.to_string(),
        format!("variant={}", c.variant.as_str()),
        format!("in_frames={}", c.in_frames),
        format!("in_height={}", c.in_height),
        format!("in_width={}", c.in_width),
        format!("num_heads={}", c.num_heads),
        format!("width={}", c.width),
        format!("bn_eps={}", c.bn_eps),
        format!("bn_momentum={}", c.bn_momentum),
        format!("seed={}", c.seed),
        format!("scaler_mean={}", ckpt.scaler.mean),
        format!("scaler_std={}", ckpt.scaler.std),
    ];
    if let Some(f) = ckpt.fold {
        lines.push(format!("fold={f}"));
    }
    for p in &ckpt.model.params.params {
        let rel = format!("params/{}.bnt", file_name(&p.name));
        let mut t = p.tensor.clone();
        t.clear_grad();
        save_tensor(&dir.join(&rel), &t)?;
        lines.push(format!("param {}={rel}", p.name));
    }
    for n in &ckpt.model.params.norms {
        let rel = format!("stats/{}.bnt", file_name(&n.name));
        let c = n.stats.channels();
        let mut data = n.stats.mean.clone();
        data.extend_from_slice(&n.stats.var);
        data.extend(std::iter::repeat_n(n.stats.updates as f32, c));
        save_tensor(&dir.join(&rel), &Tensor::new(&[3, c], data)?)?;
        lines.push(format!("stats {}={rel}", n.name));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, lines.join("\n") + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next() != Some(FORMAT_LINE) {
        return Err(Error::parse(&path, format!("first line must be {FORMAT_LINE:?}")));
    }
    let mut keys = BTreeMap::new();
    let mut params = BTreeMap::new();
    let mut stats = BTreeMap::new();
    for line in lines {
        let (lhs, rhs) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(&path, format!("malformed line {line:?}")))?;
        let target = match lhs.split_once(' ') {
            Some(("param", name)) => params.insert(name.to_string(), rhs.to_string()),
            Some(("stats", name)) => stats.insert(name.to_string(), rhs.to_string()),
            Some(_) => return Err(Error::parse(&path, format!("unknown entry {lhs:?}"))),
            None => keys.insert(lhs.to_string(), rhs.to_string()),
        };
        if target.is_some() {
            return Err(Error::parse(&path, format!("duplicate entry {lhs:?}")));
        }
    }
    let get = |k: &str| keys.get(k).ok_or_else(|| Error::parse(&path, format!("missing key {k:?}")));
    fn num<T: std::str::FromStr>(path: &Path, k: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| Error::parse(path, format!("bad value {v:?} for {k}")))
    }
    let variant: Variant = get("variant")?
        .parse()
        .map_err(|e: babynet_core::Error| Error::parse(&path, e.to_string()))?;
    let width: WidthMultiplier = get("width")?
        .parse()
        .map_err(|e: babynet_core::Error| Error::parse(&path, e.to_string()))?;
    let config = ModelConfig {
        variant,
        in_frames: num(&path, "in_frames", get("in_frames")?)?,
        in_height: num(&path, "in_height", get("in_height")?)?,
        in_width: num(&path, "in_width", get("in_width")?)?,
        num_heads: num(&path, "num_heads", get("num_heads")?)?,
        width,
        bn_eps: num(&path, "bn_eps", get("bn_eps")?)?,
        bn_momentum: num(&path, "bn_momentum", get("bn_momentum")?)?,
        seed: num(&path, "seed", get("seed")?)?,
    };
    let scaler = TargetScaler {
        mean: num(&path, "scaler_mean", get("scaler_mean")?)?,
        std: num(&path, "scaler_std", get("scaler_std")?)?,
    };
    let fold = keys.get("fold").map(|v| num(&path, "fold", v)).transpose()?;

    let mut model = Model::build(config)?;
    if params.len() != model.params.params.len() {
        return Err(Error::parse(
            &path,
            format!("{} parameters listed, model has {}", params.len(), model.params.params.len()),
        ));
    }
    for p in &mut model.params.params {
        let rel = params
            .get(&p.name)
            .ok_or_else(|| Error::parse(&path, format!("parameter {} missing", p.name)))?;
        let file = dir.join(rel);
        let t = load_tensor(&file)?;
        if t.shape() != p.tensor.shape() {
            return Err(Error::parse(
                &file,
                format!("shape {:?} does not match {:?} for {}", t.shape(), p.tensor.shape(), p.name),
            ));
        }
        p.tensor = t.with_requires_grad(true);
    }
    if stats.len() != model.params.norms.len() {
        return Err(Error::parse(&path, "batch-norm statistics do not match the model"));
    }
    for n in &mut model.params.norms {
        let rel = stats
            .get(&n.name)
            .ok_or_else(|| Error::parse(&path, format!("statistics for {} missing", n.name)))?;
        let file = dir.join(rel);
        let t = load_tensor(&file)?;
        let c = n.stats.channels();
        if t.shape() != [3, c] {
            return Err(Error::parse(&file, format!("expected shape [3, {c}], found {:?}", t.shape())));
        }
        let d = t.data();
        n.stats = RunningStats {
            mean: d[..c].to_vec(),
            var: d[c..2 * c].to_vec(),
            updates: d[2 * c] as u64,
        };
    }
    Ok(Checkpoint { model, scaler, fold })
}
