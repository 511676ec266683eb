//! 3D multi-head self-attention over the flattened `T·H·W` positions of a
//! feature volume, with learned height, width and temporal encodings added
//! to the keys.
//!
//! For head `i` with per-head width `d = D / heads`:
//!
//! ```text
//! out_i = softmax(Q_i (K_i + r_i)ᵀ / √d) · V_i
//! ```
//!
//! where `r = R_h + R_w + R_t` (broadcast to `[T, D, H, W]`) and `r_i` is the
//! channel slice `[i·d, (i+1)·d)`. Heads are concatenated along `D` with no
//! output projection.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::params::{Builder, ConvLayer, Forward, ParamId};
use crate::tensor::Tensor;

/// Graph handles of the attention parameters.
#[derive(Debug, Clone, Copy)]
pub struct MhsaVars {
    /// `[D, D, 1, 1, 1]` query projection.
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    /// `[1, D, H, 1]`; `None` together with `r_w` disables positions.
    pub r_h: Option<Var>,
    /// `[1, D, 1, W]`
    pub r_w: Option<Var>,
    /// `[T, D, 1, 1]`; `None` omits the temporal term.
    pub r_t: Option<Var>,
}

#[derive(Debug, Clone, Copy)]
pub struct MhsaOutput {
    /// `[N, D, T, H, W]`
    pub output: Var,
    /// `[N, heads, P, P]`, rows over queries, columns over keys.
    pub attention: Var,
    /// `[T, D, H, W]` positional sum, when positions are enabled.
    pub positions: Option<Var>,
}

/// Broadcast sum `R_h + R_w (+ R_t)` with shape `[T, D, H, W]`. Without a
/// temporal term the result is constant along `T`.
pub fn positional_sum(g: &mut Graph, r_h: Var, r_w: Var, r_t: Option<Var>, frames: usize) -> Result<Var> {
    let hw = g.add(r_h, r_w)?;
    match r_t {
        Some(t) => {
            if g.shape(t)[0] != frames {
                return Err(Error::shape("positional_sum (R_t frames)", g.shape(t), &[frames]));
            }
            g.add(hw, t)
        }
        None => {
            let d = g.shape(hw)[1];
            let zero = g.constant(Tensor::zeros(&[frames, d, 1, 1]));
            g.add(hw, zero)
        }
    }
}

/// Plain-tensor version of [`positional_sum`].
pub fn positional_sum_tensor(r_h: &Tensor, r_w: &Tensor, r_t: Option<&Tensor>, frames: usize) -> Result<Tensor> {
    let mut g = Graph::new();
    let h = g.constant(r_h.clone());
    let w = g.constant(r_w.clone());
    let t = r_t.map(|t| g.constant(t.clone()));
    let r = positional_sum(&mut g, h, w, t, frames)?;
    Ok(g.value(r).clone())
}

pub fn mhsa3d_forward(g: &mut Graph, x: Var, p: &MhsaVars, heads: usize) -> Result<MhsaOutput> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 5 {
        return Err(Error::shape("mhsa3d (rank)", &shape, &[0; 5]));
    }
    let (n, d_model, t, h, w) = (shape[0], shape[1], shape[2], shape[3], shape[4]);
    if heads == 0 || d_model % heads != 0 {
        return Err(Error::Config(format!("{d_model} channels are not divisible by {heads} heads")));
    }
    let d = d_model / heads;
    let positions = t * h * w;
    let unit = crate::autodiff::Conv3dSpec::unit();

    let q = g.conv3d(x, p.w_q, None, unit)?;
    let q = g.reshape(q, &[n, heads, d, positions])?;
    let q = g.transpose_last(q)?;

    let k = g.conv3d(x, p.w_k, None, unit)?;
    let mut k = g.reshape(k, &[n, heads, d, positions])?;
    let mut pos_sum = None;
    if let (Some(r_h), Some(r_w)) = (p.r_h, p.r_w) {
        let r = positional_sum(g, r_h, r_w, p.r_t, t)?;
        if g.shape(r) != [t, d_model, h, w] {
            return Err(Error::shape("mhsa3d (positions)", g.shape(r), &[t, d_model, h, w]));
        }
        pos_sum = Some(r);
        // [T, D, H, W] → [D, T, H, W] → per-head [1, heads, d, P]
        let r = g.permute(r, &[1, 0, 2, 3])?;
        let r = g.reshape(r, &[1, heads, d, positions])?;
        k = g.add(k, r)?;
    }

    let logits = g.matmul(q, k)?;
    let logits = g.scale(logits, 1.0 / libm::sqrtf(d as f32));
    let attention = g.softmax(logits);

    let v = g.conv3d(x, p.w_v, None, unit)?;
    let v = g.reshape(v, &[n, heads, d, positions])?;
    let v = g.transpose_last(v)?;
    let out = g.matmul(attention, v)?;
    let out = g.transpose_last(out)?;
    let output = g.reshape(out, &[n, d_model, t, h, w])?;
    Ok(MhsaOutput {
        output,
        attention,
        positions: pos_sum,
    })
}

/// Attention layer owning its parameters inside a [`ParamSet`](super::ParamSet).
#[derive(Debug, Clone)]
pub struct Mhsa3d {
    pub w_q: ConvLayer,
    pub w_k: ConvLayer,
    pub w_v: ConvLayer,
    pub r_h: Option<ParamId>,
    pub r_w: Option<ParamId>,
    pub r_t: Option<ParamId>,
    pub heads: usize,
    pub channels: usize,
    /// `(T, H, W)` of the volume the encodings are sized for.
    pub dims: [usize; 3],
}

impl Mhsa3d {
    pub fn new(
        b: &mut Builder<'_>,
        name: &str,
        channels: usize,
        dims: [usize; 3],
        heads: usize,
        positional: bool,
        temporal: bool,
    ) -> Result<Self> {
        if heads == 0 || !channels.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "{name}: {channels} channels are not divisible by {heads} heads"
            )));
        }
        let [t, h, w] = dims;
        let w_q = ConvLayer::point(b, &format!("{name}.w_q"), channels, channels, 1);
        let w_k = ConvLayer::point(b, &format!("{name}.w_k"), channels, channels, 1);
        let w_v = ConvLayer::point(b, &format!("{name}.w_v"), channels, channels, 1);
        let (r_h, r_w) = if positional {
            (
                Some(b.normal(format!("{name}.r_h"), &[1, channels, h, 1], 0.02)),
                Some(b.normal(format!("{name}.r_w"), &[1, channels, 1, w], 0.02)),
            )
        } else {
            (None, None)
        };
        let r_t = (positional && temporal).then(|| b.normal(format!("{name}.r_t"), &[t, channels, 1, 1], 0.02));
        Ok(Mhsa3d {
            w_q,
            w_k,
            w_v,
            r_h,
            r_w,
            r_t,
            heads,
            channels,
            dims,
        })
    }

    pub fn vars(&self, f: &Forward<'_>) -> MhsaVars {
        MhsaVars {
            w_q: f.var(self.w_q.weight),
            w_k: f.var(self.w_k.weight),
            w_v: f.var(self.w_v.weight),
            r_h: self.r_h.map(|id| f.var(id)),
            r_w: self.r_w.map(|id| f.var(id)),
            r_t: self.r_t.map(|id| f.var(id)),
        }
    }

    pub fn forward(&self, f: &mut Forward<'_>, x: Var) -> Result<MhsaOutput> {
        let s = f.graph.shape(x);
        if s.len() != 5 || s[1] != self.channels || s[2..] != self.dims {
            let want: Vec<usize> = [s.first().copied().unwrap_or(1), self.channels]
                .into_iter()
                .chain(self.dims)
                .collect();
            return Err(Error::shape("mhsa3d (input)", s, &want));
        }
        let vars = self.vars(f);
        mhsa3d_forward(f.graph, x, &vars, self.heads)
    }
}
