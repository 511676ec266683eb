use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::graph::{accumulate, accumulate_with, Graph, Op, Var};
use crate::autodiff::kernels::{self, ConvGeom};
use crate::error::{Error, Result};
use crate::tensor::{strides, Tensor};

/// Stride and zero padding of a 3D convolution, ordered (T, H, W).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv3dSpec {
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Conv3dSpec {
    pub const fn new(stride: [usize; 3], padding: [usize; 3]) -> Self {
        Conv3dSpec { stride, padding }
    }

    /// Stride 1, no padding.
    pub const fn unit() -> Self {
        Self::new([1, 1, 1], [0, 0, 0])
    }
}

/// `floor((len + 2·pad − kernel) / stride) + 1`, or `None` if the kernel
/// does not fit the padded extent.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    (stride >= 1 && kernel >= 1 && padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

pub(crate) fn conv_geometry(x: &[usize], w: &[usize], spec: Conv3dSpec) -> Result<ConvGeom> {
    if x.len() != 5 || w.len() != 5 {
        return Err(Error::shape("conv3d (rank)", x, w));
    }
    if x[1] != w[1] {
        return Err(Error::shape("conv3d (C_in)", x, w));
    }
    let mut output = [0; 3];
    for axis in 0..3 {
        output[axis] = conv_output_len(x[2 + axis], w[2 + axis], spec.stride[axis], spec.padding[axis])
            .ok_or_else(|| Error::shape("conv3d (kernel exceeds padded input)", x, w))?;
    }
    Ok(ConvGeom {
        batch: x[0],
        c_in: x[1],
        c_out: w[0],
        input: [x[2], x[3], x[4]],
        kernel: [w[2], w[3], w[4]],
        stride: spec.stride,
        padding: spec.padding,
        output,
    })
}

fn is_pointwise(g: &ConvGeom) -> bool {
    g.kernel == [1, 1, 1] && g.stride == [1, 1, 1] && g.padding == [0, 0, 0]
}

/// Direct nested-loop 3D cross-correlation on plain tensors, independent of
/// the unfolded matrix-product path used by [`Graph::conv3d`].
pub fn conv3d_direct(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    spec: Conv3dSpec,
) -> Result<Tensor> {
    let g = conv_geometry(input.shape(), weight.shape(), spec)?;
    let mut out = vec![0.0; g.batch * g.c_out * g.out_volume()];
    kernels::conv3d_direct(input.data(), weight.data(), bias.map(|b| b.data()), &g, &mut out);
    let [t, h, w] = g.output;
    Tensor::new(&[g.batch, g.c_out, t, h, w], out)
}

/// Forward-pass mode; selects batch or running statistics in batch norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel statistics of one training batch, as returned by
/// [`Graph::batch_norm`] in train mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMoments {
    pub mean: Vec<f32>,
    /// Unbiased variance (population variance when the batch has one element
    /// per channel).
    pub var: Vec<f32>,
}

/// Exponential moving averages used by batch norm in eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    /// Number of train-mode updates folded in; zero means uninitialized.
    pub updates: u64,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            updates: 0,
        }
    }

    /// Statistics that are already considered initialized.
    pub fn from_values(mean: Vec<f32>, var: Vec<f32>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::shape("RunningStats", &[mean.len()], &[var.len()]));
        }
        Ok(RunningStats {
            mean,
            var,
            updates: 1,
        })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn is_initialized(&self) -> bool {
        self.updates > 0
    }

    /// `new = (1 − momentum)·old + momentum·batch`
    pub fn update(&mut self, batch: &BatchMoments, momentum: f32) {
        for (r, b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
        for (r, b) in self.var.iter_mut().zip(&batch.var) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
        self.updates += 1;
    }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let pad = |s: &[usize], i: usize| {
        let off = rank - s.len();
        if i < off {
            1
        } else {
            s[i - off]
        }
    };
    (0..rank)
        .map(|i| {
            let (da, db) = (pad(a, i), pad(b, i));
            if da == db || da == 1 || db == 1 {
                Ok(da.max(db))
            } else {
                Err(Error::shape("broadcast", a, b))
            }
        })
        .collect()
}

/// Strides of `shape` viewed inside `out` (left-padded), zero on broadcast axes.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let off = out.len() - shape.len();
    let own = strides(shape);
    (0..out.len())
        .map(|i| {
            if i < off || shape[i - off] == 1 {
                0
            } else {
                own[i - off]
            }
        })
        .collect()
}

/// Calls `f(out_index, a_index, b_index)` for every element of `out`.
fn for_each_broadcast(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let rank = out.len();
    let numel: usize = out.iter().product();
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for o in 0..numel {
        f(o, ia, ib);
        for d in (0..rank).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

fn permuted_source_strides(shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let own = strides(shape);
    perm.iter().map(|&p| own[p]).collect()
}

impl Graph {
    /// 3D cross-correlation of `input [N, C_in, T, H, W]` with
    /// `weight [C_out, C_in, kT, kH, kW]`.
    pub fn conv3d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: Conv3dSpec,
    ) -> Result<Var> {
        let g = conv_geometry(self.shape(input), self.shape(weight), spec)?;
        if let Some(b) = bias {
            if self.shape(b) != [g.c_out] {
                return Err(Error::shape("conv3d (bias)", self.shape(b), &[g.c_out]));
            }
        }
        let (k, l) = (g.patch_len(), g.out_volume());
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let mut out = vec![0.0; g.batch * g.c_out * l];
        let mut cols = if is_pointwise(&g) { Vec::new() } else { vec![0.0; k * l] };
        for n in 0..g.batch {
            let x_n = &x[n * g.c_in * g.in_volume()..(n + 1) * g.c_in * g.in_volume()];
            let out_n = &mut out[n * g.c_out * l..(n + 1) * g.c_out * l];
            if let Some(b) = bias {
                let b = self.value(b).data();
                for co in 0..g.c_out {
                    out_n[co * l..(co + 1) * l].iter_mut().for_each(|v| *v = b[co]);
                }
            }
            if is_pointwise(&g) {
                kernels::gemm_nn(w, x_n, out_n, g.c_out, k, l);
            } else {
                kernels::im2col(x_n, &g, &mut cols);
                kernels::gemm_nn(w, &cols, out_n, g.c_out, k, l);
            }
        }
        let [t, h, wd] = g.output;
        let value = Tensor::new(&[g.batch, g.c_out, t, h, wd], out)?;
        let mut deps = vec![input, weight];
        deps.extend(bias);
        let rg = self.any_grad(&deps);
        Ok(self.push(
            value,
            Op::Conv3d {
                input,
                weight,
                bias,
                geom: g,
            },
            rg,
        ))
    }

    /// Batch normalization over every axis except the channel axis (axis 1).
    ///
    /// Train mode normalizes with the batch statistics and returns them so
    /// the caller can fold them into its [`RunningStats`]; eval mode uses
    /// `running` and fails if it was never updated.
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running: &RunningStats,
        mode: Mode,
        eps: f32,
    ) -> Result<(Var, Option<BatchMoments>)> {
        let shape = self.shape(input).to_vec();
        if shape.len() < 2 {
            return Err(Error::shape("batch_norm (rank)", &shape, &[0, 0]));
        }
        let (n, c) = (shape[0], shape[1]);
        let vol: usize = shape[2..].iter().product();
        for v in [gamma, beta] {
            if self.shape(v) != [c] {
                return Err(Error::shape("batch_norm (affine)", &shape, self.shape(v)));
            }
        }
        if running.channels() != c {
            return Err(Error::shape("batch_norm (running)", &shape, &[running.channels()]));
        }
        if !(eps > 0.0) {
            return Err(Error::invalid("batch norm epsilon must be positive"));
        }
        let count = n * vol;
        let x = self.value(input).data();
        let (mean, var_biased, moments) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0f32; c];
                let mut var_b = vec![0.0f32; c];
                let mut var_u = vec![0.0f32; c];
                for ch in 0..c {
                    let channel = (0..n).flat_map(|b| {
                        let start = (b * c + ch) * vol;
                        x[start..start + vol].iter()
                    });
                    let m = channel.clone().map(|&v| v as f64).sum::<f64>() / count as f64;
                    let ss = channel.map(|&v| { let d = v as f64 - m; d * d }).sum::<f64>();
                    mean[ch] = m as f32;
                    var_b[ch] = (ss / count as f64) as f32;
                    var_u[ch] = if count > 1 {
                        (ss / (count - 1) as f64) as f32
                    } else {
                        var_b[ch]
                    };
                }
                let moments = BatchMoments {
                    mean: mean.clone(),
                    var: var_u,
                };
                (mean, var_b, Some(moments))
            }
            Mode::Eval => {
                if !running.is_initialized() {
                    return Err(Error::UninitializedStats);
                }
                (running.mean.clone(), running.var.clone(), None)
            }
        };
        let inv_std: Vec<f32> = var_biased
            .iter()
            .map(|&v| 1.0 / libm::sqrtf(v + eps))
            .collect();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        for bi in 0..n {
            for ch in 0..c {
                let start = (bi * c + ch) * vol;
                for i in start..start + vol {
                    xhat[i] = (x[i] - mean[ch]) * inv_std[ch];
                    out[i] = g[ch] * xhat[i] + b[ch];
                }
            }
        }
        let value = Tensor::new(&shape, out)?;
        let rg = self.any_grad(&[input, gamma, beta]);
        let var = self.push(
            value,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                channels: c,
                xhat,
                inv_std,
                batch_stats: mode == Mode::Train,
            },
            rg,
        );
        Ok((var, moments))
    }

    /// Elementwise `max(0, x)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, input: Var) -> Var {
        let v = self.value(input);
        let data = v.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let value = Tensor::new(v.shape(), data).expect("same shape");
        let rg = self.any_grad(&[input]);
        self.push(value, Op::Relu { input }, rg)
    }

    /// `input [N, F] · weightᵀ [F, O] + bias [O]`
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(input), self.shape(weight));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::shape("linear", xs, ws));
        }
        let (n, f, o) = (xs[0], xs[1], ws[0]);
        if let Some(b) = bias {
            if self.shape(b) != [o] {
                return Err(Error::shape("linear (bias)", self.shape(b), &[o]));
            }
        }
        let mut out = vec![0.0; n * o];
        if let Some(b) = bias {
            let b = self.value(b).data();
            out.chunks_mut(o).for_each(|row| row.copy_from_slice(b));
        }
        kernels::gemm_nt(self.value(input).data(), self.value(weight).data(), &mut out, n, f, o);
        let value = Tensor::new(&[n, o], out)?;
        let mut deps = vec![input, weight];
        deps.extend(bias);
        let rg = self.any_grad(&deps);
        Ok(self.push(
            value,
            Op::Linear {
                input,
                weight,
                bias,
            },
            rg,
        ))
    }

    /// Softmax along the last axis, computed with max subtraction.
    pub fn softmax(&mut self, input: Var) -> Var {
        let v = self.value(input);
        let l = *v.shape().last().expect("rank >= 1");
        let mut out = v.data().to_vec();
        for row in out.chunks_mut(l) {
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mut total = 0.0f64;
            for x in row.iter_mut() {
                *x = libm::expf(*x - max);
                total += *x as f64;
            }
            let inv = (1.0 / total) as f32;
            row.iter_mut().for_each(|x| *x *= inv);
        }
        let value = Tensor::new(v.shape(), out).expect("same shape");
        let rg = self.any_grad(&[input]);
        self.push(value, Op::Softmax { input }, rg)
    }

    /// Batched matrix product `[..., M, K] × [..., K, P] → [..., M, P]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let r = sa.len();
        if r < 2 || sb.len() != r || sa[..r - 2] != sb[..r - 2] || sa[r - 1] != sb[r - 2] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, p) = (sa[r - 2], sa[r - 1], sb[r - 1]);
        let batch: usize = sa[..r - 2].iter().product();
        let mut out_shape = sa[..r - 2].to_vec();
        out_shape.extend([m, p]);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; batch * m * p];
        for i in 0..batch {
            kernels::gemm_nn(
                &da[i * m * k..(i + 1) * m * k],
                &db[i * k * p..(i + 1) * k * p],
                &mut out[i * m * p..(i + 1) * m * p],
                m,
                k,
                p,
            );
        }
        let value = Tensor::new(&out_shape, out)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(
            value,
            Op::MatMul {
                a,
                b,
                batch,
                m,
                k,
                p,
            },
            rg,
        ))
    }

    /// Mean over every axis after the first two: `[N, C, ...] → [N, C]`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let shape = self.shape(input);
        if shape.len() < 3 {
            return Err(Error::shape("global_avg_pool", shape, &[0, 0, 0]));
        }
        let (n, c) = (shape[0], shape[1]);
        let vol: usize = shape[2..].iter().product();
        let out = self
            .value(input)
            .data()
            .chunks(vol)
            .map(|ch| (ch.iter().map(|&v| v as f64).sum::<f64>() / vol as f64) as f32)
            .collect();
        let value = Tensor::new(&[n, c], out)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, Op::GlobalAvgPool { input }, rg))
    }

    /// Elementwise sum with broadcasting over size-1 (or missing leading) axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = broadcast_shape(&sa, &sb)?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let out = if sa == sb {
            da.iter().zip(db).map(|(x, y)| x + y).collect()
        } else {
            let (ta, tb) = (
                broadcast_strides(&sa, &out_shape),
                broadcast_strides(&sb, &out_shape),
            );
            let mut out = vec![0.0; out_shape.iter().product()];
            for_each_broadcast(&out_shape, &ta, &tb, |o, ia, ib| out[o] = da[ia] + db[ib]);
            out
        };
        let value = Tensor::new(&out_shape, out)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add { a, b }, rg))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("mul", self.shape(a), self.shape(b)));
        }
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(self.shape(a), out)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, input: Var, factor: f32) -> Var {
        let v = self.value(input);
        let value = Tensor::new(v.shape(), v.data().iter().map(|x| x * factor).collect())
            .expect("same shape");
        let rg = self.any_grad(&[input]);
        self.push(value, Op::Scale { input, factor }, rg)
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, input: Var) -> Var {
        let total = self.value(input).sum();
        let rg = self.any_grad(&[input]);
        self.push(Tensor::scalar(total), Op::Sum { input }, rg)
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, input: Var) -> Var {
        let v = self.value(input);
        let mean = (v.data().iter().map(|&x| x as f64).sum::<f64>() / v.numel() as f64) as f32;
        let rg = self.any_grad(&[input]);
        self.push(Tensor::scalar(mean), Op::Mean { input }, rg)
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).clone().reshape(shape)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, Op::Reshape { input }, rg))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, input: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || core::mem::replace(&mut seen[p], true)) {
            return Err(Error::shape("permute", &shape, perm));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let src = permuted_source_strides(&shape, perm);
        let data = self.value(input).data();
        let mut out = vec![0.0; data.len()];
        let zero = vec![0; out_shape.len()];
        for_each_broadcast(&out_shape, &src, &zero, |o, i, _| out[o] = data[i]);
        let value = Tensor::new(&out_shape, out)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(
            value,
            Op::Permute {
                input,
                perm: perm.to_vec(),
            },
            rg,
        ))
    }

    /// Swaps the last two axes.
    pub fn transpose_last(&mut self, input: Var) -> Result<Var> {
        let r = self.shape(input).len();
        if r < 2 {
            return Err(Error::shape("transpose_last", self.shape(input), &[0, 0]));
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(r - 2, r - 1);
        self.permute(input, &perm)
    }

    /// Mean squared error between equally shaped tensors, shape `[1]`.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::shape("mse_loss", self.shape(pred), self.shape(target)));
        }
        let (p, t) = (self.value(pred).data(), self.value(target).data());
        let mse = p
            .iter()
            .zip(t)
            .map(|(a, b)| { let d = (a - b) as f64; d * d })
            .sum::<f64>()
            / p.len() as f64;
        let rg = self.any_grad(&[pred, target]);
        Ok(self.push(Tensor::scalar(mse as f32), Op::Mse { pred, target }, rg))
    }

    pub(crate) fn backward_op(
        &self,
        idx: usize,
        gout: &[f32],
        grads: &mut [Option<Vec<f32>>],
    ) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Conv3d {
                input,
                weight,
                bias,
                geom: g,
            } => {
                let (k, l) = (g.patch_len(), g.out_volume());
                let x = self.value(*input).data();
                let w = self.value(*weight).data();
                let in_stride = g.c_in * g.in_volume();
                let out_stride = g.c_out * l;
                if let Some(b) = bias {
                    accumulate_with(self, grads, *b, |gb| {
                        for n in 0..g.batch {
                            for (co, gbc) in gb.iter_mut().enumerate().take(g.c_out) {
                                let start = n * out_stride + co * l;
                                *gbc += gout[start..start + l].iter().sum::<f32>();
                            }
                        }
                    });
                }
                let pointwise = is_pointwise(g);
                let mut cols = if pointwise { Vec::new() } else { vec![0.0; k * l] };
                if self.nodes[weight.0].requires_grad {
                    accumulate_with(self, grads, *weight, |gw| {
                        for n in 0..g.batch {
                            let x_n = &x[n * in_stride..(n + 1) * in_stride];
                            let gout_n = &gout[n * out_stride..(n + 1) * out_stride];
                            if pointwise {
                                kernels::gemm_nt(gout_n, x_n, gw, g.c_out, l, k);
                            } else {
                                kernels::im2col(x_n, g, &mut cols);
                                kernels::gemm_nt(gout_n, &cols, gw, g.c_out, l, k);
                            }
                        }
                    });
                }
                if self.nodes[input.0].requires_grad {
                    accumulate_with(self, grads, *input, |gx| {
                        for n in 0..g.batch {
                            let gout_n = &gout[n * out_stride..(n + 1) * out_stride];
                            let gx_n = &mut gx[n * in_stride..(n + 1) * in_stride];
                            if pointwise {
                                kernels::gemm_tn(w, gout_n, gx_n, k, g.c_out, l);
                            } else {
                                cols.iter_mut().for_each(|v| *v = 0.0);
                                kernels::gemm_tn(w, gout_n, &mut cols, k, g.c_out, l);
                                kernels::col2im(&cols, g, gx_n);
                            }
                        }
                    });
                }
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                channels,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let c = *channels;
                let shape = self.shape(*input);
                let (n, vol) = (shape[0], shape[2..].iter().product::<usize>());
                let count = (n * vol) as f32;
                let mut sum_dy = vec![0.0f64; c];
                let mut sum_dy_xhat = vec![0.0f64; c];
                for b in 0..n {
                    for ch in 0..c {
                        let start = (b * c + ch) * vol;
                        for i in start..start + vol {
                            sum_dy[ch] += gout[i] as f64;
                            sum_dy_xhat[ch] += (gout[i] * xhat[i]) as f64;
                        }
                    }
                }
                accumulate_with(self, grads, *gamma, |gg| {
                    gg.iter_mut().zip(&sum_dy_xhat).for_each(|(g, s)| *g += *s as f32)
                });
                accumulate_with(self, grads, *beta, |gb| {
                    gb.iter_mut().zip(&sum_dy).for_each(|(g, s)| *g += *s as f32)
                });
                let gamma_v = self.value(*gamma).data();
                accumulate_with(self, grads, *input, |gx| {
                    for b in 0..n {
                        for ch in 0..c {
                            let scale = gamma_v[ch] * inv_std[ch];
                            let start = (b * c + ch) * vol;
                            if *batch_stats {
                                let mean_dy = sum_dy[ch] as f32 / count;
                                let mean_dy_xhat = sum_dy_xhat[ch] as f32 / count;
                                for i in start..start + vol {
                                    gx[i] += scale * (gout[i] - mean_dy - xhat[i] * mean_dy_xhat);
                                }
                            } else {
                                for i in start..start + vol {
                                    gx[i] += scale * gout[i];
                                }
                            }
                        }
                    }
                });
            }
            Op::Relu { input } => {
                let y = node.value.data();
                accumulate_with(self, grads, *input, |gx| {
                    for ((g, &yv), &go) in gx.iter_mut().zip(y).zip(gout) {
                        if yv > 0.0 {
                            *g += go;
                        }
                    }
                });
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let xs = self.shape(*input);
                let (n, f) = (xs[0], xs[1]);
                let o = self.shape(*weight)[0];
                if let Some(b) = bias {
                    accumulate_with(self, grads, *b, |gb| {
                        for row in gout.chunks(o) {
                            gb.iter_mut().zip(row).for_each(|(g, v)| *g += v);
                        }
                    });
                }
                let x = self.value(*input).data();
                let w = self.value(*weight).data();
                accumulate_with(self, grads, *weight, |gw| kernels::gemm_tn(gout, x, gw, o, n, f));
                accumulate_with(self, grads, *input, |gx| kernels::gemm_nn(gout, w, gx, n, o, f));
            }
            Op::Softmax { input } => {
                let y = node.value.data();
                let l = *node.value.shape().last().expect("rank >= 1");
                accumulate_with(self, grads, *input, |gx| {
                    for ((gx_r, y_r), g_r) in gx.chunks_mut(l).zip(y.chunks(l)).zip(gout.chunks(l)) {
                        let dot: f32 = y_r.iter().zip(g_r).map(|(a, b)| a * b).sum();
                        for i in 0..l {
                            gx_r[i] += y_r[i] * (g_r[i] - dot);
                        }
                    }
                });
            }
            Op::MatMul {
                a,
                b,
                batch,
                m,
                k,
                p,
            } => {
                let (m, k, p) = (*m, *k, *p);
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                accumulate_with(self, grads, *a, |ga| {
                    for i in 0..*batch {
                        kernels::gemm_nt(
                            &gout[i * m * p..(i + 1) * m * p],
                            &db[i * k * p..(i + 1) * k * p],
                            &mut ga[i * m * k..(i + 1) * m * k],
                            m,
                            p,
                            k,
                        );
                    }
                });
                accumulate_with(self, grads, *b, |gb| {
                    for i in 0..*batch {
                        kernels::gemm_tn(
                            &da[i * m * k..(i + 1) * m * k],
                            &gout[i * m * p..(i + 1) * m * p],
                            &mut gb[i * k * p..(i + 1) * k * p],
                            k,
                            m,
                            p,
                        );
                    }
                });
            }
            Op::GlobalAvgPool { input } => {
                let shape = self.shape(*input);
                let vol: usize = shape[2..].iter().product();
                let inv = 1.0 / vol as f32;
                accumulate_with(self, grads, *input, |gx| {
                    for (chunk, g) in gx.chunks_mut(vol).zip(gout) {
                        chunk.iter_mut().for_each(|v| *v += g * inv);
                    }
                });
            }
            Op::Add { a, b } => {
                let out_shape = node.value.shape();
                for v in [*a, *b] {
                    let s = self.shape(v);
                    if s == out_shape {
                        accumulate(self, grads, v, gout);
                    } else {
                        let sv = broadcast_strides(s, out_shape);
                        let zero = vec![0; out_shape.len()];
                        accumulate_with(self, grads, v, |gv| {
                            for_each_broadcast(out_shape, &sv, &zero, |o, i, _| gv[i] += gout[o]);
                        });
                    }
                }
            }
            Op::Mul { a, b } => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                accumulate_with(self, grads, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += gout[i] * db[i];
                    }
                });
                accumulate_with(self, grads, *b, |gb| {
                    for i in 0..gb.len() {
                        gb[i] += gout[i] * da[i];
                    }
                });
            }
            Op::Scale { input, factor } => {
                accumulate_with(self, grads, *input, |gx| {
                    gx.iter_mut().zip(gout).for_each(|(g, v)| *g += v * factor)
                });
            }
            Op::Sum { input } => {
                let g = gout[0];
                accumulate_with(self, grads, *input, |gx| gx.iter_mut().for_each(|v| *v += g));
            }
            Op::Mean { input } => {
                let g = gout[0] / self.value(*input).numel() as f32;
                accumulate_with(self, grads, *input, |gx| gx.iter_mut().for_each(|v| *v += g));
            }
            Op::Reshape { input } => accumulate(self, grads, *input, gout),
            Op::Permute { input, perm } => {
                let src = permuted_source_strides(self.shape(*input), perm);
                let out_shape = node.value.shape();
                let zero = vec![0; out_shape.len()];
                accumulate_with(self, grads, *input, |gx| {
                    for_each_broadcast(out_shape, &src, &zero, |o, i, _| gx[i] += gout[o]);
                });
            }
            Op::Mse { pred, target } => {
                let (p, t) = (self.value(*pred).data(), self.value(*target).data());
                let scale = 2.0 * gout[0] / p.len() as f32;
                accumulate_with(self, grads, *pred, |gp| {
                    for i in 0..gp.len() {
                        gp[i] += scale * (p[i] - t[i]);
                    }
                });
                accumulate_with(self, grads, *target, |gt| {
                    for i in 0..gt.len() {
                        gt[i] -= scale * (p[i] - t[i]);
                    }
                });
            }
        }
        Ok(())
    }
}
