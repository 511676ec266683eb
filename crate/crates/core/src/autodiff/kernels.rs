//! Slice-level numeric kernels shared by the forward and backward passes.
//!
//! All matrices are row-major. The `gemm_*` routines accumulate into `c`.

/// `c[m×n] += a[m×k] · b[k×n]`
pub(crate) fn gemm_nn(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_ip * bv;
            }
        }
    }
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`
pub(crate) fn gemm_nt(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] += dot(a_row, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `c[m×n] += a[k×m]ᵀ · b[k×n]`
pub(crate) fn gemm_tn(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let a_pi = a[p * m + i];
            if a_pi == 0.0 {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_pi * bv;
            }
        }
    }
}

/// Dot product with eight independent partial sums so the loop vectorizes.
/// The summation order is fixed, so results are deterministic.
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (xa, xb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Resolved geometry of one 3D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeom {
    pub fn in_volume(&self) -> usize {
        self.input.iter().product()
    }

    pub fn out_volume(&self) -> usize {
        self.output.iter().product()
    }

    /// Rows of the unfolded input matrix: `c_in · kT · kH · kW`.
    pub fn patch_len(&self) -> usize {
        self.c_in * self.kernel.iter().product::<usize>()
    }
}

/// Maps output coordinate `o` along one axis to the input coordinate under
/// kernel tap `k`, or `None` when the tap lands in the zero padding.
#[inline]
fn source_index(o: usize, k: usize, stride: usize, pad: usize, len: usize) -> Option<usize> {
    let pos = (o * stride + k) as isize - pad as isize;
    (pos >= 0 && (pos as usize) < len).then_some(pos as usize)
}

/// Unfolds one batch item `[c_in, T, H, W]` into `cols[patch_len × out_volume]`.
pub(crate) fn im2col(x: &[f32], g: &ConvGeom, cols: &mut [f32]) {
    let [t_in, h_in, w_in] = g.input;
    let [kt, kh, kw] = g.kernel;
    let [t_out, h_out, w_out] = g.output;
    let l = g.out_volume();
    let mut row = 0;
    for c in 0..g.c_in {
        let x_c = &x[c * g.in_volume()..(c + 1) * g.in_volume()];
        for dt in 0..kt {
            for dh in 0..kh {
                for dw in 0..kw {
                    let dst = &mut cols[row * l..(row + 1) * l];
                    let mut col = 0;
                    for ot in 0..t_out {
                        let it = source_index(ot, dt, g.stride[0], g.padding[0], t_in);
                        for oh in 0..h_out {
                            let ih = source_index(oh, dh, g.stride[1], g.padding[1], h_in);
                            for ow in 0..w_out {
                                let iw = source_index(ow, dw, g.stride[2], g.padding[2], w_in);
                                dst[col] = match (it, ih, iw) {
                                    (Some(it), Some(ih), Some(iw)) => {
                                        x_c[(it * h_in + ih) * w_in + iw]
                                    }
                                    _ => 0.0,
                                };
                                col += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `cols` back onto `[c_in, T, H, W]`.
pub(crate) fn col2im(cols: &[f32], g: &ConvGeom, dx: &mut [f32]) {
    let [t_in, h_in, w_in] = g.input;
    let [kt, kh, kw] = g.kernel;
    let [t_out, h_out, w_out] = g.output;
    let l = g.out_volume();
    let mut row = 0;
    for c in 0..g.c_in {
        let dx_c = &mut dx[c * g.in_volume()..(c + 1) * g.in_volume()];
        for dt in 0..kt {
            for dh in 0..kh {
                for dw in 0..kw {
                    let src = &cols[row * l..(row + 1) * l];
                    let mut col = 0;
                    for ot in 0..t_out {
                        let it = source_index(ot, dt, g.stride[0], g.padding[0], t_in);
                        for oh in 0..h_out {
                            let ih = source_index(oh, dh, g.stride[1], g.padding[1], h_in);
                            for ow in 0..w_out {
                                let iw = source_index(ow, dw, g.stride[2], g.padding[2], w_in);
                                if let (Some(it), Some(ih), Some(iw)) = (it, ih, iw) {
                                    dx_c[(it * h_in + ih) * w_in + iw] += src[col];
                                }
                                col += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Direct nested-loop cross-correlation over the whole batch. Slow; serves
/// as the reference the unfolded path is checked against.
pub(crate) fn conv3d_direct(
    x: &[f32],
    weight: &[f32],
    bias: Option<&[f32]>,
    g: &ConvGeom,
    out: &mut [f32],
) {
    let [t_in, h_in, w_in] = g.input;
    let [kt, kh, kw] = g.kernel;
    let [t_out, h_out, w_out] = g.output;
    let mut o = 0;
    for n in 0..g.batch {
        for co in 0..g.c_out {
            for ot in 0..t_out {
                for oh in 0..h_out {
                    for ow in 0..w_out {
                        let mut acc = bias.map_or(0.0, |b| b[co]);
                        for ci in 0..g.c_in {
                            for dt in 0..kt {
                                let Some(it) = source_index(ot, dt, g.stride[0], g.padding[0], t_in)
                                else {
                                    continue;
                                };
                                for dh in 0..kh {
                                    let Some(ih) =
                                        source_index(oh, dh, g.stride[1], g.padding[1], h_in)
                                    else {
                                        continue;
                                    };
                                    for dw in 0..kw {
                                        let Some(iw) =
                                            source_index(ow, dw, g.stride[2], g.padding[2], w_in)
                                        else {
                                            continue;
                                        };
                                        let xi = (((n * g.c_in + ci) * t_in + it) * h_in + ih)
                                            * w_in
                                            + iw;
                                        let wi = (((co * g.c_in + ci) * kt + dt) * kh + dh) * kw + dw;
                                        acc += x[xi] * weight[wi];
                                    }
                                }
                            }
                        }
                        out[o] = acc;
                        o += 1;
                    }
                }
            }
        }
    }
}
