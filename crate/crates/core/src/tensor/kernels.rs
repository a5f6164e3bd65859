//! Forward and backward kernels. These operate on raw tensors; the autodiff
//! bookkeeping lives in [`super::Graph`].

use super::gemm::{matmul, MatRef};
use super::Tensor;
use crate::error::{Error, Result};

/// Resolved geometry of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: &[usize], bias: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let [n, c, h, w] = <[usize; 4]>::try_from(input)
            .map_err(|_| Error::shape(format!("conv2d input must be [N,C,H,W], got {input:?}")))?;
        let [f, kc, kh, kw] = <[usize; 4]>::try_from(kernel)
            .map_err(|_| Error::shape(format!("conv2d kernel must be [F,C,kh,kw], got {kernel:?}")))?;
        if kc != c {
            return Err(Error::shape(format!("conv2d kernel expects {kc} channels, input has {c}")));
        }
        if bias != [f] {
            return Err(Error::shape(format!("conv2d bias must be [{f}], got {bias:?}")));
        }
        if stride == 0 {
            return Err(Error::shape("conv2d stride must be positive"));
        }
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        if kh == 0 || kw == 0 || kh > ph || kw > pw {
            return Err(Error::shape(format!("conv2d kernel {kh}x{kw} does not fit padded input {ph}x{pw}")));
        }
        if (ph - kh) % stride != 0 || (pw - kw) % stride != 0 {
            return Err(Error::shape(format!(
                "conv2d output size is not integral: ({ph}-{kh})/{stride}, ({pw}-{kw})/{stride}"
            )));
        }
        Ok(ConvGeometry {
            batch: n,
            in_channels: c,
            height: h,
            width: w,
            filters: f,
            kernel_h: kh,
            kernel_w: kw,
            stride,
            pad,
            out_h: (ph - kh) / stride + 1,
            out_w: (pw - kw) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.filters, self.out_h, self.out_w]
    }
}

/// Target number of patch-matrix columns per chunk. Samples are unfolded a
/// few at a time so the patch matrix stays cache-resident.
const CHUNK_COLUMNS: usize = 2048;

/// Output positions `[lo, hi)` along one axis whose kernel tap `k` lands
/// inside the input.
#[inline]
fn valid_range(g: &ConvGeometry, k: usize, limit: usize, out: usize) -> (usize, usize) {
    let (s, p) = (g.stride as isize, g.pad as isize);
    let k = k as isize;
    // o*s + k - p >= 0  and  o*s + k - p < limit
    let lo = (p - k).max(0);
    let lo = (lo + s - 1) / s;
    let hi = (limit as isize + p - k + s - 1) / s;
    let hi = hi.clamp(0, out as isize);
    (lo.min(hi) as usize, hi as usize)
}

impl ConvGeometry {
    fn samples_per_chunk(&self) -> usize {
        CHUNK_COLUMNS.div_ceil(self.out_plane().max(1)).clamp(1, self.batch.max(1))
    }
}

/// Unfold samples `n0..n0 + count` of `input` into `out`, a
/// `[C*kh*kw, count*Ho*Wo]` patch matrix. Out-of-bounds taps must already
/// be zero in `out`.
fn im2col(g: &ConvGeometry, input: &[f32], n0: usize, count: usize, out: &mut [f32]) {
    let plane = g.out_plane();
    let cols = count * plane;
    for c in 0..g.in_channels {
        for ki in 0..g.kernel_h {
            let (y_lo, y_hi) = valid_range(g, ki, g.height, g.out_h);
            for kj in 0..g.kernel_w {
                let (x_lo, x_hi) = valid_range(g, kj, g.width, g.out_w);
                if x_lo >= x_hi {
                    continue;
                }
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let dst_row = &mut out[row * cols..(row + 1) * cols];
                let ix0 = x_lo * g.stride + kj - g.pad;
                for s in 0..count {
                    let src = &input[((n0 + s) * g.in_channels + c) * g.height * g.width..];
                    for oy in y_lo..y_hi {
                        let iy = oy * g.stride + ki - g.pad;
                        let at = s * plane + oy * g.out_w;
                        let dst = &mut dst_row[at + x_lo..at + x_hi];
                        let src_row = &src[iy * g.width + ix0..];
                        if g.stride == 1 {
                            dst.copy_from_slice(&src_row[..dst.len()]);
                        } else {
                            for (j, d) in dst.iter_mut().enumerate() {
                                *d = src_row[j * g.stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add patch gradients of samples
/// `n0..n0 + count` back onto `dx`.
fn col2im(g: &ConvGeometry, cols_grad: &[f32], n0: usize, count: usize, dx: &mut [f32]) {
    let plane = g.out_plane();
    let cols = count * plane;
    for c in 0..g.in_channels {
        for ki in 0..g.kernel_h {
            let (y_lo, y_hi) = valid_range(g, ki, g.height, g.out_h);
            for kj in 0..g.kernel_w {
                let (x_lo, x_hi) = valid_range(g, kj, g.width, g.out_w);
                if x_lo >= x_hi {
                    continue;
                }
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let src_row = &cols_grad[row * cols..(row + 1) * cols];
                let ix0 = x_lo * g.stride + kj - g.pad;
                for s in 0..count {
                    let dst = &mut dx[((n0 + s) * g.in_channels + c) * g.height * g.width..];
                    for oy in y_lo..y_hi {
                        let iy = oy * g.stride + ki - g.pad;
                        let at = s * plane + oy * g.out_w;
                        let src = &src_row[at + x_lo..at + x_hi];
                        let dst_row = &mut dst[iy * g.width + ix0..];
                        if g.stride == 1 {
                            for (d, v) in dst_row.iter_mut().zip(src) {
                                *d += v;
                            }
                        } else {
                            for (j, v) in src.iter().enumerate() {
                                dst_row[j * g.stride] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `input` with `kernel` plus a per-filter bias.
pub fn conv2d_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, ConvGeometry)> {
    let g = ConvGeometry::new(input.shape(), kernel.shape(), bias.shape(), stride, pad)?;
    let plane = g.out_plane();
    let patch = g.patch_len();
    let per = g.samples_per_chunk();
    let mut out = vec![0.0f32; g.batch * g.filters * plane];
    let mut cols = vec![0.0f32; patch * per * plane];
    let mut tmp = vec![0.0f32; g.filters * per * plane];
    let weights = MatRef::row_major(kernel.data(), g.filters, patch);
    for n0 in (0..g.batch).step_by(per) {
        let count = per.min(g.batch - n0);
        let width = count * plane;
        let cols = &mut cols[..patch * width];
        if g.pad > 0 {
            cols.fill(0.0);
        }
        im2col(&g, input.data(), n0, count, cols);
        let dst = &mut out[n0 * g.filters * plane..(n0 + count) * g.filters * plane];
        if count == 1 {
            matmul(weights, MatRef::row_major(cols, patch, width), 0.0, dst);
            for (row, &b) in dst.chunks_exact_mut(plane).zip(bias.data()) {
                row.iter_mut().for_each(|v| *v += b);
            }
        } else {
            let tmp = &mut tmp[..g.filters * width];
            matmul(weights, MatRef::row_major(cols, patch, width), 0.0, tmp);
            // [F, count*P] -> [count, F, P]
            for (f, row) in tmp.chunks_exact(width).enumerate() {
                let b = bias.data()[f];
                for s in 0..count {
                    let o = (s * g.filters + f) * plane;
                    for (d, v) in dst[o..o + plane].iter_mut().zip(&row[s * plane..(s + 1) * plane]) {
                        *d = v + b;
                    }
                }
            }
        }
    }
    Ok((Tensor::new(g.output_shape().to_vec(), out)?, g))
}

pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub kernel: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    g: &ConvGeometry,
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
    need_input: bool,
) -> Result<ConvGrads> {
    if input.shape() != [g.batch, g.in_channels, g.height, g.width] || grad_out.shape() != g.output_shape() {
        return Err(Error::shape(format!(
            "conv2d backward: input {:?} / grad {:?} do not match the forward geometry",
            input.shape(),
            grad_out.shape()
        )));
    }
    let plane = g.out_plane();
    let patch = g.patch_len();
    let per = g.samples_per_chunk();
    let dy = grad_out.data();
    let mut bias = vec![0.0f64; g.filters];
    for (i, row) in dy.chunks_exact(plane.max(1)).enumerate() {
        bias[i % g.filters] += row.iter().map(|&v| v as f64).sum::<f64>();
    }
    let bias: Vec<f32> = bias.into_iter().map(|v| v as f32).collect();

    let mut dk = vec![0.0f32; g.filters * patch];
    let mut dx = if need_input { vec![0.0f32; input.len()] } else { Vec::new() };
    let mut cols = vec![0.0f32; patch * per * plane];
    let mut dcols = if need_input { vec![0.0f32; patch * per * plane] } else { Vec::new() };
    let mut go = vec![0.0f32; g.filters * per * plane];
    let kt = MatRef::transposed(kernel.data(), g.filters, patch);
    for (chunk, n0) in (0..g.batch).step_by(per).enumerate() {
        let count = per.min(g.batch - n0);
        let width = count * plane;
        let cols = &mut cols[..patch * width];
        if g.pad > 0 {
            cols.fill(0.0);
        }
        im2col(g, input.data(), n0, count, cols);
        let src = &dy[n0 * g.filters * plane..(n0 + count) * g.filters * plane];
        let go: &[f32] = if count == 1 {
            src
        } else {
            // [count, F, P] -> [F, count*P]
            let go = &mut go[..g.filters * width];
            for s in 0..count {
                for f in 0..g.filters {
                    let o = (s * g.filters + f) * plane;
                    go[f * width + s * plane..f * width + (s + 1) * plane].copy_from_slice(&src[o..o + plane]);
                }
            }
            go
        };
        let go = MatRef::row_major(go, g.filters, width);
        let beta = if chunk == 0 { 0.0 } else { 1.0 };
        matmul(go, MatRef::transposed(cols, patch, width), beta, &mut dk);
        if need_input {
            let dcols = &mut dcols[..patch * width];
            matmul(kt, go, 0.0, dcols);
            col2im(g, dcols, n0, count, &mut dx);
        }
    }
    let input = if need_input { Some(Tensor::new(input.shape().to_vec(), dx)?) } else { None };
    Ok(ConvGrads {
        input,
        kernel: Tensor::new(kernel.shape().to_vec(), dk)?,
        bias: Tensor::new(vec![g.filters], bias)?,
    })
}

/// Saved statistics of a group-norm forward pass.
pub struct GroupNormContext {
    pub groups: usize,
    /// Normalised activations `(x - mean) * rstd`, same layout as the input.
    pub normalized: Vec<f32>,
    /// `1 / sqrt(var + eps)` per (sample, group).
    pub rstd: Vec<f64>,
}

pub fn group_norm_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    groups: usize,
    eps: f64,
) -> Result<(Tensor, GroupNormContext)> {
    let [n, c, h, w] = input.dims4()?;
    if groups == 0 || c % groups != 0 {
        return Err(Error::config(format!("{groups} groups do not divide {c} channels")));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::config(format!("group norm eps must be positive, got {eps}")));
    }
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(format!(
            "group norm affine parameters must be [{c}], got {:?} and {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    let per_channel = h * w;
    let cpg = c / groups;
    let group_len = cpg * per_channel;
    let mut out = vec![0.0f32; input.len()];
    let mut normalized = vec![0.0f32; input.len()];
    let mut rstd = Vec::with_capacity(n * groups);
    if group_len == 0 {
        let ctx = GroupNormContext { groups, normalized, rstd };
        return Ok((Tensor::new(input.shape().to_vec(), out)?, ctx));
    }
    for (gi, chunk) in input.data().chunks_exact(group_len).enumerate() {
        let mean = lane_sum(chunk, |v| v as f64) / group_len as f64;
        let var = lane_sum(chunk, |v| (v as f64 - mean) * (v as f64 - mean)) / group_len as f64;
        let r = 1.0 / (var + eps).sqrt();
        rstd.push(r);
        let base = gi * group_len;
        let (mean32, r32) = (mean as f32, r as f32);
        for k in 0..cpg {
            let ch = (gi % groups) * cpg + k;
            let (ga, be) = (gamma.data()[ch], beta.data()[ch]);
            let span = base + k * per_channel..base + (k + 1) * per_channel;
            let src = &chunk[k * per_channel..(k + 1) * per_channel];
            for ((xh, y), &v) in normalized[span.clone()].iter_mut().zip(&mut out[span]).zip(src) {
                *xh = (v - mean32) * r32;
                *y = ga * *xh + be;
            }
        }
    }
    let ctx = GroupNormContext { groups, normalized, rstd };
    Ok((Tensor::new(input.shape().to_vec(), out)?, ctx))
}

/// Sum of `f(x)` with eight independent f64 accumulators.
#[inline]
fn lane_sum(xs: &[f32], f: impl Fn(f32) -> f64) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut chunks = xs.chunks_exact(8);
    for c in &mut chunks {
        for l in 0..8 {
            acc[l] += f(c[l]);
        }
    }
    let tail: f64 = chunks.remainder().iter().map(|&v| f(v)).sum();
    acc.iter().sum::<f64>() + tail
}

/// `(sum a, sum a*b)` with eight independent f64 accumulators each.
#[inline]
fn lane_sum_dot(a: &[f32], b: &[f32]) -> (f64, f64) {
    let mut s = [0.0f64; 8];
    let mut d = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            s[l] += x[l] as f64;
            d[l] += x[l] as f64 * y[l] as f64;
        }
    }
    let (mut ts, mut td) = (0.0, 0.0);
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        ts += x as f64;
        td += x as f64 * y as f64;
    }
    (s.iter().sum::<f64>() + ts, d.iter().sum::<f64>() + td)
}

pub struct GroupNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

pub fn group_norm_backward(ctx: &GroupNormContext, gamma: &Tensor, grad_out: &Tensor) -> Result<GroupNormGrads> {
    let [_, c, h, w] = grad_out.dims4()?;
    let per_channel = h * w;
    let cpg = c / ctx.groups;
    let group_len = cpg * per_channel;
    let mut dgamma = vec![0.0f64; c];
    let mut dbeta = vec![0.0f64; c];
    let mut dx = vec![0.0f32; grad_out.len()];
    let dy = grad_out.data();
    for (gi, &r) in ctx.rstd.iter().enumerate() {
        let base = gi * group_len;
        let mut mean_dxh = 0.0f64;
        let mut mean_dxh_xh = 0.0f64;
        for k in 0..cpg {
            let ch = (gi % ctx.groups) * cpg + k;
            let span = base + k * per_channel..base + (k + 1) * per_channel;
            let (sg, sgx) = lane_sum_dot(&dy[span.clone()], &ctx.normalized[span]);
            dgamma[ch] += sgx;
            dbeta[ch] += sg;
            let ga = gamma.data()[ch] as f64;
            mean_dxh += ga * sg;
            mean_dxh_xh += ga * sgx;
        }
        mean_dxh /= group_len as f64;
        mean_dxh_xh /= group_len as f64;
        let (m1, m2, r32) = (mean_dxh as f32, mean_dxh_xh as f32, r as f32);
        for k in 0..cpg {
            let ch = (gi % ctx.groups) * cpg + k;
            let ga = gamma.data()[ch];
            let span = base + k * per_channel..base + (k + 1) * per_channel;
            for ((d, &g), &xh) in dx[span.clone()].iter_mut().zip(&dy[span.clone()]).zip(&ctx.normalized[span]) {
                *d = r32 * (g * ga - m1 - xh * m2);
            }
        }
    }
    Ok(GroupNormGrads {
        input: Tensor::new(grad_out.shape().to_vec(), dx)?,
        gamma: Tensor::new(vec![c], dgamma.into_iter().map(|v| v as f32).collect())?,
        beta: Tensor::new(vec![c], dbeta.into_iter().map(|v| v as f32).collect())?,
    })
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor { shape: input.shape().to_vec(), data }
}

/// Gradient of ReLU given its *output*; the subgradient at zero is zero.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = output.data().iter().zip(grad_out.data()).map(|(&y, &g)| if y > 0.0 { g } else { 0.0 }).collect();
    Tensor { shape: output.shape().to_vec(), data }
}

/// Windowed maximum. Returns the output and, for each output element, the
/// flat input index it was taken from (lowest index wins ties).
pub fn max_pool2d_forward(input: &Tensor, window: usize, stride: usize) -> Result<(Tensor, Vec<u32>)> {
    let [n, c, h, w] = input.dims4()?;
    if window == 0 || stride == 0 || window > h || window > w {
        return Err(Error::shape(format!("max_pool2d window {window} does not fit {h}x{w}")));
    }
    if !(h - window).is_multiple_of(stride) || !(w - window).is_multiple_of(stride) {
        return Err(Error::shape(format!("max_pool2d: spatial dims {h}x{w} not divisible by stride {stride}")));
    }
    let (ho, wo) = ((h - window) / stride + 1, (w - window) / stride + 1);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut arg = Vec::with_capacity(n * c * ho * wo);
    let x = input.data();
    if window == 2 && stride == 2 {
        pool_2x2(x, n * c, h, w, &mut out, &mut arg);
        return Ok((Tensor::new(vec![n, c, ho, wo], out)?, arg));
    }
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let corner = base + oy * stride * w + ox * stride;
                let (mut best, mut best_idx) = (x[corner], corner);
                for ky in 0..window {
                    let row = corner + ky * w;
                    for (kx, &v) in x[row..row + window].iter().enumerate() {
                        if v > best {
                            best = v;
                            best_idx = row + kx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_idx as u32);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, ho, wo], out)?, arg))
}

fn pool_2x2(x: &[f32], planes: usize, h: usize, w: usize, out: &mut Vec<f32>, arg: &mut Vec<u32>) {
    for plane in 0..planes {
        for oy in 0..h / 2 {
            let r0 = plane * h * w + 2 * oy * w;
            let r1 = r0 + w;
            for ox in 0..w / 2 {
                let (i0, i1) = (r0 + 2 * ox, r1 + 2 * ox);
                let (mut best, mut idx) = (x[i0], i0);
                for j in [i0 + 1, i1, i1 + 1] {
                    if x[j] > best {
                        best = x[j];
                        idx = j;
                    }
                }
                out.push(best);
                arg.push(idx as u32);
            }
        }
    }
}

pub fn max_pool2d_backward(input_shape: &[usize], argmax: &[u32], grad_out: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        dx.data[idx as usize] += g;
    }
    dx
}

/// `out[n, k] = sum_d input[n, d] * weight[k, d] + bias[k]`.
pub fn linear_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [n, d] = input.dims2()?;
    let [k, wd] = weight.dims2()?;
    if wd != d {
        return Err(Error::shape(format!("linear: input width {d} but weight is [{k}, {wd}]")));
    }
    if bias.shape() != [k] {
        return Err(Error::shape(format!("linear bias must be [{k}], got {:?}", bias.shape())));
    }
    let mut out = Vec::with_capacity(n * k);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    matmul(MatRef::row_major(input.data(), n, d), MatRef::transposed(weight.data(), k, d), 1.0, &mut out);
    Tensor::new(vec![n, k], out)
}

pub struct LinearGrads {
    pub input: Option<Tensor>,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn linear_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor, need_input: bool) -> Result<LinearGrads> {
    let [n, d] = input.dims2()?;
    let [k, _] = weight.dims2()?;
    let go = grad_out.data();
    let mut dw = vec![0.0f32; k * d];
    matmul(MatRef::transposed(go, n, k), MatRef::row_major(input.data(), n, d), 0.0, &mut dw);
    let mut db = vec![0.0f64; k];
    for row in go.chunks_exact(k) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc += g as f64;
        }
    }
    let input_grad = if need_input {
        let mut dx = vec![0.0f32; n * d];
        matmul(MatRef::row_major(go, n, k), MatRef::row_major(weight.data(), k, d), 0.0, &mut dx);
        Some(Tensor::new(vec![n, d], dx)?)
    } else {
        None
    };
    Ok(LinearGrads {
        input: input_grad,
        weight: Tensor::new(vec![k, d], dw)?,
        bias: Tensor::new(vec![k], db.into_iter().map(|v| v as f32).collect())?,
    })
}

/// Mean softmax cross-entropy over the batch. Returns the loss and the
/// row-wise softmax probabilities.
pub fn softmax_cross_entropy_forward(logits: &Tensor, labels: &[usize]) -> Result<(f64, Vec<f32>)> {
    let [n, k] = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::data(format!("{} labels for a batch of {n}", labels.len())));
    }
    if n == 0 {
        return Err(Error::data("cross-entropy over an empty batch"));
    }
    let mut probs = Vec::with_capacity(n * k);
    let mut total = 0.0f64;
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        if label >= k {
            return Err(Error::data(format!("label {label} out of range for {k} classes")));
        }
        let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
        let sum_exp: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        total += log_z - row[label] as f64;
        probs.extend(row.iter().map(|&v| ((v as f64 - max).exp() / sum_exp) as f32));
    }
    Ok((total / n as f64, probs))
}

pub fn softmax_cross_entropy_backward(probs: &[f32], labels: &[usize], upstream: f32) -> Tensor {
    let n = labels.len();
    let k = probs.len() / n;
    let scale = upstream / n as f32;
    let mut data = probs.to_vec();
    for (row, &label) in data.chunks_exact_mut(k).zip(labels) {
        row[label] -= 1.0;
        row.iter_mut().for_each(|v| *v *= scale);
    }
    Tensor { shape: vec![n, k], data }
}
