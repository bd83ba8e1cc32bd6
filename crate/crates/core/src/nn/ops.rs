//! Layer primitives on channel-major batches.
//!
//! An activation with `C` channels, batch `B` and length `L` is stored as
//! `[C][B][L]`, so a convolution over the whole batch is a single matrix
//! product and per-channel statistics run over one contiguous slice.

use serde::{Deserialize, Serialize};

use super::scalar::matmul;
use super::{Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv1dSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1dSpec {
    pub fn out_len(&self, len: usize) -> usize {
        (len + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Weights are `[out][in][kernel]`.
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.kernel == 0 || self.stride == 0 {
            return Err(Error::invalid(format!("degenerate convolution {self:?}")));
        }
        if len + 2 * self.padding < self.kernel {
            return Err(Error::invalid(format!(
                "input of length {len} is shorter than kernel {} with padding {}",
                self.kernel, self.padding
            )));
        }
        Ok(())
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    /// Output positions `o` whose tap `kk` lands inside `[0, len)`.
    fn valid_outputs(&self, kk: usize, len: usize, out_len: usize) -> std::ops::Range<usize> {
        let lo = if self.padding > kk {
            (self.padding - kk).div_ceil(self.stride)
        } else {
            0
        };
        let hi = if len + self.padding > kk {
            ((len - 1 + self.padding - kk) / self.stride + 1).min(out_len)
        } else {
            0
        };
        lo..hi.max(lo)
    }
}

/// `[C_in * K][B * L_out]` patch matrix.
fn im2col<T: Scalar>(spec: &Conv1dSpec, x: &[T], batch: usize, len: usize) -> Vec<T> {
    let out_len = spec.out_len(len);
    let mut cols = Vec::with_capacity(spec.in_channels * spec.kernel * batch * out_len);
    for ci in 0..spec.in_channels {
        for kk in 0..spec.kernel {
            let valid = spec.valid_outputs(kk, len, out_len);
            for b in 0..batch {
                let src = &x[(ci * batch + b) * len..][..len];
                cols.resize(cols.len() + valid.start, T::zero());
                if valid.is_empty() {
                    cols.resize(cols.len() + out_len - valid.start, T::zero());
                    continue;
                }
                let first = valid.start * spec.stride + kk - spec.padding;
                if spec.stride == 1 {
                    cols.extend_from_slice(&src[first..first + valid.len()]);
                } else {
                    cols.extend(src[first..].iter().step_by(spec.stride).take(valid.len()));
                }
                cols.resize(cols.len() + out_len - valid.end, T::zero());
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(spec: &Conv1dSpec, cols: &[T], batch: usize, len: usize) -> Vec<T> {
    let out_len = spec.out_len(len);
    let row = batch * out_len;
    let mut x = vec![T::zero(); spec.in_channels * batch * len];
    for ci in 0..spec.in_channels {
        for kk in 0..spec.kernel {
            let src_row = &cols[(ci * spec.kernel + kk) * row..][..row];
            let valid = spec.valid_outputs(kk, len, out_len);
            if valid.is_empty() {
                continue;
            }
            for b in 0..batch {
                let dst = &mut x[(ci * batch + b) * len..][..len];
                let src = &src_row[b * out_len..][valid.clone()];
                let first = valid.start * spec.stride + kk - spec.padding;
                if spec.stride == 1 {
                    for (d, &v) in dst[first..].iter_mut().zip(src) {
                        *d = *d + v;
                    }
                } else {
                    for (d, &v) in dst[first..].iter_mut().step_by(spec.stride).zip(src) {
                        *d = *d + v;
                    }
                }
            }
        }
    }
    x
}

/// Batched cross-correlation; `x` is `[C_in][B][len]`, the result
/// `[C_out][B][L_out]`.
pub fn conv1d_forward<T: Scalar>(
    spec: &Conv1dSpec,
    x: &[T],
    batch: usize,
    len: usize,
    weight: &[T],
    bias: Option<&[T]>,
) -> Vec<T> {
    debug_assert_eq!(x.len(), spec.in_channels * batch * len);
    debug_assert_eq!(weight.len(), spec.weight_len());
    let n = batch * spec.out_len(len);
    let kdim = spec.in_channels * spec.kernel;
    let mut y = vec![T::zero(); spec.out_channels * n];
    if spec.is_pointwise() {
        matmul(spec.out_channels, kdim, n, weight, false, x, false, &mut y, false);
    } else {
        let cols = im2col(spec, x, batch, len);
        matmul(spec.out_channels, kdim, n, weight, false, &cols, false, &mut y, false);
    }
    if let Some(bias) = bias {
        for (row, &b) in y.chunks_mut(n.max(1)).zip(bias) {
            for v in row {
                *v = *v + b;
            }
        }
    }
    y
}

/// Accumulates `dL/dw` (and `dL/db`) and returns `dL/dx` when requested.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward<T: Scalar>(
    spec: &Conv1dSpec,
    x: &[T],
    batch: usize,
    len: usize,
    weight: &[T],
    dy: &[T],
    dweight: &mut [T],
    dbias: Option<&mut [T]>,
    need_dx: bool,
) -> Option<Vec<T>> {
    let n = batch * spec.out_len(len);
    let kdim = spec.in_channels * spec.kernel;
    debug_assert_eq!(dy.len(), spec.out_channels * n);
    let cols_owned;
    let cols: &[T] = if spec.is_pointwise() {
        x
    } else {
        cols_owned = im2col(spec, x, batch, len);
        &cols_owned
    };
    matmul(spec.out_channels, n, kdim, dy, false, cols, true, dweight, true);
    if let Some(db) = dbias {
        for (g, row) in db.iter_mut().zip(dy.chunks(n.max(1))) {
            *g = *g + row.iter().copied().sum();
        }
    }
    if !need_dx {
        return None;
    }
    let mut dcols = vec![T::zero(); kdim * n];
    matmul(kdim, spec.out_channels, n, weight, true, dy, false, &mut dcols, false);
    Some(if spec.is_pointwise() {
        dcols
    } else {
        col2im(spec, &dcols, batch, len)
    })
}

fn conv_shapes<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Conv1dSpec> {
    let (&[c_in, len], &[c_out, w_in, kernel]) = (x.shape(), weight.shape()) else {
        return Err(Error::invalid(format!(
            "conv1d expects x [C_in, L] and w [C_out, C_in, K], got {:?} and {:?}",
            x.shape(),
            weight.shape()
        )));
    };
    if w_in != c_in {
        return Err(Error::invalid(format!(
            "weight expects {w_in} input channels, x has {c_in}"
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(Error::invalid(format!("bias shape {:?}, expected [{c_out}]", b.shape())));
        }
    }
    let spec = Conv1dSpec {
        in_channels: c_in,
        out_channels: c_out,
        kernel,
        stride,
        padding,
    };
    spec.validate(len)?;
    Ok(spec)
}

/// Single-sample cross-correlation with bias: `x [C_in, L]`,
/// `weight [C_out, C_in, K]` to `[C_out, L']`.
pub fn conv1d<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let spec = conv_shapes(x, weight, bias, stride, padding)?;
    let len = x.shape()[1];
    let y = conv1d_forward(&spec, x.data(), 1, len, weight.data(), bias.map(Tensor::data));
    Tensor::new(vec![spec.out_channels, spec.out_len(len)], y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dGrads<T> {
    pub dx: Tensor<T>,
    pub dweight: Tensor<T>,
    pub dbias: Tensor<T>,
}

/// Gradients of a loss through [`conv1d`] given `dy = dL/dy`.
pub fn conv1d_grad<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Conv1dGrads<T>> {
    let spec = conv_shapes(x, weight, None, stride, padding)?;
    let len = x.shape()[1];
    let expected = [spec.out_channels, spec.out_len(len)];
    if dy.shape() != expected {
        return Err(Error::invalid(format!("dy shape {:?}, expected {expected:?}", dy.shape())));
    }
    let mut dweight = Tensor::zeros(weight.shape().to_vec());
    let mut dbias = Tensor::zeros(vec![spec.out_channels]);
    let dx = conv1d_backward(
        &spec,
        x.data(),
        1,
        len,
        weight.data(),
        dy.data(),
        dweight.data_mut(),
        Some(dbias.data_mut()),
        true,
    )
    .expect("requested");
    Ok(Conv1dGrads {
        dx: Tensor::new(x.shape().to_vec(), dx)?,
        dweight,
        dbias,
    })
}

/// Batch statistics kept for the backward pass and running averages.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<f64>,
    /// Biased (population) variance of the batch.
    pub var: Vec<f64>,
}

/// Per-channel normalization with batch statistics over `B * L`.
pub fn batch_norm_train<T: Scalar>(
    x: &[T],
    gamma: &[T],
    beta: &[T],
    eps: f64,
) -> (Vec<T>, BatchNormCache<T>) {
    let channels = gamma.len();
    let m = x.len() / channels;
    let mut y = Vec::with_capacity(x.len());
    let mut cache = BatchNormCache {
        xhat: Vec::with_capacity(x.len()),
        inv_std: Vec::with_capacity(channels),
        mean: Vec::with_capacity(channels),
        var: Vec::with_capacity(channels),
    };
    for (c, xs) in x.chunks(m).enumerate() {
        let (mut sum, mut sq) = (0.0, 0.0);
        for &v in xs {
            let v = v.f64();
            sum += v;
            sq += v * v;
        }
        let mean = sum / m as f64;
        let var = (sq / m as f64 - mean * mean).max(0.0);
        let inv = 1.0 / (var + eps).sqrt();
        let (mean_t, inv_t) = (T::of(mean), T::of(inv));
        let (g, b) = (gamma[c], beta[c]);
        for &v in xs {
            let h = (v - mean_t) * inv_t;
            cache.xhat.push(h);
            y.push(g * h + b);
        }
        cache.inv_std.push(inv_t);
        cache.mean.push(mean);
        cache.var.push(var);
    }
    (y, cache)
}

/// Normalization with fixed statistics.
pub fn batch_norm_eval<T: Scalar>(
    x: &[T],
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    eps: f64,
) -> Vec<T> {
    let m = x.len() / gamma.len();
    let mut y = Vec::with_capacity(x.len());
    for (c, xs) in x.chunks(m).enumerate() {
        let scale = gamma[c] / (var[c] + T::of(eps)).sqrt();
        let shift = beta[c] - mean[c] * scale;
        y.extend(xs.iter().map(|&v| v * scale + shift));
    }
    y
}

/// Returns `dL/dx` and accumulates `dL/dgamma`, `dL/dbeta`.
pub fn batch_norm_backward<T: Scalar>(
    dy: &[T],
    cache: &BatchNormCache<T>,
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Vec<T> {
    let channels = gamma.len();
    let m = dy.len() / channels;
    let mt = T::from_usize(m).unwrap();
    let mut dx = Vec::with_capacity(dy.len());
    for c in 0..channels {
        let dys = &dy[c * m..][..m];
        let hs = &cache.xhat[c * m..][..m];
        let sum_dy: T = dys.iter().copied().sum();
        let sum_dy_h: T = dys.iter().zip(hs).map(|(&d, &h)| d * h).sum();
        dgamma[c] = dgamma[c] + sum_dy_h;
        dbeta[c] = dbeta[c] + sum_dy;
        let k = gamma[c] * cache.inv_std[c] / mt;
        dx.extend(
            dys.iter()
                .zip(hs)
                .map(|(&d, &h)| k * (mt * d - sum_dy - h * sum_dy_h)),
        );
    }
    dx
}

pub fn relu_in_place<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `grad` wherever the ReLU output was not positive.
pub fn relu_backward_in_place<T: Scalar>(output: &[T], grad: &mut [T]) {
    for (g, &o) in grad.iter_mut().zip(output) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}
