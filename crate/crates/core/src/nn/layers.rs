//! Forward and backward kernels for every layer type of the network.
//!
//! Spatial tensors are `(batch, height, width, channels)` row-major. Height
//! is the time axis, width the sensor row.

use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// `c = a·b + beta·c` for row-major `c` (m×n). `a` and `b` are addressed
/// through explicit row/column strides, so transposed views cost nothing.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n, "gemm: output too small");
    if k > 0 {
        assert!((m - 1) * rsa + (k - 1) * csa < a.len(), "gemm: lhs out of bounds");
        assert!((k - 1) * rsb + (n - 1) * csb < b.len(), "gemm: rhs out of bounds");
    }
    // SAFETY: every index dgemm touches is within the bounds asserted above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Zero padding placed before the first row/column for a same-padded
/// kernel extent; the odd remainder goes after.
pub fn same_padding(kernel: usize) -> (usize, usize) {
    let total = kernel - 1;
    (total / 2, total - total / 2)
}

struct ConvGeometry {
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    pad_top: usize,
    pad_left: usize,
}

// The width axis is tiny (four sensor rows), so each kernel tap row is
// lifted into a banded (w·cin × w·cout) matrix that applies the whole
// width convolution at once. Stacking the kh bands gives one matrix `band`
// of (kh·w·cin × w·cout). Over a height-padded sample, output row i is then
// `xp[i..i + kh] · band`, where the kh input rows are contiguous, so a
// single strided GEMM with overlapping rows computes the convolution.
impl ConvGeometry {
    fn new(input: &Tensor, kernels: &Tensor) -> Result<(usize, Self)> {
        let [b, h, w, cin] = input.dims4()?;
        let [kh, kw, kcin, cout] = kernels.dims4()?;
        if kcin != cin {
            return Err(Error::ShapeMismatch(format!(
                "kernel expects {kcin} input channels, input has {cin}"
            )));
        }
        Ok((
            b,
            ConvGeometry {
                h,
                w,
                cin,
                kh,
                kw,
                cout,
                pad_top: same_padding(kh).0,
                pad_left: same_padding(kw).0,
            },
        ))
    }

    fn row_in(&self) -> usize {
        self.w * self.cin
    }

    fn row_out(&self) -> usize {
        self.w * self.cout
    }

    fn band_rows(&self) -> usize {
        self.kh * self.row_in()
    }

    /// Calls `f(kernel index, band index)` for every tap that lands inside
    /// the width.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let (ri, ro) = (self.row_in(), self.row_out());
        for u in 0..self.kh {
            for v in 0..self.kw {
                for j in 0..self.w {
                    let Some(jj) = (j + v).checked_sub(self.pad_left).filter(|&x| x < self.w) else {
                        continue;
                    };
                    for ci in 0..self.cin {
                        let k_at = ((u * self.kw + v) * self.cin + ci) * self.cout;
                        let b_at = (u * ri + jj * self.cin + ci) * ro + j * self.cout;
                        for co in 0..self.cout {
                            f(k_at + co, b_at + co);
                        }
                    }
                }
            }
        }
    }

    fn band(&self, kernels: &[f64]) -> Vec<f64> {
        let mut band = vec![0.0; self.band_rows() * self.row_out()];
        self.for_each_tap(|k, b| band[b] = kernels[k]);
        band
    }

    /// Copies one sample into a buffer with `above` zero rows before it and
    /// `below` after.
    fn pad_rows(&self, x: &[f64], row: usize, above: usize, below: usize, buf: &mut Vec<f64>) {
        buf.clear();
        buf.resize(above * row, 0.0);
        buf.extend_from_slice(x);
        buf.resize((above + self.h + below) * row, 0.0);
    }
}

/// Same-padded, stride-1 2D convolution. Kernels are `(kh, kw, cin, cout)`.
pub fn conv2d_forward(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, g) = ConvGeometry::new(input, kernels)?;
    bias.expect_shape(&[g.cout], "conv bias")?;
    let (ri, ro) = (g.row_in(), g.row_out());
    let band = g.band(kernels.data());
    let mut out = vec![0.0; b * g.h * ro];
    for row in out.chunks_exact_mut(g.cout) {
        row.copy_from_slice(bias.data());
    }
    let mut xp = Vec::new();
    for (x, y) in input.data().chunks_exact(g.h * ri).zip(out.chunks_exact_mut(g.h * ro)) {
        g.pad_rows(x, ri, g.pad_top, g.kh - 1 - g.pad_top, &mut xp);
        gemm(g.h, g.band_rows(), ro, &xp, (ri, 1), &band, (ro, 1), 1.0, y);
    }
    Tensor::new(vec![b, g.h, g.w, g.cout], out)
}

/// Everything the convolution backward pass needs.
#[derive(Debug, Clone)]
pub struct ConvCache {
    pub input: Tensor,
    pub kernels: Tensor,
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(cache: &ConvCache, grad_out: &Tensor) -> Result<ConvGrads> {
    let (b, g) = ConvGeometry::new(&cache.input, &cache.kernels)?;
    grad_out.expect_shape(&[b, g.h, g.w, g.cout], "conv grad_out")?;
    let (ri, ro, kb) = (g.row_in(), g.row_out(), g.band_rows());

    let mut d_bias = vec![0.0; g.cout];
    for row in grad_out.data().chunks_exact(g.cout) {
        for (acc, v) in d_bias.iter_mut().zip(row) {
            *acc += v;
        }
    }

    // Input gradient is the full correlation of dY with the band taps in
    // reverse order: dxp[r] = Σ_t dyp[r + t] · band_(kh-1-t)ᵀ.
    let band = g.band(cache.kernels.data());
    let mut rev = vec![0.0; g.kh * ro * ri];
    for t in 0..g.kh {
        let u = g.kh - 1 - t;
        for q in 0..ri {
            for p in 0..ro {
                rev[(t * ro + p) * ri + q] = band[(u * ri + q) * ro + p];
            }
        }
    }

    let mut d_band = vec![0.0; kb * ro];
    let mut d_input = vec![0.0; cache.input.len()];
    let (mut xp, mut dyp) = (Vec::new(), Vec::new());
    let samples = cache
        .input
        .data()
        .chunks_exact(g.h * ri)
        .zip(grad_out.data().chunks_exact(g.h * ro))
        .zip(d_input.chunks_exact_mut(g.h * ri));
    for ((x, dy), dx) in samples {
        g.pad_rows(x, ri, g.pad_top, g.kh - 1 - g.pad_top, &mut xp);
        // d_band += xpᵀ · dY over the overlapping row view
        gemm(kb, g.h, ro, &xp, (1, ri), dy, (ro, 1), 1.0, &mut d_band);
        // dxp rows pad_top.. come from dyp rows starting at pad_top
        g.pad_rows(dy, ro, g.kh - 1, g.kh - 1, &mut dyp);
        gemm(g.h, g.kh * ro, ri, &dyp[g.pad_top * ro..], (ro, 1), &rev, (ri, 1), 0.0, dx);
    }

    let mut d_kernels = vec![0.0; cache.kernels.len()];
    g.for_each_tap(|k, bi| d_kernels[k] += d_band[bi]);

    Ok(ConvGrads {
        input: Tensor::new(cache.input.shape().to_vec(), d_input)?,
        kernels: Tensor::new(cache.kernels.shape().to_vec(), d_kernels)?,
        bias: Tensor::new(vec![g.cout], d_bias)?,
    })
}

/// Batch statistics kept for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct BnState {
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

impl BnState {
    pub fn new(channels: usize) -> Self {
        BnState {
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BnSettings {
    pub momentum: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    gamma: Vec<f64>,
}

/// Per-channel batch normalization over every axis but the last.
///
/// Train mode normalizes with the batch mean and population variance and
/// folds them into the running statistics; Infer mode reads the running
/// statistics and leaves `state` untouched.
pub fn batchnorm_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    state: &mut BnState,
    settings: BnSettings,
    mode: Mode,
) -> Result<(Tensor, Option<BnCache>)> {
    let c = *input.shape().last().ok_or_else(|| Error::ShapeMismatch("scalar bn input".into()))?;
    for (t, what) in [
        (gamma, "bn gamma"),
        (beta, "bn beta"),
        (&state.running_mean, "bn running mean"),
        (&state.running_var, "bn running var"),
    ] {
        t.expect_shape(&[c], what)?;
    }
    let n = input.len() / c;
    let x = input.data();
    let (g, bta) = (gamma.data(), beta.data());

    match mode {
        Mode::Infer => Ok((batchnorm_infer(input, gamma, beta, state, settings)?, None)),
        Mode::Train => {
            if n < 2 {
                return Err(Error::DegenerateBatch);
            }
            let mut mean = vec![0.0; c];
            for row in x.chunks_exact(c) {
                for ch in 0..c {
                    mean[ch] += row[ch];
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            let mut var = vec![0.0; c];
            for row in x.chunks_exact(c) {
                for ch in 0..c {
                    let d = row[ch] - mean[ch];
                    var[ch] += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v /= n as f64);
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + settings.epsilon).sqrt()).collect();

            let mut xhat = vec![0.0; x.len()];
            let mut out = vec![0.0; x.len()];
            for ((hrow, orow), xrow) in xhat.chunks_exact_mut(c).zip(out.chunks_exact_mut(c)).zip(x.chunks_exact(c)) {
                for ch in 0..c {
                    hrow[ch] = (xrow[ch] - mean[ch]) * inv_std[ch];
                    orow[ch] = g[ch] * hrow[ch] + bta[ch];
                }
            }

            let m = settings.momentum;
            for (r, b) in state.running_mean.data_mut().iter_mut().zip(&mean) {
                *r = m * *r + (1.0 - m) * b;
            }
            for (r, b) in state.running_var.data_mut().iter_mut().zip(&var) {
                *r = m * *r + (1.0 - m) * b;
            }

            let cache = BnCache {
                xhat: Tensor::new(input.shape().to_vec(), xhat)?,
                inv_std,
                gamma: g.to_vec(),
            };
            Ok((Tensor::new(input.shape().to_vec(), out)?, Some(cache)))
        }
    }
}

/// Inference-mode batch normalization from the running statistics.
pub fn batchnorm_infer(input: &Tensor, gamma: &Tensor, beta: &Tensor, state: &BnState, settings: BnSettings) -> Result<Tensor> {
    let c = *input.shape().last().ok_or_else(|| Error::ShapeMismatch("scalar bn input".into()))?;
    for (t, what) in [
        (gamma, "bn gamma"),
        (beta, "bn beta"),
        (&state.running_mean, "bn running mean"),
        (&state.running_var, "bn running var"),
    ] {
        t.expect_shape(&[c], what)?;
    }
    let (g, bta) = (gamma.data(), beta.data());
    let scale: Vec<f64> = (0..c)
        .map(|ch| g[ch] / (state.running_var.data()[ch] + settings.epsilon).sqrt())
        .collect();
    let mean = state.running_mean.data();
    let mut out = vec![0.0; input.len()];
    for (orow, xrow) in out.chunks_exact_mut(c).zip(input.data().chunks_exact(c)) {
        for ch in 0..c {
            orow[ch] = scale[ch] * (xrow[ch] - mean[ch]) + bta[ch];
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn batchnorm_backward(cache: &BnCache, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    grad_out.expect_shape(cache.xhat.shape(), "bn grad_out")?;
    let c = cache.gamma.len();
    let n = (grad_out.len() / c) as f64;
    let dy = grad_out.data();
    let xhat = cache.xhat.data();

    let mut d_beta = vec![0.0; c];
    let mut d_gamma = vec![0.0; c];
    for (dyr, hr) in dy.chunks_exact(c).zip(xhat.chunks_exact(c)) {
        for ch in 0..c {
            d_beta[ch] += dyr[ch];
            d_gamma[ch] += dyr[ch] * hr[ch];
        }
    }
    // dx = gamma·inv_std/N · (N·dy − Σdy − x̂·Σ(dy·x̂))
    let mut dx = vec![0.0; dy.len()];
    for ((dxr, dyr), hr) in dx.chunks_exact_mut(c).zip(dy.chunks_exact(c)).zip(xhat.chunks_exact(c)) {
        for ch in 0..c {
            let k = cache.gamma[ch] * cache.inv_std[ch] / n;
            dxr[ch] = k * (n * dyr[ch] - d_beta[ch] - hr[ch] * d_gamma[ch]);
        }
    }
    Ok((
        Tensor::new(grad_out.shape().to_vec(), dx)?,
        Tensor::new(vec![c], d_gamma)?,
        Tensor::new(vec![c], d_beta)?,
    ))
}

pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// Gradient flows where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.expect_shape(input.shape(), "relu grad_out")?;
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Argmax positions recorded by [`maxpool_forward`].
#[derive(Debug, Clone)]
pub struct PoolMask {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// Output length of ceil-mode pooling with window and stride `pool`.
pub fn pooled_len(len: usize, pool: usize) -> usize {
    len.div_ceil(pool)
}

/// Non-overlapping max pooling of `pool` rows along the height axis; a
/// trailing partial window is pooled on its own. Ties keep the first row.
pub fn maxpool_forward(input: &Tensor, pool: usize) -> Result<(Tensor, PoolMask)> {
    let [b, h, w, c] = input.dims4()?;
    if pool == 0 {
        return Err(Error::ShapeMismatch("pool size 0".into()));
    }
    let oh = pooled_len(h, pool);
    let row = w * c;
    let x = input.data();
    let mut out = vec![0.0; b * oh * row];
    let mut argmax = vec![0usize; out.len()];
    for s in 0..b {
        for oi in 0..oh {
            let first = s * h * row + oi * pool * row;
            let dst = (s * oh + oi) * row;
            out[dst..dst + row].copy_from_slice(&x[first..first + row]);
            for (k, a) in argmax[dst..dst + row].iter_mut().enumerate() {
                *a = first + k;
            }
            for r in 1..pool.min(h - oi * pool) {
                let src = first + r * row;
                for k in 0..row {
                    if x[src + k] > out[dst + k] {
                        out[dst + k] = x[src + k];
                        argmax[dst + k] = src + k;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(vec![b, oh, w, c], out)?,
        PoolMask {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool_backward(mask: &PoolMask, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.len() != mask.argmax.len() {
        return Err(Error::ShapeMismatch(format!(
            "pool grad_out has {} values, mask {}",
            grad_out.len(),
            mask.argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(&mask.input_shape);
    let d = dx.data_mut();
    for (&at, &g) in mask.argmax.iter().zip(grad_out.data()) {
        d[at] += g;
    }
    Ok(dx)
}

/// Inverted dropout. In train mode each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; the returned mask
/// holds the per-element factor. Infer mode (or `rate == 0`) is the identity
/// and draws nothing from `rng`.
pub fn dropout<R: Rng + ?Sized>(input: &Tensor, rate: f64, mode: Mode, rng: &mut R) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok((Tensor::new(input.shape().to_vec(), data)?, Some(mask)))
}

pub fn dropout_backward(mask: Option<&[f64]>, grad_out: &Tensor) -> Result<Tensor> {
    match mask {
        None => Ok(grad_out.clone()),
        Some(m) if m.len() == grad_out.len() => {
            let data = grad_out.data().iter().zip(m).map(|(g, m)| g * m).collect();
            Tensor::new(grad_out.shape().to_vec(), data)
        }
        Some(m) => Err(Error::ShapeMismatch(format!(
            "dropout mask has {} values, grad {}",
            m.len(),
            grad_out.len()
        ))),
    }
}

/// `input (B, D) · weights (D, U) + bias`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [b, d] = input.dims2()?;
    let [wd, u] = weights.dims2()?;
    if wd != d {
        return Err(Error::ShapeMismatch(format!("dense expects {wd} inputs, got {d}")));
    }
    bias.expect_shape(&[u], "dense bias")?;
    let mut out = vec![0.0; b * u];
    for row in out.chunks_exact_mut(u) {
        row.copy_from_slice(bias.data());
    }
    gemm(b, d, u, input.data(), (d, 1), weights.data(), (u, 1), 1.0, &mut out);
    Tensor::new(vec![b, u], out)
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn dense_backward(input: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let [b, d] = input.dims2()?;
    let [_, u] = weights.dims2()?;
    grad_out.expect_shape(&[b, u], "dense grad_out")?;
    let mut dx = vec![0.0; b * d];
    gemm(b, u, d, grad_out.data(), (u, 1), weights.data(), (1, u), 0.0, &mut dx);
    let mut dw = vec![0.0; d * u];
    gemm(d, b, u, input.data(), (1, d), grad_out.data(), (u, 1), 0.0, &mut dw);
    let mut db = vec![0.0; u];
    for row in grad_out.data().chunks_exact(u) {
        for (acc, g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    Ok((Tensor::new(vec![b, d], dx)?, Tensor::new(vec![d, u], dw)?, Tensor::new(vec![u], db)?))
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let [_, k] = logits.dims2()?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Tensor::new(logits.shape().to_vec(), out)
}

pub const PROB_FLOOR: f64 = 1e-12;

/// Mean negative log-likelihood of the integer labels, and its gradient with
/// respect to the logits that produced `probs` through [`softmax`].
pub fn sparse_categorical_crossentropy(probs: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let [b, k] = probs.dims2()?;
    if labels.len() != b {
        return Err(Error::ShapeMismatch(format!("{} labels for {b} rows", labels.len())));
    }
    if b == 0 {
        return Err(Error::EmptyBatch);
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label: bad, classes: k });
    }
    let mut loss = 0.0;
    let mut grad = probs.data().to_vec();
    for (i, (row, &label)) in grad.chunks_exact_mut(k).zip(labels).enumerate() {
        let p = probs.data()[i * k + label];
        loss -= p.max(PROB_FLOOR).ln();
        row[label] -= 1.0;
        for g in row.iter_mut() {
            *g /= b as f64;
        }
    }
    Ok((loss / b as f64, Tensor::new(vec![b, k], grad)?))
}
