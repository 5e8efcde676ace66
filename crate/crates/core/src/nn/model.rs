//! The trail classifier: three convolution blocks
//! (conv → batch norm → ReLU → max pool → dropout) followed by a 128-unit
//! ReLU dense layer and a 3-way softmax.

use rand::Rng;

use super::layers::{
    batchnorm_backward, batchnorm_forward, batchnorm_infer, conv2d_backward, conv2d_forward, dense_backward,
    dense_forward, dropout, dropout_backward, maxpool_backward, maxpool_forward, pooled_len, relu, relu_backward,
    softmax, sparse_categorical_crossentropy, BnCache, BnSettings, BnState, ConvCache, Mode, PoolMask,
};
use super::Tensor;
use crate::error::{Error, Result};

/// Kernel extent across the sensor-row axis.
pub const KERNEL_WIDTH: usize = 2;
/// Pooling window (and stride) along the time axis.
pub const POOL_HEIGHT: usize = 2;
/// Sensor rows in the input image.
pub const INPUT_WIDTH: usize = 4;
/// x, y, z.
pub const INPUT_CHANNELS: usize = 3;
/// Kernel lengths evaluated in the experiment grid.
pub const KERNEL_LENGTHS: [usize; 5] = [5, 10, 20, 40, 60];
pub const BLOCKS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub window_points: usize,
    pub kernel_len: usize,
    pub filters: [usize; BLOCKS],
    pub dense_units: usize,
    pub classes: usize,
    pub dropout_rate: f64,
    pub l2_coeff: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl ModelConfig {
    pub fn new(window_points: usize, kernel_len: usize) -> Self {
        ModelConfig {
            window_points,
            kernel_len,
            filters: [4, 8, 16],
            dense_units: 128,
            classes: 3,
            dropout_rate: 0.3,
            l2_coeff: 1e-2,
            bn_momentum: 0.99,
            bn_epsilon: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_len > self.window_points {
            return Err(Error::KernelTooLong {
                kernel: self.kernel_len,
                window: self.window_points,
            });
        }
        let counts = [self.window_points, self.kernel_len, self.dense_units, self.classes];
        if counts.iter().chain(&self.filters).any(|&c| c == 0) {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!("dropout rate {}", self.dropout_rate)));
        }
        if !(self.l2_coeff >= 0.0 && self.l2_coeff.is_finite()) {
            return Err(Error::InvalidConfig(format!("l2 coefficient {}", self.l2_coeff)));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) || !(self.bn_epsilon > 0.0) {
            return Err(Error::InvalidConfig("batch norm momentum/epsilon".into()));
        }
        Ok(())
    }

    /// Time-axis length entering each block, then after the last pool.
    pub fn heights(&self) -> [usize; BLOCKS + 1] {
        let mut h = [self.window_points; BLOCKS + 1];
        for i in 1..=BLOCKS {
            h[i] = pooled_len(h[i - 1], POOL_HEIGHT);
        }
        h
    }

    pub fn flatten_size(&self) -> usize {
        self.heights()[BLOCKS] * INPUT_WIDTH * self.filters[BLOCKS - 1]
    }

    fn in_channels(&self, block: usize) -> usize {
        if block == 0 {
            INPUT_CHANNELS
        } else {
            self.filters[block - 1]
        }
    }

    pub fn bn_settings(&self) -> BnSettings {
        BnSettings {
            momentum: self.bn_momentum,
            epsilon: self.bn_epsilon,
        }
    }

    /// Stored values including batch-norm running statistics.
    pub fn parameter_count(&self) -> usize {
        let mut total = 0;
        for b in 0..BLOCKS {
            let (cin, cout) = (self.in_channels(b), self.filters[b]);
            total += self.kernel_len * KERNEL_WIDTH * cin * cout + cout;
            total += 4 * cout;
        }
        total += self.flatten_size() * self.dense_units + self.dense_units;
        total += self.dense_units * self.classes + self.classes;
        total
    }

    pub fn input_shape(&self, batch: usize) -> [usize; 4] {
        [batch, self.window_points, INPUT_WIDTH, INPUT_CHANNELS]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernels: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub state: BnState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub conv: [ConvLayer; BLOCKS],
    pub bn: [BatchNormLayer; BLOCKS],
    pub dense1: DenseLayer,
    pub dense2: DenseLayer,
    generation: u64,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.conv == other.conv
            && self.bn == other.bn
            && self.dense1 == other.dense1
            && self.dense2 == other.dense2
    }
}

/// Number of trainable tensors, in [`ModelParams::trainable`] order.
pub const TRAINABLE_TENSORS: usize = BLOCKS * 4 + 4;

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-limit..limit)).collect()).expect("shape product")
}

/// Allocates and initializes a model: Glorot-uniform weights, zero biases,
/// unit gamma, zero beta, running statistics (0, 1).
pub fn build_model(config: &ModelConfig, rng: &mut impl Rng) -> Result<ModelParams> {
    config.validate()?;
    let m = config.kernel_len;
    let conv: Vec<ConvLayer> = (0..BLOCKS)
        .map(|b| {
            let (cin, cout) = (config.in_channels(b), config.filters[b]);
            let field = m * KERNEL_WIDTH;
            ConvLayer {
                kernels: glorot(&[m, KERNEL_WIDTH, cin, cout], field * cin, field * cout, rng),
                bias: Tensor::zeros(&[cout]),
            }
        })
        .collect();
    let bn: Vec<BatchNormLayer> = config
        .filters
        .iter()
        .map(|&c| BatchNormLayer {
            gamma: Tensor::filled(&[c], 1.0),
            beta: Tensor::zeros(&[c]),
            state: BnState::new(c),
        })
        .collect();
    let (flat, hidden) = (config.flatten_size(), config.dense_units);
    let dense1 = DenseLayer {
        weights: glorot(&[flat, hidden], flat, hidden, rng),
        bias: Tensor::zeros(&[hidden]),
    };
    let dense2 = DenseLayer {
        weights: glorot(&[hidden, config.classes], hidden, config.classes, rng),
        bias: Tensor::zeros(&[config.classes]),
    };
    Ok(ModelParams {
        config: config.clone(),
        conv: conv.try_into().expect("three blocks"),
        bn: bn.try_into().expect("three blocks"),
        dense1,
        dense2,
        generation: 0,
    })
}

impl ModelParams {
    /// Trainable tensors: per block conv kernels, conv bias, bn gamma, bn
    /// beta; then dense1 weights/bias and dense2 weights/bias.
    pub fn trainable(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(TRAINABLE_TENSORS);
        for (c, b) in self.conv.iter().zip(&self.bn) {
            out.extend([&c.kernels, &c.bias, &b.gamma, &b.beta]);
        }
        out.extend([&self.dense1.weights, &self.dense1.bias, &self.dense2.weights, &self.dense2.bias]);
        out
    }

    /// Mutable view of [`Self::trainable`]. Invalidates outstanding
    /// forward caches.
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        self.generation += 1;
        let mut out = Vec::with_capacity(TRAINABLE_TENSORS);
        for (c, b) in self.conv.iter_mut().zip(self.bn.iter_mut()) {
            out.extend([&mut c.kernels, &mut c.bias, &mut b.gamma, &mut b.beta]);
        }
        out.extend([
            &mut self.dense1.weights,
            &mut self.dense1.bias,
            &mut self.dense2.weights,
            &mut self.dense2.bias,
        ]);
        out
    }

    /// Every stored tensor in checkpoint order: per block conv kernels,
    /// conv bias, gamma, beta, running mean, running var; then the dense
    /// layers.
    pub fn all_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for (c, b) in self.conv.iter().zip(&self.bn) {
            out.extend([
                &c.kernels,
                &c.bias,
                &b.gamma,
                &b.beta,
                &b.state.running_mean,
                &b.state.running_var,
            ]);
        }
        out.extend([&self.dense1.weights, &self.dense1.bias, &self.dense2.weights, &self.dense2.bias]);
        out
    }

    pub(crate) fn all_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.generation += 1;
        let mut out = Vec::new();
        for (c, b) in self.conv.iter_mut().zip(self.bn.iter_mut()) {
            out.extend([
                &mut c.kernels,
                &mut c.bias,
                &mut b.gamma,
                &mut b.beta,
                &mut b.state.running_mean,
                &mut b.state.running_var,
            ]);
        }
        out.extend([
            &mut self.dense1.weights,
            &mut self.dense1.bias,
            &mut self.dense2.weights,
            &mut self.dense2.bias,
        ]);
        out
    }

    pub fn stored_value_count(&self) -> usize {
        self.all_tensors().iter().map(|t| t.len()).sum()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }
}

/// Gradients aligned with [`ModelParams::trainable`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Gradients {
            tensors: params.trainable().into_iter().map(Tensor::zeros_like).collect(),
        }
    }
}

/// `coeff · Σ w²` over the three convolution kernels, and its gradient.
pub fn l2_penalty(params: &ModelParams, coeff: f64) -> (f64, Gradients) {
    let mut grads = Gradients::zeros_like(params);
    let mut penalty = 0.0;
    for (b, conv) in params.conv.iter().enumerate() {
        penalty += coeff * conv.kernels.sum_squares();
        let g = grads.tensors[b * 4].data_mut();
        for (g, w) in g.iter_mut().zip(conv.kernels.data()) {
            *g = 2.0 * coeff * w;
        }
    }
    (penalty, grads)
}

struct BlockCache {
    conv: ConvCache,
    bn: BnCache,
    pre_relu: Tensor,
    pool: PoolMask,
    dropout: Option<Vec<f64>>,
}

/// Intermediate activations of a train-mode forward pass.
pub struct ForwardCache {
    blocks: Vec<BlockCache>,
    pooled_shape: Vec<usize>,
    flat: Tensor,
    hidden_pre: Tensor,
    hidden: Tensor,
    probs: Tensor,
    generation: u64,
}

impl ForwardCache {
    pub fn probabilities(&self) -> &Tensor {
        &self.probs
    }
}

fn check_batch(config: &ModelConfig, batch: &Tensor) -> Result<usize> {
    let [b, ..] = batch.dims4()?;
    batch.expect_shape(&config.input_shape(b), "model input")?;
    Ok(b)
}

/// Inference-mode forward pass: running batch-norm statistics, no dropout.
/// Pure and deterministic.
pub fn predict(params: &ModelParams, batch: &Tensor) -> Result<Tensor> {
    let cfg = &params.config;
    let b = check_batch(cfg, batch)?;
    let mut x = batch.clone();
    for (conv, bn) in params.conv.iter().zip(&params.bn) {
        let y = conv2d_forward(&x, &conv.kernels, &conv.bias)?;
        let y = batchnorm_infer(&y, &bn.gamma, &bn.beta, &bn.state, cfg.bn_settings())?;
        let y = relu(&y);
        x = maxpool_forward(&y, POOL_HEIGHT)?.0;
    }
    let flat = x.reshape(vec![b, cfg.flatten_size()])?;
    let hidden = relu(&dense_forward(&flat, &params.dense1.weights, &params.dense1.bias)?);
    let logits = dense_forward(&hidden, &params.dense2.weights, &params.dense2.bias)?;
    softmax(&logits)
}

/// Full forward pass. Train mode updates the batch-norm running statistics,
/// draws dropout masks from `rng` and returns the cache for [`backward`];
/// Infer mode is [`predict`].
pub fn forward<R: Rng + ?Sized>(
    params: &mut ModelParams,
    batch: &Tensor,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, Option<ForwardCache>)> {
    if mode == Mode::Infer {
        return Ok((predict(params, batch)?, None));
    }
    let cfg = params.config.clone();
    let b = check_batch(&cfg, batch)?;
    let mut x = batch.clone();
    let mut blocks = Vec::with_capacity(BLOCKS);
    for k in 0..BLOCKS {
        let conv = &params.conv[k];
        let y = conv2d_forward(&x, &conv.kernels, &conv.bias)?;
        let conv_cache = ConvCache {
            input: x,
            kernels: conv.kernels.clone(),
        };
        let bn = &mut params.bn[k];
        let (pre_relu, bn_cache) =
            batchnorm_forward(&y, &bn.gamma, &bn.beta, &mut bn.state, cfg.bn_settings(), Mode::Train)?;
        let activated = relu(&pre_relu);
        let (pooled, pool) = maxpool_forward(&activated, POOL_HEIGHT)?;
        let (dropped, mask) = dropout(&pooled, cfg.dropout_rate, Mode::Train, rng)?;
        blocks.push(BlockCache {
            conv: conv_cache,
            bn: bn_cache.expect("train mode caches"),
            pre_relu,
            pool,
            dropout: mask,
        });
        x = dropped;
    }
    let pooled_shape = x.shape().to_vec();
    let flat = x.reshape(vec![b, cfg.flatten_size()])?;
    let hidden_pre = dense_forward(&flat, &params.dense1.weights, &params.dense1.bias)?;
    let hidden = relu(&hidden_pre);
    let logits = dense_forward(&hidden, &params.dense2.weights, &params.dense2.bias)?;
    let probs = softmax(&logits)?;
    let cache = ForwardCache {
        blocks,
        pooled_shape,
        flat,
        hidden_pre,
        hidden,
        probs: probs.clone(),
        generation: params.generation,
    };
    Ok((probs, Some(cache)))
}

/// Gradients of `crossentropy + l2` for the batch the cache was built
/// from. Returns the loss alongside.
pub fn backward(params: &ModelParams, cache: &ForwardCache, labels: &[usize]) -> Result<(f64, Gradients)> {
    if cache.generation != params.generation {
        return Err(Error::StaleCache);
    }
    let (ce, d_logits) = sparse_categorical_crossentropy(&cache.probs, labels)?;
    let (penalty, mut grads) = l2_penalty(params, params.config.l2_coeff);

    let (d_hidden, d_w2, d_b2) = dense_backward(&cache.hidden, &params.dense2.weights, &d_logits)?;
    let d_hidden_pre = relu_backward(&cache.hidden_pre, &d_hidden)?;
    let (d_flat, d_w1, d_b1) = dense_backward(&cache.flat, &params.dense1.weights, &d_hidden_pre)?;
    let base = BLOCKS * 4;
    grads.tensors[base] = d_w1;
    grads.tensors[base + 1] = d_b1;
    grads.tensors[base + 2] = d_w2;
    grads.tensors[base + 3] = d_b2;

    let mut d = d_flat.reshape(cache.pooled_shape.clone())?;
    for k in (0..BLOCKS).rev() {
        let blk = &cache.blocks[k];
        let d_pooled = dropout_backward(blk.dropout.as_deref(), &d)?;
        let d_act = maxpool_backward(&blk.pool, &d_pooled)?;
        let d_bn_out = relu_backward(&blk.pre_relu, &d_act)?;
        let (d_conv_out, d_gamma, d_beta) = batchnorm_backward(&blk.bn, &d_bn_out)?;
        let g = conv2d_backward(&blk.conv, &d_conv_out)?;
        // the kernel slot already holds the L2 term
        for (acc, v) in grads.tensors[k * 4].data_mut().iter_mut().zip(g.kernels.data()) {
            *acc += v;
        }
        grads.tensors[k * 4 + 1] = g.bias;
        grads.tensors[k * 4 + 2] = d_gamma;
        grads.tensors[k * 4 + 3] = d_beta;
        d = g.input;
    }
    Ok((ce + penalty, grads))
}
