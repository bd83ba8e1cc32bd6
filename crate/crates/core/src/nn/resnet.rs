//! Fixed-architecture 1D ResNet with hand-written backprop.
//!
//! `stem conv -> BN -> ReLU -> residual blocks -> global average pool ->
//! linear head`. Each block is `conv -> BN -> ReLU -> conv -> BN` plus a
//! shortcut (identity, or a strided 1x1 conv and BN when the shape
//! changes), followed by ReLU. The first block of every stage after the
//! first downsamples by 2.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ops::{
    batch_norm_backward, batch_norm_eval, batch_norm_train, conv1d_backward, conv1d_forward,
    relu_backward_in_place, relu_in_place, BatchNormCache, Conv1dSpec,
};
use super::scalar::matmul;
use super::Scalar;
use crate::words::{WORD_CHANNELS, WORD_SAMPLES};
use crate::{Error, Result, CLASS_COUNT};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemConfig {
    pub kernel: usize,
    pub stride: usize,
    pub out_channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resnet1dConfig {
    pub input_channels: usize,
    pub input_length: usize,
    pub stem: StemConfig,
    pub stage_widths: Vec<usize>,
    pub stage_blocks: Vec<usize>,
    pub block_kernel: usize,
    pub class_count: usize,
}

impl Resnet1dConfig {
    /// 29 conv layers: stem plus 14 blocks in stages of (3, 4, 4, 3).
    pub fn teacher() -> Self {
        Self {
            input_channels: WORD_CHANNELS,
            input_length: WORD_SAMPLES,
            stem: StemConfig {
                kernel: 7,
                stride: 2,
                out_channels: 16,
            },
            stage_widths: vec![16, 32, 64, 128],
            stage_blocks: vec![3, 4, 4, 3],
            block_kernel: 3,
            class_count: CLASS_COUNT,
        }
    }

    /// 9 conv layers: one block per stage at half width.
    pub fn student() -> Self {
        Self {
            stem: StemConfig {
                out_channels: 8,
                ..Self::teacher().stem
            },
            stage_widths: vec![8, 16, 32, 64],
            stage_blocks: vec![1, 1, 1, 1],
            ..Self::teacher()
        }
    }

    /// Same depth as [`teacher`](Self::teacher) at a width and input
    /// stride that train in seconds per epoch on one core.
    pub fn compact_teacher() -> Self {
        Self {
            stem: StemConfig {
                kernel: 9,
                stride: 8,
                out_channels: 4,
            },
            stage_widths: vec![4, 8, 8, 16],
            ..Self::teacher()
        }
    }

    /// Student counterpart of [`compact_teacher`](Self::compact_teacher):
    /// one block per stage at twice the width, still well under a fifth of
    /// a six-member compact ensemble.
    pub fn compact_student() -> Self {
        Self {
            stem: StemConfig {
                out_channels: 8,
                ..Self::compact_teacher().stem
            },
            stage_widths: vec![8, 16, 16, 32],
            stage_blocks: vec![1, 1, 1, 1],
            ..Self::teacher()
        }
    }

    pub fn block_count(&self) -> usize {
        self.stage_blocks.iter().sum()
    }

    /// Stem plus two per block; shortcut projections are not counted.
    pub fn conv_layer_count(&self) -> usize {
        1 + 2 * self.block_count()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.input_channels == 0 || self.class_count == 0 {
            return bad("input channels and class count must be positive".into());
        }
        if self.stage_widths.is_empty() || self.stage_widths.len() != self.stage_blocks.len() {
            return bad(format!(
                "{} stage widths for {} stage block counts",
                self.stage_widths.len(),
                self.stage_blocks.len()
            ));
        }
        if self.stage_widths.contains(&0) || self.stage_blocks.contains(&0) {
            return bad("stage widths and block counts must be positive".into());
        }
        if self.block_kernel.is_multiple_of(2) || self.stem.kernel.is_multiple_of(2) {
            return bad("kernels must be odd for same padding".into());
        }
        if self.stem.out_channels == 0 || self.stem.stride == 0 {
            return bad("degenerate stem".into());
        }
        if self.input_length < self.stem.kernel {
            return bad(format!("input length {} below stem kernel", self.input_length));
        }
        Ok(())
    }
}

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    /// Normal with standard deviation `sqrt(gain / fan_in)`.
    Normal { fan_in: usize, gain: f64 },
    Zeros,
    Ones,
}

/// Name and shape of one stored array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Conv {
    spec: Conv1dSpec,
    weight: Range<usize>,
}

#[derive(Debug, Clone)]
struct Norm {
    gamma: Range<usize>,
    beta: Range<usize>,
    mean: Range<usize>,
    var: Range<usize>,
}

#[derive(Debug, Clone)]
struct Block {
    conv1: Conv,
    bn1: Norm,
    conv2: Conv,
    bn2: Norm,
    shortcut: Option<(Conv, Norm)>,
    in_len: usize,
    out_len: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    stem: Conv,
    stem_bn: Norm,
    stem_len: usize,
    blocks: Vec<Block>,
    features: usize,
    head_w: Range<usize>,
    head_b: Range<usize>,
    params: Vec<(ParamInfo, Range<usize>, Init)>,
    buffers: Vec<(ParamInfo, Range<usize>, Init)>,
}

#[derive(Default)]
struct Builder {
    params: Vec<(ParamInfo, Range<usize>, Init)>,
    buffers: Vec<(ParamInfo, Range<usize>, Init)>,
    param_len: usize,
    buffer_len: usize,
}

impl Builder {
    fn param(&mut self, name: String, shape: Vec<usize>, init: Init) -> Range<usize> {
        let n: usize = shape.iter().product();
        let r = self.param_len..self.param_len + n;
        self.param_len += n;
        self.params.push((ParamInfo { name, shape }, r.clone(), init));
        r
    }

    fn buffer(&mut self, name: String, n: usize, init: Init) -> Range<usize> {
        let r = self.buffer_len..self.buffer_len + n;
        self.buffer_len += n;
        self.buffers.push((ParamInfo { name, shape: vec![n] }, r.clone(), init));
        r
    }

    fn conv(&mut self, name: &str, spec: Conv1dSpec) -> Conv {
        let fan_in = spec.in_channels * spec.kernel;
        let weight = self.param(
            format!("{name}.weight"),
            vec![spec.out_channels, spec.in_channels, spec.kernel],
            Init::Normal { fan_in, gain: 2.0 },
        );
        Conv { spec, weight }
    }

    fn norm(&mut self, name: &str, channels: usize) -> Norm {
        Norm {
            gamma: self.param(format!("{name}.gamma"), vec![channels], Init::Ones),
            beta: self.param(format!("{name}.beta"), vec![channels], Init::Zeros),
            mean: self.buffer(format!("{name}.running_mean"), channels, Init::Zeros),
            var: self.buffer(format!("{name}.running_var"), channels, Init::Ones),
        }
    }
}

impl Layout {
    fn new(cfg: &Resnet1dConfig) -> Self {
        let mut b = Builder::default();
        let stem_spec = Conv1dSpec {
            in_channels: cfg.input_channels,
            out_channels: cfg.stem.out_channels,
            kernel: cfg.stem.kernel,
            stride: cfg.stem.stride,
            padding: cfg.stem.kernel / 2,
        };
        let stem = b.conv("stem.conv", stem_spec);
        let stem_bn = b.norm("stem.bn", cfg.stem.out_channels);
        let stem_len = stem_spec.out_len(cfg.input_length);

        let mut blocks = Vec::new();
        let (mut channels, mut len) = (cfg.stem.out_channels, stem_len);
        for (s, (&width, &count)) in cfg.stage_widths.iter().zip(&cfg.stage_blocks).enumerate() {
            for k in 0..count {
                let stride = if s > 0 && k == 0 { 2 } else { 1 };
                let name = format!("stage{}.block{}", s + 1, k + 1);
                let spec1 = Conv1dSpec {
                    in_channels: channels,
                    out_channels: width,
                    kernel: cfg.block_kernel,
                    stride,
                    padding: cfg.block_kernel / 2,
                };
                let spec2 = Conv1dSpec {
                    in_channels: width,
                    stride: 1,
                    ..spec1
                };
                let conv1 = b.conv(&format!("{name}.conv1"), spec1);
                let bn1 = b.norm(&format!("{name}.bn1"), width);
                let conv2 = b.conv(&format!("{name}.conv2"), spec2);
                let bn2 = b.norm(&format!("{name}.bn2"), width);
                let shortcut = (stride != 1 || channels != width).then(|| {
                    let spec = Conv1dSpec {
                        in_channels: channels,
                        out_channels: width,
                        kernel: 1,
                        stride,
                        padding: 0,
                    };
                    (
                        b.conv(&format!("{name}.shortcut.conv"), spec),
                        b.norm(&format!("{name}.shortcut.bn"), width),
                    )
                });
                let out_len = spec1.out_len(len);
                blocks.push(Block {
                    conv1,
                    bn1,
                    conv2,
                    bn2,
                    shortcut,
                    in_len: len,
                    out_len,
                });
                channels = width;
                len = out_len;
            }
        }
        let head_w = b.param(
            "head.weight".into(),
            vec![cfg.class_count, channels],
            Init::Normal {
                fan_in: channels,
                gain: 1.0,
            },
        );
        let head_b = b.param("head.bias".into(), vec![cfg.class_count], Init::Zeros);
        Self {
            stem,
            stem_bn,
            stem_len,
            blocks,
            features: channels,
            head_w,
            head_b,
            params: b.params,
            buffers: b.buffers,
        }
    }

    fn param_len(&self) -> usize {
        self.params.last().map_or(0, |p| p.1.end)
    }

    fn buffer_len(&self) -> usize {
        self.buffers.last().map_or(0, |p| p.1.end)
    }

    fn norms(&self) -> impl Iterator<Item = &Norm> {
        std::iter::once(&self.stem_bn).chain(self.blocks.iter().flat_map(|b| {
            [&b.bn1, &b.bn2]
                .into_iter()
                .chain(b.shortcut.as_ref().map(|(_, n)| n))
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in normalization layers; keeps a trace for backprop.
    Train,
    /// Running statistics; deterministic per sample.
    Eval,
}

#[derive(Debug, Clone)]
struct BlockTrace<T> {
    h1: Vec<T>,
    bn1: BatchNormCache<T>,
    bn2: BatchNormCache<T>,
    shortcut: Option<BatchNormCache<T>>,
}

/// Intermediate values of a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    batch: usize,
    input: Vec<T>,
    stem_bn: BatchNormCache<T>,
    /// `acts[0]` is the stem output, `acts[i + 1]` the output of block `i`.
    acts: Vec<Vec<T>>,
    blocks: Vec<BlockTrace<T>>,
    pooled: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Forward<T> {
    /// `[batch][class_count]`, row-major.
    pub logits: Vec<T>,
    /// Present in [`Mode::Train`].
    pub trace: Option<Trace<T>>,
}

/// Network with all trainable values in one flat vector.
#[derive(Debug, Clone)]
pub struct Resnet1d<T = f32> {
    config: Resnet1dConfig,
    layout: Layout,
    params: Vec<T>,
    buffers: Vec<T>,
}

impl<T: Scalar> PartialEq for Resnet1d<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params && self.buffers == other.buffers
    }
}

impl<T: Scalar> Resnet1d<T> {
    /// Kaiming-normal convolutions, fan-in scaled head, zero biases, unit
    /// normalization scales.
    pub fn new(config: Resnet1dConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, range, init) in &model.layout.params {
            for v in &mut model.params[range.clone()] {
                *v = match *init {
                    Init::Normal { fan_in, gain } => {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        T::of(z * (gain / fan_in as f64).sqrt())
                    }
                    Init::Zeros => T::zero(),
                    Init::Ones => T::one(),
                };
            }
        }
        Ok(model)
    }

    /// Every parameter zero; running statistics at their initial values.
    pub fn zeroed(config: Resnet1dConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let params = vec![T::zero(); layout.param_len()];
        let mut buffers = vec![T::zero(); layout.buffer_len()];
        for (_, range, init) in &layout.buffers {
            if *init == Init::Ones {
                buffers[range.clone()].fill(T::one());
            }
        }
        Ok(Self {
            config,
            layout,
            params,
            buffers,
        })
    }

    /// Rebuilds a model from stored values; lengths must match the layout.
    pub fn from_parts(config: Resnet1dConfig, params: Vec<T>, buffers: Vec<T>) -> Result<Self> {
        let mut model = Self::zeroed(config)?;
        if params.len() != model.params.len() || buffers.len() != model.buffers.len() {
            return Err(Error::invalid(format!(
                "expected {} parameters and {} buffer values, got {} and {}",
                model.params.len(),
                model.buffers.len(),
                params.len(),
                buffers.len()
            )));
        }
        model.params = params;
        model.buffers = buffers;
        Ok(model)
    }

    pub fn config(&self) -> &Resnet1dConfig {
        &self.config
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[T] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [T] {
        &mut self.buffers
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn param_info(&self) -> Vec<ParamInfo> {
        self.layout.params.iter().map(|p| p.0.clone()).collect()
    }

    pub fn buffer_info(&self) -> Vec<ParamInfo> {
        self.layout.buffers.iter().map(|p| p.0.clone()).collect()
    }

    /// Parameter slice by name.
    pub fn param(&self, name: &str) -> Option<&[T]> {
        self.layout
            .params
            .iter()
            .find(|p| p.0.name == name)
            .map(|p| &self.params[p.1.clone()])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let range = self.layout.params.iter().find(|p| p.0.name == name)?.1.clone();
        Some(&mut self.params[range])
    }

    /// Values per input sample.
    pub fn input_len(&self) -> usize {
        self.config.input_channels * self.config.input_length
    }

    /// Output length of the last block.
    pub fn feature_len(&self) -> usize {
        self.layout.blocks.last().map_or(self.layout.stem_len, |b| b.out_len)
    }

    fn conv(&self, c: &Conv, x: &[T], batch: usize, len: usize) -> Vec<T> {
        conv1d_forward(&c.spec, x, batch, len, &self.params[c.weight.clone()], None)
    }

    fn norm(&self, n: &Norm, x: &[T], mode: Mode) -> (Vec<T>, Option<BatchNormCache<T>>) {
        let gamma = &self.params[n.gamma.clone()];
        let beta = &self.params[n.beta.clone()];
        match mode {
            Mode::Train => {
                let (y, cache) = batch_norm_train(x, gamma, beta, BN_EPS);
                (y, Some(cache))
            }
            Mode::Eval => (
                batch_norm_eval(
                    x,
                    gamma,
                    beta,
                    &self.buffers[n.mean.clone()],
                    &self.buffers[n.var.clone()],
                    BN_EPS,
                ),
                None,
            ),
        }
    }

    fn block_forward(&self, blk: &Block, x: &[T], batch: usize, mode: Mode) -> (Vec<T>, Option<BlockTrace<T>>) {
        let c1 = self.conv(&blk.conv1, x, batch, blk.in_len);
        let (mut h1, bn1) = self.norm(&blk.bn1, &c1, mode);
        drop(c1);
        relu_in_place(&mut h1);
        let c2 = self.conv(&blk.conv2, &h1, batch, blk.out_len);
        let (mut out, bn2) = self.norm(&blk.bn2, &c2, mode);
        drop(c2);
        let shortcut = match &blk.shortcut {
            Some((conv, norm)) => {
                let s = self.conv(conv, x, batch, blk.in_len);
                let (s, cache) = self.norm(norm, &s, mode);
                for (o, v) in out.iter_mut().zip(&s) {
                    *o = *o + *v;
                }
                cache
            }
            None => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = *o + v;
                }
                None
            }
        };
        relu_in_place(&mut out);
        let trace = match mode {
            Mode::Train => Some(BlockTrace {
                h1,
                bn1: bn1.expect("train mode"),
                bn2: bn2.expect("train mode"),
                shortcut,
            }),
            Mode::Eval => None,
        };
        (out, trace)
    }

    /// Forward pass on a `[C_in][B][L]` batch.
    pub fn forward(&self, x: &[T], batch: usize, mode: Mode) -> Result<Forward<T>> {
        if batch == 0 || x.len() != batch * self.input_len() {
            return Err(Error::invalid(format!(
                "expected {batch} x {} x {} input values, got {}",
                self.config.input_channels,
                self.config.input_length,
                x.len()
            )));
        }
        let layout = &self.layout;
        let stem = self.conv(&layout.stem, x, batch, self.config.input_length);
        let (mut a, stem_bn) = self.norm(&layout.stem_bn, &stem, mode);
        drop(stem);
        relu_in_place(&mut a);

        let train = mode == Mode::Train;
        let mut acts = Vec::new();
        let mut block_traces = Vec::new();
        for blk in &layout.blocks {
            let (out, trace) = self.block_forward(blk, &a, batch, mode);
            if train {
                acts.push(std::mem::replace(&mut a, out));
                block_traces.push(trace.expect("train mode"));
            } else {
                a = out;
            }
        }

        // global average pool to [C][B]
        let len = self.feature_len();
        let inv = T::one() / T::from_usize(len).unwrap();
        let pooled: Vec<T> = a
            .chunks(len)
            .map(|row| row.iter().copied().sum::<T>() * inv)
            .collect();
        let k = self.config.class_count;
        let mut logits = vec![T::zero(); batch * k];
        matmul(
            batch,
            layout.features,
            k,
            &pooled,
            true,
            &self.params[layout.head_w.clone()],
            true,
            &mut logits,
            false,
        );
        let bias = &self.params[layout.head_b.clone()];
        for row in logits.chunks_mut(k) {
            for (v, &b) in row.iter_mut().zip(bias) {
                *v = *v + b;
            }
        }
        let trace = train.then(|| {
            acts.push(a);
            Trace {
                batch,
                input: x.to_vec(),
                stem_bn: stem_bn.expect("train mode"),
                acts,
                blocks: block_traces,
                pooled,
            }
        });
        Ok(Forward { logits, trace })
    }

    /// Logits of one sample given channel-major `[C][L]` values, in eval mode.
    pub fn forward_sample(&self, sample: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(sample, 1, Mode::Eval)?.logits)
    }

    fn conv_backward(&self, c: &Conv, x: &[T], batch: usize, len: usize, dy: &[T], grads: &mut [T], need_dx: bool) -> Option<Vec<T>> {
        conv1d_backward(
            &c.spec,
            x,
            batch,
            len,
            &self.params[c.weight.clone()],
            dy,
            &mut grads[c.weight.clone()],
            None,
            need_dx,
        )
    }

    fn norm_backward(&self, n: &Norm, cache: &BatchNormCache<T>, dy: &[T], grads: &mut [T]) -> Vec<T> {
        let channels = n.gamma.len();
        let mut dgamma = vec![T::zero(); channels];
        let mut dbeta = vec![T::zero(); channels];
        let dx = batch_norm_backward(dy, cache, &self.params[n.gamma.clone()], &mut dgamma, &mut dbeta);
        for (g, d) in grads[n.gamma.clone()].iter_mut().zip(dgamma) {
            *g = *g + d;
        }
        for (g, d) in grads[n.beta.clone()].iter_mut().zip(dbeta) {
            *g = *g + d;
        }
        dx
    }

    #[allow(clippy::too_many_arguments)]
    fn block_backward(
        &self,
        blk: &Block,
        t: &BlockTrace<T>,
        x: &[T],
        out: &[T],
        mut d: Vec<T>,
        batch: usize,
        grads: &mut [T],
    ) -> Vec<T> {
        relu_backward_in_place(out, &mut d);
        let dc2 = self.norm_backward(&blk.bn2, &t.bn2, &d, grads);
        let mut dh1 = self
            .conv_backward(&blk.conv2, &t.h1, batch, blk.out_len, &dc2, grads, true)
            .expect("requested");
        relu_backward_in_place(&t.h1, &mut dh1);
        let dc1 = self.norm_backward(&blk.bn1, &t.bn1, &dh1, grads);
        let mut dx = self
            .conv_backward(&blk.conv1, x, batch, blk.in_len, &dc1, grads, true)
            .expect("requested");
        match (&blk.shortcut, &t.shortcut) {
            (Some((conv, norm)), Some(cache)) => {
                let ds = self.norm_backward(norm, cache, &d, grads);
                let dxs = self
                    .conv_backward(conv, x, batch, blk.in_len, &ds, grads, true)
                    .expect("requested");
                for (a, b) in dx.iter_mut().zip(dxs) {
                    *a = *a + b;
                }
            }
            _ => {
                for (a, &b) in dx.iter_mut().zip(&d) {
                    *a = *a + b;
                }
            }
        }
        dx
    }

    /// Writes `dL/dparams` into `grads` given `dL/dlogits` (`[B][K]`).
    pub fn backward(&self, trace: &Trace<T>, dlogits: &[T], grads: &mut [T]) {
        assert_eq!(grads.len(), self.params.len());
        let batch = trace.batch;
        let k = self.config.class_count;
        let c = self.layout.features;
        assert_eq!(dlogits.len(), batch * k);
        grads.fill(T::zero());

        let layout = &self.layout;
        matmul(k, batch, c, dlogits, true, &trace.pooled, true, &mut grads[layout.head_w.clone()], true);
        {
            let db = &mut grads[layout.head_b.clone()];
            for row in dlogits.chunks(k) {
                for (g, &v) in db.iter_mut().zip(row) {
                    *g = *g + v;
                }
            }
        }
        let mut dpooled = vec![T::zero(); c * batch];
        matmul(c, k, batch, &self.params[layout.head_w.clone()], true, dlogits, true, &mut dpooled, false);

        let len = self.feature_len();
        let inv = T::one() / T::from_usize(len).unwrap();
        let mut d: Vec<T> = dpooled
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g * inv, len))
            .collect();

        for (i, blk) in layout.blocks.iter().enumerate().rev() {
            d = self.block_backward(blk, &trace.blocks[i], &trace.acts[i], &trace.acts[i + 1], d, batch, grads);
        }

        relu_backward_in_place(&trace.acts[0], &mut d);
        let dstem = self.norm_backward(&layout.stem_bn, &trace.stem_bn, &d, grads);
        self.conv_backward(&layout.stem, &trace.input, batch, self.config.input_length, &dstem, grads, false);
    }

    /// Exponential moving average of the batch statistics in `trace`
    /// (unbiased variance), as used by eval mode.
    pub fn update_running_stats(&mut self, trace: &Trace<T>, momentum: f64) {
        let caches = std::iter::once(&trace.stem_bn).chain(trace.blocks.iter().flat_map(|b| {
            [&b.bn1, &b.bn2].into_iter().chain(b.shortcut.as_ref())
        }));
        let m = T::of(momentum);
        let keep = T::one() - m;
        for (norm, cache) in self.layout.norms().zip(caches) {
            let count = cache.xhat.len() / cache.mean.len();
            let unbias = if count > 1 {
                count as f64 / (count - 1) as f64
            } else {
                1.0
            };
            for (r, &v) in self.buffers[norm.mean.clone()].iter_mut().zip(&cache.mean) {
                *r = keep * *r + m * T::of(v);
            }
            for (r, &v) in self.buffers[norm.var.clone()].iter_mut().zip(&cache.var) {
                *r = keep * *r + m * T::of(v * unbias);
            }
        }
    }

    /// Converts every stored value to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Resnet1d<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.f64())).collect();
        Resnet1d {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: conv(&self.params),
            buffers: conv(&self.buffers),
        }
    }
}

/// Rearranges sample-major `[C][L]` rows into a `[C][B][L]` batch.
pub fn pack_batch<T: Scalar>(samples: &[&[f32]], channels: usize, len: usize) -> Vec<T> {
    let batch = samples.len();
    let mut out = vec![T::zero(); channels * batch * len];
    for (b, s) in samples.iter().enumerate() {
        debug_assert_eq!(s.len(), channels * len);
        for c in 0..channels {
            let dst = &mut out[(c * batch + b) * len..][..len];
            for (d, &v) in dst.iter_mut().zip(&s[c * len..][..len]) {
                *d = T::of(v as f64);
            }
        }
    }
    out
}
