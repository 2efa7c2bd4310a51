use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    positional_encoding, relu, relu_backward, ConvBlock, ConvCache, EncoderCache, EncoderLayer, Init,
    Linear, Lstm, LstmCache, ParamMuts, ParamRefs,
};
use super::{lit, softmax, ModelConfig, ModelError, Scalar, Variant};
use crate::embed::SampleFeatures;

const MODALITIES: [&str; 3] = ["video", "audio", "text"];

/// One sample's three embedding sequences.
#[derive(Debug, Clone, Copy)]
pub struct ModelInputs<'a> {
    pub video: ArrayView2<'a, f32>,
    pub audio: ArrayView2<'a, f32>,
    pub text: ArrayView2<'a, f32>,
}

impl<'a> From<&'a SampleFeatures> for ModelInputs<'a> {
    fn from(f: &'a SampleFeatures) -> Self {
        Self {
            video: f.video.view(),
            audio: f.audio.view(),
            text: f.text.view(),
        }
    }
}

impl<'a> ModelInputs<'a> {
    fn get(&self, i: usize) -> ArrayView2<'a, f32> {
        [self.video, self.audio, self.text][i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder<T> {
    Lstm(Lstm<T>),
    Conv(Vec<ConvBlock<T>>),
    ConvAttention(Vec<ConvBlock<T>>, EncoderLayer<T>),
}

enum EncoderState<T> {
    Lstm(LstmCache<T>),
    Conv(Vec<ConvCache<T>>, usize),
    ConvAttention(Vec<ConvCache<T>>, EncoderCache<T>, usize),
}

fn conv_stack<T: Scalar>(blocks: &[ConvBlock<T>], x: &Array2<T>) -> (Array2<T>, Vec<ConvCache<T>>) {
    let mut h = x.clone();
    let mut caches = Vec::with_capacity(blocks.len());
    for b in blocks {
        let (out, c) = b.forward(&h);
        h = out;
        caches.push(c);
    }
    (h, caches)
}

fn conv_stack_backward<T: Scalar>(
    blocks: &[ConvBlock<T>],
    caches: &[ConvCache<T>],
    dy: Array2<T>,
    grads: &mut [ConvBlock<T>],
) {
    let mut d = dy;
    for (i, ((b, c), g)) in blocks.iter().zip(caches).zip(grads.iter_mut()).enumerate().rev() {
        match b.backward(c, &d, g, i > 0) {
            Some(dx) => d = dx,
            None => break,
        }
    }
}

fn mean_rows<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    x.mean_axis(Axis(0)).expect("non-empty sequence").insert_axis(Axis(0))
}

fn spread_mean<T: Scalar>(dy: &Array2<T>, len: usize) -> Array2<T> {
    let scaled = dy / lit::<T>(len as f64);
    scaled.broadcast((len, dy.ncols())).expect("row broadcast").to_owned()
}

impl<T: Scalar> Encoder<T> {
    fn build(config: &ModelConfig, input_dim: usize, init: &mut Init) -> Self {
        let conv = |init: &mut Init| {
            let mut c_in = input_dim;
            config
                .conv_filters
                .iter()
                .map(|&c_out| {
                    let b = ConvBlock::new(init, c_in, c_out, config.kernel);
                    c_in = c_out;
                    b
                })
                .collect::<Vec<_>>()
        };
        match config.variant {
            Variant::Lstm => Encoder::Lstm(Lstm::new(init, input_dim, config.lstm_hidden)),
            Variant::Conv => Encoder::Conv(conv(init)),
            Variant::Transformer => {
                let blocks = conv(init);
                let width = *config.conv_filters.last().expect("validated");
                let layer = EncoderLayer::new(init, width, config.transformer_heads, width * config.ffn_multiplier);
                Encoder::ConvAttention(blocks, layer)
            }
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Encoder::Lstm(l) => l.hidden(),
            Encoder::Conv(b) | Encoder::ConvAttention(b, _) => b.last().expect("non-empty").b.ncols(),
        }
    }

    fn forward(&self, x: &Array2<T>) -> (Array2<T>, EncoderState<T>) {
        match self {
            Encoder::Lstm(l) => {
                let (h, c) = l.forward(x);
                (h, EncoderState::Lstm(c))
            }
            Encoder::Conv(blocks) => {
                let (h, caches) = conv_stack(blocks, x);
                let len = h.nrows();
                (mean_rows(&h), EncoderState::Conv(caches, len))
            }
            Encoder::ConvAttention(blocks, layer) => {
                let (mut h, caches) = conv_stack(blocks, x);
                let len = h.nrows();
                h += &positional_encoding(len, h.ncols());
                let (z, ec) = layer.forward(&h);
                (mean_rows(&z), EncoderState::ConvAttention(caches, ec, len))
            }
        }
    }

    fn backward(&self, state: &EncoderState<T>, dy: &Array2<T>, g: &mut Self) {
        match (self, state, g) {
            (Encoder::Lstm(l), EncoderState::Lstm(c), Encoder::Lstm(gl)) => l.backward(c, dy, gl),
            (Encoder::Conv(blocks), EncoderState::Conv(caches, len), Encoder::Conv(gb)) => {
                conv_stack_backward(blocks, caches, spread_mean(dy, *len), gb)
            }
            (
                Encoder::ConvAttention(blocks, layer),
                EncoderState::ConvAttention(caches, ec, len),
                Encoder::ConvAttention(gb, gl),
            ) => {
                let dh = layer.backward(ec, &spread_mean(dy, *len), gl);
                conv_stack_backward(blocks, caches, dh, gb)
            }
            _ => unreachable!("gradient structure mirrors the model"),
        }
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a, T>) {
        match self {
            Encoder::Lstm(l) => l.params(&format!("{prefix}.lstm"), out),
            Encoder::Conv(blocks) => {
                for (i, b) in blocks.iter().enumerate() {
                    b.params(&format!("{prefix}.conv{i}"), out);
                }
            }
            Encoder::ConvAttention(blocks, layer) => {
                for (i, b) in blocks.iter().enumerate() {
                    b.params(&format!("{prefix}.conv{i}"), out);
                }
                layer.params(&format!("{prefix}.encoder"), out);
            }
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a, T>) {
        match self {
            Encoder::Lstm(l) => l.params_mut(&format!("{prefix}.lstm"), out),
            Encoder::Conv(blocks) => {
                for (i, b) in blocks.iter_mut().enumerate() {
                    b.params_mut(&format!("{prefix}.conv{i}"), out);
                }
            }
            Encoder::ConvAttention(blocks, layer) => {
                for (i, b) in blocks.iter_mut().enumerate() {
                    b.params_mut(&format!("{prefix}.conv{i}"), out);
                }
                layer.params_mut(&format!("{prefix}.encoder"), out);
            }
        }
    }
}

/// A realized classifier: three modality encoders, concatenation, the
/// fully-connected stack and a softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel<T> {
    config: ModelConfig,
    pub encoders: [Encoder<T>; 3],
    pub fc: Vec<Linear<T>>,
    pub head: Linear<T>,
}

struct FcState<T> {
    input: Array2<T>,
    pre: Array2<T>,
    mask: Option<Array2<T>>,
}

pub(crate) struct ForwardCache<T> {
    encoders: Vec<EncoderState<T>>,
    fc: Vec<FcState<T>>,
    head_input: Array2<T>,
    pub probs: Vec<f64>,
}

impl<T: Scalar> FusionModel<T> {
    pub fn build(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut init = Init::new(config.seed);
        let dims = [config.inputs.video.1, config.inputs.audio.1, config.inputs.text.1];
        let encoders = dims.map(|d| Encoder::build(&config, d, &mut init));
        let mut width: usize = encoders.iter().map(Encoder::output_dim).sum();
        let fc = config
            .fcn
            .iter()
            .map(|&n| {
                let l = Linear::new(&mut init, width, n);
                width = n;
                l
            })
            .collect();
        let head = Linear::new(&mut init, width, config.n_labels);
        Ok(Self {
            config,
            encoders,
            fc,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn named_parameters(&self) -> Vec<(String, &Array2<T>)> {
        let mut out = Vec::new();
        for (enc, name) in self.encoders.iter().zip(MODALITIES) {
            enc.params(name, &mut out);
        }
        for (i, l) in self.fc.iter().enumerate() {
            l.params(&format!("fc{i}"), &mut out);
        }
        self.head.params("head", &mut out);
        out
    }

    pub fn named_parameters_mut(&mut self) -> Vec<(String, &mut Array2<T>)> {
        let mut out = Vec::new();
        for (enc, name) in self.encoders.iter_mut().zip(MODALITIES) {
            enc.params_mut(name, &mut out);
        }
        for (i, l) in self.fc.iter_mut().enumerate() {
            l.params_mut(&format!("fc{i}"), &mut out);
        }
        self.head.params_mut("head", &mut out);
        out
    }

    /// Same structure with every parameter set to zero; used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, p) in z.named_parameters_mut() {
            p.fill(T::zero());
        }
        z
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        for ((_, a), (_, b)) in self.named_parameters_mut().into_iter().zip(other.named_parameters()) {
            *a += b;
        }
    }

    pub(crate) fn scale(&mut self, k: T) {
        for (_, p) in self.named_parameters_mut() {
            *p *= k;
        }
    }

    fn check_inputs(&self, inputs: &ModelInputs) -> Result<(), ModelError> {
        let declared = [self.config.inputs.video, self.config.inputs.audio, self.config.inputs.text];
        let min_len = match self.config.variant {
            Variant::Lstm => 1,
            _ => 1usize << self.config.conv_filters.len(),
        };
        for (i, name) in MODALITIES.iter().enumerate() {
            let found = inputs.get(i).dim();
            if found.1 != declared[i].1 || found.0 < min_len {
                return Err(ModelError::Input {
                    modality: name,
                    expected: declared[i],
                    found,
                });
            }
        }
        Ok(())
    }

    /// Runs the network; `dropout` supplies the mask RNG in training mode.
    pub(crate) fn forward_cached(
        &self,
        inputs: &ModelInputs,
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<f64>, ForwardCache<T>), ModelError> {
        self.check_inputs(inputs)?;
        let mut parts = Vec::with_capacity(3);
        let mut encoders = Vec::with_capacity(3);
        for (i, enc) in self.encoders.iter().enumerate() {
            let x = inputs.get(i).mapv(|v| lit::<T>(f64::from(v)));
            let (h, state) = enc.forward(&x);
            parts.push(h);
            encoders.push(state);
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        let mut h = ndarray::concatenate(Axis(1), &views).expect("row vectors");

        let rate = self.config.dropout_rate;
        let last_hidden = self.fc.len() - 1;
        let mut fc = Vec::with_capacity(self.fc.len());
        for (i, layer) in self.fc.iter().enumerate() {
            let pre = layer.forward(&h);
            let mut out = relu(&pre);
            let mask = match dropout.as_deref_mut() {
                Some(rng) if i < last_hidden && rate > 0.0 => {
                    let keep: T = lit(1.0 / (1.0 - rate));
                    let mask = Array2::from_shape_simple_fn(out.dim(), || {
                        if rng.random::<f64>() < rate {
                            T::zero()
                        } else {
                            keep
                        }
                    });
                    out *= &mask;
                    Some(mask)
                }
                _ => None,
            };
            fc.push(FcState { input: h, pre, mask });
            h = out;
        }
        let logits: Vec<f64> = self
            .head
            .forward(&h)
            .iter()
            .map(|v| v.to_f64().expect("finite"))
            .collect();
        let probs = softmax(&logits);
        Ok((
            probs.clone(),
            ForwardCache {
                encoders,
                fc,
                head_input: h,
                probs,
            },
        ))
    }

    /// Accumulates the cross-entropy gradient for `target` into `grads`.
    pub(crate) fn backward(&self, cache: &ForwardCache<T>, target: usize, grads: &mut Self) {
        let mut dlogits = Array2::zeros((1, cache.probs.len()));
        for (j, p) in cache.probs.iter().enumerate() {
            let y = if j == target { 1.0 } else { 0.0 };
            dlogits[[0, j]] = lit(p - y);
        }
        let mut d = self.head.backward(&cache.head_input, &dlogits, &mut grads.head);
        for ((layer, state), g) in self.fc.iter().zip(&cache.fc).zip(grads.fc.iter_mut()).rev() {
            if let Some(mask) = &state.mask {
                d *= mask;
            }
            let dpre = relu_backward(&state.pre, &d);
            d = layer.backward(&state.input, &dpre, g);
        }
        let mut offset = 0;
        for ((enc, state), g) in self.encoders.iter().zip(&cache.encoders).zip(grads.encoders.iter_mut()) {
            let w = enc.output_dim();
            let part = d.slice(s![.., offset..offset + w]).to_owned();
            enc.backward(state, &part, g);
            offset += w;
        }
    }

    /// Inference-mode class probabilities.
    pub fn forward(&self, inputs: &ModelInputs) -> Result<Vec<f64>, ModelError> {
        Ok(self.forward_cached(inputs, None)?.0)
    }

    /// Pre-softmax scores in inference mode.
    pub fn logits(&self, inputs: &ModelInputs) -> Result<Vec<f64>, ModelError> {
        let (_, cache) = self.forward_cached(inputs, None)?;
        Ok(self
            .head
            .forward(&cache.head_input)
            .iter()
            .map(|v| v.to_f64().expect("finite"))
            .collect())
    }

    /// Loss and its gradient for one sample; training mode when `dropout` is given.
    pub fn loss_and_gradient(
        &self,
        inputs: &ModelInputs,
        target: usize,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Self), ModelError> {
        if target >= self.config.n_labels {
            return Err(ModelError::Label {
                label: target,
                n_labels: self.config.n_labels,
            });
        }
        let (probs, cache) = self.forward_cached(inputs, dropout)?;
        let mut grads = self.zeros_like();
        self.backward(&cache, target, &mut grads);
        Ok((super::cross_entropy(&probs, target)?, grads))
    }

    pub fn parameter_count(&self) -> usize {
        self.named_parameters().iter().map(|(_, p)| p.len()).sum()
    }
}

/// Anything that owns trainable tensors.
pub trait Parameterized {
    fn parameter_count(&self) -> usize;
}

impl<T: Scalar> Parameterized for FusionModel<T> {
    fn parameter_count(&self) -> usize {
        FusionModel::parameter_count(self)
    }
}

impl<T: Scalar> Parameterized for Linear<T> {
    fn parameter_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

impl<P: Parameterized> Parameterized for [P] {
    fn parameter_count(&self) -> usize {
        self.iter().map(P::parameter_count).sum()
    }
}

/// Number of trainable scalars.
pub fn count_parameters<M: Parameterized + ?Sized>(model: &M) -> usize {
    model.parameter_count()
}
