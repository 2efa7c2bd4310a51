//! Layers with explicit forward and backward passes.
//!
//! Every layer works on one sample at a time: sequences are `time × channels`
//! matrices and vectors are `1 × n` rows. Backward passes *accumulate* into a
//! gradient layer of the same type.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{lit, Scalar};

pub(crate) type ParamRefs<'a, T> = Vec<(String, &'a Array2<T>)>;
pub(crate) type ParamMuts<'a, T> = Vec<(String, &'a mut Array2<T>)>;

pub(crate) const LN_EPSILON: f64 = 1e-5;

/// Seeded parameter initializer. Values are drawn as `f32` so that models of
/// either precision start from identical weights.
pub(crate) struct Init(ChaCha8Rng);

impl Init {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    fn uniform<T: Scalar>(&mut self, rows: usize, cols: usize, limit: f64) -> Array2<T> {
        let limit = limit as f32;
        Array2::from_shape_simple_fn((rows, cols), || {
            lit(f64::from(self.0.random_range(-limit..limit)))
        })
    }

    /// Glorot/Xavier uniform.
    pub fn glorot<T: Scalar>(&mut self, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Array2<T> {
        self.uniform(rows, cols, (6.0 / (fan_in + fan_out) as f64).sqrt())
    }
}

fn add_outer<T: Scalar>(acc: &mut Array2<T>, a: &Array2<T>, b: &Array2<T>) {
    // acc += aᵀ · b
    general_mat_mul(T::one(), &a.t(), b, T::one(), acc);
}

fn add_row_sums<T: Scalar>(acc: &mut Array2<T>, dy: &Array2<T>) {
    *acc += &dy.sum_axis(Axis(0));
}

pub(crate) fn relu<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    x.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

pub(crate) fn relu_backward<T: Scalar>(pre: &Array2<T>, dy: &Array2<T>) -> Array2<T> {
    let mut d = dy.clone();
    d.zip_mut_with(pre, |g, &p| {
        if p <= T::zero() {
            *g = T::zero();
        }
    });
    d
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub w: Array2<T>,
    pub b: Array2<T>,
}

impl<T: Scalar> Linear<T> {
    pub(crate) fn new(init: &mut Init, n_in: usize, n_out: usize) -> Self {
        Self {
            w: init.glorot(n_in, n_out, n_in, n_out),
            b: Array2::zeros((1, n_out)),
        }
    }

    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        let mut y = x.dot(&self.w);
        y += &self.b;
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, x: &Array2<T>, dy: &Array2<T>, g: &mut Self) -> Array2<T> {
        self.backward_params(x, dy, g);
        dy.dot(&self.w.t())
    }

    pub fn backward_params(&self, x: &Array2<T>, dy: &Array2<T>, g: &mut Self) {
        add_outer(&mut g.w, x, dy);
        add_row_sums(&mut g.b, dy);
    }

    pub(crate) fn params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a, T>) {
        out.push((format!("{prefix}.w"), &self.w));
        out.push((format!("{prefix}.b"), &self.b));
    }

    pub(crate) fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a, T>) {
        out.push((format!("{prefix}.w"), &mut self.w));
        out.push((format!("{prefix}.b"), &mut self.b));
    }
}

/// Single-layer LSTM, gate order input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<T> {
    pub wx: Array2<T>,
    pub wh: Array2<T>,
    pub b: Array2<T>,
}

pub(crate) struct LstmCache<T> {
    x: Array2<T>,
    gates: Array2<T>,
    c: Array2<T>,
    h: Array2<T>,
}

impl<T: Scalar> Lstm<T> {
    pub(crate) fn new(init: &mut Init, n_in: usize, hidden: usize) -> Self {
        let mut b = Array2::zeros((1, 4 * hidden));
        b.slice_mut(s![.., hidden..2 * hidden]).fill(T::one());
        Self {
            wx: init.glorot(n_in, 4 * hidden, n_in, 4 * hidden),
            wh: init.glorot(hidden, 4 * hidden, hidden, 4 * hidden),
            b,
        }
    }

    pub fn hidden(&self) -> usize {
        self.wh.nrows()
    }

    /// Returns the final hidden state as a `1 × hidden` row.
    pub(crate) fn forward(&self, x: &Array2<T>) -> (Array2<T>, LstmCache<T>) {
        let n = x.nrows();
        let hd = self.hidden();
        let mut xw = x.dot(&self.wx);
        xw += &self.b;
        let mut gates = Array2::zeros((n, 4 * hd));
        let mut c = Array2::zeros((n + 1, hd));
        let mut h = Array2::zeros((n + 1, hd));
        for t in 0..n {
            let z = &xw.row(t) + &h.row(t).dot(&self.wh);
            for j in 0..hd {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[hd + j]);
                let g = z[2 * hd + j].tanh();
                let o = sigmoid(z[3 * hd + j]);
                let ct = f * c[[t, j]] + i * g;
                c[[t + 1, j]] = ct;
                h[[t + 1, j]] = o * ct.tanh();
                gates[[t, j]] = i;
                gates[[t, hd + j]] = f;
                gates[[t, 2 * hd + j]] = g;
                gates[[t, 3 * hd + j]] = o;
            }
        }
        let out = h.slice(s![n..n + 1, ..]).to_owned();
        (
            out,
            LstmCache {
                x: x.clone(),
                gates,
                c,
                h,
            },
        )
    }

    /// Backpropagates through time from the final hidden state.
    pub(crate) fn backward(&self, cache: &LstmCache<T>, dh: &Array2<T>, g: &mut Self) {
        let n = cache.x.nrows();
        let hd = self.hidden();
        let one = T::one();
        let mut dz = Array2::zeros((n, 4 * hd));
        let mut dh_next: Array1<T> = dh.row(0).to_owned();
        let mut dc_next: Array1<T> = Array1::zeros(hd);
        for t in (0..n).rev() {
            for j in 0..hd {
                let i = cache.gates[[t, j]];
                let f = cache.gates[[t, hd + j]];
                let gg = cache.gates[[t, 2 * hd + j]];
                let o = cache.gates[[t, 3 * hd + j]];
                let tc = cache.c[[t + 1, j]].tanh();
                let dhj = dh_next[j];
                let d_o = dhj * tc;
                let dc = dc_next[j] + dhj * o * (one - tc * tc);
                dc_next[j] = dc * f;
                dz[[t, j]] = dc * gg * i * (one - i);
                dz[[t, hd + j]] = dc * cache.c[[t, j]] * f * (one - f);
                dz[[t, 2 * hd + j]] = dc * i * (one - gg * gg);
                dz[[t, 3 * hd + j]] = d_o * o * (one - o);
            }
            dh_next = self.wh.dot(&dz.row(t));
        }
        add_outer(&mut g.wx, &cache.x, &dz);
        let h_prev = cache.h.slice(s![0..n, ..]).to_owned();
        add_outer(&mut g.wh, &h_prev, &dz);
        add_row_sums(&mut g.b, &dz);
    }

    pub(crate) fn params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a, T>) {
        out.push((format!("{prefix}.wx"), &self.wx));
        out.push((format!("{prefix}.wh"), &self.wh));
        out.push((format!("{prefix}.b"), &self.b));
    }

    pub(crate) fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a, T>) {
        out.push((format!("{prefix}.wx"), &mut self.wx));
        out.push((format!("{prefix}.wh"), &mut self.wh));
        out.push((format!("{prefix}.b"), &mut self.b));
    }
}

/// Rows of `[x[t-p], …, x[t+p]]` with zero padding, `p = kernel / 2`.
fn im2col<T: Scalar>(x: &Array2<T>, kernel: usize) -> Array2<T> {
    let (n, c) = x.dim();
    let pad = kernel / 2;
    let mut cols = Array2::zeros((n, kernel * c));
    for t in 0..n {
        for j in 0..kernel {
            let src = t + j;
            if src >= pad && src - pad < n {
                cols.slice_mut(s![t, j * c..(j + 1) * c])
                    .assign(&x.row(src - pad));
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(dcols: &Array2<T>, kernel: usize, channels: usize) -> Array2<T> {
    let n = dcols.nrows();
    let pad = kernel / 2;
    let mut dx = Array2::zeros((n, channels));
    for t in 0..n {
        for j in 0..kernel {
            let src = t + j;
            if src >= pad && src - pad < n {
                let mut row = dx.row_mut(src - pad);
                row += &dcols.slice(s![t, j * channels..(j + 1) * channels]);
            }
        }
    }
    dx
}

/// `conv1d(kernel, same padding) → ReLU → max-pool(2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<T> {
    pub w: Array2<T>,
    pub b: Array2<T>,
    pub kernel: usize,
}

pub(crate) struct ConvCache<T> {
    cols: Array2<T>,
    pre: Array2<T>,
    argmax: Array2<usize>,
}

impl<T: Scalar> ConvBlock<T> {
    pub(crate) fn new(init: &mut Init, c_in: usize, c_out: usize, kernel: usize) -> Self {
        Self {
            w: init.glorot(kernel * c_in, c_out, kernel * c_in, kernel * c_out),
            b: Array2::zeros((1, c_out)),
            kernel,
        }
    }

    fn in_channels(&self) -> usize {
        self.w.nrows() / self.kernel
    }

    pub(crate) fn forward(&self, x: &Array2<T>) -> (Array2<T>, ConvCache<T>) {
        let cols = im2col(x, self.kernel);
        let mut pre = cols.dot(&self.w);
        pre += &self.b;
        let act = relu(&pre);
        let (n, c) = act.dim();
        let half = n / 2;
        let mut out = Array2::zeros((half, c));
        let mut argmax = Array2::zeros((half, c));
        for i in 0..half {
            for ch in 0..c {
                let (a, b) = (act[[2 * i, ch]], act[[2 * i + 1, ch]]);
                let (v, idx) = if b > a { (b, 2 * i + 1) } else { (a, 2 * i) };
                out[[i, ch]] = v;
                argmax[[i, ch]] = idx;
            }
        }
        (out, ConvCache { cols, pre, argmax })
    }

    /// Returns the input gradient when `need_input_grad` is set.
    pub(crate) fn backward(
        &self,
        cache: &ConvCache<T>,
        dout: &Array2<T>,
        g: &mut Self,
        need_input_grad: bool,
    ) -> Option<Array2<T>> {
        let mut dact = Array2::zeros(cache.pre.dim());
        for ((i, ch), &d) in dout.indexed_iter() {
            dact[[cache.argmax[[i, ch]], ch]] += d;
        }
        let dpre = relu_backward(&cache.pre, &dact);
        add_outer(&mut g.w, &cache.cols, &dpre);
        add_row_sums(&mut g.b, &dpre);
        need_input_grad.then(|| col2im(&dpre.dot(&self.w.t()), self.kernel, self.in_channels()))
    }

    pub(crate) fn params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a, T>) {
        out.push((format!("{prefix}.w"), &self.w));
        out.push((format!("{prefix}.b"), &self.b));
    }

    pub(crate) fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a, T>) {
        out.push((format!("{prefix}.w"), &mut self.w));
        out.push((format!("{prefix}.b"), &mut self.b));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gamma: Array2<T>,
    pub beta: Array2<T>,
}

pub(crate) struct LayerNormCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
}

impl<T: Scalar> LayerNorm<T> {
    pub(crate) fn new(dim: usize) -> Self {
        Self {
            gamma: Array2::ones((1, dim)),
            beta: Array2::zeros((1, dim)),
        }
    }

    pub(crate) fn forward(&self, x: &Array2<T>) -> (Array2<T>, LayerNormCache<T>) {
        let d: T = lit(x.ncols() as f64);
        let eps: T = lit(LN_EPSILON);
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / d;
            row -= mean;
            let var = row.mapv(|v| v * v).sum() / d;
            *inv = T::one() / (var + eps).sqrt();
            row *= *inv;
        }
        let mut y = &xhat * &self.gamma;
        y += &self.beta;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub(crate) fn backward(&self, cache: &LayerNormCache<T>, dy: &Array2<T>, g: &mut Self) -> Array2<T> {
        g.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
        g.beta += &dy.sum_axis(Axis(0));
        let d: T = lit(dy.ncols() as f64);
        let dxhat = dy * &self.gamma;
        let mut dx = Array2::zeros(dy.dim());
        for (r, mut out) in dx.rows_mut().into_iter().enumerate() {
            let dxh = dxhat.row(r);
            let xh = cache.xhat.row(r);
            let sum = dxh.sum();
            let dot = dxh.dot(&xh);
            let scale = cache.inv_std[r] / d;
            for j in 0..out.len() {
                out[j] = scale * (d * dxh[j] - sum - xh[j] * dot);
            }
        }
        dx
    }

    pub(crate) fn params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a, T>) {
        out.push((format!("{prefix}.gamma"), &self.gamma));
        out.push((format!("{prefix}.beta"), &self.beta));
    }

    pub(crate) fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a, T>) {
        out.push((format!("{prefix}.gamma"), &mut self.gamma));
        out.push((format!("{prefix}.beta"), &mut self.beta));
    }
}

fn softmax_rows<T: Scalar>(x: &mut Array2<T>) {
    for mut row in x.rows_mut() {
        let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention<T> {
    pub q: Linear<T>,
    pub k: Linear<T>,
    pub v: Linear<T>,
    pub o: Linear<T>,
    pub heads: usize,
}

pub(crate) struct AttentionCache<T> {
    x: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    attn: Vec<Array2<T>>,
    concat: Array2<T>,
}

impl<T: Scalar> MultiHeadAttention<T> {
    pub(crate) fn new(init: &mut Init, width: usize, heads: usize) -> Self {
        Self {
            q: Linear::new(init, width, width),
            k: Linear::new(init, width, width),
            v: Linear::new(init, width, width),
            o: Linear::new(init, width, width),
            heads,
        }
    }

    fn head_dim(&self) -> usize {
        self.q.w.ncols() / self.heads
    }

    pub(crate) fn forward(&self, x: &Array2<T>) -> (Array2<T>, AttentionCache<T>) {
        let q = self.q.forward(x);
        let k = self.k.forward(x);
        let v = self.v.forward(x);
        let dk = self.head_dim();
        let scale: T = lit(1.0 / (dk as f64).sqrt());
        let mut concat = Array2::zeros(q.dim());
        let mut attn = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let mut a = q.slice(cols).dot(&k.slice(cols).t());
            a *= scale;
            softmax_rows(&mut a);
            concat.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
            attn.push(a);
        }
        let out = self.o.forward(&concat);
        (
            out,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                attn,
                concat,
            },
        )
    }

    pub(crate) fn backward(&self, cache: &AttentionCache<T>, dy: &Array2<T>, g: &mut Self) -> Array2<T> {
        let dconcat = self.o.backward(&cache.concat, dy, &mut g.o);
        let dk = self.head_dim();
        let scale: T = lit(1.0 / (dk as f64).sqrt());
        let mut dq = Array2::zeros(cache.q.dim());
        let mut dkm = Array2::zeros(cache.k.dim());
        let mut dv = Array2::zeros(cache.v.dim());
        for (h, a) in cache.attn.iter().enumerate() {
            let cols = s![.., h * dk..(h + 1) * dk];
            let dout = dconcat.slice(cols);
            let da = dout.dot(&cache.v.slice(cols).t());
            dv.slice_mut(cols).assign(&a.t().dot(&dout));
            let mut ds = &da * a;
            for (mut row, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
                let total = row.sum();
                row.zip_mut_with(&arow, |v, &p| *v = *v - p * total);
            }
            ds *= scale;
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dkm.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }
        let mut dx = self.q.backward(&cache.x, &dq, &mut g.q);
        dx += &self.k.backward(&cache.x, &dkm, &mut g.k);
        dx += &self.v.backward(&cache.x, &dv, &mut g.v);
        dx
    }

    pub(crate) fn params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a, T>) {
        self.q.params(&format!("{prefix}.q"), out);
        self.k.params(&format!("{prefix}.k"), out);
        self.v.params(&format!("{prefix}.v"), out);
        self.o.params(&format!("{prefix}.o"), out);
    }

    pub(crate) fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a, T>) {
        self.q.params_mut(&format!("{prefix}.q"), out);
        self.k.params_mut(&format!("{prefix}.k"), out);
        self.v.params_mut(&format!("{prefix}.v"), out);
        self.o.params_mut(&format!("{prefix}.o"), out);
    }
}

/// Sinusoidal position table, `len × width`.
pub(crate) fn positional_encoding<T: Scalar>(len: usize, width: usize) -> Array2<T> {
    Array2::from_shape_fn((len, width), |(pos, i)| {
        let angle = pos as f64 / 10000f64.powf((2 * (i / 2)) as f64 / width as f64);
        lit(if i % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

/// Post-norm encoder layer: `LN(x + MHA(x))`, then `LN(h + FFN(h))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<T> {
    pub attention: MultiHeadAttention<T>,
    pub norm1: LayerNorm<T>,
    pub ff1: Linear<T>,
    pub ff2: Linear<T>,
    pub norm2: LayerNorm<T>,
}

pub(crate) struct EncoderCache<T> {
    attention: AttentionCache<T>,
    norm1: LayerNormCache<T>,
    x1: Array2<T>,
    hidden_pre: Array2<T>,
    hidden: Array2<T>,
    norm2: LayerNormCache<T>,
}

impl<T: Scalar> EncoderLayer<T> {
    pub(crate) fn new(init: &mut Init, width: usize, heads: usize, ffn: usize) -> Self {
        Self {
            attention: MultiHeadAttention::new(init, width, heads),
            norm1: LayerNorm::new(width),
            ff1: Linear::new(init, width, ffn),
            ff2: Linear::new(init, ffn, width),
            norm2: LayerNorm::new(width),
        }
    }

    pub(crate) fn forward(&self, x: &Array2<T>) -> (Array2<T>, EncoderCache<T>) {
        let (a, attention) = self.attention.forward(x);
        let (x1, norm1) = self.norm1.forward(&(x + &a));
        let hidden_pre = self.ff1.forward(&x1);
        let hidden = relu(&hidden_pre);
        let f = self.ff2.forward(&hidden);
        let (out, norm2) = self.norm2.forward(&(&x1 + &f));
        (
            out,
            EncoderCache {
                attention,
                norm1,
                x1,
                hidden_pre,
                hidden,
                norm2,
            },
        )
    }

    pub(crate) fn backward(&self, cache: &EncoderCache<T>, dy: &Array2<T>, g: &mut Self) -> Array2<T> {
        let dr2 = self.norm2.backward(&cache.norm2, dy, &mut g.norm2);
        let dhidden = self.ff2.backward(&cache.hidden, &dr2, &mut g.ff2);
        let dpre = relu_backward(&cache.hidden_pre, &dhidden);
        let mut dx1 = self.ff1.backward(&cache.x1, &dpre, &mut g.ff1);
        dx1 += &dr2;
        let dr1 = self.norm1.backward(&cache.norm1, &dx1, &mut g.norm1);
        let mut dx = self.attention.backward(&cache.attention, &dr1, &mut g.attention);
        dx += &dr1;
        dx
    }

    pub(crate) fn params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a, T>) {
        self.attention.params(&format!("{prefix}.attn"), out);
        self.norm1.params(&format!("{prefix}.norm1"), out);
        self.ff1.params(&format!("{prefix}.ff1"), out);
        self.ff2.params(&format!("{prefix}.ff2"), out);
        self.norm2.params(&format!("{prefix}.norm2"), out);
    }

    pub(crate) fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a, T>) {
        self.attention.params_mut(&format!("{prefix}.attn"), out);
        self.norm1.params_mut(&format!("{prefix}.norm1"), out);
        self.ff1.params_mut(&format!("{prefix}.ff1"), out);
        self.ff2.params_mut(&format!("{prefix}.ff2"), out);
        self.norm2.params_mut(&format!("{prefix}.norm2"), out);
    }
}
