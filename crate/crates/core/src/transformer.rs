//! Encoder-only transformer regressor for next-day realized variance.
//!
//! A window of `T` daily feature rows is embedded, passed through `L`
//! pre-norm encoder layers (multi-head self-attention and a feed-forward
//! block, each with a residual connection), normalised, mean-pooled over the
//! window and mapped to a scalar by a two-layer MLP. There is no positional
//! encoding, so the output does not depend on the order of the rows.
//!
//! Gradients are computed by hand-written reverse-mode differentiation.

use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    BadShape(String),
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("training loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("length mismatch: {0} predictions, {1} targets")]
    LengthMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

impl ModelError {
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            ModelError::NonFiniteGradient | ModelError::DivergedLoss { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input features per day (`F`).
    pub inputs: usize,
    /// Model width `d_o`.
    pub width: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_width: usize,
    /// Inverted dropout on both sublayer outputs during training.
    pub dropout: f64,
}

impl ModelConfig {
    /// Width 12, 3 heads, 2 layers, feed-forward width 24, no dropout.
    pub fn new(inputs: usize) -> Self {
        Self {
            inputs,
            width: 12,
            heads: 3,
            layers: 2,
            ff_width: 24,
            dropout: 0.0,
        }
    }

    pub fn head_width(&self) -> usize {
        self.width / self.heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |s: &str| Err(ModelError::BadConfig(s.into()));
        if self.inputs == 0 || self.width == 0 || self.heads == 0 || self.layers == 0 || self.ff_width == 0 {
            return bad("all widths and counts must be at least 1");
        }
        if !self.width.is_multiple_of(self.heads) {
            return bad("width must be divisible by the number of heads");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Days per input window `T`.
    pub window: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stop after this many epochs without a lower training loss and keep the best weights.
    pub patience: Option<usize>,
    /// Shuffle samples each epoch instead of visiting them in date order.
    pub shuffle: bool,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window: 5,
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 200,
            seed: 0,
            patience: None,
            shuffle: false,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.window == 0 || self.batch_size == 0 {
            return Err(ModelError::BadConfig("window and batch size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(ModelError::BadConfig("learning rate must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Matrix,
    pub bias: Matrix,
}

impl LayerNorm {
    fn new(d: usize) -> Self {
        Self {
            gain: Matrix::from_vec(1, d, vec![1.0; d]),
            bias: Matrix::zeros(1, d),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub norm1: LayerNorm,
    /// Per-head projections, each `d_o x d_k`.
    pub query: Vec<Matrix>,
    pub key: Vec<Matrix>,
    pub value: Vec<Matrix>,
    /// `d_o x d_o` projection of the concatenated heads.
    pub output: Matrix,
    pub norm2: LayerNorm,
    pub ff_in: Matrix,
    pub ff_in_bias: Matrix,
    pub ff_out: Matrix,
    pub ff_out_bias: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub embed: Matrix,
    pub embed_bias: Matrix,
    pub layers: Vec<EncoderLayer>,
    pub final_norm: LayerNorm,
    pub head_hidden: Matrix,
    pub head_hidden_bias: Matrix,
    pub head_out: Matrix,
    pub head_out_bias: Matrix,
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
    Matrix::from_vec(rows, cols, data)
}

impl ModelWeights {
    /// Seeded Xavier-uniform matrices, zero biases, unit layer-norm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, d, dk, ff) = (config.inputs, config.width, config.head_width(), config.ff_width);
        let embed = xavier(f, d, &mut rng);
        let layers = (0..config.layers)
            .map(|_| {
                let mut heads = |_| (0..config.heads).map(|_| xavier(d, dk, &mut rng)).collect::<Vec<_>>();
                let query = heads(0);
                let key = heads(1);
                let value = heads(2);
                EncoderLayer {
                    norm1: LayerNorm::new(d),
                    query,
                    key,
                    value,
                    output: xavier(d, d, &mut rng),
                    norm2: LayerNorm::new(d),
                    ff_in: xavier(d, ff, &mut rng),
                    ff_in_bias: Matrix::zeros(1, ff),
                    ff_out: xavier(ff, d, &mut rng),
                    ff_out_bias: Matrix::zeros(1, d),
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            embed,
            embed_bias: Matrix::zeros(1, d),
            layers,
            final_norm: LayerNorm::new(d),
            head_hidden: xavier(d, d, &mut rng),
            head_hidden_bias: Matrix::zeros(1, d),
            head_out: xavier(d, 1, &mut rng),
            head_out_bias: Matrix::zeros(1, 1),
        })
    }

    /// Same shapes with every entry zero; the container for gradients.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.as_mut_slice().iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    /// All tensors with stable names, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![("embed.w".to_string(), &self.embed), ("embed.b".to_string(), &self.embed_bias)];
        for (l, layer) in self.layers.iter().enumerate() {
            let p = format!("layer{l}");
            out.push((format!("{p}.norm1.gain"), &layer.norm1.gain));
            out.push((format!("{p}.norm1.bias"), &layer.norm1.bias));
            for i in 0..layer.query.len() {
                out.push((format!("{p}.head{i}.query"), &layer.query[i]));
                out.push((format!("{p}.head{i}.key"), &layer.key[i]));
                out.push((format!("{p}.head{i}.value"), &layer.value[i]));
            }
            out.push((format!("{p}.output"), &layer.output));
            out.push((format!("{p}.norm2.gain"), &layer.norm2.gain));
            out.push((format!("{p}.norm2.bias"), &layer.norm2.bias));
            out.push((format!("{p}.ff_in.w"), &layer.ff_in));
            out.push((format!("{p}.ff_in.b"), &layer.ff_in_bias));
            out.push((format!("{p}.ff_out.w"), &layer.ff_out));
            out.push((format!("{p}.ff_out.b"), &layer.ff_out_bias));
        }
        out.push(("final_norm.gain".into(), &self.final_norm.gain));
        out.push(("final_norm.bias".into(), &self.final_norm.bias));
        out.push(("head.hidden.w".into(), &self.head_hidden));
        out.push(("head.hidden.b".into(), &self.head_hidden_bias));
        out.push(("head.out.w".into(), &self.head_out));
        out.push(("head.out.b".into(), &self.head_out_bias));
        out
    }

    /// Mutable tensors in the order of [`ModelWeights::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.embed, &mut self.embed_bias];
        for layer in &mut self.layers {
            out.push(&mut layer.norm1.gain);
            out.push(&mut layer.norm1.bias);
            for ((q, k), v) in layer.query.iter_mut().zip(&mut layer.key).zip(&mut layer.value) {
                out.push(q);
                out.push(k);
                out.push(v);
            }
            out.push(&mut layer.output);
            out.push(&mut layer.norm2.gain);
            out.push(&mut layer.norm2.bias);
            out.push(&mut layer.ff_in);
            out.push(&mut layer.ff_in_bias);
            out.push(&mut layer.ff_out);
            out.push(&mut layer.ff_out_bias);
        }
        out.push(&mut self.final_norm.gain);
        out.push(&mut self.final_norm.bias);
        out.push(&mut self.head_hidden);
        out.push(&mut self.head_hidden_bias);
        out.push(&mut self.head_out);
        out.push(&mut self.head_out_bias);
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.as_slice().len()).sum()
    }

    /// All parameters flattened in tensor order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|(_, t)| t.as_slice().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<(), ModelError> {
        if values.len() != self.n_parameters() {
            return Err(ModelError::BadShape(format!(
                "{} values for {} parameters",
                values.len(),
                self.n_parameters()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.as_slice().len();
            t.as_mut_slice().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }
}

fn check_finite(m: &Matrix) -> Result<(), ModelError> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFiniteInput)
    }
}

fn softmax_rows(s: &mut Matrix) {
    for i in 0..s.rows() {
        let row = s.row_mut(i);
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = (*x - top).exp();
            total += *x;
        }
        row.iter_mut().for_each(|x| *x /= total);
    }
}

fn attention_probs(q: &Matrix, k: &Matrix) -> Matrix {
    let mut s = q.matmul_t(k);
    s.scale(1.0 / (q.cols() as f64).sqrt());
    softmax_rows(&mut s);
    s
}

/// Scaled dot-product attention `softmax(Q K^T / sqrt(d_k)) V`.
pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<Matrix, ModelError> {
    if q.cols() != k.cols() || k.rows() != v.rows() || q.cols() == 0 || k.rows() == 0 {
        return Err(ModelError::BadShape(format!(
            "Q {:?}, K {:?}, V {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    for m in [q, k, v] {
        check_finite(m)?;
    }
    Ok(attention_probs(q, k).matmul(v))
}

/// Multi-head self-attention of one layer on `x`: heads on `x W_i^Q`,
/// `x W_i^K`, `x W_i^V`, concatenated and projected by `W^O`.
pub fn multi_head(x: &Matrix, layer: &EncoderLayer) -> Result<Matrix, ModelError> {
    let d = layer.output.rows();
    if x.cols() != d || layer.query.iter().any(|w| w.rows() != d) {
        return Err(ModelError::BadShape(format!("input {:?} for width {d}", x.shape())));
    }
    check_finite(x)?;
    let (_, concat) = heads_forward(x, layer);
    Ok(concat.matmul(&layer.output))
}

struct HeadCache {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    p: Matrix,
}

fn heads_forward(a: &Matrix, layer: &EncoderLayer) -> (Vec<HeadCache>, Matrix) {
    let t = a.rows();
    let dk = layer.query[0].cols();
    let mut concat = Matrix::zeros(t, dk * layer.query.len());
    let mut caches = Vec::with_capacity(layer.query.len());
    for i in 0..layer.query.len() {
        let q = a.matmul(&layer.query[i]);
        let k = a.matmul(&layer.key[i]);
        let v = a.matmul(&layer.value[i]);
        let p = attention_probs(&q, &k);
        let h = p.matmul(&v);
        for r in 0..t {
            concat.row_mut(r)[i * dk..(i + 1) * dk].copy_from_slice(h.row(r));
        }
        caches.push(HeadCache { q, k, v, p });
    }
    (caches, concat)
}

struct NormCache {
    xhat: Matrix,
    rstd: Vec<f64>,
}

fn layer_norm(x: &Matrix, p: &LayerNorm) -> (Matrix, NormCache) {
    let (t, d) = x.shape();
    let mut xhat = Matrix::zeros(t, d);
    let mut y = Matrix::zeros(t, d);
    let mut rstd = Vec::with_capacity(t);
    for i in 0..t {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[(i, j)] = h;
            y[(i, j)] = p.gain.as_slice()[j] * h + p.bias.as_slice()[j];
        }
        rstd.push(r);
    }
    (y, NormCache { xhat, rstd })
}

fn layer_norm_backward(dy: &Matrix, p: &LayerNorm, c: &NormCache, grad: &mut LayerNorm) -> Matrix {
    let (t, d) = dy.shape();
    let mut dx = Matrix::zeros(t, d);
    let gain = p.gain.as_slice();
    for i in 0..t {
        let mut dxhat = vec![0.0; d];
        for j in 0..d {
            let g = dy[(i, j)];
            grad.gain.as_mut_slice()[j] += g * c.xhat[(i, j)];
            grad.bias.as_mut_slice()[j] += g;
            dxhat[j] = g * gain[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx = (0..d).map(|j| dxhat[j] * c.xhat[(i, j)]).sum::<f64>() / d as f64;
        for j in 0..d {
            dx[(i, j)] = c.rstd[i] * (dxhat[j] - mean_d - c.xhat[(i, j)] * mean_dx);
        }
    }
    dx
}

const GELU_C: f64 = 0.7978845608028654;

/// Tanh approximation of the Gaussian error linear unit.
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn map(m: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    Matrix::from_vec(m.rows(), m.cols(), m.as_slice().iter().map(|x| f(*x)).collect())
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_vec(
        a.rows(),
        a.cols(),
        a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).collect(),
    )
}

fn add_bias(m: &mut Matrix, bias: &Matrix) {
    m.add_row_vector(bias.as_slice());
}

fn accumulate_bias(grad: &mut Matrix, d: &Matrix) {
    for (g, s) in grad.as_mut_slice().iter_mut().zip(d.sum_rows()) {
        *g += s;
    }
}

fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

struct LayerCache {
    a: Matrix,
    norm1: NormCache,
    heads: Vec<HeadCache>,
    concat: Matrix,
    mask1: Option<Matrix>,
    b: Matrix,
    norm2: NormCache,
    z: Matrix,
    u: Matrix,
    mask2: Option<Matrix>,
}

struct ForwardCache {
    input: Matrix,
    layers: Vec<LayerCache>,
    final_norm: NormCache,
    pooled: Matrix,
    z: Matrix,
    u: Matrix,
}

fn forward(x: &Matrix, w: &ModelWeights, mut rng: Option<&mut ChaCha8Rng>) -> (f64, ForwardCache) {
    let rate = w.config.dropout;
    let mut h = x.matmul(&w.embed);
    add_bias(&mut h, &w.embed_bias);
    let mut layers = Vec::with_capacity(w.layers.len());
    for layer in &w.layers {
        let (a, norm1) = layer_norm(&h, &layer.norm1);
        let (heads, concat) = heads_forward(&a, layer);
        let mut m = concat.matmul(&layer.output);
        let mask1 = match rng.as_deref_mut() {
            Some(r) if rate > 0.0 => Some(dropout_mask(m.rows(), m.cols(), rate, r)),
            _ => None,
        };
        if let Some(mask) = &mask1 {
            m = hadamard(&m, mask);
        }
        h.add_assign(&m);
        let (b, norm2) = layer_norm(&h, &layer.norm2);
        let mut z = b.matmul(&layer.ff_in);
        add_bias(&mut z, &layer.ff_in_bias);
        let u = map(&z, gelu);
        let mut f = u.matmul(&layer.ff_out);
        add_bias(&mut f, &layer.ff_out_bias);
        let mask2 = match rng.as_deref_mut() {
            Some(r) if rate > 0.0 => Some(dropout_mask(f.rows(), f.cols(), rate, r)),
            _ => None,
        };
        if let Some(mask) = &mask2 {
            f = hadamard(&f, mask);
        }
        h.add_assign(&f);
        layers.push(LayerCache {
            a,
            norm1,
            heads,
            concat,
            mask1,
            b,
            norm2,
            z,
            u,
            mask2,
        });
    }
    let (y, final_norm) = layer_norm(&h, &w.final_norm);
    let mut pooled = Matrix::from_vec(1, y.cols(), y.sum_rows());
    pooled.scale(1.0 / y.rows() as f64);
    let mut z = pooled.matmul(&w.head_hidden);
    add_bias(&mut z, &w.head_hidden_bias);
    let u = map(&z, gelu);
    let out = u.matmul(&w.head_out)[(0, 0)] + w.head_out_bias[(0, 0)];
    (
        out,
        ForwardCache {
            input: x.clone(),
            layers,
            final_norm,
            pooled,
            z,
            u,
        },
    )
}

/// Accumulates `d_out * d prediction / d weights` into `grad`.
fn backward(d_out: f64, w: &ModelWeights, c: &ForwardCache, grad: &mut ModelWeights) {
    grad.head_out_bias.as_mut_slice()[0] += d_out;
    let hidden = w.head_out.rows();
    let mut dz = Matrix::zeros(1, hidden);
    for j in 0..hidden {
        grad.head_out[(j, 0)] += c.u[(0, j)] * d_out;
        dz[(0, j)] = d_out * w.head_out[(j, 0)] * gelu_grad(c.z[(0, j)]);
    }
    grad.head_hidden.add_assign(&c.pooled.t_matmul(&dz));
    accumulate_bias(&mut grad.head_hidden_bias, &dz);
    let dpooled = dz.matmul_t(&w.head_hidden);
    let t = c.input.rows();
    let mut dy = Matrix::zeros(t, dpooled.cols());
    for i in 0..t {
        for j in 0..dpooled.cols() {
            dy[(i, j)] = dpooled[(0, j)] / t as f64;
        }
    }
    let mut dh = layer_norm_backward(&dy, &w.final_norm, &c.final_norm, &mut grad.final_norm);

    for (l, layer) in w.layers.iter().enumerate().rev() {
        let lc = &c.layers[l];
        let g = &mut grad.layers[l];
        // feed-forward block
        let df = match &lc.mask2 {
            Some(mask) => hadamard(&dh, mask),
            None => dh.clone(),
        };
        accumulate_bias(&mut g.ff_out_bias, &df);
        g.ff_out.add_assign(&lc.u.t_matmul(&df));
        let du = df.matmul_t(&layer.ff_out);
        let dz = hadamard(&du, &map(&lc.z, gelu_grad));
        g.ff_in.add_assign(&lc.b.t_matmul(&dz));
        accumulate_bias(&mut g.ff_in_bias, &dz);
        let db = dz.matmul_t(&layer.ff_in);
        dh.add_assign(&layer_norm_backward(&db, &layer.norm2, &lc.norm2, &mut g.norm2));

        // attention block
        let dm = match &lc.mask1 {
            Some(mask) => hadamard(&dh, mask),
            None => dh.clone(),
        };
        g.output.add_assign(&lc.concat.t_matmul(&dm));
        let dconcat = dm.matmul_t(&layer.output);
        let dk = layer.query[0].cols();
        let scale = 1.0 / (dk as f64).sqrt();
        let mut da = Matrix::zeros(lc.a.rows(), lc.a.cols());
        for (i, hc) in lc.heads.iter().enumerate() {
            let mut dhead = Matrix::zeros(t, dk);
            for r in 0..t {
                dhead.row_mut(r).copy_from_slice(&dconcat.row(r)[i * dk..(i + 1) * dk]);
            }
            let dp = dhead.matmul_t(&hc.v);
            let dv = hc.p.t_matmul(&dhead);
            let mut ds = Matrix::zeros(t, t);
            for r in 0..t {
                let inner: f64 = (0..t).map(|s| dp[(r, s)] * hc.p[(r, s)]).sum();
                for s in 0..t {
                    ds[(r, s)] = hc.p[(r, s)] * (dp[(r, s)] - inner) * scale;
                }
            }
            let dq = ds.matmul(&hc.k);
            let dkey = ds.t_matmul(&hc.q);
            g.query[i].add_assign(&lc.a.t_matmul(&dq));
            g.key[i].add_assign(&lc.a.t_matmul(&dkey));
            g.value[i].add_assign(&lc.a.t_matmul(&dv));
            da.add_assign(&dq.matmul_t(&layer.query[i]));
            da.add_assign(&dkey.matmul_t(&layer.key[i]));
            da.add_assign(&dv.matmul_t(&layer.value[i]));
        }
        dh.add_assign(&layer_norm_backward(&da, &layer.norm1, &lc.norm1, &mut g.norm1));
    }
    grad.embed.add_assign(&c.input.t_matmul(&dh));
    accumulate_bias(&mut grad.embed_bias, &dh);
}

fn check_sample(x: &Matrix, w: &ModelWeights) -> Result<(), ModelError> {
    if x.cols() != w.config.inputs || x.rows() == 0 {
        return Err(ModelError::BadShape(format!(
            "sample {:?} for {} input features",
            x.shape(),
            w.config.inputs
        )));
    }
    check_finite(x)
}

/// Scalar prediction for one `T x F` window.
pub fn encoder_forward(x: &Matrix, weights: &ModelWeights) -> Result<f64, ModelError> {
    check_sample(x, weights)?;
    Ok(forward(x, weights, None).0)
}

pub fn loss_mse(pred: &[f64], target: &[f64]) -> Result<f64, ModelError> {
    if pred.len() != target.len() {
        return Err(ModelError::LengthMismatch(pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64)
}

/// Mean squared error of the batch and its exact gradient with respect to every weight.
pub fn gradient(weights: &ModelWeights, inputs: &[Matrix], targets: &[f64]) -> Result<(f64, ModelWeights), ModelError> {
    if inputs.len() != targets.len() {
        return Err(ModelError::LengthMismatch(inputs.len(), targets.len()));
    }
    if inputs.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    for x in inputs {
        check_sample(x, weights)?;
    }
    let batch: Vec<(&Matrix, f64)> = inputs.iter().zip(targets.iter().copied()).collect();
    gradient_with(weights, &batch, None)
}

fn gradient_with(
    weights: &ModelWeights,
    batch: &[(&Matrix, f64)],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, ModelWeights), ModelError> {
    let n = batch.len() as f64;
    let mut grad = weights.zeros_like();
    let mut loss = 0.0;
    for &(x, y) in batch {
        let (pred, cache) = forward(x, weights, rng.as_deref_mut());
        let e = pred - y;
        loss += e * e / n;
        backward(2.0 * e / n, weights, &cache, &mut grad);
    }
    if !grad.is_finite() {
        return Err(ModelError::NonFiniteGradient);
    }
    Ok((loss, grad))
}

/// Input windows and next-day targets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WindowedDataset {
    /// `T x F` windows of consecutive days.
    pub inputs: Vec<Matrix>,
    pub targets: Vec<f64>,
    /// Row of the target day in the source series.
    pub target_rows: Vec<usize>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Windows of rows `t-T+1..=t` paired with the target at `t+1`, for every `t`
/// such that the window and its target both lie inside `rows`.
pub fn build_windows(features: &Matrix, target: &[f64], window: usize, rows: Range<usize>) -> Result<WindowedDataset, ModelError> {
    if features.rows() != target.len() {
        return Err(ModelError::LengthMismatch(features.rows(), target.len()));
    }
    if window == 0 || rows.end > target.len() {
        return Err(ModelError::BadShape(format!(
            "window {window} over rows {rows:?} of {}",
            target.len()
        )));
    }
    let mut ds = WindowedDataset::default();
    if rows.end < rows.start + window + 1 {
        return Ok(ds);
    }
    for t in rows.start + window - 1..rows.end - 1 {
        ds.inputs.push(features.slice_rows(t + 1 - window, t + 1));
        ds.targets.push(target[t + 1]);
        ds.target_rows.push(t + 1);
    }
    Ok(ds)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    /// Training MSE per epoch: the sample-weighted mean of the batch losses,
    /// each taken before its update.
    pub history: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

/// Mini-batch training from freshly initialised weights.
pub fn train(dataset: &WindowedDataset, config: &ModelConfig, train_config: &TrainConfig) -> Result<TrainOutcome, ModelError> {
    let init = ModelWeights::init(config, train_config.seed)?;
    train_from(init, dataset, train_config)
}

/// Mini-batch training starting from `weights`.
///
/// Batches visit the samples in date order unless shuffling is enabled.
pub fn train_from(mut weights: ModelWeights, dataset: &WindowedDataset, tc: &TrainConfig) -> Result<TrainOutcome, ModelError> {
    tc.validate()?;
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    for x in &dataset.inputs {
        check_sample(x, &weights)?;
    }
    if dataset.targets.iter().any(|y| !y.is_finite()) {
        return Err(ModelError::NonFiniteInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut adam = Adam {
        m: vec![0.0; weights.n_parameters()],
        v: vec![0.0; weights.n_parameters()],
        step: 0,
    };
    let mut history = Vec::with_capacity(tc.epochs);
    let mut best: Option<(f64, ModelWeights)> = None;
    let mut since_best = 0;
    let use_dropout = weights.config.dropout > 0.0;
    for epoch in 0..tc.epochs {
        if tc.shuffle {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<(&Matrix, f64)> = chunk.iter().map(|&i| (&dataset.inputs[i], dataset.targets[i])).collect();
            let drop_rng = if use_dropout { Some(&mut rng) } else { None };
            let (loss, grad) = match gradient_with(&weights, &batch, drop_rng) {
                Ok(v) => v,
                Err(ModelError::NonFiniteGradient) => return Err(ModelError::DivergedLoss { epoch }),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(ModelError::DivergedLoss { epoch });
            }
            epoch_loss += loss * chunk.len() as f64 / dataset.len() as f64;
            apply_update(&mut weights, &grad, tc, &mut adam);
        }
        let loss = epoch_loss;
        if !loss.is_finite() {
            return Err(ModelError::DivergedLoss { epoch });
        }
        history.push(loss);
        if let Some(patience) = tc.patience {
            if best.as_ref().is_none_or(|(b, _)| loss < *b) {
                best = Some((loss, weights.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }
    if let Some((_, w)) = best {
        weights = w;
    }
    Ok(TrainOutcome { weights, history })
}

fn apply_update(weights: &mut ModelWeights, grad: &ModelWeights, tc: &TrainConfig, adam: &mut Adam) {
    let lr = tc.learning_rate;
    match tc.optimizer {
        Optimizer::Sgd => {
            for (w, g) in weights.tensors_mut().into_iter().zip(grad.tensors()) {
                for (x, d) in w.as_mut_slice().iter_mut().zip(g.1.as_slice()) {
                    *x -= lr * d;
                }
            }
        }
        Optimizer::Adam => {
            let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
            adam.step += 1;
            let c1 = 1.0 - b1.powi(adam.step);
            let c2 = 1.0 - b2.powi(adam.step);
            let mut i = 0;
            for (w, g) in weights.tensors_mut().into_iter().zip(grad.tensors()) {
                for (x, d) in w.as_mut_slice().iter_mut().zip(g.1.as_slice()) {
                    adam.m[i] = b1 * adam.m[i] + (1.0 - b1) * d;
                    adam.v[i] = b2 * adam.v[i] + (1.0 - b2) * d * d;
                    *x -= lr * (adam.m[i] / c1) / ((adam.v[i] / c2).sqrt() + eps);
                    i += 1;
                }
            }
        }
    }
}

/// One prediction per window, in model units.
pub fn predict(weights: &ModelWeights, dataset: &WindowedDataset) -> Result<Vec<f64>, ModelError> {
    if !weights.is_finite() {
        return Err(ModelError::NonFiniteInput);
    }
    dataset.inputs.iter().map(|x| encoder_forward(x, weights)).collect()
}

/// A trained model together with the feature and target scaling it expects.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformerModel {
    pub weights: ModelWeights,
    pub train: TrainConfig,
    pub features: Vec<String>,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
    pub history: Vec<f64>,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    // a constant column carries no information; leave it centred but unscaled
    let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    (mean, std)
}

impl TransformerModel {
    /// Fits scalers on the training rows, z-scores features and target, and trains.
    pub fn fit(
        features: &Matrix,
        names: &[String],
        target: &[f64],
        train_rows: Range<usize>,
        config: &ModelConfig,
        tc: &TrainConfig,
    ) -> Result<Self, ModelError> {
        if names.len() != features.cols() || config.inputs != features.cols() {
            return Err(ModelError::BadShape(format!(
                "{} names and {} inputs for {} feature columns",
                names.len(),
                config.inputs,
                features.cols()
            )));
        }
        if train_rows.end > features.rows() || train_rows.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let (mut feature_mean, mut feature_std) = (Vec::new(), Vec::new());
        for j in 0..features.cols() {
            let (m, s) = mean_std(train_rows.clone().map(|i| features[(i, j)]));
            feature_mean.push(m);
            feature_std.push(s);
        }
        let (target_mean, target_std) = mean_std(train_rows.clone().map(|i| target[i]));
        let mut model = Self {
            weights: ModelWeights::init(config, tc.seed)?,
            train: tc.clone(),
            features: names.to_vec(),
            feature_mean,
            feature_std,
            target_mean,
            target_std,
            history: Vec::new(),
        };
        let ds = model.dataset(features, target, train_rows)?;
        let out = train_from(model.weights.clone(), &ds, tc)?;
        model.weights = out.weights;
        model.history = out.history;
        Ok(model)
    }

    /// Scaled windows over `rows`.
    pub fn dataset(&self, features: &Matrix, target: &[f64], rows: Range<usize>) -> Result<WindowedDataset, ModelError> {
        let mut z = features.clone();
        for i in 0..z.rows() {
            for j in 0..z.cols() {
                z[(i, j)] = (z[(i, j)] - self.feature_mean[j]) / self.feature_std[j];
            }
        }
        let y: Vec<f64> = target.iter().map(|v| (v - self.target_mean) / self.target_std).collect();
        build_windows(&z, &y, self.train.window, rows)
    }

    /// Predictions in target units for every window over `rows`, with the target row of each.
    pub fn predict_rows(&self, features: &Matrix, target: &[f64], rows: Range<usize>) -> Result<(Vec<usize>, Vec<f64>), ModelError> {
        let ds = self.dataset(features, target, rows)?;
        let preds = predict(&self.weights, &ds)?
            .into_iter()
            .map(|p| p * self.target_std + self.target_mean)
            .collect();
        Ok((ds.target_rows, preds))
    }

    /// Forecast in target units for one raw `T x F` window.
    pub fn predict_window(&self, window: &Matrix) -> Result<f64, ModelError> {
        if window.cols() != self.features.len() || window.rows() == 0 {
            return Err(ModelError::BadShape(format!(
                "window is {}x{}, model expects {} features",
                window.rows(),
                window.cols(),
                self.features.len()
            )));
        }
        let mut z = window.clone();
        for i in 0..z.rows() {
            for j in 0..z.cols() {
                z[(i, j)] = (z[(i, j)] - self.feature_mean[j]) / self.feature_std[j];
            }
        }
        Ok(encoder_forward(&z, &self.weights)? * self.target_std + self.target_mean)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.document()).map_err(|e| crate::Error::json(path, e))?;
        crate::marketdata::write_text(path, &text)
    }

    pub fn load(path: impl AsRef<Path>) -> crate::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        let doc: ModelDocument = serde_json::from_str(&text).map_err(|e| crate::Error::json(path, e))?;
        Ok(Self::from_document(doc)?)
    }

    pub fn document(&self) -> ModelDocument {
        ModelDocument {
            config: self.weights.config.clone(),
            train: self.train.clone(),
            features: self.features.clone(),
            feature_mean: self.feature_mean.clone(),
            feature_std: self.feature_std.clone(),
            target_mean: self.target_mean,
            target_std: self.target_std,
            history: self.history.clone(),
            tensors: self
                .weights
                .tensors()
                .into_iter()
                .map(|(name, t)| TensorRecord {
                    name,
                    shape: [t.rows(), t.cols()],
                    data: t.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self, ModelError> {
        let mut weights = ModelWeights::init(&doc.config, 0)?;
        let names: Vec<String> = weights.tensors().into_iter().map(|(n, _)| n).collect();
        if names.len() != doc.tensors.len() {
            return Err(ModelError::BadShape(format!(
                "expected {} tensors, found {}",
                names.len(),
                doc.tensors.len()
            )));
        }
        for ((slot, name), rec) in weights.tensors_mut().into_iter().zip(&names).zip(&doc.tensors) {
            if &rec.name != name || [slot.rows(), slot.cols()] != rec.shape || rec.data.len() != rec.shape[0] * rec.shape[1] {
                return Err(ModelError::BadShape(format!("tensor `{}` does not match `{name}`", rec.name)));
            }
            slot.as_mut_slice().copy_from_slice(&rec.data);
        }
        if !weights.is_finite() {
            return Err(ModelError::NonFiniteInput);
        }
        let n = doc.config.inputs;
        if doc.features.len() != n || doc.feature_mean.len() != n || doc.feature_std.len() != n {
            return Err(ModelError::BadShape("feature scaler does not match the input width".into()));
        }
        Ok(Self {
            weights,
            train: doc.train,
            features: doc.features,
            feature_mean: doc.feature_mean,
            feature_std: doc.feature_std,
            target_mean: doc.target_mean,
            target_std: doc.target_std,
            history: doc.history,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// JSON form of a [`TransformerModel`]; tensors are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub config: ModelConfig,
    pub train: TrainConfig,
    pub features: Vec<String>,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
    pub history: Vec<f64>,
    pub tensors: Vec<TensorRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect())
    }

    fn perturbed_model(config: &ModelConfig, seed: u64) -> ModelWeights {
        // non-trivial norms and biases so every path carries gradient
        let mut w = ModelWeights::init(config, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        for t in w.tensors_mut() {
            for x in t.as_mut_slice() {
                *x += 0.1 * rng.random_range(-1.0..1.0);
            }
        }
        w
    }

    #[test]
    fn attention_examples() {
        let v = Matrix::from_rows(&[[3.0, -1.0]]);
        let q = Matrix::from_rows(&[[0.4]]);
        assert_eq!(attention(&q, &Matrix::from_rows(&[[2.0]]), &v).unwrap(), v);

        let q = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]);
        let k = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]);
        let v = Matrix::from_rows(&[[2.0], [4.0]]);
        let out = attention(&q, &k, &v).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 3.0]);

        let q = Matrix::from_rows(&[[1.0, 0.0, 0.0, 0.0]]);
        let k = Matrix::from_rows(&[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]);
        let p = attention_probs(&q, &k);
        let want = 0.5f64.exp() / (0.5f64.exp() + 1.0);
        assert!((p[(0, 0)] - want).abs() < 1e-15);
        assert!((p[(0, 0)] - 0.62246).abs() < 1e-5);
        assert!((p[(0, 1)] - 0.37754).abs() < 1e-5);

        assert!(matches!(
            attention(&q, &Matrix::zeros(2, 3), &v),
            Err(ModelError::BadShape(_))
        ));
        let nan = Matrix::from_rows(&[[f64::NAN, 0.0, 0.0, 0.0]]);
        assert_eq!(attention(&nan, &k, &v), Err(ModelError::NonFiniteInput));
    }

    #[test]
    fn single_identity_head_reduces_to_attention() {
        let mut config = ModelConfig::new(2);
        config.width = 4;
        config.heads = 1;
        let mut w = ModelWeights::init(&config, 1).unwrap();
        let layer = &mut w.layers[0];
        layer.query = vec![Matrix::identity(4)];
        layer.key = vec![Matrix::identity(4)];
        layer.value = vec![Matrix::identity(4)];
        layer.output = Matrix::identity(4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(3, 4, &mut rng);
        let got = multi_head(&x, &w.layers[0]).unwrap();
        let want = attention(&x, &x, &x).unwrap();
        assert!((0..12).all(|i| (got.as_slice()[i] - want.as_slice()[i]).abs() < 1e-15));

        w.layers[0].output = Matrix::zeros(4, 4);
        assert_eq!(multi_head(&x, &w.layers[0]).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn multi_head_matches_head_by_head_oracle() {
        let w = ModelWeights::init(&ModelConfig::new(5), 9).unwrap();
        let layer = &w.layers[0];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_matrix(5, 12, &mut rng);
        let mut concat = Matrix::zeros(5, 12);
        for i in 0..3 {
            let h = attention(&x.matmul(&layer.query[i]), &x.matmul(&layer.key[i]), &x.matmul(&layer.value[i])).unwrap();
            for r in 0..5 {
                for c in 0..4 {
                    concat[(r, 4 * i + c)] = h[(r, c)];
                }
            }
        }
        let want = concat.matmul(&layer.output);
        let got = multi_head(&x, layer).unwrap();
        for (a, b) in got.as_slice().iter().zip(want.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_row_window_pools_to_itself() {
        let w = perturbed_model(&ModelConfig::new(3), 2);
        let x = Matrix::from_rows(&[[0.3, -1.0, 2.0]]);
        let twice = Matrix::from_rows(&[[0.3, -1.0, 2.0], [0.3, -1.0, 2.0]]);
        // identical rows attend uniformly, so duplicating the row changes nothing
        let a = encoder_forward(&x, &w).unwrap();
        let b = encoder_forward(&twice, &w).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss_mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(loss_mse(&[0.0], &[2.0]).unwrap(), 4.0);
        assert_eq!(loss_mse(&[0.0], &[2.0, 1.0]), Err(ModelError::LengthMismatch(1, 2)));
    }

    #[test]
    fn gradient_of_cut_path_is_zero() {
        let mut w = perturbed_model(&ModelConfig::new(3), 5);
        w.head_out = Matrix::zeros(w.head_out.rows(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = vec![random_matrix(4, 3, &mut rng)];
        let (_, g) = gradient(&w, &xs, &[0.7]).unwrap();
        assert_eq!(g.head_hidden.max_abs(), 0.0);
        assert_eq!(g.embed.max_abs(), 0.0);
        assert!(g.head_out.max_abs() > 0.0);
    }

    #[test]
    fn duplicated_batch_gives_same_gradient() {
        let w = perturbed_model(&ModelConfig::new(3), 6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<Matrix> = (0..3).map(|_| random_matrix(4, 3, &mut rng)).collect();
        let ys = [0.1, -0.5, 1.2];
        let (l1, g1) = gradient(&w, &xs, &ys).unwrap();
        let xs2: Vec<Matrix> = xs.iter().chain(&xs).cloned().collect();
        let ys2: Vec<f64> = ys.iter().chain(&ys).copied().collect();
        let (l2, g2) = gradient(&w, &xs2, &ys2).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.to_flat().iter().zip(g2.to_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences_on_tiny_model() {
        let config = ModelConfig {
            inputs: 3,
            width: 6,
            heads: 3,
            layers: 1,
            ff_width: 8,
            dropout: 0.0,
        };
        let w = perturbed_model(&config, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<Matrix> = (0..3).map(|_| random_matrix(2, 3, &mut rng)).collect();
        let ys = [0.3, -0.2, 1.0];
        let (_, g) = gradient(&w, &xs, &ys).unwrap();
        let flat = w.to_flat();
        let analytic = g.to_flat();
        let loss_at = |v: &[f64]| {
            let mut m = w.clone();
            m.set_flat(v).unwrap();
            let preds: Vec<f64> = xs.iter().map(|x| encoder_forward(x, &m).unwrap()).collect();
            loss_mse(&preds, &ys).unwrap()
        };
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += step;
            let mut minus = flat.clone();
            minus[i] -= step;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * step);
            let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn windows_respect_range() {
        let features = Matrix::from_vec(10, 1, (0..10).map(f64::from).collect());
        let target: Vec<f64> = (0..10).map(|i| 100.0 + i as f64).collect();
        let ds = build_windows(&features, &target, 3, 0..6).unwrap();
        assert_eq!(ds.target_rows, vec![3, 4, 5]);
        assert_eq!(ds.inputs[0].as_slice(), &[0.0, 1.0, 2.0]);
        assert_eq!(ds.targets[2], 105.0);
        let test = build_windows(&features, &target, 3, 6..10).unwrap();
        assert_eq!(test.target_rows, vec![9]);
        assert!(build_windows(&features, &target, 3, 6..9).unwrap().is_empty());
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = WindowedDataset {
            inputs: (0..5).map(|_| random_matrix(2, 2, &mut rng)).collect(),
            targets: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            target_rows: (0..5).collect(),
        };
        let config = ModelConfig::new(2);
        let tc = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..Default::default()
        };
        let out = train(&ds, &config, &tc).unwrap();
        assert_eq!(out.weights, ModelWeights::init(&config, 0).unwrap());
        assert!(out.history.windows(2).all(|p| p[0] == p[1]));
        assert_eq!(train(&WindowedDataset::default(), &config, &tc), Err(ModelError::EmptyDataset));
    }

    #[test]
    fn document_round_trip() {
        let model = TransformerModel {
            weights: perturbed_model(&ModelConfig::new(2), 3),
            train: TrainConfig::default(),
            features: vec!["a".into(), "b".into()],
            feature_mean: vec![0.0, 1.0],
            feature_std: vec![1.0, 2.0],
            target_mean: 0.5,
            target_std: 3.0,
            history: vec![1.0],
        };
        let text = serde_json::to_string(&model.document()).unwrap();
        let doc: ModelDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(TransformerModel::from_document(doc).unwrap(), model);
    }
}
