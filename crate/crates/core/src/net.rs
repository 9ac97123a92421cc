//! Embedding layer plus a small ReLU network with a single output logit.
//!
//! The input is a relaxed encoding: `m` blocks, block `i` a point of the
//! simplex over the `t_i` values of feature `i`. Block `i` is mapped through
//! `Q_i` (shape `d x t_i`), the `m` embeddings are concatenated feature-major
//! and fed through dense layers. Loss is binary cross-entropy on the logit.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projections::BlockLayout;

/// Dense row-major matrix. Serialized as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged matrix rows".into()));
        }
        Ok(Self {
            rows: n,
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.data.chunks(m.cols.max(1)).map(<[f64]>::to_vec).take(m.rows).collect()
    }
}

/// Per-feature embedding tables `Q_i` of shape `d x t_i`, optionally with the
/// value-to-cluster maps produced by merging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub tables: Vec<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_maps: Option<Vec<Vec<usize>>>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, tables: Vec<Matrix>) -> Result<Self> {
        for (i, q) in tables.iter().enumerate() {
            if q.rows() != dim {
                return Err(Error::Shape(format!(
                    "embedding table {i} has {} rows, expected width {dim}",
                    q.rows()
                )));
            }
            if q.as_slice().iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("embedding table {i} has non-finite entries")));
            }
        }
        Ok(Self {
            dim,
            tables,
            cluster_maps: None,
        })
    }

    /// Entries drawn from `N(0, 1) / sqrt(d)`.
    pub fn random(cardinalities: &[usize], dim: usize, rng: &mut impl Rng) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let tables = cardinalities
            .iter()
            .map(|&t| {
                let data = (0..dim * t)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        scale * z
                    })
                    .collect();
                Matrix { rows: dim, cols: t, data }
            })
            .collect();
        Self {
            dim,
            tables,
            cluster_maps: None,
        }
    }

    pub fn n_features(&self) -> usize {
        self.tables.len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.tables.iter().map(Matrix::cols).collect()
    }

    pub fn layout(&self) -> BlockLayout {
        BlockLayout::from_cardinalities(&self.cardinalities())
    }

    /// Length of the concatenated embedding, `m * d`.
    pub fn output_width(&self) -> usize {
        self.dim * self.tables.len()
    }

    pub fn column(&self, feature: usize, value: usize) -> Vec<f64> {
        self.tables[feature].column(value)
    }

    /// Embedding of a discrete row: column `row[i]` of each `Q_i`.
    pub fn embed_row(&self, row: &[usize]) -> Result<Vec<f64>> {
        if row.len() != self.tables.len() {
            return Err(Error::Shape(format!(
                "row has {} features, embeddings have {}",
                row.len(),
                self.tables.len()
            )));
        }
        let mut out = Vec::with_capacity(self.output_width());
        for (q, &v) in self.tables.iter().zip(row) {
            if v >= q.cols() {
                return Err(Error::InvalidInput(format!("value index {v} out of range")));
            }
            out.extend((0..self.dim).map(|r| q.get(r, v)));
        }
        Ok(out)
    }

    fn check_shapes_match(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.tables.len() == other.tables.len()
            && self.tables.iter().zip(&other.tables).all(|(a, b)| a.cols() == b.cols())
    }
}

/// Concatenation of `Q_i * block_i` over features.
pub fn embed(xtilde: &[f64], q: &EmbeddingSet) -> Result<Vec<f64>> {
    let layout = q.layout();
    if xtilde.len() != layout.width() {
        return Err(Error::Shape(format!(
            "input of length {} does not match embedding layout width {}",
            xtilde.len(),
            layout.width()
        )));
    }
    let mut out = vec![0.0; q.output_width()];
    embed_into(xtilde, q, &layout, &mut out);
    Ok(out)
}

fn embed_into(xtilde: &[f64], q: &EmbeddingSet, layout: &BlockLayout, out: &mut [f64]) {
    let d = q.dim;
    for (i, table) in q.tables.iter().enumerate() {
        let block = &xtilde[layout.range(i)];
        for r in 0..d {
            out[i * d + r] = table.row(r).iter().zip(block).map(|(a, b)| a * b).sum();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out x in`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Dense layers: ReLU on every hidden layer, linear output logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub layers: Vec<Dense>,
}

impl NetParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(input: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-a, a);
                Dense {
                    weight: Matrix {
                        rows: fan_out,
                        cols: fan_in,
                        data: (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect(),
                    },
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.cols())
    }

    /// `[input, hidden..., 1]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_width()];
        s.extend(self.layers.iter().map(|l| l.weight.rows()));
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].weight.rows() != w[1].weight.cols() {
                return Err(Error::Shape(format!("layers {i} and {} do not chain", i + 1)));
            }
        }
        for l in &self.layers {
            if l.bias.len() != l.weight.rows() {
                return Err(Error::Shape("bias length differs from layer output".into()));
            }
        }
        if self.layers.last().map(|l| l.weight.rows()) != Some(1) {
            return Err(Error::Shape("last layer must produce a single logit".into()));
        }
        Ok(())
    }

    fn for_each_param_mut(&mut self, other: &Self, mut f: impl FnMut(&mut f64, f64)) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &g) in a.weight.data.iter_mut().zip(&b.weight.data) {
                f(x, g);
            }
            for (x, &g) in a.bias.iter_mut().zip(&b.bias) {
                f(x, g);
            }
        }
    }

    /// `self -= lr * grad`.
    pub fn sgd_step(&mut self, grad: &Self, lr: f64) {
        self.for_each_param_mut(grad, |x, g| *x -= lr * g);
    }
}

/// Gradients of the loss for each parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    pub d_theta: NetParams,
    pub d_q: Vec<Matrix>,
    pub d_input: Vec<f64>,
}

impl GradBundle {
    pub fn zeros(q: &EmbeddingSet, theta: &NetParams) -> Self {
        Self {
            d_theta: theta.zeros_like(),
            d_q: q.tables.iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect(),
            d_input: vec![0.0; q.layout().width()],
        }
    }

    pub fn is_finite(&self) -> bool {
        let theta_ok = self.d_theta.layers.iter().all(|l| {
            l.weight.data.iter().chain(&l.bias).all(|x| x.is_finite())
        });
        theta_ok
            && self.d_q.iter().all(|m| m.data.iter().all(|x| x.is_finite()))
            && self.d_input.iter().all(|x| x.is_finite())
    }
}

/// Which gradient groups [`backward_into`] should accumulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradMask {
    pub theta: bool,
    pub q: bool,
    pub input: bool,
}

impl GradMask {
    pub const ALL: Self = Self { theta: true, q: true, input: true };
    pub const THETA: Self = Self { theta: true, q: false, input: false };
    pub const Q: Self = Self { theta: false, q: true, input: false };
    pub const INPUT: Self = Self { theta: false, q: false, input: true };
    pub const THETA_Q: Self = Self { theta: true, q: true, input: false };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forward {
    pub logit: f64,
    pub loss: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(logit)` against `y`, computed stably.
pub fn bce_with_logit(logit: f64, y: f64) -> f64 {
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

fn check_net(q: &EmbeddingSet, theta: &NetParams, xtilde: &[f64]) -> Result<()> {
    theta.validate()?;
    if theta.input_width() != q.output_width() {
        return Err(Error::Shape(format!(
            "network expects {} inputs, embeddings produce {}",
            theta.input_width(),
            q.output_width()
        )));
    }
    let width = q.layout().width();
    if xtilde.len() != width {
        return Err(Error::Shape(format!(
            "input of length {} does not match layout width {width}",
            xtilde.len()
        )));
    }
    Ok(())
}

/// Logit and BCE loss for label `y`.
pub fn forward(xtilde: &[f64], q: &EmbeddingSet, theta: &NetParams, y: u8) -> Result<Forward> {
    check_net(q, theta, xtilde)?;
    let emb = embed(xtilde, q)?;
    let logit = logit_from_embedding(&emb, theta);
    Ok(Forward {
        logit,
        loss: bce_with_logit(logit, f64::from(y)),
    })
}

/// Logit of an already-embedded input.
pub fn logit_from_embedding(emb: &[f64], theta: &NetParams) -> f64 {
    let mut cur = emb.to_vec();
    let last = theta.layers.len() - 1;
    for (l, layer) in theta.layers.iter().enumerate() {
        let mut next: Vec<f64> = layer
            .bias
            .iter()
            .enumerate()
            .map(|(r, b)| b + dot(layer.weight.row(r), &cur))
            .collect();
        if l < last {
            next.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        cur = next;
    }
    cur[0]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact reverse-mode gradients of the BCE loss for all parameter groups.
pub fn backward(xtilde: &[f64], q: &EmbeddingSet, theta: &NetParams, y: u8) -> Result<GradBundle> {
    check_net(q, theta, xtilde)?;
    let mut g = GradBundle::zeros(q, theta);
    backward_into(xtilde, q, theta, y, GradMask::ALL, 1.0, &mut g);
    Ok(g)
}

/// Adds `scale * gradient` of the loss into `acc` for the groups in `mask`,
/// except `d_input`, which is overwritten. Shapes must already be validated.
/// Returns the forward pass.
#[allow(clippy::too_many_arguments)]
pub fn backward_into(
    xtilde: &[f64],
    q: &EmbeddingSet,
    theta: &NetParams,
    y: u8,
    mask: GradMask,
    scale: f64,
    acc: &mut GradBundle,
) -> Forward {
    let layout = q.layout();
    let mut emb = vec![0.0; q.output_width()];
    embed_into(xtilde, q, &layout, &mut emb);

    // Forward with cached activations; acts[0] is the embedding.
    let n_layers = theta.layers.len();
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
    acts.push(emb);
    for (l, layer) in theta.layers.iter().enumerate() {
        let prev = &acts[l];
        let mut z: Vec<f64> = layer
            .bias
            .iter()
            .enumerate()
            .map(|(r, b)| b + dot(layer.weight.row(r), prev))
            .collect();
        if l + 1 < n_layers {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        acts.push(z);
    }
    let logit = acts[n_layers][0];
    let yf = f64::from(y);
    let fwd = Forward {
        logit,
        loss: bce_with_logit(logit, yf),
    };

    let mut grad = vec![(sigmoid(logit) - yf) * scale];
    for l in (0..n_layers).rev() {
        let layer = &theta.layers[l];
        let prev = &acts[l];
        if mask.theta {
            let dl = &mut acc.d_theta.layers[l];
            for (r, &gr) in grad.iter().enumerate() {
                if gr == 0.0 {
                    continue;
                }
                dl.bias[r] += gr;
                let row = &mut dl.weight.data[r * prev.len()..(r + 1) * prev.len()];
                for (w, &a) in row.iter_mut().zip(prev) {
                    *w += gr * a;
                }
            }
        }
        let mut back = vec![0.0; prev.len()];
        for (r, &gr) in grad.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            for (b, &w) in back.iter_mut().zip(layer.weight.row(r)) {
                *b += gr * w;
            }
        }
        if l > 0 {
            // ReLU derivative, using the post-activation value.
            for (b, &a) in back.iter_mut().zip(prev) {
                if a <= 0.0 {
                    *b = 0.0;
                }
            }
        }
        grad = back;
    }

    // `grad` is now d loss / d embedding.
    let d = q.dim;
    for (i, table) in q.tables.iter().enumerate() {
        let block = &xtilde[layout.range(i)];
        let g_emb = &grad[i * d..(i + 1) * d];
        if mask.q {
            let dq = &mut acc.d_q[i];
            for (r, &ge) in g_emb.iter().enumerate() {
                if ge == 0.0 {
                    continue;
                }
                let row = &mut dq.data[r * block.len()..(r + 1) * block.len()];
                for (w, &xb) in row.iter_mut().zip(block) {
                    *w += ge * xb;
                }
            }
        }
        if mask.input {
            let out = &mut acc.d_input[layout.range(i)];
            out.iter_mut().for_each(|v| *v = 0.0);
            for (r, &ge) in g_emb.iter().enumerate() {
                for (o, &w) in out.iter_mut().zip(table.row(r)) {
                    *o += ge * w;
                }
            }
        }
    }
    fwd
}

impl EmbeddingSet {
    /// `self -= lr * grad`, with `grad` shaped like the tables.
    pub fn sgd_step(&mut self, grad: &[Matrix], lr: f64) {
        for (t, g) in self.tables.iter_mut().zip(grad) {
            for (x, &d) in t.data.iter_mut().zip(&g.data) {
                *x -= lr * d;
            }
        }
    }
}

/// Embeddings plus the dense head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingNet {
    pub embeddings: EmbeddingSet,
    pub params: NetParams,
}

impl EmbeddingNet {
    pub fn init(cardinalities: &[usize], dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let embeddings = EmbeddingSet::random(cardinalities, dim, rng);
        let params = NetParams::init(embeddings.output_width(), hidden, rng);
        Self { embeddings, params }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.params.input_width() != self.embeddings.output_width() {
            return Err(Error::Shape("network input does not match embedding width".into()));
        }
        Ok(())
    }

    pub fn forward(&self, xtilde: &[f64], y: u8) -> Result<Forward> {
        forward(xtilde, &self.embeddings, &self.params, y)
    }

    pub fn logit_row(&self, row: &[usize]) -> Result<f64> {
        let emb = self.embeddings.embed_row(row)?;
        Ok(logit_from_embedding(&emb, &self.params))
    }

    pub fn grads_zero(&self) -> GradBundle {
        GradBundle::zeros(&self.embeddings, &self.params)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.embeddings.check_shapes_match(&other.embeddings)
            && self.params.layer_sizes() == other.params.layer_sizes()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &Checkpoint::from(self))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = read_json(path)?;
        let net = Self {
            embeddings: ck.embeddings,
            params: ck.params,
        };
        net.validate()?;
        Ok(net)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    layer_sizes: Vec<usize>,
    embeddings: EmbeddingSet,
    params: NetParams,
}

impl From<&EmbeddingNet> for Checkpoint {
    fn from(n: &EmbeddingNet) -> Self {
        Self {
            layer_sizes: n.params.layer_sizes(),
            embeddings: n.embeddings.clone(),
            params: n.params.clone(),
        }
    }
}

/// On-disk embedding file: tables, optional cluster maps, and the hash of the
/// cost configuration they were trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub d: usize,
    pub feature_names: Vec<String>,
    pub matrices: Vec<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_maps: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl EmbeddingFile {
    pub fn new(q: &EmbeddingSet, feature_names: Vec<String>) -> Self {
        Self {
            d: q.dim,
            feature_names,
            matrices: q.tables.clone(),
            cluster_maps: q.cluster_maps.clone(),
            cost_config_hash: None,
            seed: None,
        }
    }

    pub fn to_embeddings(&self) -> Result<EmbeddingSet> {
        let mut q = EmbeddingSet::new(self.d, self.matrices.clone())?;
        if let Some(maps) = &self.cluster_maps {
            if maps.len() != q.n_features()
                || maps.iter().zip(&q.tables).any(|(m, t)| m.len() != t.cols())
            {
                return Err(Error::Shape("cluster maps do not match embedding tables".into()));
            }
        }
        q.cluster_maps = self.cluster_maps.clone();
        Ok(q)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
