//! Crystal-graph convolutional regressor for a single scalar property.
//!
//! Node vectors start as a linear embedding of the one-hot atom features and
//! are refined by gated residual convolutions
//!
//! ```text
//! vᵢ ← vᵢ + Σ_(i,j,e) σ(z·W_f + b_f) ⊙ softplus(z·W_s + b_s),   z = [vᵢ, vⱼ, e]
//! ```
//!
//! then mean-pooled and passed through a softplus hidden layer and a linear
//! output. Predictions live in min-max normalized target space; the fitted
//! [`TargetScaler`] maps them back to physical units.
//!
//! Gradients are derived by hand. Each weight matrix acting on `z` is split
//! into its self/neighbour/edge row blocks so the node terms are computed once
//! per node instead of once per edge.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fitness::Property;
use crate::graph::{CrystalGraph, ATOM_FEATURE_DIM};

const CORE_BIAS_INIT: f64 = -3.0;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SurrogateError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty training set")]
    EmptyDataset,
    #[error("all training labels equal {0}; cannot normalize")]
    DegenerateLabels(f64),
    #[error("model has no fitted target scaler")]
    UnfittedScaler,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint schema version {found} is not supported (expected {CHECKPOINT_SCHEMA_VERSION})")]
    SchemaVersionMismatch { found: i64 },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub n_conv: usize,
    pub hidden_dim: usize,
    /// Width of the edge features the model consumes (the Gaussian basis size).
    pub edge_dim: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { embed_dim: 64, n_conv: 3, hidden_dim: 32, edge_dim: 41, seed: 0 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("n_conv", self.n_conv),
            ("hidden_dim", self.hidden_dim),
            ("edge_dim", self.edge_dim),
        ] {
            if v == 0 {
                return Err(SurrogateError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    fn uniform(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        Tensor { shape: shape.to_vec(), data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// (2·embed + edge) × embed
    pub gate_weight: Tensor,
    pub gate_bias: Tensor,
    pub core_weight: Tensor,
    pub core_bias: Tensor,
}

/// All trainable tensors. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    /// F0 × embed
    pub embedding: Tensor,
    pub convs: Vec<ConvLayer>,
    /// embed × hidden
    pub hidden_weight: Tensor,
    pub hidden_bias: Tensor,
    /// hidden × 1
    pub output_weight: Tensor,
    pub output_bias: Tensor,
}

impl Parameters {
    fn shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>, usize)> {
        let (d, g, h) = (config.embed_dim, config.edge_dim, config.hidden_dim);
        let z = 2 * d + g;
        let mut out = vec![("embedding".to_string(), vec![ATOM_FEATURE_DIM, d], ATOM_FEATURE_DIM)];
        for l in 0..config.n_conv {
            out.push((format!("conv{l}.gate_weight"), vec![z, d], z));
            out.push((format!("conv{l}.gate_bias"), vec![d], z));
            out.push((format!("conv{l}.core_weight"), vec![z, d], z));
            out.push((format!("conv{l}.core_bias"), vec![d], z));
        }
        out.push(("head.hidden_weight".into(), vec![d, h], d));
        out.push(("head.hidden_bias".into(), vec![h], d));
        out.push(("head.output_weight".into(), vec![h, 1], h));
        out.push(("head.output_bias".into(), vec![1], h));
        out
    }

    fn from_tensors(config: &ModelConfig, mut tensors: Vec<Tensor>) -> Self {
        let mut it = tensors.drain(..);
        let mut next = || it.next().expect("tensor count matches config");
        let embedding = next();
        let convs = (0..config.n_conv)
            .map(|_| ConvLayer { gate_weight: next(), gate_bias: next(), core_weight: next(), core_bias: next() })
            .collect();
        Parameters {
            embedding,
            convs,
            hidden_weight: next(),
            hidden_bias: next(),
            output_weight: next(),
            output_bias: next(),
        }
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        let tensors = Self::shapes(config).iter().map(|(_, s, _)| Tensor::zeros(s)).collect();
        Self::from_tensors(config, tensors)
    }

    /// Tensors in canonical order (the order used for initialization).
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.embedding];
        for c in &self.convs {
            out.extend([&c.gate_weight, &c.gate_bias, &c.core_weight, &c.core_bias]);
        }
        out.extend([&self.hidden_weight, &self.hidden_bias, &self.output_weight, &self.output_bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embedding];
        for c in &mut self.convs {
            out.extend([&mut c.gate_weight, &mut c.gate_bias, &mut c.core_weight, &mut c.core_bias]);
        }
        out.extend([&mut self.hidden_weight, &mut self.hidden_bias, &mut self.output_weight, &mut self.output_bias]);
        out
    }

    pub fn n_values(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Adds `scale · other` element-wise.
    pub fn add_scaled(&mut self, other: &Parameters, scale: f64) {
        for (mine, theirs) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in mine.data.iter_mut().zip(&theirs.data) {
                *x += scale * y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}

/// Min-max scaling of one property's training labels onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub min: f64,
    pub max: f64,
}

impl TargetScaler {
    pub fn fit(labels: &[f64]) -> Result<Self, SurrogateError> {
        if labels.is_empty() {
            return Err(SurrogateError::EmptyDataset);
        }
        let min = labels.iter().copied().fold(f64::INFINITY, f64::min);
        let max = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(SurrogateError::DegenerateLabels(min));
        }
        Ok(TargetScaler { min, max })
    }

    pub fn normalize(&self, y: f64) -> f64 {
        (y - self.min) / (self.max - self.min)
    }

    pub fn denormalize(&self, y_norm: f64) -> f64 {
        self.min + y_norm * (self.max - self.min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub config: ModelConfig,
    pub property: Property,
    pub params: Parameters,
    pub target_scaler: Option<TargetScaler>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_history: Vec<f64>,
    pub final_train_mse: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Stop as soon as the epoch's full-batch MSE drops below this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_below_mse: Option<f64>,
}

impl TrainConfig {
    pub fn new(epochs: usize, learning_rate: f64) -> Self {
        TrainConfig { epochs, learning_rate, stop_below_mse: None }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `out[c] += Σ_r x[r] · w[(row_offset + r), c]` for a row-major matrix with `cols` columns.
#[inline]
fn vec_mat_acc(x: &[f64], w: &[f64], row_offset: usize, cols: usize, out: &mut [f64]) {
    for (r, &xr) in x.iter().enumerate() {
        if xr == 0.0 {
            continue;
        }
        let row = &w[(row_offset + r) * cols..(row_offset + r + 1) * cols];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xr * wv;
        }
    }
}

/// `out[r] += Σ_c w[(row_offset + r), c] · g[c]`, i.e. the transpose product.
#[inline]
fn mat_vec_t_acc(w: &[f64], g: &[f64], row_offset: usize, cols: usize, out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[(row_offset + r) * cols..(row_offset + r + 1) * cols];
        *o += row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `w[(row_offset + r), c] += x[r] · g[c]`.
#[inline]
fn outer_acc(x: &[f64], g: &[f64], row_offset: usize, cols: usize, w: &mut [f64]) {
    for (r, &xr) in x.iter().enumerate() {
        if xr == 0.0 {
            continue;
        }
        let row = &mut w[(row_offset + r) * cols..(row_offset + r + 1) * cols];
        for (wv, &gc) in row.iter_mut().zip(g) {
            *wv += xr * gc;
        }
    }
}

struct LayerTrace {
    v_in: Vec<f64>,
    gate_pre: Vec<f64>,
    core_pre: Vec<f64>,
}

struct Trace {
    layers: Vec<LayerTrace>,
    pooled: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    output: f64,
}

impl SurrogateModel {
    /// Fresh model with weights uniform in `±1/√fan_in`, drawn from a stream
    /// seeded by `config.seed`. Convolution core biases start at −3.
    pub fn init(config: ModelConfig, property: Property) -> Result<Self, SurrogateError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tensors = Parameters::shapes(&config)
            .iter()
            .map(|(_, shape, fan_in)| Tensor::uniform(shape, 1.0 / (*fan_in as f64).sqrt(), &mut rng))
            .collect();
        let mut params = Parameters::from_tensors(&config, tensors);
        // Messages are summed over ~10-20 neighbours per layer; starting the
        // core softplus near zero keeps the residual stream from blowing up.
        for conv in &mut params.convs {
            conv.core_bias.data.fill(CORE_BIAS_INIT);
        }
        Ok(SurrogateModel { config, property, params, target_scaler: None })
    }

    /// A model whose physical prediction is `value` for every graph.
    pub fn constant(config: ModelConfig, property: Property, value: f64) -> Result<Self, SurrogateError> {
        let mut model = Self::init(config, property)?;
        model.params.hidden_weight.data.fill(0.0);
        model.params.hidden_bias.data.fill(0.0);
        model.params.output_weight.data.fill(0.0);
        model.params.output_bias.data.fill(0.0);
        model.target_scaler = Some(TargetScaler { min: value, max: value + 1.0 });
        Ok(model)
    }

    fn check_graph(&self, graph: &CrystalGraph) -> Result<(), SurrogateError> {
        if graph.node_feature_dim != self.params.embedding.shape[0] {
            return Err(SurrogateError::ShapeMismatch(format!(
                "graph `{}` node features have width {}, model expects {}",
                graph.source_id, graph.node_feature_dim, self.params.embedding.shape[0]
            )));
        }
        if graph.edge_feature_dim != self.config.edge_dim {
            return Err(SurrogateError::ShapeMismatch(format!(
                "graph `{}` edge features have width {}, model expects {}",
                graph.source_id, graph.edge_feature_dim, self.config.edge_dim
            )));
        }
        if graph.n_nodes() == 0 {
            return Err(SurrogateError::ShapeMismatch(format!("graph `{}` has no nodes", graph.source_id)));
        }
        Ok(())
    }

    fn trace(&self, graph: &CrystalGraph) -> Result<Trace, SurrogateError> {
        self.check_graph(graph)?;
        let p = &self.params;
        let d = self.config.embed_dim;
        let n = graph.n_nodes();

        let mut v = vec![0.0; n * d];
        for i in 0..n {
            vec_mat_acc(graph.node_feature(i), &p.embedding.data, 0, d, &mut v[i * d..(i + 1) * d]);
        }

        let n_edges = graph.edges.len();
        let mut layers = Vec::with_capacity(p.convs.len());
        for conv in &p.convs {
            let (wf, ws) = (&conv.gate_weight.data, &conv.core_weight.data);
            // per-node self and neighbour contributions for gate and core
            let mut self_f = vec![0.0; n * d];
            let mut nbr_f = vec![0.0; n * d];
            let mut self_s = vec![0.0; n * d];
            let mut nbr_s = vec![0.0; n * d];
            for i in 0..n {
                let vi = &v[i * d..(i + 1) * d];
                let r = i * d..(i + 1) * d;
                vec_mat_acc(vi, wf, 0, d, &mut self_f[r.clone()]);
                vec_mat_acc(vi, wf, d, d, &mut nbr_f[r.clone()]);
                vec_mat_acc(vi, ws, 0, d, &mut self_s[r.clone()]);
                vec_mat_acc(vi, ws, d, d, &mut nbr_s[r]);
            }
            let mut gate_pre = vec![0.0; n_edges * d];
            let mut core_pre = vec![0.0; n_edges * d];
            let mut v_out = v.clone();
            for (e, edge) in graph.edges.iter().enumerate() {
                let r = e * d..(e + 1) * d;
                let gp = &mut gate_pre[r.clone()];
                let cp = &mut core_pre[r];
                gp.copy_from_slice(&conv.gate_bias.data);
                cp.copy_from_slice(&conv.core_bias.data);
                let ef = graph.edge_feature(e);
                vec_mat_acc(ef, wf, 2 * d, d, gp);
                vec_mat_acc(ef, ws, 2 * d, d, cp);
                let (si, nj) = (edge.i * d, edge.j * d);
                let acc = &mut v_out[si..si + d];
                for c in 0..d {
                    gp[c] += self_f[si + c] + nbr_f[nj + c];
                    cp[c] += self_s[si + c] + nbr_s[nj + c];
                    acc[c] += sigmoid(gp[c]) * softplus(cp[c]);
                }
            }
            layers.push(LayerTrace { v_in: std::mem::replace(&mut v, v_out), gate_pre, core_pre });
        }

        let mut pooled = vec![0.0; d];
        for i in 0..n {
            for (pc, vc) in pooled.iter_mut().zip(&v[i * d..(i + 1) * d]) {
                *pc += vc;
            }
        }
        for pc in &mut pooled {
            *pc /= n as f64;
        }
        let h = self.config.hidden_dim;
        let mut hidden_pre = p.hidden_bias.data.clone();
        vec_mat_acc(&pooled, &p.hidden_weight.data, 0, h, &mut hidden_pre);
        let hidden: Vec<f64> = hidden_pre.iter().map(|&x| softplus(x)).collect();
        let output = p.output_bias.data[0]
            + hidden.iter().zip(&p.output_weight.data).map(|(a, b)| a * b).sum::<f64>();
        Ok(Trace { layers, pooled, hidden_pre, hidden, output })
    }

    /// Prediction in normalized target space.
    pub fn forward(&self, graph: &CrystalGraph) -> Result<f64, SurrogateError> {
        Ok(self.trace(graph)?.output)
    }

    /// Accumulates `d_output · ∂output/∂θ` into `grads`.
    fn backward(&self, graph: &CrystalGraph, trace: &Trace, d_output: f64, grads: &mut Parameters) {
        let p = &self.params;
        let d = self.config.embed_dim;
        let h = self.config.hidden_dim;
        let n = graph.n_nodes();

        grads.output_bias.data[0] += d_output;
        let mut d_hidden_pre = vec![0.0; h];
        for k in 0..h {
            grads.output_weight.data[k] += trace.hidden[k] * d_output;
            d_hidden_pre[k] = p.output_weight.data[k] * d_output * sigmoid(trace.hidden_pre[k]);
        }
        for (gb, dh) in grads.hidden_bias.data.iter_mut().zip(&d_hidden_pre) {
            *gb += dh;
        }
        outer_acc(&trace.pooled, &d_hidden_pre, 0, h, &mut grads.hidden_weight.data);
        let mut d_pooled = vec![0.0; d];
        mat_vec_t_acc(&p.hidden_weight.data, &d_hidden_pre, 0, h, &mut d_pooled);

        let mut dv = vec![0.0; n * d];
        for i in 0..n {
            for c in 0..d {
                dv[i * d + c] = d_pooled[c] / n as f64;
            }
        }

        let mut dgp = vec![0.0; d];
        let mut dcp = vec![0.0; d];
        for (l, (conv, lt)) in p.convs.iter().zip(&trace.layers).enumerate().rev() {
            let g = &mut grads.convs[l];
            // residual path carries dv straight through
            let mut d_self_f = vec![0.0; n * d];
            let mut d_nbr_f = vec![0.0; n * d];
            let mut d_self_s = vec![0.0; n * d];
            let mut d_nbr_s = vec![0.0; n * d];
            for (e, edge) in graph.edges.iter().enumerate() {
                let gp = &lt.gate_pre[e * d..(e + 1) * d];
                let cp = &lt.core_pre[e * d..(e + 1) * d];
                let dmsg = &dv[edge.i * d..(edge.i + 1) * d];
                for c in 0..d {
                    let sg = sigmoid(gp[c]);
                    dgp[c] = dmsg[c] * softplus(cp[c]) * sg * (1.0 - sg);
                    dcp[c] = dmsg[c] * sg * sigmoid(cp[c]);
                }
                let ef = graph.edge_feature(e);
                outer_acc(ef, &dgp, 2 * d, d, &mut g.gate_weight.data);
                outer_acc(ef, &dcp, 2 * d, d, &mut g.core_weight.data);
                for c in 0..d {
                    g.gate_bias.data[c] += dgp[c];
                    g.core_bias.data[c] += dcp[c];
                    d_self_f[edge.i * d + c] += dgp[c];
                    d_nbr_f[edge.j * d + c] += dgp[c];
                    d_self_s[edge.i * d + c] += dcp[c];
                    d_nbr_s[edge.j * d + c] += dcp[c];
                }
            }
            for i in 0..n {
                let vi = &lt.v_in[i * d..(i + 1) * d];
                let r = i * d..(i + 1) * d;
                outer_acc(vi, &d_self_f[r.clone()], 0, d, &mut g.gate_weight.data);
                outer_acc(vi, &d_nbr_f[r.clone()], d, d, &mut g.gate_weight.data);
                outer_acc(vi, &d_self_s[r.clone()], 0, d, &mut g.core_weight.data);
                outer_acc(vi, &d_nbr_s[r.clone()], d, d, &mut g.core_weight.data);
                let dvi = &mut dv[r.clone()];
                mat_vec_t_acc(&conv.gate_weight.data, &d_self_f[r.clone()], 0, d, dvi);
                mat_vec_t_acc(&conv.gate_weight.data, &d_nbr_f[r.clone()], d, d, dvi);
                mat_vec_t_acc(&conv.core_weight.data, &d_self_s[r.clone()], 0, d, dvi);
                mat_vec_t_acc(&conv.core_weight.data, &d_nbr_s[r], d, d, dvi);
            }
        }

        for i in 0..n {
            outer_acc(graph.node_feature(i), &dv[i * d..(i + 1) * d], 0, d, &mut grads.embedding.data);
        }
    }

    /// Mean squared error over the batch and its exact gradient.
    pub fn loss_and_gradients(&self, batch: &[(&CrystalGraph, f64)]) -> Result<(f64, Parameters), SurrogateError> {
        if batch.is_empty() {
            return Err(SurrogateError::EmptyBatch);
        }
        let scale = 1.0 / batch.len() as f64;
        let per_sample = |&(graph, label): &(&CrystalGraph, f64)| -> Result<(f64, Parameters), SurrogateError> {
            let trace = self.trace(graph)?;
            let residual = trace.output - label;
            let mut grads = Parameters::zeros(&self.config);
            self.backward(graph, &trace, 2.0 * residual * scale, &mut grads);
            Ok((residual * residual, grads))
        };

        #[cfg(feature = "parallel")]
        let results: Vec<_> = {
            use rayon::prelude::*;
            batch.par_iter().map(per_sample).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let results: Vec<_> = batch.iter().map(per_sample).collect();

        // reduce in batch order so the sum does not depend on thread count
        let mut total = Parameters::zeros(&self.config);
        let mut sq = 0.0;
        for r in results {
            let (s, g) = r?;
            sq += s;
            total.add_scaled(&g, 1.0);
        }
        Ok((sq * scale, total))
    }

    fn mse(&self, batch: &[(&CrystalGraph, f64)]) -> Result<f64, SurrogateError> {
        let mut sq = 0.0;
        for (graph, label) in batch {
            let r = self.forward(graph)? - label;
            sq += r * r;
        }
        Ok(sq / batch.len() as f64)
    }

    /// Fits the target scaler to `dataset` and runs full-batch gradient
    /// descent on the normalized labels, starting from the current weights.
    pub fn train(
        mut self,
        dataset: &[(CrystalGraph, f64)],
        config: &TrainConfig,
    ) -> Result<(SurrogateModel, TrainReport), SurrogateError> {
        if dataset.is_empty() {
            return Err(SurrogateError::EmptyDataset);
        }
        let labels: Vec<f64> = dataset.iter().map(|(_, y)| *y).collect();
        let scaler = TargetScaler::fit(&labels)?;
        self.target_scaler = Some(scaler);
        let batch: Vec<(&CrystalGraph, f64)> = dataset.iter().map(|(g, y)| (g, scaler.normalize(*y))).collect();

        let mut loss_history = Vec::with_capacity(config.epochs);
        let mut early = None;
        for _ in 0..config.epochs {
            let (mse, grads) = self.loss_and_gradients(&batch)?;
            loss_history.push(mse);
            if config.stop_below_mse.is_some_and(|t| mse < t) {
                early = Some(mse);
                break;
            }
            self.params.add_scaled(&grads, -config.learning_rate);
        }
        let final_train_mse = match early {
            Some(mse) => mse,
            None => self.mse(&batch)?,
        };
        let epochs_run = loss_history.len();
        Ok((self, TrainReport { loss_history, final_train_mse, epochs_run }))
    }

    /// Prediction mapped back to physical units; never clamped.
    pub fn predict_physical(&self, graph: &CrystalGraph) -> Result<f64, SurrogateError> {
        let scaler = self.target_scaler.ok_or(SurrogateError::UnfittedScaler)?;
        Ok(scaler.denormalize(self.forward(graph)?))
    }

    pub fn to_json(&self) -> String {
        let names = Parameters::shapes(&self.config);
        let tensors: BTreeMap<String, &Tensor> =
            names.into_iter().map(|(name, _, _)| name).zip(self.params.tensors()).collect();
        let doc = CheckpointRef {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            property_name: self.property,
            config: &self.config,
            target_scaler: self.target_scaler,
            tensors,
        };
        serde_json::to_string(&doc).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SurrogateError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SurrogateError::Format(e.to_string()))?;
        match value.get("schema_version").and_then(|v| v.as_i64()) {
            Some(v) if v == CHECKPOINT_SCHEMA_VERSION as i64 => {}
            Some(found) => return Err(SurrogateError::SchemaVersionMismatch { found }),
            None => return Err(SurrogateError::Format("missing schema_version".into())),
        }
        let doc: Checkpoint = serde_json::from_value(value).map_err(|e| SurrogateError::Format(e.to_string()))?;
        doc.config.validate()?;
        let mut tensors = doc.tensors;
        let mut ordered = Vec::new();
        for (name, shape, _) in Parameters::shapes(&doc.config) {
            let t = tensors
                .remove(&name)
                .ok_or_else(|| SurrogateError::Format(format!("missing tensor `{name}`")))?;
            if t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(SurrogateError::Format(format!(
                    "tensor `{name}` has shape {:?} with {} values, expected {shape:?}",
                    t.shape,
                    t.data.len()
                )));
            }
            ordered.push(t);
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(SurrogateError::Format(format!("unexpected tensor `{extra}`")));
        }
        if let Some(s) = doc.target_scaler {
            if !(s.min.is_finite() && s.max.is_finite() && s.max > s.min) {
                return Err(SurrogateError::Format("target scaler must satisfy min < max".into()));
            }
        }
        let params = Parameters::from_tensors(&doc.config, ordered);
        Ok(SurrogateModel { config: doc.config, property: doc.property_name, params, target_scaler: doc.target_scaler })
    }

    pub fn save(&self, path: &Path) -> Result<(), SurrogateError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SurrogateError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    schema_version: u32,
    property_name: Property,
    config: &'a ModelConfig,
    target_scaler: Option<TargetScaler>,
    tensors: BTreeMap<String, &'a Tensor>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    #[allow(dead_code)]
    schema_version: u32,
    property_name: Property,
    config: ModelConfig,
    target_scaler: Option<TargetScaler>,
    tensors: BTreeMap<String, Tensor>,
}
