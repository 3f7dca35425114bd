//! Graph convolutional classifier with per-edge weights and exact
//! reverse-mode gradients with respect to those weights.
//!
//! Each convolution computes `Z = Â·(H·W) + b` with
//! `Â = D^{-1/2}(A_w + I)D^{-1/2}` and `D_ii = 1 + Σ_j w_ij`. Hidden
//! convolutions apply ReLU. Node tasks read class scores from the last
//! (linear) convolution; graph tasks mean-pool the last hidden layer and apply
//! a dense readout.

mod checkpoint;
mod train;

pub use checkpoint::{load_model, save_model, ModelCheckpoint};
pub use train::{train_gcn, TrainConfig, TrainReport, TrainingData};

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeSet, Graph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Node,
    Graph,
}

/// What a prediction is about: one node, or the whole graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Node(usize),
    Graph,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub task: TaskKind,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub layer_count: usize,
    pub class_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            weight: Array2::zeros((rows, cols)),
            bias: Array1::zeros(cols),
        }
    }

    fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Layer {
            weight: Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-limit..limit)),
            bias: Array1::zeros(cols),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnModel {
    arch: Architecture,
    convs: Vec<Layer>,
    readout: Option<Layer>,
}

impl GcnModel {
    pub fn new<R: Rng>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut model = GcnModel::zeros(arch)?;
        for layer in model.convs.iter_mut().chain(model.readout.iter_mut()) {
            let (r, c) = layer.weight.dim();
            *layer = Layer::glorot(r, c, rng);
        }
        Ok(model)
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        if arch.layer_count == 0 || arch.hidden_dim == 0 || arch.class_count == 0 {
            return Err(Error::InvalidConfig(
                "layer_count, hidden_dim and class_count must be positive".into(),
            ));
        }
        let mut convs = Vec::with_capacity(arch.layer_count);
        let mut dim = arch.feature_dim;
        for l in 0..arch.layer_count {
            let out = match arch.task {
                TaskKind::Node if l + 1 == arch.layer_count => arch.class_count,
                _ => arch.hidden_dim,
            };
            convs.push(Layer::zeros(dim, out));
            dim = out;
        }
        let readout = match arch.task {
            TaskKind::Graph => Some(Layer::zeros(arch.hidden_dim, arch.class_count)),
            TaskKind::Node => None,
        };
        Ok(GcnModel {
            arch,
            convs,
            readout,
        })
    }

    /// Builds a model from explicit layers, checking that dimensions chain.
    pub fn from_layers(arch: Architecture, convs: Vec<Layer>, readout: Option<Layer>) -> Result<Self> {
        let template = GcnModel::zeros(arch)?;
        let shapes_match = |a: &[Layer], b: &[Layer]| {
            a.len() == b.len()
                && a.iter().zip(b).all(|(x, y)| {
                    x.weight.dim() == y.weight.dim() && x.bias.len() == y.bias.len()
                })
        };
        if !shapes_match(&convs, &template.convs)
            || !shapes_match(readout.as_slice(), template.readout.as_slice())
        {
            return Err(Error::DimensionMismatch(
                "layer shapes do not match the architecture".into(),
            ));
        }
        Ok(GcnModel {
            arch,
            convs,
            readout,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn task(&self) -> TaskKind {
        self.arch.task
    }

    pub fn class_count(&self) -> usize {
        self.arch.class_count
    }

    pub fn layer_count(&self) -> usize {
        self.arch.layer_count
    }

    pub fn convs(&self) -> &[Layer] {
        &self.convs
    }

    pub fn readout(&self) -> Option<&Layer> {
        self.readout.as_ref()
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.convs.iter_mut().chain(self.readout.iter_mut())
    }

    fn check_input(&self, g: &Graph) -> Result<()> {
        if g.feature_dim() != self.arch.feature_dim {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} features, model expects {}",
                g.feature_dim(),
                self.arch.feature_dim
            )));
        }
        Ok(())
    }
}

/// Symmetrically normalised weighted adjacency with unit self-loops.
#[derive(Clone, Debug)]
pub struct WeightedAdjacency {
    n: usize,
    pairs: Vec<Edge>,
    weights: Vec<f64>,
    degree: Vec<f64>,
    coef: Vec<f64>,
    self_coef: Vec<f64>,
}

impl WeightedAdjacency {
    pub fn new(n: usize, pairs: &[Edge], weights: &[f64]) -> Self {
        debug_assert_eq!(pairs.len(), weights.len());
        let mut degree = vec![1.0; n];
        for (&(u, v), &w) in pairs.iter().zip(weights) {
            degree[u] += w;
            degree[v] += w;
        }
        let coef = pairs
            .iter()
            .zip(weights)
            .map(|(&(u, v), &w)| w / (degree[u] * degree[v]).sqrt())
            .collect();
        let self_coef = degree.iter().map(|d| 1.0 / d).collect();
        WeightedAdjacency {
            n,
            pairs: pairs.to_vec(),
            weights: weights.to_vec(),
            degree,
            coef,
            self_coef,
        }
    }

    /// `Â · x`.
    pub fn propagate(&self, x: &Array2<f64>) -> Array2<f64> {
        let d = x.ncols();
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let mut out: Vec<f64> = xs
            .chunks_exact(d.max(1))
            .zip(&self.self_coef)
            .flat_map(|(row, &c)| row.iter().map(move |v| v * c))
            .collect();
        out.resize(self.n * d, 0.0);
        for (&(u, v), &c) in self.pairs.iter().zip(&self.coef) {
            if c == 0.0 {
                continue;
            }
            for k in 0..d {
                out[u * d + k] += c * xs[v * d + k];
                out[v * d + k] += c * xs[u * d + k];
            }
        }
        Array2::from_shape_vec((self.n, d), out).expect("shape")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Activations cached by a forward pass for the reverse pass.
#[derive(Clone, Debug)]
pub struct MaskedForwardTrace {
    adjacency: WeightedAdjacency,
    inputs: Vec<Array2<f64>>,
    projected: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    pooled: Option<Array1<f64>>,
    /// Node task: one row per node. Graph task: a single row.
    pub scores: Array2<f64>,
}

impl MaskedForwardTrace {
    pub fn scores_for(&self, target: Target) -> ArrayView1<'_, f64> {
        match target {
            Target::Node(v) => self.scores.row(v),
            Target::Graph => self.scores.row(0),
        }
    }
}

/// Gradients from one reverse pass.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub convs: Vec<Layer>,
    pub readout: Option<Layer>,
    /// `∂loss/∂w` for every weighted pair, in the adjacency's pair order.
    pub edge_weights: Vec<f64>,
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn forward_weighted(
    model: &GcnModel,
    g: &Graph,
    pairs: &[Edge],
    weights: &[f64],
) -> Result<MaskedForwardTrace> {
    model.check_input(g)?;
    let adjacency = WeightedAdjacency::new(g.node_count(), pairs, weights);
    let mut h = g.features().clone();
    let mut inputs = Vec::with_capacity(model.convs.len());
    let mut projected = Vec::with_capacity(model.convs.len());
    let mut pre_activations = Vec::with_capacity(model.convs.len());
    let last = model.convs.len() - 1;
    for (l, layer) in model.convs.iter().enumerate() {
        let p = h.dot(&layer.weight);
        let z = adjacency.propagate(&p) + &layer.bias;
        let linear_out = l == last && model.task() == TaskKind::Node;
        let next = if linear_out { z.clone() } else { relu(&z) };
        inputs.push(std::mem::replace(&mut h, next));
        projected.push(p);
        pre_activations.push(z);
    }
    let (pooled, scores) = match &model.readout {
        Some(readout) => {
            let pooled = h.mean_axis(Axis(0)).expect("graph has nodes");
            let scores = pooled.dot(&readout.weight) + &readout.bias;
            (Some(pooled), scores.insert_axis(Axis(0)))
        }
        None => (None, h),
    };
    Ok(MaskedForwardTrace {
        adjacency,
        inputs,
        projected,
        pre_activations,
        pooled,
        scores,
    })
}

/// Reverse pass from `∂loss/∂scores` (same shape as `trace.scores`).
pub fn backward(model: &GcnModel, trace: &MaskedForwardTrace, d_scores: &Array2<f64>) -> Gradients {
    let adj = &trace.adjacency;
    let n = adj.n;
    let layers = model.convs.len();
    let mut conv_grads: Vec<Layer> = Vec::with_capacity(layers);
    let mut g_pair = vec![0.0; adj.pairs.len()];
    let mut g_self = vec![0.0; n];

    let (readout_grad, mut dz) = match (&model.readout, &trace.pooled) {
        (Some(readout), Some(pooled)) => {
            let ds = d_scores.row(0);
            let d_weight = pooled
                .view()
                .insert_axis(Axis(1))
                .dot(&ds.insert_axis(Axis(0)));
            let d_pooled = readout.weight.dot(&ds);
            let mut dh = Array2::zeros((n, d_pooled.len()));
            dh.rows_mut()
                .into_iter()
                .for_each(|mut r| r.assign(&(&d_pooled / n as f64)));
            let z = &trace.pre_activations[layers - 1];
            let dz = dh * &z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            (
                Some(Layer {
                    weight: d_weight,
                    bias: ds.to_owned(),
                }),
                dz,
            )
        }
        _ => (None, d_scores.clone()),
    };

    for l in (0..layers).rev() {
        {
            let p = trace.projected[l].as_standard_layout();
            let ps = p.as_slice().expect("standard layout");
            let dzs = dz.as_standard_layout();
            let dzs = dzs.as_slice().expect("standard layout");
            let d = p.ncols();
            let dot = |a: usize, b: usize| -> f64 {
                dzs[a * d..(a + 1) * d]
                    .iter()
                    .zip(&ps[b * d..(b + 1) * d])
                    .map(|(x, y)| x * y)
                    .sum()
            };
            for (e, &(u, v)) in adj.pairs.iter().enumerate() {
                g_pair[e] += dot(u, v) + dot(v, u);
            }
            for (i, gs) in g_self.iter_mut().enumerate() {
                *gs += dot(i, i);
            }
        }
        let d_bias = dz.sum_axis(Axis(0));
        let dp = adj.propagate(&dz);
        let d_weight = trace.inputs[l].t().dot(&dp);
        conv_grads.push(Layer {
            weight: d_weight,
            bias: d_bias,
        });
        if l > 0 {
            let dh = dp.dot(&model.convs[l].weight.t());
            let mask = trace.pre_activations[l - 1].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            dz = dh * &mask;
        }
    }
    conv_grads.reverse();

    // Â_uv = w/√(d_u d_v), Â_ii = 1/d_i, d_i = 1 + Σ_j w_ij.
    let mut d_degree: Vec<f64> = (0..n)
        .map(|i| -g_self[i] / (adj.degree[i] * adj.degree[i]))
        .collect();
    for (e, &(u, v)) in adj.pairs.iter().enumerate() {
        let t = g_pair[e] * adj.coef[e];
        d_degree[u] -= t / (2.0 * adj.degree[u]);
        d_degree[v] -= t / (2.0 * adj.degree[v]);
    }
    let edge_weights = adj
        .pairs
        .iter()
        .enumerate()
        .map(|(e, &(u, v))| {
            g_pair[e] / (adj.degree[u] * adj.degree[v]).sqrt() + d_degree[u] + d_degree[v]
        })
        .collect();

    Gradients {
        convs: conv_grads,
        readout: readout_grad,
        edge_weights,
    }
}

/// Class scores (pre-softmax). `edge_weights` is indexed by `g.edges()`;
/// `None` means all ones.
pub fn gcn_forward(model: &GcnModel, g: &Graph, edge_weights: Option<&[f64]>) -> Result<Array2<f64>> {
    let ones;
    let weights = match edge_weights {
        Some(w) => {
            if w.len() != g.edge_count() {
                return Err(Error::DimensionMismatch(format!(
                    "{} edge weights for {} edges",
                    w.len(),
                    g.edge_count()
                )));
            }
            w
        }
        None => {
            ones = vec![1.0; g.edge_count()];
            &ones
        }
    };
    Ok(forward_weighted(model, g, g.edges().as_slice(), weights)?.scores)
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &GcnModel, g: &Graph, target: Target) -> Result<usize> {
    let scores = gcn_forward(model, g, None)?;
    Ok(match target {
        Target::Node(v) => argmax(scores.row(v)),
        Target::Graph => argmax(scores.row(0)),
    })
}

/// A scalar loss on one score vector, with its gradient.
pub trait ScoreLoss {
    fn value_and_grad(&self, scores: ArrayView1<'_, f64>) -> (f64, Array1<f64>);
}

/// Softmax cross-entropy against a class index.
#[derive(Clone, Copy, Debug)]
pub struct CrossEntropy {
    pub class: usize,
}

impl ScoreLoss for CrossEntropy {
    fn value_and_grad(&self, scores: ArrayView1<'_, f64>) -> (f64, Array1<f64>) {
        let max = scores.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let exp = scores.mapv(|s| (s - max).exp());
        let total = exp.sum();
        let loss = total.ln() + max - scores[self.class];
        let mut grad = exp / total;
        grad[self.class] -= 1.0;
        (loss, grad)
    }
}

/// Pair layout for masked passes: the graph's own edges (weight 1 unless
/// masked) merged with the candidate edges whose weights are mask values.
#[derive(Clone, Debug)]
pub struct MaskedLayout {
    pairs: Vec<Edge>,
    /// For each pair, the candidate index carrying its weight, if any.
    slot: Vec<Option<usize>>,
    candidate_pair: Vec<usize>,
}

impl MaskedLayout {
    pub fn new(g: &Graph, candidates: &EdgeSet) -> Self {
        let all = g.edges().union(candidates);
        let pairs = all.to_vec();
        let slot: Vec<Option<usize>> = pairs.iter().map(|&e| candidates.position(e)).collect();
        let mut candidate_pair = vec![0; candidates.len()];
        for (p, s) in slot.iter().enumerate() {
            if let Some(c) = s {
                candidate_pair[*c] = p;
            }
        }
        MaskedLayout {
            pairs,
            slot,
            candidate_pair,
        }
    }

    pub fn pairs(&self) -> &[Edge] {
        &self.pairs
    }

    pub fn weights(&self, mask: &[f64]) -> Vec<f64> {
        self.slot
            .iter()
            .map(|s| s.map_or(1.0, |c| mask[c]))
            .collect()
    }

    pub fn candidate_grads(&self, pair_grads: &[f64]) -> Vec<f64> {
        self.candidate_pair.iter().map(|&p| pair_grads[p]).collect()
    }
}

/// Loss and exact `∂loss/∂mask` for a masked pass over a precomputed layout.
pub fn loss_and_mask_gradient_with_layout<L: ScoreLoss>(
    model: &GcnModel,
    g: &Graph,
    target: Target,
    layout: &MaskedLayout,
    candidates: &EdgeSet,
    mask_values: &[f64],
    loss: &L,
) -> Result<(f64, Vec<f64>)> {
    if mask_values.len() != candidates.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} mask values for {} candidate edges",
            mask_values.len(),
            candidates.len()
        )));
    }
    let weights = layout.weights(mask_values);
    let trace = forward_weighted(model, g, layout.pairs(), &weights)?;
    let (value, d_row) = loss.value_and_grad(trace.scores_for(target));
    let mut d_scores = Array2::zeros(trace.scores.dim());
    let row = match target {
        Target::Node(v) => v,
        Target::Graph => 0,
    };
    d_scores.slice_mut(s![row, ..]).assign(&d_row);
    let grads = backward(model, &trace, &d_scores);
    let mask_grad = layout.candidate_grads(&grads.edge_weights);
    if let Some(index) = mask_grad.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteGradient {
            index,
            edge: candidates.get(index).unwrap_or_default(),
        });
    }
    Ok((value, mask_grad))
}

/// Loss and exact `∂loss/∂mask` where `candidates` (which may include
/// non-edges) carry `mask_values` as weights and all other edges of `g` keep
/// weight 1.
pub fn loss_and_mask_gradient<L: ScoreLoss>(
    model: &GcnModel,
    g: &Graph,
    target: Target,
    candidates: &EdgeSet,
    mask_values: &[f64],
    loss: &L,
) -> Result<(f64, Vec<f64>)> {
    let layout = MaskedLayout::new(g, candidates);
    loss_and_mask_gradient_with_layout(model, g, target, &layout, candidates, mask_values, loss)
}

#[cfg(test)]
mod tests;
