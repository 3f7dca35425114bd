use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, backward, forward_weighted, Architecture, CrossEntropy, GcnModel, Gradients, ScoreLoss, TaskKind};
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub layer_count: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learn_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layer_count: 3,
            hidden_dim: 20,
            epochs: 1000,
            learn_rate: 0.01,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

/// Labelled training material for one task kind.
pub enum TrainingData<'a> {
    /// One graph with node labels; indices of train and test nodes.
    Nodes {
        graph: &'a Graph,
        train: &'a [usize],
        test: &'a [usize],
    },
    /// Independent labelled graphs.
    Graphs {
        train: &'a [&'a Graph],
        test: &'a [&'a Graph],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Adam over a flat view of every parameter tensor.
struct Adam {
    lr: f64,
    weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &GcnModel, lr: f64, weight_decay: f64) -> Self {
        let sizes: Vec<usize> = model
            .convs
            .iter()
            .chain(model.readout.iter())
            .flat_map(|l| [l.weight.len(), l.bias.len()])
            .collect();
        Adam {
            lr,
            weight_decay,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut GcnModel, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let grad_layers = grads.convs.iter().chain(grads.readout.iter());
        let mut slot = 0;
        for (layer, g) in model.layers_mut().zip(grad_layers) {
            let gw = g.weight.as_standard_layout();
            let weight = layer.weight.as_slice_mut().expect("standard layout");
            self.update(slot, weight, gw.as_slice().expect("standard layout"), true, c1, c2);
            let bias = layer.bias.as_slice_mut().expect("standard layout");
            self.update(slot + 1, bias, g.bias.as_slice().expect("standard layout"), false, c1, c2);
            slot += 2;
        }
    }

    fn update(&mut self, slot: usize, param: &mut [f64], grad: &[f64], decay: bool, c1: f64, c2: f64) {
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for i in 0..param.len() {
            let mut gi = grad[i];
            if decay {
                gi += self.weight_decay * param[i];
            }
            m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * gi;
            v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * gi * gi;
            param[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn add_into(acc: &mut Option<Gradients>, g: Gradients) {
    match acc {
        None => *acc = Some(g),
        Some(a) => {
            for (x, y) in a.convs.iter_mut().zip(&g.convs) {
                x.weight += &y.weight;
                x.bias += &y.bias;
            }
            if let (Some(x), Some(y)) = (a.readout.as_mut(), g.readout.as_ref()) {
                x.weight += &y.weight;
                x.bias += &y.bias;
            }
        }
    }
}

fn scale(g: &mut Gradients, factor: f64) {
    for l in g.convs.iter_mut().chain(g.readout.iter_mut()) {
        l.weight *= factor;
        l.bias *= factor;
    }
}

/// Mean cross-entropy and its gradient over the given labelled nodes.
fn node_loss(model: &GcnModel, graph: &Graph, nodes: &[usize]) -> Result<(f64, Gradients, Array2<f64>)> {
    let labels = graph
        .node_labels()
        .ok_or_else(|| Error::InvalidConfig("node task needs node labels".into()))?;
    let ones = vec![1.0; graph.edge_count()];
    let trace = forward_weighted(model, graph, graph.edges().as_slice(), &ones)?;
    let mut d_scores = Array2::zeros(trace.scores.dim());
    let mut loss = 0.0;
    let scale = 1.0 / nodes.len().max(1) as f64;
    for &v in nodes {
        let (l, g) = CrossEntropy { class: labels[v] }.value_and_grad(trace.scores.row(v));
        loss += l * scale;
        d_scores.row_mut(v).scaled_add(scale, &g);
    }
    let grads = backward(model, &trace, &d_scores);
    Ok((loss, grads, trace.scores))
}

fn graph_label(g: &Graph) -> Result<usize> {
    g.graph_label()
        .ok_or_else(|| Error::InvalidConfig("graph task needs graph labels".into()))
}

fn graph_accuracy(model: &GcnModel, graphs: &[&Graph]) -> Result<f64> {
    if graphs.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for g in graphs {
        if super::predict(model, g, super::Target::Graph)? == graph_label(g)? {
            correct += 1;
        }
    }
    Ok(correct as f64 / graphs.len() as f64)
}

fn node_accuracy(scores: &Array2<f64>, labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let correct = nodes
        .iter()
        .filter(|&&v| argmax(scores.row(v)) == labels[v])
        .count();
    correct as f64 / nodes.len() as f64
}

/// Full-batch training with Adam on softmax cross-entropy.
pub fn train_gcn(
    data: &TrainingData<'_>,
    class_count: usize,
    cfg: &TrainConfig,
) -> Result<(GcnModel, TrainReport)> {
    let (task, feature_dim) = match data {
        TrainingData::Nodes { graph, .. } => (TaskKind::Node, graph.feature_dim()),
        TrainingData::Graphs { train, .. } => (
            TaskKind::Graph,
            train
                .first()
                .ok_or_else(|| Error::InvalidConfig("no training graphs".into()))?
                .feature_dim(),
        ),
    };
    let arch = Architecture {
        task,
        feature_dim,
        hidden_dim: cfg.hidden_dim,
        layer_count: cfg.layer_count,
        class_count,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = GcnModel::new(arch, &mut rng)?;
    let mut adam = Adam::new(&model, cfg.learn_rate, cfg.weight_decay);
    let mut final_loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        let (loss, grads) = match data {
            TrainingData::Nodes { graph, train, .. } => {
                let (loss, grads, _) = node_loss(&model, graph, train)?;
                (loss, grads)
            }
            TrainingData::Graphs { train, .. } => {
                let mut acc = None;
                let mut loss = 0.0;
                for g in train.iter() {
                    let label = graph_label(g)?;
                    let ones = vec![1.0; g.edge_count()];
                    let trace = forward_weighted(&model, g, g.edges().as_slice(), &ones)?;
                    let (l, d) = CrossEntropy { class: label }.value_and_grad(trace.scores.row(0));
                    loss += l;
                    let d_scores = d.insert_axis(ndarray::Axis(0));
                    add_into(&mut acc, backward(&model, &trace, &d_scores));
                }
                let mut grads = acc.expect("at least one training graph");
                let factor = 1.0 / train.len() as f64;
                scale(&mut grads, factor);
                (loss * factor, grads)
            }
        };
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                context: "GCN training".into(),
            });
        }
        final_loss = loss;
        adam.step(&mut model, &grads);
        if epoch % 100 == 0 {
            log::debug!("epoch {epoch}: loss {loss:.5}");
        }
    }

    let (train_accuracy, test_accuracy) = match data {
        TrainingData::Nodes { graph, train, test } => {
            let labels = graph.node_labels().expect("checked above");
            let scores = super::gcn_forward(&model, graph, None)?;
            (
                node_accuracy(&scores, labels, train),
                node_accuracy(&scores, labels, test),
            )
        }
        TrainingData::Graphs { train, test } => {
            (graph_accuracy(&model, train)?, graph_accuracy(&model, test)?)
        }
    };
    Ok((
        model,
        TrainReport {
            epochs: cfg.epochs,
            final_loss,
            train_accuracy,
            test_accuracy,
        },
    ))
}
