use approx::assert_relative_eq;
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graph::{EdgeSet, Labels};

fn arch(task: TaskKind, feature_dim: usize, layers: usize, classes: usize) -> Architecture {
    Architecture {
        task,
        feature_dim,
        hidden_dim: 4,
        layer_count: layers,
        class_count: classes,
    }
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, f: usize, p: f64, labels: Labels) -> Graph {
    let mut pairs = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen_bool(p) {
                pairs.push((u, v));
            }
        }
    }
    let features = Array2::from_shape_simple_fn((n, f), || rng.gen_range(-1.0..1.0));
    Graph::new(n, EdgeSet::from_pairs(pairs).unwrap(), features, labels).unwrap()
}

fn randomize_biases(model: &mut GcnModel, rng: &mut ChaCha8Rng) {
    for l in model.layers_mut() {
        l.bias.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    }
}

/// Dense reference: builds Â explicitly and multiplies matrices.
fn dense_forward(model: &GcnModel, g: &Graph, weights: &[f64]) -> Array2<f64> {
    let n = g.node_count();
    let mut a = Array2::<f64>::eye(n);
    for (&(u, v), &w) in g.edges().iter().zip(weights) {
        a[[u, v]] += w;
        a[[v, u]] += w;
    }
    let deg: Array1<f64> = a.sum_axis(ndarray::Axis(1));
    let mut a_hat = a.clone();
    for i in 0..n {
        for j in 0..n {
            a_hat[[i, j]] = a[[i, j]] / (deg[i] * deg[j]).sqrt();
        }
    }
    let mut h = g.features().clone();
    for (l, layer) in model.convs().iter().enumerate() {
        let z = a_hat.dot(&h).dot(&layer.weight) + &layer.bias;
        let last_linear = l + 1 == model.convs().len() && model.task() == TaskKind::Node;
        h = if last_linear { z } else { z.mapv(|x| x.max(0.0)) };
    }
    match model.readout() {
        Some(r) => (h.mean_axis(ndarray::Axis(0)).unwrap().dot(&r.weight) + &r.bias).insert_axis(ndarray::Axis(0)),
        None => h,
    }
}

#[test]
fn single_node_identity_layer_returns_features() {
    let a = Architecture {
        task: TaskKind::Node,
        feature_dim: 3,
        hidden_dim: 3,
        layer_count: 1,
        class_count: 3,
    };
    let layer = Layer {
        weight: Array2::eye(3),
        bias: Array1::zeros(3),
    };
    let model = GcnModel::from_layers(a, vec![layer], None).unwrap();
    let g = Graph::new(1, EdgeSet::new(), array![[0.3, -1.0, 2.0]], Labels::Node(vec![0])).unwrap();
    let out = gcn_forward(&model, &g, None).unwrap();
    assert_eq!(out, array![[0.3, -1.0, 2.0]]);
}

#[test]
fn zero_weights_match_edge_free_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = random_graph(&mut rng, 8, 3, 0.4, Labels::Node(vec![0; 8]));
    let model = GcnModel::new(arch(TaskKind::Node, 3, 3, 2), &mut rng).unwrap();
    let zeros = vec![0.0; g.edge_count()];
    let masked = gcn_forward(&model, &g, Some(&zeros)).unwrap();
    let bare = gcn_forward(&model, &g.with_edges(EdgeSet::new()).unwrap(), None).unwrap();
    assert_eq!(masked, bare);
}

#[test]
fn unit_weights_match_omitted_weights_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = random_graph(&mut rng, 9, 2, 0.3, Labels::Graph(1));
    let model = GcnModel::new(arch(TaskKind::Graph, 2, 2, 2), &mut rng).unwrap();
    let ones = vec![1.0; g.edge_count()];
    assert_eq!(
        gcn_forward(&model, &g, Some(&ones)).unwrap(),
        gcn_forward(&model, &g, None).unwrap()
    );
}

#[test]
fn path_graph_matches_dense_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let features = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, -0.5]];
    let g = Graph::new(
        4,
        EdgeSet::from_pairs([(0, 1), (1, 2), (2, 3)]).unwrap(),
        features,
        Labels::Node(vec![0; 4]),
    )
    .unwrap();
    for task in [TaskKind::Node, TaskKind::Graph] {
        let mut model = GcnModel::new(arch(task, 2, 2, 3), &mut rng).unwrap();
        randomize_biases(&mut model, &mut rng);
        let weights = [0.1, 0.25, 0.05];
        let fast = gcn_forward(&model, &g, Some(&weights)).unwrap();
        let dense = dense_forward(&model, &g, &weights);
        for (a, b) in fast.iter().zip(dense.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }
}

#[test]
fn dimension_mismatch_is_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g = random_graph(&mut rng, 4, 2, 0.5, Labels::Node(vec![0; 4]));
    let model = GcnModel::new(arch(TaskKind::Node, 5, 2, 2), &mut rng).unwrap();
    assert!(matches!(gcn_forward(&model, &g, None), Err(Error::DimensionMismatch(_))));
}

#[test]
fn argmax_tie_breaks_low() {
    assert_eq!(argmax(array![0.1, 0.9].view()), 1);
    assert_eq!(argmax(array![0.5, 0.5].view()), 0);
    assert_eq!(argmax(array![-1.0, 2.0, 2.0].view()), 1);
}

fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], eps: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += eps;
            down[i] -= eps;
            (f(&up) - f(&down)) / (2.0 * eps)
        })
        .collect()
}

#[test]
fn mask_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..10 {
        let task = if trial % 2 == 0 { TaskKind::Node } else { TaskKind::Graph };
        let labels = match task {
            TaskKind::Node => Labels::Node(vec![0; 10]),
            TaskKind::Graph => Labels::Graph(0),
        };
        let g = random_graph(&mut rng, 10, 3, 0.3, labels);
        let mut model = GcnModel::new(arch(task, 3, 3, 3), &mut rng).unwrap();
        randomize_biases(&mut model, &mut rng);
        let extra = EdgeSet::from_pairs([(0, 9), (2, 7), (3, 5)]).unwrap();
        let candidates = g.edges().union(&extra);
        let mask: Vec<f64> = (0..candidates.len()).map(|_| rng.gen_range(0.05..0.95)).collect();
        let target = match task {
            TaskKind::Node => Target::Node(rng.gen_range(0..10)),
            TaskKind::Graph => Target::Graph,
        };
        let loss = CrossEntropy { class: 1 };
        let (_, grad) = loss_and_mask_gradient(&model, &g, target, &candidates, &mask, &loss).unwrap();
        let fd = central_difference(
            |m| loss_and_mask_gradient(&model, &g, target, &candidates, m, &loss).unwrap().0,
            &mask,
            1e-4,
        );
        for (a, f) in grad.iter().zip(&fd) {
            let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-6);
            assert!(rel < 1e-4, "trial {trial}: analytic {a} vs fd {f}");
        }
    }
}

#[test]
fn parameter_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = random_graph(&mut rng, 7, 2, 0.4, Labels::Node(vec![0; 7]));
    let mut model = GcnModel::new(arch(TaskKind::Node, 2, 2, 2), &mut rng).unwrap();
    randomize_biases(&mut model, &mut rng);
    let loss_at = |m: &GcnModel| {
        let s = gcn_forward(m, &g, None).unwrap();
        CrossEntropy { class: 1 }.value_and_grad(s.row(3)).0
    };
    let ones = vec![1.0; g.edge_count()];
    let trace = forward_weighted(&model, &g, g.edges().as_slice(), &ones).unwrap();
    let (_, d) = CrossEntropy { class: 1 }.value_and_grad(trace.scores.row(3));
    let mut d_scores = Array2::zeros(trace.scores.dim());
    d_scores.row_mut(3).assign(&d);
    let grads = backward(&model, &trace, &d_scores);
    for l in 0..2 {
        for idx in [(0, 0), (1, 1)] {
            let mut up = model.clone();
            let mut down = model.clone();
            up.convs[l].weight[idx] += 1e-5;
            down.convs[l].weight[idx] -= 1e-5;
            let fd = (loss_at(&up) - loss_at(&down)) / 2e-5;
            assert_relative_eq!(grads.convs[l].weight[idx], fd, epsilon = 1e-7, max_relative = 1e-5);
        }
    }
}

#[test]
fn edge_outside_receptive_field_has_zero_gradient() {
    // path 0-1-2-3-4-5-6, two layers: edges beyond two hops of node 0 do not
    // reach it, and the (2,3) edge only enters through node 2's degree.
    let g = Graph::with_unit_features(
        7,
        EdgeSet::from_pairs([(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6)]).unwrap(),
        2,
        Labels::Node(vec![0; 7]),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = GcnModel::new(arch(TaskKind::Node, 2, 2, 2), &mut rng).unwrap();
    let mask = vec![0.7; g.edge_count()];
    let (_, grad) =
        loss_and_mask_gradient(&model, &g, Target::Node(0), g.edges(), &mask, &CrossEntropy { class: 0 }).unwrap();
    for e in 3..6 {
        assert_eq!(grad[e], 0.0, "edge {:?}", g.edges().get(e));
    }
}

struct ConstantLoss;

impl ScoreLoss for ConstantLoss {
    fn value_and_grad(&self, scores: ArrayView1<'_, f64>) -> (f64, Array1<f64>) {
        (1.5, Array1::zeros(scores.len()))
    }
}

#[test]
fn constant_loss_has_zero_mask_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let g = random_graph(&mut rng, 6, 2, 0.5, Labels::Graph(0));
    let model = GcnModel::new(arch(TaskKind::Graph, 2, 2, 2), &mut rng).unwrap();
    let mask = vec![0.4; g.edge_count()];
    let (v, grad) = loss_and_mask_gradient(&model, &g, Target::Graph, g.edges(), &mask, &ConstantLoss).unwrap();
    assert_eq!(v, 1.5);
    assert!(grad.iter().all(|&x| x == 0.0));
}

#[test]
fn node_permutation_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 8;
    let g = random_graph(&mut rng, n, 3, 0.4, Labels::Node(vec![0; n]));
    let perm = [3, 7, 0, 5, 1, 6, 2, 4];
    let edges = EdgeSet::from_pairs(g.edges().iter().map(|&(u, v)| (perm[u], perm[v]))).unwrap();
    let mut features = Array2::zeros(g.features().dim());
    for v in 0..n {
        features.row_mut(perm[v]).assign(&g.features().row(v));
    }
    let pg = Graph::new(n, edges, features, Labels::Node(vec![0; n])).unwrap();

    let mut node_model = GcnModel::new(arch(TaskKind::Node, 3, 3, 2), &mut rng).unwrap();
    randomize_biases(&mut node_model, &mut rng);
    let a = gcn_forward(&node_model, &g, None).unwrap();
    let b = gcn_forward(&node_model, &pg, None).unwrap();
    for v in 0..n {
        for c in 0..2 {
            assert_relative_eq!(a[[v, c]], b[[perm[v], c]], epsilon = 1e-9);
        }
    }

    let graph_model = GcnModel::new(arch(TaskKind::Graph, 3, 3, 2), &mut rng).unwrap();
    let a = gcn_forward(&graph_model, &g, None).unwrap();
    let b = gcn_forward(&graph_model, &pg, None).unwrap();
    for (x, y) in a.iter().zip(b.iter()) {
        assert_relative_eq!(x, y, epsilon = 1e-9);
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut model = GcnModel::new(arch(TaskKind::Graph, 3, 3, 2), &mut rng).unwrap();
    randomize_biases(&mut model, &mut rng);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&path, &model).unwrap();
    assert_eq!(load_model(&path).unwrap(), model);
}

#[test]
fn separable_toy_features_train_to_full_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 60;
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let features = Array2::from_shape_fn((n, 2), |(i, j)| {
        let sign = if labels[i] == 1 { 1.0 } else { -1.0 };
        if j == 0 {
            sign * rng.gen_range(0.5..1.5)
        } else {
            rng.gen_range(-1.0..1.0)
        }
    });
    let g = Graph::new(n, EdgeSet::new(), features, Labels::Node(labels)).unwrap();
    let train: Vec<usize> = (0..n).collect();
    let cfg = TrainConfig {
        layer_count: 2,
        hidden_dim: 8,
        epochs: 300,
        ..TrainConfig::default()
    };
    let (_, report) = train_gcn(
        &TrainingData::Nodes {
            graph: &g,
            train: &train,
            test: &[],
        },
        2,
        &cfg,
    )
    .unwrap();
    assert!(report.train_accuracy >= 0.99, "{report:?}");
}
