//! Perturbation-based edge-mask explainer.
//!
//! The explanation loss is the softmax cross-entropy of the masked forward
//! pass plus a mask constraint. The mask is `sigmoid(θ)` per candidate edge
//! and `θ` follows plain gradient descent from near-zero noise.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{loss_and_mask_gradient_with_layout, CrossEntropy, GcnModel, MaskedLayout, Target};
use crate::graph::{Edge, EdgeSet, Graph};

/// Half-width of the uniform noise added to the initial logits.
pub const INIT_NOISE: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    /// Size plus element-wise entropy.
    #[default]
    Gnnexplainer,
    /// Bernoulli KL divergence towards a prior rate `r`.
    Gsat,
    /// L1 size penalty alone.
    Surrogate,
}

impl std::str::FromStr for ConstraintKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gnnexplainer" => Ok(ConstraintKind::Gnnexplainer),
            "gsat" => Ok(ConstraintKind::Gsat),
            "surrogate" => Ok(ConstraintKind::Surrogate),
            other => Err(Error::InvalidConfig(format!("unknown constraint kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConstraintKind::Gnnexplainer => "gnnexplainer",
            ConstraintKind::Gsat => "gsat",
            ConstraintKind::Surrogate => "surrogate",
        })
    }
}

/// `x·ln x` with the limit value 0 at `x = 0`.
fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

fn logit(m: f64) -> f64 {
    m.ln() - (1.0 - m).ln()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn constraint_gnnexplainer(mask: &[f64]) -> f64 {
    mask.iter()
        .map(|&m| m.abs() + xlogx(m) + xlogx(1.0 - m))
        .sum()
}

pub fn constraint_gsat(mask: &[f64], r: f64) -> f64 {
    let (lr, lq) = (r.ln(), (1.0 - r).ln());
    mask.iter()
        .map(|&m| {
            let a = if m > 0.0 { xlogx(m) - m * lr } else { 0.0 };
            let b = if m < 1.0 { xlogx(1.0 - m) - (1.0 - m) * lq } else { 0.0 };
            a + b
        })
        .sum()
}

pub fn constraint_surrogate(mask: &[f64]) -> f64 {
    mask.iter().map(|m| m.abs()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainerConfig {
    pub constraint: ConstraintKind,
    pub gsat_r: f64,
    pub learn_rate: f64,
    pub epochs: usize,
    /// Number of explanatory edges.
    pub k: usize,
    pub seed: u64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        ExplainerConfig {
            constraint: ConstraintKind::Gnnexplainer,
            gsat_r: 0.7,
            learn_rate: 0.01,
            epochs: 300,
            k: 6,
            seed: 0,
        }
    }
}

impl ExplainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gsat_r > 0.0 && self.gsat_r < 1.0) {
            return Err(Error::InvalidConfig(format!("gsat_r {} outside (0, 1)", self.gsat_r)));
        }
        if !(self.learn_rate > 0.0) {
            return Err(Error::InvalidConfig("explainer learn_rate must be positive".into()));
        }
        if self.epochs == 0 || self.k == 0 {
            return Err(Error::InvalidConfig("explainer epochs and k must be positive".into()));
        }
        Ok(())
    }

    pub fn constraint_value(&self, mask: &[f64]) -> f64 {
        match self.constraint {
            ConstraintKind::Gnnexplainer => constraint_gnnexplainer(mask),
            ConstraintKind::Gsat => constraint_gsat(mask, self.gsat_r),
            ConstraintKind::Surrogate => constraint_surrogate(mask),
        }
    }

    /// Derivative of one constraint term. Infinite at the ends of `[0, 1]`
    /// for the entropy-type constraints.
    pub fn constraint_derivative(&self, m: f64) -> f64 {
        match self.constraint {
            ConstraintKind::Gnnexplainer => 1.0 + logit(m),
            ConstraintKind::Gsat => logit(m) - logit(self.gsat_r),
            ConstraintKind::Surrogate => {
                if m > 0.0 {
                    1.0
                } else if m < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// The explanation loss for one prediction, over a fixed candidate edge set.
///
/// Candidate edges carry mask values as weights; other edges of the graph
/// keep weight 1.
pub struct MaskObjective<'a> {
    model: &'a GcnModel,
    graph: &'a Graph,
    target: Target,
    class: usize,
    candidates: &'a EdgeSet,
    layout: MaskedLayout,
    cfg: &'a ExplainerConfig,
}

impl<'a> MaskObjective<'a> {
    pub fn new(
        model: &'a GcnModel,
        graph: &'a Graph,
        target: Target,
        class: usize,
        candidates: &'a EdgeSet,
        cfg: &'a ExplainerConfig,
    ) -> Self {
        MaskObjective {
            model,
            graph,
            target,
            class,
            candidates,
            layout: MaskedLayout::new(graph, candidates),
            cfg,
        }
    }

    pub fn candidates(&self) -> &EdgeSet {
        self.candidates
    }

    /// Loss and per-entry gradient. Gradient entries where `keep` is false
    /// are exactly 0 and their constraint derivative is never evaluated.
    pub fn value_and_grad_where(&self, mask: &[f64], keep: impl Fn(usize) -> bool) -> Result<(f64, Vec<f64>)> {
        let (ce, mut grad) = loss_and_mask_gradient_with_layout(
            self.model,
            self.graph,
            self.target,
            &self.layout,
            self.candidates,
            mask,
            &CrossEntropy { class: self.class },
        )?;
        let value = ce + self.cfg.constraint_value(mask);
        for (i, g) in grad.iter_mut().enumerate() {
            if keep(i) {
                *g += self.cfg.constraint_derivative(mask[i]);
                if !g.is_finite() {
                    return Err(Error::NonFiniteGradient {
                        index: i,
                        edge: self.candidates.get(i).unwrap_or_default(),
                    });
                }
            } else {
                *g = 0.0;
            }
        }
        Ok((value, grad))
    }

    pub fn value_and_grad(&self, mask: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.value_and_grad_where(mask, |_| true)
    }

    pub fn value(&self, mask: &[f64]) -> Result<f64> {
        Ok(self.value_and_grad_where(mask, |_| false)?.0)
    }
}

/// Explanation loss: cross-entropy of the masked prediction plus constraint.
pub fn explainer_loss(
    model: &GcnModel,
    g: &Graph,
    target: Target,
    class: usize,
    candidates: &EdgeSet,
    mask: &[f64],
    cfg: &ExplainerConfig,
) -> Result<f64> {
    MaskObjective::new(model, g, target, class, candidates, cfg).value(mask)
}

/// Gradient of [`explainer_loss`] with respect to the mask entries.
pub fn explainer_loss_and_grad(
    model: &GcnModel,
    g: &Graph,
    target: Target,
    class: usize,
    candidates: &EdgeSet,
    mask: &[f64],
    cfg: &ExplainerConfig,
) -> Result<(f64, Vec<f64>)> {
    MaskObjective::new(model, g, target, class, candidates, cfg).value_and_grad(mask)
}

/// Initial logits: zero plus uniform noise. Each edge draws from its own
/// ChaCha stream, so an edge gets the same start whatever else is in the set.
pub fn initial_logits(candidates: &EdgeSet, seed: u64) -> Vec<f64> {
    candidates
        .iter()
        .map(|&(u, v)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((u as u64) << 32) ^ v as u64);
            rng.gen_range(-INIT_NOISE..=INIT_NOISE)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

/// Gradient descent (or ascent) on sigmoid logits. `objective` maps a mask to
/// its loss and `∂loss/∂mask`. Returns the loss before each step plus the
/// loss after the last step.
pub fn optimize_logits<F>(
    theta: &mut [f64],
    epochs: usize,
    learn_rate: f64,
    direction: Direction,
    context: &str,
    mut objective: F,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let sign = match direction {
        Direction::Minimize => -1.0,
        Direction::Maximize => 1.0,
    };
    let mut curve = Vec::with_capacity(epochs + 1);
    let mut mask: Vec<f64> = theta.iter().map(|&t| sigmoid(t)).collect();
    for epoch in 0..=epochs {
        let (loss, grad) = objective(&mask)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                context: context.to_string(),
            });
        }
        curve.push(loss);
        if epoch == epochs {
            break;
        }
        for i in 0..theta.len() {
            if grad[i] != 0.0 {
                let m = mask[i];
                theta[i] += sign * learn_rate * grad[i] * m * (1.0 - m);
                mask[i] = sigmoid(theta[i]);
            }
        }
    }
    Ok(curve)
}

/// Learns the mask over `g`'s edges. Returns the mask and the loss curve.
pub fn learn_mask(
    model: &GcnModel,
    g: &Graph,
    target: Target,
    class: usize,
    cfg: &ExplainerConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    let objective = MaskObjective::new(model, g, target, class, g.edges(), cfg);
    let mut theta = initial_logits(g.edges(), cfg.seed);
    let curve = optimize_logits(
        &mut theta,
        cfg.epochs,
        cfg.learn_rate,
        Direction::Minimize,
        "explainer mask",
        |m| objective.value_and_grad(m),
    )?;
    Ok((theta.iter().map(|&t| sigmoid(t)).collect(), curve))
}

/// The `count` highest-scoring edges; ties go to the earlier canonical edge.
pub fn top_k(edges: &EdgeSet, scores: &[f64], count: usize) -> EdgeSet {
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let picked: Vec<Edge> = order.iter().take(count).filter_map(|&i| edges.get(i)).collect();
    EdgeSet::from_pairs(picked).expect("subset of a valid edge set")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplanationResult {
    /// Edges the mask is defined over, in canonical order.
    pub edges: EdgeSet,
    pub mask: Vec<f64>,
    pub explanatory_edges: EdgeSet,
    pub loss_curve: Vec<f64>,
}

impl ExplanationResult {
    pub fn mask_of(&self, e: Edge) -> Option<f64> {
        self.edges.position(e).map(|i| self.mask[i])
    }

    pub fn to_record(&self) -> ExplanationRecord {
        ExplanationRecord {
            mask: self
                .edges
                .iter()
                .zip(&self.mask)
                .map(|(&(u, v), &m)| (format!("{u}-{v}"), m))
                .collect(),
            explanatory_edges: self.explanatory_edges.clone(),
            loss_curve: self.loss_curve.clone(),
        }
    }
}

/// JSON form of an explanation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub mask: BTreeMap<String, f64>,
    pub explanatory_edges: EdgeSet,
    pub loss_curve: Vec<f64>,
}

/// Learns the mask and keeps the `k` highest entries as the explanation.
pub fn explain(
    model: &GcnModel,
    g: &Graph,
    target: Target,
    class: usize,
    cfg: &ExplainerConfig,
) -> Result<ExplanationResult> {
    if cfg.k > g.edge_count() {
        return Err(Error::InvalidConfig(format!(
            "k = {} exceeds the {} available edges",
            cfg.k,
            g.edge_count()
        )));
    }
    let (mask, loss_curve) = learn_mask(model, g, target, class, cfg)?;
    let explanatory_edges = top_k(g.edges(), &mask, cfg.k);
    Ok(ExplanationResult {
        edges: g.edges().clone(),
        mask,
        explanatory_edges,
        loss_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcn::{Architecture, TaskKind};
    use crate::graph::Labels;
    use approx::assert_relative_eq;
    use ndarray::Array2;

    fn edges(pairs: &[Edge]) -> EdgeSet {
        EdgeSet::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn gnnexplainer_constraint_values() {
        assert_eq!(constraint_gnnexplainer(&[0.0]), 0.0);
        assert_relative_eq!(constraint_gnnexplainer(&[0.5]), 0.5 + 0.5f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(constraint_gnnexplainer(&[0.5]), -0.19314718055994530, epsilon = 1e-12);
        assert_eq!(constraint_gnnexplainer(&[1.0]), 1.0);
    }

    #[test]
    fn gsat_constraint_values() {
        assert_relative_eq!(constraint_gsat(&[0.3, 0.3], 0.3), 0.0, epsilon = 1e-15);
        assert_relative_eq!(constraint_gsat(&[1.0], 0.5), std::f64::consts::LN_2, epsilon = 1e-15);
        let m = [0.1, 0.45, 0.9];
        let split: f64 = m.iter().map(|&x| constraint_gsat(&[x], 0.7)).sum();
        assert_relative_eq!(constraint_gsat(&m, 0.7), split, epsilon = 1e-14);
    }

    #[test]
    fn surrogate_constraint_values() {
        assert_eq!(constraint_surrogate(&[0.0, 0.0]), 0.0);
        assert_relative_eq!(constraint_surrogate(&[0.2, 0.3]), 0.5);
        assert_relative_eq!(constraint_surrogate(&[0.6, 0.9]), 3.0 * constraint_surrogate(&[0.2, 0.3]));
    }

    #[test]
    fn constraint_derivatives_match_finite_differences() {
        for kind in [ConstraintKind::Gnnexplainer, ConstraintKind::Gsat, ConstraintKind::Surrogate] {
            let cfg = ExplainerConfig {
                constraint: kind,
                ..ExplainerConfig::default()
            };
            for m in [0.05, 0.3, 0.5, 0.81, 0.97] {
                let fd = (cfg.constraint_value(&[m + 1e-6]) - cfg.constraint_value(&[m - 1e-6])) / 2e-6;
                assert_relative_eq!(cfg.constraint_derivative(m), fd, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn top_k_picks_largest_with_canonical_ties() {
        let e = edges(&[(0, 1), (1, 2), (2, 3)]);
        assert_eq!(top_k(&e, &[0.9, 0.1, 0.5], 2), edges(&[(0, 1), (2, 3)]));
        assert_eq!(top_k(&e, &[0.9, 0.1, 0.5], 3), e);
        assert_eq!(top_k(&e, &[0.4, 0.7, 0.4], 2), edges(&[(0, 1), (1, 2)]));
    }

    #[test]
    fn initial_logits_depend_only_on_edge_and_seed() {
        let a = initial_logits(&edges(&[(0, 1), (2, 5), (3, 4)]), 9);
        let b = initial_logits(&edges(&[(2, 5), (7, 8)]), 9);
        assert_eq!(a[1], b[0]);
        assert!(a.iter().all(|x| x.abs() <= INIT_NOISE));
        assert_ne!(a, initial_logits(&edges(&[(0, 1), (2, 5), (3, 4)]), 10));
    }

    fn small_model_and_graph() -> (GcnModel, Graph) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let arch = Architecture {
            task: TaskKind::Node,
            feature_dim: 2,
            hidden_dim: 4,
            layer_count: 2,
            class_count: 2,
        };
        let model = GcnModel::new(arch, &mut rng).unwrap();
        let features = Array2::from_shape_fn((5, 2), |(i, j)| ((i * 3 + j) % 5) as f64 / 4.0);
        let g = Graph::new(
            5,
            edges(&[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]),
            features,
            Labels::Node(vec![0; 5]),
        )
        .unwrap();
        (model, g)
    }

    #[test]
    fn loss_is_cross_entropy_plus_constraint() {
        let (model, g) = small_model_and_graph();
        let cfg = ExplainerConfig::default();
        let mask = [0.2, 0.4, 0.6, 0.8, 0.1, 0.9];
        let total = explainer_loss(&model, &g, Target::Node(2), 1, g.edges(), &mask, &cfg).unwrap();
        let surrogate_cfg = ExplainerConfig {
            constraint: ConstraintKind::Surrogate,
            ..cfg.clone()
        };
        let empty = EdgeSet::new();
        let ce_only = explainer_loss(&model, &g, Target::Node(2), 1, &empty, &[], &surrogate_cfg).unwrap();
        let weights = MaskedLayout::new(&g, g.edges()).weights(&mask);
        let scores = crate::gcn::gcn_forward(&model, &g, Some(&weights)).unwrap();
        let row = scores.row(2);
        let lse = row.iter().map(|s| s.exp()).sum::<f64>().ln();
        assert_relative_eq!(total, lse - row[1] + constraint_gnnexplainer(&mask), epsilon = 1e-12);
        let plain = crate::gcn::gcn_forward(&model, &g, None).unwrap();
        let lse = plain.row(2).iter().map(|s| s.exp()).sum::<f64>().ln();
        assert_relative_eq!(ce_only, lse - plain[[2, 1]], epsilon = 1e-12);
    }

    #[test]
    fn mask_learning_is_deterministic_and_finite() {
        let (model, g) = small_model_and_graph();
        let cfg = ExplainerConfig {
            k: 3,
            epochs: 50,
            ..ExplainerConfig::default()
        };
        let a = explain(&model, &g, Target::Node(1), 0, &cfg).unwrap();
        let b = explain(&model, &g, Target::Node(1), 0, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.loss_curve.len(), 51);
        assert!(a.loss_curve.iter().all(|l| l.is_finite()));
        assert!(a.loss_curve.last() <= a.loss_curve.first());
        assert_eq!(a.explanatory_edges.len(), 3);
        let min_in = a.explanatory_edges.iter().map(|&e| a.mask_of(e).unwrap()).fold(1.0, f64::min);
        let max_out = a
            .edges
            .difference(&a.explanatory_edges)
            .iter()
            .map(|&e| a.mask_of(e).unwrap())
            .fold(0.0, f64::max);
        assert!(min_in >= max_out && min_in > 0.0);
    }

    #[test]
    fn k_larger_than_edge_count_is_rejected() {
        let (model, g) = small_model_and_graph();
        let cfg = ExplainerConfig {
            k: 7,
            ..ExplainerConfig::default()
        };
        assert!(matches!(explain(&model, &g, Target::Node(0), 0, &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn record_keys_edges_as_strings() {
        let r = ExplanationResult {
            edges: edges(&[(0, 1), (2, 10)]),
            mask: vec![0.25, 0.75],
            explanatory_edges: edges(&[(2, 10)]),
            loss_curve: vec![1.0],
        };
        let json = serde_json::to_value(r.to_record()).unwrap();
        assert_eq!(json["mask"]["2-10"], 0.75);
        assert_eq!(json["explanatory_edges"][0][1], 10);
    }
}
