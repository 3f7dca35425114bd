//! Attack-side mask learning: filter/bias pinning of the explanatory
//! entries, the loss-based objective, and the β-sampled deduction objective.

use serde::{Deserialize, Serialize};

use super::{AttackConfig, AttackContext};
use crate::error::{Error, Result};
use crate::explainer::{initial_logits, optimize_logits, sigmoid, Direction, ExplainerConfig, MaskObjective};
use crate::graph::{Edge, EdgeSet};

/// 0/1 vectors over the candidate edges: `filter` is 0 and `bias` is 1
/// exactly on the explanatory edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBias {
    pub filter: Vec<f64>,
    pub bias: Vec<f64>,
}

impl FilterBias {
    /// `mask ⊗ filter + pin · bias`.
    pub fn apply(&self, mask: &[f64], pin: f64) -> Vec<f64> {
        mask.iter()
            .zip(self.filter.iter().zip(&self.bias))
            .map(|(&m, (&f, &b))| m * f + pin * b)
            .collect()
    }

    pub fn is_free(&self, i: usize) -> bool {
        self.filter[i] != 0.0
    }
}

pub fn build_filter_bias(candidates: &EdgeSet, e_s: &EdgeSet) -> Result<FilterBias> {
    if let Some(&e) = e_s.iter().find(|&&e| !candidates.contains(e)) {
        return Err(Error::NotSubset(e));
    }
    let bias: Vec<f64> = candidates
        .iter()
        .map(|&e| if e_s.contains(e) { 1.0 } else { 0.0 })
        .collect();
    let filter = bias.iter().map(|b| 1.0 - b).collect();
    Ok(FilterBias { filter, bias })
}

/// `β_i = (i−1)/(N−1)·(1−β) + β` for `i = 1..N`. Interior entries are
/// rounded to 15 decimal places so decimal inputs give decimal outputs
/// (plain evaluation yields 0.7999999999999999 for `N = 4, β = 0.7`).
pub fn beta_sequence(n: usize, beta: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("sample count {n} < 2")));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidConfig(format!("beta {beta} outside [0, 1]")));
    }
    Ok((1..=n)
        .map(|i| {
            if i == 1 {
                beta
            } else if i == n {
                1.0
            } else {
                let raw = (i - 1) as f64 / (n - 1) as f64 * (1.0 - beta) + beta;
                format!("{raw:.15}").parse().expect("formatted float parses")
            }
        })
        .collect())
}

/// Loss and gradient of `Σ_i [L(m⊗f + β_i·b) − L(m⊗f)]` with respect to `m`.
pub fn deduction_loss_and_grad(
    objective: &MaskObjective<'_>,
    mask: &[f64],
    fb: &FilterBias,
    betas: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let keep = |i: usize| fb.is_free(i);
    let (base, base_grad) = objective.value_and_grad_where(&fb.apply(mask, 0.0), keep)?;
    let mut total = 0.0;
    let mut grad = vec![0.0; mask.len()];
    for &beta in betas {
        let (value, g) = objective.value_and_grad_where(&fb.apply(mask, beta), keep)?;
        total += value - base;
        for i in 0..grad.len() {
            grad[i] += g[i] - base_grad[i];
        }
    }
    Ok((total, grad))
}

pub fn deduction_loss(objective: &MaskObjective<'_>, mask: &[f64], fb: &FilterBias, betas: &[f64]) -> Result<f64> {
    let base = objective.value(&fb.apply(mask, 0.0))?;
    let mut total = 0.0;
    for &beta in betas {
        total += objective.value(&fb.apply(mask, beta))? - base;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoringRule {
    /// Explainer loss with the explanatory entries pinned at γ.
    Loss,
    /// β-sampled loss differences.
    Deduction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredMask {
    pub candidates: EdgeSet,
    pub initial: Vec<f64>,
    pub mask: Vec<f64>,
    pub loss_curve: Vec<f64>,
}

/// Learns an attack mask over `candidates` by gradient descent or ascent on
/// the chosen objective. Explanatory entries receive zero gradient, so they
/// keep their initial value.
pub fn score_mask(
    ctx: &AttackContext<'_>,
    candidates: &EdgeSet,
    e_s: &EdgeSet,
    rule: ScoringRule,
    direction: Direction,
    cfg: &AttackConfig,
    explainer: &ExplainerConfig,
) -> Result<ScoredMask> {
    let fb = build_filter_bias(candidates, e_s)?;
    let objective = MaskObjective::new(ctx.model, &ctx.graph, ctx.target, ctx.class, candidates, explainer);
    let betas = beta_sequence(cfg.sample_count, cfg.beta)?;
    let mut theta = initial_logits(candidates, cfg.seed);
    let initial: Vec<f64> = theta.iter().map(|&t| sigmoid(t)).collect();
    let epochs = cfg.score_epochs.unwrap_or(explainer.epochs);
    let learn_rate = cfg.score_learn_rate.unwrap_or(explainer.learn_rate);
    let loss_curve = match rule {
        ScoringRule::Loss => optimize_logits(&mut theta, epochs, learn_rate, direction, "loss-based scoring", |m| {
            objective.value_and_grad_where(&fb.apply(m, cfg.gamma), |i| fb.is_free(i))
        })?,
        ScoringRule::Deduction => {
            optimize_logits(&mut theta, epochs, learn_rate, direction, "deduction scoring", |m| {
                deduction_loss_and_grad(&objective, m, &fb, &betas)
            })?
        }
    };
    Ok(ScoredMask {
        candidates: candidates.clone(),
        initial,
        mask: theta.iter().map(|&t| sigmoid(t)).collect(),
        loss_curve,
    })
}

pub fn score_mask_loss_based(
    ctx: &AttackContext<'_>,
    candidates: &EdgeSet,
    e_s: &EdgeSet,
    direction: Direction,
    cfg: &AttackConfig,
    explainer: &ExplainerConfig,
) -> Result<ScoredMask> {
    score_mask(ctx, candidates, e_s, ScoringRule::Loss, direction, cfg, explainer)
}

pub fn score_mask_deduction(
    ctx: &AttackContext<'_>,
    candidates: &EdgeSet,
    e_s: &EdgeSet,
    direction: Direction,
    cfg: &AttackConfig,
    explainer: &ExplainerConfig,
) -> Result<ScoredMask> {
    score_mask(ctx, candidates, e_s, ScoringRule::Deduction, direction, cfg, explainer)
}

/// The `count` highest-scoring pool edges, best first; ties go to the
/// earlier canonical edge. A pool smaller than `count` is returned whole.
pub fn select_candidates(candidates: &EdgeSet, scores: &[f64], pool: &EdgeSet, count: usize) -> Vec<Edge> {
    let mut ranked: Vec<(Edge, f64)> = candidates
        .iter()
        .zip(scores)
        .filter(|(e, _)| pool.contains(**e))
        .map(|(&e, &s)| (e, s))
        .collect();
    if ranked.len() < count {
        log::debug!("candidate pool has {} edges, fewer than {count}", ranked.len());
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().take(count).map(|(e, _)| e).collect()
}
