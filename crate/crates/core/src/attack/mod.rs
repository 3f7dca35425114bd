//! Structural attacks on edge-mask explanations.
//!
//! An attack perturbs at most `budget` edges so that the model's prediction
//! and the degree distribution survive while the re-learned explanation
//! drops as many of the original explanatory edges `E_S` as possible.
//! Explanatory edges themselves are never deleted.

mod baselines;
mod scoring;

use serde::{Deserialize, Serialize};

pub use baselines::{brute_force_oracle, kill_hot_attack, random_attack, OracleResult};
pub use scoring::{
    beta_sequence, build_filter_bias, deduction_loss, deduction_loss_and_grad, score_mask, score_mask_deduction,
    score_mask_loss_based, select_candidates, FilterBias, ScoredMask, ScoringRule,
};

use crate::error::{Error, Result};
use crate::explainer::{explain, Direction, ExplainerConfig, ExplanationResult};
use crate::gcn::{predict, GcnModel, Target};
use crate::graph::{
    apply_perturbation, complement_edges, k_hop_subgraph, symmetric_difference_size, Edge, EdgeSet, Graph,
    Perturbation, Subgraph,
};
use crate::powerlaw::{LikelihoodVariant, PowerLawTest, DEFAULT_D_MIN, DEFAULT_TAU};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Random,
    KillHot,
    Loss,
    Deduction,
    /// Exhaustive single-edge search; not part of [`Method::ALL`].
    Oracle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Random, Method::KillHot, Method::Loss, Method::Deduction];
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Method::Random),
            "kill-hot" => Ok(Method::KillHot),
            "loss" => Ok(Method::Loss),
            "deduction" => Ok(Method::Deduction),
            "oracle" => Ok(Method::Oracle),
            other => Err(Error::InvalidConfig(format!("unknown attack method {other:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Random => "random",
            Method::KillHot => "kill-hot",
            Method::Loss => "loss",
            Method::Deduction => "deduction",
            Method::Oracle => "oracle",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// Maximum number of edge additions plus deletions.
    pub budget: usize,
    /// Pin value for explanatory entries in loss-based scoring.
    pub gamma: f64,
    /// Lower end of the β sequence in deduction scoring.
    pub beta: f64,
    pub sample_count: usize,
    pub tau: f64,
    pub d_min: u32,
    pub variant: LikelihoodVariant,
    /// Scoring epochs; the explainer's count when unset.
    pub score_epochs: Option<usize>,
    /// Scoring learning rate; the explainer's rate when unset.
    pub score_learn_rate: Option<f64>,
    pub seed: u64,
    /// Resamples allowed to the random baseline when constraints fail.
    pub random_retries: usize,
    /// Largest candidate count the exhaustive oracle will enumerate.
    pub oracle_limit: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            budget: 2,
            gamma: 0.7,
            beta: 0.7,
            sample_count: 4,
            tau: DEFAULT_TAU,
            d_min: DEFAULT_D_MIN,
            variant: LikelihoodVariant::Verbatim,
            score_epochs: None,
            score_learn_rate: None,
            seed: 0,
            random_retries: 20,
            oracle_limit: 500,
        }
    }
}

impl AttackConfig {
    pub fn power_law_test(&self) -> PowerLawTest {
        PowerLawTest {
            tau: self.tau,
            d_min: self.d_min,
            variant: self.variant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidConfig("gamma and beta must lie in [0, 1]".into()));
        }
        if self.sample_count < 2 {
            return Err(Error::InvalidConfig("sample_count must be at least 2".into()));
        }
        if self.beta >= 1.0 {
            return Err(Error::InvalidConfig("beta must be below 1 for a non-degenerate sequence".into()));
        }
        if self.d_min == 0 {
            return Err(Error::InvalidConfig("d_min must be positive".into()));
        }
        if self.score_learn_rate.is_some_and(|r| !(r > 0.0)) || self.score_epochs == Some(0) {
            return Err(Error::InvalidConfig("scoring epochs and learn rate must be positive".into()));
        }
        Ok(())
    }
}

/// The graph under attack together with the host graph the degree test is
/// evaluated on.
///
/// Node targets are attacked inside their `layer_count`-hop computation
/// subgraph; graph targets on the whole graph. Perturbations and edge sets
/// are expressed in the attacked graph's node ids.
pub struct AttackContext<'a> {
    pub model: &'a GcnModel,
    pub graph: Graph,
    pub target: Target,
    /// The clean prediction the attack must preserve.
    pub class: usize,
    pub host: &'a Graph,
    pub subgraph: Option<Subgraph>,
    host_degrees: Vec<u32>,
    test: PowerLawTest,
}

impl<'a> AttackContext<'a> {
    /// `target` is in host ids; `class` is the prediction to preserve.
    pub fn new(model: &'a GcnModel, host: &'a Graph, target: Target, class: usize, test: PowerLawTest) -> Result<Self> {
        let (graph, target, subgraph) = match target {
            Target::Node(v) => {
                let sub = k_hop_subgraph(host, v, model.layer_count())?;
                (sub.graph.clone(), Target::Node(sub.center), Some(sub))
            }
            Target::Graph => (host.clone(), Target::Graph, None),
        };
        Ok(AttackContext {
            model,
            graph,
            target,
            class,
            host,
            subgraph,
            host_degrees: host.degrees(),
            test,
        })
    }

    pub fn power_law_test(&self) -> &PowerLawTest {
        &self.test
    }

    pub fn to_host(&self, p: &Perturbation) -> Perturbation {
        match &self.subgraph {
            Some(sub) => sub.perturbation_to_global(p),
            None => p.clone(),
        }
    }

    pub fn edges_to_host(&self, edges: &EdgeSet) -> EdgeSet {
        match &self.subgraph {
            Some(sub) => sub.edges_to_global(edges),
            None => edges.clone(),
        }
    }

    /// `Λ` between the host graph and the host graph under `p`, from degree
    /// vectors alone.
    pub fn lambda(&self, p: &Perturbation) -> Result<f64> {
        let host_p = self.to_host(p);
        let mut degrees = self.host_degrees.clone();
        for &(u, v) in &host_p.additions {
            degrees[u] += 1;
            degrees[v] += 1;
        }
        for &(u, v) in &host_p.deletions {
            degrees[u] -= 1;
            degrees[v] -= 1;
        }
        self.test.statistic_from_degrees(&self.host_degrees, &degrees)
    }

    pub fn predicts_class(&self, g: &Graph) -> Result<bool> {
        Ok(predict(self.model, g, self.target)? == self.class)
    }

    /// Non-edges of the attacked graph: the addition candidates.
    pub fn non_edges(&self) -> EdgeSet {
        complement_edges(&self.graph, None)
    }
}

/// Outcome of the four attack constraints for one perturbed graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub explanation_kept: bool,
    pub within_budget: bool,
    pub lambda: f64,
    pub degree_test_passed: bool,
    pub prediction_kept: bool,
}

impl ConstraintReport {
    pub fn all_pass(&self) -> bool {
        self.explanation_kept && self.within_budget && self.degree_test_passed && self.prediction_kept
    }
}

/// One budget split tried during enumeration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub additions: usize,
    pub deletions: usize,
    pub prediction_kept: bool,
    pub lambda: f64,
    pub degree_test_passed: bool,
    /// Set when the split survived both checks and was re-explained.
    pub objective: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackResult {
    pub method: Method,
    pub feasible: bool,
    pub perturbation: Perturbation,
    pub perturbed_graph: Graph,
    pub post_explanation: Option<ExplanationResult>,
    /// Explanatory edges lost: `|E_S| − |Ẽ_S ∩ E_S|`.
    pub objective: usize,
    pub overlap_ratio: f64,
    pub splits: Vec<SplitRecord>,
    /// Mis-predicting tries over all tries.
    pub failure_fraction: f64,
}

impl AttackResult {
    fn infeasible(ctx: &AttackContext<'_>, method: Method, splits: Vec<SplitRecord>, failure_fraction: f64) -> Self {
        AttackResult {
            method,
            feasible: false,
            perturbation: Perturbation::default(),
            perturbed_graph: ctx.graph.clone(),
            post_explanation: None,
            objective: 0,
            overlap_ratio: 0.0,
            splits,
            failure_fraction,
        }
    }
}

/// `|E_S| − |Ẽ_S ∩ E_S|`.
pub fn explanation_loss_count(e_s: &EdgeSet, e_s_tilde: &EdgeSet) -> usize {
    e_s.len() - e_s.intersection(e_s_tilde).len()
}

/// A perturbation run through the prediction and degree checks, and
/// re-explained if both pass.
pub(crate) struct Evaluation {
    pub prediction_kept: bool,
    pub lambda: f64,
    pub graph: Graph,
    pub explanation: Option<ExplanationResult>,
}

impl Evaluation {
    pub fn degree_test_passed(&self, ctx: &AttackContext<'_>) -> bool {
        self.lambda < ctx.test.tau
    }

    pub fn feasible(&self, ctx: &AttackContext<'_>) -> bool {
        self.prediction_kept && self.degree_test_passed(ctx)
    }
}

pub(crate) fn evaluate(
    ctx: &AttackContext<'_>,
    e_s: &EdgeSet,
    p: &Perturbation,
    explainer: &ExplainerConfig,
) -> Result<Evaluation> {
    p.validate(&ctx.graph, Some(e_s))?;
    let graph = apply_perturbation(&ctx.graph, p)?;
    let prediction_kept = ctx.predicts_class(&graph)?;
    let lambda = ctx.lambda(p)?;
    let mut eval = Evaluation {
        prediction_kept,
        lambda,
        graph,
        explanation: None,
    };
    if eval.feasible(ctx) {
        eval.explanation = Some(explain(ctx.model, &eval.graph, ctx.target, ctx.class, explainer)?);
    }
    Ok(eval)
}

fn perturbation_of(additions: &[Edge], deletions: &[Edge]) -> Result<Perturbation> {
    Ok(Perturbation::new(
        EdgeSet::from_pairs(additions.iter().copied())?,
        EdgeSet::from_pairs(deletions.iter().copied())?,
    ))
}

fn commit(
    method: Method,
    e_s: &EdgeSet,
    perturbation: Perturbation,
    eval: Evaluation,
    splits: Vec<SplitRecord>,
    failure_fraction: f64,
) -> AttackResult {
    let explanation = eval.explanation.expect("committed evaluations are explained");
    let objective = explanation_loss_count(e_s, &explanation.explanatory_edges);
    AttackResult {
        method,
        feasible: true,
        perturbation,
        perturbed_graph: eval.graph,
        objective,
        overlap_ratio: objective as f64 / e_s.len() as f64,
        post_explanation: Some(explanation),
        splits,
        failure_fraction,
    }
}

/// Tries every split of the budget into `ξ_A` additions (best-ranked first)
/// and `ξ − ξ_A` deletions, drops splits that change the prediction or fail
/// the degree test, re-explains the rest and keeps the first split with the
/// largest objective.
pub fn enumerate_and_commit(
    ctx: &AttackContext<'_>,
    e_s: &EdgeSet,
    ranked_deletions: &[Edge],
    ranked_additions: &[Edge],
    method: Method,
    cfg: &AttackConfig,
    explainer: &ExplainerConfig,
) -> Result<AttackResult> {
    let mut splits = Vec::with_capacity(cfg.budget + 1);
    let mut best: Option<(usize, Perturbation, Evaluation)> = None;
    let mut mispredicted = 0;
    for add in 0..=cfg.budget {
        let del = cfg.budget - add;
        let additions = &ranked_additions[..add.min(ranked_additions.len())];
        let deletions = &ranked_deletions[..del.min(ranked_deletions.len())];
        let p = perturbation_of(additions, deletions)?;
        let eval = evaluate(ctx, e_s, &p, explainer)?;
        if !eval.prediction_kept {
            mispredicted += 1;
        }
        let objective = eval
            .explanation
            .as_ref()
            .map(|x| explanation_loss_count(e_s, &x.explanatory_edges));
        splits.push(SplitRecord {
            additions: additions.len(),
            deletions: deletions.len(),
            prediction_kept: eval.prediction_kept,
            lambda: eval.lambda,
            degree_test_passed: eval.degree_test_passed(ctx),
            objective,
        });
        match objective {
            None => log::debug!("split +{add}/-{del} rejected (Λ = {:.3e})", eval.lambda),
            Some(obj) if best.as_ref().map_or(true, |(b, _, _)| obj > *b) => best = Some((obj, p, eval)),
            Some(_) => {}
        }
    }
    let failure_fraction = mispredicted as f64 / splits.len() as f64;
    Ok(match best {
        Some((_, p, eval)) => commit(method, e_s, p, eval, splits, failure_fraction),
        None => AttackResult::infeasible(ctx, method, splits, failure_fraction),
    })
}

fn scored_attack(
    ctx: &AttackContext<'_>,
    e_s: &EdgeSet,
    rule: ScoringRule,
    method: Method,
    cfg: &AttackConfig,
    explainer: &ExplainerConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    let edges = ctx.graph.edges().clone();
    let non_edges = ctx.non_edges();
    let deletion_pool = edges.difference(e_s);
    let ranked_deletions = if cfg.budget == 0 || deletion_pool.is_empty() {
        Vec::new()
    } else {
        let scored = score_mask(ctx, &edges, e_s, rule, Direction::Minimize, cfg, explainer)?;
        select_candidates(&edges, &scored.mask, &deletion_pool, cfg.budget)
    };
    let ranked_additions = if cfg.budget == 0 || non_edges.is_empty() {
        Vec::new()
    } else {
        let candidates = non_edges.union(e_s);
        let scored = score_mask(ctx, &candidates, e_s, rule, Direction::Maximize, cfg, explainer)?;
        select_candidates(&candidates, &scored.mask, &non_edges, cfg.budget)
    };
    enumerate_and_commit(ctx, e_s, &ranked_deletions, &ranked_additions, method, cfg, explainer)
}

/// Scores candidates with the explainer loss, explanatory entries pinned at γ.
pub fn loss_based_attack(
    ctx: &AttackContext<'_>,
    e_s: &EdgeSet,
    cfg: &AttackConfig,
    explainer: &ExplainerConfig,
) -> Result<AttackResult> {
    scored_attack(ctx, e_s, ScoringRule::Loss, Method::Loss, cfg, explainer)
}

/// Scores candidates with the β-sampled deduction loss.
pub fn deduction_based_attack(
    ctx: &AttackContext<'_>,
    e_s: &EdgeSet,
    cfg: &AttackConfig,
    explainer: &ExplainerConfig,
) -> Result<AttackResult> {
    scored_attack(ctx, e_s, ScoringRule::Deduction, Method::Deduction, cfg, explainer)
}

/// Runs `method` against the clean explanation.
pub fn run_attack(
    method: Method,
    ctx: &AttackContext<'_>,
    clean: &ExplanationResult,
    cfg: &AttackConfig,
    explainer: &ExplainerConfig,
) -> Result<AttackResult> {
    let e_s = &clean.explanatory_edges;
    match method {
        Method::Random => random_attack(ctx, e_s, cfg, explainer),
        Method::KillHot => kill_hot_attack(ctx, e_s, &clean.mask, cfg, explainer),
        Method::Loss => loss_based_attack(ctx, e_s, cfg, explainer),
        Method::Deduction => deduction_based_attack(ctx, e_s, cfg, explainer),
        Method::Oracle => Ok(brute_force_oracle(ctx, e_s, cfg, explainer)?.best),
    }
}

/// Re-derives every constraint from the clean and perturbed graphs alone:
/// the perturbation is recovered from the edge sets, and the degree test
/// is run on full host graphs rather than degree vectors.
pub fn verify_result(
    ctx: &AttackContext<'_>,
    e_s: &EdgeSet,
    result: &AttackResult,
    budget: usize,
) -> Result<ConstraintReport> {
    let clean = ctx.graph.edges();
    let perturbed = result.perturbed_graph.edges();
    let recovered = Perturbation::new(perturbed.difference(clean), clean.difference(perturbed));
    let host_after = apply_perturbation(ctx.host, &ctx.to_host(&recovered))?;
    let lambda = ctx.test.statistic(ctx.host, &host_after)?;
    Ok(ConstraintReport {
        explanation_kept: e_s.is_subset(perturbed),
        within_budget: symmetric_difference_size(clean, perturbed) <= budget,
        lambda,
        degree_test_passed: lambda < ctx.test.tau,
        prediction_kept: predict(ctx.model, &result.perturbed_graph, ctx.target)? == ctx.class,
    })
}

#[cfg(test)]
mod tests;
