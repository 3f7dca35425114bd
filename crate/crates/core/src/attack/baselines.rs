//! Random and kill-hot baselines, and the exhaustive single-edge oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    commit, evaluate, explanation_loss_count, AttackConfig, AttackContext, AttackResult, Method, SplitRecord,
};
use crate::error::{Error, Result};
use crate::explainer::ExplainerConfig;
use crate::graph::{canonical, Edge, EdgeSet, Perturbation};

/// Samples node pairs until `budget` distinct perturbations are scheduled:
/// an absent pair is added, a present non-explanatory edge deleted.
fn sample_perturbation(
    ctx: &AttackContext<'_>,
    e_s: &EdgeSet,
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Perturbation> {
    let n = ctx.graph.node_count();
    if n < 2 {
        return None;
    }
    let mut additions: Vec<Edge> = Vec::new();
    let mut deletions: Vec<Edge> = Vec::new();
    let max_draws = 1000 * (budget + 1);
    let mut draws = 0;
    while additions.len() + deletions.len() < budget {
        draws += 1;
        if draws > max_draws {
            return None;
        }
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v {
            continue;
        }
        let e = canonical(u, v);
        if additions.contains(&e) || deletions.contains(&e) {
            continue;
        }
        if !ctx.graph.edges().contains(e) {
            additions.push(e);
        } else if !e_s.contains(e) {
            deletions.push(e);
        }
    }
    Some(Perturbation::new(
        EdgeSet::from_pairs(additions).ok()?,
        EdgeSet::from_pairs(deletions).ok()?,
    ))
}

fn record(p: &Perturbation, eval: &super::Evaluation, ctx: &AttackContext<'_>, e_s: &EdgeSet) -> SplitRecord {
    SplitRecord {
        additions: p.additions.len(),
        deletions: p.deletions.len(),
        prediction_kept: eval.prediction_kept,
        lambda: eval.lambda,
        degree_test_passed: eval.degree_test_passed(ctx),
        objective: eval
            .explanation
            .as_ref()
            .map(|x| explanation_loss_count(e_s, &x.explanatory_edges)),
    }
}

/// Random pair flips, resampled up to `random_retries` times when the
/// prediction or degree check fails.
pub fn random_attack(
    ctx: &AttackContext<'_>,
    e_s: &EdgeSet,
    cfg: &AttackConfig,
    explainer: &ExplainerConfig,
) -> Result<AttackResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tries = Vec::new();
    let mut mispredicted = 0;
    for _ in 0..=cfg.random_retries {
        let Some(p) = sample_perturbation(ctx, e_s, cfg.budget, &mut rng) else {
            break;
        };
        let eval = evaluate(ctx, e_s, &p, explainer)?;
        tries.push(record(&p, &eval, ctx, e_s));
        if !eval.prediction_kept {
            mispredicted += 1;
        }
        if eval.feasible(ctx) {
            let fraction = mispredicted as f64 / tries.len() as f64;
            return Ok(commit(Method::Random, e_s, p, eval, tries, fraction));
        }
    }
    let fraction = if tries.is_empty() {
        0.0
    } else {
        mispredicted as f64 / tries.len() as f64
    };
    Ok(AttackResult::infeasible(ctx, Method::Random, tries, fraction))
}

/// Deletes the `budget` non-explanatory edges with the highest clean mask
/// values.
pub fn kill_hot_attack(
    ctx: &AttackContext<'_>,
    e_s: &EdgeSet,
    clean_mask: &[f64],
    cfg: &AttackConfig,
    explainer: &ExplainerConfig,
) -> Result<AttackResult> {
    let edges = ctx.graph.edges();
    if clean_mask.len() != edges.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} mask values for {} edges",
            clean_mask.len(),
            edges.len()
        )));
    }
    let pool = edges.difference(e_s);
    let hot = super::select_candidates(edges, clean_mask, &pool, cfg.budget);
    let p = Perturbation::new(EdgeSet::new(), EdgeSet::from_pairs(hot)?);
    let eval = evaluate(ctx, e_s, &p, explainer)?;
    let tries = vec![record(&p, &eval, ctx, e_s)];
    let fraction = if eval.prediction_kept { 0.0 } else { 1.0 };
    Ok(if eval.feasible(ctx) {
        commit(Method::KillHot, e_s, p, eval, tries, fraction)
    } else {
        AttackResult::infeasible(ctx, Method::KillHot, tries, fraction)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    /// Best single-edge perturbation; infeasible when none passes the checks.
    pub best: AttackResult,
    /// Objectives of every feasible single-edge perturbation, in candidate
    /// order (deletions first, then additions).
    pub feasible_objectives: Vec<usize>,
    pub evaluated: usize,
}

impl OracleResult {
    /// Lower median of the feasible objectives.
    pub fn median(&self) -> Option<usize> {
        let mut sorted = self.feasible_objectives.clone();
        sorted.sort_unstable();
        sorted.get(sorted.len().saturating_sub(1) / 2).copied()
    }
}

/// Evaluates every single-edge deletion (outside `E_S`) and addition end to
/// end. Refuses candidate spaces larger than `cfg.oracle_limit`.
pub fn brute_force_oracle(
    ctx: &AttackContext<'_>,
    e_s: &EdgeSet,
    cfg: &AttackConfig,
    explainer: &ExplainerConfig,
) -> Result<OracleResult> {
    if cfg.budget != 1 {
        return Err(Error::InvalidConfig("the oracle enumerates single-edge perturbations only".into()));
    }
    let deletions = ctx.graph.edges().difference(e_s);
    let additions = ctx.non_edges();
    let count = deletions.len() + additions.len();
    if count > cfg.oracle_limit {
        return Err(Error::CandidateSpaceTooLarge {
            count,
            limit: cfg.oracle_limit,
        });
    }
    let candidates: Vec<Perturbation> = deletions
        .iter()
        .map(|&e| Perturbation::new(EdgeSet::new(), EdgeSet::from_pairs([e]).expect("valid edge")))
        .chain(
            additions
                .iter()
                .map(|&e| Perturbation::new(EdgeSet::from_pairs([e]).expect("valid edge"), EdgeSet::new())),
        )
        .collect();
    let evaluations: Vec<super::Evaluation> = candidates
        .par_iter()
        .map(|p| evaluate(ctx, e_s, p, explainer))
        .collect::<Result<_>>()?;

    let mut feasible_objectives = Vec::new();
    let mut best: Option<(usize, usize)> = None;
    let mut mispredicted = 0;
    for (i, eval) in evaluations.iter().enumerate() {
        if !eval.prediction_kept {
            mispredicted += 1;
        }
        if let Some(x) = &eval.explanation {
            let obj = explanation_loss_count(e_s, &x.explanatory_edges);
            feasible_objectives.push(obj);
            if best.map_or(true, |(b, _)| obj > b) {
                best = Some((obj, i));
            }
        }
    }
    let fraction = if count == 0 { 0.0 } else { mispredicted as f64 / count as f64 };
    let best = match best {
        Some((_, i)) => {
            let eval = evaluations.into_iter().nth(i).expect("index in range");
            let tries = vec![record(&candidates[i], &eval, ctx, e_s)];
            commit(Method::Oracle, e_s, candidates[i].clone(), eval, tries, fraction)
        }
        None => AttackResult::infeasible(ctx, Method::Oracle, Vec::new(), fraction),
    };
    Ok(OracleResult {
        best,
        feasible_objectives,
        evaluated: count,
    })
}
