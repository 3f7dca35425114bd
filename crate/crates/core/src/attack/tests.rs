use std::sync::OnceLock;

use approx::assert_relative_eq;

use super::*;
use crate::datasets::{gen_tree_cycle, Dataset, Split};
use crate::explainer::{explainer_loss, MaskObjective};
use crate::gcn::{train_gcn, TrainConfig, TrainingData};

struct Fixture {
    dataset: Dataset,
    model: GcnModel,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dataset = gen_tree_cycle(11, 4, 8).unwrap();
        let train = dataset.nodes_in(Split::Train);
        let cfg = TrainConfig {
            epochs: 300,
            hidden_dim: 12,
            ..TrainConfig::default()
        };
        let data = TrainingData::Nodes {
            graph: &dataset.graphs[0],
            train: &train,
            test: &[],
        };
        let (model, _) = train_gcn(&data, dataset.class_count, &cfg).unwrap();
        Fixture { dataset, model }
    })
}

fn explainer_cfg() -> ExplainerConfig {
    ExplainerConfig {
        epochs: 60,
        learn_rate: 0.05,
        ..ExplainerConfig::default()
    }
}

/// Correctly predicted cycle nodes with their attack contexts.
fn contexts(count: usize) -> Vec<(AttackContext<'static>, ExplanationResult)> {
    let f = fixture();
    let host = &f.dataset.graphs[0];
    let labels = host.node_labels().unwrap();
    let mut out = Vec::new();
    for v in 0..host.node_count() {
        if labels[v] != 1 || predict(&f.model, host, Target::Node(v)).unwrap() != 1 {
            continue;
        }
        let ctx = AttackContext::new(&f.model, host, Target::Node(v), 1, PowerLawTest::default()).unwrap();
        if !ctx.predicts_class(&ctx.graph).unwrap() || ctx.graph.edge_count() < 8 {
            continue;
        }
        let clean = explain(&f.model, &ctx.graph, ctx.target, 1, &explainer_cfg()).unwrap();
        out.push((ctx, clean));
        if out.len() == count {
            break;
        }
    }
    assert!(!out.is_empty());
    out
}

#[test]
fn explanatory_entries_are_bit_identical_after_scoring() {
    let cfg = AttackConfig {
        score_epochs: Some(40),
        ..AttackConfig::default()
    };
    for (ctx, clean) in contexts(2) {
        let e_s = &clean.explanatory_edges;
        let additions = ctx.non_edges().union(e_s);
        for rule in [ScoringRule::Loss, ScoringRule::Deduction] {
            for (candidates, direction) in [(ctx.graph.edges(), Direction::Minimize), (&additions, Direction::Maximize)] {
                let scored = score_mask(&ctx, candidates, e_s, rule, direction, &cfg, &explainer_cfg()).unwrap();
                let mut moved = 0;
                for (i, e) in candidates.iter().enumerate() {
                    if e_s.contains(*e) {
                        assert_eq!(scored.mask[i].to_bits(), scored.initial[i].to_bits());
                    } else if scored.mask[i] != scored.initial[i] {
                        moved += 1;
                    }
                }
                assert!(moved > 0, "{rule:?} {direction:?} left every entry unchanged");
            }
        }
    }
}

#[test]
fn deduction_loss_recombines_explainer_losses() {
    let (ctx, clean) = contexts(1).remove(0);
    let e_s = &clean.explanatory_edges;
    let candidates = ctx.graph.edges();
    let ecfg = explainer_cfg();
    let fb = build_filter_bias(candidates, e_s).unwrap();
    let objective = MaskObjective::new(ctx.model, &ctx.graph, ctx.target, ctx.class, candidates, &ecfg);
    let mask: Vec<f64> = (0..candidates.len()).map(|i| 0.1 + 0.8 * ((i * 7) % 11) as f64 / 10.0).collect();
    let betas = beta_sequence(4, 0.7).unwrap();

    let loss_at = |m: &[f64]| explainer_loss(ctx.model, &ctx.graph, ctx.target, ctx.class, candidates, m, &ecfg).unwrap();
    let base = loss_at(&fb.apply(&mask, 0.0));
    let expected: f64 = betas.iter().map(|&b| loss_at(&fb.apply(&mask, b)) - base).sum();
    assert_relative_eq!(deduction_loss(&objective, &mask, &fb, &betas).unwrap(), expected, epsilon = 1e-12);

    assert_eq!(deduction_loss(&objective, &mask, &fb, &[0.0, 0.0]).unwrap(), 0.0);
    let single = deduction_loss(&objective, &mask, &fb, &[0.7]).unwrap();
    assert_relative_eq!(single, loss_at(&fb.apply(&mask, 0.7)) - base, epsilon = 1e-12);

    let (value, grad) = deduction_loss_and_grad(&objective, &mask, &fb, &betas).unwrap();
    assert_relative_eq!(value, expected, epsilon = 1e-12);
    for i in 0..mask.len() {
        let mut up = mask.clone();
        let mut down = mask.clone();
        up[i] += 1e-5;
        down[i] -= 1e-5;
        let fd = (deduction_loss(&objective, &up, &fb, &betas).unwrap()
            - deduction_loss(&objective, &down, &fb, &betas).unwrap())
            / 2e-5;
        assert_relative_eq!(grad[i], fd, epsilon = 1e-7, max_relative = 1e-5);
    }
}

#[test]
fn splits_cover_the_budget_and_results_recheck() {
    let ecfg = explainer_cfg();
    let cfg = AttackConfig {
        score_epochs: Some(30),
        ..AttackConfig::default()
    };
    for (ctx, clean) in contexts(3) {
        for method in Method::ALL {
            let r = run_attack(method, &ctx, &clean, &cfg, &ecfg).unwrap();
            if matches!(method, Method::Loss | Method::Deduction) {
                let shape: Vec<(usize, usize)> = r.splits.iter().map(|s| (s.deletions, s.additions)).collect();
                assert_eq!(shape, vec![(2, 0), (1, 1), (0, 2)]);
            }
            if r.feasible {
                let report = verify_result(&ctx, &clean.explanatory_edges, &r, cfg.budget).unwrap();
                assert!(report.all_pass(), "{method}: {report:?}");
                assert_eq!(
                    r.objective,
                    explanation_loss_count(
                        &clean.explanatory_edges,
                        &r.post_explanation.as_ref().unwrap().explanatory_edges
                    )
                );
                assert!(r.perturbation.deletions.intersection(&clean.explanatory_edges).is_empty());
            } else {
                assert_eq!(r.objective, 0);
                assert!(r.perturbation.is_empty());
            }
            if method == Method::Random && r.feasible {
                assert_eq!(r.perturbation.len(), cfg.budget);
            }
        }
    }
}

#[test]
fn zero_budget_gives_empty_perturbation() {
    let (ctx, clean) = contexts(1).remove(0);
    let cfg = AttackConfig {
        budget: 0,
        ..AttackConfig::default()
    };
    let r = deduction_based_attack(&ctx, &clean.explanatory_edges, &cfg, &explainer_cfg()).unwrap();
    assert!(r.feasible);
    assert!(r.perturbation.is_empty());
    assert_eq!(r.overlap_ratio, 0.0);
}

#[test]
fn kill_hot_deletes_the_hottest_free_edge() {
    let (ctx, clean) = contexts(1).remove(0);
    let edges = ctx.graph.edges();
    let e_s = EdgeSet::from_pairs([edges.get(0).unwrap()]).unwrap();
    let mut mask = vec![0.1; edges.len()];
    mask[0] = 0.9;
    mask[2] = 0.8;
    let cfg = AttackConfig {
        budget: 1,
        tau: f64::INFINITY,
        ..AttackConfig::default()
    };
    let r = kill_hot_attack(&ctx, &e_s, &mask, &cfg, &explainer_cfg()).unwrap();
    assert_eq!(r.splits[0].deletions, 1);
    if r.feasible {
        assert_eq!(r.perturbation.deletions.as_slice(), &[edges.get(2).unwrap()]);
    }
    drop(clean);
}

#[test]
fn oracle_dominates_single_edge_deduction() {
    let ecfg = explainer_cfg();
    let cfg = AttackConfig {
        budget: 1,
        score_epochs: Some(30),
        ..AttackConfig::default()
    };
    for (ctx, clean) in contexts(2) {
        let e_s = &clean.explanatory_edges;
        let oracle = brute_force_oracle(&ctx, e_s, &cfg, &ecfg).unwrap();
        let attack = deduction_based_attack(&ctx, e_s, &cfg, &ecfg).unwrap();
        assert!(oracle.best.objective >= attack.objective);
        assert_eq!(
            oracle.best.objective,
            oracle.feasible_objectives.iter().copied().max().unwrap_or(0)
        );
        let small = AttackConfig {
            oracle_limit: 3,
            ..cfg.clone()
        };
        assert!(matches!(
            brute_force_oracle(&ctx, e_s, &small, &ecfg),
            Err(Error::CandidateSpaceTooLarge { .. })
        ));
    }
}

#[test]
fn degree_shortcut_matches_full_graph_statistic() {
    let (ctx, _) = contexts(1).remove(0);
    let add = ctx.non_edges().get(0).unwrap();
    let del = ctx.graph.edges().get(1).unwrap();
    let p = Perturbation::new(EdgeSet::from_pairs([add]).unwrap(), EdgeSet::from_pairs([del]).unwrap());
    let host_after = apply_perturbation(ctx.host, &ctx.to_host(&p)).unwrap();
    let full = ctx.power_law_test().statistic(ctx.host, &host_after).unwrap();
    assert_relative_eq!(ctx.lambda(&p).unwrap(), full, epsilon = 1e-9);
    assert_eq!(ctx.lambda(&Perturbation::default()).unwrap(), 0.0);
}
