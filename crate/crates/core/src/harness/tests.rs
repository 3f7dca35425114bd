use super::*;
use crate::explainer::ConstraintKind;

fn set(pairs: &[(usize, usize)]) -> EdgeSet {
    EdgeSet::from_pairs(pairs.iter().copied()).unwrap()
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSpec::TreeCycle {
            tree_depth: 5,
            motif_count: 12,
        },
        train: TrainConfig {
            epochs: 400,
            hidden_dim: 12,
            ..TrainConfig::default()
        },
        explainer: ExplainerConfig {
            epochs: 30,
            learn_rate: 0.05,
            ..ExplainerConfig::default()
        },
        attack: AttackConfig {
            score_epochs: Some(20),
            random_retries: 3,
            ..AttackConfig::default()
        },
        case_count: Some(4),
        seed: 5,
        workers: 1,
        ..ExperimentConfig::default()
    }
}

#[test]
fn overlap_ratio_examples() {
    let a = set(&[(0, 1), (1, 2), (2, 3)]);
    assert_eq!(overlap_ratio(&a, &a).unwrap(), 0.0);
    assert_eq!(overlap_ratio(&a, &set(&[(4, 5)])).unwrap(), 1.0);
    let b = set(&[(0, 1), (3, 4), (4, 5)]);
    assert!((overlap_ratio(&a, &b).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!(overlap_ratio(&EdgeSet::new(), &a).is_err());
}

#[test]
fn instance_seeds_differ() {
    let seeds: std::collections::BTreeSet<u64> = (0..100).map(|i| instance_seed(3, i)).collect();
    assert_eq!(seeds.len(), 100);
    assert_eq!(instance_seed(3, 7), instance_seed(3, 7));
    assert_ne!(instance_seed(3, 7), instance_seed(4, 7));
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let cfg = small_config();
    let one = run_experiment(&cfg).unwrap();
    let many = run_experiment(&ExperimentConfig { workers: 3, ..cfg }).unwrap();
    assert_eq!(one.records.len(), 4);
    assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&many).unwrap());
    for row in &one.table.rows {
        assert_eq!(row.cases, 4);
        assert!((0.0..=1.0).contains(&row.mean_overlap));
        assert!((0.0..=1.0).contains(&row.failure_fraction));
        assert_eq!(row.mean_runtime_ms, None);
        assert_eq!(row.explainer, "gnnexplainer");
    }
}

#[test]
fn zero_budget_gives_zero_means() {
    let mut cfg = small_config();
    cfg.attack.budget = 0;
    cfg.case_count = Some(2);
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.table.rows.len(), 4);
    for row in &out.table.rows {
        assert_eq!(row.mean_overlap, 0.0, "{}", row.method);
    }
}

#[test]
fn csv_has_fixed_columns() {
    let header = "explainer,method,dataset,cases,mean_overlap,failure_fraction,mean_runtime_ms\n";
    assert_eq!(ResultsTable::default().to_csv().unwrap(), header);
    let table = ResultsTable {
        rows: vec![ResultRow {
            explainer: "gsat".into(),
            method: Method::KillHot,
            dataset: "tree-cycle".into(),
            cases: 3,
            mean_overlap: 0.5,
            failure_fraction: 0.25,
            mean_runtime_ms: None,
        }],
    };
    assert_eq!(table.to_csv().unwrap(), format!("{header}gsat,kill-hot,tree-cycle,3,0.5,0.25,\n"));
}

#[test]
fn incompatible_model_is_rejected_before_attacking() {
    let cfg = small_config();
    let house = DatasetSpec::named("motif-graphs").unwrap().build(0).unwrap();
    let tree = cfg.dataset.build(cfg.seed).unwrap();
    let (model, _) = train_on(
        &tree,
        &TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert!(matches!(run_on(&cfg, &house, &model, None), Err(Error::InvalidConfig(_))));
}

#[test]
fn sweep_parameters_parse_and_apply() {
    let cfg = small_config();
    assert_eq!("xi".parse::<SweepParameter>().unwrap(), SweepParameter::Xi);
    assert!("alpha".parse::<SweepParameter>().is_err());
    assert_eq!(SweepParameter::Xi.apply(&cfg, 3.0).unwrap().attack.budget, 3);
    assert_eq!(SweepParameter::K.apply(&cfg, 4.0).unwrap().k, Some(4));
    assert_eq!(SweepParameter::N.apply(&cfg, 6.0).unwrap().attack.sample_count, 6);
    assert_eq!(SweepParameter::Gamma.apply(&cfg, 0.5).unwrap().attack.gamma, 0.5);
    assert!(SweepParameter::Xi.apply(&cfg, 1.5).is_err());
    assert!(SweepParameter::Beta.apply(&cfg, 1.0).is_err());
}

#[test]
fn single_value_sweep_matches_a_plain_run() {
    let mut cfg = small_config();
    cfg.case_count = Some(2);
    cfg.methods = vec![Method::Random, Method::Deduction];
    cfg.explainer.constraint = ConstraintKind::Gsat;
    let plain = run_experiment(&cfg).unwrap();
    let points = ablation_sweep(&cfg, SweepParameter::Xi, &[2.0]).unwrap();
    assert_eq!(points.len(), 1);
    assert_eq!(points[0].table, plain.table);
    let csv = sweep_csv(SweepParameter::Xi, &points).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("xi,2,gsat,random,tree-cycle,2,"));
}
