//! Experiment runner: picks correctly predicted test instances, explains
//! them, attacks them with every requested method and aggregates the
//! overlap ratios into a results table.

mod dot;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dot::export_dot;

use crate::attack::{run_attack, AttackConfig, AttackContext, AttackResult, Method, SplitRecord};
use crate::datasets::{BenchmarkInstance, Dataset, DatasetSpec, Split};
use crate::error::{Error, Result};
use crate::explainer::{explain, ExplainerConfig};
use crate::gcn::{load_model, predict, train_gcn, GcnModel, TaskKind, Target, TrainConfig, TrainReport, TrainingData};
use crate::graph::EdgeSet;

pub const NODE_CASES: usize = 50;
pub const GRAPH_CASES: usize = 20;

/// `|E_S − E_S ∩ Ẽ_S| / |E_S|`: 0 when the explanation is unchanged, 1 when
/// it is entirely replaced.
pub fn overlap_ratio(e_s: &EdgeSet, e_s_tilde: &EdgeSet) -> Result<f64> {
    if e_s.is_empty() {
        return Err(Error::InvalidConfig("overlap ratio of an empty explanation".into()));
    }
    Ok((e_s.len() - e_s.intersection(e_s_tilde).len()) as f64 / e_s.len() as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// Trained model to load; a fresh one is trained from `train` otherwise.
    pub model: Option<PathBuf>,
    pub train: TrainConfig,
    pub explainer: ExplainerConfig,
    /// Explanation size; the dataset default when unset.
    pub k: Option<usize>,
    pub attack: AttackConfig,
    pub methods: Vec<Method>,
    /// Instances to attack; 50 for node tasks and 20 for graph tasks when
    /// unset.
    pub case_count: Option<usize>,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Records wall-clock time per method. Off by default because it makes
    /// outputs differ between runs.
    pub timing: bool,
    pub output: OutputPaths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::named("tree-cycle").expect("built-in dataset"),
            model: None,
            train: TrainConfig::default(),
            explainer: ExplainerConfig::default(),
            k: None,
            attack: AttackConfig::default(),
            methods: Method::ALL.to_vec(),
            case_count: None,
            seed: 0,
            workers: 0,
            timing: false,
            output: OutputPaths::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.explainer.validate()?;
        self.attack.validate()?;
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no attack methods selected".into()));
        }
        if self.methods.contains(&Method::Oracle) {
            return Err(Error::InvalidConfig("the oracle is not an experiment method".into()));
        }
        if self.k == Some(0) {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        Ok(())
    }

    pub fn explainer_for(&self, dataset: &Dataset) -> ExplainerConfig {
        ExplainerConfig {
            k: self.k.unwrap_or(dataset.default_k),
            ..self.explainer.clone()
        }
    }
}

/// Independent 64-bit seed for one instance.
pub fn instance_seed(seed: u64, instance: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(instance as u64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub explainer: String,
    pub method: Method,
    pub dataset: String,
    pub cases: usize,
    pub mean_overlap: f64,
    pub failure_fraction: f64,
    pub mean_runtime_ms: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn row(&self, method: Method) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record([
                "explainer",
                "method",
                "dataset",
                "cases",
                "mean_overlap",
                "failure_fraction",
                "mean_runtime_ms",
            ])?;
        }
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Outcome of one method on one instance, in host node ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: Method,
    pub feasible: bool,
    pub objective: usize,
    pub overlap_ratio: f64,
    pub additions: EdgeSet,
    pub deletions: EdgeSet,
    pub post_explanation: Option<EdgeSet>,
    pub splits: Vec<SplitRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance: usize,
    pub graph_index: usize,
    pub target: Target,
    pub class: usize,
    pub ground_truth: EdgeSet,
    pub explanation: EdgeSet,
    pub results: Vec<MethodRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub dataset: String,
    /// Set when the model was trained during the run.
    pub train_report: Option<TrainReport>,
    pub table: ResultsTable,
    pub records: Vec<InstanceRecord>,
}

/// Trains a model on the dataset's training split.
pub fn train_on(dataset: &Dataset, cfg: &TrainConfig) -> Result<(GcnModel, TrainReport)> {
    match dataset.task {
        TaskKind::Node => {
            let graph = dataset
                .graphs
                .first()
                .ok_or_else(|| Error::InvalidConfig("dataset has no graphs".into()))?;
            let train = dataset.nodes_in(Split::Train);
            let test = dataset.nodes_in(Split::Test);
            let data = TrainingData::Nodes {
                graph,
                train: &train,
                test: &test,
            };
            train_gcn(&data, dataset.class_count, cfg)
        }
        TaskKind::Graph => {
            let train = dataset.graphs_in(Split::Train);
            let test = dataset.graphs_in(Split::Test);
            let data = TrainingData::Graphs {
                train: &train,
                test: &test,
            };
            train_gcn(&data, dataset.class_count, cfg)
        }
    }
}

/// Fails unless `model` can classify instances of `dataset`.
pub fn check_compatible(model: &GcnModel, dataset: &Dataset) -> Result<()> {
    let arch = model.architecture();
    let feature_dim = dataset.graphs.first().map_or(0, |g| g.feature_dim());
    if arch.task != dataset.task || arch.class_count != dataset.class_count || arch.feature_dim != feature_dim {
        return Err(Error::InvalidConfig(format!(
            "model ({:?}, {} features, {} classes) does not fit dataset {} ({:?}, {} features, {} classes)",
            arch.task, arch.feature_dim, arch.class_count, dataset.name, dataset.task, feature_dim, dataset.class_count
        )));
    }
    Ok(())
}

/// Loads `cfg.model` or trains a fresh model.
pub fn prepare_model(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<(GcnModel, Option<TrainReport>)> {
    let (model, report) = match &cfg.model {
        Some(path) => (load_model(path)?, None),
        None => {
            let train = TrainConfig {
                seed: cfg.seed,
                ..cfg.train.clone()
            };
            let (model, report) = train_on(dataset, &train)?;
            log::info!(
                "trained on {}: train {:.3}, test {:.3}",
                dataset.name,
                report.train_accuracy,
                report.test_accuracy
            );
            (model, Some(report))
        }
    };
    check_compatible(&model, dataset)?;
    Ok((model, report))
}

/// Test instances with ground truth that the model classifies correctly,
/// both in the host graph and in the attacked graph, and whose attacked
/// graph has at least `k` edges, in a seeded random order,
/// truncated to `count`.
pub fn select_instances(
    dataset: &Dataset,
    model: &GcnModel,
    k: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..dataset.instances.len())
        .filter(|&i| {
            let inst = &dataset.instances[i];
            inst.split == Split::Test && !inst.ground_truth_edges.is_empty()
        })
        .collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xca5e_5e1e));
    let mut picked = Vec::with_capacity(count.min(order.len()));
    for i in order {
        if picked.len() == count {
            break;
        }
        let inst = &dataset.instances[i];
        let Some(label) = instance_label(inst) else {
            continue;
        };
        if predict(model, &inst.graph, inst.target)? != label {
            continue;
        }
        // Node targets are attacked inside their computation subgraph, whose
        // boundary degrees differ from the host graph's; require the label
        // there too.
        let ctx = AttackContext::new(model, &inst.graph, inst.target, label, Default::default())?;
        if ctx.graph.edge_count() >= k && ctx.predicts_class(&ctx.graph)? {
            picked.push(i);
        }
    }
    Ok(picked)
}

fn instance_label(inst: &BenchmarkInstance) -> Option<usize> {
    match inst.target {
        Target::Node(v) => inst.graph.node_labels().map(|l| l[v]),
        Target::Graph => inst.graph.graph_label(),
    }
}

/// Attack context and per-instance explainer and attack settings for
/// instance `id`, seeded from `(cfg.seed, id)`.
pub fn instance_setup<'a>(
    dataset: &'a Dataset,
    model: &'a GcnModel,
    id: usize,
    cfg: &ExperimentConfig,
) -> Result<(AttackContext<'a>, ExplainerConfig, AttackConfig)> {
    let inst = dataset
        .instances
        .get(id)
        .ok_or_else(|| Error::InvalidConfig(format!("instance {id} out of range for {}", dataset.instances.len())))?;
    let class = instance_label(inst)
        .ok_or_else(|| Error::InvalidConfig(format!("instance {id} has no label")))?;
    let seed = instance_seed(cfg.seed, id);
    let explainer = ExplainerConfig {
        seed,
        ..cfg.explainer_for(dataset)
    };
    let attack = AttackConfig {
        seed,
        ..cfg.attack.clone()
    };
    let ctx = AttackContext::new(model, &inst.graph, inst.target, class, attack.power_law_test())?;
    Ok((ctx, explainer, attack))
}

/// Explains instance `id` and runs every configured method against it.
pub fn attack_instance(dataset: &Dataset, model: &GcnModel, id: usize, cfg: &ExperimentConfig) -> Result<InstanceRecord> {
    let (ctx, explainer, attack) = instance_setup(dataset, model, id, cfg)?;
    let inst = &dataset.instances[id];
    let class = ctx.class;
    let clean = explain(model, &ctx.graph, ctx.target, class, &explainer)?;
    let mut results = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let start = Instant::now();
        let r = run_attack(method, &ctx, &clean, &attack, &explainer)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        results.push(method_record(&ctx, r, cfg.timing.then_some(elapsed)));
    }
    Ok(InstanceRecord {
        instance: id,
        graph_index: inst.graph_index,
        target: inst.target,
        class,
        ground_truth: inst.ground_truth_edges.clone(),
        explanation: ctx.edges_to_host(&clean.explanatory_edges),
        results,
    })
}

fn method_record(ctx: &AttackContext<'_>, r: AttackResult, runtime_ms: Option<f64>) -> MethodRecord {
    let p = ctx.to_host(&r.perturbation);
    MethodRecord {
        method: r.method,
        feasible: r.feasible,
        objective: r.objective,
        overlap_ratio: r.overlap_ratio,
        additions: p.additions,
        deletions: p.deletions,
        post_explanation: r.post_explanation.map(|x| ctx.edges_to_host(&x.explanatory_edges)),
        splits: r.splits,
        runtime_ms,
    }
}

/// One row per method. Failure fraction counts mis-predicting tries over
/// all tries; infeasible attacks enter the mean overlap as 0.
pub fn aggregate(records: &[InstanceRecord], methods: &[Method], explainer: &str, dataset: &str) -> ResultsTable {
    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let results: Vec<&MethodRecord> = records
            .iter()
            .flat_map(|r| r.results.iter().filter(|m| m.method == method))
            .collect();
        let cases = results.len();
        let mean = |xs: &mut dyn Iterator<Item = f64>| {
            if cases == 0 {
                0.0
            } else {
                xs.sum::<f64>() / cases as f64
            }
        };
        let mean_overlap = mean(&mut results.iter().map(|m| m.overlap_ratio));
        let tries: usize = results.iter().map(|m| m.splits.len()).sum();
        let failed = results
            .iter()
            .flat_map(|m| &m.splits)
            .filter(|s| !s.prediction_kept)
            .count();
        let failure_fraction = if tries == 0 { 0.0 } else { failed as f64 / tries as f64 };
        let mean_runtime_ms = if results.iter().all(|m| m.runtime_ms.is_some()) && cases > 0 {
            Some(mean(&mut results.iter().filter_map(|m| m.runtime_ms)))
        } else {
            None
        };
        rows.push(ResultRow {
            explainer: explainer.to_string(),
            method,
            dataset: dataset.to_string(),
            cases,
            mean_overlap,
            failure_fraction,
            mean_runtime_ms,
        });
    }
    ResultsTable { rows }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))
}

/// Runs the full protocol on an already built dataset and model.
pub fn run_on(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    model: &GcnModel,
    train_report: Option<TrainReport>,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    check_compatible(model, dataset)?;
    let explainer = cfg.explainer_for(dataset);
    let count = cfg.case_count.unwrap_or(match dataset.task {
        TaskKind::Node => NODE_CASES,
        TaskKind::Graph => GRAPH_CASES,
    });
    let ids = select_instances(dataset, model, explainer.k, count, cfg.seed)?;
    if ids.len() < count {
        log::warn!("{}: only {} eligible instances of {count} requested", dataset.name, ids.len());
    }
    let pool = thread_pool(cfg.workers)?;
    let mut records: Vec<InstanceRecord> = pool.install(|| {
        ids.par_iter()
            .map(|&id| attack_instance(dataset, model, id, cfg))
            .collect::<Result<_>>()
    })?;
    records.sort_by_key(|r| r.instance);
    let table = aggregate(&records, &cfg.methods, &explainer.constraint.to_string(), &dataset.name);
    let out = ExperimentOutput {
        dataset: dataset.name.clone(),
        train_report,
        table,
        records,
    };
    write_outputs(&cfg.output, &out)?;
    Ok(out)
}

/// Builds the dataset, loads or trains the model, and runs [`run_on`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let dataset = cfg.dataset.build(cfg.seed)?;
    let (model, report) = prepare_model(cfg, &dataset)?;
    run_on(cfg, &dataset, &model, report)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_outputs(paths: &OutputPaths, out: &ExperimentOutput) -> Result<()> {
    if let Some(path) = &paths.csv {
        write_file(path, &out.table.to_csv()?)?;
    }
    if let Some(path) = &paths.json {
        write_file(path, &(serde_json::to_string_pretty(out)? + "\n"))?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Explanation size.
    K,
    /// β sample count.
    N,
    Gamma,
    Beta,
    /// Perturbation budget.
    Xi,
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(SweepParameter::K),
            "n" | "N" => Ok(SweepParameter::N),
            "gamma" => Ok(SweepParameter::Gamma),
            "beta" => Ok(SweepParameter::Beta),
            "xi" | "budget" => Ok(SweepParameter::Xi),
            other => Err(Error::InvalidConfig(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

impl std::fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepParameter::K => "k",
            SweepParameter::N => "n",
            SweepParameter::Gamma => "gamma",
            SweepParameter::Beta => "beta",
            SweepParameter::Xi => "xi",
        })
    }
}

fn as_count(parameter: SweepParameter, value: f64) -> Result<usize> {
    if value >= 0.0 && value.fract() == 0.0 {
        Ok(value as usize)
    } else {
        Err(Error::InvalidConfig(format!("{parameter} takes whole numbers, got {value}")))
    }
}

impl SweepParameter {
    /// `cfg` with this parameter set to `value`, everything else untouched.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut out = cfg.clone();
        match self {
            SweepParameter::K => out.k = Some(as_count(self, value)?),
            SweepParameter::N => out.attack.sample_count = as_count(self, value)?,
            SweepParameter::Gamma => out.attack.gamma = value,
            SweepParameter::Beta => out.attack.beta = value,
            SweepParameter::Xi => out.attack.budget = as_count(self, value)?,
        }
        out.output = OutputPaths::default();
        out.validate()?;
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub table: ResultsTable,
}

/// Repeats the experiment once per value of `parameter`. The dataset and
/// model are shared across values.
pub fn ablation_sweep(cfg: &ExperimentConfig, parameter: SweepParameter, values: &[f64]) -> Result<Vec<SweepPoint>> {
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|&v| parameter.apply(cfg, v))
        .collect::<Result<_>>()?;
    let dataset = cfg.dataset.build(cfg.seed)?;
    let (model, _) = prepare_model(cfg, &dataset)?;
    let mut points = Vec::with_capacity(values.len());
    for (&value, c) in values.iter().zip(&configs) {
        let out = run_on(c, &dataset, &model, None)?;
        log::info!("{parameter} = {value}: {} rows", out.table.rows.len());
        points.push(SweepPoint {
            value,
            table: out.table,
        });
    }
    Ok(points)
}

/// Sweep results as one CSV with `parameter` and `value` columns in front.
pub fn sweep_csv(parameter: SweepParameter, points: &[SweepPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "parameter",
        "value",
        "explainer",
        "method",
        "dataset",
        "cases",
        "mean_overlap",
        "failure_fraction",
        "mean_runtime_ms",
    ])?;
    for point in points {
        for row in &point.table.rows {
            w.write_record([
                parameter.to_string(),
                point.value.to_string(),
                row.explainer.clone(),
                row.method.to_string(),
                row.dataset.clone(),
                row.cases.to_string(),
                row.mean_overlap.to_string(),
                row.failure_fraction.to_string(),
                row.mean_runtime_ms.map(|x| x.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Per-method overlap ratios keyed by instance id.
pub fn overlaps_by_method(records: &[InstanceRecord]) -> BTreeMap<Method, BTreeMap<usize, f64>> {
    let mut out: BTreeMap<Method, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in records {
        for m in &r.results {
            out.entry(m.method).or_default().insert(r.instance, m.overlap_ratio);
        }
    }
    out
}

#[cfg(test)]
mod tests;
