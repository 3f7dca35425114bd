//! Seeded synthetic benchmarks with ground-truth motif edges, and a loader
//! for external corpora stored as edge-list files plus a JSON manifest.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{TaskKind, Target};
use crate::graph::edge_list::{read_edge_list, write_edge_list};
use crate::graph::{canonical, Edge, EdgeSet, Graph, Labels};

/// Fraction of instances assigned to the training split.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkInstance {
    pub graph_index: usize,
    pub graph: Arc<Graph>,
    pub target: Target,
    /// Motif edges for motif members; empty where no ground truth exists.
    pub ground_truth_edges: EdgeSet,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub task: TaskKind,
    pub class_count: usize,
    /// Explanation size used for this dataset unless overridden.
    pub default_k: usize,
    pub graphs: Vec<Arc<Graph>>,
    pub instances: Vec<BenchmarkInstance>,
}

impl Dataset {
    pub fn instances_in(&self, split: Split) -> impl Iterator<Item = &BenchmarkInstance> {
        self.instances.iter().filter(move |i| i.split == split)
    }

    pub fn graphs_in(&self, split: Split) -> Vec<&Graph> {
        self.instances_in(split).map(|i| i.graph.as_ref()).collect()
    }

    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        self.instances_in(split)
            .filter_map(|i| match i.target {
                Target::Node(v) => Some(v),
                Target::Graph => None,
            })
            .collect()
    }
}

/// Assigns `TRAIN_FRACTION` of `count` items to training, chosen by a seeded
/// shuffle.
pub fn split_assignment(count: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5711));
    let train = (count as f64 * TRAIN_FRACTION).round() as usize;
    let mut split = vec![Split::Test; count];
    for &i in &order[..train] {
        split[i] = Split::Train;
    }
    split
}

/// Preferential-attachment graph: nodes `0..m` start unconnected, and every
/// later node links to `m` distinct existing nodes drawn with probability
/// proportional to degree.
fn barabasi_albert(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<Edge> {
    let mut edges = Vec::with_capacity((n - m) * m);
    let mut targets: Vec<usize> = (0..m).collect();
    let mut repeated: Vec<usize> = Vec::new();
    for source in m..n {
        for &t in &targets {
            edges.push(canonical(source, t));
        }
        repeated.extend_from_slice(&targets);
        repeated.extend(std::iter::repeat(source).take(m));
        let mut picked = Vec::with_capacity(m);
        while picked.len() < m {
            let x = repeated[rng.gen_range(0..repeated.len())];
            if !picked.contains(&x) {
                picked.push(x);
            }
        }
        targets = picked;
    }
    edges
}

fn balanced_binary_tree(depth: u32) -> (usize, Vec<Edge>) {
    let n = (1usize << (depth + 1)) - 1;
    let edges = (1..n).map(|v| ((v - 1) / 2, v)).collect();
    (n, edges)
}

/// House on nodes `first..first+5`: bottom pair, middle pair, roof.
/// Returns the 6 motif edges and the per-node role labels.
fn house(first: usize) -> ([Edge; 6], [usize; 5]) {
    let [b0, b1, m0, m1, top] = [first, first + 1, first + 2, first + 3, first + 4];
    (
        [(b0, b1), (b0, m0), (b1, m1), (m0, m1), (m0, top), (m1, top)],
        [3, 3, 2, 2, 1],
    )
}

fn cycle(first: usize, len: usize) -> Vec<Edge> {
    (0..len)
        .map(|i| canonical(first + i, first + (i + 1) % len))
        .collect()
}

struct MotifGraph {
    node_count: usize,
    edges: Vec<Edge>,
    labels: Vec<usize>,
    /// Motif index per node, if the node belongs to one.
    motif_of: Vec<Option<usize>>,
    motif_edges: Vec<EdgeSet>,
}

fn attach_houses(
    base_nodes: usize,
    mut edges: Vec<Edge>,
    motif_count: usize,
    rng: &mut ChaCha8Rng,
) -> MotifGraph {
    let n = base_nodes + 5 * motif_count;
    let mut labels = vec![0; n];
    let mut motif_of = vec![None; n];
    let mut motif_edges = Vec::with_capacity(motif_count);
    for k in 0..motif_count {
        let first = base_nodes + 5 * k;
        let (h, roles) = house(first);
        edges.extend_from_slice(&h);
        edges.push((rng.gen_range(0..base_nodes), first));
        for i in 0..5 {
            labels[first + i] = roles[i];
            motif_of[first + i] = Some(k);
        }
        motif_edges.push(EdgeSet::from_pairs(h).expect("valid house"));
    }
    MotifGraph {
        node_count: n,
        edges,
        labels,
        motif_of,
        motif_edges,
    }
}

fn node_instances(
    graph: Arc<Graph>,
    motif_of: &[Option<usize>],
    motif_edges: &[EdgeSet],
    seed: u64,
) -> Vec<BenchmarkInstance> {
    let split = split_assignment(graph.node_count(), seed);
    (0..graph.node_count())
        .map(|v| BenchmarkInstance {
            graph_index: 0,
            graph: Arc::clone(&graph),
            target: Target::Node(v),
            ground_truth_edges: motif_of[v].map_or_else(EdgeSet::new, |k| motif_edges[k].clone()),
            split: split[v],
        })
        .collect()
}

fn node_dataset(name: &str, class_count: usize, default_k: usize, graph: Graph, mg: &MotifGraph, seed: u64) -> Dataset {
    let graph = Arc::new(graph);
    Dataset {
        name: name.to_string(),
        task: TaskKind::Node,
        class_count,
        default_k,
        instances: node_instances(Arc::clone(&graph), &mg.motif_of, &mg.motif_edges, seed),
        graphs: vec![graph],
    }
}

/// BA base graph with house motifs. Classes: 0 base, 1 roof, 2 middle,
/// 3 bottom. All features are 1.
pub fn gen_ba_house(seed: u64, base_nodes: usize, motif_count: usize, attach_m: usize) -> Result<Dataset> {
    if attach_m == 0 || base_nodes < attach_m {
        return Err(Error::InvalidConfig("BA House needs base_nodes ≥ attach_m ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = barabasi_albert(base_nodes, attach_m, &mut rng);
    let mg = attach_houses(base_nodes, base, motif_count, &mut rng);
    let graph = Graph::with_unit_features(
        mg.node_count,
        EdgeSet::from_pairs(mg.edges.iter().copied())?,
        1,
        Labels::Node(mg.labels.clone()),
    )?;
    Ok(node_dataset("ba-house", 4, 6, graph, &mg, seed))
}

/// Balanced binary tree with six-node cycles attached. Classes: 0 tree,
/// 1 cycle. All features are 1.
pub fn gen_tree_cycle(seed: u64, tree_depth: u32, motif_count: usize) -> Result<Dataset> {
    if tree_depth < 2 {
        return Err(Error::InvalidConfig("tree depth must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (tree_nodes, mut edges) = balanced_binary_tree(tree_depth);
    let n = tree_nodes + 6 * motif_count;
    let mut labels = vec![0; n];
    let mut motif_of = vec![None; n];
    let mut motif_edges = Vec::with_capacity(motif_count);
    for k in 0..motif_count {
        let first = tree_nodes + 6 * k;
        let c = cycle(first, 6);
        edges.extend_from_slice(&c);
        edges.push((rng.gen_range(0..tree_nodes), first));
        for v in first..first + 6 {
            labels[v] = 1;
            motif_of[v] = Some(k);
        }
        motif_edges.push(EdgeSet::from_pairs(c)?);
    }
    let mg = MotifGraph {
        node_count: n,
        edges,
        labels,
        motif_of,
        motif_edges,
    };
    let graph = Graph::with_unit_features(
        n,
        EdgeSet::from_pairs(mg.edges.iter().copied())?,
        1,
        Labels::Node(mg.labels.clone()),
    )?;
    Ok(node_dataset("tree-cycle", 2, 6, graph, &mg, seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommunityParams {
    pub base_nodes: usize,
    pub motif_count: usize,
    pub attach_m: usize,
    /// Probability of an edge between two base nodes of different communities.
    pub inter_edge_prob: f64,
    pub feature_noise: f64,
}

impl Default for CommunityParams {
    fn default() -> Self {
        CommunityParams {
            base_nodes: 300,
            motif_count: 80,
            attach_m: 5,
            inter_edge_prob: 0.0043,
            feature_noise: 0.5,
        }
    }
}

/// Two BA House communities joined by random base-to-base edges. Class is
/// `4·community + role`; features are a noisy community indicator.
pub fn gen_ba_community(seed: u64, params: &CommunityParams) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::new();
    for _ in 0..2 {
        let base = barabasi_albert(params.base_nodes, params.attach_m, &mut rng);
        parts.push(attach_houses(params.base_nodes, base, params.motif_count, &mut rng));
    }
    let offset = parts[0].node_count;
    let n = 2 * offset;
    let mut edges = parts[0].edges.clone();
    edges.extend(parts[1].edges.iter().map(|&(u, v)| (u + offset, v + offset)));
    for u in 0..params.base_nodes {
        for v in 0..params.base_nodes {
            if rng.gen_bool(params.inter_edge_prob) {
                edges.push((u, v + offset));
            }
        }
    }
    let mut labels = parts[0].labels.clone();
    labels.extend(parts[1].labels.iter().map(|&l| l + 4));
    let mut motif_of = parts[0].motif_of.clone();
    motif_of.extend(parts[1].motif_of.iter().map(|m| m.map(|k| k + params.motif_count)));
    let mut motif_edges = parts[0].motif_edges.clone();
    for set in &parts[1].motif_edges {
        motif_edges.push(EdgeSet::from_pairs(set.iter().map(|&(u, v)| (u + offset, v + offset)))?);
    }
    let noise = Normal::new(0.0, params.feature_noise)
        .map_err(|e| Error::InvalidConfig(format!("feature noise: {e}")))?;
    let features = Array2::from_shape_fn((n, 2), |(v, j)| {
        let indicator = if (v >= offset) == (j == 1) { 1.0 } else { 0.0 };
        indicator + noise.sample(&mut rng)
    });
    let mg = MotifGraph {
        node_count: n,
        edges,
        labels,
        motif_of,
        motif_edges,
    };
    let graph = Graph::new(
        n,
        EdgeSet::from_pairs(mg.edges.iter().copied())?,
        features,
        Labels::Node(mg.labels.clone()),
    )?;
    Ok(node_dataset("ba-community", 8, 28, graph, &mg, seed))
}

/// Small labelled graphs: a random tree base with a house (class 1) or a
/// six-cycle (class 0) attached. Labels alternate so classes balance.
pub fn gen_motif_graph_dataset(seed: u64, count: usize) -> Result<Dataset> {
    if count < 2 {
        return Err(Error::InvalidConfig("need at least two graphs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split = split_assignment(count, seed);
    let mut graphs = Vec::with_capacity(count);
    let mut instances = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % 2;
        let base_nodes = rng.gen_range(10..=20);
        let mut edges = barabasi_albert(base_nodes, 1, &mut rng);
        let (motif, motif_nodes) = if label == 1 {
            (house(base_nodes).0.to_vec(), 5)
        } else {
            (cycle(base_nodes, 6), 6)
        };
        edges.extend_from_slice(&motif);
        edges.push((rng.gen_range(0..base_nodes), base_nodes));
        let graph = Arc::new(Graph::with_unit_features(
            base_nodes + motif_nodes,
            EdgeSet::from_pairs(edges)?,
            1,
            Labels::Graph(label),
        )?);
        instances.push(BenchmarkInstance {
            graph_index: i,
            graph: Arc::clone(&graph),
            target: Target::Graph,
            ground_truth_edges: EdgeSet::from_pairs(motif)?,
            split: split[i],
        });
        graphs.push(graph);
    }
    Ok(Dataset {
        name: "motif-graphs".into(),
        task: TaskKind::Graph,
        class_count: 2,
        default_k: 6,
        graphs,
        instances,
    })
}

/// Where a dataset comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    BaHouse {
        #[serde(default = "default_base_nodes")]
        base_nodes: usize,
        #[serde(default = "default_motif_count")]
        motif_count: usize,
        #[serde(default = "default_attach_m")]
        attach_m: usize,
    },
    TreeCycle {
        #[serde(default = "default_tree_depth")]
        tree_depth: u32,
        #[serde(default = "default_motif_count")]
        motif_count: usize,
    },
    BaCommunity {
        #[serde(default, flatten)]
        params: CommunityParams,
    },
    MotifGraphs {
        #[serde(default = "default_graph_count")]
        count: usize,
    },
    EdgeList {
        manifest: PathBuf,
    },
}

fn default_base_nodes() -> usize {
    300
}
fn default_motif_count() -> usize {
    80
}
fn default_attach_m() -> usize {
    5
}
fn default_tree_depth() -> u32 {
    8
}
fn default_graph_count() -> usize {
    200
}

impl DatasetSpec {
    /// Spec with default parameters for a named dataset.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "ba-house" => Ok(DatasetSpec::BaHouse {
                base_nodes: default_base_nodes(),
                motif_count: default_motif_count(),
                attach_m: default_attach_m(),
            }),
            "tree-cycle" => Ok(DatasetSpec::TreeCycle {
                tree_depth: default_tree_depth(),
                motif_count: default_motif_count(),
            }),
            "ba-community" => Ok(DatasetSpec::BaCommunity {
                params: CommunityParams::default(),
            }),
            "motif-graphs" => Ok(DatasetSpec::MotifGraphs {
                count: default_graph_count(),
            }),
            other => {
                let path = Path::new(other);
                if path.extension().is_some_and(|e| e == "json") {
                    Ok(DatasetSpec::EdgeList {
                        manifest: path.to_path_buf(),
                    })
                } else {
                    Err(Error::InvalidConfig(format!("unknown dataset {other:?}")))
                }
            }
        }
    }

    pub fn build(&self, seed: u64) -> Result<Dataset> {
        match self {
            DatasetSpec::BaHouse {
                base_nodes,
                motif_count,
                attach_m,
            } => gen_ba_house(seed, *base_nodes, *motif_count, *attach_m),
            DatasetSpec::TreeCycle { tree_depth, motif_count } => gen_tree_cycle(seed, *tree_depth, *motif_count),
            DatasetSpec::BaCommunity { params } => gen_ba_community(seed, params),
            DatasetSpec::MotifGraphs { count } => gen_motif_graph_dataset(seed, *count),
            DatasetSpec::EdgeList { manifest } => load_edge_list_dataset(manifest),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestInstance {
    pub graph: usize,
    /// Target node; absent for whole-graph instances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    pub split: Split,
    #[serde(default)]
    pub ground_truth: EdgeSet,
}

/// Dataset manifest. When `instances` is omitted, every graph (graph task)
/// or every node of every graph (node task) becomes an instance with a
/// seeded 80/20 split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub task: TaskKind,
    pub class_count: usize,
    pub default_k: usize,
    /// Edge-list files, relative to the manifest's directory.
    pub graphs: Vec<PathBuf>,
    #[serde(default)]
    pub instances: Option<Vec<ManifestInstance>>,
    #[serde(default)]
    pub split_seed: u64,
}

fn dataset_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Dataset {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn load_edge_list_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| dataset_error(manifest_path, e.to_string()))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut graphs = Vec::with_capacity(manifest.graphs.len());
    for file in &manifest.graphs {
        let path = dir.join(file);
        let (graph, classes) = read_edge_list(&path)?;
        if classes != manifest.class_count {
            return Err(dataset_error(
                &path,
                format!("class count {classes} differs from manifest's {}", manifest.class_count),
            ));
        }
        let labels_match = matches!(
            (manifest.task, graph.labels()),
            (TaskKind::Node, Labels::Node(_)) | (TaskKind::Graph, Labels::Graph(_))
        );
        if !labels_match {
            return Err(dataset_error(&path, "label kind does not match the manifest task"));
        }
        graphs.push(Arc::new(graph));
    }
    if let Some(first) = graphs.first() {
        if let Some(g) = graphs.iter().find(|g| g.feature_dim() != first.feature_dim()) {
            return Err(Error::DimensionMismatch(format!(
                "feature dimension {} differs from {} in {}",
                g.feature_dim(),
                first.feature_dim(),
                manifest_path.display()
            )));
        }
    }

    let entries = match manifest.instances {
        Some(entries) => entries,
        None => {
            let mut entries = Vec::new();
            for (gi, g) in graphs.iter().enumerate() {
                match manifest.task {
                    TaskKind::Graph => entries.push((gi, None)),
                    TaskKind::Node => entries.extend((0..g.node_count()).map(|v| (gi, Some(v)))),
                }
            }
            let split = split_assignment(entries.len(), manifest.split_seed);
            entries
                .into_iter()
                .zip(split)
                .map(|((graph, node), split)| ManifestInstance {
                    graph,
                    node,
                    split,
                    ground_truth: EdgeSet::new(),
                })
                .collect()
        }
    };

    let mut instances = Vec::with_capacity(entries.len());
    for entry in entries {
        let graph = graphs
            .get(entry.graph)
            .ok_or_else(|| dataset_error(manifest_path, format!("instance refers to missing graph {}", entry.graph)))?;
        let target = match (manifest.task, entry.node) {
            (TaskKind::Node, Some(v)) if v < graph.node_count() => Target::Node(v),
            (TaskKind::Graph, None) => Target::Graph,
            _ => return Err(dataset_error(manifest_path, "instance target does not fit the task")),
        };
        if let Some(&e) = entry.ground_truth.iter().find(|&&e| !graph.edges().contains(e)) {
            return Err(Error::NotSubset(e));
        }
        instances.push(BenchmarkInstance {
            graph_index: entry.graph,
            graph: Arc::clone(graph),
            target,
            ground_truth_edges: entry.ground_truth,
            split: entry.split,
        });
    }
    Ok(Dataset {
        name: manifest.name,
        task: manifest.task,
        class_count: manifest.class_count,
        default_k: manifest.default_k,
        graphs,
        instances,
    })
}

/// Writes every graph as an edge-list file and a `manifest.json` listing
/// them and all instances. Returns the manifest path.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(dataset.graphs.len());
    for (i, g) in dataset.graphs.iter().enumerate() {
        let name = PathBuf::from(format!("graph-{i}.txt"));
        write_edge_list(&dir.join(&name), g, dataset.class_count)?;
        files.push(name);
    }
    let instances = dataset
        .instances
        .iter()
        .map(|inst| ManifestInstance {
            graph: inst.graph_index,
            node: match inst.target {
                Target::Node(v) => Some(v),
                Target::Graph => None,
            },
            split: inst.split,
            ground_truth: inst.ground_truth_edges.clone(),
        })
        .collect();
    let manifest = Manifest {
        name: dataset.name.clone(),
        task: dataset.task,
        class_count: dataset.class_count,
        default_k: dataset.default_k,
        graphs: files,
        instances: Some(instances),
        split_seed: 0,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
