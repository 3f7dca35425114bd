//! Plain-text edge-list graph format.
//!
//! ```text
//! # comment lines and blank lines are ignored
//! N F C                 node count, feature dim, class count
//! x_0 x_1 ... x_{F-1}   one feature line per node (N lines)
//! node l_0 ... l_{N-1}  per-node labels, or `graph l` for a graph label
//! u v                   one undirected edge per line
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces the graph exactly.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use super::{EdgeSet, Graph, Labels};
use crate::error::{Error, Result};

pub fn read_edge_list(path: &Path) -> Result<(Graph, usize)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, path)
}

pub fn write_edge_list(path: &Path, graph: &Graph, class_count: usize) -> Result<()> {
    std::fs::write(path, format_edge_list(graph, class_count)).map_err(|e| Error::io(path, e))
}

pub fn format_edge_list(graph: &Graph, class_count: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {}",
        graph.node_count(),
        graph.feature_dim(),
        class_count
    );
    for row in graph.features().rows() {
        let line: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    match graph.labels() {
        Labels::Node(l) => {
            let line: Vec<String> = l.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(out, "node {}", line.join(" "));
        }
        Labels::Graph(l) => {
            let _ = writeln!(out, "graph {l}");
        }
    }
    for &(u, v) in graph.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    out
}

pub fn parse_edge_list(text: &str, path: &Path) -> Result<(Graph, usize)> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or_else(|| Error::Dataset {
        path: path.to_path_buf(),
        message: "empty file, missing header line".into(),
    })?;
    let header: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(hline, format!("bad header: {e}")))?;
    let [n, f, c] = header[..] else {
        return Err(parse_err(hline, "header must be `N F C`".into()));
    };
    if n == 0 || f == 0 || c == 0 {
        return Err(parse_err(hline, "N, F and C must all be positive".into()));
    }

    let mut features = Array2::zeros((n, f));
    for row in 0..n {
        let (lno, line) = lines.next().ok_or_else(|| Error::Dataset {
            path: path.to_path_buf(),
            message: format!("expected {n} feature lines, found {row}"),
        })?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(lno, format!("bad feature value: {e}")))?;
        if values.len() != f {
            return Err(Error::DimensionMismatch(format!(
                "{}:{lno}: expected {f} features, found {}",
                path.display(),
                values.len()
            )));
        }
        for (j, x) in values.into_iter().enumerate() {
            features[[row, j]] = x;
        }
    }

    let (lno, line) = lines.next().ok_or_else(|| Error::Dataset {
        path: path.to_path_buf(),
        message: "missing label line".into(),
    })?;
    let mut tokens = line.split_whitespace();
    let kind = tokens.next().unwrap_or_default();
    let values: Vec<usize> = tokens
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(lno, format!("bad label: {e}")))?;
    if let Some(&bad) = values.iter().find(|&&l| l >= c) {
        return Err(parse_err(lno, format!("label {bad} not below class count {c}")));
    }
    let labels = match (kind, values.len()) {
        ("node", len) if len == n => Labels::Node(values),
        ("node", len) => {
            return Err(Error::DimensionMismatch(format!(
                "{}:{lno}: expected {n} node labels, found {len}",
                path.display()
            )))
        }
        ("graph", 1) => Labels::Graph(values[0]),
        ("graph", _) => return Err(parse_err(lno, "graph label line takes one value".into())),
        _ => {
            return Err(Error::Dataset {
                path: path.to_path_buf(),
                message: format!("line {lno}: missing label line (expected `node ...` or `graph ...`)"),
            })
        }
    };

    let mut pairs = Vec::new();
    for (lno, line) in lines {
        let ends: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(lno, format!("bad edge: {e}")))?;
        let [u, v] = ends[..] else {
            return Err(parse_err(lno, "edge line must be `u v`".into()));
        };
        if u == v || u >= n || v >= n {
            return Err(parse_err(lno, format!("invalid edge ({u}, {v})")));
        }
        pairs.push((u, v));
    }
    let graph = Graph::new(n, EdgeSet::from_pairs(pairs)?, features, labels)?;
    Ok((graph, c))
}
