use std::fmt::Write;

use crate::graph::{EdgeSet, Graph, Perturbation};

/// Renders `g` as an undirected DOT graph.
///
/// Explanatory edges are drawn bold red, added edges dashed blue and
/// deleted edges dotted gray. Deleted edges are listed after the kept ones
/// so the first `|E|` edge statements always describe the drawn graph.
/// Output depends only on the inputs: nodes and edges are emitted in
/// canonical order.
pub fn export_dot(g: &Graph, e_s: &EdgeSet, p: Option<&Perturbation>) -> String {
    let empty = Perturbation::default();
    let p = p.unwrap_or(&empty);
    let mut out = String::from("graph G {\n  node [shape=circle, fontsize=10];\n");
    for v in 0..g.node_count() {
        let _ = writeln!(out, "  {v};");
    }
    for &(u, v) in g.edges() {
        if p.deletions.contains((u, v)) {
            continue;
        }
        let style = if e_s.contains((u, v)) {
            " [color=red, penwidth=2.5]"
        } else {
            ""
        };
        let _ = writeln!(out, "  {u} -- {v}{style};");
    }
    for &(u, v) in &p.additions {
        let _ = writeln!(out, "  {u} -- {v} [style=dashed, color=blue];");
    }
    for &(u, v) in &p.deletions {
        let _ = writeln!(out, "  {u} -- {v} [style=dotted, color=gray];");
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph() -> Graph {
        let edges = EdgeSet::from_pairs([(0, 1), (1, 2), (2, 3)]).unwrap();
        Graph::with_unit_features(4, edges, 1, crate::graph::Labels::Graph(0)).unwrap()
    }

    #[test]
    fn styles_and_counts() {
        let g = path_graph();
        let e_s = EdgeSet::from_pairs([(1, 2)]).unwrap();
        let p = Perturbation::new(
            EdgeSet::from_pairs([(0, 3)]).unwrap(),
            EdgeSet::from_pairs([(2, 3)]).unwrap(),
        );
        let dot = export_dot(&g, &e_s, Some(&p));
        assert_eq!(dot.matches(" -- ").count(), g.edge_count() + 1);
        assert!(dot.contains("1 -- 2 [color=red, penwidth=2.5];"));
        assert!(dot.contains("0 -- 3 [style=dashed, color=blue];"));
        assert!(dot.contains("2 -- 3 [style=dotted, color=gray];"));
        assert!(dot.starts_with("graph G {") && dot.ends_with("}\n"));
        assert_eq!(dot, export_dot(&g, &e_s, Some(&p)));
    }

    #[test]
    fn plain_graph_has_one_statement_per_edge() {
        let g = path_graph();
        let dot = export_dot(&g, &EdgeSet::new(), None);
        assert_eq!(dot.matches(" -- ").count(), 3);
        assert!(!dot.contains("color"));
    }
}
