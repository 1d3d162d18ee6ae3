//! Graphviz output for gradient graphs.

use std::fmt::Write;

use crate::bottleneck::{BottleneckSolution, EdgeKind};

fn fmt_value(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.3}")
    } else {
        "inf".to_owned()
    }
}

/// DOT text for `solution`. Links are boxes, flows grey ellipses. Backward
/// edges are dashed and only drawn when asked for. Output depends only on the
/// solution, so the same network always gives the same bytes.
pub fn to_dot(solution: &BottleneckSolution, backward_edges: bool) -> String {
    let net = solution.network();
    let mut out = String::from("digraph bottleneck_structure {\n");
    for (l, link) in net.links().iter().enumerate() {
        let _ = writeln!(
            out,
            "  \"{}\" [shape=box label=\"{}\\ns={}\"];",
            link.id,
            link.id,
            fmt_value(solution.fair_share_at(l))
        );
    }
    for (f, flow) in net.flows().iter().enumerate() {
        let _ = writeln!(
            out,
            "  \"{}\" [shape=ellipse style=filled fillcolor=gray label=\"{}\\nr={}\"];",
            flow.id,
            flow.id,
            fmt_value(solution.rate_at(f))
        );
    }
    for (a, b, kind) in solution.graph().edges() {
        let (a, b) = (solution.name(a), solution.name(b));
        match kind {
            EdgeKind::Bottleneck | EdgeKind::Traversal => {
                let _ = writeln!(out, "  \"{a}\" -> \"{b}\";");
            }
            EdgeKind::Backward if backward_edges => {
                let _ = writeln!(out, "  \"{a}\" -> \"{b}\" [style=dashed];");
            }
            EdgeKind::Backward => {}
        }
    }
    out.push_str("}\n");
    out
}

/// Number of vertices and edges a DOT rendering would draw.
pub fn dot_size(solution: &BottleneckSolution, backward_edges: bool) -> (usize, usize) {
    let g = solution.graph();
    let edges = g
        .edges()
        .iter()
        .filter(|e| backward_edges || e.2 != EdgeKind::Backward)
        .count();
    (g.num_links() + g.num_flows(), edges)
}
