//! Graphviz export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::graph::{StateGraph, StateId};

/// Per-user decoration: node scores, violation states and the edges the
/// user cannot traverse.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overlay {
    pub user: String,
    pub scores: BTreeMap<StateId, f64>,
    pub violations: BTreeSet<StateId>,
    pub blocked_edges: BTreeSet<usize>,
}

pub const VIOLATION_FILL: &str = "#f4cccc";

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn export_dot(g: &StateGraph, overlay: Option<&Overlay>) -> String {
    let mut out = String::new();
    let name = match overlay {
        Some(o) => format!("{}_{}", g.owner, o.user),
        None => g.owner.clone(),
    };
    writeln!(out, "digraph {} {{", quote(&name)).unwrap();
    writeln!(out, "  rankdir=LR;").unwrap();
    writeln!(out, "  node [shape=circle, fontname=\"Helvetica\"];").unwrap();
    writeln!(out, "  edge [fontname=\"Helvetica\", fontsize=10];").unwrap();

    for id in g.states.keys() {
        let mut label = id.to_string();
        let mut attrs = Vec::new();
        if let Some(o) = overlay {
            let score = o.scores.get(id).copied().unwrap_or(0.0);
            label.push_str(&format!("\n{score:.3}"));
            if o.violations.contains(id) {
                attrs.push("style=filled".to_string());
                attrs.push(format!("fillcolor={}", quote(VIOLATION_FILL)));
                attrs.push("color=\"#cc0000\"".to_string());
                attrs.push("penwidth=2".to_string());
            } else if score == 0.0 {
                attrs.push("color=\"#999999\"".to_string());
            }
        }
        if *id == g.start {
            attrs.push("shape=doublecircle".to_string());
        }
        attrs.insert(0, format!("label={}", quote(&label)));
        writeln!(out, "  s{} [{}];", id, attrs.join(", ")).unwrap();
    }

    for (i, e) in g.edges.iter().enumerate() {
        let mut attrs = vec![format!("label={}", quote(&g.edge_label(e)))];
        if overlay.is_some_and(|o| o.blocked_edges.contains(&i)) {
            attrs.push("style=dashed".to_string());
            attrs.push("color=\"#999999\"".to_string());
        }
        writeln!(out, "  s{} -> s{} [{}];", e.from, e.to, attrs.join(", ")).unwrap();
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::parse_snapshot;
    use crate::equivalence::PageTemplate;

    #[test]
    fn single_state() {
        let g = StateGraph::new(parse_snapshot("<p>x</p>", 0).unwrap(), PageTemplate::default());
        let dot = export_dot(&g, None);
        assert_eq!(
            dot,
            "digraph \"omni\" {\n  rankdir=LR;\n  node [shape=circle, fontname=\"Helvetica\"];\n  \
             edge [fontname=\"Helvetica\", fontsize=10];\n  s0 [label=\"0\", shape=doublecircle];\n}\n"
        );
    }

    #[test]
    fn quoting() {
        assert_eq!(quote("a\"b\\c\nd"), "\"a\\\"b\\\\c\\nd\"");
    }
}
