//! Reachability differential between a baseline user and a disability
//! model, and ease-of-use scoring.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{best_paths, AccessPath, Edge, StateGraph, StateId};
use crate::users::UserModel;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("graph `{owner}` was not derived from the omni graph: {reason}")]
    GraphMismatch { owner: String, reason: String },
}

/// Why the disability model cannot enter a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingCapability {
    /// An enabling edge uses an action the model cannot perform.
    ActionExcluded,
    /// The model has the action but cannot perceive, reach or operate the
    /// target.
    TargetExcluded,
    /// Every enabling edge is usable but starts in a state the model cannot
    /// reach.
    UnreachableSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub state: StateId,
    pub disabled_user: String,
    pub baseline_user: String,
    /// Indices into the omni graph's edges: baseline-traversable edges from
    /// baseline-reachable states into `state`.
    pub enabling_edges: Vec<usize>,
    pub missing_capability: MissingCapability,
    pub remediation_hint: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReachabilityMode {
    /// The disability model must reach the source of some usable edge.
    #[default]
    Transitive,
    /// Only the incoming edges are inspected; their sources need not be
    /// reachable for the disability model.
    IncomingEdge,
}

fn same_edge(a: &Edge, b: &Edge) -> bool {
    a.identity() == b.identity() && a.to == b.to
}

fn check_derived(g_omni: &StateGraph, g: &StateGraph) -> Result<(), AnalysisError> {
    let mismatch = |reason: String| AnalysisError::GraphMismatch {
        owner: g.owner.clone(),
        reason,
    };
    if g.start != g_omni.start {
        return Err(mismatch(format!("start {} differs from {}", g.start, g_omni.start)));
    }
    for (id, s) in &g.states {
        match g_omni.state(*id) {
            Some(o) if o.snapshot.raw_markup == s.snapshot.raw_markup => {}
            _ => return Err(mismatch(format!("state {id} is not in the omni graph"))),
        }
    }
    for e in &g.edges {
        if !g_omni.edges.iter().any(|o| same_edge(o, e)) {
            return Err(mismatch(format!("edge {}->{} is not in the omni graph", e.from, e.to)));
        }
    }
    Ok(())
}

/// States the baseline reaches that the disability model `d` cannot.
///
/// `g_n` and `g_d` must be subgraphs of `g_omni` for the baseline and for
/// `d`. Results are ordered by state id.
pub fn detect_violations(
    g_omni: &StateGraph,
    g_n: &StateGraph,
    g_d: &StateGraph,
    d: &UserModel,
    mode: ReachabilityMode,
) -> Result<Vec<Violation>, AnalysisError> {
    check_derived(g_omni, g_n)?;
    check_derived(g_omni, g_d)?;
    let v_n = g_n.state_ids();
    let v_d = g_d.state_ids();
    let d_totals = g_omni.edge_totals(d);

    let mut out = Vec::new();
    for &v in &v_n {
        if v == g_omni.start {
            continue;
        }
        let violated = match mode {
            ReachabilityMode::Transitive => !v_d.contains(&v),
            ReachabilityMode::IncomingEdge => !g_omni.incoming(v).any(|(i, _)| d_totals[i] > 0.0),
        };
        if !violated {
            continue;
        }
        let enabling: Vec<usize> = g_omni
            .incoming(v)
            .filter(|(_, e)| v_n.contains(&e.from) && g_n.edges.iter().any(|x| same_edge(x, e)))
            .map(|(i, _)| i)
            .collect();
        debug_assert!(!enabling.is_empty(), "baseline-reachable state without an enabling edge");

        let excluded_action = enabling.iter().find(|&&i| !d.allows(&g_omni.edges[i].action));
        let excluded_target = enabling.iter().find(|&&i| d_totals[i] == 0.0);
        let (missing_capability, remediation_hint) = match (excluded_action, excluded_target) {
            (Some(&i), _) => {
                let e = &g_omni.edges[i];
                (
                    MissingCapability::ActionExcluded,
                    format!(
                        "{} is unavailable to {} users; add an alternative on {} that responds to {}",
                        e.action,
                        d.name,
                        g_omni.target_label(e),
                        alternative_actions(d)
                    ),
                )
            }
            (None, Some(&i)) => {
                let e = &g_omni.edges[i];
                let s = g_omni.score_edge(d, e);
                let what = if s.perceive == 0.0 {
                    "perceivable (visible, labeled, large and contrasting enough)"
                } else if s.navigate == 0.0 {
                    "reachable in the focus order"
                } else {
                    "operable with the same action"
                };
                (
                    MissingCapability::TargetExcluded,
                    format!("make {} {} for {} users", g_omni.target_label(e), what, d.name),
                )
            }
            (None, None) => (
                MissingCapability::UnreachableSource,
                format!("the states leading to state {v} are themselves unreachable for {} users", d.name),
            ),
        };
        out.push(Violation {
            state: v,
            disabled_user: d.name.clone(),
            baseline_user: g_n.owner.clone(),
            enabling_edges: enabling,
            missing_capability,
            remediation_hint,
        });
    }
    Ok(out)
}

fn alternative_actions(d: &UserModel) -> String {
    let names: Vec<String> = d
        .allowed_actions
        .iter()
        .map(|a| format!("{a:?}").to_lowercase())
        .collect();
    if names.is_empty() {
        "no action".into()
    } else {
        names.join("/")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub score: f64,
    pub path: Option<AccessPath>,
}

/// Baseline state that another model reaches only with much more effort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsabilityGap {
    pub user: String,
    pub state: StateId,
    pub baseline_score: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsabilityScorecard {
    pub baseline: String,
    pub gap_ratio: f64,
    /// user → state → best access score. Every state of the omni graph
    /// appears; unreachable states score 0.
    pub scores: BTreeMap<String, BTreeMap<StateId, ScoreEntry>>,
    pub gaps: Vec<UsabilityGap>,
}

impl UsabilityScorecard {
    pub fn score(&self, user: &str, state: StateId) -> f64 {
        self.scores
            .get(user)
            .and_then(|m| m.get(&state))
            .map(|e| e.score)
            .unwrap_or(0.0)
    }
}

pub const DEFAULT_GAP_RATIO: f64 = 4.0;

/// Best access score of every state for every user. A state is a usability
/// gap for user `u` when `u` reaches it and the baseline's score is at least
/// `gap_ratio` times `u`'s.
pub fn score_usability(g_omni: &StateGraph, users: &[UserModel], baseline: &str, gap_ratio: f64) -> UsabilityScorecard {
    let ids: BTreeSet<StateId> = g_omni.state_ids();
    let mut scores: BTreeMap<String, BTreeMap<StateId, ScoreEntry>> = BTreeMap::new();
    for u in users {
        let mut best = best_paths(g_omni, u);
        let per_state: BTreeMap<StateId, ScoreEntry> = ids
            .iter()
            .map(|id| {
                let entry = match best.remove(id) {
                    Some(p) => ScoreEntry {
                        score: p.score,
                        path: Some(p),
                    },
                    None => ScoreEntry { score: 0.0, path: None },
                };
                (*id, entry)
            })
            .collect();
        scores.insert(u.name.clone(), per_state);
    }

    let mut gaps = Vec::new();
    if let Some(base) = scores.get(baseline) {
        for (name, per_state) in &scores {
            if name == baseline {
                continue;
            }
            for (id, entry) in per_state {
                let n = base[id].score;
                if entry.score > 0.0 && n >= gap_ratio * entry.score {
                    gaps.push(UsabilityGap {
                        user: name.clone(),
                        state: *id,
                        baseline_score: n,
                        score: entry.score,
                    });
                }
            }
        }
    }
    UsabilityScorecard {
        baseline: baseline.to_string(),
        gap_ratio,
        scores,
        gaps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::{parse_snapshot, ElementProperties, NodePath};
    use crate::equivalence::{EquivalenceConfig, PageTemplate, Strategy};
    use crate::graph::user_subgraph;
    use crate::users::{ActionKind, Target};

    fn button(i: usize, handlers: &[&str]) -> Target {
        Target::new(
            NodePath(vec![i]),
            ElementProperties {
                focusable: true,
                accessible_name: Some(format!("b{i}")),
                ..Default::default()
            },
        )
        .with_handlers(handlers.iter().copied())
    }

    /// 0 -click-> 1 -mouseover-> 2, and 0 -key-> 3 where the key target is
    /// twelfth in the tab order.
    fn graph() -> StateGraph {
        let mut g = StateGraph::new(parse_snapshot("<p>0</p>", 0).unwrap(), PageTemplate::default());
        let strategy = Strategy::Pipeline(EquivalenceConfig::default());
        for n in 1..4 {
            g.insert_state(parse_snapshot(&"<i>x</i>".repeat(n + 1), 0).unwrap(), &strategy, None);
        }
        let targets: Vec<Target> = (0..12).map(|i| button(i, &["click", "keydown"])).collect();
        g.state_mut(StateId(0)).unwrap().targets = targets.clone();
        let hover = button(0, &["mouseover"]);
        g.state_mut(StateId(1)).unwrap().targets = vec![hover.clone()];
        g.add_edge(Edge::new(StateId(0), StateId(1), ActionKind::Click, targets[0].clone())).unwrap();
        g.add_edge(Edge::new(StateId(1), StateId(2), ActionKind::MouseOver, hover)).unwrap();
        g.add_edge(Edge::new(StateId(0), StateId(3), ActionKind::key("Enter"), targets[11].clone())).unwrap();
        g
    }

    #[test]
    fn classifies_and_orders_violations() {
        let g = graph();
        let n = UserModel::non_disabled();
        let d = UserModel::keyboard();
        let (gn, gd) = (user_subgraph(&g, &n), user_subgraph(&g, &d));
        let v = detect_violations(&g, &gn, &gd, &d, ReachabilityMode::Transitive).unwrap();
        let states: Vec<_> = v.iter().map(|x| (x.state, x.missing_capability)).collect();
        assert_eq!(
            states,
            vec![
                (StateId(1), MissingCapability::ActionExcluded),
                (StateId(2), MissingCapability::ActionExcluded)
            ]
        );
        assert_eq!(v[0].enabling_edges, vec![0]);
        assert!(v[0].remediation_hint.contains("click"));

        // State 2's only edge is a mouseover, so the literal reading flags it
        // too; state 1 is flagged for the click.
        let strict = detect_violations(&g, &gn, &gd, &d, ReachabilityMode::IncomingEdge).unwrap();
        assert_eq!(strict.len(), 2);
    }

    #[test]
    fn target_exclusion_and_unreachable_sources() {
        let mut g = graph();
        // Make the mouseover edge a key edge the keyboard user could use if
        // it could get to state 1.
        g.edges[1].action = ActionKind::key("Enter");
        g.edges[1].target.handlers.insert("keydown".into());
        g.state_mut(StateId(1)).unwrap().targets[0].handlers.insert("keydown".into());
        let n = UserModel::non_disabled();
        let d = UserModel::keyboard();
        let (gn, gd) = (user_subgraph(&g, &n), user_subgraph(&g, &d));
        let v = detect_violations(&g, &gn, &gd, &d, ReachabilityMode::Transitive).unwrap();
        assert_eq!(v[1].state, StateId(2));
        assert_eq!(v[1].missing_capability, MissingCapability::UnreachableSource);
        let strict = detect_violations(&g, &gn, &gd, &d, ReachabilityMode::IncomingEdge).unwrap();
        assert_eq!(strict.iter().map(|x| x.state).collect::<Vec<_>>(), vec![StateId(1)]);

        let sr = UserModel::screen_reader();
        g.state_mut(StateId(0)).unwrap().targets[11].properties.accessible_name = None;
        g.edges[2].target.properties.accessible_name = None;
        let gsr = user_subgraph(&g, &sr);
        let v = detect_violations(&g, &gn, &gsr, &sr, ReachabilityMode::Transitive).unwrap();
        let s3 = v.iter().find(|x| x.state == StateId(3)).unwrap();
        assert_eq!(s3.missing_capability, MissingCapability::TargetExcluded);
        assert!(s3.remediation_hint.contains("perceivable"));
    }

    #[test]
    fn rejects_foreign_graphs() {
        let g = graph();
        let d = UserModel::keyboard();
        let gn = user_subgraph(&g, &UserModel::non_disabled());
        let mut other = user_subgraph(&g, &d);
        other.edges.push(Edge::new(StateId(0), StateId(0), ActionKind::Blur, button(5, &[])));
        let err = detect_violations(&g, &gn, &other, &d, ReachabilityMode::Transitive).unwrap_err();
        assert!(matches!(err, AnalysisError::GraphMismatch { .. }));
    }

    #[test]
    fn twelve_tabs_is_a_gap() {
        let g = graph();
        let users = [UserModel::non_disabled(), UserModel::keyboard()];
        let card = score_usability(&g, &users, "nondisabled", DEFAULT_GAP_RATIO);
        assert_eq!(card.score("nondisabled", StateId(3)), 1.0);
        assert_eq!(card.score("keyboard", StateId(3)), 1.0 / 12.0);
        assert_eq!(card.score("keyboard", StateId(0)), 1.0);
        assert_eq!(card.score("keyboard", StateId(2)), 0.0);
        assert_eq!(
            card.gaps,
            vec![UsabilityGap {
                user: "keyboard".into(),
                state: StateId(3),
                baseline_score: 1.0,
                score: 1.0 / 12.0
            }]
        );
        let lax = score_usability(&g, &users, "nondisabled", 13.0);
        assert!(lax.gaps.is_empty());
    }
}
