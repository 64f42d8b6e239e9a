//! The crawled state graph and its per-user restrictions.
//!
//! Vertices are deduplicated client-side states; an edge is an (action,
//! target) pair performed in its source state. The omni crawl produces the
//! canonical graph; each user model sees the subgraph reachable from the
//! start state through edges it can traverse.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dom::{DomSnapshot, NodePath};
use crate::equivalence::{extend_template, pipeline_compare, template_compare, PageTemplate, Strategy};
use crate::users::{edge_score, AbilityScore, ActionKind, StateContext, Target, UserModel, OMNI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u32);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("nondeterministic transition: ({from}, {action}, {target}) leads to {existing} and {observed}")]
    NondeterministicTransition {
        from: StateId,
        action: ActionKind,
        target: NodePath,
        existing: StateId,
        observed: StateId,
    },
    #[error("edge endpoint {0} is not in the graph")]
    MissingState(StateId),
    #[error("path is disconnected at edge {0}")]
    DisconnectedPath(usize),
}

/// Best route to a state for one user model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessPath {
    pub score: f64,
    /// Indices into the owning graph's edge list.
    pub edges: Vec<usize>,
    /// States visited, starting with the start state.
    pub states: Vec<StateId>,
}

#[derive(Debug, Clone)]
pub struct State {
    pub id: StateId,
    pub snapshot: DomSnapshot,
    pub template: PageTemplate,
    pub targets: Vec<Target>,
    /// Filled by user evaluation, keyed by model name.
    pub access_paths: BTreeMap<String, AccessPath>,
}

impl State {
    pub fn context(&self) -> StateContext<'_> {
        StateContext::new(&self.targets)
    }

    pub fn target(&self, path: &NodePath) -> Option<&Target> {
        self.targets.iter().find(|t| &t.node_path == path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: StateId,
    pub to: StateId,
    pub action: ActionKind,
    pub target: Target,
    pub scores: BTreeMap<String, AbilityScore>,
}

impl Edge {
    pub fn new(from: StateId, to: StateId, action: ActionKind, target: Target) -> Self {
        Edge {
            from,
            to,
            action,
            target,
            scores: BTreeMap::new(),
        }
    }

    pub fn identity(&self) -> (StateId, &ActionKind, &NodePath) {
        (self.from, &self.action, &self.target.node_path)
    }
}

#[derive(Debug, Clone)]
pub struct StateGraph {
    pub states: BTreeMap<StateId, State>,
    pub edges: Vec<Edge>,
    pub start: StateId,
    /// User model the graph belongs to; `omni` for the canonical graph.
    pub owner: String,
}

impl StateGraph {
    /// Graph holding only the start state `0`.
    pub fn new(start: DomSnapshot, template: PageTemplate) -> Self {
        let id = StateId(0);
        let mut states = BTreeMap::new();
        states.insert(
            id,
            State {
                id,
                snapshot: start,
                template,
                targets: Vec::new(),
                access_paths: BTreeMap::new(),
            },
        );
        StateGraph {
            states,
            edges: Vec::new(),
            start: id,
            owner: OMNI.to_string(),
        }
    }

    pub fn state(&self, id: StateId) -> Option<&State> {
        self.states.get(&id)
    }

    pub fn state_mut(&mut self, id: StateId) -> Option<&mut State> {
        self.states.get_mut(&id)
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_ids(&self) -> BTreeSet<StateId> {
        self.states.keys().copied().collect()
    }

    /// Existing state equivalent to `candidate`, checked in id order.
    pub fn find_equivalent(&self, candidate: &DomSnapshot, strategy: &Strategy) -> Option<StateId> {
        self.states.values().find_map(|s| {
            let same = match strategy {
                Strategy::Pipeline(cfg) => pipeline_compare(&s.snapshot, candidate, cfg),
                Strategy::Template => template_compare(&s.template, &s.snapshot, candidate),
            };
            same.then_some(s.id)
        })
    }

    /// Maps `candidate` to an existing state or stores it as a new one.
    /// Under templating the new state's template extends `parent`'s.
    pub fn insert_state(
        &mut self,
        candidate: DomSnapshot,
        strategy: &Strategy,
        parent: Option<StateId>,
    ) -> (StateId, bool) {
        if let Some(id) = self.find_equivalent(&candidate, strategy) {
            return (id, false);
        }
        let template = match (strategy, parent.and_then(|p| self.states.get(&p))) {
            (Strategy::Template, Some(p)) => extend_template(&p.template, &candidate),
            _ => PageTemplate::trivial(&candidate),
        };
        let id = self.next_id();
        self.states.insert(
            id,
            State {
                id,
                snapshot: candidate,
                template,
                targets: Vec::new(),
                access_paths: BTreeMap::new(),
            },
        );
        (id, true)
    }

    fn next_id(&self) -> StateId {
        self.states
            .keys()
            .next_back()
            .map(|id| StateId(id.0 + 1))
            .unwrap_or(StateId(0))
    }

    /// Appends `e` unless an edge with the same (from, action, target) is
    /// present. Returns whether the edge was added. A repeat identity with a
    /// different destination keeps the first destination and reports the
    /// conflict.
    pub fn add_edge(&mut self, e: Edge) -> Result<bool, GraphError> {
        for endpoint in [e.from, e.to] {
            if !self.states.contains_key(&endpoint) {
                return Err(GraphError::MissingState(endpoint));
            }
        }
        if let Some(existing) = self.edges.iter().find(|x| x.identity() == e.identity()) {
            if existing.to == e.to {
                return Ok(false);
            }
            return Err(GraphError::NondeterministicTransition {
                from: e.from,
                action: e.action.clone(),
                target: e.target.node_path.clone(),
                existing: existing.to,
                observed: e.to,
            });
        }
        self.edges.push(e);
        Ok(true)
    }

    pub fn outgoing(&self, id: StateId) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges.iter().enumerate().filter(move |(_, e)| e.from == id)
    }

    pub fn incoming(&self, id: StateId) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges.iter().enumerate().filter(move |(_, e)| e.to == id)
    }

    /// Score of edge `i` for `u`, evaluated in the edge's source state.
    pub fn score_edge(&self, u: &UserModel, e: &Edge) -> AbilityScore {
        let targets: &[Target] = self
            .states
            .get(&e.from)
            .map(|s| s.targets.as_slice())
            .unwrap_or(&[]);
        edge_score(u, &e.action, &e.target, &StateContext::new(targets))
    }

    pub fn edge_totals(&self, u: &UserModel) -> Vec<f64> {
        self.edges.iter().map(|e| self.score_edge(u, e).total).collect()
    }

    /// `#id` when the target element has one in the edge's source state,
    /// `window` for page-level actions, otherwise its node path.
    pub fn target_label(&self, e: &Edge) -> String {
        if e.target.is_window() {
            return "window".into();
        }
        self.states
            .get(&e.from)
            .and_then(|s| s.snapshot.node(&e.target.node_path))
            .and_then(|n| n.id())
            .map(|id| format!("#{id}"))
            .unwrap_or_else(|| e.target.node_path.to_string())
    }

    pub fn edge_label(&self, e: &Edge) -> String {
        format!("{}@{}", e.action, self.target_label(e))
    }
}

/// States reachable from the start through edges `u` can traverse, and
/// exactly those edges.
pub fn user_subgraph(g_omni: &StateGraph, u: &UserModel) -> StateGraph {
    let totals = g_omni.edge_totals(u);
    let mut reached = BTreeSet::from([g_omni.start]);
    let mut queue = VecDeque::from([g_omni.start]);
    while let Some(s) = queue.pop_front() {
        for (i, e) in g_omni.outgoing(s) {
            if totals[i] > 0.0 && reached.insert(e.to) {
                queue.push_back(e.to);
            }
        }
    }
    let states = g_omni
        .states
        .iter()
        .filter(|(id, _)| reached.contains(id))
        .map(|(id, s)| (*id, s.clone()))
        .collect();
    let edges = g_omni
        .edges
        .iter()
        .zip(&totals)
        .filter(|(e, t)| **t > 0.0 && reached.contains(&e.from))
        .map(|(e, _)| e.clone())
        .collect();
    StateGraph {
        states,
        edges,
        start: g_omni.start,
        owner: u.name.clone(),
    }
}

/// Product of the edges' totals for `u`. The path must start at the graph's
/// start state and chain; the empty path scores 1.
pub fn path_score(g: &StateGraph, u: &UserModel, path: &[Edge]) -> Result<f64, GraphError> {
    let mut at = g.start;
    let mut score = 1.0;
    for (i, e) in path.iter().enumerate() {
        if e.from != at {
            return Err(GraphError::DisconnectedPath(i));
        }
        score *= g.score_edge(u, e).total;
        at = e.to;
    }
    Ok(score)
}

/// Search label; ordered so that the best label is the greatest.
#[derive(Debug, Clone)]
struct Label {
    score: f64,
    edges: Vec<usize>,
    states: Vec<StateId>,
}

impl Label {
    fn rank(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.edges.len().cmp(&self.edges.len()))
            .then_with(|| other.states.cmp(&self.states))
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.rank(other) == Ordering::Equal
    }
}
impl Eq for Label {}
impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank(other)
    }
}

/// Highest-scoring path from the start to every state `u` can reach.
///
/// Edge scores never exceed 1, so extending a path never improves it and a
/// best-first search settles each state once. Ties go to fewer edges, then
/// the lexicographically smallest state sequence.
pub fn best_paths(g: &StateGraph, u: &UserModel) -> BTreeMap<StateId, AccessPath> {
    let totals = g.edge_totals(u);
    let mut settled: BTreeMap<StateId, AccessPath> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    heap.push(Label {
        score: 1.0,
        edges: Vec::new(),
        states: vec![g.start],
    });
    while let Some(label) = heap.pop() {
        let at = *label.states.last().expect("labels are non-empty");
        if settled.contains_key(&at) {
            continue;
        }
        for (i, e) in g.outgoing(at) {
            if totals[i] > 0.0 && !settled.contains_key(&e.to) && e.to != at {
                let mut edges = label.edges.clone();
                edges.push(i);
                let mut states = label.states.clone();
                states.push(e.to);
                heap.push(Label {
                    score: label.score * totals[i],
                    edges,
                    states,
                });
            }
        }
        settled.insert(
            at,
            AccessPath {
                score: label.score,
                edges: label.edges,
                states: label.states,
            },
        );
    }
    settled
}

/// Best score for reaching `v`, with a witnessing path; `(0, None)` when `u`
/// cannot reach it.
pub fn best_path_score(g: &StateGraph, u: &UserModel, v: StateId) -> (f64, Option<AccessPath>) {
    match best_paths(g, u).remove(&v) {
        Some(p) => (p.score, Some(p)),
        None => (0.0, None),
    }
}
