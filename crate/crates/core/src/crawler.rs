//! Breadth-first exploration of client-side interactions and replay of
//! restricted user models over the resulting graph.

use std::collections::{BTreeMap, VecDeque};
use std::thread;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dom::{DomSnapshot, ElementProperties, NodePath};
use crate::equivalence::{build_template, pipeline_compare, template_compare, CaptureSource, EquivalenceError, PageTemplate, Strategy, TimeMap};
use crate::graph::{best_paths, user_subgraph, AccessPath, Edge, GraphError, StateGraph, StateId};
use crate::users::{AbilityScore, ActionKind, Target, UserModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriverError {
    #[error("cannot load {uri}: {reason}")]
    Load { uri: String, reason: String },
    #[error("no element at {0}")]
    UnresolvedTarget(NodePath),
    #[error("element not interactable: {0}")]
    NotInteractable(String),
    #[error("stale element: {0}")]
    StaleElement(String),
    #[error("script timed out: {0}")]
    ScriptTimeout(String),
    #[error("session is no longer valid: {0}")]
    StaleSession(String),
    #[error("{0}")]
    Backend(String),
}

/// Backend that renders pages and performs interactions. Simulated and live
/// browsers implement the same contract.
pub trait PageDriver {
    fn load(&mut self, uri: &str) -> Result<DomSnapshot, DriverError>;
    /// Interactive elements of the current page with their properties and
    /// listener metadata. The window pseudo-target is not included.
    fn enumerate_targets(&mut self) -> Result<Vec<Target>, DriverError>;
    /// Performs an element-level action and captures the settled page.
    fn execute(&mut self, action: &ActionKind, target: &Target) -> Result<DomSnapshot, DriverError>;
    fn reload(&mut self) -> Result<DomSnapshot, DriverError>;
    fn wait(&mut self, ms: u64) -> Result<DomSnapshot, DriverError>;
    fn element_properties(&mut self, path: &NodePath) -> Result<ElementProperties, DriverError>;
    fn close(&mut self) -> Result<(), DriverError> {
        Ok(())
    }
}

impl<D: PageDriver + ?Sized> PageDriver for &mut D {
    fn load(&mut self, uri: &str) -> Result<DomSnapshot, DriverError> {
        (**self).load(uri)
    }
    fn enumerate_targets(&mut self) -> Result<Vec<Target>, DriverError> {
        (**self).enumerate_targets()
    }
    fn execute(&mut self, action: &ActionKind, target: &Target) -> Result<DomSnapshot, DriverError> {
        (**self).execute(action, target)
    }
    fn reload(&mut self) -> Result<DomSnapshot, DriverError> {
        (**self).reload()
    }
    fn wait(&mut self, ms: u64) -> Result<DomSnapshot, DriverError> {
        (**self).wait(ms)
    }
    fn element_properties(&mut self, path: &NodePath) -> Result<ElementProperties, DriverError> {
        (**self).element_properties(path)
    }
    fn close(&mut self) -> Result<(), DriverError> {
        (**self).close()
    }
}

/// Runs `action` through the matching driver entry point.
pub fn perform<D: PageDriver + ?Sized>(driver: &mut D, action: &ActionKind, target: &Target) -> Result<DomSnapshot, DriverError> {
    match action {
        ActionKind::Wait(ms) => driver.wait(*ms),
        ActionKind::Reload => driver.reload(),
        _ => driver.execute(action, target),
    }
}

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("failed to load {uri}")]
    LoadFailure {
        uri: String,
        #[source]
        source: DriverError,
    },
    #[error("invalid crawl configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Template(#[from] EquivalenceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrawlConfig {
    pub max_states: usize,
    pub max_depth: usize,
    /// Milliseconds a capture may wait for the page to settle.
    pub stabilization_wait: u64,
    pub template_reloads: usize,
    pub strategy: Strategy,
    /// Element-level actions tried on each target.
    pub actions: Vec<ActionKind>,
    /// Page-level actions tried once per state.
    pub state_actions: Vec<ActionKind>,
    /// Try every action on every target, ignoring listener metadata.
    pub exhaustive: bool,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        CrawlConfig {
            max_states: 256,
            max_depth: 16,
            stabilization_wait: 500,
            template_reloads: 3,
            strategy: Strategy::Template,
            actions: vec![
                ActionKind::Click,
                ActionKind::MouseOver,
                ActionKind::Focus,
                ActionKind::key("Enter"),
                ActionKind::key("Space"),
            ],
            state_actions: vec![ActionKind::Wait(1000), ActionKind::Reload],
            exhaustive: false,
        }
    }
}

impl CrawlConfig {
    pub fn validate(&self) -> Result<(), CrawlError> {
        if self.max_states == 0 || self.max_depth == 0 {
            return Err(CrawlError::InvalidConfig("max_states and max_depth must be positive".into()));
        }
        if self.stabilization_wait == 0 {
            return Err(CrawlError::InvalidConfig("stabilization_wait must be positive".into()));
        }
        if self.template_reloads < 2 {
            return Err(CrawlError::InvalidConfig("template_reloads must be at least 2".into()));
        }
        if self.state_actions.contains(&ActionKind::Wait(0)) {
            return Err(CrawlError::InvalidConfig("wait duration must be positive".into()));
        }
        if let Some(a) = self.actions.iter().find(|a| a.is_page_level()) {
            return Err(CrawlError::InvalidConfig(format!("{a} is a page-level action")));
        }
        if let Some(a) = self.state_actions.iter().find(|a| !a.is_page_level()) {
            return Err(CrawlError::InvalidConfig(format!("{a} is not a page-level action")));
        }
        Ok(())
    }

    fn attempts(&self, target: &Target, action: &ActionKind) -> bool {
        self.exhaustive
            || target.handles(action)
            || (*action == ActionKind::Focus && target.properties.focusable)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlStats {
    /// Frontier interactions performed.
    pub executions: usize,
    /// Interactions performed to restore a state before exploring it.
    pub replays: usize,
    /// Interactions that left the state unchanged on an unresponsive target.
    pub self_observations: usize,
    /// Interactions or restorations the driver could not complete.
    pub failures: usize,
    /// Restorations that did not arrive at the expected state.
    pub divergences: usize,
    pub nondeterministic_transitions: usize,
}

#[derive(Debug, Clone)]
pub struct CrawlResult {
    pub graph: StateGraph,
    /// Set when a budget stopped exploration early.
    pub truncated: bool,
    pub stats: CrawlStats,
}

#[derive(Debug, Clone)]
struct FrontierItem {
    state: StateId,
    target: Target,
    action: ActionKind,
}

/// True if `snap` is the stored state `id` under `strategy`.
fn is_state(g: &StateGraph, id: StateId, snap: &DomSnapshot, strategy: &Strategy) -> bool {
    g.state(id).is_some_and(|s| match strategy {
        Strategy::Pipeline(cfg) => pipeline_compare(&s.snapshot, snap, cfg),
        Strategy::Template => template_compare(&s.template, &s.snapshot, snap),
    })
}

struct Session<'a, D: PageDriver + ?Sized> {
    driver: &'a mut D,
    uri: &'a str,
    cfg: &'a CrawlConfig,
    graph: StateGraph,
    /// Discovery route of each state, used to restore it.
    routes: BTreeMap<StateId, Vec<(ActionKind, Target)>>,
    current: Option<StateId>,
    frontier: VecDeque<FrontierItem>,
    stats: CrawlStats,
    depth_limited: bool,
}

impl<D: PageDriver + ?Sized> Session<'_, D> {
    fn enqueue(&mut self, id: StateId) -> Result<(), DriverError> {
        let targets = self.driver.enumerate_targets()?;
        let depth = self.routes[&id].len();
        if depth < self.cfg.max_depth {
            for t in &targets {
                for a in &self.cfg.actions {
                    if self.cfg.attempts(t, a) {
                        self.frontier.push_back(FrontierItem {
                            state: id,
                            target: t.clone(),
                            action: a.clone(),
                        });
                    }
                }
            }
            for a in &self.cfg.state_actions {
                self.frontier.push_back(FrontierItem {
                    state: id,
                    target: Target::window(),
                    action: a.clone(),
                });
            }
        } else {
            self.depth_limited = true;
        }
        if let Some(s) = self.graph.state_mut(id) {
            s.targets = targets;
        }
        Ok(())
    }

    /// Brings the driver to state `id` by reloading the entry page and
    /// replaying the state's discovery route.
    fn restore(&mut self, id: StateId) -> bool {
        if self.current == Some(id) {
            return true;
        }
        self.current = None;
        let route = self.routes[&id].clone();
        let mut snap = match self.driver.load(self.uri) {
            Ok(s) => s,
            Err(e) => {
                warn!("restoring state {id}: {e}");
                self.stats.failures += 1;
                return false;
            }
        };
        for (action, target) in &route {
            self.stats.replays += 1;
            snap = match perform(self.driver, action, target) {
                Ok(s) => s,
                Err(e) => {
                    warn!("replaying {action} toward state {id}: {e}");
                    self.stats.failures += 1;
                    return false;
                }
            };
        }
        if !is_state(&self.graph, id, &snap, &self.cfg.strategy) {
            warn!("replay toward state {id} diverged");
            self.stats.divergences += 1;
            return false;
        }
        self.current = Some(id);
        true
    }

    fn run(mut self) -> Result<CrawlResult, CrawlError> {
        let mut truncated = false;
        while let Some(item) = self.frontier.pop_front() {
            if !self.restore(item.state) {
                continue;
            }
            self.current = None;
            let snap = match perform(self.driver, &item.action, &item.target) {
                Ok(s) => s,
                Err(e) => {
                    debug!("{} on {} in state {}: {e}", item.action, item.target.node_path, item.state);
                    self.stats.failures += 1;
                    continue;
                }
            };
            self.stats.executions += 1;

            let dest = match self.graph.find_equivalent(&snap, &self.cfg.strategy) {
                Some(id) => id,
                None if self.graph.state_count() >= self.cfg.max_states => {
                    info!("state budget of {} reached", self.cfg.max_states);
                    truncated = true;
                    break;
                }
                None => {
                    let (id, _) = self.graph.insert_state(snap, &self.cfg.strategy, Some(item.state));
                    let mut route = self.routes[&item.state].clone();
                    route.push((item.action.clone(), item.target.clone()));
                    self.routes.insert(id, route);
                    self.current = Some(id);
                    if let Err(e) = self.enqueue(id) {
                        warn!("enumerating targets of state {id}: {e}");
                        self.stats.failures += 1;
                    }
                    id
                }
            };
            self.current = Some(dest);

            if dest == item.state && !item.target.handles(&item.action) {
                self.stats.self_observations += 1;
                continue;
            }
            match self.graph.add_edge(Edge::new(item.state, dest, item.action, item.target)) {
                Ok(_) => {}
                Err(e @ GraphError::NondeterministicTransition { .. }) => {
                    warn!("{e}");
                    self.stats.nondeterministic_transitions += 1;
                }
                Err(e) => unreachable!("crawler only links stored states: {e}"),
            }
        }
        Ok(CrawlResult {
            graph: self.graph,
            truncated: truncated || self.depth_limited,
            stats: self.stats,
        })
    }
}

/// Builds the omni graph of the page at `uri`.
pub fn crawl<D: PageDriver + ?Sized>(driver: &mut D, uri: &str, cfg: &CrawlConfig) -> Result<CrawlResult, CrawlError> {
    cfg.validate()?;
    let load_failure = |source| CrawlError::LoadFailure {
        uri: uri.to_string(),
        source,
    };
    let s0 = driver.load(uri).map_err(load_failure)?;

    let template = match cfg.strategy {
        Strategy::Template => {
            let mut tm = TimeMap::new();
            tm.push(CaptureSource::InitialLoad, s0.clone());
            for _ in 0..cfg.template_reloads {
                tm.push(CaptureSource::Reload, driver.reload().map_err(load_failure)?);
            }
            tm.push(CaptureSource::Wait, driver.wait(cfg.stabilization_wait).map_err(load_failure)?);
            let t = build_template(&tm)?;
            debug!("start template has {} unstable regions", t.unstable_paths.len());
            t
        }
        Strategy::Pipeline(_) => PageTemplate::trivial(&s0),
    };

    let graph = StateGraph::new(s0, template);
    let start = graph.start;
    let mut session = Session {
        driver,
        uri,
        cfg,
        graph,
        routes: BTreeMap::from([(start, Vec::new())]),
        current: Some(start),
        frontier: VecDeque::new(),
        stats: CrawlStats::default(),
        depth_limited: false,
    };
    session.enqueue(start).map_err(load_failure)?;
    let result = session.run()?;
    info!(
        "crawl of {uri}: {} states, {} edges{}",
        result.graph.state_count(),
        result.graph.edges.len(),
        if result.truncated { " (truncated)" } else { "" }
    );
    Ok(result)
}

struct Evaluation {
    scores: Vec<AbilityScore>,
    paths: BTreeMap<StateId, AccessPath>,
}

/// Scores every edge for each user, records each state's best access path,
/// and returns the users' subgraphs keyed by model name. Only scores and
/// access paths are written to `g_omni`.
pub fn evaluate_users(g_omni: &mut StateGraph, users: &[UserModel]) -> BTreeMap<String, StateGraph> {
    let shared: &StateGraph = g_omni;
    let evaluations: Vec<Evaluation> = thread::scope(|scope| {
        let handles: Vec<_> = users
            .iter()
            .map(|u| {
                scope.spawn(move || Evaluation {
                    scores: shared.edges.iter().map(|e| shared.score_edge(u, e)).collect(),
                    paths: best_paths(shared, u),
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("user evaluation panicked"))
            .collect()
    });

    for (u, ev) in users.iter().zip(evaluations) {
        for (e, s) in g_omni.edges.iter_mut().zip(ev.scores) {
            e.scores.insert(u.name.clone(), s);
        }
        for (id, path) in ev.paths {
            if let Some(state) = g_omni.state_mut(id) {
                state.access_paths.insert(u.name.clone(), path);
            }
        }
    }
    users
        .iter()
        .map(|u| (u.name.clone(), user_subgraph(g_omni, u)))
        .collect()
}
