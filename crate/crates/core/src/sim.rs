//! Fixture-backed page driver.
//!
//! A fixture is a JSON document describing named states, the transitions
//! between them and optional text regions that rotate on reload or wait.
//! See `docs/fixture-format.md` for the schema.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::crawler::{DriverError, PageDriver};
use crate::dom::{parse_snapshot, BoundingBox, DomNode, DomSnapshot, ElementProperties, NodePath};
use crate::users::{ActionKind, Target};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read fixture {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("fixture schema error at `{path}`: {message}")]
    SchemaError { path: String, message: String },
    #[error("{context} refers to unknown state `{reference}`")]
    DanglingTransition { reference: String, context: String },
    #[error("selector `{selector}` does not resolve in state `{state}`")]
    UnresolvedSelector { state: String, selector: String },
    #[error("state `{state}`: {message}")]
    InvalidState { state: String, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFile {
    start: String,
    states: BTreeMap<String, FixtureState>,
    #[serde(default)]
    transitions: Vec<FixtureTransition>,
    #[serde(default)]
    dynamic_regions: Vec<FixtureRegion>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureState {
    markup: String,
    #[serde(default)]
    elements: BTreeMap<String, FixtureElement>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FixtureElement {
    visible: bool,
    focusable: bool,
    tab_index: Option<i32>,
    accessible_name: Option<String>,
    contrast_ratio: Option<f64>,
    bounding_box: Option<BoundingBox>,
    handlers: Vec<String>,
}

impl Default for FixtureElement {
    fn default() -> Self {
        FixtureElement {
            visible: true,
            focusable: false,
            tab_index: None,
            accessible_name: None,
            contrast_ratio: None,
            bounding_box: None,
            handlers: Vec::new(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureTransition {
    from: String,
    selector: String,
    event: String,
    to: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureRegion {
    state: String,
    path: String,
    values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub name: String,
    pub tree: DomNode,
    /// Declared elements and transition sources, ordered by path.
    pub targets: Vec<Target>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTransition {
    pub from: String,
    pub path: NodePath,
    pub event: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicRegion {
    pub path: NodePath,
    pub values: Vec<String>,
}

/// Validated fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct PageModel {
    pub start: String,
    pub states: BTreeMap<String, SimState>,
    pub transitions: Vec<SimTransition>,
    pub dynamic_regions: BTreeMap<String, Vec<DynamicRegion>>,
}

pub fn load_fixture(path: impl AsRef<Path>) -> Result<PageModel, FixtureError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| FixtureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    PageModel::from_json(&text)
}

impl PageModel {
    pub fn from_json(text: &str) -> Result<Self, FixtureError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: FixtureFile = serde_path_to_error::deserialize(de).map_err(|e| FixtureError::SchemaError {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        Self::validate(file)
    }

    fn validate(file: FixtureFile) -> Result<Self, FixtureError> {
        let known = |name: &str, context: String| {
            if file.states.contains_key(name) {
                Ok(())
            } else {
                Err(FixtureError::DanglingTransition {
                    reference: name.to_string(),
                    context,
                })
            }
        };
        known(&file.start, "start".into())?;

        let mut parsed = BTreeMap::new();
        for (name, st) in &file.states {
            let snap = parse_snapshot(&st.markup, 0).map_err(|e| FixtureError::InvalidState {
                state: name.clone(),
                message: e.to_string(),
            })?;
            parsed.insert(name.clone(), snap);
        }
        let resolve = |state: &str, selector: &str| -> Result<NodePath, FixtureError> {
            parsed[state]
                .resolve(selector)
                .filter(|p| !p.is_root())
                .ok_or_else(|| FixtureError::UnresolvedSelector {
                    state: state.to_string(),
                    selector: selector.to_string(),
                })
        };

        let mut transitions = Vec::new();
        for (i, t) in file.transitions.iter().enumerate() {
            known(&t.from, format!("transitions[{i}].from"))?;
            known(&t.to, format!("transitions[{i}].to"))?;
            if t.event.trim().is_empty() {
                return Err(FixtureError::SchemaError {
                    path: format!("transitions[{i}].event"),
                    message: "event name is empty".into(),
                });
            }
            transitions.push(SimTransition {
                from: t.from.clone(),
                path: resolve(&t.from, &t.selector)?,
                event: t.event.clone(),
                to: t.to.clone(),
            });
        }

        let mut dynamic_regions: BTreeMap<String, Vec<DynamicRegion>> = BTreeMap::new();
        for (i, r) in file.dynamic_regions.iter().enumerate() {
            known(&r.state, format!("dynamic_regions[{i}].state"))?;
            if r.values.is_empty() {
                return Err(FixtureError::SchemaError {
                    path: format!("dynamic_regions[{i}].values"),
                    message: "at least one value is required".into(),
                });
            }
            let path = resolve(&r.state, &r.path)?;
            if !parsed[&r.state].node(&path).is_some_and(DomNode::is_element) {
                return Err(FixtureError::InvalidState {
                    state: r.state.clone(),
                    message: format!("dynamic region {} is not an element", r.path),
                });
            }
            dynamic_regions.entry(r.state.clone()).or_default().push(DynamicRegion {
                path,
                values: r.values.clone(),
            });
        }

        let mut states = BTreeMap::new();
        for (name, st) in file.states {
            let mut by_path: BTreeMap<NodePath, Target> = BTreeMap::new();
            for (selector, el) in st.elements {
                let path = resolve(&name, &selector)?;
                let properties = ElementProperties {
                    visible: el.visible,
                    focusable: el.focusable,
                    tab_index: el.tab_index,
                    accessible_name: el.accessible_name,
                    contrast_ratio: el.contrast_ratio,
                    bounding_box: el.bounding_box,
                };
                properties.validate().map_err(|e| FixtureError::SchemaError {
                    path: format!("states.{name}.elements.{selector}"),
                    message: e.to_string(),
                })?;
                by_path.insert(path.clone(), Target::new(path, properties).with_handlers(el.handlers));
            }
            for t in transitions.iter().filter(|t| t.from == name) {
                by_path
                    .entry(t.path.clone())
                    .or_insert_with(|| Target::new(t.path.clone(), ElementProperties::default()))
                    .handlers
                    .insert(t.event.clone());
            }
            let tree = parsed[&name].root.clone();
            states.insert(
                name.clone(),
                SimState {
                    name,
                    tree,
                    targets: by_path.into_values().collect(),
                },
            );
        }

        Ok(PageModel {
            start: file.start,
            states,
            transitions,
            dynamic_regions,
        })
    }

    /// Transition fired by `action` on `path` in `state`, if any.
    pub fn next_state(&self, state: &str, path: &NodePath, action: &ActionKind) -> Option<&str> {
        let events: BTreeSet<String> = action.event_names().into_iter().collect();
        self.transitions
            .iter()
            .find(|t| t.from == state && &t.path == path && events.contains(&t.event))
            .map(|t| t.to.as_str())
    }

    pub fn simulate(&self) -> SimDriver {
        SimDriver::new(Arc::new(self.clone()))
    }
}

/// Counts of driver calls, for tests and diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimCounters {
    pub loads: usize,
    pub executions: usize,
    pub reloads: usize,
    pub waits: usize,
}

#[derive(Debug, Clone)]
pub struct SimDriver {
    model: Arc<PageModel>,
    current: Option<String>,
    /// Advances on every reload and wait; selects dynamic region text.
    rotation: usize,
    clock: u64,
    pub counters: SimCounters,
}

impl SimDriver {
    pub fn new(model: Arc<PageModel>) -> Self {
        SimDriver {
            model,
            current: None,
            rotation: 0,
            clock: 0,
            counters: SimCounters::default(),
        }
    }

    pub fn current_state(&self) -> Option<&str> {
        self.current.as_deref()
    }

    pub fn rotation(&self) -> usize {
        self.rotation
    }

    fn state(&self) -> Result<&SimState, DriverError> {
        let name = self
            .current
            .as_deref()
            .ok_or_else(|| DriverError::Backend("no page loaded".into()))?;
        Ok(&self.model.states[name])
    }

    fn capture(&mut self) -> Result<DomSnapshot, DriverError> {
        self.clock += 1;
        let st = self.state()?;
        let mut tree = st.tree.clone();
        for region in self.model.dynamic_regions.get(&st.name).into_iter().flatten() {
            if let Some(node) = tree.find_mut(&region.path) {
                let text = &region.values[self.rotation % region.values.len()];
                node.children = vec![DomNode::text_node(text)];
            }
        }
        Ok(DomSnapshot::from_tree(tree, self.clock))
    }
}

impl PageDriver for SimDriver {
    fn load(&mut self, _uri: &str) -> Result<DomSnapshot, DriverError> {
        self.counters.loads += 1;
        self.current = Some(self.model.start.clone());
        self.capture()
    }

    fn enumerate_targets(&mut self) -> Result<Vec<Target>, DriverError> {
        Ok(self.state()?.targets.clone())
    }

    fn execute(&mut self, action: &ActionKind, target: &Target) -> Result<DomSnapshot, DriverError> {
        let st = self.state()?;
        if st.tree.find(&target.node_path).is_none() {
            return Err(DriverError::UnresolvedTarget(target.node_path.clone()));
        }
        let next = self
            .model
            .next_state(&st.name, &target.node_path, action)
            .map(str::to_string);
        self.counters.executions += 1;
        if next.is_some() {
            self.current = next;
        }
        self.capture()
    }

    fn reload(&mut self) -> Result<DomSnapshot, DriverError> {
        self.state()?;
        self.counters.reloads += 1;
        self.rotation += 1;
        self.current = Some(self.model.start.clone());
        self.capture()
    }

    fn wait(&mut self, ms: u64) -> Result<DomSnapshot, DriverError> {
        self.state()?;
        self.counters.waits += 1;
        self.rotation += 1;
        self.clock += ms;
        self.capture()
    }

    fn element_properties(&mut self, path: &NodePath) -> Result<ElementProperties, DriverError> {
        let st = self.state()?;
        if let Some(t) = st.targets.iter().find(|t| &t.node_path == path) {
            return Ok(t.properties.clone());
        }
        match st.tree.find(path) {
            Some(_) => Ok(ElementProperties::default()),
            None => Err(DriverError::UnresolvedTarget(path.clone())),
        }
    }
}
