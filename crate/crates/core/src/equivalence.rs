//! State equivalence.
//!
//! Two strategies decide whether a freshly captured snapshot is a state the
//! crawl has already seen:
//!
//! * the three-stage comparator pipeline: exact markup, then DOM structure,
//!   then a fuzzy comparison of text content;
//! * page templating, which first learns which regions of a page change on
//!   their own (across reloads and idle waits) and then ignores those regions
//!   when comparing.
//!
//! Each pipeline stage has its own early-exit rule. The exact stage can only
//! conclude `Equal`, the structure stage can only conclude `Different`, and
//! the fuzzy stage always decides.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dom::{node_signature, node_text_contents, DomNode, DomSnapshot, NodeKind, NodePath};
use crate::dom::{structural_signature, text_contents};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EquivalenceError {
    #[error("template aggregation needs at least 2 instances, got {0}")]
    InsufficientInstances(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Equal,
    Different,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    Absolute,
    Proportional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EquivalenceConfig {
    /// Maximum edit distance (exclusive) in absolute mode.
    pub fuzzy_threshold: usize,
    pub threshold_mode: ThresholdMode,
    /// Fraction of the longer text length, proportional mode only.
    pub proportional_ratio: f64,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        EquivalenceConfig {
            fuzzy_threshold: 10,
            threshold_mode: ThresholdMode::Proportional,
            proportional_ratio: 0.05,
        }
    }
}

impl EquivalenceConfig {
    pub fn absolute(threshold: usize) -> Self {
        EquivalenceConfig {
            fuzzy_threshold: threshold,
            threshold_mode: ThresholdMode::Absolute,
            ..Default::default()
        }
    }

    pub fn proportional(ratio: f64) -> Self {
        EquivalenceConfig {
            threshold_mode: ThresholdMode::Proportional,
            proportional_ratio: ratio,
            ..Default::default()
        }
    }

    fn effective_threshold(&self, longer_len: usize) -> f64 {
        match self.threshold_mode {
            ThresholdMode::Absolute => self.fuzzy_threshold as f64,
            ThresholdMode::Proportional => self.proportional_ratio * longer_len as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Exact,
    Structure,
    FuzzyText,
}

/// Outcome of [`pipeline_trace`]: the decision plus every stage consulted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineOutcome {
    pub equivalent: bool,
    pub trace: Vec<(Stage, Verdict)>,
}

pub fn compare_exact(a: &DomSnapshot, b: &DomSnapshot) -> Verdict {
    if a.raw_markup == b.raw_markup {
        Verdict::Equal
    } else {
        Verdict::Undecided
    }
}

pub fn compare_dom_structure(a: &DomSnapshot, b: &DomSnapshot) -> Verdict {
    if structural_signature(a) != structural_signature(b) {
        Verdict::Different
    } else {
        Verdict::Undecided
    }
}

/// Character-level edit distance (insertions, deletions, substitutions).
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0; short.len() + 1];
    for (i, lc) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let sub = prev[j] + usize::from(lc != sc);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// Text nodes joined with `\n` in document order.
pub fn joined_text(s: &DomSnapshot) -> String {
    text_contents(s)
        .into_iter()
        .map(|(_, t)| t)
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn compare_fuzzy_text(a: &DomSnapshot, b: &DomSnapshot, cfg: &EquivalenceConfig) -> Verdict {
    let ta = joined_text(a);
    let tb = joined_text(b);
    let longer = ta.chars().count().max(tb.chars().count());
    let distance = levenshtein(&ta, &tb);
    // Strictly less than: a zero threshold never equates.
    if (distance as f64) < cfg.effective_threshold(longer) {
        Verdict::Equal
    } else {
        Verdict::Different
    }
}

pub fn pipeline_trace(a: &DomSnapshot, b: &DomSnapshot, cfg: &EquivalenceConfig) -> PipelineOutcome {
    let mut trace = Vec::with_capacity(3);
    let exact = compare_exact(a, b);
    trace.push((Stage::Exact, exact));
    if exact == Verdict::Equal {
        return PipelineOutcome {
            equivalent: true,
            trace,
        };
    }
    let structure = compare_dom_structure(a, b);
    trace.push((Stage::Structure, structure));
    if structure == Verdict::Different {
        return PipelineOutcome {
            equivalent: false,
            trace,
        };
    }
    let fuzzy = compare_fuzzy_text(a, b, cfg);
    trace.push((Stage::FuzzyText, fuzzy));
    PipelineOutcome {
        equivalent: fuzzy == Verdict::Equal,
        trace,
    }
}

pub fn pipeline_compare(a: &DomSnapshot, b: &DomSnapshot, cfg: &EquivalenceConfig) -> bool {
    pipeline_trace(a, b, cfg).equivalent
}

// --- templating ----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureSource {
    InitialLoad,
    Reload,
    Wait,
}

/// Repeated captures of one state, used to learn its unstable regions.
#[derive(Debug, Clone, Default)]
pub struct TimeMap {
    pub instances: Vec<DomSnapshot>,
    pub sources: Vec<CaptureSource>,
}

impl TimeMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, source: CaptureSource, snapshot: DomSnapshot) {
        self.sources.push(source);
        self.instances.push(snapshot);
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PageTemplate {
    pub stable_signature: String,
    pub unstable_paths: BTreeSet<NodePath>,
}

impl PageTemplate {
    /// Template of a page with no known unstable regions.
    pub fn trivial(s: &DomSnapshot) -> Self {
        PageTemplate {
            stable_signature: structural_signature(s),
            unstable_paths: BTreeSet::new(),
        }
    }

    pub fn is_unstable(&self, path: &NodePath) -> bool {
        self.unstable_paths.iter().any(|u| path.starts_with(u))
    }
}

/// What an element looks like in one instance, ignoring its descendants.
#[derive(PartialEq)]
struct ElementFacts<'a> {
    tag: &'a str,
    attributes: &'a [(String, String)],
    own_text: String,
}

fn element_facts(root: &DomNode) -> BTreeMap<NodePath, ElementFacts<'_>> {
    root.descendants()
        .filter(|n| n.kind == NodeKind::Element)
        .map(|n| {
            (
                n.path.clone(),
                ElementFacts {
                    tag: &n.tag,
                    attributes: &n.attributes,
                    own_text: n.own_text(),
                },
            )
        })
        .collect()
}

pub fn build_template(tm: &TimeMap) -> Result<PageTemplate, EquivalenceError> {
    if tm.instances.len() < 2 {
        return Err(EquivalenceError::InsufficientInstances(tm.instances.len()));
    }
    let facts: Vec<_> = tm.instances.iter().map(|s| element_facts(&s.root)).collect();
    let all_paths: BTreeSet<&NodePath> = facts.iter().flat_map(|f| f.keys()).collect();
    let everywhere = |p: &NodePath| facts.iter().all(|f| f.contains_key(p));

    let mut unstable = BTreeSet::new();
    for path in all_paths {
        if everywhere(path) {
            let first = &facts[0][path];
            if facts[1..].iter().any(|f| f[path] != *first) {
                unstable.insert(path.clone());
            }
        } else if path.parent().map(|p| everywhere(&p)).unwrap_or(true) {
            // Topmost node whose presence varies; its descendants are covered.
            unstable.insert(path.clone());
        }
    }
    let stable_signature = masked_signature(&tm.instances[0], &unstable);
    Ok(PageTemplate {
        stable_signature,
        unstable_paths: unstable,
    })
}

/// Copy of the tree with every subtree rooted at an unstable path removed.
/// Remaining nodes keep their original paths.
pub fn mask(root: &DomNode, unstable: &BTreeSet<NodePath>) -> DomNode {
    DomNode {
        kind: root.kind,
        tag: root.tag.clone(),
        attributes: root.attributes.clone(),
        text: root.text.clone(),
        children: root
            .children
            .iter()
            .filter(|c| !unstable.contains(&c.path))
            .map(|c| mask(c, unstable))
            .collect(),
        path: root.path.clone(),
    }
}

fn masked_signature(s: &DomSnapshot, unstable: &BTreeSet<NodePath>) -> String {
    node_signature(&mask(&s.root, unstable))
}

/// True when `a` and `b` agree everywhere outside the template's unstable
/// regions: same element structure and identical text.
pub fn template_compare(t: &PageTemplate, a: &DomSnapshot, b: &DomSnapshot) -> bool {
    if a.raw_markup == b.raw_markup {
        return true;
    }
    let ma = mask(&a.root, &t.unstable_paths);
    let mb = mask(&b.root, &t.unstable_paths);
    node_signature(&ma) == node_signature(&mb) && node_text_contents(&ma) == node_text_contents(&mb)
}

/// Template for a newly discovered state: the parent's unstable regions
/// carry forward and the stable signature comes from the new snapshot.
pub fn extend_template(t: &PageTemplate, new_state: &DomSnapshot) -> PageTemplate {
    PageTemplate {
        stable_signature: masked_signature(new_state, &t.unstable_paths),
        unstable_paths: t.unstable_paths.clone(),
    }
}

/// How the crawl decides that two captures are the same state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Pipeline(EquivalenceConfig),
    #[default]
    Template,
}
