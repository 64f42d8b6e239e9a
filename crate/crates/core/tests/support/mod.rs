//! Test helpers: random fixtures and independent oracles.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use demodocus_core::graph::{Edge, StateGraph, StateId};
use demodocus_core::sim::{load_fixture, PageModel};
use demodocus_core::users::{edge_score, StateContext, Target, UserModel};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn core_fixture(name: &str) -> PageModel {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let local = dir.join("fixtures").join(name);
    let path = if local.exists() { local } else { dir.join("../core/fixtures").join(name) };
    load_fixture(path).unwrap()
}

const EVENTS: [&str; 8] = ["click", "mouseover", "focus", "keydown", "keydown:Enter", "keydown:Space", "dblclick", "blur"];

/// Random fixture with up to `max_states` states. Transitions mostly lead
/// forward in state order, with occasional back edges and self-loops.
pub fn random_fixture(rng: &mut ChaCha8Rng, max_states: usize) -> Value {
    let n = rng.gen_range(1..=max_states);
    let mut states = serde_json::Map::new();
    let mut buttons_per_state = Vec::new();
    for k in 0..n {
        let buttons = rng.gen_range(1..=4);
        buttons_per_state.push(buttons);
        let mut markup = format!("<main><h1>S{k}</h1>");
        let mut elements = serde_json::Map::new();
        for b in 0..buttons {
            markup.push_str(&format!("<button id=\"b{b}\">B{b}</button>"));
            let mut el = serde_json::Map::new();
            el.insert("visible".into(), json!(rng.gen_bool(0.9)));
            el.insert("focusable".into(), json!(rng.gen_bool(0.7)));
            match rng.gen_range(0..5) {
                0 => {}
                1 => {
                    el.insert("tab_index".into(), json!(-1));
                }
                2 => {
                    el.insert("tab_index".into(), json!(rng.gen_range(1..4)));
                }
                _ => {
                    el.insert("tab_index".into(), json!(0));
                }
            }
            if rng.gen_bool(0.7) {
                el.insert("accessible_name".into(), json!(format!("Button {b}")));
            }
            if rng.gen_bool(0.8) {
                el.insert("contrast_ratio".into(), json!(rng.gen_range(1.0..21.0)));
            }
            if rng.gen_bool(0.8) {
                el.insert(
                    "bounding_box".into(),
                    json!([0.0, 0.0, rng.gen_range(10.0..120.0), rng.gen_range(10.0..60.0)]),
                );
            }
            elements.insert(format!("#b{b}"), Value::Object(el));
        }
        markup.push_str(&"<p>.</p>".repeat(k + 1));
        markup.push_str("</main>");
        states.insert(format!("s{k}"), json!({"markup": markup, "elements": elements}));
    }

    let mut transitions = Vec::new();
    let mut used = BTreeSet::new();
    for (k, &buttons) in buttons_per_state.iter().enumerate().take(n) {
        for _ in 0..rng.gen_range(0..=3) {
            let b = rng.gen_range(0..buttons);
            let event = *EVENTS.choose(rng).unwrap();
            if !used.insert((k, b, event)) {
                continue;
            }
            let to = if rng.gen_bool(0.8) && k + 1 < n {
                rng.gen_range(k + 1..n)
            } else {
                rng.gen_range(0..n)
            };
            transitions.push(json!({"from": format!("s{k}"), "selector": format!("#b{b}"), "event": event, "to": format!("s{to}")}));
        }
    }
    json!({"start": "s0", "states": states, "transitions": transitions})
}

pub fn random_model(rng: &mut ChaCha8Rng, max_states: usize) -> PageModel {
    PageModel::from_json(&random_fixture(rng, max_states).to_string()).unwrap()
}

/// States reachable from the start using only edges with a positive score
/// for `u`, by plain breadth-first search.
pub fn reachable_oracle(g: &StateGraph, u: &UserModel) -> BTreeSet<StateId> {
    let usable: Vec<&Edge> = g
        .edges
        .iter()
        .filter(|e| {
            let targets: &[Target] = &g.state(e.from).unwrap().targets;
            edge_score(u, &e.action, &e.target, &StateContext::new(targets)).total > 0.0
        })
        .collect();
    let mut seen = BTreeSet::from([g.start]);
    let mut queue = VecDeque::from([g.start]);
    while let Some(s) = queue.pop_front() {
        for e in usable.iter().filter(|e| e.from == s) {
            if seen.insert(e.to) {
                queue.push_back(e.to);
            }
        }
    }
    seen
}

/// Maximum product of edge scores over all simple paths from `start`,
/// by exhaustive enumeration. `edges` are (from, to, score).
pub fn best_scores_oracle(n: usize, start: usize, edges: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut best = vec![0.0f64; n];
    let mut visited = vec![false; n];
    fn walk(at: usize, score: f64, edges: &[(usize, usize, f64)], visited: &mut [bool], best: &mut [f64]) {
        if score > best[at] {
            best[at] = score;
        }
        visited[at] = true;
        for &(f, t, s) in edges {
            if f == at && !visited[t] && s > 0.0 {
                walk(t, score * s, edges, visited, best);
            }
        }
        visited[at] = false;
    }
    walk(start, 1.0, edges, &mut visited, &mut best);
    best
}

/// Exhaustive memoized edit distance over all prefixes, written as the
/// textbook recursion.
pub fn edit_distance_oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    fn go(i: usize, j: usize, a: &[char], b: &[char], memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == 0 {
            return j;
        }
        if j == 0 {
            return i;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let sub = go(i - 1, j - 1, a, b, memo) + usize::from(a[i - 1] != b[j - 1]);
        let del = go(i - 1, j, a, b, memo) + 1;
        let ins = go(i, j - 1, a, b, memo) + 1;
        let v = sub.min(del).min(ins);
        memo.insert((i, j), v);
        v
    }
    go(a.len(), b.len(), &a, &b, &mut HashMap::new())
}

/// Random string over a small alphabet so that distances are interesting.
pub fn random_string(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    let alphabet: Vec<char> = "abcde fé".chars().collect();
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| *alphabet.choose(rng).unwrap()).collect()
}

/// Fixture state name behind each crawled state, recovered from its `<h1>`.
pub fn state_names(g: &StateGraph) -> BTreeMap<StateId, String> {
    g.states
        .iter()
        .map(|(id, s)| {
            let m = &s.snapshot.raw_markup;
            let start = m.find("<h1>").unwrap() + 4;
            let end = m.find("</h1>").unwrap();
            (*id, m[start..end].to_lowercase())
        })
        .collect()
}
