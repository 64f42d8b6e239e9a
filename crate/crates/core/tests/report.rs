mod support;

use std::collections::BTreeSet;

use serde_json::{json, Value};

use demodocus_core::analysis::{MissingCapability, ReachabilityMode, Violation};
use demodocus_core::crawler::{crawl, CrawlConfig};
use demodocus_core::dot::{export_dot, VIOLATION_FILL};
use demodocus_core::graph::StateId;
use demodocus_core::report::{audit, emit_report, Audit, AuditOptions, Format, Report, ReportError};
use demodocus_core::sim::PageModel;
use demodocus_core::users::{LowVisionThresholds, UserModel};

use support::*;

const FIXTURES: [&str; 5] = ["fig3.json", "accessible.json", "static.json", "self_loop.json", "rotating.json"];

fn audit_model(model: &PageModel, opts: &AuditOptions) -> Audit {
    let mut d = model.simulate();
    let result = crawl(&mut d, "fixture", &CrawlConfig::default()).unwrap();
    audit(result, opts).unwrap()
}

fn keyboard_only() -> AuditOptions {
    AuditOptions {
        users: vec![UserModel::omni(), UserModel::keyboard()],
        ..AuditOptions::default()
    }
}

fn report_for(name: &str, a: &Audit) -> Report {
    a.report(name, "sim", &CrawlConfig::default(), LowVisionThresholds::default())
}

fn ids(v: &[u32]) -> BTreeSet<StateId> {
    v.iter().copied().map(StateId).collect()
}

#[test]
fn fig3_keyboard_violations() {
    let a = audit_model(&core_fixture("fig3.json"), &keyboard_only());
    assert_eq!(a.violations_for("keyboard"), ids(&[3, 5, 6]));
    for v in &a.violations {
        assert_eq!(v.missing_capability, MissingCapability::ActionExcluded);
        assert_eq!(v.enabling_edges.len(), 1);
        assert_eq!(a.graph.edges[v.enabling_edges[0]].action.to_string(), "mouseover");
        assert!(v.remediation_hint.contains("mouseover"));
    }
    let json: Value = serde_json::from_slice(&emit_report(&report_for("fig3.json", &a), Format::Json).unwrap()).unwrap();
    assert_eq!(json["violations"].as_array().unwrap().len(), 3);
    assert_eq!(json["crawl"]["states"], json!(7));
}

#[test]
fn strict_mode_on_fig3_agrees() {
    let opts = AuditOptions {
        mode: ReachabilityMode::IncomingEdge,
        ..keyboard_only()
    };
    let a = audit_model(&core_fixture("fig3.json"), &opts);
    assert_eq!(a.violations_for("keyboard"), ids(&[3, 5, 6]));
}

#[test]
fn dot_overlay_marks_violations() {
    let a = audit_model(&core_fixture("fig3.json"), &keyboard_only());
    let dot = export_dot(&a.graph, a.overlay("keyboard").as_ref());
    let filled = dot.matches(&format!("fillcolor=\"{VIOLATION_FILL}\"")).count();
    assert_eq!(filled, 3);
    for id in [3, 5, 6] {
        let line = dot.lines().find(|l| l.trim_start().starts_with(&format!("s{id} "))).unwrap();
        assert!(line.contains(VIOLATION_FILL), "{line}");
    }
    assert!(a.overlay("nobody").is_none());
}

#[test]
fn dot_exports_parse() {
    for name in FIXTURES {
        let a = audit_model(&core_fixture(name), &AuditOptions::default());
        let mut exports = vec![export_dot(&a.graph, None)];
        for u in &a.users {
            exports.push(export_dot(&a.graph, a.overlay(u).as_ref()));
        }
        for dot in exports {
            if let Err(e) = dot_parser::ast::Graph::try_from(dot.as_str()) {
                panic!("{name}: {e}\n{dot}");
            }
        }
    }
}

fn schema() -> Value {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/report.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn reports_validate_against_the_schema() {
    let validator = jsonschema::validator_for(&schema()).unwrap();
    for name in FIXTURES {
        for opts in [AuditOptions::default(), keyboard_only()] {
            let a = audit_model(&core_fixture(name), &opts);
            let bytes = emit_report(&report_for(name, &a), Format::Json).unwrap();
            let instance: Value = serde_json::from_slice(&bytes).unwrap();
            let errors: Vec<String> = validator.iter_errors(&instance).map(|e| e.to_string()).collect();
            assert!(errors.is_empty(), "{name}: {errors:?}");
        }
    }
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(23);
    for _ in 0..30 {
        let a = audit_model(&random_model(&mut rng, 12), &AuditOptions::default());
        let instance = serde_json::to_value(report_for("random", &a)).unwrap();
        assert!(validator.is_valid(&instance));
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let run = |name: &str| {
        let a = audit_model(&core_fixture(name), &AuditOptions::default());
        let json = emit_report(&report_for(name, &a), Format::Json).unwrap();
        let text = emit_report(&report_for(name, &a), Format::Text).unwrap();
        let mut dots = vec![export_dot(&a.graph, None)];
        for u in &a.users {
            dots.push(export_dot(&a.graph, a.overlay(u).as_ref()));
        }
        (json, text, dots)
    };
    for name in FIXTURES {
        assert_eq!(run(name), run(name), "{name}");
    }
}

#[test]
fn static_page_has_nothing_to_report() {
    let a = audit_model(&core_fixture("static.json"), &AuditOptions::default());
    let r = report_for("static.json", &a);
    assert_eq!((r.crawl.states, r.violations.len()), (1, 0));
    assert!(r.usability_gaps.is_empty());
}

#[test]
fn tampered_reports_are_rejected() {
    let a = audit_model(&core_fixture("fig3.json"), &keyboard_only());
    let good = report_for("fig3.json", &a);
    good.check_consistency().unwrap();

    // A state the keyboard user reaches cannot be a violation.
    let mut r = good.clone();
    r.violations.push(Violation {
        state: StateId(2),
        ..r.violations[0].clone()
    });
    assert!(matches!(emit_report(&r, Format::Json), Err(ReportError::ConsistencyError(_))));

    // Dropping one violation breaks completeness.
    let mut r = good.clone();
    r.violations.pop();
    assert!(matches!(r.check_consistency(), Err(ReportError::ConsistencyError(_))));

    // A positive score for an unreachable state.
    let mut r = good.clone();
    let entry = r.scorecard.iter_mut().find(|s| s.user == "keyboard" && s.state == StateId(3)).unwrap();
    entry.score = 0.5;
    assert!(r.check_consistency().is_err());
}

#[test]
fn accessible_page_is_fully_reachable() {
    let a = audit_model(&core_fixture("accessible.json"), &AuditOptions::default());
    let omni = a.graph.state_ids();
    assert!(omni.len() > 1);
    for u in ["screenreader", "keyboard", "nondisabled"] {
        assert_eq!(a.subgraphs[u].state_ids(), omni, "{u}");
    }
    assert!(a.violations.is_empty());
}

/// Twelve buttons in tab order; only the last one opens the next page.
fn long_tab_page() -> PageModel {
    let buttons: String = (0..12).map(|i| format!("<button id=\"b{i}\">Item {i}</button>")).collect();
    let mut elements = serde_json::Map::new();
    for i in 0..12 {
        elements.insert(
            format!("#b{i}"),
            json!({"focusable": true, "accessible_name": format!("Item {i}"), "contrast_ratio": 7.0, "bounding_box": [0, 0, 80, 40]}),
        );
    }
    let fixture = json!({
        "start": "list",
        "states": {
            "list": {"markup": format!("<main>{buttons}</main>"), "elements": elements},
            "end": {"markup": format!("<main>{buttons}<p>Done</p></main>"), "elements": elements},
        },
        "transitions": [
            {"from": "list", "selector": "#b11", "event": "click", "to": "end"},
            {"from": "list", "selector": "#b11", "event": "keydown:Enter", "to": "end"},
        ],
    });
    PageModel::from_json(&fixture.to_string()).unwrap()
}

#[test]
fn twelve_tabs_is_a_usability_gap() {
    let a = audit_model(&long_tab_page(), &keyboard_only());
    assert!(a.violations.is_empty());
    let end = StateId(1);
    assert_eq!(a.scorecard.score("nondisabled", end), 1.0);
    assert_eq!(a.scorecard.score("keyboard", end), 1.0 / 12.0);
    let gaps: Vec<_> = a.scorecard.gaps.iter().filter(|g| g.user == "keyboard").collect();
    assert_eq!(gaps.len(), 1);
    assert_eq!((gaps[0].state, gaps[0].baseline_score, gaps[0].score), (end, 1.0, 1.0 / 12.0));

    // Raising the ratio above 12 hides the gap.
    let opts = AuditOptions { gap_ratio: 13.0, ..keyboard_only() };
    assert!(audit_model(&long_tab_page(), &opts).scorecard.gaps.is_empty());
}

#[test]
fn zero_score_iff_unreachable_on_every_fixture() {
    for name in FIXTURES {
        let a = audit_model(&core_fixture(name), &AuditOptions::default());
        for u in &a.users {
            let reach = a.subgraphs[u].state_ids();
            for id in a.graph.state_ids() {
                assert_eq!(a.scorecard.score(u, id) > 0.0, reach.contains(&id), "{name} {u} {id}");
            }
            assert_eq!(reach, reachable_oracle(&a.graph, &UserModel::by_name(u, LowVisionThresholds::default()).unwrap()));
        }
    }
}
