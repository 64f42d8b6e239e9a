use std::collections::BTreeSet;
use std::path::PathBuf;

use demodocus_core::crawler::{crawl, CrawlConfig, DriverError, PageDriver};
use demodocus_core::dom::NodePath;
use demodocus_core::graph::StateId;
use demodocus_core::sim::{load_fixture, PageModel};
use demodocus_core::users::ActionKind;
use demodocus_webdriver::codec::{Command, Method};
use demodocus_webdriver::mock::{MockBehavior, MockRemote};
use demodocus_webdriver::{resolve_endpoint, SessionOptions, WebDriverError, WebDriverSession, ENDPOINT_ENV};

fn fixture(name: &str) -> PageModel {
    load_fixture(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)).unwrap()
}

fn fast() -> SessionOptions {
    SessionOptions {
        poll_interval_ms: 2,
        stabilization_wait_ms: 200,
        ..SessionOptions::default()
    }
}

/// Crawl settings without real-time waits.
fn quick_crawl() -> CrawlConfig {
    CrawlConfig {
        state_actions: vec![ActionKind::Reload],
        stabilization_wait: 1,
        ..CrawlConfig::default()
    }
}

#[test]
fn connect_opens_a_session() {
    let remote = MockRemote::start(fixture("static.json")).unwrap();
    let mut s = WebDriverSession::connect(remote.url(), fast()).unwrap();
    assert!(!s.session_id.is_empty());
    assert_eq!((remote.sessions_opened(), remote.active_sessions()), (1, 1));
    s.close().unwrap();
    s.close().unwrap();
    assert_eq!((remote.sessions_closed(), remote.active_sessions()), (1, 0));
}

#[test]
fn endpoint_down_is_connection_refused() {
    let url = {
        let remote = MockRemote::start(fixture("static.json")).unwrap();
        remote.url().to_string()
    };
    let err = WebDriverSession::connect(&url, fast()).unwrap_err();
    assert!(matches!(err, WebDriverError::ConnectionRefused { .. }), "{err}");
}

#[test]
fn rejected_capabilities_surface_the_remote_message() {
    let behavior = MockBehavior {
        reject_session: Some("Could not find a matching browser".into()),
        ..MockBehavior::default()
    };
    let remote = MockRemote::with_behavior(fixture("static.json"), behavior).unwrap();
    match WebDriverSession::connect(remote.url(), fast()) {
        Err(WebDriverError::SessionNotCreated(m)) => assert_eq!(m, "Could not find a matching browser"),
        other => panic!("{other:?}"),
    }
    assert_eq!(remote.active_sessions(), 0);
}

#[test]
fn crawl_through_the_protocol_matches_the_simulator() {
    let model = fixture("fig3.json");
    let remote = MockRemote::start(model.clone()).unwrap();
    let mut live = {
        let mut s = WebDriverSession::connect(remote.url(), fast()).unwrap();
        let r = crawl(&mut s, "http://mock/fig3.html", &quick_crawl()).unwrap();
        s.close().unwrap();
        r
    };
    assert_eq!(remote.sessions_opened(), 1);
    assert_eq!(remote.sessions_closed(), 1);

    let mut sim = model.simulate();
    let mut expected = crawl(&mut sim, "fig3.json", &quick_crawl()).unwrap();
    let edges = |g: &demodocus_core::graph::StateGraph| -> BTreeSet<(u32, String, u32)> {
        g.edges.iter().map(|e| (e.from.0, g.edge_label(e), e.to.0)).collect()
    };
    assert_eq!(live.graph.state_count(), 7);
    assert_eq!(edges(&live.graph), edges(&expected.graph));
    for id in live.graph.state_ids() {
        let a = live.graph.states.remove(&id).unwrap();
        let b = expected.graph.states.remove(&id).unwrap();
        assert_eq!(a.snapshot.raw_markup, b.snapshot.raw_markup, "state {id}");
        assert_eq!(a.targets, b.targets, "state {id}");
    }
    assert!(live.graph.edges.iter().any(|e| e.to == StateId(6)));
}

#[test]
fn dropped_and_failed_sessions_are_deleted() {
    let remote = MockRemote::start(fixture("fig3.json")).unwrap();
    {
        let mut s = WebDriverSession::connect(remote.url(), fast()).unwrap();
        s.load("http://mock/").unwrap();
    }
    assert_eq!((remote.sessions_opened(), remote.sessions_closed()), (1, 1));

    // A crawl that fails still leaves no session behind once the driver goes.
    let behavior = MockBehavior {
        expire_after: Some(3),
        ..MockBehavior::default()
    };
    let remote = MockRemote::with_behavior(fixture("fig3.json"), behavior).unwrap();
    {
        let mut s = WebDriverSession::connect(remote.url(), fast()).unwrap();
        let _ = crawl(&mut s, "http://mock/", &quick_crawl());
    }
    assert_eq!(remote.sessions_opened(), 1);
    assert_eq!(remote.active_sessions(), 0);
}

#[test]
fn expired_session_is_stale() {
    let behavior = MockBehavior {
        expire_after: Some(1),
        ..MockBehavior::default()
    };
    let remote = MockRemote::with_behavior(fixture("static.json"), behavior).unwrap();
    let mut s = WebDriverSession::connect(remote.url(), fast()).unwrap();
    assert!(matches!(s.wait(1), Err(DriverError::StaleSession(_))));
}

#[test]
fn capture_waits_for_animation_to_settle() {
    let behavior = MockBehavior {
        animation_frames: 4,
        ..MockBehavior::default()
    };
    let remote = MockRemote::with_behavior(fixture("static.json"), behavior).unwrap();
    let mut s = WebDriverSession::connect(remote.url(), fast()).unwrap();
    let snap = s.load("http://mock/").unwrap();
    assert!(!snap.raw_markup.contains("spinner"));
    // Four animated frames, then two identical captures.
    assert_eq!(remote.captures(), 6);

    // A bound shorter than the animation returns the latest frame.
    let behavior = MockBehavior {
        animation_frames: 1000,
        ..MockBehavior::default()
    };
    let remote = MockRemote::with_behavior(fixture("static.json"), behavior).unwrap();
    let opts = SessionOptions {
        poll_interval_ms: 5,
        stabilization_wait_ms: 30,
        ..SessionOptions::default()
    };
    let mut s = WebDriverSession::connect(remote.url(), opts).unwrap();
    let snap = s.load("http://mock/").unwrap();
    assert!(snap.raw_markup.contains("spinner"));
    assert!(remote.captures() < 20);
}

#[test]
fn targets_and_dispatch() {
    let model = fixture("fig3.json");
    let remote = MockRemote::start(model.clone()).unwrap();
    let mut s = WebDriverSession::connect(remote.url(), fast()).unwrap();
    s.load("http://mock/").unwrap();
    let targets = s.enumerate_targets().unwrap();
    let mut sim = model.simulate();
    sim.load("x").unwrap();
    assert_eq!(targets, sim.enumerate_targets().unwrap());

    let products = targets.iter().find(|t| t.handlers.contains("mouseover")).unwrap().clone();
    let props = s.element_properties(&products.node_path).unwrap();
    assert_eq!(props, products.properties);
    assert!(matches!(s.element_properties(&NodePath(vec![9, 9])), Err(DriverError::UnresolvedTarget(_))));

    let after = s.execute(&ActionKind::MouseOver, &products).unwrap();
    assert!(after.raw_markup.contains("products-menu"));

    // The target is gone after a reload that changed the page.
    let mut ghost = products.clone();
    ghost.node_path = NodePath(vec![7, 7]);
    assert!(matches!(s.execute(&ActionKind::Click, &ghost), Err(DriverError::StaleElement(_))));
    s.close().unwrap();
}

#[test]
fn every_issued_request_reencodes_identically() {
    let remote = MockRemote::start(fixture("fig3.json")).unwrap();
    {
        let mut s = WebDriverSession::connect(remote.url(), fast()).unwrap();
        crawl(&mut s, "http://mock/", &quick_crawl()).unwrap();
    }
    let log = remote.requests();
    let mut kinds = BTreeSet::new();
    for r in &log {
        let method = Method::parse(&r.method).unwrap();
        let (sid, cmd) = Command::decode(method, &r.path, r.body.as_bytes()).unwrap();
        let again = cmd.encode(sid.as_deref().unwrap_or(""));
        assert_eq!(again.path, r.path);
        assert_eq!(again.body.unwrap_or_default(), r.body);
        kinds.insert(cmd.name());
    }
    for k in ["new_session", "navigate", "execute_script", "element_click", "perform_actions", "delete_session"] {
        assert!(kinds.contains(k), "{k} never issued");
    }
}

#[test]
fn endpoint_resolution() {
    assert_eq!(resolve_endpoint(Some("http://h:4444/")), Some("http://h:4444".into()));
    // Only read the variable when it is not set by the environment running
    // the tests, to keep this test independent of it.
    if std::env::var(ENDPOINT_ENV).is_err() {
        assert_eq!(resolve_endpoint(None), None);
    }
}
