//! In-process WebDriver remote end that serves a fixture page model over
//! HTTP. Used by tests so the protocol path runs without a browser.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;

use serde_json::{json, Map, Value};

use demodocus_core::crawler::PageDriver;
use demodocus_core::dom::{parse_snapshot, ElementProperties, NodePath};
use demodocus_core::sim::{PageModel, SimDriver};
use demodocus_core::users::{ActionKind, Target};

use crate::codec::{
    key_name, ActionSequence, Command, ElementRef, KeyAction, Method, NewSessionValue, Origin, PointerAction, Response,
    WireError,
};
use crate::scripts::ScriptKind;
use crate::session::LiveTarget;

#[derive(Debug, Clone, Default)]
pub struct MockBehavior {
    /// Refuse every New Session with this message.
    pub reject_session: Option<String>,
    /// Captures after each page change that still show an animation frame.
    pub animation_frames: usize,
    /// Commands a session accepts before it is reported invalid.
    pub expire_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRequest {
    pub method: String,
    pub path: String,
    pub body: String,
}

struct MockSession {
    driver: SimDriver,
    url: Option<String>,
    markup: String,
    focused: Option<NodePath>,
    frames_left: usize,
    commands: usize,
}

struct Shared {
    model: Arc<PageModel>,
    behavior: MockBehavior,
    sessions: BTreeMap<String, MockSession>,
    opened: usize,
    closed: usize,
    captures: usize,
    log: Vec<RecordedRequest>,
}

pub struct MockRemote {
    url: String,
    shared: Arc<Mutex<Shared>>,
    server: Arc<tiny_http::Server>,
    worker: Option<JoinHandle<()>>,
}

fn element_id(path: &NodePath) -> String {
    let mut id = String::from("el");
    for i in &path.0 {
        id.push('-');
        id.push_str(&i.to_string());
    }
    id
}

fn element_path(id: &str) -> Option<NodePath> {
    let rest = id.strip_prefix("el")?;
    let parts: Result<Vec<usize>, _> = rest.split('-').skip(1).map(str::parse).collect();
    parts.ok().map(NodePath)
}

fn error(code: &str, message: impl Into<String>) -> Response {
    Response::Error(WireError {
        error: code.into(),
        message: message.into(),
        stacktrace: String::new(),
    })
}

fn live(t: &Target) -> LiveTarget {
    let p = &t.properties;
    LiveTarget {
        path: t.node_path.0.clone(),
        handlers: t.handlers.iter().cloned().collect(),
        visible: p.visible,
        focusable: p.focusable,
        tab_index: p.tab_index,
        name: p.accessible_name.clone(),
        contrast: p.contrast_ratio,
        bounding_box: p.bounding_box.map(Into::into),
    }
}

impl MockRemote {
    pub fn start(model: PageModel) -> std::io::Result<Self> {
        Self::with_behavior(model, MockBehavior::default())
    }

    pub fn with_behavior(model: PageModel, behavior: MockBehavior) -> std::io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("mock remote is not bound to an IP address"))?;
        let server = Arc::new(server);
        let shared = Arc::new(Mutex::new(Shared {
            model: Arc::new(model),
            behavior,
            sessions: BTreeMap::new(),
            opened: 0,
            closed: 0,
            captures: 0,
            log: Vec::new(),
        }));
        let worker = {
            let server = Arc::clone(&server);
            let shared = Arc::clone(&shared);
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let mut body = Vec::new();
                    let _ = req.as_reader().read_to_end(&mut body);
                    let method = req.method().as_str().to_string();
                    let path = req.url().to_string();
                    let resp = handle(&shared, &method, &path, &body);
                    let header = tiny_http::Header::from_bytes("Content-Type", "application/json; charset=utf-8")
                        .expect("static header");
                    let out = tiny_http::Response::from_string(resp.encode())
                        .with_status_code(resp.status())
                        .with_header(header);
                    let _ = req.respond(out);
                }
            })
        };
        Ok(MockRemote {
            url: format!("http://{addr}"),
            shared,
            server,
            worker: Some(worker),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn lock(&self) -> MutexGuard<'_, Shared> {
        self.shared.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn sessions_opened(&self) -> usize {
        self.lock().opened
    }

    pub fn sessions_closed(&self) -> usize {
        self.lock().closed
    }

    pub fn active_sessions(&self) -> usize {
        self.lock().sessions.len()
    }

    /// Number of capture scripts executed.
    pub fn captures(&self) -> usize {
        self.lock().captures
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.lock().log.clone()
    }
}

impl Drop for MockRemote {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn handle(shared: &Mutex<Shared>, method: &str, path: &str, body: &[u8]) -> Response {
    let mut sh = shared.lock().unwrap_or_else(|p| p.into_inner());
    sh.log.push(RecordedRequest {
        method: method.to_string(),
        path: path.to_string(),
        body: String::from_utf8_lossy(body).into_owned(),
    });
    let Some(m) = Method::parse(method) else {
        return error("unknown method", method);
    };
    let (sid, cmd) = match Command::decode(m, path, body) {
        Ok(x) => x,
        Err(e) => return error("invalid argument", e.to_string()),
    };
    if let Command::NewSession(_) = cmd {
        if let Some(msg) = &sh.behavior.reject_session {
            return error("session not created", msg.clone());
        }
        sh.opened += 1;
        let id = format!("mock-session-{}", sh.opened);
        let driver = SimDriver::new(Arc::clone(&sh.model));
        sh.sessions.insert(
            id.clone(),
            MockSession {
                driver,
                url: None,
                markup: String::new(),
                focused: None,
                frames_left: 0,
                commands: 0,
            },
        );
        return Response::Session(NewSessionValue {
            session_id: id,
            capabilities: Map::from_iter([("browserName".to_string(), json!("mock"))]),
        });
    }
    let sid = sid.unwrap_or_default();
    let frames = sh.behavior.animation_frames;
    let expire = sh.behavior.expire_after;
    let Some(s) = sh.sessions.get_mut(&sid) else {
        return error("invalid session id", format!("no active session {sid}"));
    };
    s.commands += 1;
    if expire.is_some_and(|n| s.commands > n) {
        // The remote end discards an expired session.
        sh.sessions.remove(&sid);
        return error("invalid session id", "session expired");
    }
    let mut captured = false;
    let resp = match cmd {
        Command::NewSession(_) => unreachable!("handled above"),
        Command::DeleteSession => {
            sh.sessions.remove(&sid);
            sh.closed += 1;
            return Response::Value(Value::Null);
        }
        Command::Navigate { url } => {
            let result = if s.url.as_deref() == Some(url.as_str()) {
                s.driver.reload()
            } else {
                s.driver.load(&url)
            };
            s.url = Some(url);
            s.focused = None;
            apply(s, result.map(|snap| snap.raw_markup), frames)
        }
        Command::ExecuteScript { script, args } => match ScriptKind::identify(&script) {
            Some(ScriptKind::Capture) => {
                captured = true;
                if s.frames_left > 0 {
                    let frame = format!("{}<div class=\"spinner\">frame {}</div>", s.markup, s.frames_left);
                    s.frames_left -= 1;
                    Response::Value(json!(frame))
                } else {
                    Response::Value(json!(s.markup))
                }
            }
            Some(ScriptKind::Targets) => targets(s, args.first()),
            Some(ScriptKind::Resolve) => {
                let path: Option<Vec<usize>> = args.first().and_then(|a| serde_json::from_value(a.clone()).ok());
                match path {
                    Some(p) => {
                        let path = NodePath(p);
                        let exists = parse_snapshot(&s.markup, 0)
                            .ok()
                            .and_then(|snap| snap.node(&path).map(|n| n.is_element()))
                            .unwrap_or(false);
                        if exists {
                            Response::Value(ElementRef::new(element_id(&path)).to_value())
                        } else {
                            Response::Value(Value::Null)
                        }
                    }
                    None => error("invalid argument", "resolve expects a node path"),
                }
            }
            Some(kind @ (ScriptKind::Focus | ScriptKind::Blur)) => {
                match args.first().and_then(ElementRef::from_value).and_then(|e| element_path(&e.id)) {
                    Some(path) => {
                        let action = if kind == ScriptKind::Focus { ActionKind::Focus } else { ActionKind::Blur };
                        s.focused = (kind == ScriptKind::Focus).then(|| path.clone());
                        perform(s, &action, &path, frames)
                    }
                    None => error("invalid argument", "expected an element reference"),
                }
            }
            None => error("javascript error", "script not supported by the mock remote end"),
        },
        Command::ElementClick { element } => match element_path(&element) {
            Some(path) => perform(s, &ActionKind::Click, &path, frames),
            None => error("no such element", format!("unknown element {element}")),
        },
        Command::PerformActions(seqs) => actions(s, &seqs, frames),
    };
    if captured {
        sh.captures += 1;
    }
    resp
}

fn apply(s: &mut MockSession, result: Result<String, demodocus_core::crawler::DriverError>, frames: usize) -> Response {
    match result {
        Ok(markup) => {
            s.markup = markup;
            s.frames_left = frames;
            Response::Value(Value::Null)
        }
        Err(e) => error("unknown error", e.to_string()),
    }
}

fn perform(s: &mut MockSession, action: &ActionKind, path: &NodePath, frames: usize) -> Response {
    let present = parse_snapshot(&s.markup, 0).ok().is_some_and(|snap| snap.node(path).is_some());
    if !present {
        return error("stale element reference", format!("element at {path} is no longer attached"));
    }
    let target = Target::new(path.clone(), ElementProperties::default());
    let result = s.driver.execute(action, &target).map(|snap| snap.raw_markup);
    apply(s, result, frames)
}

fn targets(s: &mut MockSession, arg: Option<&Value>) -> Response {
    let all = match s.driver.enumerate_targets() {
        Ok(t) => t,
        Err(e) => return error("javascript error", e.to_string()),
    };
    match arg {
        None | Some(Value::Null) => Response::Value(serde_json::to_value(all.iter().map(live).collect::<Vec<_>>()).unwrap_or_default()),
        Some(v) => {
            let Ok(p) = serde_json::from_value::<Vec<usize>>(v.clone()) else {
                return error("invalid argument", "expected a node path");
            };
            let path = NodePath(p);
            let found = all.iter().find(|t| t.node_path == path).map(live).or_else(|| {
                let exists = parse_snapshot(&s.markup, 0).ok().is_some_and(|snap| snap.node(&path).is_some());
                exists.then(|| live(&Target::new(path.clone(), ElementProperties::default())))
            });
            Response::Value(serde_json::to_value(found).unwrap_or_default())
        }
    }
}

fn actions(s: &mut MockSession, seqs: &[ActionSequence], frames: usize) -> Response {
    let mut resp = Response::Value(Value::Null);
    for seq in seqs {
        match seq {
            ActionSequence::Pointer { actions, .. } => {
                let mut over: Option<NodePath> = None;
                let mut left = false;
                let mut downs = 0;
                for a in actions {
                    match a {
                        PointerAction::Move { origin: Some(Origin::Element(e)), .. } => over = element_path(&e.id),
                        PointerAction::Move { .. } => left = over.is_some(),
                        PointerAction::Down { .. } => downs += 1,
                        _ => {}
                    }
                }
                let Some(path) = over else { continue };
                let action = match (downs, left) {
                    (0, false) => ActionKind::MouseOver,
                    (0, true) => ActionKind::MouseOut,
                    (1, _) => ActionKind::Click,
                    _ => ActionKind::DoubleClick,
                };
                resp = perform(s, &action, &path, frames);
            }
            ActionSequence::Key { actions, .. } => {
                for a in actions {
                    if let KeyAction::Down { value } = a {
                        if let Some(path) = s.focused.clone() {
                            resp = perform(s, &ActionKind::KeyPress(key_name(value)), &path, frames);
                        }
                    }
                }
            }
        }
        if matches!(resp, Response::Error(_)) {
            break;
        }
    }
    resp
}
