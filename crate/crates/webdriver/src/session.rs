use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use demodocus_core::crawler::{DriverError, PageDriver};
use demodocus_core::dom::{parse_snapshot, DomNode, DomSnapshot, ElementProperties, NodePath};
use demodocus_core::users::{ActionKind, Target};

use crate::codec::{
    key_value, ActionSequence, Capabilities, CodecError, Command, ElementRef, KeyAction, Method, Origin, PointerAction,
    Response, WireError,
};
use crate::scripts::ScriptKind;

/// Environment variable consulted when no endpoint is given explicitly.
pub const ENDPOINT_ENV: &str = "DEMODOCUS_WEBDRIVER_URL";

#[derive(Debug, Error)]
pub enum WebDriverError {
    #[error("no WebDriver remote end at {endpoint}: {reason}")]
    ConnectionRefused { endpoint: String, reason: String },
    /// The remote end's message, unchanged.
    #[error("session not created: {0}")]
    SessionNotCreated(String),
    #[error("{}: {}", .0.error, .0.message)]
    Remote(WireError),
    #[error("HTTP transport: {0}")]
    Transport(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("unexpected script result: {0}")]
    UnexpectedResult(String),
    #[error("session already closed")]
    Closed,
}

impl From<WebDriverError> for DriverError {
    fn from(e: WebDriverError) -> Self {
        match e {
            WebDriverError::Remote(w) => match w.error.as_str() {
                "script timeout" | "timeout" => DriverError::ScriptTimeout(w.message),
                "invalid session id" | "no such window" => DriverError::StaleSession(w.message),
                "stale element reference" | "detached shadow root" => DriverError::StaleElement(w.message),
                "element not interactable" | "element click intercepted" | "move target out of bounds" => {
                    DriverError::NotInteractable(w.message)
                }
                _ => DriverError::Backend(format!("{}: {}", w.error, w.message)),
            },
            WebDriverError::Closed => DriverError::StaleSession("session already closed".into()),
            other => DriverError::Backend(other.to_string()),
        }
    }
}

/// Endpoint from an explicit value, else from [`ENDPOINT_ENV`].
pub fn resolve_endpoint(explicit: Option<&str>) -> Option<String> {
    explicit
        .map(str::to_string)
        .or_else(|| std::env::var(ENDPOINT_ENV).ok())
        .map(|s| s.trim_end_matches('/').to_string())
        .filter(|s| !s.is_empty())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeouts {
    pub page_load_ms: u64,
    pub script_ms: u64,
}

impl Default for Timeouts {
    fn default() -> Self {
        Timeouts {
            page_load_ms: 30_000,
            script_ms: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionOptions {
    pub timeouts: Timeouts,
    /// Delay between the captures compared by the stabilization rule.
    pub poll_interval_ms: u64,
    /// Upper bound on waiting for two identical captures.
    pub stabilization_wait_ms: u64,
    /// Extra capabilities merged into `alwaysMatch`.
    pub capabilities: Map<String, Value>,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            timeouts: Timeouts::default(),
            poll_interval_ms: 100,
            stabilization_wait_ms: 500,
            capabilities: Map::new(),
        }
    }
}

/// Element description returned by the target enumeration script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LiveTarget {
    pub path: Vec<usize>,
    pub handlers: Vec<String>,
    pub visible: bool,
    pub focusable: bool,
    #[serde(default)]
    pub tab_index: Option<i32>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub contrast: Option<f64>,
    #[serde(rename = "box", default)]
    pub bounding_box: Option<[f64; 4]>,
}

impl LiveTarget {
    pub fn properties(&self) -> ElementProperties {
        ElementProperties {
            visible: self.visible,
            focusable: self.focusable,
            tab_index: self.tab_index,
            accessible_name: self.name.clone(),
            contrast_ratio: self.contrast,
            bounding_box: self.bounding_box.map(Into::into),
        }
    }

    pub fn to_target(&self) -> Target {
        Target::new(NodePath(self.path.clone()), self.properties()).with_handlers(self.handlers.iter().cloned())
    }
}

/// One WebDriver session. The session is deleted on [`close`](PageDriver::close)
/// or, failing that, when dropped.
pub struct WebDriverSession {
    pub endpoint: String,
    pub session_id: String,
    pub timeouts: Timeouts,
    options: SessionOptions,
    agent: ureq::Agent,
    uri: Option<String>,
    started: Instant,
    closed: bool,
}

impl std::fmt::Debug for WebDriverSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WebDriverSession")
            .field("endpoint", &self.endpoint)
            .field("session_id", &self.session_id)
            .field("timeouts", &self.timeouts)
            .field("closed", &self.closed)
            .finish()
    }
}

fn agent(timeouts: &Timeouts) -> ureq::Agent {
    let limit = Duration::from_millis(timeouts.page_load_ms.max(timeouts.script_ms) + 5_000);
    let config = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(limit))
        .build();
    ureq::Agent::new_with_config(config)
}

/// Sends `cmd` and decodes the reply. Transport failures are reported as
/// [`WebDriverError::Transport`].
fn send(agent: &ureq::Agent, endpoint: &str, session: &str, cmd: &Command) -> Result<Response, WebDriverError> {
    let req = cmd.encode(session);
    let url = format!("{endpoint}{}", req.path);
    debug!("{} {}", req.method.as_str(), req.path);
    let result = match (req.method, req.body) {
        (Method::Post, Some(body)) => agent
            .post(&url)
            .header("Content-Type", "application/json; charset=utf-8")
            .send(body.as_str()),
        (Method::Post, None) => agent.post(&url).send_empty(),
        (Method::Delete, _) => agent.delete(&url).call(),
        (Method::Get, _) => agent.get(&url).call(),
    };
    let mut resp = result.map_err(|e| WebDriverError::Transport(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| WebDriverError::Transport(e.to_string()))?;
    Ok(Response::decode(cmd, status, text.as_bytes())?)
}

impl WebDriverSession {
    /// Opens a session with New Session. Timeouts travel as capabilities.
    pub fn connect(endpoint: &str, options: SessionOptions) -> Result<Self, WebDriverError> {
        let endpoint = endpoint.trim_end_matches('/').to_string();
        let agent = agent(&options.timeouts);
        let mut always = options.capabilities.clone();
        always.insert(
            "timeouts".into(),
            json!({"pageLoad": options.timeouts.page_load_ms, "script": options.timeouts.script_ms}),
        );
        let cmd = Command::NewSession(Capabilities {
            always_match: always,
            first_match: None,
        });
        let resp = send(&agent, &endpoint, "", &cmd).map_err(|e| match e {
            WebDriverError::Transport(reason) => WebDriverError::ConnectionRefused {
                endpoint: endpoint.clone(),
                reason,
            },
            other => other,
        })?;
        match resp {
            Response::Session(v) if !v.session_id.is_empty() => {
                debug!("session {} opened at {endpoint}", v.session_id);
                Ok(WebDriverSession {
                    endpoint,
                    session_id: v.session_id,
                    timeouts: options.timeouts,
                    options,
                    agent,
                    uri: None,
                    started: Instant::now(),
                    closed: false,
                })
            }
            Response::Session(_) => Err(WebDriverError::SessionNotCreated("remote end returned an empty session id".into())),
            Response::Error(e) => Err(WebDriverError::SessionNotCreated(e.message)),
            Response::Value(v) => Err(WebDriverError::UnexpectedResult(v.to_string())),
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    fn command(&self, cmd: Command) -> Result<Value, WebDriverError> {
        if self.closed {
            return Err(WebDriverError::Closed);
        }
        match send(&self.agent, &self.endpoint, &self.session_id, &cmd)? {
            Response::Value(v) => Ok(v),
            Response::Error(e) => Err(WebDriverError::Remote(e)),
            Response::Session(s) => Err(WebDriverError::UnexpectedResult(s.session_id)),
        }
    }

    fn script(&self, kind: ScriptKind, args: Vec<Value>) -> Result<Value, WebDriverError> {
        self.command(Command::ExecuteScript {
            script: kind.source().to_string(),
            args,
        })
    }

    pub fn navigate(&mut self, uri: &str) -> Result<(), WebDriverError> {
        self.command(Command::Navigate { url: uri.to_string() })?;
        self.uri = Some(uri.to_string());
        Ok(())
    }

    fn capture_markup(&self) -> Result<String, WebDriverError> {
        match self.script(ScriptKind::Capture, vec![])? {
            Value::String(s) => Ok(s),
            Value::Null => Ok(String::new()),
            other => Err(WebDriverError::UnexpectedResult(other.to_string())),
        }
    }

    /// Captures the page once two consecutive captures one poll interval
    /// apart agree, or when the stabilization wait runs out.
    pub fn capture_state(&mut self) -> Result<DomSnapshot, WebDriverError> {
        let poll = Duration::from_millis(self.options.poll_interval_ms);
        let limit = Duration::from_millis(self.options.stabilization_wait_ms);
        let begin = Instant::now();
        let mut markup = self.capture_markup()?;
        loop {
            if begin.elapsed() >= limit {
                warn!("page did not settle within {} ms", self.options.stabilization_wait_ms);
                break;
            }
            thread::sleep(poll);
            let next = self.capture_markup()?;
            if next == markup {
                break;
            }
            markup = next;
        }
        let at = self.started.elapsed().as_millis() as u64;
        Ok(match parse_snapshot(&markup, at) {
            Ok(s) => s,
            // An empty body is a valid page with no content.
            Err(_) => DomSnapshot::from_tree(DomNode::element("#document", vec![], vec![]), at),
        })
    }

    pub fn enumerate_live_targets(&mut self) -> Result<Vec<Target>, WebDriverError> {
        let v = self.script(ScriptKind::Targets, vec![])?;
        let raw: Vec<LiveTarget> = serde_json::from_value(v).map_err(|e| WebDriverError::UnexpectedResult(e.to_string()))?;
        let mut targets: Vec<Target> = raw.iter().map(LiveTarget::to_target).collect();
        targets.sort_by(|a, b| a.node_path.cmp(&b.node_path));
        targets.dedup_by(|a, b| a.node_path == b.node_path);
        Ok(targets)
    }

    fn describe(&mut self, path: &NodePath) -> Result<Option<LiveTarget>, WebDriverError> {
        let v = self.script(ScriptKind::Targets, vec![json!(path.0)])?;
        serde_json::from_value(v).map_err(|e| WebDriverError::UnexpectedResult(e.to_string()))
    }

    fn resolve(&mut self, path: &NodePath) -> Result<ElementRef, DriverError> {
        let v = self.script(ScriptKind::Resolve, vec![json!(path.0)])?;
        // A target that no longer resolves has been removed by the page.
        ElementRef::from_value(&v).ok_or_else(|| DriverError::StaleElement(format!("nothing at {path}")))
    }

    /// Performs `action` on `target` and captures the settled page.
    pub fn dispatch(&mut self, action: &ActionKind, target: &Target) -> Result<DomSnapshot, DriverError> {
        match action {
            ActionKind::Reload => return self.reload(),
            ActionKind::Wait(ms) => return self.wait(*ms),
            _ => {}
        }
        let el = self.resolve(&target.node_path)?;
        let here = || PointerAction::Move {
            duration: Some(0),
            origin: Some(Origin::Element(el.clone())),
            x: 0,
            y: 0,
        };
        match action {
            ActionKind::Click => {
                self.command(Command::ElementClick { element: el.id.clone() })?;
            }
            ActionKind::DoubleClick => {
                let press = [PointerAction::Down { button: 0 }, PointerAction::Up { button: 0 }];
                let mut seq = vec![here()];
                seq.extend(press.clone());
                seq.extend(press);
                self.command(Command::PerformActions(vec![ActionSequence::mouse(seq)]))?;
            }
            ActionKind::MouseOver => {
                self.command(Command::PerformActions(vec![ActionSequence::mouse(vec![here()])]))?;
            }
            ActionKind::MouseOut => {
                let away = PointerAction::Move {
                    duration: Some(0),
                    origin: Some(Origin::Named("viewport".into())),
                    x: 0,
                    y: 0,
                };
                self.command(Command::PerformActions(vec![ActionSequence::mouse(vec![here(), away])]))?;
            }
            ActionKind::KeyPress(key) => {
                let value = key_value(key).ok_or_else(|| DriverError::Backend(format!("unknown key {key}")))?;
                self.script(ScriptKind::Focus, vec![el.to_value()])?;
                let keys = vec![KeyAction::Down { value: value.clone() }, KeyAction::Up { value }];
                self.command(Command::PerformActions(vec![ActionSequence::keyboard(keys)]))?;
            }
            ActionKind::Focus => {
                self.script(ScriptKind::Focus, vec![el.to_value()])?;
            }
            ActionKind::Blur => {
                self.script(ScriptKind::Blur, vec![el.to_value()])?;
            }
            ActionKind::Reload | ActionKind::Wait(_) => unreachable!("handled above"),
        }
        Ok(self.capture_state()?)
    }

    fn delete(&mut self) -> Result<(), WebDriverError> {
        if self.closed {
            return Ok(());
        }
        let result = self.command(Command::DeleteSession);
        self.closed = true;
        result.map(|_| debug!("session {} deleted", self.session_id))
    }
}

impl PageDriver for WebDriverSession {
    fn load(&mut self, uri: &str) -> Result<DomSnapshot, DriverError> {
        self.navigate(uri).map_err(|e| match e {
            WebDriverError::Remote(w) if w.error != "invalid session id" => DriverError::Load {
                uri: uri.to_string(),
                reason: w.message,
            },
            other => other.into(),
        })?;
        Ok(self.capture_state()?)
    }

    fn enumerate_targets(&mut self) -> Result<Vec<Target>, DriverError> {
        Ok(self.enumerate_live_targets()?)
    }

    fn execute(&mut self, action: &ActionKind, target: &Target) -> Result<DomSnapshot, DriverError> {
        self.dispatch(action, target)
    }

    fn reload(&mut self) -> Result<DomSnapshot, DriverError> {
        let uri = self.uri.clone().ok_or_else(|| DriverError::Backend("no page loaded".into()))?;
        self.navigate(&uri)?;
        Ok(self.capture_state()?)
    }

    fn wait(&mut self, ms: u64) -> Result<DomSnapshot, DriverError> {
        thread::sleep(Duration::from_millis(ms));
        Ok(self.capture_state()?)
    }

    fn element_properties(&mut self, path: &NodePath) -> Result<ElementProperties, DriverError> {
        match self.describe(path)? {
            Some(t) => Ok(t.properties()),
            None => Err(DriverError::UnresolvedTarget(path.clone())),
        }
    }

    fn close(&mut self) -> Result<(), DriverError> {
        Ok(self.delete()?)
    }
}

impl Drop for WebDriverSession {
    fn drop(&mut self) {
        if let Err(e) = self.delete() {
            warn!("could not delete session {}: {e}", self.session_id);
        }
    }
}
