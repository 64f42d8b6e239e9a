//! Wire format of the WebDriver commands the driver issues.
//!
//! Bodies are compact JSON with keys in declaration order, so decoding a
//! recorded payload and encoding it again reproduces the original bytes.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Key under which the remote end serializes a web element reference.
pub const ELEMENT_KEY: &str = "element-6066-11e4-a52e-4f735466cecf";

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("malformed JSON body: {0}")]
    Json(String),
    #[error("no command for {method} {path}")]
    UnknownRoute { method: String, path: String },
    #[error("response has no `value` member")]
    MissingValue,
}

impl From<serde_json::Error> for CodecError {
    fn from(e: serde_json::Error) -> Self {
        CodecError::Json(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
    Delete,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
            Method::Delete => "DELETE",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "GET" => Some(Method::Get),
            "POST" => Some(Method::Post),
            "DELETE" => Some(Method::Delete),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementRef {
    #[serde(rename = "element-6066-11e4-a52e-4f735466cecf")]
    pub id: String,
}

impl ElementRef {
    pub fn new(id: impl Into<String>) -> Self {
        ElementRef { id: id.into() }
    }

    pub fn to_value(&self) -> Value {
        serde_json::json!({ ELEMENT_KEY: self.id })
    }

    pub fn from_value(v: &Value) -> Option<Self> {
        v.get(ELEMENT_KEY).and_then(Value::as_str).map(ElementRef::new)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Capabilities {
    #[serde(rename = "alwaysMatch", default)]
    pub always_match: Map<String, Value>,
    #[serde(rename = "firstMatch", default, skip_serializing_if = "Option::is_none")]
    pub first_match: Option<Vec<Map<String, Value>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Origin {
    Element(ElementRef),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointerParameters {
    #[serde(rename = "pointerType")]
    pub pointer_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum PointerAction {
    #[serde(rename = "pointerMove")]
    Move {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        origin: Option<Origin>,
        x: i64,
        y: i64,
    },
    #[serde(rename = "pointerDown")]
    Down { button: u8 },
    #[serde(rename = "pointerUp")]
    Up { button: u8 },
    #[serde(rename = "pause")]
    Pause { duration: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum KeyAction {
    #[serde(rename = "keyDown")]
    Down { value: String },
    #[serde(rename = "keyUp")]
    Up { value: String },
    #[serde(rename = "pause")]
    Pause { duration: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ActionSequence {
    Pointer {
        id: String,
        parameters: PointerParameters,
        actions: Vec<PointerAction>,
    },
    Key { id: String, actions: Vec<KeyAction> },
}

impl ActionSequence {
    pub fn mouse(actions: Vec<PointerAction>) -> Self {
        ActionSequence::Pointer {
            id: "mouse".into(),
            parameters: PointerParameters { pointer_type: "mouse".into() },
            actions,
        }
    }

    pub fn keyboard(actions: Vec<KeyAction>) -> Self {
        ActionSequence::Key { id: "keyboard".into(), actions }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    NewSession(Capabilities),
    Navigate { url: String },
    /// Synchronous script execution.
    ExecuteScript { script: String, args: Vec<Value> },
    ElementClick { element: String },
    PerformActions(Vec<ActionSequence>),
    DeleteSession,
}

#[derive(Serialize, Deserialize)]
struct NewSessionBody {
    capabilities: Capabilities,
}

#[derive(Serialize, Deserialize)]
struct NavigateBody {
    url: String,
}

#[derive(Serialize, Deserialize)]
struct ScriptBody {
    script: String,
    args: Vec<Value>,
}

#[derive(Serialize, Deserialize)]
struct ActionsBody {
    actions: Vec<ActionSequence>,
}

/// An encoded request; `path` is relative to the endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub method: Method,
    pub path: String,
    pub body: Option<String>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::NewSession(_) => "new_session",
            Command::Navigate { .. } => "navigate",
            Command::ExecuteScript { .. } => "execute_script",
            Command::ElementClick { .. } => "element_click",
            Command::PerformActions(_) => "perform_actions",
            Command::DeleteSession => "delete_session",
        }
    }

    /// Request for this command in `session`. New Session ignores the id.
    pub fn encode(&self, session: &str) -> Request {
        let (method, path, body) = match self {
            Command::NewSession(caps) => (
                Method::Post,
                "/session".to_string(),
                Some(to_json(&NewSessionBody { capabilities: caps.clone() })),
            ),
            Command::Navigate { url } => (
                Method::Post,
                format!("/session/{session}/url"),
                Some(to_json(&NavigateBody { url: url.clone() })),
            ),
            Command::ExecuteScript { script, args } => (
                Method::Post,
                format!("/session/{session}/execute/sync"),
                Some(to_json(&ScriptBody { script: script.clone(), args: args.clone() })),
            ),
            Command::ElementClick { element } => (
                Method::Post,
                format!("/session/{session}/element/{element}/click"),
                Some("{}".to_string()),
            ),
            Command::PerformActions(actions) => (
                Method::Post,
                format!("/session/{session}/actions"),
                Some(to_json(&ActionsBody { actions: actions.clone() })),
            ),
            Command::DeleteSession => (Method::Delete, format!("/session/{session}"), None),
        };
        Request { method, path, body }
    }

    /// Parses a request; returns the session id named in the path, if any.
    pub fn decode(method: Method, path: &str, body: &[u8]) -> Result<(Option<String>, Command), CodecError> {
        let unknown = || CodecError::UnknownRoute { method: method.as_str().into(), path: path.into() };
        let segments: Vec<&str> = path.trim_matches('/').split('/').collect();
        match (method, segments.as_slice()) {
            (Method::Post, ["session"]) => {
                let b: NewSessionBody = serde_json::from_slice(body)?;
                Ok((None, Command::NewSession(b.capabilities)))
            }
            (Method::Delete, ["session", id]) => Ok((Some(id.to_string()), Command::DeleteSession)),
            (Method::Post, ["session", id, "url"]) => {
                let b: NavigateBody = serde_json::from_slice(body)?;
                Ok((Some(id.to_string()), Command::Navigate { url: b.url }))
            }
            (Method::Post, ["session", id, "execute", "sync"]) => {
                let b: ScriptBody = serde_json::from_slice(body)?;
                Ok((Some(id.to_string()), Command::ExecuteScript { script: b.script, args: b.args }))
            }
            (Method::Post, ["session", id, "element", el, "click"]) => {
                Ok((Some(id.to_string()), Command::ElementClick { element: el.to_string() }))
            }
            (Method::Post, ["session", id, "actions"]) => {
                let b: ActionsBody = serde_json::from_slice(body)?;
                Ok((Some(id.to_string()), Command::PerformActions(b.actions)))
            }
            _ => Err(unknown()),
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("wire types serialize")
}

/// Error payload of a failed command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub error: String,
    pub message: String,
    #[serde(default)]
    pub stacktrace: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewSessionValue {
    #[serde(rename = "sessionId")]
    pub session_id: String,
    #[serde(default)]
    pub capabilities: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Session(NewSessionValue),
    Value(Value),
    Error(WireError),
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    value: T,
}

impl Response {
    /// Decodes the body of a response to `command`. Error payloads are
    /// recognized by status code and by shape.
    pub fn decode(command: &Command, status: u16, body: &[u8]) -> Result<Response, CodecError> {
        let raw: Map<String, Value> = serde_json::from_slice(body)?;
        let value = raw.get("value").ok_or(CodecError::MissingValue)?;
        let looks_like_error = value.get("error").is_some_and(Value::is_string) && value.get("message").is_some();
        if status >= 400 || looks_like_error {
            let e: WireError = serde_json::from_value(value.clone())?;
            return Ok(Response::Error(e));
        }
        match command {
            Command::NewSession(_) => Ok(Response::Session(serde_json::from_value(value.clone())?)),
            _ => Ok(Response::Value(value.clone())),
        }
    }

    pub fn encode(&self) -> String {
        match self {
            Response::Session(v) => to_json(&Envelope { value: v }),
            Response::Value(v) => to_json(&Envelope { value: v }),
            Response::Error(e) => to_json(&Envelope { value: e }),
        }
    }

    /// HTTP status the remote end uses for this response.
    pub fn status(&self) -> u16 {
        match self {
            Response::Error(e) => error_status(&e.error),
            _ => 200,
        }
    }
}

/// Status code assigned to each error code by the protocol.
pub fn error_status(code: &str) -> u16 {
    match code {
        "element click intercepted" | "element not interactable" | "insecure certificate" | "invalid argument"
        | "invalid cookie domain" | "invalid element state" | "invalid selector" => 400,
        "no such alert" | "no such cookie" | "no such element" | "no such frame" | "no such window"
        | "no such shadow root" | "invalid session id" | "stale element reference" | "unknown command"
        | "detached shadow root" => 404,
        _ => 500,
    }
}

const KEYS: &[(&str, char)] = &[
    ("Cancel", '\u{E001}'),
    ("Help", '\u{E002}'),
    ("Backspace", '\u{E003}'),
    ("Tab", '\u{E004}'),
    ("Clear", '\u{E005}'),
    ("Return", '\u{E006}'),
    ("Enter", '\u{E007}'),
    ("Shift", '\u{E008}'),
    ("Control", '\u{E009}'),
    ("Alt", '\u{E00A}'),
    ("Pause", '\u{E00B}'),
    ("Escape", '\u{E00C}'),
    ("Space", '\u{E00D}'),
    ("PageUp", '\u{E00E}'),
    ("PageDown", '\u{E00F}'),
    ("End", '\u{E010}'),
    ("Home", '\u{E011}'),
    ("ArrowLeft", '\u{E012}'),
    ("ArrowUp", '\u{E013}'),
    ("ArrowRight", '\u{E014}'),
    ("ArrowDown", '\u{E015}'),
    ("Insert", '\u{E016}'),
    ("Delete", '\u{E017}'),
];

/// Protocol value for a named key. Single characters stand for themselves.
pub fn key_value(name: &str) -> Option<String> {
    if let Some((_, c)) = KEYS.iter().find(|(n, _)| *n == name) {
        return Some(c.to_string());
    }
    let mut chars = name.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Some(c.to_string()),
        _ => None,
    }
}

/// Inverse of [`key_value`].
pub fn key_name(value: &str) -> String {
    let mut chars = value.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        if let Some((n, _)) = KEYS.iter().find(|(_, k)| *k == c) {
            return n.to_string();
        }
    }
    value.to_string()
}
