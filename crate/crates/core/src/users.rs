//! User models and Perceive / Navigate / Act scoring.
//!
//! A user model restricts which actions a simulated user can perform and
//! which targets they can use. Every edge of the crawled graph is scored per
//! model as `perceive × navigate × act`, each factor in `[0, 1]`; a zero
//! anywhere makes the edge untraversable for that model.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dom::{ElementProperties, NodePath};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UserModelError {
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("wait duration must be positive")]
    ZeroWait,
    #[error("unknown user model `{0}`")]
    UnknownModel(String),
}

/// Action category, independent of parameters such as the key pressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    Click,
    DoubleClick,
    MouseOver,
    MouseOut,
    KeyPress,
    Focus,
    Blur,
    Wait,
    Reload,
}

impl ActionType {
    pub const ALL: [ActionType; 9] = [
        ActionType::Click,
        ActionType::DoubleClick,
        ActionType::MouseOver,
        ActionType::MouseOut,
        ActionType::KeyPress,
        ActionType::Focus,
        ActionType::Blur,
        ActionType::Wait,
        ActionType::Reload,
    ];

    pub fn is_mouse(self) -> bool {
        matches!(
            self,
            ActionType::Click | ActionType::DoubleClick | ActionType::MouseOver | ActionType::MouseOut
        )
    }

    /// Actions aimed at the window rather than an element.
    pub fn is_page_level(self) -> bool {
        matches!(self, ActionType::Wait | ActionType::Reload)
    }
}

/// A concrete interaction: the `a` half of an edge.
///
/// Serialized as `click`, `key_press:Enter`, `wait:500` and so on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ActionKind {
    Click,
    DoubleClick,
    MouseOver,
    MouseOut,
    KeyPress(String),
    Focus,
    Blur,
    /// Milliseconds, always positive.
    Wait(u64),
    Reload,
}

impl ActionKind {
    pub fn wait(ms: u64) -> Result<Self, UserModelError> {
        if ms == 0 {
            Err(UserModelError::ZeroWait)
        } else {
            Ok(ActionKind::Wait(ms))
        }
    }

    pub fn key(key: &str) -> Self {
        ActionKind::KeyPress(key.to_string())
    }

    pub fn action_type(&self) -> ActionType {
        match self {
            ActionKind::Click => ActionType::Click,
            ActionKind::DoubleClick => ActionType::DoubleClick,
            ActionKind::MouseOver => ActionType::MouseOver,
            ActionKind::MouseOut => ActionType::MouseOut,
            ActionKind::KeyPress(_) => ActionType::KeyPress,
            ActionKind::Focus => ActionType::Focus,
            ActionKind::Blur => ActionType::Blur,
            ActionKind::Wait(_) => ActionType::Wait,
            ActionKind::Reload => ActionType::Reload,
        }
    }

    pub fn is_page_level(&self) -> bool {
        self.action_type().is_page_level()
    }

    /// DOM event names that respond to this action. `keydown:Enter` style
    /// names restrict a key handler to one key.
    pub fn event_names(&self) -> Vec<String> {
        match self {
            ActionKind::Click => vec!["click".into()],
            ActionKind::DoubleClick => vec!["dblclick".into()],
            ActionKind::MouseOver => vec!["mouseover".into(), "mouseenter".into()],
            ActionKind::MouseOut => vec!["mouseout".into(), "mouseleave".into()],
            ActionKind::KeyPress(k) => vec![
                "keydown".into(),
                format!("keydown:{k}"),
                "keypress".into(),
                format!("keypress:{k}"),
                "keyup".into(),
                format!("keyup:{k}"),
            ],
            ActionKind::Focus => vec!["focus".into(), "focusin".into()],
            ActionKind::Blur => vec!["blur".into(), "focusout".into()],
            ActionKind::Wait(_) => vec!["wait".into()],
            ActionKind::Reload => vec!["reload".into()],
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionKind::Click => f.write_str("click"),
            ActionKind::DoubleClick => f.write_str("double_click"),
            ActionKind::MouseOver => f.write_str("mouseover"),
            ActionKind::MouseOut => f.write_str("mouseout"),
            ActionKind::KeyPress(k) => write!(f, "key_press:{k}"),
            ActionKind::Focus => f.write_str("focus"),
            ActionKind::Blur => f.write_str("blur"),
            ActionKind::Wait(ms) => write!(f, "wait:{ms}"),
            ActionKind::Reload => f.write_str("reload"),
        }
    }
}

impl FromStr for ActionKind {
    type Err = UserModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        match (head, arg) {
            ("click", None) => Ok(ActionKind::Click),
            ("double_click", None) => Ok(ActionKind::DoubleClick),
            ("mouseover", None) => Ok(ActionKind::MouseOver),
            ("mouseout", None) => Ok(ActionKind::MouseOut),
            ("key_press", Some(k)) if !k.is_empty() => Ok(ActionKind::KeyPress(k.to_string())),
            ("focus", None) => Ok(ActionKind::Focus),
            ("blur", None) => Ok(ActionKind::Blur),
            ("wait", Some(ms)) => {
                let ms = ms
                    .parse::<u64>()
                    .map_err(|_| UserModelError::UnknownAction(s.to_string()))?;
                ActionKind::wait(ms)
            }
            ("reload", None) => Ok(ActionKind::Reload),
            _ => Err(UserModelError::UnknownAction(s.to_string())),
        }
    }
}

impl TryFrom<String> for ActionKind {
    type Error = UserModelError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ActionKind> for String {
    fn from(a: ActionKind) -> String {
        a.to_string()
    }
}

/// An element (or the window, at the root path) that can be acted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub node_path: NodePath,
    pub properties: ElementProperties,
    /// Event names the element has listeners for.
    pub handlers: BTreeSet<String>,
}

impl Target {
    pub fn new(node_path: NodePath, properties: ElementProperties) -> Self {
        Target {
            node_path,
            properties,
            handlers: BTreeSet::new(),
        }
    }

    pub fn with_handlers<I, S>(mut self, handlers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.handlers.extend(handlers.into_iter().map(Into::into));
        self
    }

    /// Pseudo-target for page-level actions.
    pub fn window() -> Self {
        Target::new(NodePath::root(), ElementProperties::default())
    }

    pub fn is_window(&self) -> bool {
        self.node_path.is_root()
    }

    pub fn handles(&self, action: &ActionKind) -> bool {
        action.event_names().iter().any(|e| self.handlers.contains(e))
    }
}

/// The state a target is evaluated in: every target the state exposes.
#[derive(Debug, Clone, Copy)]
pub struct StateContext<'a> {
    pub targets: &'a [Target],
}

impl<'a> StateContext<'a> {
    pub fn new(targets: &'a [Target]) -> Self {
        StateContext { targets }
    }

    /// Sequential focus order: positive tabindex ascending, then elements with
    /// tabindex 0 or none in document order. Hidden elements and negative
    /// tabindex are skipped.
    pub fn tab_order(&self) -> Vec<&'a NodePath> {
        let mut stops: Vec<(&Target, i32)> = self
            .targets
            .iter()
            .filter(|t| !t.is_window() && t.properties.focusable && t.properties.visible)
            .map(|t| (t, t.properties.tab_index.unwrap_or(0)))
            .filter(|(_, ti)| *ti >= 0)
            .collect();
        stops.sort_by(|(a, ia), (b, ib)| {
            let ka = if *ia > 0 { (0, *ia) } else { (1, 0) };
            let kb = if *ib > 0 { (0, *ib) } else { (1, 0) };
            ka.cmp(&kb).then_with(|| a.node_path.cmp(&b.node_path))
        });
        stops.into_iter().map(|(t, _)| &t.node_path).collect()
    }

    /// Tab presses from the state's initial focus to reach `path`.
    pub fn tabs_to(&self, path: &NodePath) -> Option<usize> {
        self.tab_order().iter().position(|p| *p == path).map(|i| i + 1)
    }
}

pub type PerceiveFn = dyn Fn(&Target, &StateContext<'_>) -> f64 + Send + Sync;
pub type NavigateFn = dyn Fn(&Target, &StateContext<'_>) -> f64 + Send + Sync;
pub type ActFn = dyn Fn(&ActionKind, &Target) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum PerceiveRule {
    /// Everything is perceivable.
    Everything,
    /// Visible targets only.
    Visible,
    /// Visible, large enough and with enough contrast. Absent measurements
    /// are treated as passing.
    SizeAndContrast { min_contrast: f64, min_area: f64 },
    /// Visible and carrying an accessible name.
    Labeled,
    Custom(Arc<PerceiveFn>),
}

#[derive(Clone)]
pub enum NavigateRule {
    /// Pointer users reach any perceived target directly.
    Direct,
    /// One over the number of Tab presses; zero outside the tab order.
    TabOrder,
    Custom(Arc<NavigateFn>),
}

#[derive(Clone)]
pub enum ActRule {
    /// Any allowed action works on any target.
    Unrestricted,
    /// The target must have a listener for the action.
    Handlers,
    Custom(Arc<ActFn>),
}

impl fmt::Debug for PerceiveRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerceiveRule::Everything => f.write_str("Everything"),
            PerceiveRule::Visible => f.write_str("Visible"),
            PerceiveRule::SizeAndContrast {
                min_contrast,
                min_area,
            } => write!(f, "SizeAndContrast({min_contrast}, {min_area})"),
            PerceiveRule::Labeled => f.write_str("Labeled"),
            PerceiveRule::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl fmt::Debug for NavigateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NavigateRule::Direct => f.write_str("Direct"),
            NavigateRule::TabOrder => f.write_str("TabOrder"),
            NavigateRule::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl fmt::Debug for ActRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActRule::Unrestricted => f.write_str("Unrestricted"),
            ActRule::Handlers => f.write_str("Handlers"),
            ActRule::Custom(_) => f.write_str("Custom"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LowVisionThresholds {
    pub min_contrast: f64,
    pub min_width: f64,
    pub min_height: f64,
}

impl Default for LowVisionThresholds {
    fn default() -> Self {
        LowVisionThresholds {
            min_contrast: 4.5,
            min_width: 44.0,
            min_height: 44.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UserModel {
    pub name: String,
    pub allowed_actions: BTreeSet<ActionType>,
    pub perceive: PerceiveRule,
    pub navigate: NavigateRule,
    pub act: ActRule,
}

pub const OMNI: &str = "omni";
pub const NON_DISABLED: &str = "nondisabled";
pub const KEYBOARD: &str = "keyboard";
pub const LOW_VISION: &str = "lowvision";
pub const SCREEN_READER: &str = "screenreader";

fn interaction_actions() -> BTreeSet<ActionType> {
    ActionType::ALL
        .into_iter()
        .filter(|a| !a.is_page_level())
        .collect()
}

fn keyboard_actions() -> BTreeSet<ActionType> {
    BTreeSet::from([ActionType::KeyPress, ActionType::Focus, ActionType::Blur])
}

impl UserModel {
    /// Unrestricted model that builds the canonical graph.
    pub fn omni() -> Self {
        UserModel {
            name: OMNI.into(),
            allowed_actions: ActionType::ALL.into_iter().collect(),
            perceive: PerceiveRule::Everything,
            navigate: NavigateRule::Direct,
            act: ActRule::Unrestricted,
        }
    }

    /// Realistic user without a disability: every interaction except
    /// waiting and reloading, visible targets only.
    pub fn non_disabled() -> Self {
        UserModel {
            name: NON_DISABLED.into(),
            allowed_actions: interaction_actions(),
            perceive: PerceiveRule::Visible,
            navigate: NavigateRule::Direct,
            act: ActRule::Handlers,
        }
    }

    pub fn keyboard() -> Self {
        UserModel {
            name: KEYBOARD.into(),
            allowed_actions: keyboard_actions(),
            perceive: PerceiveRule::Visible,
            navigate: NavigateRule::TabOrder,
            act: ActRule::Handlers,
        }
    }

    pub fn low_vision(thresholds: LowVisionThresholds) -> Self {
        UserModel {
            name: LOW_VISION.into(),
            allowed_actions: interaction_actions(),
            perceive: PerceiveRule::SizeAndContrast {
                min_contrast: thresholds.min_contrast,
                min_area: thresholds.min_width * thresholds.min_height,
            },
            navigate: NavigateRule::Direct,
            act: ActRule::Handlers,
        }
    }

    pub fn screen_reader() -> Self {
        UserModel {
            name: SCREEN_READER.into(),
            allowed_actions: keyboard_actions(),
            perceive: PerceiveRule::Labeled,
            navigate: NavigateRule::TabOrder,
            act: ActRule::Handlers,
        }
    }

    /// Looks up a built-in model (including the non-disabled baseline).
    pub fn by_name(name: &str, thresholds: LowVisionThresholds) -> Result<Self, UserModelError> {
        match name {
            OMNI => Ok(Self::omni()),
            NON_DISABLED => Ok(Self::non_disabled()),
            KEYBOARD => Ok(Self::keyboard()),
            LOW_VISION => Ok(Self::low_vision(thresholds)),
            SCREEN_READER => Ok(Self::screen_reader()),
            other => Err(UserModelError::UnknownModel(other.to_string())),
        }
    }

    pub fn allows(&self, action: &ActionKind) -> bool {
        self.allowed_actions.contains(&action.action_type())
    }
}

/// The four models of the accessibility comparison: omni, keyboard, low
/// vision and screen reader.
pub fn builtin_models() -> Vec<UserModel> {
    vec![
        UserModel::omni(),
        UserModel::keyboard(),
        UserModel::low_vision(LowVisionThresholds::default()),
        UserModel::screen_reader(),
    ]
}

fn unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

fn binary(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn perceive_score(u: &UserModel, t: &Target, ctx: &StateContext<'_>) -> f64 {
    if t.is_window() {
        return 1.0;
    }
    let p = &t.properties;
    match &u.perceive {
        PerceiveRule::Everything => 1.0,
        PerceiveRule::Visible => binary(p.visible),
        PerceiveRule::SizeAndContrast {
            min_contrast,
            min_area,
        } => {
            let contrast_ok = p.contrast_ratio.map(|c| c >= *min_contrast).unwrap_or(true);
            let size_ok = p.bounding_box.map(|b| b.area() >= *min_area).unwrap_or(true);
            binary(p.visible && contrast_ok && size_ok)
        }
        PerceiveRule::Labeled => binary(
            p.visible
                && p.accessible_name
                    .as_deref()
                    .map(|n| !n.trim().is_empty())
                    .unwrap_or(false),
        ),
        PerceiveRule::Custom(f) => unit(f(t, ctx)),
    }
}

pub fn navigate_score(u: &UserModel, t: &Target, ctx: &StateContext<'_>) -> f64 {
    if t.is_window() {
        return 1.0;
    }
    match &u.navigate {
        NavigateRule::Direct => 1.0,
        NavigateRule::TabOrder => match ctx.tabs_to(&t.node_path) {
            Some(n) => 1.0 / n as f64,
            None => 0.0,
        },
        NavigateRule::Custom(f) => unit(f(t, ctx)),
    }
}

pub fn act_score(u: &UserModel, a: &ActionKind, t: &Target) -> f64 {
    if !u.allows(a) {
        return 0.0;
    }
    match &u.act {
        ActRule::Unrestricted => 1.0,
        ActRule::Handlers => binary(a.is_page_level() || t.handles(a)),
        ActRule::Custom(f) => unit(f(a, t)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbilityScore {
    pub perceive: f64,
    pub navigate: f64,
    pub act: f64,
    pub total: f64,
}

impl AbilityScore {
    pub fn new(perceive: f64, navigate: f64, act: f64) -> Self {
        AbilityScore {
            perceive,
            navigate,
            act,
            total: perceive * navigate * act,
        }
    }

    pub fn traversable(&self) -> bool {
        self.total > 0.0
    }
}

pub fn edge_score(u: &UserModel, a: &ActionKind, t: &Target, ctx: &StateContext<'_>) -> AbilityScore {
    AbilityScore::new(perceive_score(u, t, ctx), navigate_score(u, t, ctx), act_score(u, a, t))
}
