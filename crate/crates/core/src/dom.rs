//! Client-side state snapshots.
//!
//! A [`DomSnapshot`] is the captured markup of one page configuration plus the
//! node tree parsed from it. The parser is permissive: it never fails on
//! malformed input, closes unclosed elements at their parent's boundary and
//! drops comments, doctypes and whitespace-only text.
//!
//! Node paths index the children of each element after that filtering, so a
//! page driver that resolves paths in a live document must skip comment nodes
//! and whitespace-only text nodes the same way.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tag of the synthetic node every snapshot tree hangs from.
pub const DOCUMENT_TAG: &str = "#document";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomError {
    #[error("markup is empty or whitespace-only")]
    MarkupEmpty,
    #[error("invalid node path `{0}`")]
    InvalidPath(String),
    #[error("invalid element properties: {0}")]
    InvalidProperties(String),
}

/// Child indices leading from the snapshot root to a node.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodePath(pub Vec<usize>);

impl NodePath {
    pub fn root() -> Self {
        NodePath(Vec::new())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, index: usize) -> Self {
        let mut v = self.0.clone();
        v.push(index);
        NodePath(v)
    }

    pub fn parent(&self) -> Option<NodePath> {
        if self.0.is_empty() {
            None
        } else {
            Some(NodePath(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    /// True if `self` equals `other` or lies inside its subtree.
    pub fn starts_with(&self, other: &NodePath) -> bool {
        self.0.starts_with(&other.0)
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("/");
        }
        for i in &self.0 {
            write!(f, "/{i}")?;
        }
        Ok(())
    }
}

impl FromStr for NodePath {
    type Err = DomError;

    /// Accepts `/0/1/2` (and `/` for the root).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s
            .strip_prefix('/')
            .ok_or_else(|| DomError::InvalidPath(s.to_string()))?;
        if rest.is_empty() {
            return Ok(NodePath::root());
        }
        rest.split('/')
            .map(|seg| seg.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map(NodePath)
            .map_err(|_| DomError::InvalidPath(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Element,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomNode {
    pub kind: NodeKind,
    /// Lowercase tag name; empty for text nodes.
    pub tag: String,
    pub attributes: Vec<(String, String)>,
    /// Text content; empty for elements.
    pub text: String,
    pub children: Vec<DomNode>,
    pub path: NodePath,
}

impl DomNode {
    pub fn element(tag: &str, attributes: Vec<(String, String)>, children: Vec<DomNode>) -> Self {
        let mut node = DomNode {
            kind: NodeKind::Element,
            tag: tag.to_ascii_lowercase(),
            attributes,
            text: String::new(),
            children,
            path: NodePath::root(),
        };
        node.renumber(NodePath::root());
        node
    }

    pub fn text_node(text: &str) -> Self {
        DomNode {
            kind: NodeKind::Text,
            tag: String::new(),
            attributes: Vec::new(),
            text: text.to_string(),
            children: Vec::new(),
            path: NodePath::root(),
        }
    }

    pub fn is_element(&self) -> bool {
        self.kind == NodeKind::Element
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn id(&self) -> Option<&str> {
        self.attr("id")
    }

    /// Concatenation of this element's direct text children.
    pub fn own_text(&self) -> String {
        self.children
            .iter()
            .filter(|c| c.kind == NodeKind::Text)
            .map(|c| c.text.as_str())
            .collect()
    }

    pub fn find(&self, path: &NodePath) -> Option<&DomNode> {
        let mut node = self;
        for &i in &path.0 {
            node = node.children.get(i)?;
        }
        Some(node)
    }

    pub fn find_mut(&mut self, path: &NodePath) -> Option<&mut DomNode> {
        let mut node = self;
        for &i in &path.0 {
            node = node.children.get_mut(i)?;
        }
        Some(node)
    }

    /// First element (document order) whose `id` attribute equals `id`.
    pub fn find_by_id(&self, id: &str) -> Option<&DomNode> {
        self.descendants()
            .find(|n| n.is_element() && n.id() == Some(id))
    }

    /// Pre-order traversal including `self`.
    pub fn descendants(&self) -> Descendants<'_> {
        Descendants { stack: vec![self] }
    }

    /// Reassigns paths so that this node sits at `path`.
    pub fn renumber(&mut self, path: NodePath) {
        for (i, child) in self.children.iter_mut().enumerate() {
            child.renumber(path.child(i));
        }
        self.path = path;
    }

    /// Serializes the subtree back to markup. The synthetic document node
    /// contributes only its children.
    pub fn to_html(&self) -> String {
        let mut out = String::new();
        self.write_html(&mut out, false);
        out
    }

    fn write_html(&self, out: &mut String, raw_parent: bool) {
        match self.kind {
            NodeKind::Text => {
                if raw_parent {
                    out.push_str(&self.text);
                } else {
                    escape_text(&self.text, out);
                }
            }
            NodeKind::Element => {
                if self.tag == DOCUMENT_TAG {
                    for c in &self.children {
                        c.write_html(out, false);
                    }
                    return;
                }
                out.push('<');
                out.push_str(&self.tag);
                for (k, v) in &self.attributes {
                    out.push(' ');
                    out.push_str(k);
                    out.push_str("=\"");
                    escape_attr(v, out);
                    out.push('"');
                }
                out.push('>');
                if is_void(&self.tag) {
                    return;
                }
                let raw = is_raw_text(&self.tag);
                for c in &self.children {
                    c.write_html(out, raw);
                }
                out.push_str("</");
                out.push_str(&self.tag);
                out.push('>');
            }
        }
    }
}

pub struct Descendants<'a> {
    stack: Vec<&'a DomNode>,
}

impl<'a> Iterator for Descendants<'a> {
    type Item = &'a DomNode;

    fn next(&mut self) -> Option<Self::Item> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}

/// Per-target facts supplied by the page driver. Layout and style are not
/// computed from markup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementProperties {
    pub visible: bool,
    pub focusable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tab_index: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accessible_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounding_box: Option<BoundingBox>,
}

impl Default for ElementProperties {
    fn default() -> Self {
        ElementProperties {
            visible: true,
            focusable: false,
            tab_index: None,
            accessible_name: None,
            contrast_ratio: None,
            bounding_box: None,
        }
    }
}

impl ElementProperties {
    pub fn validate(&self) -> Result<(), DomError> {
        if let Some(c) = self.contrast_ratio {
            if !(1.0..=21.0).contains(&c) {
                return Err(DomError::InvalidProperties(format!(
                    "contrast_ratio {c} outside [1, 21]"
                )));
            }
        }
        if let Some(b) = &self.bounding_box {
            if !(b.width >= 0.0 && b.height >= 0.0) {
                return Err(DomError::InvalidProperties(format!(
                    "bounding box {}x{} has a negative side",
                    b.width, b.height
                )));
            }
        }
        Ok(())
    }
}

/// CSS-pixel box, serialized as `[x, y, width, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

impl From<[f64; 4]> for BoundingBox {
    fn from(v: [f64; 4]) -> Self {
        BoundingBox {
            x: v[0],
            y: v[1],
            width: v[2],
            height: v[3],
        }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.width, b.height]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomSnapshot {
    pub raw_markup: String,
    pub root: DomNode,
    /// Driver clock, milliseconds.
    pub captured_at: u64,
}

impl DomSnapshot {
    pub fn node(&self, path: &NodePath) -> Option<&DomNode> {
        self.root.find(path)
    }

    /// Resolves a fixture-style selector: `#id` or a node path such as `/0/1`.
    pub fn resolve(&self, selector: &str) -> Option<NodePath> {
        if let Some(id) = selector.strip_prefix('#') {
            return self.root.find_by_id(id).map(|n| n.path.clone());
        }
        let path: NodePath = selector.parse().ok()?;
        self.node(&path).map(|n| n.path.clone())
    }

    /// Builds a snapshot from an already-constructed tree; the markup is the
    /// tree's serialization.
    pub fn from_tree(mut root: DomNode, captured_at: u64) -> Self {
        root.renumber(NodePath::root());
        DomSnapshot {
            raw_markup: root.to_html(),
            root,
            captured_at,
        }
    }
}

pub fn parse_snapshot(markup: &str, captured_at: u64) -> Result<DomSnapshot, DomError> {
    if markup.trim().is_empty() {
        return Err(DomError::MarkupEmpty);
    }
    Ok(DomSnapshot {
        raw_markup: markup.to_string(),
        root: parse_markup(markup),
        captured_at,
    })
}

/// Canonical encoding of the element tree: tags and child order only.
/// Text nodes and attribute values are elided.
pub fn structural_signature(s: &DomSnapshot) -> String {
    node_signature(&s.root)
}

pub(crate) fn node_signature(node: &DomNode) -> String {
    let mut out = String::new();
    write_signature(node, &mut out);
    out
}

fn write_signature(node: &DomNode, out: &mut String) {
    out.push_str(&node.tag);
    let mut elements = node.children.iter().filter(|c| c.is_element()).peekable();
    if elements.peek().is_none() {
        return;
    }
    out.push('(');
    for (i, child) in elements.enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_signature(child, out);
    }
    out.push(')');
}

/// Non-whitespace text in document order, each paired with the path of the
/// element that contains it.
pub fn text_contents(s: &DomSnapshot) -> Vec<(NodePath, String)> {
    node_text_contents(&s.root)
}

pub(crate) fn node_text_contents(root: &DomNode) -> Vec<(NodePath, String)> {
    let mut out = Vec::new();
    for node in root.descendants() {
        for child in &node.children {
            if child.kind == NodeKind::Text && !child.text.trim().is_empty() {
                out.push((node.path.clone(), child.text.clone()));
            }
        }
    }
    out
}

// --- parsing -------------------------------------------------------------

const VOID_ELEMENTS: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param",
    "source", "track", "wbr",
];

const RAW_TEXT_ELEMENTS: &[&str] = &["script", "style", "textarea", "title"];

/// Elements whose start tag closes an open `p`.
const CLOSES_P: &[&str] = &[
    "address", "article", "aside", "blockquote", "details", "div", "dl", "fieldset",
    "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6", "header",
    "hgroup", "hr", "main", "menu", "nav", "ol", "p", "pre", "section", "table", "ul",
];

const SCOPE_BOUNDARY: &[&str] = &[
    "applet", "caption", "html", "table", "td", "th", "marquee", "object", "template", "button",
    DOCUMENT_TAG,
];

fn is_void(tag: &str) -> bool {
    VOID_ELEMENTS.contains(&tag)
}

fn is_raw_text(tag: &str) -> bool {
    RAW_TEXT_ELEMENTS.contains(&tag)
}

fn escape_text(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\u{a0}' => out.push_str("&nbsp;"),
            c => out.push(c),
        }
    }
}

fn escape_attr(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            '\u{a0}' => out.push_str("&nbsp;"),
            c => out.push(c),
        }
    }
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        let end = rest[1..]
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '#'))
            .map(|e| e + 1)
            .unwrap_or(rest.len());
        let name = &rest[1..end];
        let has_semi = rest[end..].starts_with(';');
        let decoded = match name {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            "nbsp" => Some('\u{a0}'),
            _ if name.starts_with("#x") || name.starts_with("#X") => {
                u32::from_str_radix(&name[2..], 16).ok().and_then(char::from_u32)
            }
            _ if name.starts_with('#') => name[1..].parse::<u32>().ok().and_then(char::from_u32),
            _ => None,
        };
        match decoded {
            Some(c) => {
                out.push(c);
                rest = &rest[end + usize::from(has_semi)..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

enum Token {
    Start {
        tag: String,
        attributes: Vec<(String, String)>,
        self_closing: bool,
    },
    End(String),
    Text(String),
}

struct Tokenizer<'a> {
    src: &'a str,
    pos: usize,
    /// Set after a raw-text start tag; the next token is its literal content.
    raw_until: Option<String>,
}

impl<'a> Tokenizer<'a> {
    fn new(src: &'a str) -> Self {
        Tokenizer {
            src,
            pos: 0,
            raw_until: None,
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn next_token(&mut self) -> Option<Token> {
        if let Some(tag) = self.raw_until.take() {
            let rest = self.rest();
            let lower = rest.to_ascii_lowercase();
            let close = format!("</{tag}");
            let end = lower.find(&close).unwrap_or(rest.len());
            self.pos += end;
            if end > 0 {
                return Some(Token::Text(rest[..end].to_string()));
            }
        }
        loop {
            let rest = self.rest();
            if rest.is_empty() {
                return None;
            }
            if let Some(after) = rest.strip_prefix('<') {
                if let Some(body) = after.strip_prefix("!--") {
                    let end = body.find("-->").map(|e| e + 3 + 3).unwrap_or(after.len());
                    self.pos += 1 + end;
                    continue;
                }
                if after.starts_with('!') || after.starts_with('?') {
                    let end = after.find('>').map(|e| e + 1).unwrap_or(after.len());
                    self.pos += 1 + end;
                    continue;
                }
                if let Some(close) = after.strip_prefix('/') {
                    if close.starts_with(|c: char| c.is_ascii_alphabetic()) {
                        let name_len = tag_name_len(close);
                        let tag = close[..name_len].to_ascii_lowercase();
                        let end = close.find('>').map(|e| e + 1).unwrap_or(close.len());
                        self.pos += 2 + end;
                        return Some(Token::End(tag));
                    }
                    if close.starts_with('>') {
                        self.pos += 3;
                        continue;
                    }
                } else if after.starts_with(|c: char| c.is_ascii_alphabetic()) {
                    return Some(self.start_tag());
                }
            }
            // Text runs up to the next '<' that could open markup.
            let mut end = rest.len();
            for (i, _) in rest.match_indices('<').filter(|(i, _)| *i > 0) {
                let next = rest[i + 1..].chars().next();
                if matches!(next, Some(c) if c.is_ascii_alphabetic() || c == '/' || c == '!' || c == '?')
                {
                    end = i;
                    break;
                }
            }
            self.pos += end;
            return Some(Token::Text(decode_entities(&rest[..end])));
        }
    }

    fn start_tag(&mut self) -> Token {
        let s = self.src;
        let mut i = self.pos + 1;
        let name_len = tag_name_len(&s[i..]);
        let tag = s[i..i + name_len].to_ascii_lowercase();
        i += name_len;
        let mut attributes: Vec<(String, String)> = Vec::new();
        let mut self_closing = false;
        let bytes = s.as_bytes();
        loop {
            while i < s.len() && (bytes[i] as char).is_ascii_whitespace() {
                i += 1;
            }
            if i >= s.len() {
                break;
            }
            match bytes[i] {
                b'>' => {
                    i += 1;
                    break;
                }
                b'/' => {
                    i += 1;
                    if i < s.len() && bytes[i] == b'>' {
                        self_closing = true;
                        i += 1;
                        break;
                    }
                    continue;
                }
                _ => {}
            }
            let name_start = i;
            while i < s.len() {
                let c = bytes[i];
                if c.is_ascii_whitespace() || c == b'=' || c == b'>' || (c == b'/' && i > name_start) {
                    break;
                }
                i += 1;
            }
            if i == name_start {
                // Stray '=' or similar; skip one byte.
                i += 1;
                continue;
            }
            let name = s[name_start..i].to_ascii_lowercase();
            while i < s.len() && (bytes[i] as char).is_ascii_whitespace() {
                i += 1;
            }
            let mut value = String::new();
            if i < s.len() && bytes[i] == b'=' {
                i += 1;
                while i < s.len() && (bytes[i] as char).is_ascii_whitespace() {
                    i += 1;
                }
                if i < s.len() && (bytes[i] == b'"' || bytes[i] == b'\'') {
                    let quote = bytes[i];
                    let start = i + 1;
                    let end = s[start..]
                        .bytes()
                        .position(|b| b == quote)
                        .map(|p| start + p)
                        .unwrap_or(s.len());
                    value = decode_entities(&s[start..end]);
                    i = (end + 1).min(s.len());
                } else {
                    let start = i;
                    while i < s.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'>' {
                        i += 1;
                    }
                    value = decode_entities(&s[start..i]);
                }
            }
            if !attributes.iter().any(|(k, _)| *k == name) {
                attributes.push((name, value));
            }
        }
        self.pos = i;
        if is_raw_text(&tag) && !self_closing {
            self.raw_until = Some(tag.clone());
        }
        Token::Start {
            tag,
            attributes,
            self_closing,
        }
    }
}

fn tag_name_len(s: &str) -> usize {
    s.find(|c: char| !(c.is_ascii_alphanumeric() || c == '-' || c == ':' || c == '_' || c == '.'))
        .unwrap_or(s.len())
}

struct TreeBuilder {
    stack: Vec<DomNode>,
}

impl TreeBuilder {
    fn new() -> Self {
        TreeBuilder {
            stack: vec![DomNode {
                kind: NodeKind::Element,
                tag: DOCUMENT_TAG.to_string(),
                attributes: Vec::new(),
                text: String::new(),
                children: Vec::new(),
                path: NodePath::root(),
            }],
        }
    }

    fn pop(&mut self) {
        if self.stack.len() > 1 {
            let node = self.stack.pop().expect("stack is non-empty");
            self.stack.last_mut().expect("document remains").children.push(node);
        }
    }

    /// Index of the nearest open `tag`, searching downward until a boundary.
    fn in_scope(&self, tag: &str, boundary: &[&str]) -> Option<usize> {
        for (i, node) in self.stack.iter().enumerate().rev() {
            if node.tag == tag {
                return Some(i);
            }
            if SCOPE_BOUNDARY.contains(&node.tag.as_str()) || boundary.contains(&node.tag.as_str()) {
                return None;
            }
        }
        None
    }

    fn close_to(&mut self, index: usize) {
        while self.stack.len() > index {
            self.pop();
        }
    }

    fn start(&mut self, tag: String, attributes: Vec<(String, String)>, self_closing: bool) {
        if CLOSES_P.contains(&tag.as_str()) {
            if let Some(i) = self.in_scope("p", &[]) {
                self.close_to(i);
            }
        }
        match tag.as_str() {
            "li" => {
                if let Some(i) = self.in_scope("li", &["ul", "ol"]) {
                    self.close_to(i);
                }
            }
            "dt" | "dd" => {
                let dt = self.in_scope("dt", &["dl"]);
                let dd = self.in_scope("dd", &["dl"]);
                if let Some(i) = dt.into_iter().chain(dd).min() {
                    self.close_to(i);
                }
            }
            "option" => {
                if self.stack.last().map(|n| n.tag == "option").unwrap_or(false) {
                    self.pop();
                }
            }
            "tr" => {
                if let Some(i) = self.in_scope("tr", &["tbody", "thead", "tfoot"]) {
                    self.close_to(i);
                }
            }
            "td" | "th" => {
                let td = self.in_scope("td", &["tr"]);
                let th = self.in_scope("th", &["tr"]);
                if let Some(i) = td.into_iter().chain(th).min() {
                    self.close_to(i);
                }
            }
            _ => {}
        }
        let node = DomNode {
            kind: NodeKind::Element,
            tag,
            attributes,
            text: String::new(),
            children: Vec::new(),
            path: NodePath::root(),
        };
        let void = is_void(&node.tag);
        self.stack.push(node);
        if void || self_closing {
            self.pop();
        }
    }

    fn end(&mut self, tag: &str) {
        // Closing an element closes everything opened inside it.
        if let Some(i) = self.stack.iter().rposition(|n| n.tag == tag) {
            if i > 0 {
                self.close_to(i);
            }
        }
    }

    fn text(&mut self, text: String) {
        if text.trim().is_empty() {
            return;
        }
        let parent = self.stack.last_mut().expect("document remains");
        if let Some(last) = parent.children.last_mut() {
            if last.kind == NodeKind::Text {
                last.text.push_str(&text);
                return;
            }
        }
        parent.children.push(DomNode::text_node(&text));
    }

    fn finish(mut self) -> DomNode {
        self.close_to(1);
        let mut root = self.stack.pop().expect("document remains");
        root.renumber(NodePath::root());
        root
    }
}

/// Parses markup into a tree rooted at a synthetic `#document` element.
pub fn parse_markup(markup: &str) -> DomNode {
    let mut tokenizer = Tokenizer::new(markup);
    let mut builder = TreeBuilder::new();
    while let Some(token) = tokenizer.next_token() {
        match token {
            Token::Start {
                tag,
                attributes,
                self_closing,
            } => builder.start(tag, attributes, self_closing),
            Token::End(tag) => builder.end(&tag),
            Token::Text(text) => builder.text(text),
        }
    }
    builder.finish()
}
