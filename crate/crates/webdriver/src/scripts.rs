//! Scripts executed in the page. Each starts with a marker comment naming
//! its role so recorded traffic and the mock remote end can tell them apart.
//!
//! Node paths are computed over the same child list the snapshot parser
//! keeps: element children and non-whitespace text, with comments skipped
//! and adjacent text merged. The body element is the path root.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptKind {
    Capture,
    Targets,
    Resolve,
    Focus,
    Blur,
}

impl ScriptKind {
    pub const ALL: [ScriptKind; 5] = [
        ScriptKind::Capture,
        ScriptKind::Targets,
        ScriptKind::Resolve,
        ScriptKind::Focus,
        ScriptKind::Blur,
    ];

    pub fn source(self) -> &'static str {
        match self {
            ScriptKind::Capture => CAPTURE,
            ScriptKind::Targets => TARGETS,
            ScriptKind::Resolve => RESOLVE,
            ScriptKind::Focus => FOCUS,
            ScriptKind::Blur => BLUR,
        }
    }

    pub fn marker(self) -> &'static str {
        match self {
            ScriptKind::Capture => "/*demodocus:capture*/",
            ScriptKind::Targets => "/*demodocus:targets*/",
            ScriptKind::Resolve => "/*demodocus:resolve*/",
            ScriptKind::Focus => "/*demodocus:focus*/",
            ScriptKind::Blur => "/*demodocus:blur*/",
        }
    }

    pub fn identify(script: &str) -> Option<ScriptKind> {
        ScriptKind::ALL.into_iter().find(|k| script.starts_with(k.marker()))
    }
}

macro_rules! path_helpers {
    () => {
        r#"
function kids(el) {
  const out = [];
  let lastText = false;
  for (const n of el.childNodes) {
    if (n.nodeType === 1) { out.push(n); lastText = false; }
    else if (n.nodeType === 3 && n.textContent.trim() !== '') { if (!lastText) out.push(n); lastText = true; }
  }
  return out;
}
function pathOf(node) {
  const path = [];
  while (node !== document.body) {
    const parent = node.parentNode;
    if (!parent) return null;
    const i = kids(parent).indexOf(node);
    if (i < 0) return null;
    path.unshift(i);
    node = parent;
  }
  return path;
}
function resolve(path) {
  let node = document.body;
  for (const i of path) {
    if (!node || node.nodeType !== 1) return null;
    node = kids(node)[i];
  }
  return node && node.nodeType === 1 ? node : null;
}
"#
    };
}

const CAPTURE: &str = "/*demodocus:capture*/\nreturn document.body ? document.body.innerHTML : '';";

const RESOLVE: &str = concat!("/*demodocus:resolve*/", path_helpers!(), "return resolve(arguments[0]);");

const FOCUS: &str = "/*demodocus:focus*/\narguments[0].focus(); return null;";

const BLUR: &str = "/*demodocus:blur*/\narguments[0].blur(); return null;";

/// Lists focusable elements and elements with known listeners. Listener
/// introspection is not standardized: a page may expose a `Map` from element
/// to event names as `window.__demodocusListeners`; otherwise inline `on*`
/// handlers and the native activation behavior of interactive tags are used.
const TARGETS: &str = concat!(
    "/*demodocus:targets*/",
    path_helpers!(),
    r#"
const EVENTS = ['click', 'dblclick', 'mouseover', 'mouseenter', 'mouseout', 'mouseleave',
  'focus', 'blur', 'focusin', 'focusout', 'keydown', 'keypress', 'keyup'];
const FOCUSABLE = 'a[href],area[href],button,input:not([type=hidden]),select,textarea,summary,iframe,[contenteditable=""],[contenteditable=true]';
const registry = window.__demodocusListeners;
function handlers(el) {
  const found = new Set();
  if (registry && typeof registry.get === 'function') for (const e of registry.get(el) || []) found.add(String(e));
  for (const e of EVENTS) if (typeof el['on' + e] === 'function' || el.hasAttribute('on' + e)) found.add(e);
  const tag = el.tagName.toLowerCase();
  const type = (el.getAttribute('type') || '').toLowerCase();
  const pressable = tag === 'button' || (tag === 'input' && ['button', 'submit', 'reset', 'checkbox', 'radio', 'image'].includes(type));
  if ((tag === 'a' && el.hasAttribute('href')) || tag === 'summary' || pressable) { found.add('click'); found.add('keydown:Enter'); }
  if (pressable) found.add('keyup:Space');
  return Array.from(found).sort();
}
function rgba(s) {
  const m = /rgba?\(([^)]+)\)/.exec(s || '');
  if (!m) return null;
  const p = m[1].split(/[ ,\/]+/).filter(x => x).map(parseFloat);
  return [p[0], p[1], p[2], p.length > 3 ? p[3] : 1];
}
function luminance(c) {
  const ch = c.slice(0, 3).map(v => { v /= 255; return v <= 0.03928 ? v / 12.92 : Math.pow((v + 0.055) / 1.055, 2.4); });
  return 0.2126 * ch[0] + 0.7152 * ch[1] + 0.0722 * ch[2];
}
function contrast(el) {
  const fg = rgba(getComputedStyle(el).color);
  if (!fg) return null;
  let bg = [255, 255, 255, 1];
  for (let n = el; n && n.nodeType === 1; n = n.parentElement) {
    const c = rgba(getComputedStyle(n).backgroundColor);
    if (c && c[3] > 0) { bg = c; break; }
  }
  const a = luminance(fg), b = luminance(bg);
  return Math.round(((Math.max(a, b) + 0.05) / (Math.min(a, b) + 0.05)) * 100) / 100;
}
function accessibleName(el) {
  const label = el.getAttribute('aria-label');
  if (label && label.trim()) return label.trim();
  const by = el.getAttribute('aria-labelledby');
  if (by) {
    const t = by.split(/\s+/).map(id => document.getElementById(id)).filter(x => x).map(x => x.textContent.trim()).join(' ');
    if (t) return t;
  }
  if (el.id) {
    const l = document.querySelector('label[for="' + CSS.escape(el.id) + '"]');
    if (l && l.textContent.trim()) return l.textContent.trim();
  }
  const wrap = el.closest('label');
  if (wrap && wrap.textContent.trim()) return wrap.textContent.trim();
  for (const attr of ['alt', 'title']) {
    const v = el.getAttribute(attr);
    if (v && v.trim()) return v.trim();
  }
  if (el.tagName.toLowerCase() === 'input' && el.value) return String(el.value);
  const text = (el.textContent || '').trim();
  return text ? text : null;
}
function describe(el) {
  const path = pathOf(el);
  if (!path) return null;
  const r = el.getBoundingClientRect();
  const cs = getComputedStyle(el);
  const tabAttr = el.getAttribute('tabindex');
  const tab = tabAttr === null ? null : parseInt(tabAttr, 10);
  return {
    path: path,
    handlers: handlers(el),
    visible: r.width > 0 && r.height > 0 && cs.visibility !== 'hidden' && cs.display !== 'none',
    focusable: !el.disabled && (tabAttr !== null || el.matches(FOCUSABLE)),
    tabIndex: Number.isNaN(tab) ? null : tab,
    name: accessibleName(el),
    contrast: contrast(el),
    box: [r.left + window.scrollX, r.top + window.scrollY, r.width, r.height]
  };
}
if (arguments.length > 0 && arguments[0] !== null) {
  const el = resolve(arguments[0]);
  return el ? describe(el) : null;
}
const out = [];
if (!document.body) return out;
for (const el of document.body.querySelectorAll('*')) {
  const d = describe(el);
  if (d && (d.focusable || d.handlers.length > 0)) out.push(d);
}
return out;
"#
);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markers_identify_scripts() {
        for k in ScriptKind::ALL {
            assert_eq!(ScriptKind::identify(k.source()), Some(k));
        }
        assert_eq!(ScriptKind::identify("return 1;"), None);
    }
}
