// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

//! Portable test-case and test-logic representations.
//!
//! A [`TestCase`] is an ordered list of concrete events and assertions read
//! from a JSON document. A [`TestLogic`] is the app-independent view of the
//! same steps, rendered through two line templates:
//!
//! ```text
//! (Event) Click or Swipe a widget [Add] with [value]
//! (Assertion) Check a widget [sample to do] [appears]
//! ```
//!
//! Both templates parse back losslessly with [`parse_logic_step`].

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("format error in line {line:?}: {reason}")]
    Format { line: String, reason: String },
}

impl IrError {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        IrError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    fn format(line: &str, reason: impl Into<String>) -> Self {
        IrError::Format {
            line: line.to_string(),
            reason: reason.into(),
        }
    }
}

/// The five GUI actions an event may perform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    #[serde(rename = "click")]
    Click,
    #[serde(rename = "edit")]
    Edit,
    #[serde(rename = "swipe")]
    Swipe,
    #[serde(rename = "scroll")]
    Scroll,
    #[serde(rename = "long-press")]
    LongPress,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::Click,
        ActionKind::Edit,
        ActionKind::Swipe,
        ActionKind::Scroll,
        ActionKind::LongPress,
    ];

    /// Lower-case keyword used in documents and on the wire.
    pub fn keyword(self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::Edit => "edit",
            ActionKind::Swipe => "swipe",
            ActionKind::Scroll => "scroll",
            ActionKind::LongPress => "long-press",
        }
    }

    /// Capitalized form used inside rendered logic steps.
    pub fn template_word(self) -> &'static str {
        match self {
            ActionKind::Click => "Click",
            ActionKind::Edit => "Edit",
            ActionKind::Swipe => "Swipe",
            ActionKind::Scroll => "Scroll",
            ActionKind::LongPress => "Long-press",
        }
    }

    /// Case-insensitive lookup of a canonical action word.
    pub fn from_keyword(token: &str) -> Option<Self> {
        let token = token.trim();
        ActionKind::ALL
            .into_iter()
            .find(|a| a.keyword().eq_ignore_ascii_case(token))
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl FromStr for ActionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionKind::from_keyword(s).ok_or_else(|| format!("unknown action `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionKind {
    Present,
    Absent,
}

impl ConditionKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ConditionKind::Present => "present",
            ConditionKind::Absent => "absent",
        }
    }

    /// Surface text inside the assertion template.
    pub fn phrase(self) -> &'static str {
        match self {
            ConditionKind::Present => "appears",
            ConditionKind::Absent => "disappears",
        }
    }

    /// Reads a condition phrase written by a human or a model.
    pub fn from_phrase(phrase: &str) -> Option<Self> {
        let p = phrase.trim().to_ascii_lowercase();
        match p.as_str() {
            "appears" | "appear" | "present" | "exists" | "is displayed" => {
                Some(ConditionKind::Present)
            }
            "disappears" | "disappear" | "absent" | "does not appear" | "no longer appears"
            | "not present" => Some(ConditionKind::Absent),
            _ => None,
        }
    }
}

/// A widget described by its three semantic attributes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct WidgetRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_desc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_id: Option<String>,
}

fn clean(value: Option<&str>) -> Option<String> {
    value
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
}

impl WidgetRef {
    /// Trims every attribute and drops empty ones; fails when nothing is left.
    pub fn new(
        text: Option<&str>,
        content_desc: Option<&str>,
        resource_id: Option<&str>,
    ) -> Result<Self, IrError> {
        let w = WidgetRef {
            text: clean(text),
            content_desc: clean(content_desc),
            resource_id: clean(resource_id),
        };
        if w.is_empty() {
            return Err(IrError::schema(
                "widget",
                "widget needs a non-empty text, content_desc or resource_id",
            ));
        }
        Ok(w)
    }

    pub fn with_text(text: &str) -> Self {
        WidgetRef {
            text: clean(Some(text)),
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_none() && self.content_desc.is_none() && self.resource_id.is_none()
    }

    /// Non-empty attributes in the fixed order text, content-desc, resource-id.
    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        [&self.text, &self.content_desc, &self.resource_id]
            .into_iter()
            .filter_map(|a| a.as_deref())
    }

    /// Text placed inside the widget bracket of a rendered step.
    pub fn phrase(&self) -> String {
        self.attributes().collect::<Vec<_>>().join(" | ")
    }

    pub fn identity(&self) -> WidgetIdentity {
        WidgetIdentity::of(
            self.text.as_deref(),
            self.content_desc.as_deref(),
            self.resource_id.as_deref(),
        )
    }
}

impl fmt::Display for WidgetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.phrase())
    }
}

/// Identity of a widget across GUI states: the resource id when present,
/// otherwise the (text, content-desc) pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WidgetIdentity {
    ResourceId(String),
    Semantic {
        text: Option<String>,
        content_desc: Option<String>,
    },
}

impl WidgetIdentity {
    pub fn of(text: Option<&str>, content_desc: Option<&str>, resource_id: Option<&str>) -> Self {
        match clean(resource_id) {
            Some(rid) => WidgetIdentity::ResourceId(rid),
            None => WidgetIdentity::Semantic {
                text: clean(text),
                content_desc: clean(content_desc),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventStep {
    pub widget: WidgetRef,
    pub action: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionStep {
    pub widget: WidgetRef,
    pub condition: ConditionKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TestStep {
    Event(EventStep),
    Assertion(AssertionStep),
}

impl TestStep {
    pub fn kind(&self) -> StepKind {
        match self {
            TestStep::Event(_) => StepKind::Event,
            TestStep::Assertion(_) => StepKind::Assertion,
        }
    }

    pub fn widget(&self) -> &WidgetRef {
        match self {
            TestStep::Event(e) => &e.widget,
            TestStep::Assertion(a) => &a.widget,
        }
    }

    /// Renders the step through the logic template (no numbering).
    pub fn render(&self) -> String {
        render_logic_step(&logic_step_for(1, self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub app_id: String,
    pub category: String,
    pub functionality: String,
    pub steps: Vec<TestStep>,
}

impl TestCase {
    pub fn event_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s, TestStep::Event(_)))
            .count()
    }

    pub fn assertion_count(&self) -> usize {
        self.steps.len() - self.event_count()
    }

    /// Pretty JSON following the test-case schema.
    pub fn to_document(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("test case serializes");
        s.push('\n');
        s
    }
}

fn get_str<'a>(
    obj: &'a serde_json::Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<Option<&'a str>, IrError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.as_str())),
        Some(_) => Err(IrError::schema(
            format!("{path}.{key}"),
            "expected a string",
        )),
    }
}

fn require_str<'a>(
    obj: &'a serde_json::Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<&'a str, IrError> {
    get_str(obj, key, path)?
        .ok_or_else(|| IrError::schema(format!("{path}.{key}"), "missing required field"))
}

fn parse_widget(value: Option<&Value>, path: &str) -> Result<WidgetRef, IrError> {
    let path = format!("{path}.widget");
    let obj = value
        .and_then(Value::as_object)
        .ok_or_else(|| IrError::schema(&path, "missing widget object"))?;
    WidgetRef::new(
        get_str(obj, "text", &path)?,
        get_str(obj, "content_desc", &path)?,
        get_str(obj, "resource_id", &path)?,
    )
    .map_err(|_| {
        IrError::schema(
            &path,
            "widget needs a non-empty text, content_desc or resource_id",
        )
    })
}

pub(crate) fn parse_step(value: &Value, path: &str) -> Result<TestStep, IrError> {
    let obj = value
        .as_object()
        .ok_or_else(|| IrError::schema(path, "expected an object"))?;
    let kind = require_str(obj, "type", path)?;
    let widget = parse_widget(obj.get("widget"), path)?;
    match kind {
        "event" => {
            let action_text = require_str(obj, "action", path)?;
            let action = ActionKind::from_keyword(action_text).ok_or_else(|| {
                IrError::schema(
                    format!("{path}.action"),
                    format!("unknown action `{action_text}`"),
                )
            })?;
            let value = clean(get_str(obj, "value", path)?);
            match (action, &value) {
                (ActionKind::Edit, None) => Err(IrError::schema(
                    format!("{path}.value"),
                    "edit events require a value",
                )),
                (a, Some(_)) if a != ActionKind::Edit => Err(IrError::schema(
                    format!("{path}.value"),
                    format!("{a} events take no value"),
                )),
                _ => Ok(TestStep::Event(EventStep {
                    widget,
                    action,
                    value,
                })),
            }
        }
        "assertion" => {
            let cond_text = require_str(obj, "condition", path)?;
            let condition = match cond_text {
                "present" => ConditionKind::Present,
                "absent" => ConditionKind::Absent,
                other => {
                    return Err(IrError::schema(
                        format!("{path}.condition"),
                        format!("unknown condition `{other}`"),
                    ))
                }
            };
            Ok(TestStep::Assertion(AssertionStep { widget, condition }))
        }
        other => Err(IrError::schema(
            format!("{path}.type"),
            format!("unknown step type `{other}`"),
        )),
    }
}

/// Parses a test-case JSON document. Unknown fields are ignored.
pub fn parse_test_case(document: &str) -> Result<TestCase, IrError> {
    let root: Value = serde_json::from_str(document)
        .map_err(|e| IrError::schema("$", format!("invalid JSON: {e}")))?;
    let obj = root
        .as_object()
        .ok_or_else(|| IrError::schema("$", "expected an object"))?;
    let app_id = require_str(obj, "app_id", "$")?.trim().to_string();
    let category = require_str(obj, "category", "$")?.trim().to_string();
    let functionality = require_str(obj, "functionality", "$")?.trim().to_string();
    let steps = obj
        .get("steps")
        .and_then(Value::as_array)
        .ok_or_else(|| IrError::schema("$.steps", "missing steps array"))?;
    if steps.is_empty() {
        return Err(IrError::schema("$.steps", "a test case needs at least one step"));
    }
    let steps = steps
        .iter()
        .enumerate()
        .map(|(i, s)| parse_step(s, &format!("$.steps[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TestCase {
        app_id,
        category,
        functionality,
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Event,
    Assertion,
}

impl StepKind {
    pub fn marker(self) -> &'static str {
        match self {
            StepKind::Event => "(Event)",
            StepKind::Assertion => "(Assertion)",
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepKind::Event => "event",
            StepKind::Assertion => "assertion",
        })
    }
}

/// The action slot of a logic step.
///
/// `Unrecognized` keeps the raw phrase of a step whose action is outside the
/// canonical vocabulary, so validation rather than parsing reports it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    Actions(Vec<ActionKind>),
    Check,
    Unrecognized(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicStep {
    pub index: usize,
    pub kind: StepKind,
    pub action: StepAction,
    pub widget_phrase: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_phrase: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_phrase: Option<String>,
}

impl LogicStep {
    pub fn event(
        index: usize,
        actions: Vec<ActionKind>,
        widget_phrase: impl Into<String>,
        value_phrase: Option<String>,
    ) -> Self {
        LogicStep {
            index,
            kind: StepKind::Event,
            action: StepAction::Actions(actions),
            widget_phrase: widget_phrase.into(),
            value_phrase,
            condition_phrase: None,
        }
    }

    pub fn assertion(
        index: usize,
        widget_phrase: impl Into<String>,
        condition: ConditionKind,
    ) -> Self {
        LogicStep {
            index,
            kind: StepKind::Assertion,
            action: StepAction::Check,
            widget_phrase: widget_phrase.into(),
            value_phrase: None,
            condition_phrase: Some(condition.phrase().to_string()),
        }
    }

    /// Canonical action alternatives; empty for assertions and raw actions.
    pub fn actions(&self) -> &[ActionKind] {
        match &self.action {
            StepAction::Actions(a) => a,
            _ => &[],
        }
    }

    pub fn condition(&self) -> Option<ConditionKind> {
        self.condition_phrase
            .as_deref()
            .and_then(ConditionKind::from_phrase)
    }

    /// True when the action token belongs to the vocabulary for the step kind.
    pub fn has_canonical_action(&self) -> bool {
        match (self.kind, &self.action) {
            (StepKind::Event, StepAction::Actions(a)) => !a.is_empty(),
            (StepKind::Assertion, StepAction::Check) => true,
            _ => false,
        }
    }

    pub fn action_phrase(&self) -> String {
        match &self.action {
            StepAction::Actions(a) => a
                .iter()
                .map(|a| a.template_word())
                .collect::<Vec<_>>()
                .join(" or "),
            StepAction::Check => "Check".to_string(),
            StepAction::Unrecognized(raw) => raw.clone(),
        }
    }

    /// `Step k "<rendered>"`, the form used to fill feedback placeholders.
    pub fn label(&self) -> String {
        format!("Step {} \"{}\"", self.index, render_logic_step(self))
    }
}

/// Renders a logic step as exactly one template line, without numbering.
pub fn render_logic_step(step: &LogicStep) -> String {
    let mut out = format!(
        "{} {} a widget [{}]",
        step.kind.marker(),
        step.action_phrase(),
        step.widget_phrase
    );
    match step.kind {
        StepKind::Event => {
            if let Some(v) = &step.value_phrase {
                out.push_str(&format!(" with [{v}]"));
            }
        }
        StepKind::Assertion => {
            out.push_str(&format!(
                " [{}]",
                step.condition_phrase.as_deref().unwrap_or_default()
            ));
        }
    }
    out
}

/// `Step k: <rendered>`.
pub fn render_numbered(step: &LogicStep) -> String {
    format!("Step {}: {}", step.index, render_logic_step(step))
}

fn numbering_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?i)(?:[-*]\s*)?(?:step\s*(\d+)\s*[:.)\-]?|(\d+)\s*[.):])\s*")
            .expect("numbering regex")
    })
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?i)\((event|assertion)\)\s*").expect("marker regex"))
}

fn body_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?is)(?P<action>.+?)\s+a\s+widget\s*\[(?P<widget>[^\[\]\n]*)\](?P<tail>.*)$")
            .expect("body regex")
    })
}

fn event_tail_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?i)\s*(?:with\s*\[(?P<value>[^\[\]\n]*)\])?\s*\.?\s*$")
            .expect("event tail regex")
    })
}

fn assertion_tail_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*\[(?P<cond>[^\[\]\n]*)\]\s*\.?\s*$").expect("assertion tail regex")
    })
}

fn or_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\s+or\s+").expect("or regex"))
}

/// Strips a leading `Step k:` / `k.` prefix, returning the number if any.
fn strip_numbering(line: &str) -> (Option<usize>, &str) {
    match numbering_re().captures(line) {
        Some(c) => {
            let n = c
                .get(1)
                .or_else(|| c.get(2))
                .and_then(|m| m.as_str().parse().ok());
            (n, &line[c.get(0).map_or(0, |m| m.end())..])
        }
        None => (None, line),
    }
}

/// Parses one template line. The step index is taken from a numbering
/// prefix when present and defaults to 1; callers parsing whole logics
/// renumber steps themselves.
pub fn parse_logic_step(line: &str) -> Result<LogicStep, IrError> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return Err(IrError::format(line, "empty line"));
    }
    let (index, rest) = strip_numbering(trimmed);
    let marker = marker_re()
        .captures(rest)
        .ok_or_else(|| IrError::format(line, "missing (Event) or (Assertion) marker"))?;
    let kind = if marker[1].eq_ignore_ascii_case("event") {
        StepKind::Event
    } else {
        StepKind::Assertion
    };
    let body = &rest[marker.get(0).map_or(0, |m| m.end())..];
    let caps = body_re()
        .captures(body)
        .ok_or_else(|| IrError::format(line, "expected `<Action> a widget [<Widget>]`"))?;
    let action_text = caps["action"].trim();
    let widget_phrase = caps["widget"].trim().to_string();
    if widget_phrase.is_empty() {
        return Err(IrError::format(line, "empty widget field"));
    }
    let tail = &caps["tail"];

    let action = match kind {
        StepKind::Event => {
            let tokens: Vec<&str> = or_re().split(action_text).collect();
            let parsed: Option<Vec<ActionKind>> =
                tokens.iter().map(|t| ActionKind::from_keyword(t)).collect();
            match parsed {
                Some(a) if !a.is_empty() => StepAction::Actions(a),
                _ => StepAction::Unrecognized(action_text.to_string()),
            }
        }
        StepKind::Assertion => {
            if action_text.eq_ignore_ascii_case("check") {
                StepAction::Check
            } else {
                StepAction::Unrecognized(action_text.to_string())
            }
        }
    };

    let (value_phrase, condition_phrase) = match kind {
        StepKind::Event => {
            let t = event_tail_re()
                .captures(tail)
                .ok_or_else(|| IrError::format(line, "unexpected text after the widget field"))?;
            (t.name("value").map(|m| m.as_str().trim().to_string()), None)
        }
        StepKind::Assertion => {
            let t = assertion_tail_re()
                .captures(tail)
                .ok_or_else(|| IrError::format(line, "expected a [Condition] field"))?;
            let cond = t["cond"].trim().to_string();
            if cond.is_empty() {
                return Err(IrError::format(line, "empty condition field"));
            }
            (None, Some(cond))
        }
    };

    Ok(LogicStep {
        index: index.unwrap_or(1),
        kind,
        action,
        widget_phrase,
        value_phrase,
        condition_phrase,
    })
}

/// Result of reading a multi-line model response as a list of steps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedSteps {
    pub steps: Vec<LogicStep>,
    /// Lines that looked like steps but did not match either template.
    pub rejected: Vec<String>,
}

fn looks_like_step(line: &str) -> bool {
    let lower = line.to_ascii_lowercase();
    lower.contains("(event)") || lower.contains("(assertion)") || strip_numbering(line).0.is_some()
}

/// Parses every step-looking line of `text`; prose lines are ignored.
/// Indices are recomputed as 1..n.
pub fn parse_logic_lines(text: &str) -> ParsedSteps {
    let mut parsed = ParsedSteps::default();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if !looks_like_step(line) {
            continue;
        }
        match parse_logic_step(line) {
            Ok(mut step) => {
                step.index = parsed.steps.len() + 1;
                parsed.steps.push(step);
            }
            Err(_) => parsed.rejected.push(line.to_string()),
        }
    }
    parsed
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Individual { app_id: String },
    General { app_ids: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestLogic {
    pub functionality: String,
    pub category: String,
    pub steps: Vec<LogicStep>,
    pub provenance: Provenance,
}

impl TestLogic {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Numbered step lines, one per line.
    pub fn render_steps(&self) -> String {
        self.steps
            .iter()
            .map(render_numbered)
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Logic file: `#` header lines followed by numbered step lines.
    pub fn to_document(&self) -> String {
        let provenance = match &self.provenance {
            Provenance::Individual { app_id } => format!("individual {app_id}"),
            Provenance::General { app_ids } => format!("general {}", app_ids.join(",")),
        };
        let mut out = format!(
            "# functionality: {}\n# category: {}\n# provenance: {}\n",
            self.functionality, self.category, provenance
        );
        for step in &self.steps {
            out.push_str(&render_numbered(step));
            out.push('\n');
        }
        out
    }

    pub fn parse_document(document: &str) -> Result<TestLogic, IrError> {
        let mut functionality = None;
        let mut category = None;
        let mut provenance = None;
        let mut steps = Vec::new();
        for (lineno, raw) in document.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                let (key, value) = header.split_once(':').ok_or_else(|| {
                    IrError::schema(format!("line {}", lineno + 1), "malformed header")
                })?;
                let value = value.trim().to_string();
                match key.trim() {
                    "functionality" => functionality = Some(value),
                    "category" => category = Some(value),
                    "provenance" => {
                        let (kind, ids) = value.split_once(' ').unwrap_or((value.as_str(), ""));
                        let ids: Vec<String> = ids
                            .split(',')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(str::to_string)
                            .collect();
                        provenance = Some(match kind {
                            "individual" => Provenance::Individual {
                                app_id: ids.into_iter().next().unwrap_or_default(),
                            },
                            "general" => Provenance::General { app_ids: ids },
                            other => {
                                return Err(IrError::schema(
                                    format!("line {}", lineno + 1),
                                    format!("unknown provenance `{other}`"),
                                ))
                            }
                        });
                    }
                    _ => {}
                }
                continue;
            }
            let mut step = parse_logic_step(line)?;
            step.index = steps.len() + 1;
            steps.push(step);
        }
        Ok(TestLogic {
            functionality: functionality
                .ok_or_else(|| IrError::schema("header", "missing functionality"))?,
            category: category.ok_or_else(|| IrError::schema("header", "missing category"))?,
            steps,
            provenance: provenance
                .ok_or_else(|| IrError::schema("header", "missing provenance"))?,
        })
    }
}

fn logic_step_for(index: usize, step: &TestStep) -> LogicStep {
    match step {
        TestStep::Event(e) => LogicStep::event(
            index,
            vec![e.action],
            e.widget.phrase(),
            e.value.clone(),
        ),
        TestStep::Assertion(a) => LogicStep::assertion(index, a.widget.phrase(), a.condition),
    }
}

/// Individual test logic of one test case: one templated step per case step.
pub fn extract_logic(case: &TestCase) -> TestLogic {
    TestLogic {
        functionality: case.functionality.clone(),
        category: case.category.clone(),
        steps: case
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| logic_step_for(i + 1, s))
            .collect(),
        provenance: Provenance::Individual {
            app_id: case.app_id.clone(),
        },
    }
}
