// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

//! Deterministic GUI-app simulator driven by declarative JSON app specs.
//!
//! An app spec declares states (lists of widgets), transitions keyed by
//! `(state, widget, action)` and the effects each transition applies.
//! Widgets added at runtime come from templates whose strings may reference
//! `${var}` placeholders; the template id stays the transition key for every
//! widget instantiated from it.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{
    Bounds, ConcreteEvent, CoverageSet, Device, DriverError, ExecOutcome, GuiState, StateWidget,
};
use crate::ir::ActionKind;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("sim-app schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unknown functionality `{0}`")]
    UnknownFunctionality(String),
    #[error("unknown bundled app `{0}`")]
    UnknownApp(String),
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> SimError {
    SimError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimWidgetSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_desc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_id: Option<String>,
    pub bounds: Bounds,
    #[serde(default)]
    pub actions: Vec<ActionKind>,
}

impl SimWidgetSpec {
    fn has_semantics(&self) -> bool {
        [&self.text, &self.content_desc, &self.resource_id]
            .iter()
            .any(|a| a.as_deref().is_some_and(|s| !s.trim().is_empty()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarSource {
    /// The value typed by the triggering edit event.
    FromInput,
    /// A literal, itself subject to `${var}` substitution.
    Literal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEffect {
    Goto(String),
    SetVar { name: String, source: VarSource },
    AddWidget { state: String, widget: SimWidgetSpec },
    RemoveWidget { state: String, widget_id: String },
    NoOp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTransition {
    pub state: String,
    pub widget: String,
    pub action: ActionKind,
    #[serde(default)]
    pub effects: Vec<SimEffect>,
}

/// Attribute pattern; every given field must match exactly after
/// `${var}` substitution from the final variable store.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidgetPattern {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_desc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleAtom {
    EventOccurred {
        widget: WidgetPattern,
        action: ActionKind,
    },
    VarEquals {
        name: String,
        value: String,
    },
    WidgetAbsentInFinal(WidgetPattern),
    WidgetPresentAtSomeState(WidgetPattern),
}

/// Conjunction of atoms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OracleSpec(pub Vec<OracleAtom>);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimAppSpec {
    pub app_id: String,
    pub category: String,
    pub initial_state: String,
    pub states: BTreeMap<String, Vec<SimWidgetSpec>>,
    #[serde(default)]
    pub transitions: Vec<SimTransition>,
    #[serde(default)]
    pub oracles: BTreeMap<String, OracleSpec>,
}

const BUNDLED: &[(&str, &str)] = &[
    ("todo_alpha", include_str!("../assets/apps/todo_alpha.json")),
    ("todo_beta", include_str!("../assets/apps/todo_beta.json")),
    ("todo_gamma", include_str!("../assets/apps/todo_gamma.json")),
];

/// Names of the app specs shipped with the crate.
pub fn bundled_app_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_app(name: &str) -> Result<SimAppSpec, SimError> {
    let (_, doc) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| SimError::UnknownApp(name.to_string()))?;
    load_sim_app(doc)
}

/// Parses and validates a sim-app document.
pub fn load_sim_app(document: &str) -> Result<SimAppSpec, SimError> {
    let spec: SimAppSpec = serde_json::from_str(document).map_err(|e| {
        schema(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    validate(&spec)?;
    Ok(spec)
}

fn validate(spec: &SimAppSpec) -> Result<(), SimError> {
    if !spec.states.contains_key(&spec.initial_state) {
        return Err(schema(
            "initial_state",
            format!("unknown state `{}`", spec.initial_state),
        ));
    }

    // Widget templates per state: declared widgets plus AddWidget templates.
    let mut declared: BTreeMap<&str, BTreeMap<&str, &SimWidgetSpec>> = BTreeMap::new();
    for (state, widgets) in &spec.states {
        let entry = declared.entry(state.as_str()).or_default();
        for (i, w) in widgets.iter().enumerate() {
            let path = format!("states.{state}[{i}]");
            check_widget(w, &path)?;
            if entry.insert(w.id.as_str(), w).is_some() {
                return Err(schema(path, format!("duplicate widget id `{}`", w.id)));
            }
        }
    }
    let state_exists = |s: &str| spec.states.contains_key(s);
    for (ti, t) in spec.transitions.iter().enumerate() {
        for (ei, effect) in t.effects.iter().enumerate() {
            let path = format!("transitions[{ti}].effects[{ei}]");
            match effect {
                SimEffect::Goto(target) if !state_exists(target) => {
                    return Err(schema(path, format!("goto unknown state `{target}`")))
                }
                SimEffect::AddWidget { state, widget } => {
                    if !state_exists(state) {
                        return Err(schema(path, format!("add_widget to unknown state `{state}`")));
                    }
                    check_widget(widget, &format!("{path}.widget"))?;
                    declared
                        .entry(state.as_str())
                        .or_default()
                        .entry(widget.id.as_str())
                        .or_insert(widget);
                }
                SimEffect::RemoveWidget { state, .. } if !state_exists(state) => {
                    return Err(schema(
                        path,
                        format!("remove_widget from unknown state `{state}`"),
                    ))
                }
                _ => {}
            }
        }
    }
    let mut keys = BTreeSet::new();
    for (ti, t) in spec.transitions.iter().enumerate() {
        let path = format!("transitions[{ti}]");
        if !state_exists(&t.state) {
            return Err(schema(path, format!("unknown state `{}`", t.state)));
        }
        let widget = declared
            .get(t.state.as_str())
            .and_then(|ws| ws.get(t.widget.as_str()))
            .ok_or_else(|| {
                schema(
                    &path,
                    format!("no widget `{}` in state `{}`", t.widget, t.state),
                )
            })?;
        if !widget.actions.contains(&t.action) {
            return Err(schema(
                &path,
                format!("widget `{}` does not declare action {}", t.widget, t.action),
            ));
        }
        if !keys.insert((t.state.as_str(), t.widget.as_str(), t.action)) {
            return Err(schema(path, "duplicate transition key"));
        }
    }
    Ok(())
}

fn check_widget(w: &SimWidgetSpec, path: &str) -> Result<(), SimError> {
    if w.id.trim().is_empty() {
        return Err(schema(path, "empty widget id"));
    }
    if !w.has_semantics() {
        return Err(schema(path, "widget needs text, content_desc or resource_id"));
    }
    if !w.bounds.is_well_ordered() {
        return Err(schema(path, "bounds must satisfy left<right and top<bottom"));
    }
    Ok(())
}

fn var_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$\{([A-Za-z0-9_.]+)\}").expect("var regex"))
}

/// Replaces `${name}` with values from `vars`; `None` if any is unbound.
fn substitute(template: &str, vars: &BTreeMap<String, String>) -> Option<String> {
    let mut missing = false;
    let out = var_re().replace_all(template, |c: &regex::Captures<'_>| {
        match vars.get(&c[1]) {
            Some(v) => v.clone(),
            None => {
                missing = true;
                String::new()
            }
        }
    });
    (!missing).then(|| out.into_owned())
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone)]
struct RuntimeWidget {
    template_id: String,
    widget: StateWidget,
}

impl RuntimeWidget {
    fn from_spec(spec: &SimWidgetSpec) -> Self {
        RuntimeWidget {
            template_id: spec.id.clone(),
            widget: StateWidget {
                widget_id: spec.id.clone(),
                text: spec.text.clone(),
                content_desc: spec.content_desc.clone(),
                resource_id: spec.resource_id.clone(),
                bounds: spec.bounds,
                supported_actions: dedup_actions(&spec.actions),
            },
        }
    }
}

fn dedup_actions(actions: &[ActionKind]) -> Vec<ActionKind> {
    let set: BTreeSet<ActionKind> = actions.iter().copied().collect();
    set.into_iter().collect()
}

/// One running instance of a simulated app.
#[derive(Debug, Clone)]
pub struct SimDevice {
    spec: Arc<SimAppSpec>,
    current: String,
    states: BTreeMap<String, Vec<RuntimeWidget>>,
    vars: BTreeMap<String, String>,
    coverage: CoverageSet,
}

impl SimDevice {
    pub fn new(spec: Arc<SimAppSpec>) -> Self {
        let mut dev = SimDevice {
            current: spec.initial_state.clone(),
            states: BTreeMap::new(),
            vars: BTreeMap::new(),
            coverage: CoverageSet::default(),
            spec,
        };
        dev.restore();
        dev
    }

    pub fn spec(&self) -> &SimAppSpec {
        &self.spec
    }

    fn restore(&mut self) {
        self.current = self.spec.initial_state.clone();
        self.states = self
            .spec
            .states
            .iter()
            .map(|(id, ws)| (id.clone(), ws.iter().map(RuntimeWidget::from_spec).collect()))
            .collect();
        self.vars.clear();
        self.coverage = CoverageSet::default();
    }

    fn snapshot(&self) -> GuiState {
        let mut widgets: Vec<StateWidget> = self.states[&self.current]
            .iter()
            .map(|r| r.widget.clone())
            .collect();
        widgets.sort_by(|a, b| {
            (a.bounds.top, a.bounds.left, &a.widget_id).cmp(&(b.bounds.top, b.bounds.left, &b.widget_id))
        });
        GuiState {
            state_id: self.current.clone(),
            widgets,
        }
    }

    fn transition(&self, state: &str, template: &str, action: ActionKind) -> Option<&SimTransition> {
        self.spec
            .transitions
            .iter()
            .find(|t| t.state == state && t.widget == template && t.action == action)
    }

    fn unique_id(&self, state: &str, base: &str) -> String {
        let taken = |id: &str| self.states[state].iter().any(|r| r.widget.widget_id == id);
        if !taken(base) {
            return base.to_string();
        }
        (2..)
            .map(|n| format!("{base}_{n}"))
            .find(|id| !taken(id))
            .expect("some suffix is free")
    }

    fn apply(&mut self, effects: &[SimEffect], scope: &BTreeMap<String, String>) {
        let vars_with_scope = |vars: &BTreeMap<String, String>| {
            let mut all = vars.clone();
            all.extend(scope.iter().map(|(k, v)| (k.clone(), v.clone())));
            all
        };
        for effect in effects {
            match effect {
                SimEffect::Goto(target) => self.current = target.clone(),
                SimEffect::SetVar { name, source } => {
                    let value = match source {
                        VarSource::FromInput => scope.get("input").cloned().unwrap_or_default(),
                        VarSource::Literal(l) => {
                            substitute(l, &vars_with_scope(&self.vars)).unwrap_or_default()
                        }
                    };
                    self.vars.insert(name.clone(), value);
                }
                SimEffect::AddWidget { state, widget } => {
                    let vars = vars_with_scope(&self.vars);
                    let render = |s: &Option<String>| {
                        s.as_deref()
                            .map(|t| substitute(t, &vars).unwrap_or_default())
                            .filter(|t| !t.trim().is_empty())
                    };
                    let base = slug(&substitute(&widget.id, &vars).unwrap_or_default());
                    let id = self.unique_id(state, &base);
                    let mut rw = RuntimeWidget::from_spec(widget);
                    rw.widget.widget_id = id;
                    rw.widget.text = render(&widget.text);
                    rw.widget.content_desc = render(&widget.content_desc);
                    rw.widget.resource_id = render(&widget.resource_id);
                    if rw.widget.widget_ref().is_empty() {
                        tracing::debug!(template = %widget.id, "skipping widget with empty semantics");
                        continue;
                    }
                    self.states.get_mut(state).expect("validated state").push(rw);
                }
                SimEffect::RemoveWidget { state, widget_id } => {
                    let vars = vars_with_scope(&self.vars);
                    let id = slug(&substitute(widget_id, &vars).unwrap_or_default());
                    let widgets = self.states.get_mut(state).expect("validated state");
                    let before = widgets.len();
                    widgets.retain(|r| r.widget.widget_id != id);
                    if widgets.len() == before {
                        tracing::debug!(%state, %id, "remove_widget: no such widget");
                    }
                }
                SimEffect::NoOp => {}
            }
        }
    }
}

impl Device for SimDevice {
    fn reset(&mut self) -> Result<GuiState, DriverError> {
        self.restore();
        Ok(self.snapshot())
    }

    fn observe(&mut self) -> Result<GuiState, DriverError> {
        Ok(self.snapshot())
    }

    fn execute(&mut self, event: &ConcreteEvent) -> Result<ExecOutcome, DriverError> {
        let Some(rw) = self.states[&self.current]
            .iter()
            .find(|r| r.widget.widget_id == event.widget_id)
            .cloned()
        else {
            return Ok(ExecOutcome::Rejected(format!(
                "no widget `{}` in state `{}`",
                event.widget_id, self.current
            )));
        };
        if !rw.widget.supports(event.action) {
            return Ok(ExecOutcome::Rejected(format!(
                "widget `{}` does not support {}",
                event.widget_id, event.action
            )));
        }
        match (event.action, &event.value) {
            (ActionKind::Edit, None) => {
                return Ok(ExecOutcome::Rejected("edit requires a value".into()))
            }
            (a, Some(_)) if a != ActionKind::Edit => {
                return Ok(ExecOutcome::Rejected(format!("{a} takes no value")))
            }
            _ => {}
        }
        let state = self.current.clone();
        let Some(transition) = self.transition(&state, &rw.template_id, event.action) else {
            return Ok(ExecOutcome::Rejected(format!(
                "no {} transition on `{}` in state `{state}`",
                event.action, event.widget_id
            )));
        };
        let effects = transition.effects.clone();
        let mut scope = BTreeMap::new();
        scope.insert("widget.id".to_string(), rw.widget.widget_id.clone());
        if let Some(t) = &rw.widget.text {
            scope.insert("widget.text".to_string(), t.clone());
        }
        if let Some(v) = &event.value {
            scope.insert("input".to_string(), v.clone());
        }
        self.apply(&effects, &scope);
        self.coverage
            .insert(format!("{state}|{}|{}", rw.template_id, event.action));
        Ok(ExecOutcome::Ok(self.snapshot()))
    }

    fn app_id(&self) -> Option<String> {
        Some(self.spec.app_id.clone())
    }

    fn coverage(&self) -> Option<CoverageSet> {
        Some(self.coverage.clone())
    }

    fn variables(&self) -> Option<BTreeMap<String, String>> {
        Some(self.vars.clone())
    }
}

fn pattern_matches(
    pattern: &WidgetPattern,
    text: Option<&str>,
    content_desc: Option<&str>,
    resource_id: Option<&str>,
    vars: &BTreeMap<String, String>,
) -> Option<bool> {
    let fields = [
        (&pattern.text, text),
        (&pattern.content_desc, content_desc),
        (&pattern.resource_id, resource_id),
    ];
    let mut all = true;
    for (want, have) in fields {
        if let Some(want) = want {
            let want = substitute(want, vars)?;
            all &= have == Some(want.as_str());
        }
    }
    Some(all)
}

fn state_has(state: &GuiState, pattern: &WidgetPattern, vars: &BTreeMap<String, String>) -> Option<bool> {
    let mut any = false;
    for w in &state.widgets {
        any |= pattern_matches(
            pattern,
            w.text.as_deref(),
            w.content_desc.as_deref(),
            w.resource_id.as_deref(),
            vars,
        )?;
    }
    Some(any)
}

/// Evaluates the functionality oracle on an execution.
///
/// `states` is the observed state sequence starting with the reset state;
/// `store` is the final variable store. Atoms referring to unbound
/// variables are false, and an empty trace never satisfies a non-empty
/// oracle.
pub fn eval_oracle(
    spec: &SimAppSpec,
    functionality: &str,
    trace: &[ConcreteEvent],
    states: &[GuiState],
    store: &BTreeMap<String, String>,
) -> Result<bool, SimError> {
    let oracle = spec
        .oracles
        .get(functionality)
        .ok_or_else(|| SimError::UnknownFunctionality(functionality.to_string()))?;
    if trace.is_empty() {
        return Ok(oracle.0.is_empty());
    }
    for atom in &oracle.0 {
        let holds = match atom {
            OracleAtom::EventOccurred { widget, action } => trace.iter().try_fold(false, |acc, e| {
                let m = pattern_matches(
                    widget,
                    e.widget.text.as_deref(),
                    e.widget.content_desc.as_deref(),
                    e.widget.resource_id.as_deref(),
                    store,
                )?;
                Some(acc || (m && e.action == *action))
            }),
            OracleAtom::VarEquals { name, value } => Some(store.get(name) == Some(value)),
            OracleAtom::WidgetAbsentInFinal(p) => match states.last() {
                Some(last) => state_has(last, p, store).map(|present| !present),
                None => Some(false),
            },
            OracleAtom::WidgetPresentAtSomeState(p) => states.iter().try_fold(false, |acc, s| {
                Some(acc || state_has(s, p, store)?)
            }),
        };
        if holds != Some(true) {
            return Ok(false);
        }
    }
    Ok(true)
}
