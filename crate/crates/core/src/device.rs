// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

//! Device-driver contract shared by the simulator and external backends.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{ActionKind, ConditionKind, WidgetIdentity, WidgetRef};

pub mod wire;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("device transport failure: {0}")]
    Transport(String),
    #[error("device protocol error: {0}")]
    Protocol(String),
}

impl From<std::io::Error> for DriverError {
    fn from(e: std::io::Error) -> Self {
        DriverError::Transport(e.to_string())
    }
}

/// Pixel rectangle `[left, top, right, bottom]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 4]", into = "[i32; 4]")]
pub struct Bounds {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl Bounds {
    pub fn new(left: i32, top: i32, right: i32, bottom: i32) -> Self {
        Bounds {
            left,
            top,
            right,
            bottom,
        }
    }

    pub fn is_well_ordered(&self) -> bool {
        self.left < self.right && self.top < self.bottom
    }
}

impl From<[i32; 4]> for Bounds {
    fn from(b: [i32; 4]) -> Self {
        Bounds::new(b[0], b[1], b[2], b[3])
    }
}

impl From<Bounds> for [i32; 4] {
    fn from(b: Bounds) -> Self {
        [b.left, b.top, b.right, b.bottom]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateWidget {
    pub widget_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_desc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_id: Option<String>,
    pub bounds: Bounds,
    #[serde(default)]
    pub supported_actions: Vec<ActionKind>,
}

impl StateWidget {
    pub fn widget_ref(&self) -> WidgetRef {
        WidgetRef {
            text: self.text.clone(),
            content_desc: self.content_desc.clone(),
            resource_id: self.resource_id.clone(),
        }
    }

    pub fn identity(&self) -> WidgetIdentity {
        WidgetIdentity::of(
            self.text.as_deref(),
            self.content_desc.as_deref(),
            self.resource_id.as_deref(),
        )
    }

    pub fn supports(&self, action: ActionKind) -> bool {
        self.supported_actions.contains(&action)
    }

    pub fn is_operable(&self) -> bool {
        !self.supported_actions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuiState {
    pub state_id: String,
    pub widgets: Vec<StateWidget>,
}

impl GuiState {
    pub fn widget(&self, widget_id: &str) -> Option<&StateWidget> {
        self.widgets.iter().find(|w| w.widget_id == widget_id)
    }

    /// Widgets in reading order: top edge first, then left edge.
    pub fn ordered_widgets(&self) -> Vec<&StateWidget> {
        let mut ws: Vec<&StateWidget> = self.widgets.iter().collect();
        ws.sort_by_key(|w| (w.bounds.top, w.bounds.left));
        ws
    }

    /// First widget in reading order whose identity equals `identity`.
    pub fn find_by_identity(&self, identity: &WidgetIdentity) -> Option<&StateWidget> {
        self.ordered_widgets()
            .into_iter()
            .find(|w| &w.identity() == identity)
    }

    pub fn contains(&self, widget: &WidgetRef) -> bool {
        self.find_by_identity(&widget.identity()).is_some()
    }

    /// Checks uniqueness of widget ids, non-empty semantics and bounds order.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for w in &self.widgets {
            if !seen.insert(w.widget_id.as_str()) {
                return Err(format!("duplicate widget id `{}`", w.widget_id));
            }
            if w.widget_ref().is_empty() {
                return Err(format!("widget `{}` has no semantic attribute", w.widget_id));
            }
            if !w.bounds.is_well_ordered() {
                return Err(format!("widget `{}` has malformed bounds", w.widget_id));
            }
        }
        Ok(())
    }
}

/// An event bound to a widget observed in a concrete state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcreteEvent {
    pub state_id: String,
    pub widget_id: String,
    pub widget: WidgetRef,
    pub action: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl ConcreteEvent {
    pub fn on(
        state: &GuiState,
        widget: &StateWidget,
        action: ActionKind,
        value: Option<String>,
    ) -> Self {
        ConcreteEvent {
            state_id: state.state_id.clone(),
            widget_id: widget.widget_id.clone(),
            widget: widget.widget_ref(),
            action,
            value,
        }
    }
}

impl fmt::Display for ConcreteEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(Event) {} a widget [{}]",
            self.action.template_word(),
            self.widget.phrase()
        )?;
        if let Some(v) = &self.value {
            write!(f, " with [{v}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcreteAssertion {
    pub widget: WidgetRef,
    pub condition: ConditionKind,
}

impl ConcreteAssertion {
    pub fn holds(&self, state: &GuiState) -> bool {
        let present = state.contains(&self.widget);
        match self.condition {
            ConditionKind::Present => present,
            ConditionKind::Absent => !present,
        }
    }
}

impl fmt::Display for ConcreteAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(Assertion) Check a widget [{}] [{}]",
            self.widget.phrase(),
            self.condition.phrase()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecOutcome {
    Ok(GuiState),
    Rejected(String),
}

impl ExecOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, ExecOutcome::Ok(_))
    }
}

/// Set of covered units (transition keys on the simulator, opaque branch
/// ids when ingested from a file).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoverageSet(pub BTreeSet<String>);

impl CoverageSet {
    pub fn insert(&mut self, unit: impl Into<String>) -> bool {
        self.0.insert(unit.into())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn intersection_len(&self, other: &CoverageSet) -> usize {
        self.0.intersection(&other.0).count()
    }

    /// One id per line; blank lines are ignored.
    pub fn parse(text: &str) -> Self {
        CoverageSet(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn to_document(&self) -> String {
        self.0.iter().map(|u| format!("{u}\n")).collect()
    }
}

impl<S: Into<String>> FromIterator<S> for CoverageSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        CoverageSet(iter.into_iter().map(Into::into).collect())
    }
}

/// A GUI device that can be reset, observed and driven.
///
/// The contract is forward-only: callers that need to revisit an earlier
/// state reset and replay their own event history.
pub trait Device: Send {
    fn reset(&mut self) -> Result<GuiState, DriverError>;

    fn observe(&mut self) -> Result<GuiState, DriverError>;

    /// Semantic failures are `Ok(ExecOutcome::Rejected)` and leave the
    /// device unchanged; `Err` is reserved for transport problems.
    fn execute(&mut self, event: &ConcreteEvent) -> Result<ExecOutcome, DriverError>;

    fn app_id(&self) -> Option<String> {
        None
    }

    fn coverage(&self) -> Option<CoverageSet> {
        None
    }

    fn variables(&self) -> Option<BTreeMap<String, String>> {
        None
    }
}

impl<D: Device + ?Sized> Device for Box<D> {
    fn reset(&mut self) -> Result<GuiState, DriverError> {
        (**self).reset()
    }

    fn observe(&mut self) -> Result<GuiState, DriverError> {
        (**self).observe()
    }

    fn execute(&mut self, event: &ConcreteEvent) -> Result<ExecOutcome, DriverError> {
        (**self).execute(event)
    }

    fn app_id(&self) -> Option<String> {
        (**self).app_id()
    }

    fn coverage(&self) -> Option<CoverageSet> {
        (**self).coverage()
    }

    fn variables(&self) -> Option<BTreeMap<String, String>> {
        (**self).variables()
    }
}

/// Locates the widget of a recorded event in `state` by identity and
/// builds the concrete event to execute there.
pub fn ground_event(
    state: &GuiState,
    widget: &WidgetRef,
    action: ActionKind,
    value: Option<String>,
) -> Option<ConcreteEvent> {
    state
        .find_by_identity(&widget.identity())
        .map(|w| ConcreteEvent::on(state, w, action, value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn widget(id: &str, text: &str, top: i32, left: i32) -> StateWidget {
        StateWidget {
            widget_id: id.into(),
            text: Some(text.into()),
            content_desc: None,
            resource_id: None,
            bounds: Bounds::new(left, top, left + 10, top + 10),
            supported_actions: vec![ActionKind::Click],
        }
    }

    #[test]
    fn reading_order_is_top_then_left() {
        let state = GuiState {
            state_id: "s".into(),
            widgets: vec![
                widget("c", "C", 50, 0),
                widget("b", "B", 10, 40),
                widget("a", "A", 10, 5),
            ],
        };
        let ids: Vec<&str> = state
            .ordered_widgets()
            .iter()
            .map(|w| w.widget_id.as_str())
            .collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn identity_prefers_resource_id() {
        let a = WidgetRef::new(Some("Save"), None, Some("btn_save")).unwrap();
        let b = WidgetRef::new(Some("Store"), None, Some("btn_save")).unwrap();
        assert_eq!(a.identity(), b.identity());
        let c = WidgetRef::new(Some("Save"), None, None).unwrap();
        assert_ne!(a.identity(), c.identity());
    }

    #[test]
    fn assertions_evaluate_against_state() {
        let state = GuiState {
            state_id: "s".into(),
            widgets: vec![widget("a", "sample to do", 0, 0)],
        };
        let present = ConcreteAssertion {
            widget: WidgetRef::with_text("sample to do"),
            condition: ConditionKind::Present,
        };
        let absent = ConcreteAssertion {
            condition: ConditionKind::Absent,
            ..present.clone()
        };
        assert!(present.holds(&state));
        assert!(!absent.holds(&state));
    }

    #[test]
    fn invariants_catch_duplicates_and_bad_bounds() {
        let mut state = GuiState {
            state_id: "s".into(),
            widgets: vec![widget("a", "A", 0, 0), widget("a", "B", 20, 0)],
        };
        assert!(state.check_invariants().is_err());
        state.widgets[1].widget_id = "b".into();
        assert!(state.check_invariants().is_ok());
        state.widgets[1].bounds = Bounds::new(5, 5, 5, 9);
        assert!(state.check_invariants().is_err());
    }

    #[test]
    fn coverage_file_round_trip() {
        let set: CoverageSet = ["b", "a", "a"].into_iter().collect();
        assert_eq!(set.len(), 2);
        assert_eq!(CoverageSet::parse(&set.to_document()), set);
        assert_eq!(CoverageSet::parse("x\n\n y \n").len(), 2);
    }
}
