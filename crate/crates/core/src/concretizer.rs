// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

//! Turns a general test logic into a concrete test case for a target app.
//!
//! Each step is first matched against the privileged set; when that fails
//! the step is completed by exploring the target device. Every LLM answer
//! goes through the test-validation rules before it is accepted.

mod privileged;

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use privileged::{
    lexical_privileged_set, token_overlap, widget_tokens, PrivilegedItem, PrivilegedSet,
    DEFAULT_LEXICAL_THRESHOLD,
};

use crate::device::{
    ground_event, ConcreteAssertion, ConcreteEvent, Device, DriverError, ExecOutcome, GuiState,
    StateWidget,
};
use crate::feedback;
use crate::ir::{
    parse_logic_step, render_logic_step, ActionKind, AssertionStep, ConditionKind, EventStep,
    LogicStep, StepKind, TestCase, TestLogic, TestStep,
};
use crate::llm::{assemble_prompt, Gateway, LlmError, LlmSession, PromptBundle, TokenUsage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcretizerConfig {
    pub max_selection: u32,
    pub unmatched_token: String,
}

impl Default for ConcretizerConfig {
    fn default() -> Self {
        ConcretizerConfig {
            max_selection: 3,
            unmatched_token: "-1".into(),
        }
    }
}

impl ConcretizerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_selection == 0 {
            return Err("max_selection must be ≥ 1".into());
        }
        if self.unmatched_token.trim().is_empty() {
            return Err("unmatched_token must not be empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CncRule {
    IncorrectType,
    IrrelevantMatching,
    CompletionUnconfirmed,
    IncorrectFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CncViolation {
    pub rule: CncRule,
    pub feedback_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "item_id", rename_all = "snake_case")]
pub enum MatchDecision {
    Matched(String),
    Unmatched,
}

/// Answer grammar expected from the model in each calling context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputGrammar {
    /// One logic-step template line.
    LogicStep,
    /// A privileged item id or the unmatched token.
    ItemId,
    /// `<widget_id>[ <action>][ with [value]]`.
    EventSelection,
    /// A bare widget id.
    WidgetId,
    /// An answer starting with yes or no.
    YesNo,
}

/// Where the generation stands: states seen, events executed and assertions
/// accepted so far, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationContext {
    pub state_history: Vec<GuiState>,
    pub chosen_events: Vec<ConcreteEvent>,
    pub chosen_assertions: Vec<ConcreteAssertion>,
    pub skipped_steps: Vec<usize>,
    emitted: Vec<TestStep>,
}

#[derive(Debug, Clone, Copy)]
struct Mark {
    events: usize,
    assertions: usize,
    emitted: usize,
}

impl GenerationContext {
    pub fn new(reset_state: GuiState) -> Self {
        GenerationContext {
            state_history: vec![reset_state],
            chosen_events: Vec::new(),
            chosen_assertions: Vec::new(),
            skipped_steps: Vec::new(),
            emitted: Vec::new(),
        }
    }

    pub fn current(&self) -> &GuiState {
        self.state_history.last().expect("history starts with the reset state")
    }

    /// Accepted events and assertions, interleaved in acceptance order.
    pub fn emitted(&self) -> &[TestStep] {
        &self.emitted
    }

    fn push_event(&mut self, event: ConcreteEvent, next: GuiState) {
        self.emitted.push(TestStep::Event(EventStep {
            widget: event.widget.clone(),
            action: event.action,
            value: event.value.clone(),
        }));
        self.chosen_events.push(event);
        self.state_history.push(next);
    }

    fn push_assertion(&mut self, assertion: ConcreteAssertion) {
        self.emitted.push(TestStep::Assertion(AssertionStep {
            widget: assertion.widget.clone(),
            condition: assertion.condition,
        }));
        self.chosen_assertions.push(assertion);
    }

    fn mark(&self) -> Mark {
        Mark {
            events: self.chosen_events.len(),
            assertions: self.chosen_assertions.len(),
            emitted: self.emitted.len(),
        }
    }

    /// Forgets everything after `mark`. The device only moves forward, so
    /// undoing events means resetting and replaying the kept prefix.
    fn rollback(&mut self, mark: Mark, device: &mut dyn Device) -> Result<(), DriverError> {
        self.chosen_assertions.truncate(mark.assertions);
        self.emitted.truncate(mark.emitted);
        if self.chosen_events.len() == mark.events {
            return Ok(());
        }
        self.chosen_events.truncate(mark.events);
        self.state_history.truncate(mark.events + 1);
        device.reset()?;
        for ev in &self.chosen_events {
            if let ExecOutcome::Rejected(reason) = device.execute(ev)? {
                return Err(DriverError::Protocol(format!(
                    "replay diverged while rolling back at {ev}: {reason}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Matched,
    Completion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub decision: MatchDecision,
    /// Re-asks spent on validation feedback.
    pub reasks: u32,
    /// True when the answer kept violating a rule and was treated as unmatched.
    pub degraded: bool,
    /// True when the matched item passed every check (rules, grounding,
    /// completion) and therefore produced this step's output.
    pub validated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step_index: usize,
    pub step: String,
    pub matching: MatchRecord,
    pub route: Route,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
    pub violations: Vec<CncViolation>,
    /// Completion rounds used (selections or widget choices).
    pub selection_rounds: u32,
    /// Device executions attempted during completion.
    pub executions: u32,
    pub events: Vec<ConcreteEvent>,
    pub assertions: Vec<ConcreteAssertion>,
    pub skipped: bool,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationTrace {
    pub target_app: String,
    pub functionality: String,
    pub privileged_source: String,
    pub steps: Vec<StepTrace>,
    pub skipped_steps: Vec<usize>,
    pub token_usage: TokenUsage,
}

impl MigrationTrace {
    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes") + "\n"
    }
}

#[derive(Debug, Error)]
pub enum ConcretizeFailure {
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("invalid concretizer input: {0}")]
    Invalid(String),
}

/// A failed run together with the trace of the steps finished before it.
#[derive(Debug, Error)]
#[error("{failure}")]
pub struct ConcretizeError {
    pub failure: ConcretizeFailure,
    pub trace: Box<MigrationTrace>,
}

fn selection_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\[?([^\s\[\]]+)\]?(?:\s+([A-Za-z-]+))?(?:\s+with\s+\[(.*)\])?$").unwrap()
    })
}

fn id_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[\w.:/-]+$").unwrap())
}

/// Trims whitespace, surrounding quotes or backticks and one trailing period.
fn normalize_answer(response: &str) -> &str {
    let s = response.trim().trim_matches(|c| c == '"' || c == '`' || c == '\'');
    s.strip_suffix('.').unwrap_or(s).trim()
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Selection {
    widget_id: String,
    action: Option<ActionKind>,
    value: Option<String>,
}

fn parse_selection(response: &str) -> Option<Selection> {
    let c = selection_re().captures(normalize_answer(response))?;
    let action = match c.get(2) {
        Some(a) => Some(ActionKind::from_keyword(a.as_str())?),
        None => None,
    };
    Some(Selection {
        widget_id: c[1].to_string(),
        action,
        value: c.get(3).map(|v| v.as_str().to_string()),
    })
}

fn parse_widget_id(response: &str) -> Option<String> {
    let s = normalize_answer(response);
    let s = s.strip_prefix('[').and_then(|t| t.strip_suffix(']')).unwrap_or(s);
    id_re().is_match(s).then(|| s.to_string())
}

/// Checks `response` against the grammar for its calling context.
pub fn validate_output_format(
    response: &str,
    grammar: OutputGrammar,
    step: &LogicStep,
) -> Option<CncViolation> {
    let ok = match grammar {
        OutputGrammar::LogicStep => parse_logic_step(response.trim()).is_ok(),
        OutputGrammar::ItemId => id_re().is_match(normalize_answer(response)),
        OutputGrammar::EventSelection => parse_selection(response).is_some(),
        OutputGrammar::WidgetId => parse_widget_id(response).is_some(),
        OutputGrammar::YesNo => {
            let a = response.trim().to_lowercase();
            a.starts_with("yes") || a.starts_with("no")
        }
    };
    (!ok).then(|| CncViolation {
        rule: CncRule::IncorrectFormat,
        feedback_text: feedback::incorrect_format(&step.label()),
    })
}

/// Checks a matching decision: type alignment and membership in the
/// unconsumed privileged set.
pub fn validate_match(
    step: &LogicStep,
    decision: &MatchDecision,
    privileged: &PrivilegedSet,
) -> Vec<CncViolation> {
    let MatchDecision::Matched(id) = decision else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let item = privileged.get(id);
    if let Some(item) = item {
        if item.kind() != step.kind {
            out.push(CncViolation {
                rule: CncRule::IncorrectType,
                feedback_text: feedback::incorrect_type(&step.label()),
            });
        }
    }
    if item.is_none_or(|i| i.consumed) {
        out.push(CncViolation {
            rule: CncRule::IrrelevantMatching,
            feedback_text: feedback::irrelevant_matching(&step.label()),
        });
    }
    out
}

fn describe_widget(w: &StateWidget, include_actions: bool) -> String {
    let mut parts = Vec::new();
    if let Some(t) = &w.text {
        parts.push(format!("text \"{t}\""));
    }
    if let Some(c) = &w.content_desc {
        parts.push(format!("content-desc \"{c}\""));
    }
    if let Some(r) = &w.resource_id {
        parts.push(format!("resource-id \"{r}\""));
    }
    if include_actions {
        let actions = if w.supported_actions.is_empty() {
            "none".to_string()
        } else {
            w.supported_actions
                .iter()
                .map(|a| a.keyword())
                .collect::<Vec<_>>()
                .join(", ")
        };
        parts.push(format!("actions: {actions}"));
    }
    format!("{}: {}", w.widget_id, parts.join("; "))
}

/// One line per widget from the top-left to the bottom-right.
/// `include_actions = false` is the widget-selection variant.
pub fn describe_state(state: &GuiState, include_actions: bool) -> String {
    state
        .ordered_widgets()
        .into_iter()
        .map(|w| describe_widget(w, include_actions))
        .collect::<Vec<_>>()
        .join("\n")
}

const TASK_PREFIX: &str = "You are an expert in mobile GUI testing. We are migrating a GUI test case";

fn matching_prompt(
    step: &LogicStep,
    privileged: &PrivilegedSet,
    functionality: &str,
    config: &ConcretizerConfig,
) -> Result<PromptBundle, LlmError> {
    let items: Vec<String> = privileged
        .unconsumed()
        .map(|i| format!("{}: {}", i.item_id, i.step.render()))
        .collect();
    let items = if items.is_empty() { "none".to_string() } else { items.join("\n") };
    PromptBundle::new(
        format!("{TASK_PREFIX} for the functionality \"{functionality}\" to a target app. Match the test step below with one of the privileged events and assertions, which were derived from existing test cases of this functionality."),
        format!("Test step: {}\nPrivileged events and assertions:\n{items}", render_logic_step(step)),
        "P2",
        format!("1. Not every test step can be matched, because the privileged events and assertions may not cover the whole functionality. If no event or assertion corresponds to the test step, answer {}.\n2. The types must be aligned: an (Event) step may only match an event and an (Assertion) step may only match an assertion. Answer with the id only.", config.unmatched_token),
    )
}

fn selection_prompt(
    step: &LogicStep,
    ctx: &GenerationContext,
    functionality: &str,
) -> Result<PromptBundle, LlmError> {
    let chosen = if ctx.chosen_events.is_empty() {
        "none".to_string()
    } else {
        ctx.chosen_events
            .iter()
            .enumerate()
            .map(|(i, e)| format!("{}. {e}", i + 1))
            .collect::<Vec<_>>()
            .join("\n")
    };
    PromptBundle::new(
        format!("{TASK_PREFIX} for the functionality \"{functionality}\" to a target app. Select one event in the current GUI state of the target app to complete the test step below."),
        format!(
            "Test step: {}\nEvents selected for the preceding steps:\n{chosen}\nCurrent GUI state (widgets from the top-left to the bottom-right):\n{}",
            render_logic_step(step),
            describe_state(ctx.current(), true)
        ),
        "save_button click",
        "1. Answer with the id of one widget in the current GUI state followed by the action to perform on it; append \"with [text]\" only for edit actions.\n2. If the step cannot be done directly in the current state, select the event that leads towards it, and do not repeat events selected for the preceding steps.",
    )
}

fn widget_prompt(
    step: &LogicStep,
    listing: &str,
    functionality: &str,
    absent: bool,
) -> Result<PromptBundle, LlmError> {
    let (goal, heading) = if absent {
        (
            "Select the widget that the assertion step below expects to have disappeared.",
            "Widgets that appeared in earlier states but are not displayed in the current state:",
        )
    } else {
        (
            "Select the widget in the current GUI state that the assertion step below should check.",
            "Current GUI state (widgets from the top-left to the bottom-right):",
        )
    };
    PromptBundle::new(
        format!("{TASK_PREFIX} for the functionality \"{functionality}\" to a target app. {goal}"),
        format!("Test step: {}\n{heading}\n{listing}", render_logic_step(step)),
        "title_label",
        "Answer with the id of one widget from the list only.",
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchOutcome {
    pub decision: MatchDecision,
    pub violations: Vec<CncViolation>,
    pub reasks: u32,
    pub degraded: bool,
}

/// Matches `step` against the unconsumed privileged items. A validated
/// match consumes the item. Each violated rule earns one re-ask; after
/// that the step is treated as unmatched.
pub fn match_step(
    step: &LogicStep,
    privileged: &mut PrivilegedSet,
    functionality: &str,
    session: &mut LlmSession<'_>,
    config: &ConcretizerConfig,
) -> Result<MatchOutcome, LlmError> {
    let prompt = assemble_prompt(&matching_prompt(step, privileged, functionality, config)?);
    let mut response = session.ask(&prompt)?;
    let mut used = BTreeSet::new();
    let mut out = MatchOutcome {
        decision: MatchDecision::Unmatched,
        violations: Vec::new(),
        reasks: 0,
        degraded: false,
    };
    loop {
        let found = match validate_output_format(&response, OutputGrammar::ItemId, step) {
            Some(v) => vec![v],
            None => {
                let answer = normalize_answer(&response);
                out.decision = if answer == config.unmatched_token {
                    MatchDecision::Unmatched
                } else {
                    MatchDecision::Matched(answer.to_string())
                };
                validate_match(step, &out.decision, privileged)
            }
        };
        if found.is_empty() {
            if let MatchDecision::Matched(id) = &out.decision {
                privileged.consume(id);
            }
            return Ok(out);
        }
        out.violations.extend(found.iter().cloned());
        let fresh: Vec<&CncViolation> = found.iter().filter(|v| !used.contains(&v.rule)).collect();
        if fresh.is_empty() {
            tracing::info!(step = step.index, "matching answer still invalid, treating as unmatched");
            out.decision = MatchDecision::Unmatched;
            out.degraded = true;
            return Ok(out);
        }
        let fb = fresh
            .iter()
            .map(|v| v.feedback_text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        used.extend(fresh.iter().map(|v| v.rule));
        out.reasks += 1;
        response = session.follow_up(&prompt, &response, &fb)?;
    }
}

/// Asks whether the step is complete given what was generated for it.
pub fn check_completion(
    step: &LogicStep,
    events: &[String],
    assertions: &[String],
    session: &mut LlmSession<'_>,
) -> Result<bool, LlmError> {
    let prompt = feedback::completion_check(events, assertions, &step.label());
    let answer = session.ask(&prompt)?;
    Ok(answer.trim().to_lowercase().starts_with("yes"))
}

fn unconfirmed(events: &[String], assertions: &[String], step: &LogicStep) -> CncViolation {
    CncViolation {
        rule: CncRule::CompletionUnconfirmed,
        feedback_text: feedback::completion_check(events, assertions, &step.label()),
    }
}

/// Result of a completion attempt for one step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompletionOutcome {
    pub completed: bool,
    pub rounds: u32,
    pub executions: u32,
    pub violations: Vec<CncViolation>,
}

/// Asks once and, on a malformed answer, re-asks once with format feedback
/// if this step has not used its format re-ask yet.
fn ask_with_format_check(
    prompt: &str,
    grammar: OutputGrammar,
    step: &LogicStep,
    session: &mut LlmSession<'_>,
    format_reasked: &mut bool,
    violations: &mut Vec<CncViolation>,
) -> Result<Option<String>, LlmError> {
    let mut response = session.ask(prompt)?;
    if let Some(v) = validate_output_format(&response, grammar, step) {
        violations.push(v.clone());
        if *format_reasked {
            return Ok(None);
        }
        *format_reasked = true;
        response = session.follow_up(prompt, &response, &v.feedback_text)?;
        if let Some(v) = validate_output_format(&response, grammar, step) {
            violations.push(v);
            return Ok(None);
        }
    }
    Ok(Some(response))
}

/// Selects and executes events for an event step until the model confirms
/// the step is complete, within `max_selection` rounds. Events kept on a
/// "no" answer act as connection events; if the budget runs out they are
/// rolled back and the step is skipped.
pub fn select_event(
    step: &LogicStep,
    ctx: &mut GenerationContext,
    device: &mut dyn Device,
    session: &mut LlmSession<'_>,
    config: &ConcretizerConfig,
    functionality: &str,
) -> Result<CompletionOutcome, ConcretizeFailure> {
    let mark = ctx.mark();
    let mut out = CompletionOutcome::default();
    let mut format_reasked = false;
    while out.rounds < config.max_selection {
        out.rounds += 1;
        let prompt = assemble_prompt(&selection_prompt(step, ctx, functionality)?);
        let Some(response) = ask_with_format_check(
            &prompt,
            OutputGrammar::EventSelection,
            step,
            session,
            &mut format_reasked,
            &mut out.violations,
        )?
        else {
            continue;
        };
        let sel = parse_selection(&response).expect("format already checked");
        let state = ctx.current().clone();
        let Some(picked) = state.widget(&sel.widget_id) else {
            tracing::debug!(step = step.index, id = %sel.widget_id, "selected widget not in state");
            continue;
        };
        // Replays ground by identity, so execute the widget they would find.
        let widget = state.find_by_identity(&picked.identity()).unwrap_or(picked);
        let action = sel
            .action
            .or_else(|| step.actions().iter().copied().find(|a| widget.supports(*a)))
            .or_else(|| widget.supported_actions.first().copied());
        let Some(action) = action else {
            continue;
        };
        let value = (action == ActionKind::Edit)
            .then(|| sel.value.clone().or_else(|| step.value_phrase.clone()))
            .flatten();
        let event = ConcreteEvent::on(&state, widget, action, value);
        out.executions += 1;
        let ExecOutcome::Ok(next) = device.execute(&event)? else {
            continue;
        };
        ctx.push_event(event, next);
        let rendered: Vec<String> = ctx.chosen_events[mark.events..]
            .iter()
            .map(ToString::to_string)
            .collect();
        if check_completion(step, &rendered, &[], session)? {
            out.completed = true;
            return Ok(out);
        }
        out.violations.push(unconfirmed(&rendered, &[], step));
    }
    ctx.rollback(mark, device)?;
    Ok(out)
}

/// Widgets seen in earlier states but missing from the current one, most
/// recent first, one per identity.
fn vanished_widgets(ctx: &GenerationContext) -> Vec<StateWidget> {
    let current = ctx.current();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for state in ctx.state_history.iter().rev().skip(1) {
        for w in state.ordered_widgets() {
            let id = w.identity();
            if current.find_by_identity(&id).is_none() && seen.insert(id) {
                out.push(w.clone());
            }
        }
    }
    out
}

/// Picks a widget for an assertion step and emits the assertion once it
/// holds on the current state and the model confirms completion.
pub fn generate_assertion(
    step: &LogicStep,
    ctx: &mut GenerationContext,
    session: &mut LlmSession<'_>,
    config: &ConcretizerConfig,
    functionality: &str,
) -> Result<CompletionOutcome, ConcretizeFailure> {
    let mut out = CompletionOutcome::default();
    let Some(condition) = step.condition() else {
        tracing::warn!(step = step.index, "assertion step without a usable condition");
        return Ok(out);
    };
    let candidates: Vec<StateWidget> = match condition {
        ConditionKind::Present => ctx.current().ordered_widgets().into_iter().cloned().collect(),
        ConditionKind::Absent => vanished_widgets(ctx),
    };
    if candidates.is_empty() {
        return Ok(out);
    }
    let listing = candidates
        .iter()
        .map(|w| describe_widget(w, false))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = assemble_prompt(&widget_prompt(
        step,
        &listing,
        functionality,
        condition == ConditionKind::Absent,
    )?);
    let mut format_reasked = false;
    while out.rounds < config.max_selection {
        out.rounds += 1;
        let Some(response) = ask_with_format_check(
            &prompt,
            OutputGrammar::WidgetId,
            step,
            session,
            &mut format_reasked,
            &mut out.violations,
        )?
        else {
            continue;
        };
        let id = parse_widget_id(&response).expect("format already checked");
        let Some(widget) = candidates.iter().find(|w| w.widget_id == id) else {
            continue;
        };
        let assertion = ConcreteAssertion {
            widget: widget.widget_ref(),
            condition,
        };
        if !assertion.holds(ctx.current()) {
            continue;
        }
        let rendered = [assertion.to_string()];
        if check_completion(step, &[], &rendered, session)? {
            ctx.push_assertion(assertion);
            out.completed = true;
            return Ok(out);
        }
        out.violations.push(unconfirmed(&[], &rendered, step));
    }
    Ok(out)
}

enum MatchedAttempt {
    Confirmed,
    Fallback(String),
}

/// Grounds a matched privileged item on the current state, runs or checks
/// it, and asks for completion.
fn apply_matched(
    step: &LogicStep,
    item: &PrivilegedItem,
    ctx: &mut GenerationContext,
    device: &mut dyn Device,
    session: &mut LlmSession<'_>,
    violations: &mut Vec<CncViolation>,
) -> Result<MatchedAttempt, ConcretizeFailure> {
    let (events, assertions) = match &item.step {
        TestStep::Event(e) => {
            let state = ctx.current().clone();
            let Some(event) = ground_event(&state, &e.widget, e.action, e.value.clone()) else {
                return Ok(MatchedAttempt::Fallback(format!(
                    "widget [{}] not found in state {}",
                    e.widget.phrase(),
                    state.state_id
                )));
            };
            match device.execute(&event)? {
                ExecOutcome::Ok(next) => {
                    let rendered = event.to_string();
                    ctx.push_event(event, next);
                    (vec![rendered], vec![])
                }
                ExecOutcome::Rejected(reason) => {
                    return Ok(MatchedAttempt::Fallback(format!("execution rejected: {reason}")))
                }
            }
        }
        TestStep::Assertion(a) => {
            let id = a.widget.identity();
            let widget = match a.condition {
                ConditionKind::Present => ctx.current().find_by_identity(&id).map(StateWidget::widget_ref),
                ConditionKind::Absent => Some(
                    ctx.state_history
                        .iter()
                        .rev()
                        .find_map(|s| s.find_by_identity(&id).map(StateWidget::widget_ref))
                        .unwrap_or_else(|| a.widget.clone()),
                ),
            };
            let assertion = widget.map(|widget| ConcreteAssertion {
                widget,
                condition: a.condition,
            });
            match assertion {
                Some(assertion) if assertion.holds(ctx.current()) => {
                    let rendered = assertion.to_string();
                    ctx.push_assertion(assertion);
                    (vec![], vec![rendered])
                }
                _ => {
                    return Ok(MatchedAttempt::Fallback(format!(
                        "assertion on [{}] does not hold in state {}",
                        a.widget.phrase(),
                        ctx.current().state_id
                    )))
                }
            }
        }
    };
    if check_completion(step, &events, &assertions, session)? {
        Ok(MatchedAttempt::Confirmed)
    } else {
        violations.push(unconfirmed(&events, &assertions, step));
        Ok(MatchedAttempt::Fallback("completion unconfirmed".into()))
    }
}

fn run_step(
    step: &LogicStep,
    privileged: &mut PrivilegedSet,
    ctx: &mut GenerationContext,
    device: &mut dyn Device,
    session: &mut LlmSession<'_>,
    config: &ConcretizerConfig,
    functionality: &str,
) -> Result<StepTrace, ConcretizeFailure> {
    let usage_before = session.usage();
    let mark = ctx.mark();
    let m = match_step(step, privileged, functionality, session, config)?;
    let mut st = StepTrace {
        step_index: step.index,
        step: render_logic_step(step),
        matching: MatchRecord {
            decision: m.decision.clone(),
            reasks: m.reasks,
            degraded: m.degraded,
            validated: false,
        },
        route: Route::Completion,
        fallback_reason: None,
        violations: m.violations,
        selection_rounds: 0,
        executions: 0,
        events: Vec::new(),
        assertions: Vec::new(),
        skipped: false,
        usage: TokenUsage::default(),
    };
    let mut done = false;
    if let MatchDecision::Matched(id) = &m.decision {
        let item = privileged.get(id).cloned().expect("validated match exists");
        match apply_matched(step, &item, ctx, device, session, &mut st.violations)? {
            MatchedAttempt::Confirmed => {
                st.route = Route::Matched;
                st.matching.validated = true;
                done = true;
            }
            MatchedAttempt::Fallback(reason) => {
                tracing::debug!(step = step.index, %reason, "matched item falls back to completion");
                ctx.rollback(mark, device)?;
                st.fallback_reason = Some(reason);
            }
        }
    }
    if !done {
        let outcome = match step.kind {
            StepKind::Event => select_event(step, ctx, device, session, config, functionality)?,
            StepKind::Assertion => generate_assertion(step, ctx, session, config, functionality)?,
        };
        st.selection_rounds = outcome.rounds;
        st.executions = outcome.executions;
        st.violations.extend(outcome.violations);
        if !outcome.completed {
            st.skipped = true;
            ctx.skipped_steps.push(step.index);
        }
    }
    st.events = ctx.chosen_events[mark.events..].to_vec();
    st.assertions = ctx.chosen_assertions[mark.assertions..].to_vec();
    let after = session.usage();
    st.usage = TokenUsage {
        prompt_tokens: after.prompt_tokens - usage_before.prompt_tokens,
        completion_tokens: after.completion_tokens - usage_before.completion_tokens,
        requests: after.requests - usage_before.requests,
    };
    Ok(st)
}

/// Generates a test case for the target device from `general`.
///
/// The returned case holds exactly the events and assertions accepted
/// during the run, in order; every event in it executed successfully.
pub fn concretize(
    general: &TestLogic,
    privileged: &mut PrivilegedSet,
    device: &mut dyn Device,
    gateway: &Gateway,
    config: &ConcretizerConfig,
) -> Result<(TestCase, MigrationTrace), ConcretizeError> {
    let target_app = device.app_id().unwrap_or_else(|| "target".into());
    let mut trace = MigrationTrace {
        target_app: target_app.clone(),
        functionality: general.functionality.clone(),
        privileged_source: privileged.source_tool.clone(),
        steps: Vec::new(),
        skipped_steps: Vec::new(),
        token_usage: TokenUsage::default(),
    };
    let fail = |failure: ConcretizeFailure, trace: &MigrationTrace| ConcretizeError {
        failure,
        trace: Box::new(trace.clone()),
    };
    if let Err(e) = config.validate() {
        return Err(fail(ConcretizeFailure::Invalid(e), &trace));
    }
    let reset = match device.reset() {
        Ok(s) => s,
        Err(e) => return Err(fail(e.into(), &trace)),
    };
    let mut ctx = GenerationContext::new(reset);
    let mut session = LlmSession::new(gateway);
    for step in &general.steps {
        let result = run_step(
            step,
            privileged,
            &mut ctx,
            device,
            &mut session,
            config,
            &general.functionality,
        );
        trace.token_usage = session.usage();
        match result {
            Ok(st) => trace.steps.push(st),
            Err(e) => {
                trace.skipped_steps = ctx.skipped_steps.clone();
                return Err(fail(e, &trace));
            }
        }
    }
    trace.skipped_steps = ctx.skipped_steps.clone();
    let case = TestCase {
        app_id: target_app,
        category: general.category.clone(),
        functionality: general.functionality.clone(),
        steps: ctx.emitted.clone(),
    };
    Ok((case, trace))
}

#[cfg(test)]
mod tests;
