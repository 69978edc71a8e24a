// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

//! Summarizes individual test logics into one general test logic and
//! enforces the length and vocabulary rules on the result.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback;
use crate::ir::{parse_logic_lines, Provenance, TestLogic};
use crate::llm::{assemble_prompt, LlmError, LlmSession, PromptBundle};

/// One-shot example covering event, value-bearing, assertion and "or" forms
/// with every canonical action.
pub const OUTPUT_EXAMPLE: &str = "\
Step 1: (Event) Click a widget [New contact]
Step 2: (Event) Edit a widget [Name] with [Alice]
Step 3: (Event) Scroll a widget [Contact form]
Step 4: (Event) Click a widget [Save]
Step 5: (Assertion) Check a widget [Alice] [appears]
Step 6: (Event) Swipe or Long-press a widget [Alice]
Step 7: (Event) Click a widget [Delete]
Step 8: (Assertion) Check a widget [Alice] [disappears]";

const OUTPUT_REQUIREMENT: &str = "\
1. The same test step may be implemented with different actions in different apps (for example, an item may be deleted by swiping it in one app and by clicking it in another). Use \"or\" to join such actions within one test step, e.g. \"(Event) Swipe or Click a widget [item]\".
2. Keep every important test step and stay concise. Write each event as \"(Event) [Action] a widget [Widget] with [Value]\", leaving out \"with [Value]\" when nothing is typed, and each assertion as \"(Assertion) Check a widget [Widget] [Condition]\" where the condition is \"appears\" or \"disappears\". Only use actions that appear in the output example, and number the steps as \"Step k:\".";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbstractorConfig {
    pub max_ratio: f64,
    pub max_resummarize_rounds: u32,
}

impl Default for AbstractorConfig {
    fn default() -> Self {
        AbstractorConfig {
            max_ratio: 1.5,
            max_resummarize_rounds: 3,
        }
    }
}

impl AbstractorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_ratio.is_nan() || self.max_ratio < 1.0 {
            return Err(format!("max_ratio must be ≥ 1, got {}", self.max_ratio));
        }
        if self.max_resummarize_rounds == 0 {
            return Err("max_resummarize_rounds must be ≥ 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TlRule {
    IrrelevantStep,
    MissingStep,
    AmbiguousAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlViolation {
    pub rule: TlRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offending_step_index: Option<usize>,
    pub feedback_text: String,
}

#[derive(Debug, Error)]
pub enum AbstractError {
    #[error("no source test logic to summarize")]
    EmptyInput,
    #[error("summarization failed after {rounds} rounds: {}", summarize_violations(.last_violations))]
    SummarizationFailed {
        rounds: u32,
        last_violations: Vec<TlViolation>,
    },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

fn summarize_violations(v: &[TlViolation]) -> String {
    v.iter()
        .map(|v| format!("{:?}", v.rule))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Builds the summarization prompt for `logics` in input order.
pub fn build_summarization_prompt(
    logics: &[TestLogic],
    functionality: &str,
    category: &str,
) -> Result<PromptBundle, AbstractError> {
    if logics.is_empty() {
        return Err(AbstractError::EmptyInput);
    }
    let task = format!(
        "You are an expert in mobile GUI testing. Each test logic below tests the functionality \"{functionality}\" in a different app of the \"{category}\" category. Summarize these individual test logics into one general test logic that tests \"{functionality}\" in any app of the \"{category}\" category."
    );
    let input = logics
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let source = match &l.provenance {
                Provenance::Individual { app_id } => app_id.clone(),
                Provenance::General { app_ids } => app_ids.join(", "),
            };
            format!("Test logic {} (from {source}):\n{}", i + 1, l.render_steps())
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    Ok(PromptBundle::new(task, input, OUTPUT_EXAMPLE, OUTPUT_REQUIREMENT)?)
}

/// Applies the three rules. Violations come back in rule order:
/// irrelevant step, missing step, then one ambiguous-action entry per step.
pub fn validate_general_logic(
    general: &TestLogic,
    sources: &[TestLogic],
    config: &AbstractorConfig,
) -> Vec<TlViolation> {
    let mut out = Vec::new();
    let n = general.len();
    if let (Some(longest), Some(shortest)) = (
        sources.iter().map(TestLogic::len).max(),
        sources.iter().map(TestLogic::len).min(),
    ) {
        if longest > 0 && n as f64 / longest as f64 > config.max_ratio {
            out.push(TlViolation {
                rule: TlRule::IrrelevantStep,
                offending_step_index: None,
                feedback_text: feedback::IRRELEVANT_STEP.to_string(),
            });
        }
        if n < shortest {
            out.push(TlViolation {
                rule: TlRule::MissingStep,
                offending_step_index: None,
                feedback_text: feedback::MISSING_STEP.to_string(),
            });
        }
    }
    for step in general.steps.iter().filter(|s| !s.has_canonical_action()) {
        out.push(TlViolation {
            rule: TlRule::AmbiguousAction,
            offending_step_index: Some(step.index),
            feedback_text: feedback::ambiguous_action(&step.label()),
        });
    }
    out
}

/// Outcome of a successful summarization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub logic: TestLogic,
    /// Summaries checked against the rules, including the accepted one.
    pub rounds: u32,
    /// Every feedback message sent, in order.
    pub feedback_sent: Vec<String>,
}

fn source_apps(logics: &[TestLogic]) -> Vec<String> {
    let mut ids: Vec<String> = Vec::new();
    for l in logics {
        let more = match &l.provenance {
            Provenance::Individual { app_id } => vec![app_id.clone()],
            Provenance::General { app_ids } => app_ids.clone(),
        };
        for id in more {
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
    }
    ids
}

/// Asks the model for a general logic and re-asks with rule feedback until
/// the result passes or the round budget is spent.
pub fn summarize(
    logics: &[TestLogic],
    functionality: &str,
    category: &str,
    config: &AbstractorConfig,
    session: &mut LlmSession<'_>,
) -> Result<Summary, AbstractError> {
    let prompt = assemble_prompt(&build_summarization_prompt(logics, functionality, category)?);
    let mut feedback_sent = Vec::new();
    let mut response = session.ask(&prompt)?;
    let mut rounds = 0;
    let mut format_reasked = false;
    loop {
        let parsed = parse_logic_lines(&response);
        if (!parsed.rejected.is_empty() || parsed.steps.is_empty()) && !format_reasked {
            let offending = parsed
                .rejected
                .first()
                .map_or_else(|| "output".to_string(), |l| format!("step \"{l}\""));
            let fb = feedback::incorrect_format(&offending);
            response = session.follow_up(&prompt, &response, &fb)?;
            feedback_sent.push(fb);
            format_reasked = true;
            continue;
        }
        rounds += 1;
        let general = TestLogic {
            functionality: functionality.to_string(),
            category: category.to_string(),
            steps: parsed.steps,
            provenance: Provenance::General {
                app_ids: source_apps(logics),
            },
        };
        let violations = validate_general_logic(&general, logics, config);
        if violations.is_empty() {
            return Ok(Summary {
                logic: general,
                rounds,
                feedback_sent,
            });
        }
        if rounds >= config.max_resummarize_rounds {
            return Err(AbstractError::SummarizationFailed {
                rounds,
                last_violations: violations,
            });
        }
        let fb = violations
            .iter()
            .map(|v| v.feedback_text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        tracing::debug!(round = rounds, "re-summarizing after rule violations");
        response = session.follow_up(&prompt, &response, &fb)?;
        feedback_sent.push(fb);
        format_reasked = false;
    }
}
