// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};

use migratekit::concretizer::{MatchDecision, MigrationTrace, PrivilegedItem, PrivilegedSet, Route};
use migratekit::device::{ground_event, ConcreteAssertion, Device, ExecOutcome};
use migratekit::ir::{
    ActionKind, AssertionStep, ConditionKind, EventStep, LogicStep, Provenance, TestCase, TestLogic,
    TestStep, WidgetRef,
};
use migratekit::llm::{BackendReply, ChatRequest, Gateway, LlmBackend, LlmError, ScriptEntry, ScriptedBackend};
use migratekit::sim::{load_sim_app, SimAppSpec, SimDevice};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

pub fn asset(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets").join(rel)
}

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn confirm_app() -> SimAppSpec {
    load_sim_app(&std::fs::read_to_string(fixture("todo_confirm.json")).unwrap()).unwrap()
}

pub fn sim(spec: &SimAppSpec) -> SimDevice {
    SimDevice::new(Arc::new(spec.clone()))
}

pub fn scripted(entries: &[(&str, &str)]) -> Gateway {
    Gateway::new(Box::new(ScriptedBackend::new(
        entries
            .iter()
            .map(|(m, r)| ScriptEntry {
                pattern: m.to_string(),
                respond: r.to_string(),
            })
            .collect(),
    )))
}

pub const ALL_ACTIONS: [ActionKind; 5] = [
    ActionKind::Click,
    ActionKind::Edit,
    ActionKind::Swipe,
    ActionKind::Scroll,
    ActionKind::LongPress,
];

/// Answers every concretizer question with a seeded random pick among the
/// ids listed in the prompt, plus occasional malformed or unknown answers.
pub struct RandomBackend {
    rng: Mutex<ChaCha8Rng>,
}

impl RandomBackend {
    pub fn new(seed: u64) -> Self {
        RandomBackend {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }
}

fn listed_ids(prompt: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?m)^(\S+): (?:text|content-desc|resource-id) ").unwrap());
    re.captures_iter(prompt).map(|c| c[1].to_string()).collect()
}

fn item_ids(prompt: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?m)^(P\d+): \(").unwrap());
    re.captures_iter(prompt).map(|c| c[1].to_string()).collect()
}

impl LlmBackend for RandomBackend {
    fn chat(&self, request: &ChatRequest) -> Result<BackendReply, LlmError> {
        let mut rng = self.rng.lock().unwrap();
        let first = request
            .messages
            .iter()
            .find(|m| m.role == migratekit::llm::Role::User)
            .map_or("", |m| m.content.as_str());
        let pick = |rng: &mut ChaCha8Rng, ids: &[String]| ids.choose(rng).cloned();
        let text = if first.contains("I would like to confirm") {
            ["yes", "yes", "no", "Yes.", "unsure"][rng.gen_range(0..5)].to_string()
        } else if first.contains("Privileged events and assertions") {
            let ids = item_ids(first);
            match rng.gen_range(0..10) {
                0..=4 => pick(&mut rng, &ids).unwrap_or_else(|| "-1".into()),
                5..=7 => "-1".into(),
                8 => "P99".into(),
                _ => "no idea".into(),
            }
        } else if first.contains("Select one event") {
            let ids = listed_ids(first);
            match (rng.gen_range(0..10), pick(&mut rng, &ids)) {
                (0, _) | (_, None) => "I would tap somewhere".into(),
                (1, _) => "ghost_widget click".into(),
                (2..=4, Some(id)) => id,
                (_, Some(id)) => {
                    let action = *ALL_ACTIONS.choose(&mut *rng).unwrap();
                    if action == ActionKind::Edit && rng.gen_bool(0.5) {
                        format!("{id} edit with [v{}]", rng.gen_range(0..3))
                    } else {
                        format!("{id} {}", action.keyword())
                    }
                }
            }
        } else if first.contains("assertion step below") {
            let ids = listed_ids(first);
            match (rng.gen_range(0..8), pick(&mut rng, &ids)) {
                (0, _) | (_, None) => "the title".into(),
                (1, _) => "ghost_widget".into(),
                (_, Some(id)) => id,
            }
        } else {
            "-1".into()
        };
        Ok(BackendReply { text, usage: None })
    }
}

fn spec_widgets(spec: &SimAppSpec) -> Vec<WidgetRef> {
    let mut seen = BTreeSet::new();
    spec.states
        .values()
        .flatten()
        .filter_map(|w| WidgetRef::new(w.text.as_deref(), w.content_desc.as_deref(), w.resource_id.as_deref()).ok())
        .filter(|w| seen.insert(w.identity()))
        .collect()
}

/// A general logic of 1–8 steps phrased after widgets of `spec`, with some
/// phrases that name nothing in the app.
pub fn random_logic(rng: &mut ChaCha8Rng, spec: &SimAppSpec) -> TestLogic {
    let widgets = spec_widgets(spec);
    let n = rng.gen_range(1..=8);
    let steps = (1..=n)
        .map(|i| {
            let phrase = if rng.gen_bool(0.85) {
                widgets.choose(rng).unwrap().phrase()
            } else {
                format!("phantom {}", rng.gen_range(0..5))
            };
            if rng.gen_bool(0.7) {
                let k = rng.gen_range(1..=2);
                let actions = (0..k).map(|_| *ALL_ACTIONS.choose(rng).unwrap()).collect();
                let value = rng.gen_bool(0.3).then(|| format!("item {}", rng.gen_range(0..3)));
                LogicStep::event(i, actions, phrase, value)
            } else {
                let cond = if rng.gen_bool(0.5) { ConditionKind::Present } else { ConditionKind::Absent };
                LogicStep::assertion(i, phrase, cond)
            }
        })
        .collect();
    TestLogic {
        functionality: "Add and remove an item".into(),
        category: spec.category.clone(),
        steps,
        provenance: Provenance::General { app_ids: vec!["source".into()] },
    }
}

/// Up to six privileged items over widgets of `spec` and invented ones.
pub fn random_privileged(rng: &mut ChaCha8Rng, spec: &SimAppSpec) -> PrivilegedSet {
    let widgets = spec_widgets(spec);
    let n = rng.gen_range(0..=6);
    let items = (1..=n)
        .map(|i| {
            let widget = if rng.gen_bool(0.8) {
                widgets.choose(rng).unwrap().clone()
            } else {
                WidgetRef::with_text(&format!("phantom {i}"))
            };
            let step = if rng.gen_bool(0.7) {
                let action = *ALL_ACTIONS.choose(rng).unwrap();
                let value = (action == ActionKind::Edit).then(|| "item 0".to_string());
                TestStep::Event(EventStep { widget, action, value })
            } else {
                let condition = if rng.gen_bool(0.5) { ConditionKind::Present } else { ConditionKind::Absent };
                TestStep::Assertion(AssertionStep { widget, condition })
            };
            PrivilegedItem {
                item_id: format!("P{i}"),
                step,
                consumed: false,
            }
        })
        .collect();
    PrivilegedSet {
        source_tool: "random".into(),
        items,
    }
}

/// Replays `case` from reset, grounding by identity. Every event must be
/// accepted and every assertion must hold.
pub fn replay(case: &TestCase, device: &mut dyn Device) -> Result<(), String> {
    let mut state = device.reset().map_err(|e| e.to_string())?;
    for (i, step) in case.steps.iter().enumerate() {
        match step {
            TestStep::Event(e) => {
                let ev = ground_event(&state, &e.widget, e.action, e.value.clone())
                    .ok_or_else(|| format!("step {}: {} not in {}", i + 1, e.widget, state.state_id))?;
                match device.execute(&ev).map_err(|e| e.to_string())? {
                    ExecOutcome::Ok(next) => state = next,
                    ExecOutcome::Rejected(r) => return Err(format!("step {}: rejected: {r}", i + 1)),
                }
            }
            TestStep::Assertion(a) => {
                let ca = ConcreteAssertion { widget: a.widget.clone(), condition: a.condition };
                if !ca.holds(&state) {
                    return Err(format!("step {}: {ca} does not hold", i + 1));
                }
            }
        }
    }
    Ok(())
}

/// Checks the decision record of a trace against the privileged set it
/// consumed from: no completion after a validated match, no item matched
/// twice, and every consumed item accounted for by a match decision.
pub fn audit_trace(trace: &MigrationTrace, set: &PrivilegedSet) -> Result<(), String> {
    let mut matched = Vec::new();
    for s in &trace.steps {
        if let MatchDecision::Matched(id) = &s.matching.decision {
            matched.push(id.clone());
            if s.route == Route::Completion && s.fallback_reason.is_none() {
                return Err(format!("step {}: matched {id} but routed to completion without reason", s.step_index));
            }
        }
        if s.matching.validated && s.route != Route::Matched {
            return Err(format!("step {}: validated match routed to completion", s.step_index));
        }
        if s.route == Route::Matched && !s.matching.validated {
            return Err(format!("step {}: unvalidated match produced output", s.step_index));
        }
    }
    let unique: BTreeSet<&String> = matched.iter().collect();
    if unique.len() != matched.len() {
        return Err(format!("item matched twice: {matched:?}"));
    }
    let consumed: BTreeSet<&String> = set.items.iter().filter(|i| i.consumed).map(|i| &i.item_id).collect();
    if consumed != unique {
        return Err(format!("consumed {consumed:?} but matched {unique:?}"));
    }
    Ok(())
}

pub fn phrase_strategy() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9 ,.'_-]{0,20}".prop_map(|s| s.trim().to_string())
}

pub fn action_strategy() -> impl Strategy<Value = ActionKind> {
    prop::sample::select(ALL_ACTIONS.to_vec())
}

pub fn logic_step_strategy() -> impl Strategy<Value = LogicStep> {
    let event = (
        1usize..500,
        prop::collection::vec(action_strategy(), 1..4),
        phrase_strategy(),
        prop::option::of(phrase_strategy()),
    )
        .prop_map(|(i, a, w, v)| LogicStep::event(i, a, w, v));
    let assertion = (
        1usize..500,
        phrase_strategy(),
        prop::sample::select(vec![ConditionKind::Present, ConditionKind::Absent]),
    )
        .prop_map(|(i, w, c)| LogicStep::assertion(i, w, c));
    prop_oneof![3 => event, 2 => assertion]
}
