// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use super::*;
use crate::device::Bounds;
use crate::ir::{extract_logic, parse_logic_step, parse_test_case};
use crate::llm::{ScriptEntry, ScriptedBackend};
use crate::sim::{bundled_app, eval_oracle, SimDevice};

const ALPHA_CASE: &str = include_str!("../../assets/cases/todo_alpha_add_remove.json");
const FIG2_SCRIPT: &str = include_str!("../../assets/fixtures/fig2_alpha_script.json");

fn gateway(entries: &[(&str, &str)]) -> Gateway {
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

fn fig2_gateway() -> Gateway {
    let entries: Vec<ScriptEntry> = serde_json::from_str(FIG2_SCRIPT).unwrap();
    Gateway::new(Box::new(ScriptedBackend::new(entries)))
}

fn sim(name: &str) -> SimDevice {
    SimDevice::new(Arc::new(bundled_app(name).unwrap()))
}

fn step(line: &str) -> LogicStep {
    parse_logic_step(line).unwrap()
}

fn privileged(doc: &str) -> PrivilegedSet {
    PrivilegedSet::parse(doc).unwrap()
}

const ADD_AND_CHECK: &str = r#"{"source_tool":"t","items":[
    {"item_id":"P1","type":"event","widget":{"text":"Add"},"action":"click"},
    {"item_id":"P2","type":"assertion","widget":{"text":"Add"},"condition":"present"}]}"#;

#[test]
fn fig2_walkthrough_yields_five_events_and_two_assertions() {
    let general = extract_logic(&parse_test_case(ALPHA_CASE).unwrap());
    let gw = fig2_gateway();
    let mut dev = sim("todo_alpha");
    let mut set = PrivilegedSet::empty("none");
    let (case, trace) =
        concretize(&general, &mut set, &mut dev, &gw, &ConcretizerConfig::default()).unwrap();
    assert_eq!(case.event_count(), 5);
    assert_eq!(case.assertion_count(), 2);
    assert!(trace.skipped_steps.is_empty());
    assert!(trace.steps.iter().all(|s| s.route == Route::Completion));
    assert_eq!(trace.token_usage.requests, 21);

    // Replay from reset by identity and check the functionality oracle.
    let mut state = dev.reset().unwrap();
    let mut states = vec![state.clone()];
    let mut events = Vec::new();
    for s in &case.steps {
        match s {
            TestStep::Event(e) => {
                let ev = ground_event(&state, &e.widget, e.action, e.value.clone()).unwrap();
                match dev.execute(&ev).unwrap() {
                    ExecOutcome::Ok(next) => state = next,
                    ExecOutcome::Rejected(r) => panic!("replay rejected: {r}"),
                }
                states.push(state.clone());
                events.push(ev);
            }
            TestStep::Assertion(a) => {
                let ca = ConcreteAssertion { widget: a.widget.clone(), condition: a.condition };
                assert!(ca.holds(&state), "{ca} fails on {}", state.state_id);
            }
        }
    }
    let vars = dev.variables().unwrap();
    assert!(eval_oracle(dev.spec(), "Add and remove an item", &events, &states, &vars).unwrap());
}

#[test]
fn matching_picks_an_item_and_consumes_it() {
    let gw = gateway(&[("", "P1")]);
    let mut s = LlmSession::new(&gw);
    let mut set = privileged(ADD_AND_CHECK);
    let out = match_step(&step("(Event) Click a widget [Add]"), &mut set, "f", &mut s, &ConcretizerConfig::default()).unwrap();
    assert_eq!(out.decision, MatchDecision::Matched("P1".into()));
    assert!(out.violations.is_empty());
    assert!(set.get("P1").unwrap().consumed);
}

#[test]
fn unmatched_token_is_unmatched() {
    let gw = gateway(&[("", "-1")]);
    let mut s = LlmSession::new(&gw);
    let mut set = privileged(ADD_AND_CHECK);
    let out = match_step(&step("(Event) Click a widget [Add]"), &mut set, "f", &mut s, &ConcretizerConfig::default()).unwrap();
    assert_eq!(out.decision, MatchDecision::Unmatched);
    assert_eq!(set.unconsumed().count(), 2);
}

#[test]
fn all_consumed_offers_none_and_degrades() {
    let gw = gateway(&[("", "P1"), ("", "P1")]);
    let mut s = LlmSession::new(&gw);
    let mut set = privileged(ADD_AND_CHECK);
    set.consume("P1");
    set.consume("P2");
    let st = step("(Event) Click a widget [Add]");
    let prompt = assemble_prompt(&matching_prompt(&st, &set, "f", &ConcretizerConfig::default()).unwrap());
    assert!(prompt.contains("Privileged events and assertions:\nnone"));
    let out = match_step(&st, &mut set, "f", &mut s, &ConcretizerConfig::default()).unwrap();
    assert_eq!(out.decision, MatchDecision::Unmatched);
    assert!(out.degraded);
    assert_eq!(out.reasks, 1);
}

#[test]
fn type_and_membership_rules() {
    let set = privileged(ADD_AND_CHECK);
    let a = step("Step 4: (Assertion) Check a widget [Add] [appears]");
    let v = validate_match(&a, &MatchDecision::Matched("P1".into()), &set);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].rule, CncRule::IncorrectType);
    assert_eq!(
        v[0].feedback_text,
        "The type of Step 4 \"(Assertion) Check a widget [Add] [appears]\" and the corresponding events/assertions are not aligned. Please re-match this step"
    );
    let v = validate_match(&a, &MatchDecision::Matched("P99".into()), &set);
    assert_eq!(v.iter().map(|v| v.rule).collect::<Vec<_>>(), [CncRule::IrrelevantMatching]);
    assert!(validate_match(&a, &MatchDecision::Unmatched, &set).is_empty());
}

#[test]
fn type_feedback_then_correct_answer() {
    let gw = gateway(&[("", "P1"), ("", "P2")]);
    let mut s = LlmSession::new(&gw);
    let mut set = privileged(ADD_AND_CHECK);
    let a = step("(Assertion) Check a widget [Add] [appears]");
    let out = match_step(&a, &mut set, "f", &mut s, &ConcretizerConfig::default()).unwrap();
    assert_eq!(out.decision, MatchDecision::Matched("P2".into()));
    assert_eq!(out.reasks, 1);
    assert_eq!(out.violations[0].rule, CncRule::IncorrectType);
    assert!(!set.get("P1").unwrap().consumed);
}

#[test]
fn state_description_orders_and_hides_actions() {
    let mut dev = sim("todo_alpha");
    let s4 = {
        dev.reset().unwrap();
        for ev in ["add", "title_input", "add_confirm"] {
            let st = dev.observe().unwrap();
            let w = st.widget(ev).unwrap().clone();
            let action = w.supported_actions[0];
            let value = (action == ActionKind::Edit).then(|| "sample to do".to_string());
            dev.execute(&ConcreteEvent::on(&st, &w, action, value)).unwrap();
        }
        let st = dev.observe().unwrap();
        let item = st.widget("item_sample_to_do").unwrap().clone();
        match dev.execute(&ConcreteEvent::on(&st, &item, ActionKind::Swipe, None)).unwrap() {
            ExecOutcome::Ok(s) => s,
            other => panic!("{other:?}"),
        }
    };
    assert_eq!(s4.state_id, "S4");
    let d = describe_state(&s4, true);
    assert_eq!(d, "undo: text \"Undo\"; actions: click\ndelete: text \"DELETE\"; actions: click");
    let d = describe_state(&s4, false);
    assert!(!d.contains("actions") && !d.contains("click"));

    let w = |id: &str, left: i32| StateWidget {
        widget_id: id.into(),
        text: Some(id.into()),
        content_desc: None,
        resource_id: None,
        bounds: Bounds::new(left, 10, left + 5, 20),
        supported_actions: vec![],
    };
    let st = GuiState { state_id: "x".into(), widgets: vec![w("right", 50), w("left", 0)] };
    assert!(describe_state(&st, false).starts_with("left:"));
}

#[test]
fn unknown_widget_three_times_skips() {
    let gw = gateway(&[("", "ghost click"), ("", "ghost click"), ("", "ghost click")]);
    let mut s = LlmSession::new(&gw);
    let mut dev = sim("todo_alpha");
    let mut ctx = GenerationContext::new(dev.reset().unwrap());
    let out = select_event(&step("(Event) Click a widget [Add]"), &mut ctx, &mut dev, &mut s, &ConcretizerConfig::default(), "f").unwrap();
    assert!(!out.completed);
    assert_eq!(out.rounds, 3);
    assert_eq!(out.executions, 0);
    assert!(ctx.chosen_events.is_empty());
}

#[test]
fn or_alternatives_fall_back_to_supported_action() {
    let gw = gateway(&[
        ("Swipe or Click", "row_sample_to_do"),
        ("I would like to confirm", "yes"),
    ]);
    let mut s = LlmSession::new(&gw);
    let mut dev = sim("todo_gamma");
    let mut st = dev.reset().unwrap();
    for (id, value) in [("add_fab", None), ("todo_input", Some("sample to do")), ("ok", None)] {
        let w = st.widget(id).unwrap().clone();
        let ev = ConcreteEvent::on(&st, &w, w.supported_actions[0], value.map(String::from));
        st = match dev.execute(&ev).unwrap() {
            ExecOutcome::Ok(s) => s,
            other => panic!("{other:?}"),
        };
    }
    let mut ctx = GenerationContext::new(st);
    let out = select_event(
        &step("(Event) Swipe or Click a widget [sample to do]"),
        &mut ctx,
        &mut dev,
        &mut s,
        &ConcretizerConfig::default(),
        "f",
    )
    .unwrap();
    assert!(out.completed);
    assert_eq!(ctx.chosen_events[0].action, ActionKind::Click);
    assert_eq!(ctx.current().state_id, "detail");
}

#[test]
fn completion_answers() {
    let st = step("(Event) Click a widget [Add]");
    for (answer, expected) in [("yes", true), ("Yes.", true), ("No, the step needs another event", false), ("maybe", false)] {
        let gw = gateway(&[("", answer)]);
        let mut s = LlmSession::new(&gw);
        assert_eq!(check_completion(&st, &["e".into()], &[], &mut s).unwrap(), expected, "{answer}");
    }
}

#[test]
fn output_format_contexts() {
    let st = step("(Event) Click a widget [Add]");
    assert!(validate_output_format("(Event) Click a widget [Add]", OutputGrammar::LogicStep, &st).is_none());
    let v = validate_output_format("just press the plus", OutputGrammar::LogicStep, &st).unwrap();
    assert_eq!(v.rule, CncRule::IncorrectFormat);
    assert_eq!(
        v.feedback_text,
        "The Step 1 \"(Event) Click a widget [Add]\" does not adhere to the required formats. Please re-generate this step with the provided format"
    );
    assert!(validate_output_format("P1", OutputGrammar::ItemId, &st).is_none());
    assert!(validate_output_format("-1", OutputGrammar::ItemId, &st).is_none());
    assert!(validate_output_format("add click", OutputGrammar::EventSelection, &st).is_none());
    assert!(validate_output_format("title_input edit with [milk]", OutputGrammar::EventSelection, &st).is_none());
    assert!(validate_output_format("I would click add", OutputGrammar::EventSelection, &st).is_some());
    assert!(validate_output_format("no", OutputGrammar::YesNo, &st).is_none());
}

#[test]
fn selection_grammar() {
    assert_eq!(
        parse_selection("title_input edit with [milk]"),
        Some(Selection { widget_id: "title_input".into(), action: Some(ActionKind::Edit), value: Some("milk".into()) })
    );
    assert_eq!(
        parse_selection("[add]"),
        Some(Selection { widget_id: "add".into(), action: None, value: None })
    );
    assert_eq!(parse_selection("x long-press").unwrap().action, Some(ActionKind::LongPress));
    assert!(parse_selection("x tap").is_none());
}

#[test]
fn three_of_seven_steps_come_from_the_privileged_set() {
    let general = extract_logic(&parse_test_case(ALPHA_CASE).unwrap());
    // Items for steps 1, 3 and 6; the rest is completed on the device.
    let set_doc = r#"{"source_tool":"fixture","items":[
        {"item_id":"P1","type":"event","widget":{"text":"Add"},"action":"click"},
        {"item_id":"P2","type":"event","widget":{"text":"Add confirm"},"action":"click"},
        {"item_id":"P3","type":"event","widget":{"text":"DELETE"},"action":"click"}]}"#;
    let mut entries: Vec<ScriptEntry> = serde_json::from_str(FIG2_SCRIPT).unwrap();
    let patch = |entries: &mut Vec<ScriptEntry>, step_no: usize, id: &str| {
        let base = (step_no - 1) * 3;
        entries[base].respond = id.into();
        // A matched step never reaches event selection.
        entries[base + 1].pattern = "never sent".into();
    };
    patch(&mut entries, 1, "P1");
    patch(&mut entries, 3, "P2");
    patch(&mut entries, 6, "P3");
    let gw = Gateway::new(Box::new(ScriptedBackend::new(entries)));
    let mut set = privileged(set_doc);
    let mut dev = sim("todo_alpha");
    let (case, trace) = concretize(&general, &mut set, &mut dev, &gw, &ConcretizerConfig::default()).unwrap();
    let matched = trace.steps.iter().filter(|s| s.route == Route::Matched).count();
    let completion = trace.steps.iter().filter(|s| s.route == Route::Completion).count();
    assert_eq!((matched, completion), (3, 4));
    assert_eq!(case.steps.len(), 7);
    assert!(set.unconsumed().next().is_none());
}

#[test]
fn ungroundable_match_falls_back_to_completion() {
    let set_doc = r#"{"source_tool":"t","items":[
        {"item_id":"P1","type":"event","widget":{"text":"Plus"},"action":"click"}]}"#;
    let gw = gateway(&[
        ("Privileged", "P1"),
        ("Select one event", "add click"),
        ("I would like to confirm", "yes"),
    ]);
    let general = TestLogic {
        functionality: "f".into(),
        category: "c".into(),
        steps: vec![step("(Event) Click a widget [Add]")],
        provenance: crate::ir::Provenance::Individual { app_id: "x".into() },
    };
    let mut set = privileged(set_doc);
    let mut dev = sim("todo_alpha");
    let (case, trace) = concretize(&general, &mut set, &mut dev, &gw, &ConcretizerConfig::default()).unwrap();
    assert_eq!(case.steps.len(), 1);
    let st = &trace.steps[0];
    assert_eq!(st.matching.decision, MatchDecision::Matched("P1".into()));
    assert!(!st.matching.validated);
    assert_eq!(st.route, Route::Completion);
    assert!(st.fallback_reason.as_deref().unwrap().contains("not found"));
}

#[test]
fn unconfirmed_selection_keeps_connection_events_or_rolls_back() {
    // "no" after the first event keeps it and selects again.
    let gw = gateway(&[
        ("Select one event", "add click"),
        ("I would like to confirm", "no"),
        ("Select one event", "title_input edit with [milk]"),
        ("I would like to confirm", "yes"),
    ]);
    let mut s = LlmSession::new(&gw);
    let mut dev = sim("todo_alpha");
    let mut ctx = GenerationContext::new(dev.reset().unwrap());
    let st = step("(Event) Edit a widget [Title] with [milk]");
    let out = select_event(&st, &mut ctx, &mut dev, &mut s, &ConcretizerConfig::default(), "f").unwrap();
    assert!(out.completed);
    assert_eq!(ctx.chosen_events.len(), 2);
    assert_eq!(ctx.state_history.len(), 3);
    assert_eq!(out.violations[0].rule, CncRule::CompletionUnconfirmed);

    // Never confirmed: everything executed for the step is undone.
    let gw = gateway(&[("Select one event", "add click"), ("I would like to confirm", "no"),
        ("Select one event", "cancel click"), ("I would like to confirm", "no"),
        ("Select one event", "add click"), ("I would like to confirm", "no")]);
    let mut s = LlmSession::new(&gw);
    let mut ctx = GenerationContext::new(dev.reset().unwrap());
    let out = select_event(&st, &mut ctx, &mut dev, &mut s, &ConcretizerConfig::default(), "f").unwrap();
    assert!(!out.completed);
    assert_eq!(out.executions, 3);
    assert!(ctx.chosen_events.is_empty());
    assert_eq!(ctx.state_history.len(), 1);
    assert_eq!(dev.observe().unwrap().state_id, "S1");
}

#[test]
fn absent_assertion_without_history_is_skipped() {
    let gw = gateway(&[]);
    let mut s = LlmSession::new(&gw);
    let mut dev = sim("todo_alpha");
    let mut ctx = GenerationContext::new(dev.reset().unwrap());
    let out = generate_assertion(&step("(Assertion) Check a widget [x] [disappears]"), &mut ctx, &mut s, &ConcretizerConfig::default(), "f").unwrap();
    assert!(!out.completed);
    assert_eq!(out.rounds, 0);
    assert_eq!(s.usage().requests, 0);
}
