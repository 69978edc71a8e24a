// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

mod common;

use migratekit::abstractor::{validate_general_logic, AbstractorConfig};
use migratekit::concretizer::{concretize, ConcretizerConfig};
use migratekit::device::{ConcreteEvent, CoverageSet, Device, ExecOutcome, GuiState};
use migratekit::evaluator::{compute_rates, coverage_capability, run_test, MetricCounts};
use migratekit::ir::{
    extract_logic, parse_logic_step, parse_test_case, render_logic_step, render_numbered, LogicStep,
    Provenance, TestLogic,
};
use migratekit::llm::Gateway;
use migratekit::sim::{bundled_app, SimAppSpec, SimDevice};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn app(i: usize) -> SimAppSpec {
    match i % 4 {
        0 => bundled_app("todo_alpha").unwrap(),
        1 => bundled_app("todo_beta").unwrap(),
        2 => bundled_app("todo_gamma").unwrap(),
        _ => confirm_app(),
    }
}

/// Follows `choices` through the app: each choice picks a widget of the
/// current state and one of its actions (or an unsupported one).
fn walk(dev: &mut SimDevice, choices: &[(usize, usize)]) -> (Vec<GuiState>, Vec<CoverageSet>) {
    let mut state = dev.reset().unwrap();
    let mut states = vec![state.clone()];
    let mut coverage = vec![dev.coverage().unwrap()];
    for &(w, a) in choices {
        let widgets = state.ordered_widgets();
        let widget = widgets[w % widgets.len()];
        let action = ALL_ACTIONS[a % ALL_ACTIONS.len()];
        let event = ConcreteEvent::on(&state, widget, action, Some(format!("v{w}")));
        match dev.execute(&event).unwrap() {
            ExecOutcome::Ok(next) => {
                next.check_invariants().unwrap();
                state = next;
            }
            ExecOutcome::Rejected(_) => {
                assert_eq!(dev.observe().unwrap(), state, "rejected event changed the state");
            }
        }
        states.push(state.clone());
        coverage.push(dev.coverage().unwrap());
    }
    (states, coverage)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn numbered_render_round_trips(step in logic_step_strategy()) {
        prop_assert_eq!(parse_logic_step(&render_numbered(&step)).unwrap(), step.clone());
        let bare = parse_logic_step(&render_logic_step(&step)).unwrap();
        prop_assert_eq!(bare, LogicStep { index: 1, ..step });
    }

    #[test]
    fn rendered_steps_hold_one_line(step in logic_step_strategy()) {
        let line = render_logic_step(&step);
        prop_assert!(!line.contains('\n'));
        prop_assert!(line.starts_with("(Event) ") || line.starts_with("(Assertion) Check a widget ["));
    }

    #[test]
    fn rates_are_scale_invariant(
        total in 1u64..500,
        e in 0u64..=100, p in 0u64..=100, s in 0u64..=100,
        k in 1u64..50,
    ) {
        let executable = total * e / 100;
        let successful = executable * s / 100;
        let perfect = successful * p / 100;
        let base = compute_rates(&MetricCounts::new(total, executable, perfect, successful)).unwrap();
        let scaled = compute_rates(&MetricCounts::new(total * k, executable * k, perfect * k, successful * k)).unwrap();
        prop_assert_eq!(base.executable_rate.value(), scaled.executable_rate.value());
        prop_assert_eq!(base.perfect_rate.value(), scaled.perfect_rate.value());
        prop_assert_eq!(
            base.success_rate.map(|r| r.value()),
            scaled.success_rate.map(|r| r.value())
        );
        prop_assert_eq!(base.perfect_rate.tenth_percent(), scaled.perfect_rate.tenth_percent());
    }

    #[test]
    fn coverage_is_monotone_in_generated_set(
        gt in prop::collection::btree_set(0u32..200, 1..60),
        small in prop::collection::btree_set(0u32..200, 0..60),
        extra in prop::collection::btree_set(0u32..200, 0..60),
    ) {
        let gt: CoverageSet = gt.iter().map(|i| format!("b{i}")).collect();
        let smaller: CoverageSet = small.iter().map(|i| format!("b{i}")).collect();
        let larger: CoverageSet = small.union(&extra).map(|i| format!("b{i}")).collect();
        let a = coverage_capability(&smaller, &gt).unwrap();
        let b = coverage_capability(&larger, &gt).unwrap();
        prop_assert!(a <= b);
        prop_assert!((0.0..=1.0).contains(&b));
    }

    #[test]
    fn simulator_is_deterministic_and_coverage_grows(
        which in 0usize..4,
        choices in prop::collection::vec((0usize..8, 0usize..5), 0..25),
    ) {
        let spec = app(which);
        let (states_a, cov_a) = walk(&mut sim(&spec), &choices);
        let mut dev = sim(&spec);
        let (states_b, cov_b) = walk(&mut dev, &choices);
        prop_assert_eq!(&states_a, &states_b);
        prop_assert_eq!(&cov_a, &cov_b);
        for pair in cov_a.windows(2) {
            prop_assert!(pair[0].0.is_subset(&pair[1].0), "coverage shrank");
        }
        let again = walk(&mut dev, &choices);
        prop_assert_eq!(again.0, states_a);
    }

    #[test]
    fn abstractor_validation_is_pure(
        general in prop::collection::vec(logic_step_strategy(), 0..15),
        lens in prop::collection::vec(1usize..12, 1..4),
    ) {
        let logic = |steps: Vec<LogicStep>| TestLogic {
            functionality: "f".into(),
            category: "c".into(),
            steps,
            provenance: Provenance::General { app_ids: vec![] },
        };
        let sources: Vec<TestLogic> = lens
            .iter()
            .map(|&n| logic((1..=n).map(|i| LogicStep::event(i, vec![ALL_ACTIONS[0]], "w", None)).collect()))
            .collect();
        let general = logic(general);
        let config = AbstractorConfig::default();
        let first = validate_general_logic(&general, &sources, &config);
        prop_assert_eq!(&first, &validate_general_logic(&general, &sources, &config));
        let g = general.len();
        let longest = *lens.iter().max().unwrap();
        let shortest = *lens.iter().min().unwrap();
        prop_assert_eq!(first.len(), usize::from(2 * g > 3 * longest) + usize::from(g < shortest));
    }

    #[test]
    fn concretized_cases_replay_from_reset(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = app(seed as usize);
        let general = random_logic(&mut rng, &spec);
        let mut set = random_privileged(&mut rng, &spec);
        let gateway = Gateway::new(Box::new(RandomBackend::new(seed)));
        let (case, trace) = concretize(&general, &mut set, &mut sim(&spec), &gateway, &ConcretizerConfig::default()).unwrap();
        prop_assert!(replay(&case, &mut sim(&spec)).is_ok());
        prop_assert!(audit_trace(&trace, &set).is_ok());
        let emitted: usize = trace.steps.iter().map(|s| s.events.len() + s.assertions.len()).sum();
        prop_assert_eq!(emitted, case.steps.len());
        let requests: u64 = trace.steps.iter().map(|s| s.usage.requests).sum();
        prop_assert_eq!(requests, trace.token_usage.requests);
    }
}

#[test]
fn extraction_preserves_length_and_kinds() {
    for name in ["alpha", "beta", "gamma"] {
        let doc = std::fs::read_to_string(asset(&format!("cases/todo_{name}_add_remove.json"))).unwrap();
        let case = parse_test_case(&doc).unwrap();
        let logic = extract_logic(&case);
        assert_eq!(logic.len(), case.steps.len());
        for (s, l) in case.steps.iter().zip(&logic.steps) {
            assert_eq!(s.kind(), l.kind);
        }
    }
}

#[test]
fn run_test_is_deterministic() {
    let doc = std::fs::read_to_string(asset("cases/todo_gamma_add_remove.json")).unwrap();
    let case = parse_test_case(&doc).unwrap();
    let spec = bundled_app("todo_gamma").unwrap();
    let a = run_test(&case, &mut sim(&spec)).unwrap();
    let b = run_test(&case, &mut sim(&spec)).unwrap();
    assert_eq!(a.events, b.events);
    assert_eq!(a.states, b.states);
    assert_eq!(a.coverage, b.coverage);
    assert!(a.fully_executed && a.assertions_pass());
}
