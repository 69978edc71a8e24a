// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

//! Replays test cases, judges alignment and success, and computes the
//! executable, perfect and success rates plus coverage capability.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{
    ground_event, ConcreteAssertion, ConcreteEvent, CoverageSet, Device, DriverError,
    ExecOutcome, GuiState,
};
use crate::ir::{TestCase, TestStep, WidgetIdentity};
use crate::llm::TokenUsage;
use crate::sim::{eval_oracle, SimAppSpec, SimError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("the suite is empty")]
    EmptySuite,
    #[error("the ground-truth coverage set is empty")]
    EmptyGroundTruth,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionResult {
    pub assertion: ConcreteAssertion,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub fully_executed: bool,
    pub assertion_results: Vec<AssertionResult>,
    /// Events executed, in order.
    pub events: Vec<ConcreteEvent>,
    /// Reset state followed by the state after each executed event.
    pub states: Vec<GuiState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub coverage: CoverageSet,
    #[serde(default)]
    pub variables: BTreeMap<String, String>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl ExecutionReport {
    pub fn assertions_pass(&self) -> bool {
        self.assertion_results.iter().all(|a| a.passed)
    }
}

/// Replays `case` from reset. Events are grounded by widget identity in
/// the state current at their position; the replay stops at the first
/// event that cannot be grounded or is rejected.
pub fn run_test(case: &TestCase, device: &mut dyn Device) -> Result<ExecutionReport, DriverError> {
    let started = Instant::now();
    let mut state = device.reset()?;
    let mut report = ExecutionReport {
        fully_executed: true,
        assertion_results: Vec::new(),
        events: Vec::new(),
        states: vec![state.clone()],
        failure: None,
        coverage: CoverageSet::default(),
        variables: BTreeMap::new(),
        wall_time: Duration::ZERO,
    };
    for (i, step) in case.steps.iter().enumerate() {
        match step {
            TestStep::Event(e) => {
                let Some(event) = ground_event(&state, &e.widget, e.action, e.value.clone()) else {
                    report.fully_executed = false;
                    report.failure = Some(format!(
                        "step {}: widget [{}] not found in state {}",
                        i + 1,
                        e.widget.phrase(),
                        state.state_id
                    ));
                    break;
                };
                match device.execute(&event)? {
                    ExecOutcome::Ok(next) => {
                        state = next;
                        report.states.push(state.clone());
                        report.events.push(event);
                    }
                    ExecOutcome::Rejected(reason) => {
                        report.fully_executed = false;
                        report.failure = Some(format!("step {}: {reason}", i + 1));
                        break;
                    }
                }
            }
            TestStep::Assertion(a) => {
                let assertion = ConcreteAssertion {
                    widget: a.widget.clone(),
                    condition: a.condition,
                };
                let passed = assertion.holds(&state);
                report.assertion_results.push(AssertionResult { assertion, passed });
            }
        }
    }
    report.coverage = device.coverage().unwrap_or_default();
    report.variables = device.variables().unwrap_or_default();
    report.wall_time = started.elapsed();
    Ok(report)
}

fn alignment_key(step: &TestStep) -> (u8, WidgetIdentity, String, Option<&str>) {
    match step {
        TestStep::Event(e) => (0, e.widget.identity(), e.action.keyword().to_string(), e.value.as_deref()),
        TestStep::Assertion(a) => (1, a.widget.identity(), a.condition.keyword().to_string(), None),
    }
}

/// Strict, order-sensitive comparison under the widget-identity rule.
pub fn alignment_check(migrated: &TestCase, ground_truth: &TestCase) -> bool {
    migrated.steps.len() == ground_truth.steps.len()
        && migrated
            .steps
            .iter()
            .zip(&ground_truth.steps)
            .all(|(a, b)| alignment_key(a) == alignment_key(b))
}

/// Full execution and passing assertions are prerequisites; the app's
/// functionality oracle decides the rest.
pub fn judge_success(
    report: &ExecutionReport,
    spec: &SimAppSpec,
    functionality: &str,
) -> Result<bool, SimError> {
    let oracle = eval_oracle(spec, functionality, &report.events, &report.states, &report.variables)?;
    Ok(report.fully_executed && report.assertions_pass() && oracle)
}

/// An exact fraction, kept as counts so percentages need no float rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub numerator: u64,
    pub denominator: u64,
}

impl Rate {
    pub fn value(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    /// Percentage at 0.1 precision, rounded half up.
    pub fn tenth_percent(self) -> f64 {
        let tenths = (self.numerator * 1000 + self.denominator / 2) / self.denominator;
        tenths as f64 / 10.0
    }

    /// Whole percentage, truncated (the convention of the published tables).
    pub fn whole_percent(self) -> u64 {
        self.numerator * 100 / self.denominator
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub total: u64,
    pub executable: u64,
    pub perfect: u64,
    pub successful: u64,
    /// Cases whose success cannot be judged (no oracle for the device).
    #[serde(default)]
    pub undetermined: u64,
}

impl MetricCounts {
    pub fn new(total: u64, executable: u64, perfect: u64, successful: u64) -> Self {
        MetricCounts {
            total,
            executable,
            perfect,
            successful,
            undetermined: 0,
        }
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        let ok = self.executable <= self.total
            && self.successful <= self.executable
            && self.perfect <= self.successful + self.undetermined
            && self.successful + self.undetermined <= self.total;
        if ok {
            Ok(())
        } else {
            Err(format!("inconsistent counts {self:?}"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rates {
    pub executable_rate: Rate,
    pub perfect_rate: Rate,
    /// Over the cases whose success could be judged; `None` if there are none.
    pub success_rate: Option<Rate>,
}

pub fn compute_rates(counts: &MetricCounts) -> Result<Rates, EvalError> {
    if counts.total == 0 {
        return Err(EvalError::EmptySuite);
    }
    let over_total = |n| Rate {
        numerator: n,
        denominator: counts.total,
    };
    let judged = counts.total - counts.undetermined;
    Ok(Rates {
        executable_rate: over_total(counts.executable),
        perfect_rate: over_total(counts.perfect),
        success_rate: (judged > 0).then_some(Rate {
            numerator: counts.successful,
            denominator: judged,
        }),
    })
}

/// Share of ground-truth coverage units the generated tests also cover.
pub fn coverage_capability(generated: &CoverageSet, ground_truth: &CoverageSet) -> Result<f64, EvalError> {
    if ground_truth.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    Ok(generated.intersection_len(ground_truth) as f64 / ground_truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessJudgement {
    Success,
    Failure,
    Undetermined,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionSummary {
    pub matched: u32,
    pub completion: u32,
    pub skipped: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub migrated: TestCase,
    pub execution: ExecutionReport,
    pub aligned: bool,
    pub success: SuccessJudgement,
    pub token_usage: TokenUsage,
    pub decisions: DecisionSummary,
}

impl CaseRecord {
    pub fn is_perfect(&self) -> bool {
        self.aligned && self.execution.fully_executed && self.success != SuccessJudgement::Failure
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub records: Vec<CaseRecord>,
    pub counts: MetricCounts,
    pub rates: Rates,
    pub mean_total_tokens: f64,
    #[serde(skip)]
    pub mean_wall_time: Duration,
}

pub fn aggregate_run(records: Vec<CaseRecord>) -> Result<RunReport, EvalError> {
    let mut counts = MetricCounts::default();
    let mut tokens = 0u64;
    let mut wall = Duration::ZERO;
    for r in &records {
        counts.total += 1;
        counts.executable += u64::from(r.execution.fully_executed);
        counts.perfect += u64::from(r.is_perfect());
        match r.success {
            SuccessJudgement::Success => counts.successful += 1,
            SuccessJudgement::Undetermined => counts.undetermined += 1,
            SuccessJudgement::Failure => {}
        }
        tokens += r.token_usage.total();
        wall += r.execution.wall_time;
    }
    let rates = compute_rates(&counts)?;
    let n = records.len() as f64;
    Ok(RunReport {
        mean_total_tokens: tokens as f64 / n,
        mean_wall_time: wall.div_f64(n),
        counts,
        rates,
        records,
    })
}

impl RunReport {
    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Flat summary: one line per case, then the rates.
    pub fn summary_table(&self) -> String {
        let yn = |b: bool| if b { "yes" } else { "no" };
        let mut out = String::from("case\texecutable\taligned\tsuccess\ttokens\n");
        for r in &self.records {
            let success = match r.success {
                SuccessJudgement::Success => "yes",
                SuccessJudgement::Failure => "no",
                SuccessJudgement::Undetermined => "undetermined",
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.case_id,
                yn(r.execution.fully_executed),
                yn(r.aligned),
                success,
                r.token_usage.total()
            );
        }
        let fmt = |r: Rate| format!("{:.1}% ({}%)", r.tenth_percent(), r.whole_percent());
        let c = &self.counts;
        let _ = writeln!(out, "total\t{}", c.total);
        let _ = writeln!(out, "executable-rate\t{}\t{}/{}", fmt(self.rates.executable_rate), c.executable, c.total);
        let _ = writeln!(out, "perfect-rate\t{}\t{}/{}", fmt(self.rates.perfect_rate), c.perfect, c.total);
        match self.rates.success_rate {
            Some(r) => {
                let _ = writeln!(out, "success-rate\t{}\t{}/{}", fmt(r), r.numerator, r.denominator);
            }
            None => {
                let _ = writeln!(out, "success-rate\tundetermined");
            }
        }
        if c.undetermined > 0 {
            let _ = writeln!(out, "undetermined\t{}", c.undetermined);
        }
        let _ = writeln!(out, "mean tokens\t{:.1}", self.mean_total_tokens);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_test_case;
    use crate::sim::{bundled_app, SimDevice};
    use std::sync::Arc;

    const ALPHA: &str = include_str!("../assets/cases/todo_alpha_add_remove.json");

    fn alpha() -> (SimDevice, Arc<SimAppSpec>) {
        let spec = Arc::new(bundled_app("todo_alpha").unwrap());
        (SimDevice::new(spec.clone()), spec)
    }

    #[test]
    fn ground_truth_replays_and_succeeds() {
        let case = parse_test_case(ALPHA).unwrap();
        let (mut dev, spec) = alpha();
        let r = run_test(&case, &mut dev).unwrap();
        assert!(r.fully_executed);
        assert_eq!(r.assertion_results.len(), 2);
        assert!(r.assertions_pass());
        assert_eq!(r.events.len(), 5);
        assert_eq!(r.states.len(), 6);
        assert!(judge_success(&r, &spec, "Add and remove an item").unwrap());
        assert!(!r.coverage.is_empty());
        assert_eq!(run_test(&case, &mut dev).unwrap().events, r.events);
    }

    #[test]
    fn missing_widget_stops_early() {
        let mut case = parse_test_case(ALPHA).unwrap();
        if let TestStep::Event(e) = &mut case.steps[1] {
            e.widget = crate::ir::WidgetRef::with_text("Nope");
        }
        let (mut dev, spec) = alpha();
        let r = run_test(&case, &mut dev).unwrap();
        assert!(!r.fully_executed);
        assert_eq!(r.events.len(), 1);
        assert!(!judge_success(&r, &spec, "Add and remove an item").unwrap());
    }

    #[test]
    fn failing_absent_assertion_does_not_stop_execution() {
        let mut case = parse_test_case(ALPHA).unwrap();
        // "To Do" is still shown on S5.
        case.steps.push(TestStep::Assertion(crate::ir::AssertionStep {
            widget: crate::ir::WidgetRef::with_text("To Do"),
            condition: crate::ir::ConditionKind::Absent,
        }));
        let (mut dev, spec) = alpha();
        let r = run_test(&case, &mut dev).unwrap();
        assert!(r.fully_executed);
        assert_eq!(
            r.assertion_results.iter().map(|a| a.passed).collect::<Vec<_>>(),
            [true, true, false]
        );
        assert!(!judge_success(&r, &spec, "Add and remove an item").unwrap());
    }

    #[test]
    fn oracle_rejects_case_that_never_deletes() {
        let mut case = parse_test_case(ALPHA).unwrap();
        case.steps.truncate(4);
        let (mut dev, spec) = alpha();
        let r = run_test(&case, &mut dev).unwrap();
        assert!(r.fully_executed && r.assertions_pass());
        assert!(!judge_success(&r, &spec, "Add and remove an item").unwrap());
        assert!(judge_success(&r, &spec, "Add an item").unwrap());
        assert!(judge_success(&r, &spec, "Unknown").is_err());
    }

    #[test]
    fn alignment_uses_identity() {
        let gt = parse_test_case(include_str!("../assets/cases/todo_beta_add_remove.json")).unwrap();
        assert!(alignment_check(&gt, &gt));
        let mut longer = gt.clone();
        longer.steps.push(gt.steps[0].clone());
        assert!(!alignment_check(&longer, &gt));
        let mut renamed = gt.clone();
        if let TestStep::Event(e) = &mut renamed.steps[2] {
            e.widget.text = Some("Store".into());
        }
        assert!(alignment_check(&renamed, &gt));
    }

    #[test]
    fn rates_from_counts() {
        let r = compute_rates(&MetricCounts::new(81, 81, 15, 52)).unwrap();
        assert_eq!(r.executable_rate.tenth_percent(), 100.0);
        assert_eq!(r.perfect_rate.tenth_percent(), 18.5);
        assert_eq!(r.success_rate.unwrap().tenth_percent(), 64.2);
        assert_eq!(
            [r.executable_rate.whole_percent(), r.perfect_rate.whole_percent(), r.success_rate.unwrap().whole_percent()],
            [100, 18, 64]
        );
        assert_eq!(compute_rates(&MetricCounts::new(5, 3, 0, 1)).unwrap().perfect_rate.value(), 0.0);
        assert_eq!(compute_rates(&MetricCounts::default()), Err(EvalError::EmptySuite));
    }

    #[test]
    fn whole_percent_is_exact() {
        // 29/100 as a float times 100 is 28.999…; counts keep it exact.
        assert_eq!(Rate { numerator: 29, denominator: 100 }.whole_percent(), 29);
    }

    #[test]
    fn coverage_ratio() {
        let gt: CoverageSet = (0..50).map(|i| format!("b{i}")).collect();
        let gen: CoverageSet = (10..60).map(|i| format!("b{i}")).collect();
        assert_eq!(coverage_capability(&gen, &gt).unwrap(), 0.8);
        assert_eq!(coverage_capability(&gt, &gt).unwrap(), 1.0);
        assert_eq!(coverage_capability(&CoverageSet::parse("x"), &gt).unwrap(), 0.0);
        assert_eq!(coverage_capability(&gt, &CoverageSet::default()), Err(EvalError::EmptyGroundTruth));
    }

    fn record(id: &str, tokens: u64, success: SuccessJudgement) -> CaseRecord {
        let case = parse_test_case(ALPHA).unwrap();
        let (mut dev, _) = alpha();
        CaseRecord {
            case_id: id.into(),
            execution: run_test(&case, &mut dev).unwrap(),
            migrated: case,
            aligned: true,
            success,
            token_usage: TokenUsage { prompt_tokens: tokens, completion_tokens: 0, requests: 1 },
            decisions: DecisionSummary::default(),
        }
    }

    #[test]
    fn aggregate_means_and_counts() {
        let report = aggregate_run(vec![
            record("a", 6000, SuccessJudgement::Success),
            record("b", 7000, SuccessJudgement::Success),
        ])
        .unwrap();
        assert_eq!(report.mean_total_tokens, 6500.0);
        assert_eq!(report.rates.success_rate.unwrap().value(), 1.0);
        assert!(report.summary_table().contains("success-rate\t100.0% (100%)\t2/2"));
        assert_eq!(aggregate_run(vec![]).unwrap_err(), EvalError::EmptySuite);

        let report = aggregate_run(vec![
            record("a", 1, SuccessJudgement::Success),
            record("b", 1, SuccessJudgement::Undetermined),
        ])
        .unwrap();
        assert_eq!(report.counts.undetermined, 1);
        assert_eq!(report.rates.success_rate.unwrap(), Rate { numerator: 1, denominator: 1 });
        report.counts.check_invariants().unwrap();
    }
}
