// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

//! Privileged events and assertions: candidates produced by an external
//! migration tool and offered to the matcher before on-device exploration.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::device::{ConcreteEvent, Device, DriverError, ExecOutcome, GuiState, StateWidget};
use crate::ir::{
    parse_step, AssertionStep, ConditionKind, EventStep, IrError, StepKind, TestCase, TestStep,
    WidgetRef,
};

pub const DEFAULT_LEXICAL_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivilegedItem {
    pub item_id: String,
    #[serde(flatten)]
    pub step: TestStep,
    #[serde(default, skip_serializing)]
    pub consumed: bool,
}

impl PrivilegedItem {
    pub fn kind(&self) -> StepKind {
        self.step.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivilegedSet {
    pub source_tool: String,
    pub items: Vec<PrivilegedItem>,
}

impl PrivilegedSet {
    pub fn empty(source_tool: impl Into<String>) -> Self {
        PrivilegedSet {
            source_tool: source_tool.into(),
            items: Vec::new(),
        }
    }

    /// Parses the file form `{source_tool, items:[{item_id, type, widget, ...}]}`.
    pub fn parse(document: &str) -> Result<Self, IrError> {
        let root: Value = serde_json::from_str(document)
            .map_err(|e| IrError::schema("$", format!("invalid JSON: {e}")))?;
        let obj = root
            .as_object()
            .ok_or_else(|| IrError::schema("$", "expected an object"))?;
        let source_tool = match obj.get("source_tool") {
            Some(Value::String(s)) => s.clone(),
            None | Some(Value::Null) => String::from("unknown"),
            Some(_) => return Err(IrError::schema("$.source_tool", "expected a string")),
        };
        let raw = match obj.get("items") {
            Some(Value::Array(a)) => a.as_slice(),
            None | Some(Value::Null) => &[],
            Some(_) => return Err(IrError::schema("$.items", "expected an array")),
        };
        let mut seen = BTreeSet::new();
        let mut items = Vec::with_capacity(raw.len());
        for (i, v) in raw.iter().enumerate() {
            let path = format!("$.items[{i}]");
            let item_id = v
                .get("item_id")
                .and_then(Value::as_str)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| IrError::schema(format!("{path}.item_id"), "missing item id"))?;
            if !seen.insert(item_id.to_string()) {
                return Err(IrError::schema(
                    format!("{path}.item_id"),
                    format!("duplicate item id `{item_id}`"),
                ));
            }
            items.push(PrivilegedItem {
                item_id: item_id.to_string(),
                step: parse_step(v, &path)?,
                consumed: false,
            });
        }
        Ok(PrivilegedSet { source_tool, items })
    }

    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("privileged set serializes") + "\n"
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, item_id: &str) -> Option<&PrivilegedItem> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    pub fn unconsumed(&self) -> impl Iterator<Item = &PrivilegedItem> {
        self.items.iter().filter(|i| !i.consumed)
    }

    /// Marks `item_id` consumed; false when it is unknown or already used.
    pub fn consume(&mut self, item_id: &str) -> bool {
        match self.items.iter_mut().find(|i| i.item_id == item_id) {
            Some(item) if !item.consumed => {
                item.consumed = true;
                true
            }
            _ => false,
        }
    }
}

/// Lowercased alphanumeric tokens of all three attributes. Resource ids
/// lose any package prefix up to `id/`.
pub fn widget_tokens(widget: &WidgetRef) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let rid = widget
        .resource_id
        .as_deref()
        .map(|r| r.rsplit_once("id/").map_or(r, |(_, tail)| tail));
    for attr in [widget.text.as_deref(), widget.content_desc.as_deref(), rid]
        .into_iter()
        .flatten()
    {
        out.extend(
            attr.split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_lowercase),
        );
    }
    out
}

/// Jaccard overlap of the token sets.
pub fn token_overlap(a: &WidgetRef, b: &WidgetRef) -> f64 {
    let (ta, tb) = (widget_tokens(a), widget_tokens(b));
    let union = ta.union(&tb).count();
    if union == 0 {
        return 0.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

fn best_match<'a>(
    source: &WidgetRef,
    candidates: impl Iterator<Item = &'a StateWidget>,
    threshold: f64,
) -> Option<&'a StateWidget> {
    let mut best: Option<(f64, &StateWidget)> = None;
    for w in candidates {
        let score = token_overlap(source, &w.widget_ref());
        if score > threshold && best.is_none_or(|(s, _)| score > s) {
            best = Some((score, w));
        }
    }
    best.map(|(_, w)| w)
}

/// Maps each source step onto the target by token overlap, executing mapped
/// events greedily so later steps are looked up in the state they lead to.
/// Steps without a widget scoring above `threshold` are dropped.
pub fn lexical_privileged_set(
    source: &TestCase,
    device: &mut dyn Device,
    threshold: f64,
) -> Result<PrivilegedSet, DriverError> {
    let mut state = device.reset()?;
    let mut history: Vec<GuiState> = vec![state.clone()];
    let mut items = Vec::new();
    for step in &source.steps {
        let mapped = match step {
            TestStep::Event(e) => {
                let ordered = state.ordered_widgets();
                let cands = ordered.into_iter().filter(|w| w.supports(e.action));
                best_match(&e.widget, cands, threshold).map(|w| {
                    let ev = ConcreteEvent::on(&state, w, e.action, e.value.clone());
                    (
                        TestStep::Event(EventStep {
                            widget: w.widget_ref(),
                            action: e.action,
                            value: e.value.clone(),
                        }),
                        Some(ev),
                    )
                })
            }
            TestStep::Assertion(a) => {
                let found = match a.condition {
                    ConditionKind::Present => {
                        best_match(&a.widget, state.ordered_widgets().into_iter(), threshold)
                            .map(StateWidget::widget_ref)
                    }
                    ConditionKind::Absent => history
                        .iter()
                        .rev()
                        .skip(1)
                        .flat_map(|s| s.ordered_widgets())
                        .filter(|w| !state.contains(&w.widget_ref()))
                        .fold(None::<(f64, WidgetRef)>, |best, w| {
                            let score = token_overlap(&a.widget, &w.widget_ref());
                            match best {
                                Some((s, _)) if score <= s => best,
                                _ if score > threshold => Some((score, w.widget_ref())),
                                _ => best,
                            }
                        })
                        .map(|(_, w)| w),
                };
                found.map(|widget| {
                    (
                        TestStep::Assertion(AssertionStep {
                            widget,
                            condition: a.condition,
                        }),
                        None,
                    )
                })
            }
        };
        let Some((step, event)) = mapped else {
            continue;
        };
        items.push(PrivilegedItem {
            item_id: format!("P{}", items.len() + 1),
            step,
            consumed: false,
        });
        if let Some(ev) = event {
            if let ExecOutcome::Ok(next) = device.execute(&ev)? {
                state = next;
                history.push(state.clone());
            }
        }
    }
    device.reset()?;
    Ok(PrivilegedSet {
        source_tool: "lexical".into(),
        items,
    })
}
