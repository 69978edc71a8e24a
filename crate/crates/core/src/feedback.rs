// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

//! Canonical feedback and checking prompts. Placeholders are the bracketed
//! words; everything else is sent byte-for-byte.

pub const IRRELEVANT_STEP: &str = "The number of your summarized test steps is more than the maximum number of test steps, which may introduce irrelevant test steps. Please re-summarize it";

pub const MISSING_STEP: &str = "The number of your summarized test steps is less than the minimum number of test steps, which may miss some necessary test steps. Please re-summarize it.";

pub const AMBIGUOUS_ACTION: &str = "The [Step] does not include an action that appears in the output example. Please select one action in the output example to re-describe this step";

pub const INCORRECT_TYPE: &str =
    "The type of [step] and the corresponding events/assertions are not aligned. Please re-match this step";

pub const IRRELEVANT_MATCHING: &str =
    "The [Step] matches new events and assertions. Please re-match this step";

pub const COMPLETION_CHECK: &str = "Based on [Events] or [Assertions] you generated for [Step], I would like to confirm if [Step] has been successfully completed. Please provide a response in just yes or no";

pub const INCORRECT_FORMAT: &str = "The [Step] does not adhere to the required formats. Please re-generate this step with the provided format";

pub fn ambiguous_action(step: &str) -> String {
    AMBIGUOUS_ACTION.replace("[Step]", step)
}

pub fn incorrect_type(step: &str) -> String {
    INCORRECT_TYPE.replace("[step]", step)
}

pub fn irrelevant_matching(step: &str) -> String {
    IRRELEVANT_MATCHING.replace("[Step]", step)
}

pub fn incorrect_format(step: &str) -> String {
    INCORRECT_FORMAT.replace("[Step]", step)
}

/// Fills the completion check. Empty item lists read as `none`.
pub fn completion_check(events: &[String], assertions: &[String], step: &str) -> String {
    let list = |items: &[String]| {
        if items.is_empty() {
            "none".to_string()
        } else {
            items.join("; ")
        }
    };
    COMPLETION_CHECK
        .replace("[Events]", &list(events))
        .replace("[Assertions]", &list(assertions))
        .replace("[Step]", step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fills_every_placeholder() {
        let s = completion_check(&["(Event) Click a widget [Add]".into()], &[], "Step 1");
        assert_eq!(
            s,
            "Based on (Event) Click a widget [Add] or none you generated for Step 1, I would like to confirm if Step 1 has been successfully completed. Please provide a response in just yes or no"
        );
        assert!(!incorrect_type("Step 2").contains("[step]"));
        assert!(!ambiguous_action("Step 2").contains("[Step]"));
    }
}
