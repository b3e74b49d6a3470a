use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::gold::GoldAnswer;
use super::score::score_run;
use crate::agent::{Step, Transcript};
use crate::clinical_tools::{TOOL_NAMES, TOO_MANY_ITEMS_PREFIX};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    ToolInvocation,
    Argument,
    Interpretation,
    OutputFormat,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [
        ErrorCategory::ToolInvocation,
        ErrorCategory::Argument,
        ErrorCategory::Interpretation,
        ErrorCategory::OutputFormat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::ToolInvocation => "tool_invocation",
            ErrorCategory::Argument => "argument",
            ErrorCategory::Interpretation => "interpretation",
            ErrorCategory::OutputFormat => "output_format",
        }
    }
}

impl std::str::FromStr for ErrorCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown error category `{s}`"))
    }
}

fn date_arg(step: &Step, key: &str) -> Option<NaiveDate> {
    step.arguments.get(key)?.as_str()?.parse().ok()
}

fn wrong_patient(step: &Step, gold: &GoldAnswer) -> bool {
    step.arguments.get("patient_id").is_some_and(|p| p.as_str() != Some(gold.patient_id.as_str()))
}

/// Whether the calls to `tool` could have produced the gold-determining
/// observations: right patient, at least one success, no unrecovered
/// over-limit error, and every required date inside a successful window.
fn arguments_valid(tool: &str, steps: &[Step], gold: &GoldAnswer) -> bool {
    let calls: Vec<&Step> = steps.iter().filter(|s| s.tool_name == tool).collect();
    if calls.iter().any(|s| wrong_patient(s, gold)) || calls.iter().all(|s| s.is_error) {
        return false;
    }
    for (k, s) in calls.iter().enumerate() {
        if s.is_error && s.result_text.contains(TOO_MANY_ITEMS_PREFIX) && calls[k + 1..].iter().all(|t| t.is_error) {
            return false;
        }
    }
    gold.coverage.iter().filter(|c| c.tool == tool).flat_map(|c| &c.dates).all(|date| {
        calls.iter().any(|s| {
            !s.is_error
                && matches!((date_arg(s, "start_date"), date_arg(s, "end_date")), (Some(a), Some(b)) if a <= *date && *date <= b)
        })
    })
}

/// Assigns at most one category to a run, by fixed precedence:
/// output format, tool invocation, argument, interpretation. Perfect runs
/// get none.
pub fn classify_error(transcript: &Transcript, gold: &GoldAnswer) -> Option<ErrorCategory> {
    let task = gold.task;
    let score = score_run(task, transcript.final_response.as_deref(), gold);
    if score.is_perfect() {
        return None;
    }
    if score.schema_error.is_some() {
        return Some(ErrorCategory::OutputFormat);
    }
    let steps = &transcript.steps;
    if steps.iter().any(|s| !TOOL_NAMES.contains(&s.tool_name.as_str())) {
        return Some(ErrorCategory::ToolInvocation);
    }
    let expected = task.expected_tools();
    for (i, tool) in expected.iter().enumerate() {
        if !steps.iter().any(|s| s.tool_name == *tool) {
            // A missing downstream call caused by bad upstream arguments is
            // an argument error, not an invocation error.
            let upstream_ok = expected[..i].iter().all(|t| arguments_valid(t, steps, gold));
            return Some(if upstream_ok { ErrorCategory::ToolInvocation } else { ErrorCategory::Argument });
        }
    }
    if steps.iter().any(|s| wrong_patient(s, gold)) || expected.iter().any(|t| !arguments_valid(t, steps, gold)) {
        return Some(ErrorCategory::Argument);
    }
    Some(ErrorCategory::Interpretation)
}
