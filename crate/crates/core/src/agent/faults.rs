//! Policies that deviate from the oracle in exactly one error category.

use chrono::Days;
use serde_json::json;

use super::oracle::{self, call, window_args};
use super::{AgentContext, Decision, Policy};
use crate::bench::{Answer, Bindings, ErrorCategory, TaskId};
use crate::clinical_tools::{ANTIBIOTICS_TREATMENT, BACTERIA_RESULTS, LAB_RESULTS, PATIENT_BASIC_INFO};
use crate::warehouse::DateRange;

/// A tool name that is never advertised.
pub const UNLISTED_TOOL: &str = "search_patient_records";

#[derive(Clone, Debug)]
pub struct FaultInjector {
    category: ErrorCategory,
    task: TaskId,
    bindings: Bindings,
}

impl FaultInjector {
    pub fn new(category: ErrorCategory, task: TaskId, bindings: Bindings) -> Self {
        Self { category, task, bindings }
    }

    pub fn category(&self) -> ErrorCategory {
        self.category
    }

    /// Wrong windows or ids, then the prompt's example value in place of a
    /// retry.
    fn argument(&self, turns_taken: usize) -> Decision {
        let b = &self.bindings;
        let iv = b.intervention_date;
        let range = |start, end| DateRange::new(start, end).expect("ordered");
        let window_end = b.window().map(|w| w.end()).unwrap_or(iv);
        let plan: Vec<(&str, serde_json::Value)> = match self.task {
            TaskId::BodyWeight => vec![(PATIENT_BASIC_INFO, json!({"patient_id": format!("{}0", b.patient_id)}))],
            TaskId::LabData => vec![(LAB_RESULTS, window_args(b, range(iv - Days::new(365), iv)))],
            TaskId::CultureHistory => vec![(BACTERIA_RESULTS, window_args(b, DateRange::day(iv)))],
            TaskId::Antibiotics => {
                vec![(ANTIBIOTICS_TREATMENT, window_args(b, DateRange::day(iv - Days::new(1))))]
            }
            TaskId::CalculateCcr => vec![
                (PATIENT_BASIC_INFO, json!({"patient_id": b.patient_id.as_str()})),
                (LAB_RESULTS, window_args(b, DateRange::day(iv))),
            ],
            TaskId::CultureNegAbx => vec![
                (BACTERIA_RESULTS, window_args(b, range(iv, window_end))),
                (ANTIBIOTICS_TREATMENT, window_args(b, range(iv, window_end))),
            ],
        };
        match plan.into_iter().nth(turns_taken) {
            Some((name, args)) => call(name, args),
            None => Decision::Final(Answer::format_example(self.task).to_json()),
        }
    }
}

impl Policy for FaultInjector {
    fn decide(&mut self, ctx: &AgentContext<'_>) -> Decision {
        match self.category {
            ErrorCategory::ToolInvocation => {
                if ctx.history.is_empty() {
                    call(
                        UNLISTED_TOOL,
                        json!({"patient_id": self.bindings.patient_id.as_str(), "query": self.task.as_str()}),
                    )
                } else {
                    Decision::Final(Answer::format_example(self.task).to_json())
                }
            }
            ErrorCategory::Argument => self.argument(ctx.history.len()),
            ErrorCategory::Interpretation => oracle::decide(self.task, &self.bindings, ctx.history, true),
            ErrorCategory::OutputFormat => match oracle::decide(self.task, &self.bindings, ctx.history, false) {
                Decision::Final(text) => Decision::Final(format!("```json\n{text}\n```")),
                other => other,
            },
        }
    }
}
