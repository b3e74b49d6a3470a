//! Deterministic agent that issues each task's expected tool calls and
//! derives its answer from the observations alone.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Days, NaiveDate};
use serde_json::{json, Map, Value};

use super::observe::{antibiotic_lines, cultures, distinct_names, latest_panel_with, panel_value, payload};
use super::{AgentContext, Decision, Policy, Step};
use crate::bench::wbc_per_microlitre;
use crate::bench::{Answer, Bindings, CultureEntry, TaskId};
use crate::clinical_tools::{
    ANTIBIOTICS_TREATMENT, BACTERIA_RESULTS, CALCULATE_COCKCROFT_GAULT, LAB_RESULTS, PATIENT_BASIC_INFO,
    TOO_MANY_ITEMS_PREFIX,
};
use crate::mcp::ToolCall;
use crate::warehouse::catalog::{CREATININE, UREA_NITROGEN, VANCOMYCIN, WBC};
use crate::warehouse::{DateRange, Sex};

const MAX_LAB_CALLS: usize = 8;

#[derive(Clone, Debug)]
pub struct ScriptedOracle {
    task: TaskId,
    bindings: Bindings,
}

impl ScriptedOracle {
    pub fn new(task: TaskId, bindings: Bindings) -> Self {
        Self { task, bindings }
    }
}

impl Policy for ScriptedOracle {
    fn decide(&mut self, ctx: &AgentContext<'_>) -> Decision {
        decide(self.task, &self.bindings, ctx.history, false)
    }
}

pub(crate) fn call(name: &str, arguments: Value) -> Decision {
    Decision::CallTools(vec![ToolCall { name: name.to_owned(), arguments }])
}

pub(crate) fn window_args(b: &Bindings, w: DateRange) -> Value {
    json!({"patient_id": b.patient_id.as_str(), "start_date": w.start().to_string(), "end_date": w.end().to_string()})
}

pub(crate) fn last<'a>(history: &'a [Step], tool: &str) -> Option<&'a Step> {
    history.iter().rev().find(|s| s.tool_name == tool)
}

fn give_up(why: &str) -> Decision {
    Decision::Final(json!({"error": why}).to_string())
}

fn days_before(d: NaiveDate, n: u64) -> NaiveDate {
    d - Days::new(n)
}

enum LabSearch {
    Call(DateRange),
    Found(Map<String, Value>),
    Exhausted,
}

/// Replays the lab window schedule over past `lab_results` steps: halve
/// toward the anchor on an over-limit error, widen when the analyte is
/// absent (day, week, month, then month-sized steps backward).
fn lab_search(history: &[Step], anchor: NaiveDate, first: DateRange, key: &str) -> LabSearch {
    let mut window = first;
    let mut narrowed = false;
    let mut calls = 0;
    for step in history.iter().filter(|s| s.tool_name == LAB_RESULTS) {
        calls += 1;
        if step.is_error {
            if !step.result_text.contains(TOO_MANY_ITEMS_PREFIX) {
                return LabSearch::Exhausted;
            }
            narrowed = true;
            let half = (window.end() - window.start()).num_days() as u64 / 2;
            window = DateRange::new(days_before(window.end(), half), window.end()).expect("ordered");
            continue;
        }
        let Some(p) = payload(step) else { return LabSearch::Exhausted };
        if let Some(panel) = latest_panel_with(&p, key) {
            return LabSearch::Found(panel.clone());
        }
        let (start, end) = (window.start(), window.end());
        window = if end == anchor && start > days_before(anchor, 7) {
            DateRange::new(days_before(anchor, 7), anchor)
        } else if end == anchor && start > days_before(anchor, 30) && !narrowed {
            DateRange::new(days_before(anchor, 30), anchor)
        } else {
            DateRange::new(days_before(start, 30), days_before(start, 1))
        }
        .expect("ordered");
    }
    if calls >= MAX_LAB_CALLS {
        LabSearch::Exhausted
    } else {
        LabSearch::Call(window)
    }
}

/// The oracle's decision. With `misread` set, the tool calls stay correct
/// but the observations are interpreted in the task's characteristic wrong
/// way.
pub(crate) fn decide(task: TaskId, b: &Bindings, history: &[Step], misread: bool) -> Decision {
    let iv = b.intervention_date;
    let pid = b.patient_id.as_str();
    let finish = |a: Answer| Decision::Final(a.to_json());
    match task {
        TaskId::BodyWeight => {
            let Some(step) = last(history, PATIENT_BASIC_INFO) else {
                return call(PATIENT_BASIC_INFO, json!({"patient_id": pid}));
            };
            let field = if misread { "height" } else { "weight" };
            match payload(step).and_then(|p| p["latest_somatometry"][field].as_f64()) {
                Some(weight) => finish(Answer::Weight { weight }),
                None => give_up("no somatometry record"),
            }
        }
        TaskId::LabData => {
            match lab_search(history, iv, DateRange::new(days_before(iv, 30), iv).expect("ordered"), WBC) {
                LabSearch::Call(w) => call(LAB_RESULTS, window_args(b, w)),
                LabSearch::Found(panel) => {
                    let (value, unit) = panel_value(&panel, WBC).expect("panel carries WBC");
                    let wbc = if misread { value.round() as i64 } else { wbc_per_microlitre(value, unit) };
                    finish(Answer::Wbc { wbc })
                }
                LabSearch::Exhausted => give_up("no WBC result found"),
            }
        }
        TaskId::CultureHistory => {
            let window = b.window().expect("culture_history binds a window");
            let Some(step) = last(history, BACTERIA_RESULTS) else {
                return call(BACTERIA_RESULTS, window_args(b, window));
            };
            let Some(p) = payload(step) else { return give_up("culture lookup failed") };
            let results = cultures(&p)
                .into_iter()
                .filter(|c| misread || c.specimen == "blood")
                .map(|c| CultureEntry { date: c.date, species: c.organisms })
                .collect();
            finish(Answer::CultureHistory { results })
        }
        TaskId::Antibiotics => {
            let Some(step) = last(history, ANTIBIOTICS_TREATMENT) else {
                return call(ANTIBIOTICS_TREATMENT, window_args(b, DateRange::day(iv)));
            };
            let Some(p) = payload(step) else { return give_up("antibiotic lookup failed") };
            let mut antibiotics = distinct_names(&antibiotic_lines(&p));
            if misread {
                antibiotics.pop();
            }
            finish(Answer::Antibiotics { antibiotics })
        }
        TaskId::CalculateCcr => {
            let Some(info) = last(history, PATIENT_BASIC_INFO) else {
                return call(PATIENT_BASIC_INFO, json!({"patient_id": pid}));
            };
            let panel = match lab_search(history, iv, DateRange::day(iv), CREATININE) {
                LabSearch::Call(w) => return call(LAB_RESULTS, window_args(b, w)),
                LabSearch::Exhausted => return give_up("no serum creatinine found"),
                LabSearch::Found(panel) => panel,
            };
            if let Some(step) = last(history, CALCULATE_COCKCROFT_GAULT) {
                return match payload(step).and_then(|p| p["creatinine_clearance"].as_f64()) {
                    Some(ccr) => finish(Answer::Ccr { ccr }),
                    None => give_up("clearance calculation failed"),
                };
            }
            let Some(weight) = payload(info).and_then(|p| p["latest_somatometry"]["weight"].as_f64()) else {
                return give_up("no body weight");
            };
            let key = if misread { UREA_NITROGEN } else { CREATININE };
            let Some((scr, _)) = panel_value(&panel, key) else { return give_up("no serum creatinine found") };
            let sex = match b.sex {
                Some(Sex::Female) => "female",
                _ => "male",
            };
            call(
                CALCULATE_COCKCROFT_GAULT,
                json!({"age": b.age, "sex": sex, "weight": weight, "serum_creatinine": scr}),
            )
        }
        TaskId::CultureNegAbx => {
            let window = b.window().expect("culture_neg_abx binds a window");
            let Some(bact) = last(history, BACTERIA_RESULTS) else {
                return call(BACTERIA_RESULTS, window_args(b, window));
            };
            let Some(abx) = last(history, ANTIBIOTICS_TREATMENT) else {
                return call(ANTIBIOTICS_TREATMENT, window_args(b, window));
            };
            let (Some(bact), Some(abx)) = (payload(bact), payload(abx)) else {
                return give_up("lookup failed");
            };
            let vcm: BTreeSet<NaiveDate> =
                antibiotic_lines(&abx).into_iter().filter(|l| l.short_name == VANCOMYCIN).map(|l| l.date).collect();
            let Some(&first_vcm) = vcm.first() else {
                return finish(Answer::DaysSinceNegative { days_abx_since_first_neg_blood_culture: 0 });
            };
            let mut days: BTreeMap<NaiveDate, bool> = BTreeMap::new();
            for c in cultures(&bact).into_iter().filter(|c| c.specimen == "blood") {
                *days.entry(c.date).or_insert(true) &= c.organisms.is_empty();
            }
            let Some(first_negative) = days.range(first_vcm..).find(|(_, neg)| **neg).map(|(d, _)| *d) else {
                return give_up("no negative blood culture day after vancomycin start");
            };
            let from = if misread { first_vcm } else { first_negative };
            let count = vcm.range(from..).count() as i64;
            finish(Answer::DaysSinceNegative { days_abx_since_first_neg_blood_culture: count })
        }
    }
}
