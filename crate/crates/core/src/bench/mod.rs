//! The six ICT benchmark tasks: prompts, gold answers, scoring, error
//! classification and the sweep that ties them to the agent runtime.

mod answer;
mod classify;
mod gold;
mod runner;
mod score;

use std::fmt;
use std::str::FromStr;

use chrono::{Months, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clinical_tools::{
    ANTIBIOTICS_TREATMENT, BACTERIA_RESULTS, CALCULATE_COCKCROFT_GAULT, LAB_RESULTS, PATIENT_BASIC_INFO,
};
use crate::warehouse::{Case, DateRange, PatientId, Sex, Warehouse};

pub use crate::warehouse::Locale as Language;
pub use answer::{parse_answer, Answer, CultureEntry, SchemaError};
pub use classify::{classify_error, ErrorCategory};
pub(crate) use gold::wbc_per_microlitre;
pub use gold::{gold_answer, Coverage, Exclusion, GoldAnswer, GoldError};
pub use runner::{
    build_report, load_runs, run_benchmark, write_runs, BenchConfig, BenchError, BenchOutcome, ExcludedCase,
    MetricSummary, PatientMean, PolicySpec, Report, RunRecord, StoredRuns, TaskReport,
};
pub use score::{dice, score_run, Metric, MetricValue, RunScore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    BodyWeight,
    LabData,
    CultureHistory,
    Antibiotics,
    CalculateCcr,
    CultureNegAbx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Simple,
    Complex,
}

impl TaskId {
    pub const ALL: [TaskId; 6] = [
        TaskId::BodyWeight,
        TaskId::LabData,
        TaskId::CultureHistory,
        TaskId::Antibiotics,
        TaskId::CalculateCcr,
        TaskId::CultureNegAbx,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::BodyWeight => "body_weight",
            TaskId::LabData => "lab_data",
            TaskId::CultureHistory => "culture_history",
            TaskId::Antibiotics => "antibiotics",
            TaskId::CalculateCcr => "calculate_ccr",
            TaskId::CultureNegAbx => "culture_neg_abx",
        }
    }

    pub fn difficulty(self) -> Difficulty {
        match self {
            TaskId::CalculateCcr | TaskId::CultureNegAbx => Difficulty::Complex,
            _ => Difficulty::Simple,
        }
    }

    /// Tools a correct run must invoke, in dependency order.
    pub fn expected_tools(self) -> &'static [&'static str] {
        match self {
            TaskId::BodyWeight => &[PATIENT_BASIC_INFO],
            TaskId::LabData => &[LAB_RESULTS],
            TaskId::CultureHistory => &[BACTERIA_RESULTS],
            TaskId::Antibiotics => &[ANTIBIOTICS_TREATMENT],
            TaskId::CalculateCcr => &[PATIENT_BASIC_INFO, LAB_RESULTS, CALCULATE_COCKCROFT_GAULT],
            TaskId::CultureNegAbx => &[BACTERIA_RESULTS, ANTIBIOTICS_TREATMENT],
        }
    }

    /// Union of the placeholders used by both language templates.
    pub fn required_bindings(self) -> &'static [&'static str] {
        match self {
            TaskId::BodyWeight => &["patient_id"],
            TaskId::LabData | TaskId::Antibiotics => &["patient_id", "intervention_date"],
            TaskId::CultureHistory => &["patient_id", "start_date", "end_date"],
            TaskId::CalculateCcr => &["patient_id", "age", "sex", "intervention_date"],
            TaskId::CultureNegAbx => &["patient_id", "intervention_date", "start_date", "end_date"],
        }
    }

    pub fn template(self, language: Language) -> &'static str {
        use Language::*;
        match (self, language) {
            (TaskId::BodyWeight, En) => include_str!("../../prompts/body_weight.en.txt"),
            (TaskId::BodyWeight, Ja) => include_str!("../../prompts/body_weight.ja.txt"),
            (TaskId::LabData, En) => include_str!("../../prompts/lab_data.en.txt"),
            (TaskId::LabData, Ja) => include_str!("../../prompts/lab_data.ja.txt"),
            (TaskId::CultureHistory, En) => include_str!("../../prompts/culture_history.en.txt"),
            (TaskId::CultureHistory, Ja) => include_str!("../../prompts/culture_history.ja.txt"),
            (TaskId::Antibiotics, En) => include_str!("../../prompts/antibiotics.en.txt"),
            (TaskId::Antibiotics, Ja) => include_str!("../../prompts/antibiotics.ja.txt"),
            (TaskId::CalculateCcr, En) => include_str!("../../prompts/calculate_ccr.en.txt"),
            (TaskId::CalculateCcr, Ja) => include_str!("../../prompts/calculate_ccr.ja.txt"),
            (TaskId::CultureNegAbx, En) => include_str!("../../prompts/culture_neg_abx.en.txt"),
            (TaskId::CultureNegAbx, Ja) => include_str!("../../prompts/culture_neg_abx.ja.txt"),
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskId::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| format!("unknown task `{s}`"))
    }
}

/// Retrieval window of the culture tasks: one calendar month either side.
pub fn month_window(intervention_date: NaiveDate) -> DateRange {
    let start = intervention_date - Months::new(1);
    let end = intervention_date + Months::new(1);
    DateRange::new(start, end).expect("start precedes end")
}

/// Values substituted into prompt templates. Age and sex are supplied by the
/// harness, as the tool surface does not expose demographics for the
/// clearance task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bindings {
    pub patient_id: PatientId,
    pub intervention_date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<Sex>,
}

impl Bindings {
    pub fn for_case(task: TaskId, case: &Case, warehouse: &Warehouse) -> Result<Self, GoldError> {
        let iv = case.intervention_date;
        let mut b = Bindings {
            patient_id: case.patient_id.clone(),
            intervention_date: iv,
            start_date: None,
            end_date: None,
            age: None,
            sex: None,
        };
        match task {
            TaskId::CultureHistory | TaskId::CultureNegAbx => {
                let w = month_window(iv);
                b.start_date = Some(w.start());
                b.end_date = Some(w.end());
            }
            TaskId::CalculateCcr => {
                let p = warehouse.patient(&case.patient_id).map_err(|e| GoldError::Query(e.to_string()))?;
                b.age = Some(p.age_on(iv));
                b.sex = Some(p.sex);
            }
            _ => {}
        }
        Ok(b)
    }

    /// The explicit `[start_date, end_date]` window, when bound.
    pub fn window(&self) -> Option<DateRange> {
        DateRange::new(self.start_date?, self.end_date?).ok()
    }

    fn lookup(&self, name: &str) -> Result<Option<String>, RenderError> {
        Ok(match name {
            "patient_id" => Some(self.patient_id.to_string()),
            "intervention_date" => Some(self.intervention_date.to_string()),
            "start_date" => self.start_date.map(|d| d.to_string()),
            "end_date" => self.end_date.map(|d| d.to_string()),
            "age" => self.age.map(|a| a.to_string()),
            "sex" => self.sex.map(|s| s.letter().to_owned()),
            other => return Err(RenderError::UnknownPlaceholder(other.to_owned())),
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("missing binding `{0}`")]
    MissingBinding(String),
    #[error("unknown placeholder `{{{0}}}` in template")]
    UnknownPlaceholder(String),
}

pub fn render_prompt(task: TaskId, language: Language, bindings: &Bindings) -> Result<String, RenderError> {
    for name in task.required_bindings() {
        if bindings.lookup(name)?.is_none() {
            return Err(RenderError::MissingBinding((*name).to_owned()));
        }
    }
    render_template(task.template(language), bindings)
}

/// Substitutes `{name}` placeholders where `name` is `[a-z_]+`. Every other
/// brace, such as the JSON format examples, passes through untouched.
pub fn render_template(template: &str, bindings: &Bindings) -> Result<String, RenderError> {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after.bytes().take_while(|b| b.is_ascii_lowercase() || *b == b'_').count();
        if name_len > 0 && after.as_bytes().get(name_len) == Some(&b'}') {
            let name = &after[..name_len];
            let value = bindings.lookup(name)?.ok_or_else(|| RenderError::MissingBinding(name.to_owned()))?;
            out.push_str(&value);
            rest = &after[name_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn bindings() -> Bindings {
        Bindings {
            patient_id: "P001".into(),
            intervention_date: d("2024-05-28"),
            start_date: None,
            end_date: None,
            age: None,
            sex: None,
        }
    }

    #[test]
    fn body_weight_prompt_keeps_format_example() {
        let p = render_prompt(TaskId::BodyWeight, Language::En, &bindings()).unwrap();
        assert!(p.starts_with("For patient ID P001, please fetch the latest body weight."));
        assert!(p.contains(r#"{"weight": 45.2}"#));
    }

    #[test]
    fn ccr_requires_age_and_sex() {
        assert_eq!(
            render_prompt(TaskId::CalculateCcr, Language::Ja, &bindings()),
            Err(RenderError::MissingBinding("age".into()))
        );
        let b = Bindings { age: Some(49), sex: Some(Sex::Male), ..bindings() };
        let p = render_prompt(TaskId::CalculateCcr, Language::Ja, &b).unwrap();
        assert!(p.starts_with("患者ID P001（年齢: 49, 性別: M）について、2024-05-28 当日"), "{p}");
    }

    #[test]
    fn unknown_placeholder_is_an_error() {
        assert_eq!(
            render_template("x {weight_kg} y", &bindings()),
            Err(RenderError::UnknownPlaceholder("weight_kg".into()))
        );
        assert_eq!(render_template(r#"{"a": {}} {P}"#, &bindings()).unwrap(), r#"{"a": {}} {P}"#);
    }

    #[test]
    fn every_template_renders_with_its_bindings() {
        let full = Bindings {
            start_date: Some(d("2024-04-28")),
            end_date: Some(d("2024-06-28")),
            age: Some(70),
            sex: Some(Sex::Female),
            ..bindings()
        };
        for task in TaskId::ALL {
            for lang in [Language::En, Language::Ja] {
                let p = render_prompt(task, lang, &full).unwrap();
                assert!(!p.contains("{patient_id}") && p.contains("P001"), "{task} {lang:?}");
            }
        }
    }

    #[test]
    fn month_window_uses_calendar_months() {
        let w = month_window(d("2024-03-31"));
        assert_eq!((w.start(), w.end()), (d("2024-02-29"), d("2024-04-30")));
    }

    #[test]
    fn difficulty_split() {
        let complex: Vec<_> = TaskId::ALL.into_iter().filter(|t| t.difficulty() == Difficulty::Complex).collect();
        assert_eq!(complex, [TaskId::CalculateCcr, TaskId::CultureNegAbx]);
    }
}
