use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::TaskId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CultureEntry {
    pub date: NaiveDate,
    pub species: Vec<String>,
}

/// A schema-conformant final answer. Serializes to exactly the JSON object
/// the task prompt asks for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Weight { weight: f64 },
    Wbc { wbc: i64 },
    CultureHistory { results: Vec<CultureEntry> },
    Antibiotics { antibiotics: Vec<String> },
    Ccr { ccr: f64 },
    DaysSinceNegative { days_abx_since_first_neg_blood_culture: i64 },
}

impl Answer {
    pub fn task(&self) -> TaskId {
        match self {
            Answer::Weight { .. } => TaskId::BodyWeight,
            Answer::Wbc { .. } => TaskId::LabData,
            Answer::CultureHistory { .. } => TaskId::CultureHistory,
            Answer::Antibiotics { .. } => TaskId::Antibiotics,
            Answer::Ccr { .. } => TaskId::CalculateCcr,
            Answer::DaysSinceNegative { .. } => TaskId::CultureNegAbx,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("answer serializes")
    }

    /// The value shown in the task's own prompt as a format example.
    pub fn format_example(task: TaskId) -> Answer {
        match task {
            TaskId::BodyWeight => Answer::Weight { weight: 45.2 },
            TaskId::LabData => Answer::Wbc { wbc: 12000 },
            TaskId::CultureHistory => Answer::CultureHistory {
                results: vec![
                    CultureEntry {
                        date: NaiveDate::from_ymd_opt(2025, 3, 21).expect("valid"),
                        species: vec!["Staphylococcus aureus".into()],
                    },
                    CultureEntry { date: NaiveDate::from_ymd_opt(2025, 3, 25).expect("valid"), species: vec![] },
                ],
            },
            TaskId::Antibiotics => Answer::Antibiotics { antibiotics: vec!["CTRX".into(), "VCM".into()] },
            TaskId::CalculateCcr => Answer::Ccr { ccr: 21.5 },
            TaskId::CultureNegAbx => Answer::DaysSinceNegative { days_abx_since_first_neg_blood_culture: 7 },
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("no final response")]
    Missing,
    #[error("not a JSON document: {0}")]
    NotJson(String),
    #[error("expected a JSON object")]
    NotObject,
    #[error("expected exactly the key `{expected}`, found {found:?}")]
    Keys { expected: &'static str, found: Vec<String> },
    #[error("`{field}`: {problem}")]
    Field { field: String, problem: String },
}

/// Strict parse: the whole response (surrounding whitespace aside) must be
/// one JSON object with exactly the task's key.
pub fn parse_answer(task: TaskId, response: Option<&str>) -> Result<Answer, SchemaError> {
    let text = response.ok_or(SchemaError::Missing)?;
    let value: Value = serde_json::from_str(text.trim()).map_err(|e| SchemaError::NotJson(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(SchemaError::NotObject);
    };
    let key = match task {
        TaskId::BodyWeight => "weight",
        TaskId::LabData => "wbc",
        TaskId::CultureHistory => "results",
        TaskId::Antibiotics => "antibiotics",
        TaskId::CalculateCcr => "ccr",
        TaskId::CultureNegAbx => "days_abx_since_first_neg_blood_culture",
    };
    let field = single_key(&obj, key)?;
    Ok(match task {
        TaskId::BodyWeight => Answer::Weight { weight: number(key, field)? },
        TaskId::LabData => Answer::Wbc { wbc: integer(key, field)? },
        TaskId::CalculateCcr => Answer::Ccr { ccr: number(key, field)? },
        TaskId::CultureNegAbx => {
            Answer::DaysSinceNegative { days_abx_since_first_neg_blood_culture: integer(key, field)? }
        }
        TaskId::Antibiotics => Answer::Antibiotics { antibiotics: strings(key, field)? },
        TaskId::CultureHistory => {
            let Value::Array(items) = field else {
                return Err(problem(key, "expected an array"));
            };
            let mut results = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                let at = format!("results[{i}]");
                let Value::Object(entry) = item else {
                    return Err(problem(&at, "expected an object"));
                };
                let mut keys: Vec<&str> = entry.keys().map(String::as_str).collect();
                keys.sort_unstable();
                if keys != ["date", "species"] {
                    return Err(problem(&at, "expected exactly the keys `date` and `species`"));
                }
                let date = entry["date"]
                    .as_str()
                    .filter(|s| s.len() == 10)
                    .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok())
                    .ok_or_else(|| problem(&format!("{at}.date"), "expected YYYY-MM-DD"))?;
                let species = strings(&format!("{at}.species"), &entry["species"])?;
                results.push(CultureEntry { date, species });
            }
            Answer::CultureHistory { results }
        }
    })
}

fn single_key<'a>(obj: &'a Map<String, Value>, key: &'static str) -> Result<&'a Value, SchemaError> {
    match obj.get(key) {
        Some(v) if obj.len() == 1 => Ok(v),
        _ => Err(SchemaError::Keys { expected: key, found: obj.keys().cloned().collect() }),
    }
}

fn problem(field: &str, what: &str) -> SchemaError {
    SchemaError::Field { field: field.to_owned(), problem: what.to_owned() }
}

fn number(key: &str, v: &Value) -> Result<f64, SchemaError> {
    v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| problem(key, "expected a number"))
}

/// Integral numbers only; `2300.0` is accepted as 2300.
fn integer(key: &str, v: &Value) -> Result<i64, SchemaError> {
    if let Some(n) = v.as_i64() {
        return Ok(n);
    }
    match v.as_f64() {
        Some(x) if x.fract() == 0.0 && x.abs() < 9.0e15 => Ok(x as i64),
        _ => Err(problem(key, "expected an integer")),
    }
}

fn strings(key: &str, v: &Value) -> Result<Vec<String>, SchemaError> {
    let Value::Array(items) = v else {
        return Err(problem(key, "expected an array of strings"));
    };
    items
        .iter()
        .map(|s| s.as_str().map(str::to_owned).ok_or_else(|| problem(key, "expected an array of strings")))
        .collect()
}
