//! Readers for tool observations, shared by the scripted policies.

use chrono::NaiveDate;
use serde_json::{Map, Value};

use super::Step;
use crate::warehouse::catalog;

pub(crate) fn payload(step: &Step) -> Option<Value> {
    if step.is_error {
        return None;
    }
    serde_json::from_str(&step.result_text).ok()
}

/// Splits `"2.3 10^3/µL"` into value and unit; a bare number has no unit.
pub(crate) fn split_display(s: &str) -> Option<(f64, &str)> {
    let (value, unit) = s.split_once(' ').unwrap_or((s, ""));
    Some((value.parse().ok()?, unit))
}

fn lab_entry<'a>(panel: &'a Map<String, Value>, key: &str) -> Option<(f64, &'a str)> {
    panel
        .iter()
        .find(|(name, _)| catalog::analyte_by_display(name).is_some_and(|a| a.key == key))
        .and_then(|(_, v)| split_display(v.as_str()?))
}

/// The latest panel (by timestamp key) in a `lab_results` payload that
/// carries analyte `key`.
pub(crate) fn latest_panel_with<'a>(payload: &'a Value, key: &str) -> Option<&'a Map<String, Value>> {
    payload
        .as_object()?
        .iter()
        .filter_map(|(ts, panel)| Some((ts, panel.as_object()?)))
        .filter(|(_, panel)| lab_entry(panel, key).is_some())
        .max_by(|a, b| a.0.cmp(b.0))
        .map(|(_, panel)| panel)
}

pub(crate) fn panel_value<'a>(panel: &'a Map<String, Value>, key: &str) -> Option<(f64, &'a str)> {
    lab_entry(panel, key)
}

pub(crate) struct CultureObs {
    pub specimen: String,
    pub date: NaiveDate,
    pub organisms: Vec<String>,
}

pub(crate) fn cultures(payload: &Value) -> Vec<CultureObs> {
    payload["cultures"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|c| {
            let date = NaiveDate::parse_from_str(c["collected_at"].as_str()?.get(..10)?, "%Y-%m-%d").ok()?;
            Some(CultureObs {
                specimen: c["specimen"].as_str()?.to_owned(),
                date,
                organisms: c["organisms"].as_array()?.iter().filter_map(|o| o.as_str().map(str::to_owned)).collect(),
            })
        })
        .collect()
}

pub(crate) struct AbxLine {
    pub date: NaiveDate,
    pub short_name: String,
}

/// Parses `"<date> - <SHORT> <dose>"` lines from both route lists, IV first.
pub(crate) fn antibiotic_lines(payload: &Value) -> Vec<AbxLine> {
    ["iv_antibiotics", "oral_antibiotics"]
        .iter()
        .flat_map(|k| payload[*k].as_array().into_iter().flatten())
        .filter_map(|line| {
            let (date, rest) = line.as_str()?.split_once(" - ")?;
            Some(AbxLine { date: date.parse().ok()?, short_name: rest.split_whitespace().next()?.to_owned() })
        })
        .collect()
}

/// Distinct short names in first-seen order.
pub(crate) fn distinct_names(lines: &[AbxLine]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for l in lines {
        if !names.contains(&l.short_name) {
            names.push(l.short_name.clone());
        }
    }
    names
}
