use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::answer::{Answer, CultureEntry};
use super::{month_window, Bindings, TaskId};
use crate::clinical_tools::{CockcroftGaultInput, ANTIBIOTICS_TREATMENT, BACTERIA_RESULTS, LAB_RESULTS};
use crate::warehouse::catalog::{self, CREATININE, VANCOMYCIN, WBC};
use crate::warehouse::{Case, DateRange, LabResult, PatientId, Specimen, Warehouse};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    /// Dosing for dialysis patients does not follow creatinine clearance.
    Dialysis,
    NoVancomycinInWindow,
}

/// Dates that at least one successful call of `tool` must have covered for
/// the run to have seen the gold-determining records.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub tool: String,
    pub dates: Vec<NaiveDate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub task: TaskId,
    pub patient_id: PatientId,
    pub bindings: Bindings,
    /// `None` iff excluded.
    pub answer: Option<Answer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded: Option<Exclusion>,
    pub coverage: Vec<Coverage>,
}

impl GoldAnswer {
    pub fn is_excluded(&self) -> bool {
        self.excluded.is_some()
    }
}

/// The warehouse lacks data the vignette contract promises.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum GoldError {
    #[error("{task} for {patient}: {what}")]
    MissingData { task: TaskId, patient: PatientId, what: String },
    #[error("{0}")]
    Query(String),
}

fn latest_lab<'a>(labs: &'a [LabResult], key: &str) -> Option<&'a LabResult> {
    labs.iter()
        .filter(|l| catalog::analyte_by_display(&l.analyte).is_some_and(|a| a.key == key))
        .max_by_key(|l| (l.collected_at, l.record_id))
}

/// WBC in cells/µL from a stored row.
pub(crate) fn wbc_per_microlitre(value: f64, unit: &str) -> i64 {
    let scale = if unit == "10^3/µL" { 1000.0 } else { 1.0 };
    (value * scale).round() as i64
}

pub fn gold_answer(task: TaskId, case: &Case, warehouse: &Warehouse) -> Result<GoldAnswer, GoldError> {
    let id = &case.patient_id;
    let iv = case.intervention_date;
    let query = |e: crate::warehouse::QueryError| GoldError::Query(e.to_string());
    let missing = |what: &str| GoldError::MissingData { task, patient: id.clone(), what: what.to_owned() };
    let (patient, latest) = warehouse.get_patient(id).map_err(query)?;
    let bindings = Bindings::for_case(task, case, warehouse)?;
    let mut gold = GoldAnswer {
        task,
        patient_id: id.clone(),
        bindings: bindings.clone(),
        answer: None,
        excluded: None,
        coverage: Vec::new(),
    };
    let history = DateRange::new(patient.date_of_birth, iv).map_err(query)?;

    match task {
        TaskId::BodyWeight => {
            let s = latest.ok_or_else(|| missing("no somatometry record"))?;
            gold.answer = Some(Answer::Weight { weight: s.weight });
        }
        TaskId::LabData => {
            let labs = warehouse.query_labs(id, history, usize::MAX).map_err(query)?;
            let wbc = latest_lab(labs, WBC).ok_or_else(|| missing("no WBC on or before the intervention day"))?;
            gold.answer = Some(Answer::Wbc { wbc: wbc_per_microlitre(wbc.value, &wbc.unit) });
            gold.coverage.push(Coverage { tool: LAB_RESULTS.into(), dates: vec![wbc.collected_at.date_naive()] });
        }
        TaskId::CultureHistory => {
            let window = bindings.window().expect("culture tasks bind a window");
            let results: Vec<CultureEntry> = warehouse
                .query_cultures(id, window)
                .map_err(query)?
                .iter()
                .filter(|c| c.specimen == Specimen::Blood)
                .map(|c| CultureEntry { date: c.collected_at.date_naive(), species: c.organisms.clone() })
                .collect();
            let mut dates: Vec<NaiveDate> = results.iter().map(|e| e.date).collect();
            dates.dedup();
            gold.coverage.push(Coverage { tool: BACTERIA_RESULTS.into(), dates });
            gold.answer = Some(Answer::CultureHistory { results });
        }
        TaskId::Antibiotics => {
            let mut names: Vec<String> = Vec::new();
            for a in warehouse.query_antibiotics(id, DateRange::day(iv)).map_err(query)? {
                if !names.contains(&a.short_name) {
                    names.push(a.short_name.clone());
                }
            }
            gold.coverage.push(Coverage { tool: ANTIBIOTICS_TREATMENT.into(), dates: vec![iv] });
            gold.answer = Some(Answer::Antibiotics { antibiotics: names });
        }
        TaskId::CalculateCcr => {
            if patient.on_dialysis {
                gold.excluded = Some(Exclusion::Dialysis);
                return Ok(gold);
            }
            let weight = latest.ok_or_else(|| missing("no somatometry record"))?.weight;
            let labs = warehouse.query_labs(id, history, usize::MAX).map_err(query)?;
            let scr = latest_lab(labs, CREATININE)
                .ok_or_else(|| missing("no creatinine on or before the intervention day"))?;
            let input = CockcroftGaultInput {
                age: bindings.age.expect("bound for this task"),
                sex: bindings.sex.expect("bound for this task"),
                weight,
                serum_creatinine: scr.value,
            };
            input.validate().map_err(|e| missing(&e))?;
            gold.coverage.push(Coverage { tool: LAB_RESULTS.into(), dates: vec![scr.collected_at.date_naive()] });
            gold.answer = Some(Answer::Ccr { ccr: input.clearance() });
        }
        TaskId::CultureNegAbx => {
            let window = month_window(iv);
            let vcm_dates: Vec<NaiveDate> = {
                let mut v: Vec<NaiveDate> = warehouse
                    .query_antibiotics(id, window)
                    .map_err(query)?
                    .iter()
                    .filter(|a| a.short_name == VANCOMYCIN)
                    .map(|a| a.date)
                    .collect();
                v.dedup();
                v
            };
            let Some(&first_vcm) = vcm_dates.first() else {
                gold.excluded = Some(Exclusion::NoVancomycinInWindow);
                return Ok(gold);
            };
            // day -> all samples negative
            let mut blood_days: BTreeMap<NaiveDate, bool> = BTreeMap::new();
            for c in warehouse.query_cultures(id, window).map_err(query)? {
                if c.specimen == Specimen::Blood {
                    *blood_days.entry(c.collected_at.date_naive()).or_insert(true) &= c.is_negative();
                }
            }
            let first_negative = blood_days
                .range(first_vcm..)
                .find(|(_, negative)| **negative)
                .map(|(d, _)| *d)
                .ok_or_else(|| missing("no all-negative blood culture day after vancomycin start"))?;
            let days = vcm_dates.iter().filter(|d| **d >= first_negative).count() as i64;
            gold.coverage.push(Coverage {
                tool: BACTERIA_RESULTS.into(),
                dates: blood_days.range(first_vcm..=first_negative).map(|(d, _)| *d).collect(),
            });
            gold.coverage.push(Coverage { tool: ANTIBIOTICS_TREATMENT.into(), dates: vcm_dates });
            gold.answer = Some(Answer::DaysSinceNegative { days_abx_since_first_neg_blood_culture: days });
        }
    }
    Ok(gold)
}
