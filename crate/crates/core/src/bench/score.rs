use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::Hash;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::answer::{parse_answer, Answer, CultureEntry, SchemaError};
use super::classify::ErrorCategory;
use super::gold::GoldAnswer;
use super::TaskId;
use crate::clinical_tools::round1;

/// Multiset Dice coefficient, 1 when both are empty.
pub fn dice<T: Eq + Hash>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for x in a {
        *counts.entry(x).or_default() += 1;
    }
    let mut common = 0usize;
    for y in b {
        if let Some(c) = counts.get_mut(y) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    2.0 * common as f64 / (a.len() + b.len()) as f64
}

fn set_dice<T: Eq + Hash + Clone>(a: &[T], b: &[T]) -> f64 {
    let dedup = |xs: &[T]| -> Vec<T> {
        let mut seen = HashSet::new();
        xs.iter().filter(|x| seen.insert((*x).clone())).cloned().collect()
    };
    dice(&dedup(a), &dedup(b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ExactAccuracy,
    /// Set Dice over antibiotic short names.
    Dice,
    DiceDetection,
    DiceSpeciesMean,
}

impl Metric {
    pub fn for_task(task: TaskId) -> &'static [Metric] {
        match task {
            TaskId::Antibiotics => &[Metric::Dice],
            TaskId::CultureHistory => &[Metric::DiceDetection, Metric::DiceSpeciesMean],
            _ => &[Metric::ExactAccuracy],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::ExactAccuracy => "exact_accuracy",
            Metric::Dice => "dice",
            Metric::DiceDetection => "dice_detection",
            Metric::DiceSpeciesMean => "dice_species_mean",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: Metric,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub metrics: Vec<MetricValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_category: Option<ErrorCategory>,
}

impl RunScore {
    pub fn is_perfect(&self) -> bool {
        self.schema_error.is_none() && self.metrics.iter().all(|m| m.value == 1.0)
    }

    pub fn value(&self, metric: Metric) -> Option<f64> {
        self.metrics.iter().find(|m| m.metric == metric).map(|m| m.value)
    }
}

/// Scores a final response against a non-excluded gold answer.
pub fn score_run(task: TaskId, final_response: Option<&str>, gold: &GoldAnswer) -> RunScore {
    let zero = |e: SchemaError| RunScore {
        metrics: Metric::for_task(task).iter().map(|&metric| MetricValue { metric, value: 0.0 }).collect(),
        schema_error: Some(e.to_string()),
        error_category: Some(ErrorCategory::OutputFormat),
    };
    let response = match parse_answer(task, final_response) {
        Ok(a) => a,
        Err(e) => return zero(e),
    };
    let gold = gold.answer.as_ref().expect("scored gold answers are not excluded");
    let exact = |ok: bool| vec![MetricValue { metric: Metric::ExactAccuracy, value: if ok { 1.0 } else { 0.0 } }];
    let metrics = match (gold, &response) {
        (Answer::Weight { weight: g }, Answer::Weight { weight: r }) => exact(g == r),
        (Answer::Wbc { wbc: g }, Answer::Wbc { wbc: r }) => exact(g == r),
        (Answer::Ccr { ccr: g }, Answer::Ccr { ccr: r }) => exact(round1(*g) == round1(*r)),
        (
            Answer::DaysSinceNegative { days_abx_since_first_neg_blood_culture: g },
            Answer::DaysSinceNegative { days_abx_since_first_neg_blood_culture: r },
        ) => exact(g == r),
        (Answer::Antibiotics { antibiotics: g }, Answer::Antibiotics { antibiotics: r }) => {
            vec![MetricValue { metric: Metric::Dice, value: set_dice(g, r) }]
        }
        (Answer::CultureHistory { results: g }, Answer::CultureHistory { results: r }) => {
            let gd: Vec<NaiveDate> = g.iter().map(|e| e.date).collect();
            let rd: Vec<NaiveDate> = r.iter().map(|e| e.date).collect();
            vec![
                MetricValue { metric: Metric::DiceDetection, value: dice(&gd, &rd) },
                MetricValue { metric: Metric::DiceSpeciesMean, value: species_mean(g, r) },
            ]
        }
        _ => unreachable!("parse_answer yields the task's own variant"),
    };
    RunScore { metrics, schema_error: None, error_category: None }
}

/// Mean over gold entries of species-set Dice against the paired response
/// entry of the same date. Same-day entries are paired greedily by highest
/// Dice; unpaired gold entries score 0.
fn species_mean(gold: &[CultureEntry], response: &[CultureEntry]) -> f64 {
    if gold.is_empty() {
        return if response.is_empty() { 1.0 } else { 0.0 };
    }
    let mut by_date: BTreeMap<NaiveDate, (Vec<&CultureEntry>, Vec<&CultureEntry>)> = BTreeMap::new();
    for g in gold {
        by_date.entry(g.date).or_default().0.push(g);
    }
    for r in response {
        if let Some(slot) = by_date.get_mut(&r.date) {
            slot.1.push(r);
        }
    }
    let mut total = 0.0;
    for (gs, rs) in by_date.values() {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, g) in gs.iter().enumerate() {
            for (j, r) in rs.iter().enumerate() {
                pairs.push((set_dice(&g.species, &r.species), i, j));
            }
        }
        // Highest first; ties keep input order.
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used_g = vec![false; gs.len()];
        let mut used_r = vec![false; rs.len()];
        for (value, i, j) in pairs {
            if !used_g[i] && !used_r[j] {
                used_g[i] = true;
                used_r[j] = true;
                total += value;
            }
        }
    }
    total / gold.len() as f64
}
