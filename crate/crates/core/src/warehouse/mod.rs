//! Clinical data model and the read-only, indexed record store.
//!
//! A [`Warehouse`] is an immutable snapshot. Every per-patient table is kept
//! sorted by local calendar date, then by instant, then by `record_id`, so a
//! calendar-date window is always a contiguous slice.

pub mod catalog;
mod generate;
mod io;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use chrono::{DateTime, FixedOffset, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{AntibioticCatalog, Locale};
pub use generate::{generate_cohort, generate_cohort_with, GenerateError, GeneratorOptions};
pub use io::{load_cohort, load_warehouse, write_cohort, write_warehouse, LoadError, TABLE_FILES};

pub type Timestamp = DateTime<FixedOffset>;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatientId(String);

impl PatientId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PatientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PatientId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    /// One-letter form used in prompts ("M"/"F").
    pub fn letter(self) -> &'static str {
        match self {
            Sex::Male => "M",
            Sex::Female => "F",
        }
    }

    pub fn label(self, locale: Locale) -> &'static str {
        match (self, locale) {
            (Sex::Male, Locale::Ja) => "男性",
            (Sex::Female, Locale::Ja) => "女性",
            (Sex::Male, Locale::En) => "male",
            (Sex::Female, Locale::En) => "female",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub patient_id: PatientId,
    pub sex: Sex,
    pub date_of_birth: NaiveDate,
    pub allergies: Vec<String>,
    pub on_dialysis: bool,
}

impl Patient {
    /// Completed years of age on `on`.
    pub fn age_on(&self, on: NaiveDate) -> u32 {
        on.years_since(self.date_of_birth).unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Somatometry {
    pub record_id: u64,
    pub patient_id: PatientId,
    pub measured_at: Timestamp,
    pub height: Option<f64>,
    pub weight: f64,
    pub bmi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabResult {
    pub record_id: u64,
    pub patient_id: PatientId,
    pub collected_at: Timestamp,
    /// Localized display name, e.g. `白血球数（WBC）`.
    pub analyte: String,
    pub value: f64,
    pub unit: String,
}

impl LabResult {
    /// `"<value> <unit>"`, or the bare value for unitless analytes.
    pub fn display_value(&self) -> String {
        if self.unit.is_empty() {
            format!("{}", self.value)
        } else {
            format!("{} {}", self.value, self.unit)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Specimen {
    Blood,
    Sputum,
    Urine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpretation {
    S,
    I,
    R,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Susceptibility {
    pub antimicrobial: String,
    pub result: Interpretation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrganismSusceptibility {
    pub organism: String,
    pub results: Vec<Susceptibility>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CultureResult {
    pub record_id: u64,
    pub patient_id: PatientId,
    pub specimen: Specimen,
    pub collected_at: Timestamp,
    /// Empty means no growth.
    pub organisms: Vec<String>,
    pub susceptibilities: Vec<OrganismSusceptibility>,
}

impl CultureResult {
    pub fn is_negative(&self) -> bool {
        self.organisms.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Oral,
    Iv,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntibioticAdministration {
    pub record_id: u64,
    pub patient_id: PatientId,
    pub date: NaiveDate,
    pub route: Route,
    pub short_name: String,
    pub dose_text: String,
}

/// ICT case anchor: the review date every task window is computed from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Case {
    pub patient_id: PatientId,
    pub intervention_date: NaiveDate,
}

/// Flat, unindexed form of all five tables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tables {
    pub patients: Vec<Patient>,
    pub somatometry: Vec<Somatometry>,
    pub labs: Vec<LabResult>,
    pub cultures: Vec<CultureResult>,
    pub antibiotics: Vec<AntibioticAdministration>,
}

/// Inclusive calendar-date window with `start <= end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DateRange {
    start: NaiveDate,
    end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, QueryError> {
        if start > end {
            return Err(QueryError::InvalidRange { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn day(date: NaiveDate) -> Self {
        Self { start: date, end: date }
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.end
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn covers(&self, other: &DateRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("unknown patient_id: {0}")]
    UnknownPatient(PatientId),
    #[error("start_date {start} is after end_date {end}")]
    InvalidRange { start: NaiveDate, end: NaiveDate },
    #[error("{matched} records matched (limit {limit})")]
    TooManyRecords { matched: usize, limit: usize },
}

/// A row that violates a warehouse invariant. `row` is the zero-based index
/// within the table as supplied.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("{table} row {row}: {reason}")]
pub struct InvalidRow {
    pub table: &'static str,
    pub row: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
struct Chart {
    patient: Patient,
    somatometry: Vec<Somatometry>,
    labs: Vec<LabResult>,
    cultures: Vec<CultureResult>,
    antibiotics: Vec<AntibioticAdministration>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Warehouse {
    charts: BTreeMap<PatientId, Chart>,
    antibiotic_catalog: AntibioticCatalog,
}

fn ts_key(ts: &Timestamp) -> (NaiveDate, Timestamp) {
    (ts.date_naive(), *ts)
}

impl Warehouse {
    pub fn empty() -> Self {
        Self { charts: BTreeMap::new(), antibiotic_catalog: AntibioticCatalog::default() }
    }

    pub fn from_tables(tables: Tables) -> Result<Self, InvalidRow> {
        Self::from_tables_with(tables, AntibioticCatalog::default())
    }

    /// Validates every invariant, then indexes by patient and date.
    pub fn from_tables_with(tables: Tables, catalog: AntibioticCatalog) -> Result<Self, InvalidRow> {
        let Tables { patients, somatometry, labs, cultures, antibiotics } = tables;
        let mut charts = BTreeMap::new();
        for (row, patient) in patients.into_iter().enumerate() {
            if charts.contains_key(&patient.patient_id) {
                return Err(InvalidRow {
                    table: "patients",
                    row,
                    reason: format!("duplicate patient_id {}", patient.patient_id),
                });
            }
            charts.insert(
                patient.patient_id.clone(),
                Chart {
                    patient,
                    somatometry: Vec::new(),
                    labs: Vec::new(),
                    cultures: Vec::new(),
                    antibiotics: Vec::new(),
                },
            );
        }

        fn chart_for<'a>(
            charts: &'a mut BTreeMap<PatientId, Chart>,
            table: &'static str,
            row: usize,
            id: &PatientId,
            date: NaiveDate,
        ) -> Result<&'a mut Chart, InvalidRow> {
            let chart = charts.get_mut(id).ok_or_else(|| InvalidRow {
                table,
                row,
                reason: format!("patient_id {id} does not resolve"),
            })?;
            if date <= chart.patient.date_of_birth {
                return Err(InvalidRow {
                    table,
                    row,
                    reason: format!("record date {date} is not after date_of_birth"),
                });
            }
            Ok(chart)
        }

        let mut ids = HashSet::new();
        for (row, s) in somatometry.into_iter().enumerate() {
            let bad = |reason: String| InvalidRow { table: "somatometry", row, reason };
            if !ids.insert(s.record_id) {
                return Err(bad(format!("duplicate record_id {}", s.record_id)));
            }
            if !(s.weight.is_finite() && s.weight > 0.0) {
                return Err(bad(format!("weight must be > 0, got {}", s.weight)));
            }
            if let (Some(h), Some(bmi)) = (s.height, s.bmi) {
                let expected = s.weight / (h / 100.0).powi(2);
                if h.is_nan() || h <= 0.0 || (expected - bmi).abs() > 0.1 + 1e-9 {
                    return Err(bad(format!("bmi {bmi} inconsistent with height {h} / weight {}", s.weight)));
                }
            }
            let chart = chart_for(&mut charts, "somatometry", row, &s.patient_id, s.measured_at.date_naive())?;
            chart.somatometry.push(s);
        }

        ids.clear();
        for (row, l) in labs.into_iter().enumerate() {
            let bad = |reason: String| InvalidRow { table: "labs", row, reason };
            if !ids.insert(l.record_id) {
                return Err(bad(format!("duplicate record_id {}", l.record_id)));
            }
            if !(l.value.is_finite() && l.value >= 0.0) {
                return Err(bad(format!("value must be finite and >= 0, got {}", l.value)));
            }
            if !catalog::is_known_lab(&l.analyte, &l.unit) {
                return Err(bad(format!("({}, {}) is not a catalog analyte", l.analyte, l.unit)));
            }
            let chart = chart_for(&mut charts, "labs", row, &l.patient_id, l.collected_at.date_naive())?;
            chart.labs.push(l);
        }

        ids.clear();
        for (row, c) in cultures.into_iter().enumerate() {
            let bad = |reason: String| InvalidRow { table: "cultures", row, reason };
            if !ids.insert(c.record_id) {
                return Err(bad(format!("duplicate record_id {}", c.record_id)));
            }
            if let Some(s) = c.susceptibilities.iter().find(|s| !c.organisms.contains(&s.organism)) {
                return Err(bad(format!("susceptibility for unlisted organism {}", s.organism)));
            }
            let chart = chart_for(&mut charts, "cultures", row, &c.patient_id, c.collected_at.date_naive())?;
            chart.cultures.push(c);
        }

        ids.clear();
        for (row, a) in antibiotics.into_iter().enumerate() {
            let bad = |reason: String| InvalidRow { table: "antibiotics", row, reason };
            if !ids.insert(a.record_id) {
                return Err(bad(format!("duplicate record_id {}", a.record_id)));
            }
            if !catalog.contains(&a.short_name) {
                return Err(bad(format!("{} is not in the antibiotic catalog", a.short_name)));
            }
            let chart = chart_for(&mut charts, "antibiotics", row, &a.patient_id, a.date)?;
            chart.antibiotics.push(a);
        }

        for chart in charts.values_mut() {
            chart.somatometry.sort_by_key(|s| (ts_key(&s.measured_at), s.record_id));
            chart.labs.sort_by_key(|l| (ts_key(&l.collected_at), l.record_id));
            chart.cultures.sort_by_key(|c| (ts_key(&c.collected_at), c.record_id));
            chart.antibiotics.sort_by_key(|a| (a.date, a.record_id));
        }

        Ok(Self { charts, antibiotic_catalog: catalog })
    }

    /// Flat tables in canonical (patient, date, record id) order.
    pub fn tables(&self) -> Tables {
        let mut t = Tables::default();
        for chart in self.charts.values() {
            t.patients.push(chart.patient.clone());
            t.somatometry.extend(chart.somatometry.iter().cloned());
            t.labs.extend(chart.labs.iter().cloned());
            t.cultures.extend(chart.cultures.iter().cloned());
            t.antibiotics.extend(chart.antibiotics.iter().cloned());
        }
        t
    }

    pub fn antibiotic_catalog(&self) -> &AntibioticCatalog {
        &self.antibiotic_catalog
    }

    pub fn len(&self) -> usize {
        self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    pub fn patients(&self) -> impl Iterator<Item = &Patient> {
        self.charts.values().map(|c| &c.patient)
    }

    fn chart(&self, id: &PatientId) -> Result<&Chart, QueryError> {
        self.charts.get(id).ok_or_else(|| QueryError::UnknownPatient(id.clone()))
    }

    pub fn patient(&self, id: &PatientId) -> Result<&Patient, QueryError> {
        self.chart(id).map(|c| &c.patient)
    }

    /// The patient plus the somatometry record with the greatest `measured_at`.
    pub fn get_patient(&self, id: &PatientId) -> Result<(&Patient, Option<&Somatometry>), QueryError> {
        let chart = self.chart(id)?;
        let latest = chart.somatometry.iter().max_by_key(|s| (s.measured_at, s.record_id));
        Ok((&chart.patient, latest))
    }

    /// All lab rows collected within `range`. Fails without partial data when
    /// more than `limit` rows match.
    pub fn query_labs(&self, id: &PatientId, range: DateRange, limit: usize) -> Result<&[LabResult], QueryError> {
        let chart = self.chart(id)?;
        let rows = date_slice(&chart.labs, range, |l| l.collected_at.date_naive());
        if rows.len() > limit {
            return Err(QueryError::TooManyRecords { matched: rows.len(), limit });
        }
        Ok(rows)
    }

    pub fn query_cultures(&self, id: &PatientId, range: DateRange) -> Result<&[CultureResult], QueryError> {
        let chart = self.chart(id)?;
        Ok(date_slice(&chart.cultures, range, |c| c.collected_at.date_naive()))
    }

    pub fn query_antibiotics(
        &self,
        id: &PatientId,
        range: DateRange,
    ) -> Result<&[AntibioticAdministration], QueryError> {
        let chart = self.chart(id)?;
        Ok(date_slice(&chart.antibiotics, range, |a| a.date))
    }
}

fn date_slice<T>(rows: &[T], range: DateRange, date: impl Fn(&T) -> NaiveDate) -> &[T] {
    let lo = rows.partition_point(|r| date(r) < range.start);
    let hi = rows.partition_point(|r| date(r) <= range.end);
    &rows[lo..hi.max(lo)]
}

/// A generated warehouse plus its case list.
#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub warehouse: Warehouse,
    pub cases: Vec<Case>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn ts(s: &str) -> Timestamp {
        DateTime::parse_from_rfc3339(s).unwrap()
    }

    fn patient(id: &str) -> Patient {
        Patient {
            patient_id: id.into(),
            sex: Sex::Male,
            date_of_birth: d("1970-01-01"),
            allergies: vec![],
            on_dialysis: false,
        }
    }

    fn lab(id: u64, at: &str, name: &str, value: f64, unit: &str) -> LabResult {
        LabResult {
            record_id: id,
            patient_id: "P001".into(),
            collected_at: ts(at),
            analyte: name.into(),
            value,
            unit: unit.into(),
        }
    }

    fn abx(id: u64, date: &str, name: &str) -> AntibioticAdministration {
        AntibioticAdministration {
            record_id: id,
            patient_id: "P001".into(),
            date: d(date),
            route: Route::Iv,
            short_name: name.into(),
            dose_text: "1.5g/V 2.0V".into(),
        }
    }

    fn small() -> Warehouse {
        Warehouse::from_tables(Tables {
            patients: vec![patient("P001")],
            somatometry: vec![
                Somatometry {
                    record_id: 2,
                    patient_id: "P001".into(),
                    measured_at: ts("2024-07-14T09:00:00+09:00"),
                    height: Some(170.0),
                    weight: 55.4,
                    bmi: Some(19.2),
                },
                Somatometry {
                    record_id: 1,
                    patient_id: "P001".into(),
                    measured_at: ts("2024-06-01T09:00:00+09:00"),
                    height: None,
                    weight: 57.0,
                    bmi: None,
                },
            ],
            labs: vec![
                lab(3, "2024-04-22T08:00:00+09:00", "クレアチニン", 0.86, "mg/dL"),
                lab(1, "2024-04-21T08:00:00+09:00", "白血球数（WBC）", 3.1, "10^3/µL"),
                lab(2, "2024-04-22T08:00:00+09:00", "白血球数（WBC）", 2.3, "10^3/µL"),
            ],
            cultures: vec![],
            antibiotics: vec![
                abx(5, "2024-11-09", "VCM"),
                abx(4, "2024-11-09", "SBT/ABPC"),
                abx(6, "2024-11-09", "SBT/ABPC"),
                abx(7, "2024-11-10", "VCM"),
            ],
        })
        .unwrap()
    }

    #[test]
    fn latest_somatometry_is_max_timestamp() {
        let w = small();
        let (_, s) = w.get_patient(&"P001".into()).unwrap();
        assert_eq!(s.unwrap().weight, 55.4);
    }

    #[test]
    fn lab_window_is_inclusive_and_sorted() {
        let w = small();
        let rows = w.query_labs(&"P001".into(), DateRange::day(d("2024-04-22")), 1000).unwrap();
        assert_eq!(rows.iter().map(|r| r.record_id).collect::<Vec<_>>(), vec![2, 3]);
        let empty = w.query_labs(&"P001".into(), DateRange::day(d("2024-04-23")), 1000).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn lab_limit_fails_without_partial_data() {
        let w = small();
        let range = DateRange::new(d("2024-04-01"), d("2024-04-30")).unwrap();
        assert_eq!(w.query_labs(&"P001".into(), range, 2), Err(QueryError::TooManyRecords { matched: 3, limit: 2 }));
        assert_eq!(w.query_labs(&"P001".into(), range, 3).unwrap().len(), 3);
    }

    #[test]
    fn same_day_antibiotics_keep_duplicates() {
        let w = small();
        let rows = w.query_antibiotics(&"P001".into(), DateRange::day(d("2024-11-09"))).unwrap();
        let names: Vec<_> = rows.iter().map(|r| r.short_name.as_str()).collect();
        assert_eq!(names, ["SBT/ABPC", "VCM", "SBT/ABPC"]);
    }

    #[test]
    fn unknown_patient_and_bad_range() {
        let w = small();
        assert_eq!(w.get_patient(&"P999".into()).unwrap_err(), QueryError::UnknownPatient("P999".into()));
        assert!(DateRange::new(d("2024-02-02"), d("2024-02-01")).is_err());
    }

    #[test]
    fn dangling_reference_is_rejected() {
        let mut t = small().tables();
        t.labs[1].patient_id = "P404".into();
        let err = Warehouse::from_tables(t).unwrap_err();
        assert_eq!(err.table, "labs");
        assert_eq!(err.row, 1);
        assert!(err.reason.contains("P404"));
    }

    #[test]
    fn rejects_invariant_violations() {
        let mut t = small().tables();
        t.somatometry[0].weight = 0.0;
        assert!(Warehouse::from_tables(t).is_err());

        let mut t = small().tables();
        t.antibiotics[0].short_name = "XYZ".into();
        assert!(Warehouse::from_tables(t).is_err());

        let mut t = small().tables();
        t.labs[0].collected_at =
            FixedOffset::east_opt(9 * 3600).unwrap().with_ymd_and_hms(1969, 1, 1, 0, 0, 0).unwrap();
        assert!(Warehouse::from_tables(t).is_err());
    }

    #[test]
    fn empty_tables_are_valid() {
        let w = Warehouse::from_tables(Tables::default()).unwrap();
        assert!(w.is_empty());
    }

    #[test]
    fn display_value_matches_log_rendering() {
        assert_eq!(
            lab(1, "2024-04-22T08:00:00+09:00", "白血球数（WBC）", 2.3, "10^3/µL").display_value(),
            "2.3 10^3/µL"
        );
        assert_eq!(lab(1, "2024-04-22T08:00:00+09:00", "尿比重", 1.015, "").display_value(), "1.015");
    }
}
