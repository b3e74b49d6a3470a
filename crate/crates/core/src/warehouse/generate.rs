//! Seeded synthetic cohorts of MRSA-bacteremia patients on vancomycin.
//!
//! Each patient gets one clinical vignette anchored on an ICT intervention
//! date:
//!
//! - an index MRSA-positive blood culture 2-6 days before the intervention,
//!   follow-up blood cultures every 2-3 days until the first all-negative day
//!   (mixed positive/negative days may occur before it), plus sputum/urine
//!   cultures and occasionally an out-of-window blood culture;
//! - a contiguous daily vancomycin course starting on or the day after the
//!   index culture and running 14-18 days past the first negative day;
//! - 0-3 other antibiotics, some given several times a day;
//! - blood panels every 1-3 days reaching back far enough that the year
//!   before the intervention holds more than 1000 lab rows, with no blood
//!   panel on the intervention day itself (only a urinalysis);
//! - 1-3 somatometry records in the two months before the intervention.
//!
//! Exactly one patient is on dialysis and exactly one patient received no
//! vancomycin within a month of the intervention (daptomycin instead, after
//! an earlier vancomycin course). Gold answers never coincide with the
//! format examples embedded in the task prompts, so an agent that copies an
//! example is always scored wrong.

use chrono::{Days, FixedOffset, NaiveDate, TimeZone};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::catalog::{self, Analyte, Locale, Panel, CREATININE, VANCOMYCIN, WBC};
use super::{
    AntibioticAdministration, Case, Cohort, CultureResult, Interpretation, LabResult, OrganismSusceptibility, Patient,
    PatientId, Route, Sex, Somatometry, Specimen, Susceptibility, Tables, Timestamp, Warehouse,
};
use crate::clinical_tools::{creatinine_clearance, round1};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerateError {
    #[error("a cohort needs at least one patient")]
    EmptyCohort,
}

#[derive(Clone, Debug, Default)]
pub struct GeneratorOptions {
    pub locale: Locale,
}

pub fn generate_cohort(seed: u64, n_patients: usize) -> Result<Cohort, GenerateError> {
    generate_cohort_with(seed, n_patients, &GeneratorOptions::default())
}

pub fn generate_cohort_with(seed: u64, n_patients: usize, opts: &GeneratorOptions) -> Result<Cohort, GenerateError> {
    if n_patients == 0 {
        return Err(GenerateError::EmptyCohort);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dialysis = rng.random_range(0..n_patients);
    let no_vancomycin = if n_patients == 1 {
        0
    } else {
        loop {
            let i = rng.random_range(0..n_patients);
            if i != dialysis {
                break i;
            }
        }
    };

    let mut b = Builder { rng, locale: opts.locale, tables: Tables::default(), ids: [1; 4] };
    let cases = (0..n_patients)
        .map(|i| b.vignette(PatientId::new(format!("P{:03}", i + 1)), i == dialysis, i == no_vancomycin))
        .collect();
    let warehouse = Warehouse::from_tables(b.tables).expect("generated tables satisfy warehouse invariants");
    Ok(Cohort { warehouse, cases })
}

const MRSA: &str = "Staphylococcus aureus";
const CNS: &str = "Staphylococcus epidermidis";

struct Drug {
    short_name: &'static str,
    route: Route,
    ja: &'static str,
    en: &'static str,
    max_per_day: u32,
}

const DRUGS: &[Drug] = &[
    Drug {
        short_name: "VCM",
        route: Route::Iv,
        ja: "0.5g/V 3.0V １日１回（ベース）",
        en: "0.5g/vial x3.0 once daily (base)",
        max_per_day: 1,
    },
    Drug {
        short_name: "CTRX",
        route: Route::Iv,
        ja: "1g/V 2.0V １日１回",
        en: "1g/vial x2.0 once daily",
        max_per_day: 1,
    },
    Drug {
        short_name: "SBT/ABPC",
        route: Route::Iv,
        ja: "1.5g/V 2.0V １日４回 ６時間毎",
        en: "1.5g/vial x2.0 4 times daily every 6h",
        max_per_day: 4,
    },
    Drug {
        short_name: "MEPM",
        route: Route::Iv,
        ja: "0.5g/V 2.0V １日３回 ８時間毎",
        en: "0.5g/vial x2.0 3 times daily every 8h",
        max_per_day: 3,
    },
    Drug {
        short_name: "TAZ/PIPC",
        route: Route::Iv,
        ja: "4.5g/V 1.0V １日３回 ８時間毎",
        en: "4.5g/vial x1.0 3 times daily every 8h",
        max_per_day: 3,
    },
    Drug {
        short_name: "CFPM",
        route: Route::Iv,
        ja: "1g/V 1.0V １日２回 １２時間毎",
        en: "1g/vial x1.0 twice daily every 12h",
        max_per_day: 2,
    },
    Drug {
        short_name: "CEZ",
        route: Route::Iv,
        ja: "1g/V 2.0V １日３回 ８時間毎",
        en: "1g/vial x2.0 3 times daily every 8h",
        max_per_day: 3,
    },
    Drug {
        short_name: "ABPC",
        route: Route::Iv,
        ja: "1g/V 2.0V １日４回 ６時間毎",
        en: "1g/vial x2.0 4 times daily every 6h",
        max_per_day: 4,
    },
    Drug {
        short_name: "LVFX",
        route: Route::Oral,
        ja: "500mg 1錠 １日１回 朝食後",
        en: "500mg 1 tablet once daily after breakfast",
        max_per_day: 1,
    },
    Drug {
        short_name: "DAP",
        route: Route::Iv,
        ja: "350mg/V 1.0V １日１回",
        en: "350mg/vial x1.0 once daily",
        max_per_day: 1,
    },
    Drug {
        short_name: "LZD",
        route: Route::Oral,
        ja: "600mg 1錠 １日２回 朝夕食後",
        en: "600mg 1 tablet twice daily after meals",
        max_per_day: 1,
    },
];

fn drug(short_name: &str) -> &'static Drug {
    DRUGS.iter().find(|d| d.short_name == short_name).expect("drug in table")
}

const EMPIRIC: &[&str] = &["CEZ", "SBT/ABPC", "TAZ/PIPC", "MEPM", "CFPM"];
const CONCURRENT: &[&str] = &["LVFX", "CTRX", "ABPC", "MEPM", "CFPM"];

const ALLERGIES: &[(&str, &str)] = &[
    ("ペニシリン系", "Penicillins"),
    ("造影剤", "Contrast media"),
    ("セフェム系", "Cephalosporins"),
    ("ロキソプロフェン", "Loxoprofen"),
];
const VANCOMYCIN_ALLERGY: (&str, &str) = ("バンコマイシン", "Vancomycin");

const SPUTUM_FLORA: &[&[&str]] = &[&["Klebsiella pneumoniae"], &["Pseudomonas aeruginosa"], &["Candida albicans"], &[]];
const URINE_FLORA: &[&[&str]] = &[&["Escherichia coli"], &["Enterococcus faecalis"], &[]];

fn susceptibility_profile(organism: &str, rng: &mut ChaCha8Rng) -> Vec<Susceptibility> {
    use Interpretation::*;
    let mut flip = |p: f64| if rng.random_bool(p) { R } else { S };
    let rows: Vec<(&str, Interpretation)> = match organism {
        MRSA => vec![
            ("MPIPC", R),
            ("CEZ", R),
            ("VCM", S),
            ("TEIC", S),
            ("LZD", S),
            ("DAP", S),
            ("LVFX", flip(0.7)),
            ("CLDM", flip(0.4)),
            ("MINO", S),
            ("ST", S),
        ],
        CNS => vec![("MPIPC", R), ("VCM", S), ("LZD", S)],
        "Klebsiella pneumoniae" => vec![("ABPC", R), ("CEZ", S), ("CTRX", S), ("MEPM", S), ("LVFX", S)],
        "Pseudomonas aeruginosa" => vec![("TAZ/PIPC", S), ("CFPM", S), ("MEPM", S), ("LVFX", flip(0.3))],
        "Escherichia coli" => vec![("ABPC", R), ("CEZ", S), ("CTRX", S), ("LVFX", flip(0.5)), ("MEPM", S)],
        "Enterococcus faecalis" => vec![("ABPC", S), ("VCM", S)],
        _ => vec![],
    };
    rows.into_iter().map(|(a, r)| Susceptibility { antimicrobial: a.to_owned(), result: r }).collect()
}

fn jst() -> FixedOffset {
    FixedOffset::east_opt(9 * 3600).expect("valid offset")
}

fn at(date: NaiveDate, minutes: u32) -> Timestamp {
    let naive = date.and_hms_opt(minutes / 60, minutes % 60, 0).expect("valid time");
    jst().from_local_datetime(&naive).single().expect("fixed offset is unambiguous")
}

fn plus(date: NaiveDate, days: u64) -> NaiveDate {
    date + Days::new(days)
}

fn minus(date: NaiveDate, days: u64) -> NaiveDate {
    date - Days::new(days)
}

fn round_to(value: f64, decimals: u32) -> f64 {
    let p = 10f64.powi(decimals as i32);
    (value * p).round() / p
}

struct Builder {
    rng: ChaCha8Rng,
    locale: Locale,
    tables: Tables,
    /// Next record id for somatometry, labs, cultures, antibiotics.
    ids: [u64; 4],
}

impl Builder {
    fn next_id(&mut self, table: usize) -> u64 {
        let id = self.ids[table];
        self.ids[table] += 1;
        id
    }

    fn text(&self, (ja, en): (&'static str, &'static str)) -> String {
        match self.locale {
            Locale::Ja => ja.to_owned(),
            Locale::En => en.to_owned(),
        }
    }

    fn vignette(&mut self, id: PatientId, on_dialysis: bool, no_vancomycin: bool) -> Case {
        let base = NaiveDate::from_ymd_opt(2024, 1, 20).expect("valid date");
        let iv = plus(base, self.rng.random_range(0..=310));
        let sex = if self.rng.random_bool(0.6) { Sex::Male } else { Sex::Female };
        let age_days = self.rng.random_range(40 * 365 + 10..=89 * 365);
        let date_of_birth = minus(iv, age_days);

        let mut allergies = Vec::new();
        if self.rng.random_bool(0.45) {
            let n = self.rng.random_range(1..=2);
            let start = self.rng.random_range(0..ALLERGIES.len());
            for k in 0..n {
                allergies.push(self.text(ALLERGIES[(start + k) % ALLERGIES.len()]));
            }
        }
        if no_vancomycin {
            allergies.push(self.text(VANCOMYCIN_ALLERGY));
        }

        let patient = Patient { patient_id: id.clone(), sex, date_of_birth, allergies, on_dialysis };
        let age = patient.age_on(iv);
        self.tables.patients.push(patient);

        let weight = self.somatometry(&id, iv);
        let index_day = minus(iv, self.rng.random_range(2..=6));
        let therapy_start = plus(index_day, self.rng.random_range(0..=1));
        let first_negative = self.cultures(&id, iv, index_day, therapy_start);
        self.antibiotics(&id, iv, index_day, therapy_start, first_negative, no_vancomycin);
        self.labs(&id, iv, on_dialysis, age, sex, weight);

        Case { patient_id: id, intervention_date: iv }
    }

    /// Returns the latest weight.
    fn somatometry(&mut self, id: &PatientId, iv: NaiveDate) -> f64 {
        let height = round_to(self.rng.random_range(148.0..186.0), 1);
        let mut weight = round_to(self.rng.random_range(42.0..95.0), 1);
        let n = self.rng.random_range(1..=3);
        let mut offsets: Vec<u64> = (0..n).map(|_| self.rng.random_range(1..=60)).collect();
        offsets.sort_unstable_by(|a, b| b.cmp(a));
        offsets.dedup();
        let mut latest = weight;
        for back in offsets {
            weight = round_to(weight + self.rng.random_range(-1.5..1.5), 1);
            if weight == 45.2 {
                weight = 45.3;
            }
            let bmi = round_to(weight / (height / 100.0f64).powi(2), 1);
            let minutes = self.rng.random_range(8 * 60..17 * 60);
            let record_id = self.next_id(0);
            self.tables.somatometry.push(Somatometry {
                record_id,
                patient_id: id.clone(),
                measured_at: at(minus(iv, back), minutes),
                height: Some(height),
                weight,
                bmi: Some(bmi),
            });
            latest = weight;
        }
        latest
    }

    fn culture(&mut self, id: &PatientId, specimen: Specimen, date: NaiveDate, minutes: u32, organisms: &[&str]) {
        let susceptibilities = organisms
            .iter()
            .map(|o| OrganismSusceptibility {
                organism: (*o).to_owned(),
                results: susceptibility_profile(o, &mut self.rng),
            })
            .filter(|s| !s.results.is_empty())
            .collect();
        let record_id = self.next_id(2);
        self.tables.cultures.push(CultureResult {
            record_id,
            patient_id: id.clone(),
            specimen,
            collected_at: at(date, minutes),
            organisms: organisms.iter().map(|o| (*o).to_owned()).collect(),
            susceptibilities,
        });
    }

    /// Blood cultures until clearance plus non-blood specimens. Returns the
    /// first all-negative blood culture day.
    fn cultures(&mut self, id: &PatientId, iv: NaiveDate, index_day: NaiveDate, therapy_start: NaiveDate) -> NaiveDate {
        use Specimen::*;
        let t = self.rng.random_range(8 * 60..18 * 60);
        let first: &[&str] = if self.rng.random_bool(0.25) { &[MRSA, CNS] } else { &[MRSA] };
        self.culture(id, Blood, index_day, t, first);
        self.culture(id, Blood, index_day, t + 10, &[MRSA]);

        let mut day = plus(therapy_start, self.rng.random_range(2..=3));
        for _ in 0..self.rng.random_range(0..=2) {
            let t = self.rng.random_range(8 * 60..18 * 60);
            if self.rng.random_bool(0.35) {
                // mixed day: one sample still grows MRSA
                self.culture(id, Blood, day, t, &[]);
                self.culture(id, Blood, day, t + 15, &[MRSA]);
            } else {
                self.culture(id, Blood, day, t, &[MRSA]);
            }
            day = plus(day, self.rng.random_range(2..=3));
        }
        let first_negative = day;
        let t = self.rng.random_range(8 * 60..18 * 60);
        self.culture(id, Blood, first_negative, t, &[]);
        if self.rng.random_bool(0.5) {
            self.culture(id, Blood, first_negative, t + 12, &[]);
        }
        if self.rng.random_bool(0.5) {
            let later = plus(first_negative, self.rng.random_range(3..=5));
            let minute = self.rng.random_range(8 * 60..18 * 60);
            self.culture(id, Blood, later, minute, &[]);
        }
        if self.rng.random_bool(0.5) {
            let outside = minus(iv, self.rng.random_range(40..=55));
            let minute = self.rng.random_range(8 * 60..18 * 60);
            self.culture(id, Blood, outside, minute, &[]);
        }

        for _ in 0..self.rng.random_range(1..=2) {
            let date = minus(plus(iv, 20), self.rng.random_range(0..=40));
            let flora = SPUTUM_FLORA[self.rng.random_range(0..SPUTUM_FLORA.len())];
            let minute = self.rng.random_range(7 * 60..20 * 60);
            self.culture(id, Sputum, date, minute, flora);
        }
        if self.rng.random_bool(0.6) {
            let date = minus(plus(iv, 20), self.rng.random_range(0..=40));
            let flora = URINE_FLORA[self.rng.random_range(0..URINE_FLORA.len())];
            let minute = self.rng.random_range(7 * 60..20 * 60);
            self.culture(id, Urine, date, minute, flora);
        }
        first_negative
    }

    fn course(&mut self, id: &PatientId, short_name: &str, start: NaiveDate, end: NaiveDate, loading: bool) {
        let d = drug(short_name);
        let mut date = start;
        while date <= end {
            let mut per_day = self.rng.random_range(1..=d.max_per_day);
            if loading && date == start {
                per_day += 1;
            }
            for _ in 0..per_day {
                let record_id = self.next_id(3);
                let dose_text = self.text((d.ja, d.en));
                self.tables.antibiotics.push(AntibioticAdministration {
                    record_id,
                    patient_id: id.clone(),
                    date,
                    route: d.route,
                    short_name: d.short_name.to_owned(),
                    dose_text,
                });
            }
            date = plus(date, 1);
        }
    }

    fn antibiotics(
        &mut self,
        id: &PatientId,
        iv: NaiveDate,
        index_day: NaiveDate,
        therapy_start: NaiveDate,
        first_negative: NaiveDate,
        no_vancomycin: bool,
    ) {
        let therapy_end = plus(first_negative, self.rng.random_range(13..=17));
        if no_vancomycin {
            let prior_start = minus(iv, self.rng.random_range(70..=80));
            self.course(id, VANCOMYCIN, prior_start, plus(prior_start, 12), true);
            self.course(id, "DAP", therapy_start, therapy_end, false);
        } else {
            self.course(id, VANCOMYCIN, therapy_start, therapy_end, true);
        }

        let mut others: Vec<(&str, NaiveDate, NaiveDate)> = Vec::new();
        if self.rng.random_bool(0.7) {
            let name = EMPIRIC[self.rng.random_range(0..EMPIRIC.len())];
            others.push((name, minus(index_day, 1), plus(therapy_start, self.rng.random_range(1..=4))));
        }
        for _ in 0..self.rng.random_range(0..=2) {
            let name = CONCURRENT[self.rng.random_range(0..CONCURRENT.len())];
            if others.iter().any(|(n, ..)| *n == name) {
                continue;
            }
            let start = minus(plus(iv, 5), self.rng.random_range(0..=20));
            others.push((name, start, plus(start, self.rng.random_range(3..=10))));
        }
        // The antibiotics prompt's format example is ["CTRX", "VCM"].
        let on_iv: Vec<&str> = others.iter().filter(|(_, s, e)| *s <= iv && iv <= *e).map(|(n, ..)| *n).collect();
        if !no_vancomycin && on_iv == ["CTRX"] {
            for o in others.iter_mut().filter(|o| o.0 == "CTRX") {
                o.0 = "CFPM";
            }
        }
        for (name, start, end) in others {
            self.course(id, name, start, end, false);
        }
    }

    fn panel(&mut self, id: &PatientId, date: NaiveDate, minutes: u32, analytes: &[&Analyte], base: &[f64]) {
        for (a, b) in analytes.iter().zip(base) {
            let mut value = round_to((b * self.rng.random_range(0.8..1.2)).max(0.0), a.decimals);
            // The lab prompt's format example is 12000 /µL.
            if a.key == WBC && value == 12.0 {
                value = 12.1;
            }
            let record_id = self.next_id(1);
            self.tables.labs.push(LabResult {
                record_id,
                patient_id: id.clone(),
                collected_at: at(date, minutes),
                analyte: a.display_name(self.locale).to_owned(),
                value,
                unit: a.unit.to_owned(),
            });
        }
    }

    fn labs(&mut self, id: &PatientId, iv: NaiveDate, on_dialysis: bool, age: u32, sex: Sex, weight: f64) {
        let blood: Vec<&Analyte> = catalog::ANALYTES.iter().filter(|a| a.panel == Panel::Blood).collect();
        let urine: Vec<&Analyte> = catalog::ANALYTES.iter().filter(|a| a.panel == Panel::Urine).collect();
        let blood_base: Vec<f64> = blood
            .iter()
            .map(|a| {
                if a.key == CREATININE && on_dialysis {
                    self.rng.random_range(5.0..9.0)
                } else if a.key == CREATININE {
                    self.rng.random_range(0.5..2.2)
                } else {
                    self.rng.random_range(a.range.0..a.range.1)
                }
            })
            .collect();
        let urine_base: Vec<f64> = urine.iter().map(|a| self.rng.random_range(a.range.0..a.range.1)).collect();

        let mut dates = Vec::new();
        let mut date = minus(iv, self.rng.random_range(1..=3));
        let mut rows_before = 0;
        while rows_before < 1100 {
            dates.push(date);
            rows_before += blood.len();
            date = minus(date, self.rng.random_range(1..=3));
        }
        dates.reverse();
        let mut date = plus(iv, self.rng.random_range(1..=4));
        while date <= plus(iv, 30) {
            dates.push(date);
            date = plus(date, self.rng.random_range(1..=4));
        }
        let first_blood_idx = self.tables.labs.len();
        for date in dates {
            let minutes = self.rng.random_range(6 * 60..10 * 60);
            self.panel(id, date, minutes, &blood, &blood_base);
            if self.rng.random_bool(0.1) {
                self.panel(id, date, minutes + 30, &urine, &urine_base);
            }
        }
        let minutes = self.rng.random_range(10 * 60..14 * 60);
        self.panel(id, iv, minutes, &urine, &urine_base);

        // The renal prompt's format example is 21.5 mL/min.
        let cre = catalog::analyte(CREATININE).expect("catalogued").display_name(self.locale);
        if let Some(row) = self.tables.labs[first_blood_idx..]
            .iter_mut()
            .filter(|l| l.analyte == cre && l.collected_at.date_naive() <= iv)
            .max_by_key(|l| (l.collected_at, l.record_id))
        {
            while round1(creatinine_clearance(age, sex, weight, row.value)) == 21.5 {
                row.value = round_to(row.value + 0.01, 2);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warehouse::DateRange;

    #[test]
    fn zero_patients_is_an_error() {
        assert_eq!(generate_cohort(1, 0).unwrap_err(), GenerateError::EmptyCohort);
    }

    #[test]
    fn same_seed_same_cohort() {
        assert_eq!(generate_cohort(42, 8).unwrap(), generate_cohort(42, 8).unwrap());
        assert_ne!(generate_cohort(42, 8).unwrap(), generate_cohort(43, 8).unwrap());
    }

    #[test]
    fn one_dialysis_patient() {
        for seed in 0..10 {
            let c = generate_cohort(seed, 8).unwrap();
            assert_eq!(c.warehouse.patients().filter(|p| p.on_dialysis).count(), 1);
            assert_eq!(c.cases.len(), 8);
        }
    }

    #[test]
    fn vignette_contract() {
        let c = generate_cohort(42, 8).unwrap();
        let w = &c.warehouse;
        let mut without_vcm = 0;
        for case in &c.cases {
            let id = &case.patient_id;
            let iv = case.intervention_date;
            let month = DateRange::new(iv - chrono::Months::new(1), iv + chrono::Months::new(1)).unwrap();

            let (_, soma) = w.get_patient(id).unwrap();
            assert!(soma.is_some());

            let cultures = w.query_cultures(id, month).unwrap();
            assert!(cultures.iter().any(|c| c.specimen == Specimen::Blood
                && c.organisms.iter().any(|o| o == MRSA)
                && c.collected_at.date_naive() < iv));
            assert!(cultures.iter().any(|c| c.specimen != Specimen::Blood));

            let vcm = w.query_antibiotics(id, month).unwrap().iter().filter(|a| a.short_name == VANCOMYCIN).count();
            if vcm == 0 {
                without_vcm += 1;
            }

            // No blood panel on the intervention day, a full year of history beyond the limit.
            let day = w.query_labs(id, DateRange::day(iv), 1000).unwrap();
            assert!(!day.is_empty());
            assert!(day.iter().all(|l| catalog::analyte_by_display(&l.analyte).unwrap().panel == Panel::Urine));
            let year = DateRange::new(iv - Days::new(365), iv).unwrap();
            assert!(w.query_labs(id, year, 1000).is_err());
            let recent = DateRange::new(iv - Days::new(30), iv).unwrap();
            assert!(w.query_labs(id, recent, 1000).is_ok());
        }
        assert_eq!(without_vcm, 1);
    }

    #[test]
    fn english_profile_uses_english_names() {
        let c = generate_cohort_with(7, 2, &GeneratorOptions { locale: Locale::En }).unwrap();
        let t = c.warehouse.tables();
        assert!(t.labs.iter().any(|l| l.analyte == "White blood cell count (WBC)"));
        assert!(t.antibiotics.iter().all(|a| a.dose_text.is_ascii()));
    }
}
