use std::collections::HashMap;
use std::sync::OnceLock;

use chrono::{Days, NaiveDate};
use proptest::prelude::*;

use ehr_mcp::bench::{dice, month_window};
use ehr_mcp::clinical_tools::{creatinine_clearance, round1};
use ehr_mcp::warehouse::{generate_cohort, Cohort, DateRange, Sex};

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, ..ProptestConfig::default() }
}

fn sex() -> impl Strategy<Value = Sex> {
    prop_oneof![Just(Sex::Male), Just(Sex::Female)]
}

fn date() -> impl Strategy<Value = NaiveDate> {
    (0u64..3650).prop_map(|d| NaiveDate::from_ymd_opt(2018, 1, 1).unwrap() + Days::new(d))
}

fn cohort() -> &'static Cohort {
    static C: OnceLock<Cohort> = OnceLock::new();
    C.get_or_init(|| generate_cohort(42, 8).unwrap())
}

fn counts(xs: &[u8]) -> HashMap<u8, usize> {
    let mut m = HashMap::new();
    for x in xs {
        *m.entry(*x).or_default() += 1;
    }
    m
}

proptest! {
    #![proptest_config(cases(2000))]

    #[test]
    fn female_is_085_of_male(age in 18u32..=130, weight in 20.0f64..250.0, scr in 0.1f64..15.0) {
        let m = creatinine_clearance(age, Sex::Male, weight, scr);
        let f = creatinine_clearance(age, Sex::Female, weight, scr);
        prop_assert!((f - 0.85 * m).abs() <= 1e-9 * m.abs().max(1.0));
    }

    #[test]
    fn clearance_monotonicity(
        sex in sex(),
        age in 18u32..=129,
        weight in 20.0f64..250.0,
        dw in 0.01f64..50.0,
        scr in 0.1f64..15.0,
        ds in 0.01f64..5.0,
    ) {
        let base = creatinine_clearance(age, sex, weight, scr);
        prop_assert!(creatinine_clearance(age + 1, sex, weight, scr) < base);
        prop_assert!(creatinine_clearance(age, sex, weight + dw, scr) > base);
        prop_assert!(creatinine_clearance(age, sex, weight, scr + ds) < base);
        // Rounding preserves weak order.
        prop_assert!(round1(creatinine_clearance(age + 1, sex, weight, scr)) <= round1(base));
    }

    #[test]
    fn dice_symmetric_bounded_and_identity(a in prop::collection::vec(0u8..5, 0..8), b in prop::collection::vec(0u8..5, 0..8)) {
        let ab = dice(&a, &b);
        prop_assert_eq!(ab, dice(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab == 1.0, counts(&a) == counts(&b));
        prop_assert_eq!(dice(&a, &a), 1.0);
    }

    #[test]
    fn month_window_contains_date_and_is_monotone(d in date(), k in 0u64..400) {
        let w = month_window(d);
        prop_assert!(w.contains(d));
        prop_assert!(w.start() < d && d < w.end());
        let later = month_window(d + Days::new(k));
        prop_assert!(later.start() >= w.start() && later.end() >= w.end());
    }

    #[test]
    fn range_algebra(a in date(), b in date(), c in date()) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let r = DateRange::new(lo, hi).unwrap();
        prop_assert_eq!(r.contains(c), lo <= c && c <= hi);
        prop_assert!(r.covers(&r));
        prop_assert!(r.covers(&DateRange::day(lo)) && r.covers(&DateRange::day(hi)));
        prop_assert_eq!(DateRange::new(hi, lo).is_ok(), lo == hi);
    }
}

proptest! {
    #![proptest_config(cases(300))]

    /// Widening a window never loses rows, and every returned row lies inside it.
    #[test]
    fn wider_windows_return_supersets(p in 0usize..8, a in date(), len in 0u64..400, grow in 0u64..400) {
        let c = cohort();
        let id = &c.cases[p].patient_id;
        let narrow = DateRange::new(a, a + Days::new(len)).unwrap();
        let wide = DateRange::new(a - Days::new(grow), a + Days::new(len + grow)).unwrap();
        let wh = &c.warehouse;

        let n = wh.query_labs(id, narrow, usize::MAX).unwrap();
        let w = wh.query_labs(id, wide, usize::MAX).unwrap();
        prop_assert!(n.iter().all(|r| narrow.contains(r.collected_at.date_naive())));
        prop_assert!(n.iter().all(|r| w.iter().any(|x| x.record_id == r.record_id)));

        let n = wh.query_cultures(id, narrow).unwrap();
        let w = wh.query_cultures(id, wide).unwrap();
        prop_assert!(n.len() <= w.len());
        prop_assert!(n.iter().all(|r| w.contains(r)));

        let n = wh.query_antibiotics(id, narrow).unwrap();
        let w = wh.query_antibiotics(id, wide).unwrap();
        prop_assert!(n.iter().all(|r| narrow.contains(r.date) && w.contains(r)));
    }
}
