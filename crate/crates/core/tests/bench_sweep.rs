use std::sync::Arc;

use ehr_mcp::bench::{
    gold_answer, run_benchmark, score_run, Answer, BenchConfig, ErrorCategory, Language, PolicySpec, TaskId,
};
use ehr_mcp::clinical_tools::ClinicalTools;
use ehr_mcp::mcp::McpServer;
use ehr_mcp::warehouse::{generate_cohort, Cohort};

fn server(cohort: &Cohort) -> McpServer {
    McpServer::new(ClinicalTools::new(Arc::new(cohort.warehouse.clone())))
}

fn config(reps: usize) -> BenchConfig {
    BenchConfig { repetitions: reps, ..BenchConfig::default() }
}

#[test]
fn oracle_is_perfect_across_seeds() {
    for seed in 0..12 {
        let cohort = generate_cohort(seed, 8).unwrap();
        let out = run_benchmark(&server(&cohort), &cohort.cases, &PolicySpec::Oracle, &config(1)).unwrap();
        for r in &out.records {
            assert!(
                r.score.is_perfect() && r.score.error_category.is_none(),
                "seed {seed} {} {} {:?}: {:?}\n{:#?}",
                r.task,
                r.patient_id,
                r.language,
                r.score,
                r.transcript
            );
        }
        assert_eq!(out.report.run_errors, 0);
    }
}

#[test]
fn injectors_land_in_their_own_category() {
    for seed in [42, 7, 1234] {
        let cohort = generate_cohort(seed, 8).unwrap();
        let server = server(&cohort);
        for category in ErrorCategory::ALL {
            let out = run_benchmark(&server, &cohort.cases, &PolicySpec::Fault(category), &config(1)).unwrap();
            for r in &out.records {
                assert_eq!(
                    r.score.error_category,
                    Some(category),
                    "seed {seed} {} {} {:?}: {:?}\n{:#?}",
                    r.task,
                    r.patient_id,
                    r.language,
                    r.score,
                    r.transcript
                );
            }
        }
    }
}

#[test]
fn single_language_sweep_has_expected_shape() {
    let cohort = generate_cohort(42, 8).unwrap();
    let cfg = BenchConfig {
        languages: vec![Language::En],
        repetitions: 2,
        tasks: vec![TaskId::CalculateCcr],
        ..BenchConfig::default()
    };
    let out = run_benchmark(&server(&cohort), &cohort.cases, &PolicySpec::Oracle, &cfg).unwrap();
    assert_eq!(out.excluded.len(), 1);
    assert_eq!(out.records.len(), 7 * 2);
    assert_eq!(out.report.tasks[0].eligible_patients, 7);
}

#[test]
fn copying_the_format_example_never_scores_perfectly() {
    for seed in 0..60 {
        let cohort = generate_cohort(seed, 8).unwrap();
        for task in TaskId::ALL {
            let example = Answer::format_example(task);
            for case in &cohort.cases {
                let gold = gold_answer(task, case, &cohort.warehouse).unwrap();
                if gold.is_excluded() {
                    continue;
                }
                let copied = score_run(task, Some(&example.to_json()), &gold);
                assert!(!copied.is_perfect(), "seed {seed} {task} {}", case.patient_id);
            }
        }
    }
}
