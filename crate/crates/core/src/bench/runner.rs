use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::classify::{classify_error, ErrorCategory};
use super::gold::{gold_answer, Exclusion, GoldAnswer, GoldError};
use super::score::{score_run, Metric, RunScore};
use super::{render_prompt, Difficulty, Language, RenderError, TaskId};
use crate::agent::{
    run_react, ChatPolicy, FaultInjector, Policy, ProviderConfig, ScriptedOracle, Termination, Transcript,
    DEFAULT_MAX_STEPS,
};
use crate::mcp::{InProcessClient, McpServer};
use crate::warehouse::{Case, PatientId};

#[derive(Clone, Debug)]
pub enum PolicySpec {
    Oracle,
    Fault(ErrorCategory),
    Live(ProviderConfig),
}

impl PolicySpec {
    pub fn label(&self) -> String {
        match self {
            PolicySpec::Oracle => "oracle".into(),
            PolicySpec::Fault(c) => format!("fault:{}", c.as_str()),
            PolicySpec::Live(cfg) => format!("live:{}", cfg.model),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub languages: Vec<Language>,
    pub repetitions: usize,
    pub tasks: Vec<TaskId>,
    pub max_steps: usize,
    /// Worker threads; `None` uses one per logical CPU.
    pub jobs: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            languages: vec![Language::En, Language::Ja],
            repetitions: 10,
            tasks: TaskId::ALL.to_vec(),
            max_steps: DEFAULT_MAX_STEPS,
            jobs: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("gold answer: {0}")]
    Gold(#[from] GoldError),
    #[error("prompt: {0}")]
    Render(#[from] RenderError),
    #[error("policy: {0}")]
    Policy(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// One persisted run: enough to re-score and re-classify without the
/// warehouse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: TaskId,
    pub patient_id: PatientId,
    pub language: Language,
    pub rep: usize,
    pub policy: String,
    pub transcript: Transcript,
    pub gold: GoldAnswer,
    pub score: RunScore,
}

impl RunRecord {
    fn key(&self) -> (TaskId, PatientId, Language, usize) {
        (self.task, self.patient_id.clone(), self.language, self.rep)
    }

    pub fn is_run_error(&self) -> bool {
        self.transcript.terminated_by != Termination::FinalAnswer
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOutcome {
    pub records: Vec<RunRecord>,
    pub excluded: Vec<GoldAnswer>,
    pub report: Report,
}

struct Job<'a> {
    gold: &'a GoldAnswer,
    language: Language,
    prompt: String,
    rep: usize,
}

fn make_policy(spec: &PolicySpec, gold: &GoldAnswer) -> Result<Box<dyn Policy>, String> {
    Ok(match spec {
        PolicySpec::Oracle => Box::new(ScriptedOracle::new(gold.task, gold.bindings.clone())),
        PolicySpec::Fault(c) => Box::new(FaultInjector::new(*c, gold.task, gold.bindings.clone())),
        PolicySpec::Live(cfg) => Box::new(ChatPolicy::new(cfg.clone()).map_err(|e| e.to_string())?),
    })
}

fn failed_transcript(prompt: &str, error: String) -> Transcript {
    Transcript {
        initial_prompt: prompt.to_owned(),
        steps: Vec::new(),
        final_response: None,
        step_count: 0,
        terminated_by: Termination::ProviderError,
        provider_error: Some(error),
    }
}

fn run_one(server: &McpServer, spec: &PolicySpec, label: &str, max_steps: usize, job: &Job<'_>) -> RunRecord {
    let gold = job.gold;
    let transcript = match (InProcessClient::connect(server), make_policy(spec, gold)) {
        (Ok(mut client), Ok(mut policy)) => run_react(&job.prompt, &mut client, policy.as_mut(), max_steps),
        (Err(e), _) => failed_transcript(&job.prompt, e.to_string()),
        (_, Err(e)) => failed_transcript(&job.prompt, e),
    };
    let mut score = score_run(gold.task, transcript.final_response.as_deref(), gold);
    score.error_category = classify_error(&transcript, gold);
    RunRecord {
        task: gold.task,
        patient_id: gold.patient_id.clone(),
        language: job.language,
        rep: job.rep,
        policy: label.to_owned(),
        transcript,
        gold: gold.clone(),
        score,
    }
}

/// Runs every (task, eligible case, language, repetition). Setup problems
/// (missing gold data, unrenderable prompts, unusable policy) abort; per-run
/// failures are recorded in the transcripts.
pub fn run_benchmark(
    server: &McpServer,
    cases: &[Case],
    policy: &PolicySpec,
    config: &BenchConfig,
) -> Result<BenchOutcome, BenchError> {
    if let PolicySpec::Live(cfg) = policy {
        ChatPolicy::new(cfg.clone()).map_err(|e| BenchError::Policy(e.to_string()))?;
    }
    let warehouse = server.tools().warehouse();
    let mut golds = Vec::new();
    let mut excluded = Vec::new();
    for &task in &config.tasks {
        for case in cases {
            let gold = gold_answer(task, case, warehouse)?;
            if gold.is_excluded() {
                excluded.push(gold);
            } else {
                golds.push(gold);
            }
        }
    }
    let mut jobs = Vec::new();
    for gold in &golds {
        for &language in &config.languages {
            let prompt = render_prompt(gold.task, language, &gold.bindings)?;
            for rep in 0..config.repetitions {
                jobs.push(Job { gold, language, prompt: prompt.clone(), rep });
            }
        }
    }

    let label = policy.label();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.jobs {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| BenchError::Pool(e.to_string()))?;
    let mut records: Vec<RunRecord> =
        pool.install(|| jobs.par_iter().map(|job| run_one(server, policy, &label, config.max_steps, job)).collect());
    records.sort_by_key(RunRecord::key);

    let report = build_report(&records, &excluded);
    Ok(BenchOutcome { records, excluded, report })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientMean {
    pub patient_id: PatientId,
    pub language: Language,
    pub runs: usize,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    /// Mean over all runs of the task.
    pub mean: f64,
    /// Extremes of the per-patient means.
    pub min: f64,
    pub max: f64,
    pub per_patient: Vec<PatientMean>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: TaskId,
    pub difficulty: Difficulty,
    pub eligible_patients: usize,
    pub runs: usize,
    pub metrics: Vec<MetricSummary>,
    pub error_categories: BTreeMap<ErrorCategory, usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedCase {
    pub task: TaskId,
    pub patient_id: PatientId,
    pub reason: Exclusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub policy: String,
    pub total_runs: usize,
    /// Runs that ended without a final answer (step limit or provider error).
    pub run_errors: usize,
    pub tasks: Vec<TaskReport>,
    pub error_categories: BTreeMap<ErrorCategory, usize>,
    pub exclusions: Vec<ExcludedCase>,
}

fn empty_histogram() -> BTreeMap<ErrorCategory, usize> {
    ErrorCategory::ALL.into_iter().map(|c| (c, 0)).collect()
}

/// Aggregates stored runs. A pure function of its inputs, so a report rebuilt
/// from persisted runs equals the one produced by the sweep.
pub fn build_report(records: &[RunRecord], excluded: &[GoldAnswer]) -> Report {
    let mut records: Vec<&RunRecord> = records.iter().collect();
    records.sort_by_key(|r| r.key());
    let mut policies: Vec<&str> = records.iter().map(|r| r.policy.as_str()).collect();
    policies.dedup();
    policies.sort_unstable();
    policies.dedup();
    let policy = match policies.as_slice() {
        [] => "none".to_owned(),
        [one] => (*one).to_owned(),
        _ => "mixed".to_owned(),
    };

    let mut error_categories = empty_histogram();
    let mut tasks = Vec::new();
    for task in TaskId::ALL {
        let runs: Vec<&RunRecord> = records.iter().copied().filter(|r| r.task == task).collect();
        if runs.is_empty() {
            continue;
        }
        let mut histogram = empty_histogram();
        for r in &runs {
            if let Some(c) = r.score.error_category {
                *histogram.entry(c).or_default() += 1;
                *error_categories.entry(c).or_default() += 1;
            }
        }
        let mut patients: Vec<&PatientId> = runs.iter().map(|r| &r.patient_id).collect();
        patients.dedup();
        let metrics = Metric::for_task(task)
            .iter()
            .map(|&metric| {
                let mut groups: BTreeMap<(&PatientId, Language), Vec<f64>> = BTreeMap::new();
                for r in &runs {
                    groups.entry((&r.patient_id, r.language)).or_default().push(r.score.value(metric).unwrap_or(0.0));
                }
                let per_patient: Vec<PatientMean> = groups
                    .into_iter()
                    .map(|((p, language), values)| PatientMean {
                        patient_id: p.clone(),
                        language,
                        runs: values.len(),
                        mean: values.iter().sum::<f64>() / values.len() as f64,
                    })
                    .collect();
                let all: f64 = runs.iter().map(|r| r.score.value(metric).unwrap_or(0.0)).sum();
                MetricSummary {
                    metric,
                    mean: all / runs.len() as f64,
                    min: per_patient.iter().map(|p| p.mean).fold(f64::INFINITY, f64::min),
                    max: per_patient.iter().map(|p| p.mean).fold(f64::NEG_INFINITY, f64::max),
                    per_patient,
                }
            })
            .collect();
        tasks.push(TaskReport {
            task,
            difficulty: task.difficulty(),
            eligible_patients: patients.len(),
            runs: runs.len(),
            metrics,
            error_categories: histogram,
        });
    }

    let mut exclusions: Vec<ExcludedCase> = excluded
        .iter()
        .filter_map(|g| Some(ExcludedCase { task: g.task, patient_id: g.patient_id.clone(), reason: g.excluded? }))
        .collect();
    exclusions.sort_by(|a, b| (a.task, &a.patient_id).cmp(&(b.task, &b.patient_id)));

    Report {
        policy,
        total_runs: records.len(),
        run_errors: records.iter().filter(|r| r.is_run_error()).count(),
        tasks,
        error_categories,
        exclusions,
    }
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "policy: {}  runs: {}  run errors: {}", self.policy, self.total_runs, self.run_errors);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<16} {:<10} {:<18} {:>8} {:>6} {:>6} {:>6}",
            "task", "difficulty", "metric", "patients", "mean", "min", "max"
        );
        for t in &self.tasks {
            let difficulty = match t.difficulty {
                Difficulty::Simple => "simple",
                Difficulty::Complex => "complex",
            };
            for m in &t.metrics {
                let _ = writeln!(
                    s,
                    "{:<16} {:<10} {:<18} {:>8} {:>6.3} {:>6.3} {:>6.3}",
                    t.task.as_str(),
                    difficulty,
                    m.metric.as_str(),
                    t.eligible_patients,
                    m.mean,
                    m.min,
                    m.max
                );
            }
        }
        let _ = writeln!(s);
        let hist: Vec<String> = self.error_categories.iter().map(|(c, n)| format!("{}={n}", c.as_str())).collect();
        let _ = writeln!(s, "error categories: {}", hist.join(" "));
        if self.exclusions.is_empty() {
            let _ = writeln!(s, "excluded: none");
        } else {
            for e in &self.exclusions {
                let reason = match e.reason {
                    Exclusion::Dialysis => "on dialysis",
                    Exclusion::NoVancomycinInWindow => "no vancomycin in window",
                };
                let _ = writeln!(s, "excluded: {} {} ({reason})", e.task, e.patient_id);
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<16} {:<18} {:<8} {:<4} {:>6}", "task", "metric", "patient", "lang", "mean");
        for t in &self.tasks {
            for m in &t.metrics {
                for p in &m.per_patient {
                    let lang = match p.language {
                        Language::En => "en",
                        Language::Ja => "ja",
                    };
                    let _ = writeln!(
                        s,
                        "{:<16} {:<18} {:<8} {:<4} {:>6.3}",
                        t.task.as_str(),
                        m.metric.as_str(),
                        p.patient_id.as_str(),
                        lang,
                        p.mean
                    );
                }
            }
        }
        s
    }
}

/// Runs and exclusions read back from a runs directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StoredRuns {
    pub records: Vec<RunRecord>,
    pub excluded: Vec<GoldAnswer>,
}

const EXCLUDED_FILE: &str = "excluded.json";

fn lang_code(l: Language) -> &'static str {
    match l {
        Language::En => "en",
        Language::Ja => "ja",
    }
}

/// Layout: `<dir>/<task>/<patient>/<lang>-<rep>.json`, plus `excluded.json`
/// for each excluded (task, patient).
pub fn write_runs(dir: impl AsRef<Path>, records: &[RunRecord], excluded: &[GoldAnswer]) -> io::Result<()> {
    let dir = dir.as_ref();
    for r in records {
        let d = dir.join(r.task.as_str()).join(r.patient_id.as_str());
        fs::create_dir_all(&d)?;
        let body = serde_json::to_vec_pretty(r).map_err(io::Error::other)?;
        fs::write(d.join(format!("{}-{:02}.json", lang_code(r.language), r.rep)), body)?;
    }
    for g in excluded {
        let d = dir.join(g.task.as_str()).join(g.patient_id.as_str());
        fs::create_dir_all(&d)?;
        fs::write(d.join(EXCLUDED_FILE), serde_json::to_vec_pretty(g).map_err(io::Error::other)?)?;
    }
    Ok(())
}

pub fn load_runs(dir: impl AsRef<Path>) -> io::Result<StoredRuns> {
    let mut out = StoredRuns::default();
    let invalid = |path: &Path, e: serde_json::Error| {
        io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display()))
    };
    for task_dir in fs::read_dir(dir)? {
        let task_dir = task_dir?.path();
        if !task_dir.is_dir() {
            continue;
        }
        for patient_dir in fs::read_dir(&task_dir)? {
            let patient_dir = patient_dir?.path();
            if !patient_dir.is_dir() {
                continue;
            }
            for file in fs::read_dir(&patient_dir)? {
                let path = file?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("json") {
                    continue;
                }
                let bytes = fs::read(&path)?;
                if path.file_name().and_then(|n| n.to_str()) == Some(EXCLUDED_FILE) {
                    out.excluded.push(serde_json::from_slice(&bytes).map_err(|e| invalid(&path, e))?);
                } else {
                    out.records.push(serde_json::from_slice(&bytes).map_err(|e| invalid(&path, e))?);
                }
            }
        }
    }
    out.records.sort_by_key(RunRecord::key);
    out.excluded.sort_by(|a, b| (a.task, &a.patient_id).cmp(&(b.task, &b.patient_id)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_lists_every_category() {
        let r = build_report(&[], &[]);
        assert_eq!(r.policy, "none");
        assert_eq!(r.total_runs, 0);
        assert!(r.tasks.is_empty());
        assert_eq!(r.error_categories.len(), 4);
        assert!(r.to_text().contains("tool_invocation=0 argument=0 interpretation=0 output_format=0"));
        assert!(r.to_text().contains("excluded: none"));
    }

    #[test]
    fn policy_labels() {
        assert_eq!(PolicySpec::Oracle.label(), "oracle");
        assert_eq!(PolicySpec::Fault(ErrorCategory::OutputFormat).label(), "fault:output_format");
    }
}
