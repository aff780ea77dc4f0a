//! Evaluation harness: curate a corpus of repositories with build/test
//! workflows, generate workflows for them, score the results and aggregate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{fetch_remote_or_shallow, scan_local, sort_tree, RepoContext};
use crate::github::GitHubApi;
use crate::language::Language;
use crate::lexicon::{classify_workflow_purpose, CommandLexicon, Purpose};
use crate::llm::{complete, Backend, GenerationParams, DEFAULT_MAX_IN_FLIGHT};
use crate::metrics::{extract_build_test_steps, pearson, score_texts, MetricError, ScoreOptions, ScoreReport};
use crate::prompt::{build_generation_prompt, extract_workflow_text};
use crate::validate::Validator;
use crate::workflow::parse_workflow;

pub const MIN_STARS: u64 = 100;
pub const WORKFLOW_DIR: &str = ".github/workflows/";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("candidate source unavailable: {0}")]
    SourceUnavailable(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Json { path: String, line: usize, message: String },
    #[error("{failed} of {total} runs failed")]
    TooManyFailures { failed: usize, total: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One generation attempt. `scores` is present only for syntax-valid output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_text: Option<String>,
    pub syntax_valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub repo: String,
    pub language: Language,
    pub stars: u64,
    pub default_branch: String,
    pub file_tree: Vec<String>,
    pub truth_path: String,
    pub truth_workflow: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RunResult>,
}

impl EvalRecord {
    pub fn context(&self) -> RepoContext {
        RepoContext {
            full_name: self.repo.clone(),
            default_branch: self.default_branch.clone(),
            file_tree: self.file_tree.clone(),
            primary_language: Some(self.language.clone()),
            star_count: Some(self.stars),
        }
    }

    /// Mean DevOps Aware score over syntax-valid runs.
    pub fn mean_devops_aware(&self) -> Option<f64> {
        mean(self.runs.iter().filter_map(|r| r.scores.and_then(|s| s.devops_aware)))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// A row of the repository-mining CSV export.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub name: String,
    pub stars: u64,
    pub language: Language,
    pub default_branch: Option<String>,
}

#[derive(Debug, Deserialize)]
struct CandidateRow {
    name: String,
    stargazers: u64,
    #[serde(rename = "mainLanguage")]
    main_language: String,
    #[serde(rename = "defaultBranch", default)]
    default_branch: Option<String>,
}

/// Read candidates from a CSV with at least `name`, `stargazers` and
/// `mainLanguage` columns (`defaultBranch` is used when present).
pub fn read_candidates(path: &Path) -> Result<Vec<Candidate>, HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::SourceUnavailable(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<CandidateRow>().enumerate() {
        let row = row.map_err(|e| HarnessError::SourceUnavailable(format!("{} row {}: {e}", path.display(), i + 2)))?;
        out.push(Candidate {
            name: row.name,
            stars: row.stargazers,
            language: row.main_language.parse().expect("infallible"),
            default_branch: row.default_branch.filter(|b| !b.is_empty()),
        });
    }
    Ok(out)
}

/// What curation needs to know about one repository.
#[derive(Debug, Clone, PartialEq)]
pub struct RepoSnapshot {
    pub default_branch: String,
    pub file_tree: Vec<String>,
    /// Workflow files under `.github/workflows/`, by path.
    pub workflows: BTreeMap<String, String>,
}

pub trait WorkflowSource: Sync {
    fn snapshot(&self, candidate: &Candidate) -> Result<RepoSnapshot, String>;
}

fn is_workflow_path(path: &str) -> bool {
    path.strip_prefix(WORKFLOW_DIR)
        .is_some_and(|rest| !rest.contains('/') && (rest.ends_with(".yml") || rest.ends_with(".yaml")))
}

/// Repositories checked out under `root/<owner>/<name>/`.
pub struct DirectorySource {
    pub root: PathBuf,
}

impl WorkflowSource for DirectorySource {
    fn snapshot(&self, candidate: &Candidate) -> Result<RepoSnapshot, String> {
        let dir = self.root.join(&candidate.name);
        let ctx = scan_local(&dir).map_err(|e| e.to_string())?;
        let mut workflows = BTreeMap::new();
        for path in ctx.file_tree.iter().filter(|p| is_workflow_path(p)) {
            let text = std::fs::read_to_string(dir.join(path)).map_err(|e| format!("{path}: {e}"))?;
            workflows.insert(path.clone(), text);
        }
        Ok(RepoSnapshot {
            default_branch: candidate.default_branch.clone().unwrap_or(ctx.default_branch),
            file_tree: ctx.file_tree,
            workflows,
        })
    }
}

/// Repositories read through the GitHub API.
pub struct GitHubSource<'a> {
    pub api: &'a dyn GitHubApi,
}

impl WorkflowSource for GitHubSource<'_> {
    fn snapshot(&self, candidate: &Candidate) -> Result<RepoSnapshot, String> {
        let ctx = fetch_remote_or_shallow(&candidate.name, self.api).map_err(|e| e.to_string())?;
        let mut workflows = BTreeMap::new();
        for path in ctx.file_tree.iter().filter(|p| is_workflow_path(p)) {
            if let Some(file) = self
                .api
                .get_file(&candidate.name, path, &ctx.default_branch)
                .map_err(|e| e.to_string())?
            {
                workflows.insert(path.clone(), file.text);
            }
        }
        Ok(RepoSnapshot {
            default_branch: ctx.default_branch,
            file_tree: ctx.file_tree,
            workflows,
        })
    }
}

/// The build/test workflow used as ground truth: among syntax-valid
/// workflows classified build or test, the one with the most build/test
/// steps, ties to the first path.
pub fn select_ground_truth<'a>(
    workflows: &'a BTreeMap<String, String>,
    lexicon: &CommandLexicon,
) -> Option<(&'a str, &'a str)> {
    let validator = Validator::default();
    let mut best: Option<(&str, &str, usize)> = None;
    for (path, text) in workflows {
        let Ok(w) = parse_workflow(text) else { continue };
        if !validator.workflow_is_valid(&w) {
            continue;
        }
        let purposes = classify_workflow_purpose(&w, lexicon);
        if !(purposes.contains(&Purpose::Build) || purposes.contains(&Purpose::Test)) {
            continue;
        }
        let steps = extract_build_test_steps(&w, lexicon).len();
        if best.is_none_or(|(_, _, n)| steps > n) {
            best = Some((path, text, steps));
        }
    }
    best.map(|(p, t, _)| (p, t))
}

/// File tree shown to the model: the repository minus its workflow files.
fn prompt_file_tree(tree: &[String]) -> Vec<String> {
    let kept: Vec<String> = tree
        .iter()
        .filter(|p| !p.starts_with(WORKFLOW_DIR))
        .cloned()
        .collect();
    let github_has_other = kept.iter().any(|p| p.starts_with(".github/") && p != ".github/");
    sort_tree(
        kept.into_iter()
            .filter(|p| p != ".github/" || github_has_other)
            .collect(),
    )
}

/// Keep repositories with at least [`MIN_STARS`] stars, a supported language
/// and a build/test workflow, up to `per_language` per language in input
/// order. Repositories that cannot be read are logged and skipped.
pub fn curate(
    candidates: &[Candidate],
    source: &dyn WorkflowSource,
    lexicon: &CommandLexicon,
    per_language: usize,
) -> Vec<EvalRecord> {
    curate_with_failures(candidates, source, lexicon, per_language).0
}

/// [`curate`], also returning the repositories that could not be read, with
/// the reason.
pub fn curate_with_failures(
    candidates: &[Candidate],
    source: &dyn WorkflowSource,
    lexicon: &CommandLexicon,
    per_language: usize,
) -> (Vec<EvalRecord>, Vec<(String, String)>) {
    let mut failures = Vec::new();
    let mut taken: BTreeMap<Language, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for c in candidates {
        if c.stars < MIN_STARS {
            log::debug!("{}: {} stars", c.name, c.stars);
            continue;
        }
        if !c.language.is_supported() {
            log::debug!("{}: unsupported language {}", c.name, c.language);
            continue;
        }
        if taken.get(&c.language).copied().unwrap_or(0) >= per_language {
            continue;
        }
        let snapshot = match source.snapshot(c) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("{}: skipped, {e}", c.name);
                failures.push((c.name.clone(), e));
                continue;
            }
        };
        let Some((truth_path, truth)) = select_ground_truth(&snapshot.workflows, lexicon) else {
            log::debug!("{}: no build/test workflow", c.name);
            continue;
        };
        *taken.entry(c.language.clone()).or_default() += 1;
        out.push(EvalRecord {
            repo: c.name.clone(),
            language: c.language.clone(),
            stars: c.stars,
            default_branch: snapshot.default_branch.clone(),
            file_tree: prompt_file_tree(&snapshot.file_tree),
            truth_path: truth_path.to_string(),
            truth_workflow: truth.to_string(),
            model: None,
            runs: Vec::new(),
        });
    }
    (out, failures)
}

fn run_once(
    record: &EvalRecord,
    run: u64,
    backend: &dyn Backend,
    model: &str,
    lexicon: &CommandLexicon,
) -> (RunResult, bool) {
    let prompt = build_generation_prompt(&record.context(), None);
    let exchange = match complete(&prompt, &GenerationParams::experiment(model, run), backend) {
        Ok(ex) => ex,
        Err(e) => {
            let result = RunResult {
                run,
                generated_text: None,
                syntax_valid: false,
                scores: None,
                latency_ms: None,
                error: Some(e.to_string()),
            };
            return (result, true);
        }
    };
    let mut result = RunResult {
        run,
        generated_text: None,
        syntax_valid: false,
        scores: None,
        latency_ms: Some(exchange.latency_ms),
        error: None,
    };
    match extract_workflow_text(&exchange.response) {
        Ok(text) => {
            match score_texts(&text, &record.truth_workflow, lexicon, &ScoreOptions::default()) {
                Ok(report) if report.syntax_valid => {
                    result.syntax_valid = true;
                    result.scores = Some(report);
                }
                Ok(_) => {}
                Err(e) => result.error = Some(e.to_string()),
            }
            result.generated_text = Some(text);
        }
        Err(e) => {
            result.generated_text = Some(exchange.response);
            result.error = Some(e.to_string());
        }
    }
    (result, false)
}

/// Generate `runs_per_record` workflows per record and score each one.
/// Backend failures count as syntax-invalid runs; more than half failing
/// aborts the experiment.
pub fn run_experiment(
    records: &[EvalRecord],
    backend: &dyn Backend,
    runs_per_record: u64,
    model: &str,
    lexicon: &CommandLexicon,
) -> Result<Vec<EvalRecord>, HarnessError> {
    let jobs: Vec<(usize, u64)> = (0..records.len())
        .flat_map(|i| (0..runs_per_record).map(move |r| (i, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(DEFAULT_MAX_IN_FLIGHT)
        .build()
        .expect("thread pool");
    let results: Vec<(RunResult, bool)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, r)| run_once(&records[i], r, backend, model, lexicon))
            .collect()
    });
    let failed = results.iter().filter(|(_, f)| *f).count();
    if failed * 2 > results.len() {
        return Err(HarnessError::TooManyFailures {
            failed,
            total: results.len(),
        });
    }
    let mut filled: Vec<EvalRecord> = records
        .iter()
        .map(|r| EvalRecord {
            model: Some(model.to_string()),
            runs: Vec::new(),
            ..r.clone()
        })
        .collect();
    for ((i, _), (result, _)) in jobs.into_iter().zip(results) {
        filled[i].runs.push(result);
    }
    Ok(filled)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Model,
    ModelLanguage,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub model: String,
    pub language: Option<Language>,
    pub devops_aware: Option<f64>,
    pub bleu: Option<f64>,
    pub em: Option<f64>,
    pub syntax_valid_pct: f64,
    pub valid_runs: usize,
    pub total_runs: usize,
}

impl AggregateRow {
    pub fn group(&self) -> String {
        match &self.language {
            Some(lang) => format!("{}/{}", self.model, lang),
            None => self.model.clone(),
        }
    }
}

/// `valid / total × 100`, rounded to two decimals.
pub fn percentage(valid: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (valid as f64 * 10_000.0 / total as f64).round() / 100.0
}

/// Per-group means over syntax-valid runs and the valid percentage over all
/// runs. Rows are sorted by group key.
pub fn aggregate(records: &[EvalRecord], group_by: GroupBy) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, Option<String>), (Option<Language>, Vec<&RunResult>)> = BTreeMap::new();
    for record in records {
        let model = record.model.clone().unwrap_or_default();
        let language = match group_by {
            GroupBy::Model => None,
            GroupBy::ModelLanguage => Some(record.language.clone()),
        };
        let key = (model, language.as_ref().map(|l| l.name().to_string()));
        let entry = groups.entry(key).or_insert_with(|| (language, Vec::new()));
        entry.1.extend(record.runs.iter());
    }
    groups
        .into_iter()
        .map(|((model, _), (language, runs))| {
            let valid: Vec<ScoreReport> = runs.iter().filter_map(|r| r.scores.filter(|_| r.syntax_valid)).collect();
            AggregateRow {
                model,
                language,
                devops_aware: mean(valid.iter().filter_map(|s| s.devops_aware)),
                bleu: mean(valid.iter().filter_map(|s| s.bleu)),
                em: mean(valid.iter().filter_map(|s| s.exact_match)),
                syntax_valid_pct: percentage(valid.len(), runs.len()),
                valid_runs: valid.len(),
                total_runs: runs.len(),
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `group,devops_aware,bleu,em,syntax_valid_pct`; means at full precision.
pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["group", "devops_aware", "bleu", "em", "syntax_valid_pct"])
        .expect("in-memory write");
    for row in rows {
        writer
            .write_record([
                row.group(),
                cell(row.devops_aware),
                cell(row.bleu),
                cell(row.em),
                format!("{:.2}", row.syntax_valid_pct),
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
}

fn md_cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "–".to_string())
}

/// Markdown tables: overall scores per model, then valid-syntax
/// percentage per language.
pub fn aggregate_markdown(overall: &[AggregateRow], by_language: &[AggregateRow]) -> String {
    let mut out = String::new();
    out.push_str("| Model | DevOps Aware | BLEU | EM | Valid syntax |\n|---|---|---|---|---|\n");
    for row in overall {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {:.2} % |",
            row.model,
            md_cell(row.devops_aware),
            md_cell(row.bleu),
            md_cell(row.em),
            row.syntax_valid_pct
        );
    }
    let models: BTreeSet<&str> = by_language.iter().map(|r| r.model.as_str()).collect();
    let languages: BTreeSet<String> = by_language
        .iter()
        .filter_map(|r| r.language.as_ref().map(|l| l.name().to_string()))
        .collect();
    out.push_str("\n| Language |");
    for m in &models {
        let _ = write!(out, " {m} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(models.len()));
    out.push('\n');
    for lang in &languages {
        let _ = write!(out, "| {lang} |");
        for m in &models {
            let row = by_language
                .iter()
                .find(|r| r.model == *m && r.language.as_ref().is_some_and(|l| l.name() == lang));
            match row {
                Some(r) => {
                    let _ = write!(out, " {:.2} % |", r.syntax_valid_pct);
                }
                None => out.push_str(" – |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Pearson r between each record's mean DevOps Aware score and its human
/// Likert score (1–5), over records present in both.
pub fn correlate_with_human(records: &[EvalRecord], human: &BTreeMap<String, f64>) -> Result<f64, MetricError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for record in records {
        let (Some(score), Some(&likert)) = (record.mean_devops_aware(), human.get(&record.repo)) else {
            continue;
        };
        if !(1.0..=5.0).contains(&likert) {
            return Err(MetricError::InvalidInput(format!("{}: Likert score {likert} outside 1..5", record.repo)));
        }
        xs.push(score);
        ys.push(likert);
    }
    if xs.len() < 2 {
        return Err(MetricError::DegenerateInput(format!(
            "{} records have both automatic and human scores",
            xs.len()
        )));
    }
    pearson(&xs, &ys)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| HarnessError::Json {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), HarnessError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("serializable");
        buf.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&buf).map_err(io_err(path))
}

/// Write `results.jsonl`, `aggregate.csv` (per model, then per model and
/// language) and `aggregate.md` into `out_dir`.
pub fn write_results(out_dir: &Path, records: &[EvalRecord]) -> Result<Vec<AggregateRow>, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_jsonl(&out_dir.join("results.jsonl"), records)?;
    let overall = aggregate(records, GroupBy::Model);
    let by_language = aggregate(records, GroupBy::ModelLanguage);
    let mut rows = overall.clone();
    rows.extend(by_language.iter().cloned());
    let csv_path = out_dir.join("aggregate.csv");
    std::fs::write(&csv_path, aggregate_csv(&rows)).map_err(io_err(&csv_path))?;
    let md_path = out_dir.join("aggregate.md");
    std::fs::write(&md_path, aggregate_markdown(&overall, &by_language)).map_err(io_err(&md_path))?;
    Ok(rows)
}
