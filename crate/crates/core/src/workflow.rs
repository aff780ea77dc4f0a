//! Typed model of a GitHub Actions workflow file.
//!
//! Parsing is lenient about *content* (unknown keys are kept in `raw_extra`
//! so that imperfect generated files can still be scored) but strict about
//! *shape*: a job must be a mapping, `steps` must be a list, and so on.
//! Deciding which keys are acceptable is the validator's job.
//!
//! [`canonicalize`] produces a deterministic YAML rendering used for
//! file-level exact match, and [`flatten_step`] produces the token stream
//! handed to BLEU for step-level comparison.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde_yaml::{Mapping, Value};
use thiserror::Error;

/// A parsed workflow. Equality ignores mapping order (jobs, triggers, extras)
/// but not step order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Workflow {
    pub name: Option<String>,
    /// The `on` key, always in mapping form. Events without configuration map
    /// to `Value::Null`.
    pub triggers: IndexMap<String, Value>,
    pub jobs: IndexMap<String, Job>,
    pub raw_extra: IndexMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunsOn {
    Label(String),
    Labels(Vec<String>),
    /// Group/labels mappings and anything else we do not interpret.
    Other(Value),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Job {
    pub id: String,
    pub name: Option<String>,
    pub runs_on: Option<RunsOn>,
    pub strategy: Option<Value>,
    /// `None` when the job has no `steps` key at all.
    pub steps: Option<Vec<Step>>,
    pub raw_extra: IndexMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Step {
    pub name: Option<String>,
    pub uses: Option<String>,
    pub run: Option<String>,
    pub with_args: IndexMap<String, Value>,
    pub raw_extra: IndexMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error("invalid YAML at line {line}, column {column}: {message}")]
    Yaml {
        message: String,
        line: usize,
        column: usize,
    },
    #[error("not a workflow (at `{path}`): {reason}")]
    NotAWorkflow { path: String, reason: String },
}

impl ParseFailure {
    fn shape(path: impl Into<String>, reason: impl Into<String>) -> Self {
        ParseFailure::NotAWorkflow {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

impl Workflow {
    /// Steps of every job, in job order then step order.
    pub fn all_steps(&self) -> impl Iterator<Item = &Step> {
        self.jobs
            .values()
            .flat_map(|job| job.steps.iter().flatten())
    }
}

impl Job {
    pub fn steps(&self) -> &[Step] {
        self.steps.as_deref().unwrap_or(&[])
    }

    /// Runner labels when they are plain strings.
    pub fn runner_labels(&self) -> Vec<&str> {
        match &self.runs_on {
            Some(RunsOn::Label(label)) => vec![label.as_str()],
            Some(RunsOn::Labels(labels)) => labels.iter().map(String::as_str).collect(),
            _ => Vec::new(),
        }
    }
}

impl Step {
    pub fn from_run(cmd: &str) -> Self {
        Step {
            run: Some(cmd.to_string()),
            ..Step::default()
        }
    }

    pub fn from_uses(action: &str) -> Self {
        Step {
            uses: Some(action.to_string()),
            ..Step::default()
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    /// The action reference without its `@ref` suffix.
    pub fn action_name(&self) -> Option<&str> {
        self.uses.as_deref().map(strip_action_ref)
    }
}

pub fn strip_action_ref(uses: &str) -> &str {
    match uses.rfind('@') {
        Some(at) => &uses[..at],
        None => uses,
    }
}

/// Parse workflow source text.
///
/// Anchors and aliases are resolved and `<<` merge keys expanded before the
/// typed model is built. Multi-line strings have trailing whitespace removed
/// from every line.
pub fn parse_workflow(source: &str) -> Result<Workflow, ParseFailure> {
    let mut doc: Value = serde_yaml::from_str(source).map_err(yaml_failure)?;
    doc.apply_merge().map_err(yaml_failure)?;
    normalize_value(&mut doc);

    let Value::Mapping(top) = doc else {
        return Err(ParseFailure::shape(".", "top level is not a mapping"));
    };

    let mut workflow = Workflow::default();
    let mut saw_on = false;
    let mut saw_jobs = false;
    for (key, value) in top {
        let key = key_string(&key, ".")?;
        match key.as_str() {
            "name" => workflow.name = Some(scalar_string(&value, "name")?),
            "on" => {
                saw_on = true;
                workflow.triggers = parse_triggers(value)?;
            }
            "jobs" => {
                saw_jobs = true;
                workflow.jobs = parse_jobs(value)?;
            }
            _ => {
                workflow.raw_extra.insert(key, value);
            }
        }
    }
    if !saw_on && !saw_jobs {
        return Err(ParseFailure::shape(".", "neither `on` nor `jobs` is present"));
    }
    Ok(workflow)
}

fn yaml_failure(err: serde_yaml::Error) -> ParseFailure {
    let (line, column) = err
        .location()
        .map(|loc| (loc.line(), loc.column()))
        .unwrap_or((0, 0));
    ParseFailure::Yaml {
        message: err.to_string(),
        line,
        column,
    }
}

fn parse_triggers(value: Value) -> Result<IndexMap<String, Value>, ParseFailure> {
    let mut triggers = IndexMap::new();
    match value {
        Value::Null => {}
        Value::String(event) => {
            triggers.insert(event, Value::Null);
        }
        Value::Sequence(events) => {
            for (i, event) in events.iter().enumerate() {
                let event = scalar_string(event, &format!("on/{i}"))?;
                triggers.insert(event, Value::Null);
            }
        }
        Value::Mapping(map) => {
            for (event, config) in map {
                triggers.insert(key_string(&event, "on")?, config);
            }
        }
        _ => return Err(ParseFailure::shape("on", "must be an event name, list or mapping")),
    }
    if triggers.keys().any(|event| event.trim().is_empty()) {
        return Err(ParseFailure::shape("on", "empty event name"));
    }
    Ok(triggers)
}

fn parse_jobs(value: Value) -> Result<IndexMap<String, Job>, ParseFailure> {
    let map = match value {
        Value::Null => return Ok(IndexMap::new()),
        Value::Mapping(map) => map,
        _ => return Err(ParseFailure::shape("jobs", "must be a mapping of job ids")),
    };
    let mut jobs = IndexMap::new();
    for (id, body) in map {
        let id = key_string(&id, "jobs")?;
        let job = parse_job(&id, body)?;
        jobs.insert(id, job);
    }
    Ok(jobs)
}

fn parse_job(id: &str, body: Value) -> Result<Job, ParseFailure> {
    let path = format!("jobs/{id}");
    let Value::Mapping(map) = body else {
        return Err(ParseFailure::shape(path, "job must be a mapping"));
    };
    let mut job = Job {
        id: id.to_string(),
        ..Job::default()
    };
    for (key, value) in map {
        let key = key_string(&key, &path)?;
        match key.as_str() {
            "name" => job.name = Some(scalar_string(&value, &format!("{path}/name"))?),
            "runs-on" => job.runs_on = Some(parse_runs_on(value)),
            "strategy" => job.strategy = Some(value),
            "steps" => job.steps = Some(parse_steps(&path, value)?),
            _ => {
                job.raw_extra.insert(key, value);
            }
        }
    }
    Ok(job)
}

fn parse_runs_on(value: Value) -> RunsOn {
    match value {
        Value::String(label) => RunsOn::Label(label),
        Value::Sequence(items) if items.iter().all(Value::is_string) => RunsOn::Labels(
            items
                .into_iter()
                .filter_map(|v| v.as_str().map(str::to_string))
                .collect(),
        ),
        other => RunsOn::Other(other),
    }
}

fn parse_steps(job_path: &str, value: Value) -> Result<Vec<Step>, ParseFailure> {
    let items = match value {
        Value::Null => return Ok(Vec::new()),
        Value::Sequence(items) => items,
        _ => {
            return Err(ParseFailure::shape(
                format!("{job_path}/steps"),
                "steps must be a list",
            ))
        }
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| parse_step(&format!("{job_path}/steps/{i}"), item))
        .collect()
}

fn parse_step(path: &str, value: Value) -> Result<Step, ParseFailure> {
    let Value::Mapping(map) = value else {
        return Err(ParseFailure::shape(path, "step must be a mapping"));
    };
    let mut step = Step::default();
    for (key, value) in map {
        let key = key_string(&key, path)?;
        match key.as_str() {
            "name" => step.name = Some(scalar_string(&value, &format!("{path}/name"))?),
            "uses" => step.uses = Some(scalar_string(&value, &format!("{path}/uses"))?),
            "run" => step.run = Some(scalar_string(&value, &format!("{path}/run"))?),
            "with" => match value {
                Value::Null => {}
                Value::Mapping(args) => {
                    for (arg, v) in args {
                        step.with_args.insert(key_string(&arg, path)?, v);
                    }
                }
                _ => {
                    return Err(ParseFailure::shape(
                        format!("{path}/with"),
                        "`with` must be a mapping",
                    ))
                }
            },
            _ => {
                step.raw_extra.insert(key, value);
            }
        }
    }
    Ok(step)
}

fn key_string(key: &Value, path: &str) -> Result<String, ParseFailure> {
    scalar_text(key).ok_or_else(|| ParseFailure::shape(path, "mapping key is not a scalar"))
}

fn scalar_string(value: &Value, path: &str) -> Result<String, ParseFailure> {
    scalar_text(value).ok_or_else(|| ParseFailure::shape(path, "expected a scalar value"))
}

/// Text form of a scalar; `None` for collections and null.
pub(crate) fn scalar_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Tagged(tagged) => scalar_text(&tagged.value),
        Value::Null | Value::Sequence(_) | Value::Mapping(_) => None,
    }
}

fn normalize_value(value: &mut Value) {
    match value {
        Value::String(s) if s.contains('\n') => *s = strip_line_trailing_ws(s),
        Value::Sequence(items) => items.iter_mut().for_each(normalize_value),
        Value::Mapping(map) => map.values_mut().for_each(normalize_value),
        Value::Tagged(tagged) => normalize_value(&mut tagged.value),
        _ => {}
    }
}

fn strip_line_trailing_ws(s: &str) -> String {
    s.split('\n')
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n")
}

// ---------------------------------------------------------------------------
// Canonical serialization

const INDENT: usize = 2;

/// Deterministic YAML rendering: `name`, `on`, then remaining top-level keys
/// alphabetically; inside a job `name`, `runs-on`, `strategy`, `steps`, then
/// the rest alphabetically; inside a step `name`, `uses`, `run`, `with`, then
/// the rest. Opaque mappings are emitted with sorted keys.
pub fn canonicalize(w: &Workflow) -> String {
    let mut out = Vec::new();
    if let Some(name) = &w.name {
        emit_entry(&mut out, "name", &Value::String(name.clone()), 0);
    }
    if !w.triggers.is_empty() {
        let on = Value::Mapping(to_mapping(&w.triggers));
        emit_entry(&mut out, "on", &on, 0);
    }

    let mut rest: Vec<&str> = w.raw_extra.keys().map(String::as_str).collect();
    rest.push("jobs");
    rest.sort_unstable();
    for key in rest {
        if key == "jobs" {
            emit_jobs(&mut out, w);
        } else {
            emit_entry(&mut out, key, &w.raw_extra[key], 0);
        }
    }

    let mut text = out.join("\n");
    text.push('\n');
    text
}

fn emit_jobs(out: &mut Vec<String>, w: &Workflow) {
    if w.jobs.is_empty() {
        out.push("jobs: {}".to_string());
        return;
    }
    out.push("jobs:".to_string());
    let mut ids: Vec<&String> = w.jobs.keys().collect();
    ids.sort();
    for id in ids {
        let job = &w.jobs[id];
        out.push(format!("{}{}:", pad(INDENT), emit_key(id)));
        let indent = INDENT * 2;
        if let Some(name) = &job.name {
            emit_entry(out, "name", &Value::String(name.clone()), indent);
        }
        if let Some(runs_on) = &job.runs_on {
            emit_entry(out, "runs-on", &runs_on_value(runs_on), indent);
        }
        if let Some(strategy) = &job.strategy {
            emit_entry(out, "strategy", strategy, indent);
        }
        if let Some(steps) = &job.steps {
            if steps.is_empty() {
                out.push(format!("{}steps: []", pad(indent)));
            } else {
                out.push(format!("{}steps:", pad(indent)));
                for step in steps {
                    emit_step(out, step, indent + INDENT);
                }
            }
        }
        emit_sorted_extra(out, &job.raw_extra, indent);
        if job_is_empty(job) {
            // keep the job id parseable as an (empty) mapping
            let last = out.pop().unwrap_or_default();
            out.push(format!("{last} {{}}"));
        }
    }
}

fn job_is_empty(job: &Job) -> bool {
    job.name.is_none()
        && job.runs_on.is_none()
        && job.strategy.is_none()
        && job.steps.is_none()
        && job.raw_extra.is_empty()
}

fn emit_step(out: &mut Vec<String>, step: &Step, indent: usize) {
    let mut body = Vec::new();
    let inner = indent + INDENT;
    if let Some(name) = &step.name {
        emit_entry(&mut body, "name", &Value::String(name.clone()), inner);
    }
    if let Some(uses) = &step.uses {
        emit_entry(&mut body, "uses", &Value::String(uses.clone()), inner);
    }
    if let Some(run) = &step.run {
        emit_entry(&mut body, "run", &Value::String(run.clone()), inner);
    }
    if !step.with_args.is_empty() {
        emit_entry(&mut body, "with", &Value::Mapping(to_mapping(&step.with_args)), inner);
    }
    emit_sorted_extra(&mut body, &step.raw_extra, inner);
    attach_to_dash(out, body, indent, "{}");
}

fn emit_sorted_extra(out: &mut Vec<String>, extra: &IndexMap<String, Value>, indent: usize) {
    let mut keys: Vec<&String> = extra.keys().collect();
    keys.sort();
    for key in keys {
        emit_entry(out, key, &extra[key], indent);
    }
}

/// Put the first line of `body` (indented at `indent + 2`) after a `- `.
fn attach_to_dash(out: &mut Vec<String>, body: Vec<String>, indent: usize, empty: &str) {
    let mut lines = body.into_iter();
    match lines.next() {
        Some(first) => {
            out.push(format!("{}- {}", pad(indent), &first[indent + INDENT..]));
            out.extend(lines);
        }
        None => out.push(format!("{}- {}", pad(indent), empty)),
    }
}

fn runs_on_value(runs_on: &RunsOn) -> Value {
    match runs_on {
        RunsOn::Label(label) => Value::String(label.clone()),
        RunsOn::Labels(labels) => {
            Value::Sequence(labels.iter().cloned().map(Value::String).collect())
        }
        RunsOn::Other(value) => value.clone(),
    }
}

fn to_mapping(map: &IndexMap<String, Value>) -> Mapping {
    map.iter()
        .map(|(k, v)| (Value::String(k.clone()), v.clone()))
        .collect()
}

fn pad(n: usize) -> String {
    " ".repeat(n)
}

fn emit_entry(out: &mut Vec<String>, key: &str, value: &Value, indent: usize) {
    let head = format!("{}{}:", pad(indent), emit_key(key));
    match value {
        Value::Null => out.push(head),
        Value::Tagged(tagged) => emit_entry(out, key, &tagged.value, indent),
        Value::Mapping(map) if map.is_empty() => out.push(format!("{head} {{}}")),
        Value::Sequence(items) if items.is_empty() => out.push(format!("{head} []")),
        Value::Mapping(map) => {
            out.push(head);
            for (k, v) in sorted_entries(map) {
                emit_entry(out, &k, v, indent + INDENT);
            }
        }
        Value::Sequence(items) => {
            out.push(head);
            for item in items {
                emit_item(out, item, indent + INDENT);
            }
        }
        scalar => match block_literal(scalar) {
            Some((indicator, lines)) => {
                out.push(format!("{head} {indicator}"));
                push_block(out, lines, indent + INDENT);
            }
            None => out.push(format!("{head} {}", emit_scalar(scalar))),
        },
    }
}

fn emit_item(out: &mut Vec<String>, item: &Value, indent: usize) {
    match item {
        Value::Tagged(tagged) => emit_item(out, &tagged.value, indent),
        Value::Mapping(map) if !map.is_empty() => {
            let mut body = Vec::new();
            for (k, v) in sorted_entries(map) {
                emit_entry(&mut body, &k, v, indent + INDENT);
            }
            attach_to_dash(out, body, indent, "{}");
        }
        Value::Sequence(items) if !items.is_empty() => {
            let mut body = Vec::new();
            for inner in items {
                emit_item(&mut body, inner, indent + INDENT);
            }
            attach_to_dash(out, body, indent, "[]");
        }
        Value::Mapping(_) => out.push(format!("{}- {{}}", pad(indent))),
        Value::Sequence(_) => out.push(format!("{}- []", pad(indent))),
        Value::Null => out.push(format!("{}- null", pad(indent))),
        scalar => match block_literal(scalar) {
            Some((indicator, lines)) => {
                out.push(format!("{}- {indicator}", pad(indent)));
                push_block(out, lines, indent + INDENT);
            }
            None => out.push(format!("{}- {}", pad(indent), emit_scalar(scalar))),
        },
    }
}

fn push_block(out: &mut Vec<String>, lines: Vec<&str>, indent: usize) {
    for line in lines {
        if line.is_empty() {
            out.push(String::new());
        } else {
            out.push(format!("{}{line}", pad(indent)));
        }
    }
}

/// Sort mapping entries by the text of their keys.
fn sorted_entries(map: &Mapping) -> Vec<(String, &Value)> {
    let mut entries: Vec<(String, &Value)> = map
        .iter()
        .map(|(k, v)| (scalar_text(k).unwrap_or_else(|| emit_scalar(k)), v))
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

/// Literal block form for multi-line strings, when one is representable.
fn block_literal(value: &Value) -> Option<(&'static str, Vec<&str>)> {
    let Value::String(s) = value else { return None };
    if !s.contains('\n') || s.chars().any(|c| awkward_char(c) && c != '\n') {
        return None;
    }
    let body = s.trim_end_matches('\n');
    let trailing = s.len() - body.len();
    let first_content = body.split('\n').find(|line| !line.is_empty())?;
    if first_content.starts_with(' ') || body.split('\n').any(|l| l.ends_with(' ')) {
        return None;
    }
    let indicator = match trailing {
        0 => "|-",
        1 => "|",
        _ => "|+",
    };
    let mut lines: Vec<&str> = body.split('\n').collect();
    if trailing > 1 {
        lines.extend(std::iter::repeat("").take(trailing - 1));
    }
    Some((indicator, lines))
}

/// Characters a YAML 1.1 reader treats as line breaks or strips, besides controls.
fn awkward_char(c: char) -> bool {
    c.is_control() || matches!(c, '\u{2028}' | '\u{2029}' | '\u{feff}')
}

fn double_quoted(s: &str) -> String {
    let json = serde_json::to_string(s).expect("string serialization");
    json.replace('\u{2028}', "\\u2028")
        .replace('\u{2029}', "\\u2029")
        .replace('\u{feff}', "\\ufeff")
}

fn emit_key(key: &str) -> String {
    emit_scalar(&Value::String(key.to_string()))
}

fn emit_scalar(value: &Value) -> String {
    match value {
        Value::String(s) => {
            if plain_safe(s) {
                s.clone()
            } else {
                double_quoted(s)
            }
        }
        Value::Bool(b) => b.to_string(),
        Value::Null => "null".to_string(),
        Value::Number(_) => serde_yaml::to_string(value)
            .map(|s| s.trim_end().to_string())
            .unwrap_or_default(),
        Value::Tagged(tagged) => emit_scalar(&tagged.value),
        other => serde_json::to_string(other).unwrap_or_default(),
    }
}

/// A string may be emitted unquoted iff reading it back yields the same string.
fn plain_safe(s: &str) -> bool {
    if s.is_empty()
        || s.contains('\n')
        || s.trim() != s
        || s.chars().any(awkward_char)
        || s.contains(": ")
        || s.ends_with(':')
        || s.contains(" #")
    {
        return false;
    }
    matches!(serde_yaml::from_str::<Value>(s), Ok(Value::String(back)) if back == s)
}

// ---------------------------------------------------------------------------
// Step tokenization

/// Tokens of a step's scoring-relevant fields: `name`, `uses`, `run`, then
/// each `with` argument sorted by key, rendered as `key: value` lines and
/// split on whitespace.
pub fn flatten_step(step: &Step) -> Vec<String> {
    let mut text = String::new();
    for (key, value) in [("name", &step.name), ("uses", &step.uses), ("run", &step.run)] {
        if let Some(value) = value {
            let _ = writeln!(text, "{key}: {value}");
        }
    }
    let mut args: Vec<(&String, &Value)> = step.with_args.iter().collect();
    args.sort_by(|a, b| a.0.cmp(b.0));
    for (key, value) in args {
        let rendered = scalar_text(value).unwrap_or_else(|| emit_scalar(value));
        let _ = writeln!(text, "{key}: {rendered}");
    }
    text.split_whitespace().map(str::to_string).collect()
}
