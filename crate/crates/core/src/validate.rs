//! Static checks over parsed workflows, producing the syntax gate that
//! decides whether a generated workflow is scored at all.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_yaml::Value;

use crate::workflow::{Job, ParseFailure, RunsOn, Workflow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// The fixed rule registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// Source is not a parseable workflow.
    R1,
    /// Missing or empty `on`.
    R2,
    /// Missing or empty `jobs`.
    R3,
    /// Job without `runs-on`.
    R4,
    /// Job without steps (and not a reusable-workflow call).
    R5,
    /// Step with neither `uses` nor `run`.
    R6,
    /// Step with both `uses` and `run`.
    R7,
    /// Unknown top-level key.
    R8,
    /// Unknown trigger event.
    R9,
    /// Malformed action reference.
    R10,
    /// Unknown job-level key.
    R11,
    /// `runs-on` references an undefined matrix property.
    R12,
}

impl Rule {
    pub fn severity(self) -> Severity {
        match self {
            Rule::R8 | Rule::R10 | Rule::R11 => Severity::Warning,
            _ => Severity::Error,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Rule::R1 => "R1",
            Rule::R2 => "R2",
            Rule::R3 => "R3",
            Rule::R4 => "R4",
            Rule::R5 => "R5",
            Rule::R6 => "R6",
            Rule::R7 => "R7",
            Rule::R8 => "R8",
            Rule::R9 => "R9",
            Rule::R10 => "R10",
            Rule::R11 => "R11",
            Rule::R12 => "R12",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Slash-separated location; `.` is the document root.
    pub path: String,
    pub rule: Rule,
    pub message: String,
}

impl Diagnostic {
    fn new(rule: Rule, path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: rule.severity(),
            path: path.into(),
            rule,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.severity, self.path, self.rule, self.message)
    }
}

/// Events accepted under `on`. The first eight are the ones the generator
/// is expected to emit; the rest are the remaining events GitHub documents.
pub const DEFAULT_EVENTS: &[&str] = &[
    "push",
    "pull_request",
    "workflow_dispatch",
    "schedule",
    "release",
    "issue_comment",
    "workflow_call",
    "pull_request_target",
    "branch_protection_rule",
    "check_run",
    "check_suite",
    "create",
    "delete",
    "deployment",
    "deployment_status",
    "discussion",
    "discussion_comment",
    "fork",
    "gollum",
    "image_version",
    "issues",
    "label",
    "merge_group",
    "milestone",
    "page_build",
    "project",
    "project_card",
    "project_column",
    "public",
    "pull_request_review",
    "pull_request_review_comment",
    "registry_package",
    "repository_dispatch",
    "status",
    "watch",
    "workflow_run",
];

const TOP_LEVEL_KEYS: &[&str] = &[
    "name",
    "run-name",
    "on",
    "permissions",
    "env",
    "defaults",
    "concurrency",
    "jobs",
];

const JOB_KEYS: &[&str] = &[
    "name",
    "needs",
    "permissions",
    "runs-on",
    "environment",
    "concurrency",
    "outputs",
    "env",
    "defaults",
    "if",
    "steps",
    "timeout-minutes",
    "strategy",
    "continue-on-error",
    "container",
    "services",
    "uses",
    "with",
    "secrets",
];

/// Validator configuration. The event registry can be extended as GitHub
/// adds new triggers.
#[derive(Debug, Clone)]
pub struct Validator {
    events: BTreeSet<String>,
}

impl Default for Validator {
    fn default() -> Self {
        Validator {
            events: DEFAULT_EVENTS.iter().map(|e| e.to_string()).collect(),
        }
    }
}

impl Validator {
    pub fn with_events<I, S>(mut self, events: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.events.extend(events.into_iter().map(Into::into));
        self
    }

    pub fn knows_event(&self, event: &str) -> bool {
        self.events.contains(event)
    }

    pub fn validate(&self, parsed: &Result<Workflow, ParseFailure>) -> Vec<Diagnostic> {
        match parsed {
            Err(failure) => vec![Diagnostic::new(Rule::R1, ".", failure.to_string())],
            Ok(workflow) => self.validate_workflow(workflow),
        }
    }

    pub fn is_valid(&self, parsed: &Result<Workflow, ParseFailure>) -> bool {
        !self.validate(parsed).iter().any(Diagnostic::is_error)
    }

    pub fn workflow_is_valid(&self, w: &Workflow) -> bool {
        !self.validate_workflow(w).iter().any(Diagnostic::is_error)
    }

    pub fn validate_workflow(&self, w: &Workflow) -> Vec<Diagnostic> {
        let mut out = Vec::new();

        if w.triggers.is_empty() {
            out.push(Diagnostic::new(Rule::R2, ".", "workflow has no `on` triggers"));
        }
        for event in w.triggers.keys() {
            if !self.knows_event(event) {
                out.push(Diagnostic::new(
                    Rule::R9,
                    format!("on/{event}"),
                    format!("unknown trigger event `{event}`"),
                ));
            }
        }
        for key in w.raw_extra.keys() {
            if !TOP_LEVEL_KEYS.contains(&key.as_str()) {
                out.push(Diagnostic::new(
                    Rule::R8,
                    key.clone(),
                    format!("unknown top-level key `{key}`"),
                ));
            }
        }
        if w.jobs.is_empty() {
            out.push(Diagnostic::new(Rule::R3, ".", "workflow has no jobs"));
        }
        for job in w.jobs.values() {
            check_job(job, &mut out);
        }
        out
    }
}

fn check_job(job: &Job, out: &mut Vec<Diagnostic>) {
    let path = format!("jobs/{}", job.id);
    let calls_workflow = job.raw_extra.contains_key("uses");

    if job.runs_on.is_none() && !calls_workflow {
        out.push(Diagnostic::new(Rule::R4, path.clone(), "job has no `runs-on`"));
    }
    if job.steps().is_empty() && !calls_workflow {
        out.push(Diagnostic::new(Rule::R5, path.clone(), "job has no steps"));
    }
    for key in job.raw_extra.keys() {
        if !JOB_KEYS.contains(&key.as_str()) {
            out.push(Diagnostic::new(
                Rule::R11,
                format!("{path}/{key}"),
                format!("unknown job key `{key}`"),
            ));
        }
    }
    check_matrix_refs(job, &path, out);

    for (i, step) in job.steps().iter().enumerate() {
        let step_path = format!("{path}/steps/{i}");
        match (&step.uses, &step.run) {
            (None, None) => out.push(Diagnostic::new(
                Rule::R6,
                step_path.clone(),
                "step has neither `uses` nor `run`",
            )),
            (Some(_), Some(_)) => out.push(Diagnostic::new(
                Rule::R7,
                step_path.clone(),
                "step has both `uses` and `run`",
            )),
            _ => {}
        }
        if let Some(uses) = &step.uses {
            if !action_ref_pattern().is_match(uses) {
                out.push(Diagnostic::new(
                    Rule::R10,
                    format!("{step_path}/uses"),
                    format!("`{uses}` is not `owner/repo@ref`, `./path` or `docker://image`"),
                ));
            }
        }
    }
}

fn action_ref_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:[^/@\s]+/[^@\s]+@[^@\s]+|\./\S*|docker://\S+)$").expect("valid regex")
    })
}

fn matrix_ref_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$\{\{[^}]*?\bmatrix\.([A-Za-z_][A-Za-z0-9_-]*)").expect("valid regex"))
}

fn check_matrix_refs(job: &Job, path: &str, out: &mut Vec<Diagnostic>) {
    let mut texts = Vec::new();
    match &job.runs_on {
        Some(RunsOn::Label(label)) => texts.push(label.clone()),
        Some(RunsOn::Labels(labels)) => texts.extend(labels.iter().cloned()),
        Some(RunsOn::Other(value)) => collect_strings(value, &mut texts),
        None => return,
    }
    let referenced: BTreeSet<String> = texts
        .iter()
        .flat_map(|t| matrix_ref_pattern().captures_iter(t))
        .map(|c| c[1].to_string())
        .collect();
    if referenced.is_empty() {
        return;
    }
    let Some(defined) = matrix_properties(job) else {
        // dynamic matrix (expression); nothing to check against
        return;
    };
    for prop in referenced.difference(&defined) {
        out.push(Diagnostic::new(
            Rule::R12,
            format!("{path}/runs-on"),
            format!("`matrix.{prop}` is not defined in strategy.matrix"),
        ));
    }
}

/// Properties defined by `strategy.matrix`, or `None` when the matrix is
/// computed by an expression.
fn matrix_properties(job: &Job) -> Option<BTreeSet<String>> {
    let mut props = BTreeSet::new();
    let matrix = match job.strategy.as_ref().and_then(|s| s.get("matrix")) {
        None => return Some(props),
        Some(m) => m,
    };
    let Value::Mapping(map) = matrix else {
        return None;
    };
    for (key, value) in map {
        let Some(key) = key.as_str() else { continue };
        match key {
            "include" => {
                if let Value::Sequence(entries) = value {
                    for entry in entries {
                        if let Value::Mapping(m) = entry {
                            props.extend(m.keys().filter_map(|k| k.as_str()).map(str::to_string));
                        }
                    }
                } else {
                    return None;
                }
            }
            "exclude" => {}
            other => {
                props.insert(other.to_string());
            }
        }
    }
    Some(props)
}

fn collect_strings(value: &Value, out: &mut Vec<String>) {
    match value {
        Value::String(s) => out.push(s.clone()),
        Value::Sequence(items) => items.iter().for_each(|v| collect_strings(v, out)),
        Value::Mapping(map) => map.values().for_each(|v| collect_strings(v, out)),
        Value::Tagged(t) => collect_strings(&t.value, out),
        _ => {}
    }
}

/// Validate with the default event registry.
pub fn validate(parsed: &Result<Workflow, ParseFailure>) -> Vec<Diagnostic> {
    Validator::default().validate(parsed)
}

pub fn is_valid(parsed: &Result<Workflow, ParseFailure>) -> bool {
    Validator::default().is_valid(parsed)
}
