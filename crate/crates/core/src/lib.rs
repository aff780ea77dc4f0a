//! Generation, validation and scoring of GitHub Actions build/test
//! workflows.

pub mod context;
pub mod github;
pub mod harness;
pub mod language;
pub mod lexicon;
pub mod llm;
pub mod metrics;
pub mod prompt;
pub mod validate;
pub mod workflow;

pub use language::Language;
pub use lexicon::{classify_workflow_purpose, CommandLexicon, Purpose};
pub use metrics::{score_texts, MetricError, ScoreOptions, ScoreReport};
pub use validate::{is_valid, validate, Diagnostic, Rule, Severity, Validator};
pub use workflow::{canonicalize, flatten_step, parse_workflow, Job, ParseFailure, RunsOn, Step, Workflow};
