//! Evaluation metrics: file-level exact match, BLEU, the DevOps Aware score
//! and Pearson correlation.

mod bleu;
mod devops;
mod pearson;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{bleu, MAX_ORDER, SMOOTHING_EPSILON};
pub use devops::{
    align_steps, devops_aware, devops_aware_breakdown, extract_build_test_steps, pair_score,
    AlignedPair, DevopsBreakdown, PairMethod, StepAlignment, OVERLAP_THRESHOLD,
};
pub use pearson::pearson;

use crate::lexicon::CommandLexicon;
use crate::validate::Validator;
use crate::workflow::{canonicalize, parse_workflow, Workflow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("BLEU reference is empty")]
    EmptyReference,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoreOptions {
    /// Same action at a different `@ref` scores 0 instead of 0.5.
    pub strict_uses: bool,
    /// File-level exact match on raw text instead of canonical form.
    pub raw_exact_match: bool,
}

/// Scores for one (generated, ground truth) pair. The score fields are only
/// present when the generated workflow passed the syntax gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub syntax_valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_match: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub devops_aware: Option<f64>,
}

impl ScoreReport {
    pub fn invalid() -> Self {
        ScoreReport {
            syntax_valid: false,
            exact_match: None,
            bleu: None,
            devops_aware: None,
        }
    }
}

/// 1 when both workflows canonicalize to the same text, else 0.
pub fn exact_match(generated: &Workflow, truth: &Workflow) -> f64 {
    if canonicalize(generated) == canonicalize(truth) {
        1.0
    } else {
        0.0
    }
}

/// BLEU over the whitespace tokens of the two canonical renderings.
pub fn file_bleu(generated: &Workflow, truth: &Workflow) -> Result<f64, MetricError> {
    let gen = canonicalize(generated);
    let truth = canonicalize(truth);
    let gen_tokens: Vec<&str> = gen.split_whitespace().collect();
    let truth_tokens: Vec<&str> = truth.split_whitespace().collect();
    bleu(&gen_tokens, &truth_tokens)
}

/// Score generated source text against ground-truth source text.
///
/// The ground truth must itself be syntax-valid. A generated file that fails
/// the gate yields a report with no scores.
pub fn score_texts(
    generated: &str,
    truth: &str,
    lexicon: &CommandLexicon,
    opts: &ScoreOptions,
) -> Result<ScoreReport, MetricError> {
    let validator = Validator::default();
    let truth_wf = parse_workflow(truth)
        .map_err(|e| MetricError::InvalidInput(format!("ground truth does not parse: {e}")))?;
    if !validator.workflow_is_valid(&truth_wf) {
        return Err(MetricError::InvalidInput("ground truth is not syntax-valid".into()));
    }
    let parsed = parse_workflow(generated);
    let gen_wf = match parsed {
        Ok(w) if validator.workflow_is_valid(&w) => w,
        _ => return Ok(ScoreReport::invalid()),
    };

    let exact = if opts.raw_exact_match {
        if generated == truth { 1.0 } else { 0.0 }
    } else {
        exact_match(&gen_wf, &truth_wf)
    };
    Ok(ScoreReport {
        syntax_valid: true,
        exact_match: Some(exact),
        bleu: Some(file_bleu(&gen_wf, &truth_wf)?),
        devops_aware: Some(devops_aware(&gen_wf, &truth_wf, lexicon, opts)?),
    })
}
