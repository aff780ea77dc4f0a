//! DevOps Aware score: align the ground truth's build/test steps with the
//! generated steps, score each pair by exact match (`uses`/`run`) or BLEU,
//! and average over the ground-truth steps.

use std::collections::BTreeSet;

use serde::Serialize;

use super::bleu::bleu;
use super::{MetricError, ScoreOptions};
use crate::lexicon::CommandLexicon;
use crate::validate::Validator;
use crate::workflow::{flatten_step, Step, Workflow};

/// Minimum unigram Jaccard overlap for the text-similarity pairing phase.
pub const OVERLAP_THRESHOLD: f64 = 0.1;

/// Steps of every build/test job, in source order. Jobs whose purpose is
/// something else (deploy, release, docs) are skipped.
pub fn extract_build_test_steps(w: &Workflow, lexicon: &CommandLexicon) -> Vec<Step> {
    w.jobs
        .values()
        .filter(|job| lexicon.is_build_test_job(job))
        .flat_map(|job| job.steps().iter().cloned())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PairMethod {
    EmUses,
    EmRun,
    BleuText,
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlignedPair {
    pub truth: usize,
    pub generated: Option<usize>,
    pub method: PairMethod,
}

/// One entry per truth step, in truth order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepAlignment {
    pub pairs: Vec<AlignedPair>,
}

/// Greedy three-phase pairing of truth steps with generated steps:
///
/// 1. same action (`uses` without `@ref`),
/// 2. same normalized `name`,
/// 3. highest unigram Jaccard overlap of the flattened steps (at least
///    [`OVERLAP_THRESHOLD`]).
///
/// Truth steps are visited in order within each phase and every generated
/// step is used at most once. Among equally good candidates an identical
/// step wins, then the smallest generated index.
pub fn align_steps(truth: &[Step], generated: &[Step]) -> StepAlignment {
    let mut assigned: Vec<Option<usize>> = vec![None; truth.len()];
    let mut taken = vec![false; generated.len()];

    // phase 1: action name
    for (ti, t) in truth.iter().enumerate() {
        let Some(action) = t.action_name() else { continue };
        let best = (0..generated.len())
            .filter(|&gi| !taken[gi] && generated[gi].action_name() == Some(action))
            .min_by_key(|&gi| {
                let g = &generated[gi];
                (g != t, g.uses != t.uses, gi)
            });
        if let Some(gi) = best {
            taken[gi] = true;
            assigned[ti] = Some(gi);
        }
    }

    // phase 2: step name
    for (ti, t) in truth.iter().enumerate() {
        if assigned[ti].is_some() {
            continue;
        }
        let Some(name) = t.name.as_deref().map(normalize_name) else { continue };
        let best = (0..generated.len())
            .filter(|&gi| {
                !taken[gi] && generated[gi].name.as_deref().map(normalize_name).as_deref() == Some(&name)
            })
            .min_by_key(|&gi| (&generated[gi] != t, gi));
        if let Some(gi) = best {
            taken[gi] = true;
            assigned[ti] = Some(gi);
        }
    }

    // phase 3: token overlap
    let gen_tokens: Vec<BTreeSet<String>> = generated
        .iter()
        .map(|g| flatten_step(g).into_iter().collect())
        .collect();
    for (ti, t) in truth.iter().enumerate() {
        if assigned[ti].is_some() {
            continue;
        }
        let truth_tokens: BTreeSet<String> = flatten_step(t).into_iter().collect();
        let mut best: Option<(f64, bool, usize)> = None;
        for gi in (0..generated.len()).filter(|&gi| !taken[gi]) {
            let overlap = jaccard(&truth_tokens, &gen_tokens[gi]);
            if overlap < OVERLAP_THRESHOLD {
                continue;
            }
            let identical = &generated[gi] == t;
            let better = match best {
                None => true,
                Some((score, ident, _)) => overlap > score || (overlap == score && identical && !ident),
            };
            if better {
                best = Some((overlap, identical, gi));
            }
        }
        if let Some((_, _, gi)) = best {
            taken[gi] = true;
            assigned[ti] = Some(gi);
        }
    }

    let pairs = assigned
        .into_iter()
        .enumerate()
        .map(|(ti, gi)| AlignedPair {
            truth: ti,
            generated: gi,
            method: match gi {
                None => PairMethod::Unmatched,
                Some(gi) => pair_method(&truth[ti], &generated[gi]),
            },
        })
        .collect();
    StepAlignment { pairs }
}

fn pair_method(truth: &Step, generated: &Step) -> PairMethod {
    if truth.uses.is_some() && generated.uses.is_some() {
        PairMethod::EmUses
    } else if truth.run.is_some() && generated.run.is_some() {
        PairMethod::EmRun
    } else {
        PairMethod::BleuText
    }
}

fn normalize_name(name: &str) -> String {
    name.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Score of one aligned pair.
pub fn pair_score(truth: &Step, generated: Option<&Step>, method: PairMethod, opts: &ScoreOptions) -> f64 {
    let Some(generated) = generated else { return 0.0 };
    match method {
        PairMethod::Unmatched => 0.0,
        PairMethod::EmUses => {
            if generated.uses == truth.uses {
                1.0
            } else if !opts.strict_uses && generated.action_name() == truth.action_name() {
                0.5
            } else {
                0.0
            }
        }
        PairMethod::EmRun => {
            let truth_run = truth.run.as_deref().unwrap_or_default();
            let gen_run = generated.run.as_deref().unwrap_or_default();
            let truth_tokens: Vec<&str> = truth_run.split_whitespace().collect();
            let gen_tokens: Vec<&str> = gen_run.split_whitespace().collect();
            if truth_tokens == gen_tokens {
                1.0
            } else {
                bleu(&gen_tokens, &truth_tokens).unwrap_or(0.0)
            }
        }
        PairMethod::BleuText => bleu(&flatten_step(generated), &flatten_step(truth)).unwrap_or(0.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DevopsBreakdown {
    pub truth_steps: Vec<Step>,
    pub alignment: StepAlignment,
    pub pair_scores: Vec<f64>,
    pub score: f64,
}

/// DevOps Aware score of `generated` against `truth`, in `[0, 1]`.
pub fn devops_aware(
    generated: &Workflow,
    truth: &Workflow,
    lexicon: &CommandLexicon,
    opts: &ScoreOptions,
) -> Result<f64, MetricError> {
    devops_aware_breakdown(generated, truth, lexicon, opts).map(|b| b.score)
}

pub fn devops_aware_breakdown(
    generated: &Workflow,
    truth: &Workflow,
    lexicon: &CommandLexicon,
    opts: &ScoreOptions,
) -> Result<DevopsBreakdown, MetricError> {
    let validator = Validator::default();
    if !validator.workflow_is_valid(truth) {
        return Err(MetricError::InvalidInput("ground-truth workflow is not syntax-valid".into()));
    }
    if !validator.workflow_is_valid(generated) {
        return Err(MetricError::InvalidInput("generated workflow is not syntax-valid".into()));
    }

    let truth_steps = extract_build_test_steps(truth, lexicon);
    let gen_steps: Vec<Step> = generated.all_steps().cloned().collect();
    let alignment = align_steps(&truth_steps, &gen_steps);

    if truth_steps.is_empty() {
        let score = if extract_build_test_steps(generated, lexicon).is_empty() {
            1.0
        } else {
            0.0
        };
        return Ok(DevopsBreakdown {
            truth_steps,
            alignment,
            pair_scores: Vec::new(),
            score,
        });
    }

    let pair_scores: Vec<f64> = alignment
        .pairs
        .iter()
        .map(|p| {
            pair_score(
                &truth_steps[p.truth],
                p.generated.map(|gi| &gen_steps[gi]),
                p.method,
                opts,
            )
        })
        .collect();
    let score = pair_scores.iter().sum::<f64>() / pair_scores.len() as f64;
    Ok(DevopsBreakdown {
        truth_steps,
        alignment,
        pair_scores,
        score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::parse_workflow;

    fn wf(src: &str) -> Workflow {
        parse_workflow(src).unwrap()
    }

    #[test]
    fn single_build_job_extracts_everything() {
        let w = wf("on: push\njobs:\n  build:\n    runs-on: x\n    steps:\n      - uses: actions/checkout@v4\n      - run: echo hi\n");
        assert_eq!(extract_build_test_steps(&w, &CommandLexicon::builtin()).len(), 2);
    }

    #[test]
    fn deploy_job_is_overlooked() {
        let w = wf("on: push\njobs:\n  deploy:\n    runs-on: x\n    steps:\n      - run: aws s3 sync . s3://b\n  unit-tests:\n    runs-on: x\n    steps:\n      - run: pytest\n");
        let steps = extract_build_test_steps(&w, &CommandLexicon::builtin());
        assert_eq!(steps, vec![Step::from_run("pytest")]);
    }

    #[test]
    fn identity_alignment() {
        let steps = vec![
            Step::from_uses("actions/checkout@v4"),
            Step::from_run("make").named("Build"),
            Step::from_run("make check"),
        ];
        let a = align_steps(&steps, &steps);
        let got: Vec<_> = a.pairs.iter().map(|p| (p.generated, p.method)).collect();
        assert_eq!(
            got,
            vec![
                (Some(0), PairMethod::EmUses),
                (Some(1), PairMethod::EmRun),
                (Some(2), PairMethod::EmRun)
            ]
        );
    }

    #[test]
    fn swapped_steps_pair_by_action_then_overlap() {
        let truth = vec![Step::from_uses("actions/setup-python@v4"), Step::from_run("pytest")];
        let gen = vec![Step::from_run("pytest"), Step::from_uses("actions/setup-python@v5")];
        let a = align_steps(&truth, &gen);
        assert_eq!(
            a.pairs,
            vec![
                AlignedPair { truth: 0, generated: Some(1), method: PairMethod::EmUses },
                AlignedPair { truth: 1, generated: Some(0), method: PairMethod::EmRun },
            ]
        );
    }

    #[test]
    fn unmatched_truth_step() {
        let truth = vec![Step::from_run("dotnet test")];
        let gen = vec![Step::from_uses("actions/checkout@v4")];
        let a = align_steps(&truth, &gen);
        assert_eq!(
            a.pairs,
            vec![AlignedPair { truth: 0, generated: None, method: PairMethod::Unmatched }]
        );
    }

    #[test]
    fn strict_mode_drops_partial_credit() {
        let t = Step::from_uses("actions/setup-node@v3");
        let g = Step::from_uses("actions/setup-node@v4");
        assert_eq!(pair_score(&t, Some(&g), PairMethod::EmUses, &ScoreOptions::default()), 0.5);
        let strict = ScoreOptions { strict_uses: true, ..ScoreOptions::default() };
        assert_eq!(pair_score(&t, Some(&g), PairMethod::EmUses, &strict), 0.0);
    }

    #[test]
    fn whitespace_normalized_run_match() {
        let t = Step::from_run("npm   ci\nnpm test\n");
        let g = Step::from_run("npm ci npm test");
        assert_eq!(pair_score(&t, Some(&g), PairMethod::EmRun, &ScoreOptions::default()), 1.0);
    }

    #[test]
    fn invalid_input_rejected() {
        let good = wf("on: push\njobs:\n  build:\n    runs-on: x\n    steps:\n      - run: make\n");
        let bad = wf("on: push\njobs:\n  build:\n    steps:\n      - run: make\n");
        let lex = CommandLexicon::builtin();
        let opts = ScoreOptions::default();
        assert!(matches!(devops_aware(&bad, &good, &lex, &opts), Err(MetricError::InvalidInput(_))));
        assert!(matches!(devops_aware(&good, &bad, &lex, &opts), Err(MetricError::InvalidInput(_))));
    }

    #[test]
    fn empty_truth_degenerate_case() {
        let lex = CommandLexicon::builtin();
        let opts = ScoreOptions::default();
        let deploy = wf("on: push\njobs:\n  deploy:\n    runs-on: x\n    steps:\n      - run: aws s3 sync . s3://b\n");
        let build = wf("on: push\njobs:\n  build:\n    runs-on: x\n    steps:\n      - run: make\n");
        assert_eq!(devops_aware(&deploy, &deploy, &lex, &opts).unwrap(), 1.0);
        assert_eq!(devops_aware(&build, &deploy, &lex, &opts).unwrap(), 0.0);
    }
}
