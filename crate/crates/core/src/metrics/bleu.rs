//! Sentence-level BLEU-4 with add-epsilon smoothing.

use std::collections::HashMap;

use super::MetricError;

/// Added to zero n-gram match counts.
pub const SMOOTHING_EPSILON: f64 = 1e-9;
pub const MAX_ORDER: usize = 4;

/// BLEU of `candidate` against a single `reference`.
///
/// Uniform weights over orders `1..=min(4, |candidate|, |reference|)`,
/// clipped n-gram precision, brevity penalty `exp(1 - r/c)` when `c <= r`.
/// A zero match count at some order is replaced by [`SMOOTHING_EPSILON`];
/// no unigram overlap at all scores exactly 0.
pub fn bleu<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Result<f64, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let cand: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let refr: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    if cand.is_empty() {
        return Ok(0.0);
    }

    let order = MAX_ORDER.min(cand.len()).min(refr.len());
    let weight = 1.0 / order as f64;
    let mut log_sum = 0.0;
    for n in 1..=order {
        let (matches, total) = clipped_matches(&cand, &refr, n);
        if n == 1 && matches == 0 {
            return Ok(0.0);
        }
        let numerator = if matches == 0 {
            SMOOTHING_EPSILON
        } else {
            matches as f64
        };
        log_sum += weight * (numerator / total as f64).ln();
    }

    let (c, r) = (cand.len() as f64, refr.len() as f64);
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    Ok(brevity * log_sum.exp())
}

fn ngram_counts<'t, 'a>(tokens: &'t [&'a str], n: usize) -> HashMap<&'t [&'a str], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// (clipped matches, candidate n-gram count) at order `n`.
fn clipped_matches(cand: &[&str], refr: &[&str], n: usize) -> (usize, usize) {
    let cand_counts = ngram_counts(cand, n);
    let ref_counts = ngram_counts(refr, n);
    let matches = cand_counts
        .iter()
        .map(|(gram, &count)| count.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    (matches, cand.len() + 1 - n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_one() {
        let t = ["run:", "npm", "test"];
        assert_eq!(bleu(&t, &t).unwrap(), 1.0);
        assert_eq!(bleu(&["a"], &["a"]).unwrap(), 1.0);
    }

    #[test]
    fn no_overlap_is_zero() {
        assert_eq!(bleu(&["x", "y"], &["a", "b", "c"]).unwrap(), 0.0);
    }

    #[test]
    fn empty_reference_rejected() {
        let empty: [&str; 0] = [];
        assert!(matches!(bleu(&["a"], &empty), Err(MetricError::EmptyReference)));
        assert_eq!(bleu(&empty, &["a"]).unwrap(), 0.0);
    }

    #[test]
    fn short_sequences_use_lower_orders() {
        // order 2: p1 = 2/2, p2 = 1/1, c = 2 < r = 3 -> BP = exp(1 - 3/2)
        let score = bleu(&["run:", "pytest"], &["run:", "pytest", "-q"]).unwrap();
        assert!((score - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn one_substitution_in_four() {
        // p1 = 3/4, p2 = 2/3, p3 = 1/2, p4 = eps/1
        let expected = (0.25 * ((0.75f64).ln() + (2.0f64 / 3.0).ln() + (0.5f64).ln() + (1e-9f64).ln())).exp();
        let score = bleu(&["a", "b", "c", "d"], &["a", "b", "c", "e"]).unwrap();
        assert!((score - expected).abs() < 1e-15);
    }
}
