//! Sentence-level translation quality metrics over whitespace tokens.

use std::collections::HashMap;

use super::TranslateError;

/// Unicode whitespace split followed by lower-casing. Shared by every metric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            let key: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU with clipped n-gram precisions up to `max_n`, uniform weights and the
/// brevity penalty against the closest reference length. No smoothing: any
/// zero precision gives a score of 0. Orders longer than the candidate are
/// dropped from the geometric mean (effective order), so a short sentence
/// identical to its reference still scores 1.
pub fn bleu<S: AsRef<str>>(
    candidate: &[S],
    references: &[Vec<S>],
    max_n: usize,
) -> Result<f64, TranslateError> {
    if max_n == 0 {
        return Err(TranslateError::Argument("BLEU order must be at least 1".into()));
    }
    if references.is_empty() {
        return Err(TranslateError::Argument("BLEU needs at least one reference".into()));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }

    let orders = max_n.min(candidate.len());
    let mut log_precision = 0.0;
    for n in 1..=orders {
        let cand = ngram_counts(candidate, n);
        let total: usize = cand.values().sum();
        let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
        for reference in references {
            for (gram, count) in ngram_counts(reference, n) {
                let slot = max_ref.entry(gram).or_insert(0);
                *slot = (*slot).max(count);
            }
        }
        let clipped: usize = cand
            .iter()
            .map(|(gram, count)| (*count).min(max_ref.get(gram).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return Ok(0.0);
        }
        log_precision += (clipped as f64 / total as f64).ln() / orders as f64;
    }

    let c = candidate.len();
    // closest reference length, shorter one on ties
    let r = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("non-empty references");
    let brevity = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    Ok(brevity * log_precision.exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeL {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> RougeL {
    let zero = RougeL {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    if candidate.is_empty() || reference.is_empty() {
        return zero;
    }
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return zero;
    }
    let precision = lcs as f64 / candidate.len() as f64;
    let recall = lcs as f64 / reference.len() as f64;
    RougeL {
        precision,
        recall,
        f1: 2.0 * precision * recall / (precision + recall),
    }
}

/// Exact-match unigram alignment as `(candidate index, reference index)`,
/// sorted by candidate index. Each candidate token extends the previous
/// chunk when it can, otherwise takes the earliest free reference position.
fn align_exact<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Vec<(usize, usize)> {
    let mut used = vec![false; reference.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (i, tok) in candidate.iter().enumerate() {
        let tok = tok.as_ref();
        let continues = pairs
            .last()
            .filter(|&&(pi, _)| pi + 1 == i)
            .map(|&(_, pj)| pj + 1)
            .filter(|&j| j < reference.len() && !used[j] && reference[j].as_ref() == tok);
        let pick = continues.or_else(|| {
            reference
                .iter()
                .enumerate()
                .find(|(j, r)| !used[*j] && r.as_ref() == tok)
                .map(|(j, _)| j)
        });
        if let Some(j) = pick {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// METEOR restricted to the exact-match stage: harmonic mean weighted 9:1
/// towards recall, times a fragmentation penalty `0.5 (chunks / matches)^3`.
pub fn meteor_exact<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let pairs = align_exact(candidate, reference);
    let matches = pairs.len();
    if matches == 0 {
        return 0.0;
    }
    let chunks = 1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count();
    let p = matches as f64 / candidate.len() as f64;
    let r = matches as f64 / reference.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / matches as f64).powi(3);
    f_mean * (1.0 - penalty)
}
