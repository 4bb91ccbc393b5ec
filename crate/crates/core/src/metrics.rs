//! ROUGE-N, ROUGE-L and BLEU over token sequences, and corpus-level reports.

use std::collections::HashMap;
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{decode_ids, EncodedExample, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{summarize_example, DecodeConfig, ModelParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_counts(overlap: usize, cand_total: usize, ref_total: usize) -> Self {
        let precision = overlap as f64 / cand_total.max(1) as f64;
        let recall = overlap as f64 / ref_total.max(1) as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

fn ngram_total<T>(tokens: &[T], n: usize) -> usize {
    (tokens.len() + 1).saturating_sub(n)
}

fn check_order(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Argument("n-gram order must be at least 1".into()));
    }
    Ok(())
}

/// Clipped n-gram overlap `Σ_g min(count_cand(g), count_ref(g))`.
pub fn ngram_overlap<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> Result<usize> {
    check_order(n)?;
    let refs = ngram_counts(reference, n);
    Ok(ngram_counts(candidate, n)
        .into_iter()
        .map(|(g, c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum())
}

pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> Result<RougeScore> {
    let overlap = ngram_overlap(candidate, reference, n)?;
    Ok(RougeScore::from_counts(
        overlap,
        ngram_total(candidate, n),
        ngram_total(reference, n),
    ))
}

/// Longest-common-subsequence length by the standard O(|a|·|b|) table.
pub fn lcs_length<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> RougeScore {
    if candidate.is_empty() || reference.is_empty() {
        return RougeScore::default();
    }
    RougeScore::from_counts(lcs_length(candidate, reference), candidate.len(), reference.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    /// Any zero n-gram precision makes the score 0.
    None,
    /// A zero match count at some order is replaced by 1 in the numerator,
    /// and 1 is added to that order's denominator.
    #[default]
    AddOneOnZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuScore {
    pub score: f64,
    pub brevity_penalty: f64,
    /// Unsmoothed clipped precisions for orders 1..=max_n.
    pub precisions: Vec<f64>,
}

/// Clipped match count and candidate n-gram total for one order.
pub fn modified_precision_counts<T: Eq + Hash, R: AsRef<[T]>>(
    candidate: &[T],
    references: &[R],
    n: usize,
) -> Result<(usize, usize)> {
    check_order(n)?;
    let mut max_ref: HashMap<&[T], usize> = HashMap::new();
    for r in references {
        for (g, c) in ngram_counts(r.as_ref(), n) {
            let e = max_ref.entry(g).or_insert(0);
            *e = (*e).max(c);
        }
    }
    let clipped = ngram_counts(candidate, n)
        .into_iter()
        .map(|(g, c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
        .sum();
    Ok((clipped, ngram_total(candidate, n)))
}

/// Reference length closest to `c`, preferring the shorter on ties.
fn closest_ref_len<T, R: AsRef<[T]>>(c: usize, references: &[R]) -> usize {
    references
        .iter()
        .map(|r| r.as_ref().len())
        .min_by_key(|&r| (r.abs_diff(c), r))
        .unwrap_or(0)
}

pub fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c == 0 {
        0.0
    } else if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

/// Sentence BLEU with uniform weights over orders `1..=max_n`.
/// An empty candidate scores 0 with a brevity penalty of 0.
pub fn bleu<T: Eq + Hash, R: AsRef<[T]>>(
    candidate: &[T],
    references: &[R],
    max_n: usize,
    smoothing: Smoothing,
) -> Result<BleuScore> {
    check_order(max_n)?;
    if references.is_empty() {
        return Err(Error::Argument("BLEU needs at least one reference".into()));
    }
    let mut precisions = Vec::with_capacity(max_n);
    let mut log_sum = 0.0;
    let mut zero = false;
    for n in 1..=max_n {
        let (clipped, total) = modified_precision_counts(candidate, references, n)?;
        precisions.push(if total == 0 { 0.0 } else { clipped as f64 / total as f64 });
        let p = match (clipped, smoothing) {
            (0, Smoothing::AddOneOnZero) => 1.0 / (total + 1) as f64,
            (0, Smoothing::None) => {
                zero = true;
                continue;
            }
            _ => clipped as f64 / total as f64,
        };
        log_sum += p.ln() / max_n as f64;
    }
    let c = candidate.len();
    let bp = brevity_penalty(c, closest_ref_len(c, references));
    let score = if c == 0 || zero { 0.0 } else { bp * log_sum.exp() };
    Ok(BleuScore {
        score,
        brevity_penalty: bp,
        precisions,
    })
}

/// Corpus means of per-example scores, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub count: usize,
    pub bleu: f64,
    pub rouge_1_f: f64,
    pub rouge_2_f: f64,
    pub rouge_l_f: f64,
}

impl CorpusReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// BLEU on 0–1, ROUGE ×100.
    pub fn to_text(&self) -> String {
        format!(
            "count={} BLEU={:.4} ROUGE_1f={:05.2} ROUGE_2f={:05.2} ROUGE_Lf={:05.2}",
            self.count,
            self.bleu,
            self.rouge_1_f * 100.0,
            self.rouge_2_f * 100.0,
            self.rouge_l_f * 100.0
        )
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Scores `(candidate, reference)` pairs with add-one-smoothed 4-gram BLEU
/// and ROUGE-1/2/L F1, averaged.
pub fn score_corpus<S: AsRef<[String]>>(pairs: &[(S, S)]) -> Result<CorpusReport> {
    if pairs.is_empty() {
        return Err(Error::Argument("cannot score an empty corpus".into()));
    }
    let (mut b, mut r1, mut r2, mut rl) = (0.0, 0.0, 0.0, 0.0);
    for (cand, reference) in pairs {
        let (c, r) = (cand.as_ref(), reference.as_ref());
        b += bleu(c, &[r], 4, Smoothing::AddOneOnZero)?.score;
        r1 += rouge_n(c, r, 1)?.f1;
        r2 += rouge_n(c, r, 2)?.f1;
        rl += rouge_l(c, r).f1;
    }
    let n = pairs.len() as f64;
    Ok(CorpusReport {
        count: pairs.len(),
        bleu: b / n,
        rouge_1_f: r1 / n,
        rouge_2_f: r2 / n,
        rouge_l_f: rl / n,
    })
}

/// Decodes every example into surface tokens, resolving copied OOVs.
pub fn decode_corpus<T: Scalar>(
    params: &ModelParams<T>,
    examples: &[EncodedExample],
    vocab: &Vocabulary,
    config: &DecodeConfig,
) -> Result<Vec<Vec<String>>> {
    if vocab.len() != params.config.vocab_size {
        return Err(Error::Config(format!(
            "vocabulary has {} entries but model expects {}",
            vocab.len(),
            params.config.vocab_size
        )));
    }
    examples
        .iter()
        .map(|ex| {
            let ids = summarize_example(params, ex, config)?;
            Ok(decode_ids(&ids, vocab, &ex.article_oovs))
        })
        .collect()
}

pub fn evaluate_corpus<T: Scalar>(
    params: &ModelParams<T>,
    examples: &[EncodedExample],
    vocab: &Vocabulary,
    config: &DecodeConfig,
) -> Result<CorpusReport> {
    if examples.is_empty() {
        return Err(Error::Argument("empty test set".into()));
    }
    let outputs = decode_corpus(params, examples, vocab, config)?;
    let pairs: Vec<(&[String], &[String])> = outputs
        .iter()
        .zip(examples)
        .map(|(c, ex)| (c.as_slice(), ex.reference.as_slice()))
        .collect();
    score_corpus(&pairs)
}
