use std::collections::HashMap;

use amsum::metrics::{
    bleu, brevity_penalty, lcs_length, modified_precision_counts, ngram_overlap, rouge_l, rouge_n, score_corpus,
    Smoothing,
};
use proptest::collection::vec;
use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig, Strategy};

fn seq(max: usize) -> impl Strategy<Value = Vec<u8>> {
    vec(0u8..4, 0..=max)
}

fn grams(s: &[u8], n: usize) -> Vec<&[u8]> {
    if s.len() < n {
        Vec::new()
    } else {
        s.windows(n).collect()
    }
}

/// Multiset intersection by repeated removal.
fn oracle_overlap(c: &[u8], r: &[u8], n: usize) -> usize {
    let mut pool = grams(r, n);
    let mut hits = 0;
    for g in grams(c, n) {
        if let Some(i) = pool.iter().position(|p| *p == g) {
            pool.swap_remove(i);
            hits += 1;
        }
    }
    hits
}

/// Longest common subsequence by enumerating every subsequence of `a`.
fn oracle_lcs(a: &[u8], b: &[u8]) -> usize {
    let is_subseq = |s: &[u8]| {
        let mut it = b.iter();
        s.iter().all(|x| it.any(|y| y == x))
    };
    (0u32..1 << a.len())
        .filter_map(|mask| {
            let s: Vec<u8> = a.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &x)| x).collect();
            is_subseq(&s).then_some(s.len())
        })
        .max()
        .unwrap_or(0)
}

fn oracle_clipped(c: &[u8], refs: &[Vec<u8>], n: usize) -> usize {
    let mut counts: HashMap<&[u8], usize> = HashMap::new();
    for g in grams(c, n) {
        *counts.entry(g).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(g, k)| {
            let best = refs.iter().map(|r| grams(r, n).iter().filter(|x| **x == g).count()).max().unwrap_or(0);
            k.min(best)
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn overlap_matches_oracle(c in seq(20), r in seq(20), n in 1usize..5) {
        prop_assert_eq!(ngram_overlap(&c, &r, n).unwrap(), oracle_overlap(&c, &r, n));
    }

    #[test]
    fn lcs_matches_oracle(a in seq(10), b in seq(12)) {
        prop_assert_eq!(lcs_length(&a, &b), oracle_lcs(&a, &b));
    }

    #[test]
    fn clipped_counts_match_oracle(c in seq(15), refs in vec(seq(15), 1..4), n in 1usize..5) {
        let (clipped, total) = modified_precision_counts(&c, &refs, n).unwrap();
        prop_assert_eq!(clipped, oracle_clipped(&c, &refs, n));
        prop_assert_eq!(total, grams(&c, n).len());
    }

    #[test]
    fn rouge_precision_and_recall_swap(a in seq(15), b in seq(15), n in 1usize..4) {
        let ab = rouge_n(&a, &b, n).unwrap();
        let ba = rouge_n(&b, &a, n).unwrap();
        prop_assert_eq!(ab.precision, ba.recall);
        prop_assert_eq!(ab.recall, ba.precision);
        prop_assert_eq!(ab.f1, ba.f1);
        let lab = rouge_l(&a, &b);
        let lba = rouge_l(&b, &a);
        prop_assert_eq!(lab.precision, lba.recall);
        prop_assert_eq!(lab.f1, lba.f1);
    }

    #[test]
    fn scores_lie_in_unit_interval(a in seq(15), b in seq(15), n in 1usize..4) {
        for s in [rouge_n(&a, &b, n).unwrap(), rouge_l(&a, &b)] {
            for x in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
            prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-15);
        }
        prop_assert!(lcs_length(&a, &b) <= a.len().min(b.len()));
        prop_assert_eq!(lcs_length(&a, &b), lcs_length(&b, &a));
    }

    #[test]
    fn bleu_is_bounded_by_brevity_penalty(c in seq(15), refs in vec(seq(15), 1..4), max_n in 1usize..5) {
        for smoothing in [Smoothing::None, Smoothing::AddOneOnZero] {
            let b = bleu(&c, &refs, max_n, smoothing).unwrap();
            prop_assert!(b.score >= 0.0);
            prop_assert!(b.score <= b.brevity_penalty + 1e-12);
            prop_assert!(b.brevity_penalty <= 1.0);
            prop_assert_eq!(b.precisions.len(), max_n);
        }
    }

    #[test]
    fn candidate_equal_to_reference_scores_one(r in vec(0u8..4, 4..20)) {
        let b = bleu(&r, &[&r], 4, Smoothing::None).unwrap();
        prop_assert!((b.score - 1.0).abs() < 1e-12);
        prop_assert_eq!(rouge_n(&r, &r, 2).unwrap().f1, 1.0);
        prop_assert_eq!(rouge_l(&r, &r).f1, 1.0);
    }

    #[test]
    fn rouge_one_ignores_order(a in seq(15), b in seq(15)) {
        let mut rev = a.clone();
        rev.reverse();
        let mut sorted = a.clone();
        sorted.sort_unstable();
        let base = rouge_n(&a, &b, 1).unwrap();
        prop_assert_eq!(rouge_n(&rev, &b, 1).unwrap(), base);
        prop_assert_eq!(rouge_n(&sorted, &b, 1).unwrap(), base);
    }

    #[test]
    fn brevity_penalty_is_monotone_in_length(r in 1usize..50, c in 1usize..50) {
        let bp = brevity_penalty(c, r);
        prop_assert!(bp > 0.0 && bp <= 1.0);
        prop_assert!(brevity_penalty(c + 1, r) >= bp);
    }
}

#[test]
fn reversal_changes_bigrams_but_not_unigrams() {
    let a = ["a", "b", "c", "d"];
    let rev = ["d", "c", "b", "a"];
    assert_eq!(rouge_n(&rev, &a, 1).unwrap().f1, 1.0);
    assert_eq!(rouge_n(&rev, &a, 2).unwrap().f1, 0.0);
    assert_eq!(lcs_length(&rev, &a), 1);
}

#[test]
fn zero_order_is_an_error() {
    assert!(rouge_n(&[1], &[1], 0).is_err());
    assert!(ngram_overlap(&[1], &[1], 0).is_err());
    assert!(bleu(&[1], &[[1]], 0, Smoothing::None).is_err());
    assert!(bleu::<u8, Vec<u8>>(&[1], &[], 4, Smoothing::None).is_err());
}

#[test]
fn corpus_report_averages_each_pair() {
    let s = |t: &str| t.split(' ').map(String::from).collect::<Vec<_>>();
    let pairs = vec![(s("a b c d"), s("a b c d")), (s("x"), s("a b"))];
    let report = score_corpus(&pairs).unwrap();
    assert_eq!(report.count, 2);
    assert!((report.rouge_1_f - 0.5).abs() < 1e-12);
    assert!((report.rouge_l_f - 0.5).abs() < 1e-12);
    // second pair: no unigram match smooths p1 to 1/2, empty higher orders to 1; BP = e^(1 - 2/1)
    let second = (-1.0f64).exp() * 0.5f64.powf(0.25);
    assert!((report.bleu - (1.0 + second) / 2.0).abs() < 1e-12, "{}", report.bleu);
    let json = report.to_json();
    let pos: Vec<usize> = ["count", "bleu", "rouge_1_f", "rouge_2_f", "rouge_l_f"]
        .iter()
        .map(|k| json.find(&format!("\"{k}\"")).unwrap())
        .collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{json}");
    assert!(score_corpus::<Vec<String>>(&[]).is_err());
}
