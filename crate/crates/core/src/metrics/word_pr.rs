//! Weighted per-word precision/recall. Images where no reference mentions a
//! word count as negatives with weight 1; images where references mention it
//! count with weight equal to the number of mentioning references.

use super::EvalPair;
use crate::text::lemmatize;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq)]
pub struct WordPRRow {
    pub word: String,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// Total reference-caption occurrences by image (the positive weight).
    pub support: usize,
    /// Set when the word never appears in any generated caption; precision
    /// is reported as 0 in that case.
    pub no_predictions: bool,
}

fn lemma_set(tokens: &[String]) -> BTreeSet<String> {
    tokens.iter().map(|t| lemmatize(t)).collect()
}

/// Computes rows for every lemmatized word whose total positive weight
/// exceeds `min_freq`. Rows come back sorted by word.
pub fn word_pr(pairs: &[EvalPair], min_freq: usize) -> Vec<WordPRRow> {
    struct Tally {
        gt_weight_total: usize,
        tp_weight: usize,
        fp_count: usize,
        predicted_anywhere: bool,
    }

    // Per image: the candidate lemma set and per-word reference counts.
    let mut words: BTreeSet<String> = BTreeSet::new();
    let mut per_image: Vec<(BTreeSet<String>, BTreeMap<String, usize>)> = Vec::new();
    for pair in pairs {
        let cand = lemma_set(&pair.candidate);
        let mut ref_counts: BTreeMap<String, usize> = BTreeMap::new();
        for r in &pair.references {
            for w in lemma_set(r) {
                *ref_counts.entry(w).or_insert(0) += 1;
            }
        }
        words.extend(ref_counts.keys().cloned());
        per_image.push((cand, ref_counts));
    }

    let mut rows = Vec::new();
    for word in words {
        let mut t = Tally {
            gt_weight_total: 0,
            tp_weight: 0,
            fp_count: 0,
            predicted_anywhere: false,
        };
        for (cand, ref_counts) in &per_image {
            let gt_weight = ref_counts.get(&word).copied().unwrap_or(0);
            let predicted = cand.contains(&word);
            t.gt_weight_total += gt_weight;
            if predicted {
                t.predicted_anywhere = true;
                if gt_weight > 0 {
                    t.tp_weight += gt_weight;
                } else {
                    t.fp_count += 1;
                }
            }
        }
        if t.gt_weight_total <= min_freq {
            continue;
        }
        let denom_p = t.tp_weight + t.fp_count;
        let precision = if denom_p > 0 {
            t.tp_weight as f64 / denom_p as f64
        } else {
            0.0
        };
        let recall = t.tp_weight as f64 / t.gt_weight_total as f64;
        let f_score = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        rows.push(WordPRRow {
            word,
            precision,
            recall,
            f_score,
            support: t.gt_weight_total,
            no_predictions: !t.predicted_anywhere,
        });
    }
    rows
}

/// Words whose F-score moved by more than `threshold` from system A to
/// system B. A word missing from one side contributes F = 0 there.
pub fn word_pr_delta(
    rows_a: &[WordPRRow],
    rows_b: &[WordPRRow],
    threshold: f64,
) -> (Vec<String>, Vec<String>) {
    let index = |rows: &[WordPRRow]| -> BTreeMap<String, f64> {
        rows.iter().map(|r| (r.word.clone(), r.f_score)).collect()
    };
    let a = index(rows_a);
    let b = index(rows_b);
    let words: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let mut improved = Vec::new();
    let mut degraded = Vec::new();
    for w in words {
        let fa = a.get(w).copied().unwrap_or(0.0);
        let fb = b.get(w).copied().unwrap_or(0.0);
        if fb - fa > threshold {
            improved.push(w.clone());
        } else if fa - fb > threshold {
            degraded.push(w.clone());
        }
    }
    (improved, degraded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(id: &str, cand: &str, refs: &[&str]) -> EvalPair {
        EvalPair::new(id, cand, refs)
    }

    #[test]
    fn echoing_a_reference_gives_perfect_precision() {
        let pairs = vec![
            pair("a", "a red kite", &["a red kite", "the kite flies"]),
            pair("b", "a dog runs", &["a dog runs", "a brown dog"]),
        ];
        for row in word_pr(&pairs, 0) {
            if !row.no_predictions {
                assert!(
                    (row.precision - 1.0).abs() < 1e-12,
                    "word {} precision {}",
                    row.word,
                    row.precision
                );
            }
        }
    }

    #[test]
    fn unpredicted_word_flagged_with_zero_scores() {
        let pairs = vec![pair("a", "a cat", &["a zebra", "the zebra"])];
        let rows = word_pr(&pairs, 0);
        let zebra = rows.iter().find(|r| r.word == "zebra").unwrap();
        assert!(zebra.no_predictions);
        assert_eq!(zebra.precision, 0.0);
        assert_eq!(zebra.recall, 0.0);
        assert_eq!(zebra.support, 2);
    }

    #[test]
    fn four_image_hand_fixture() {
        // Word "kite": image a has 2 mentioning refs and a predicting
        // candidate (TP weight 2); image b has 1 mentioning ref, no
        // prediction; image c is negative but predicts (FP weight 1);
        // image d is negative, no prediction.
        let pairs = vec![
            pair("a", "a kite in the sky", &["a kite", "big kite here", "the sky"]),
            pair("b", "clouds", &["a kite far away"]),
            pair("c", "a kite maybe", &["an empty field"]),
            pair("d", "grass", &["green grass"]),
        ];
        let rows = word_pr(&pairs, 0);
        let kite = rows.iter().find(|r| r.word == "kite").unwrap();
        assert_eq!(kite.support, 3);
        assert!((kite.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((kite.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((kite.f_score - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn min_freq_filters_rare_words() {
        let pairs = vec![pair("a", "x", &["x y"]), pair("b", "x", &["x z"])];
        let rows = word_pr(&pairs, 1);
        assert!(rows.iter().any(|r| r.word == "x"));
        assert!(!rows.iter().any(|r| r.word == "y"));
    }

    #[test]
    fn lemmatization_applies_to_both_sides() {
        let pairs = vec![pair("a", "two kites", &["a kite flying", "kites everywhere"])];
        let rows = word_pr(&pairs, 0);
        let kite = rows.iter().find(|r| r.word == "kite").unwrap();
        assert_eq!(kite.support, 2);
        assert!((kite.recall - 1.0).abs() < 1e-12);
    }

    #[test]
    fn positive_weight_equals_reference_recount() {
        let pairs = vec![
            pair("a", "a kite", &["a kite", "the kite", "sky"]),
            pair("b", "sky", &["a kite above"]),
        ];
        let rows = word_pr(&pairs, 0);
        let kite = rows.iter().find(|r| r.word == "kite").unwrap();
        // Direct recount: refs containing "kite" per image are 2 and 1.
        let recount: usize = pairs
            .iter()
            .map(|p| {
                p.references
                    .iter()
                    .filter(|r| r.iter().any(|t| lemmatize(t) == "kite"))
                    .count()
            })
            .sum();
        assert_eq!(kite.support, recount);
    }

    #[test]
    fn delta_partitions_by_threshold() {
        let row = |w: &str, f: f64| WordPRRow {
            word: w.into(),
            precision: f,
            recall: f,
            f_score: f,
            support: 20,
            no_predictions: false,
        };
        let a = vec![row("kite", 0.50), row("dog", 0.90), row("sky", 0.70)];
        let b = vec![row("kite", 0.56), row("dog", 0.80), row("sky", 0.71)];
        let (improved, degraded) = word_pr_delta(&a, &b, 0.05);
        assert_eq!(improved, vec!["kite".to_string()]);
        assert_eq!(degraded, vec!["dog".to_string()]);
        let (i2, d2) = word_pr_delta(&a, &a, 0.05);
        assert!(i2.is_empty() && d2.is_empty());
    }
}
