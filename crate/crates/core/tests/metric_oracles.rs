//! Brute-force metric oracles over a 20-caption fixture. The oracles below
//! are deliberately plain re-implementations (string-keyed maps, no shared
//! helpers) of the same published definitions, kept independent of the
//! library code they check.

use gazecap_core::metrics::{bleu, cider, rouge_l, EvalPair};
use std::collections::HashMap;

fn fixture() -> Vec<EvalPair> {
    let data: Vec<(&str, &str, Vec<&str>)> = vec![
        ("img00", "a red circle above a blue square", vec!["a red circle above a blue square", "there is a red circle above a blue square"]),
        ("img01", "a blue square below a red circle", vec!["a blue square below a red circle", "a red circle above a blue square"]),
        ("img02", "a green triangle left of a yellow square", vec!["a green triangle left of a yellow square", "a yellow square right of a green triangle"]),
        ("img03", "the small dog runs across the grass", vec!["a small dog runs on the grass", "the dog runs across a field"]),
        ("img04", "two cats sit on a warm mat", vec!["two cats sit on the mat", "cats resting on a mat"]),
        ("img05", "a man rides a bike down the street", vec!["a man rides a bicycle on the street", "someone rides a bike down a road"]),
        ("img06", "a kite flies high in the sky", vec!["a kite flies in the blue sky", "the kite is high in the sky"]),
        ("img07", "a red circle above a green triangle", vec!["a red circle above a green triangle", "there is a green triangle below a red circle"]),
        ("img08", "a yellow circle right of a blue triangle", vec!["a yellow circle right of a blue triangle"]),
        ("img09", "the boat floats on calm water", vec!["a boat floats on the water", "a small boat on calm water"]),
        ("img10", "a blue square", vec!["a blue square alone", "one blue square"]),
        ("img11", "there is a red square above a red circle", vec!["a red square above a red circle"]),
        ("img12", "a bird sits on the fence", vec!["a bird sits on a wooden fence", "the bird rests on the fence"]),
        ("img13", "a green circle below a yellow triangle", vec!["a green circle below a yellow triangle", "a yellow triangle above a green circle"]),
        ("img14", "the sun sets over the hills", vec!["the sun sets behind the hills", "sunset over rolling hills"]),
        ("img15", "a woman reads a book in the park", vec!["a woman reads a book on a bench", "someone reading in the park"]),
        ("img16", "a yellow triangle left of a green square", vec!["a yellow triangle left of a green square"]),
        ("img17", "rain falls on the quiet town", vec!["rain falls over the town", "a rainy day in a quiet town"]),
        ("img18", "a blue triangle above a red square", vec!["a blue triangle above a red square", "a red square below a blue triangle"]),
        ("img19", "children play with a ball", vec!["children play with a red ball", "kids playing ball outside"]),
    ];
    data.into_iter()
        .map(|(id, cand, refs)| EvalPair::new(id, cand, &refs))
        .collect()
}

fn grams(tokens: &[String], n: usize) -> Vec<String> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n)
        .map(|i| tokens[i..i + n].join("\u{1f}"))
        .collect()
}

fn count(items: &[String]) -> HashMap<String, f64> {
    let mut m = HashMap::new();
    for it in items {
        *m.entry(it.clone()).or_insert(0.0) += 1.0;
    }
    m
}

fn bleu_oracle(pairs: &[EvalPair], max_n: usize) -> Vec<f64> {
    let mut c_total = 0.0;
    let mut r_total = 0.0;
    let mut num = vec![0.0; max_n];
    let mut den = vec![0.0; max_n];
    for p in pairs {
        let clen = p.candidate.len() as f64;
        c_total += clen;
        let mut best_ref = f64::INFINITY;
        let mut best_diff = f64::INFINITY;
        for r in &p.references {
            let rl = r.len() as f64;
            let diff = (rl - clen).abs();
            if diff < best_diff || (diff == best_diff && rl < best_ref) {
                best_diff = diff;
                best_ref = rl;
            }
        }
        r_total += best_ref;
        for n in 1..=max_n {
            let cand_counts = count(&grams(&p.candidate, n));
            let mut max_ref: HashMap<String, f64> = HashMap::new();
            for r in &p.references {
                for (g, c) in count(&grams(r, n)) {
                    let e = max_ref.entry(g).or_insert(0.0);
                    if c > *e {
                        *e = c;
                    }
                }
            }
            for (g, c) in &cand_counts {
                num[n - 1] += c.min(*max_ref.get(g).unwrap_or(&0.0));
                den[n - 1] += c;
            }
        }
    }
    let bp = if c_total > r_total {
        1.0
    } else {
        (1.0 - r_total / c_total).exp()
    };
    (1..=max_n)
        .map(|k| {
            let mut acc = 0.0;
            for n in 1..=k {
                if num[n - 1] == 0.0 {
                    return 0.0;
                }
                acc += (num[n - 1] / den[n - 1]).ln() / k as f64;
            }
            bp * acc.exp()
        })
        .collect()
}

fn lcs_oracle(a: &[String], b: &[String]) -> usize {
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            table[i][j] = if a[i - 1] == b[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    table[a.len()][b.len()]
}

fn rouge_oracle(pairs: &[EvalPair], beta: f64) -> f64 {
    let mut total = 0.0;
    for p in pairs {
        let mut best: f64 = 0.0;
        for r in &p.references {
            let l = lcs_oracle(&p.candidate, r) as f64;
            let prec = l / p.candidate.len() as f64;
            let rec = l / r.len() as f64;
            if prec + rec > 0.0 {
                best = best.max((1.0 + beta * beta) * prec * rec / (rec + beta * beta * prec));
            }
        }
        total += best;
    }
    total / pairs.len() as f64
}

fn cider_oracle(pairs: &[EvalPair], max_n: usize) -> f64 {
    let n_img = pairs.len() as f64;
    let mut per_image = vec![0.0; pairs.len()];
    for n in 1..=max_n {
        let mut df: HashMap<String, f64> = HashMap::new();
        for p in pairs {
            let mut seen: Vec<String> = Vec::new();
            for r in &p.references {
                for g in grams(r, n) {
                    if !seen.contains(&g) {
                        seen.push(g);
                    }
                }
            }
            for g in seen {
                *df.entry(g).or_insert(0.0) += 1.0;
            }
        }
        for (pi, p) in pairs.iter().enumerate() {
            let vec_of = |tokens: &[String]| -> HashMap<String, f64> {
                let mut v = HashMap::new();
                for (g, c) in count(&grams(tokens, n)) {
                    let d = df.get(&g).copied().unwrap_or(0.0).max(1.0);
                    v.insert(g, c * (n_img / d).ln());
                }
                v
            };
            let cv = vec_of(&p.candidate);
            let cnorm: f64 = cv.values().map(|x| x * x).sum::<f64>().sqrt();
            let mut acc = 0.0;
            for r in &p.references {
                let rv = vec_of(r);
                let rnorm: f64 = rv.values().map(|x| x * x).sum::<f64>().sqrt();
                if cnorm > 0.0 && rnorm > 0.0 {
                    let mut dot = 0.0;
                    for (g, c) in &cv {
                        if let Some(rc) = rv.get(g) {
                            dot += c * rc;
                        }
                    }
                    acc += dot / (cnorm * rnorm);
                }
            }
            per_image[pi] += acc / p.references.len() as f64 / max_n as f64;
        }
    }
    10.0 * per_image.iter().sum::<f64>() / n_img
}

#[test]
fn bleu_matches_oracle_on_fixture() {
    let pairs = fixture();
    let got = bleu(&pairs, 4, false).unwrap();
    let want = bleu_oracle(&pairs, 4);
    for (n, (g, w)) in got.iter().zip(&want).enumerate() {
        assert!((g - w).abs() < 1e-10, "BLEU-{}: {} vs {}", n + 1, g, w);
        assert!(*g > 0.0 && *g <= 1.0);
    }
}

#[test]
fn rouge_matches_oracle_on_fixture() {
    let pairs = fixture();
    let got = rouge_l(&pairs, 1.2).unwrap();
    let want = rouge_oracle(&pairs, 1.2);
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    assert!(got > 0.0 && got <= 1.0);
}

#[test]
fn cider_matches_oracle_on_fixture() {
    let pairs = fixture();
    let got = cider(&pairs, 4).unwrap();
    let want = cider_oracle(&pairs, 4);
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    assert!(got > 0.0 && got <= 10.0);
}

#[test]
fn three_image_cider_fixture() {
    let pairs = vec![
        EvalPair::new("a", "a red circle", &["a red circle", "one red circle"]),
        EvalPair::new("b", "a blue square", &["a blue square here"]),
        EvalPair::new("c", "a dog runs", &["the dog runs fast", "a dog running"]),
    ];
    let got = cider(&pairs, 4).unwrap();
    let want = cider_oracle(&pairs, 4);
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
}
