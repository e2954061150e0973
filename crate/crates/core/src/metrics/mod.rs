//! Corpus-level caption metrics: BLEU 1-4, ROUGE-L and CIDEr, plus the
//! weighted per-word precision/recall analysis in `word_pr`.

mod word_pr;

pub use word_pr::{word_pr, word_pr_delta, WordPRRow};

use std::collections::BTreeMap;
use std::fmt;

pub type MetricsResult<T> = Result<T, MetricsError>;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    EmptyCorpus,
    EmptyReferences { image_id: String },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyCorpus => write!(f, "metric needs a non-empty corpus"),
            Self::EmptyReferences { image_id } => {
                write!(f, "image '{image_id}' has no references")
            }
        }
    }
}

impl std::error::Error for MetricsError {}

/// One evaluation unit: a candidate caption and its reference set, all
/// pre-tokenized by the shared tokenizer.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub image_id: String,
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl EvalPair {
    pub fn new(image_id: &str, candidate: &str, references: &[&str]) -> Self {
        Self {
            image_id: image_id.to_string(),
            candidate: crate::text::tokenize(candidate),
            references: references.iter().map(|r| crate::text::tokenize(r)).collect(),
        }
    }
}

fn validate(pairs: &[EvalPair]) -> MetricsResult<()> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    for p in pairs {
        if p.references.is_empty() || p.references.iter().all(|r| r.is_empty()) {
            return Err(MetricsError::EmptyReferences {
                image_id: p.image_id.clone(),
            });
        }
    }
    Ok(())
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts: BTreeMap<&[String], usize> = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU with uniform weights, returning cumulative scores for
/// n = 1..=max_n. Modified n-gram precision is clipped per reference maximum;
/// the brevity penalty uses the closest reference length with ties going to
/// the shorter reference. A zero precision at any order makes that order's
/// score 0 unless `smoothing` adds one to numerator and denominator for
/// n >= 2.
pub fn bleu(pairs: &[EvalPair], max_n: usize, smoothing: bool) -> MetricsResult<Vec<f64>> {
    validate(pairs)?;
    let mut matched = vec![0.0f64; max_n];
    let mut total = vec![0.0f64; max_n];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;
    for pair in pairs {
        let c = pair.candidate.len();
        cand_len += c;
        let closest = pair
            .references
            .iter()
            .map(|r| r.len())
            .min_by_key(|&rl| {
                let diff = (rl as i64 - c as i64).abs();
                (diff, rl)
            })
            .unwrap();
        ref_len += closest;
        for n in 1..=max_n {
            let cand = ngram_counts(&pair.candidate, n);
            let mut clip: BTreeMap<&[String], usize> = BTreeMap::new();
            for r in &pair.references {
                for (gram, count) in ngram_counts(r, n) {
                    let e = clip.entry(gram).or_insert(0);
                    *e = (*e).max(count);
                }
            }
            for (gram, count) in &cand {
                let allowed = clip.get(gram).copied().unwrap_or(0);
                matched[n - 1] += (*count).min(allowed) as f64;
            }
            total[n - 1] += pair.candidate.len().saturating_sub(n - 1) as f64;
        }
    }
    let bp = if cand_len > ref_len || cand_len == 0 {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    let mut scores = Vec::with_capacity(max_n);
    for k in 1..=max_n {
        let mut log_sum = 0.0;
        let mut zero = false;
        for n in 1..=k {
            let (mut m, mut t) = (matched[n - 1], total[n - 1]);
            if smoothing && n >= 2 {
                m += 1.0;
                t += 1.0;
            }
            if m <= 0.0 || t <= 0.0 {
                zero = true;
                break;
            }
            log_sum += (m / t).ln();
        }
        scores.push(if zero { 0.0 } else { bp * (log_sum / k as f64).exp() });
    }
    Ok(scores)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let (n, m) = (a.len(), b.len());
    let mut prev = vec![0usize; m + 1];
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        for j in 1..=m {
            cur[j] = if a[i - 1] == b[j - 1] {
                prev[j - 1] + 1
            } else {
                prev[j].max(cur[j - 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
        cur.fill(0);
    }
    prev[m]
}

/// ROUGE-L: per pair the F_beta of LCS precision/recall is taken against
/// each reference and the maximum kept; the corpus score is the mean.
pub fn rouge_l(pairs: &[EvalPair], beta: f64) -> MetricsResult<f64> {
    validate(pairs)?;
    let b2 = beta * beta;
    let mut sum = 0.0;
    for pair in pairs {
        let mut best = 0.0f64;
        for r in &pair.references {
            if pair.candidate.is_empty() || r.is_empty() {
                continue;
            }
            let l = lcs_len(&pair.candidate, r) as f64;
            let p = l / pair.candidate.len() as f64;
            let rec = l / r.len() as f64;
            let f = if p + rec > 0.0 {
                (1.0 + b2) * p * rec / (rec + b2 * p)
            } else {
                0.0
            };
            best = best.max(f);
        }
        sum += best;
    }
    Ok(sum / pairs.len() as f64)
}

/// CIDEr: per n-gram order, captions become tf-idf vectors (idf from the
/// reference corpus document frequency over images); candidate-to-reference
/// cosine similarities are averaged over references and orders, scaled by 10,
/// and averaged over the corpus. With a single image every idf is ln(1) = 0,
/// so the score degenerates to 0.
pub fn cider(pairs: &[EvalPair], max_n: usize) -> MetricsResult<f64> {
    validate(pairs)?;
    let n_images = pairs.len() as f64;
    let mut total = 0.0;
    for n in 1..=max_n {
        // Document frequency: in how many images' reference sets a gram occurs.
        let mut df: BTreeMap<Vec<String>, usize> = BTreeMap::new();
        for pair in pairs {
            let mut seen: BTreeMap<&[String], ()> = BTreeMap::new();
            for r in &pair.references {
                for (gram, _) in ngram_counts(r, n) {
                    seen.entry(gram).or_insert(());
                }
            }
            for (gram, _) in seen {
                *df.entry(gram.to_vec()).or_insert(0) += 1;
            }
        }
        for pair in pairs {
            let norm =
                |v: &BTreeMap<&[String], f64>| -> f64 { v.values().map(|x| x * x).sum::<f64>().sqrt() };
            let cv = tfidf_vector(&pair.candidate, n, &df, n_images);
            let cn = norm(&cv);
            let mut sims = Vec::with_capacity(pair.references.len());
            for r in &pair.references {
                let rv = tfidf_vector(r, n, &df, n_images);
                let rn = norm(&rv);
                if cn == 0.0 || rn == 0.0 {
                    continue;
                }
                let dot: f64 = cv
                    .iter()
                    .filter_map(|(gram, &c)| rv.get(gram).map(|&rc| c * rc))
                    .sum();
                sims.push(dot / (cn * rn));
            }
            // Summing in sorted order keeps the score exactly invariant to
            // the reference list order.
            sims.sort_by(f64::total_cmp);
            total += sims.iter().sum::<f64>() / pair.references.len() as f64;
        }
    }
    Ok(10.0 * total / (max_n as f64 * n_images))
}

fn tfidf_vector<'a>(
    tokens: &'a [String],
    n: usize,
    df: &BTreeMap<Vec<String>, usize>,
    n_images: f64,
) -> BTreeMap<&'a [String], f64> {
    ngram_counts(tokens, n)
        .into_iter()
        .map(|(gram, c)| {
            let d = df.get(gram).copied().unwrap_or(0).max(1) as f64;
            (gram, c as f64 * (n_images / d).ln())
        })
        .collect()
}

/// The Table-1-style metric row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub bleu: Vec<f64>,
    pub rouge_l: f64,
    pub cider: f64,
}

pub fn evaluate(pairs: &[EvalPair], smoothing: bool) -> MetricsResult<MetricReport> {
    Ok(MetricReport {
        bleu: bleu(pairs, 4, smoothing)?,
        rouge_l: rouge_l(pairs, 1.2)?,
        cider: cider(pairs, 4)?,
    })
}

impl MetricReport {
    pub fn csv_header() -> &'static str {
        "bleu1,bleu2,bleu3,bleu4,rouge_l,cider"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.bleu[0], self.bleu[1], self.bleu[2], self.bleu[3], self.rouge_l, self.cider
        )
    }
}
