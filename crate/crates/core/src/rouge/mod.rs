//! ROUGE-1/2/L: full-length F1, limited-length recall, per-highlight
//! evaluation and paired bootstrap significance.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;
use crate::error::{Error, Result};
use crate::infer::src_copy_rate;

/// Precision, recall and F1 of one metric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(hits: f64, system: f64, reference: f64) -> Self {
        let precision = if system > 0.0 { hits / system } else { 0.0 };
        let recall = if reference > 0.0 {
            hits / reference
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub rouge1: Prf,
    pub rouge2: Prf,
    #[serde(rename = "rougeL")]
    pub rouge_l: Prf,
}

/// Lowercases, turns every non-alphanumeric character into a space and splits.
pub fn rouge_tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn ngram_counts<S: AsRef<str>>(
    tokens: &[S],
    n: usize,
    into: &mut HashMap<Vec<String>, usize>,
) -> usize {
    if n == 0 || tokens.len() < n {
        return 0;
    }
    for w in tokens.windows(n) {
        *into
            .entry(w.iter().map(|t| t.as_ref().to_string()).collect())
            .or_default() += 1;
    }
    tokens.len() + 1 - n
}

fn clipped_overlap(a: &HashMap<Vec<String>, usize>, b: &HashMap<Vec<String>, usize>) -> usize {
    a.iter()
        .map(|(g, c)| (*c).min(b.get(g).copied().unwrap_or(0)))
        .sum()
}

fn rouge_n_units<S: AsRef<str>, T: AsRef<str>>(
    system: &[&[S]],
    reference: &[&[T]],
    n: usize,
) -> Prf {
    let (mut sc, mut rc) = (HashMap::new(), HashMap::new());
    let s_total: usize = system.iter().map(|u| ngram_counts(u, n, &mut sc)).sum();
    let r_total: usize = reference.iter().map(|u| ngram_counts(u, n, &mut rc)).sum();
    if r_total == 0 {
        log::warn!("reference has no {n}-grams; scoring 0");
        return Prf::default();
    }
    Prf::from_counts(
        clipped_overlap(&sc, &rc) as f64,
        s_total as f64,
        r_total as f64,
    )
}

/// Clipped n-gram overlap.
pub fn rouge_n<S: AsRef<str>, T: AsRef<str>>(system: &[S], reference: &[T], n: usize) -> Prf {
    rouge_n_units(&[system], &[reference], n)
}

/// LCS table; `t[i][j]` is the LCS length of `a[i..]` and `b[j..]`.
fn lcs_table<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in (0..a.len()).rev() {
        for j in (0..b.len()).rev() {
            t[i][j] = if a[i].as_ref() == b[j].as_ref() {
                t[i + 1][j + 1] + 1
            } else {
                t[i + 1][j].max(t[i][j + 1])
            };
        }
    }
    t
}

pub fn lcs_len<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> usize {
    lcs_table(a, b)[0][0]
}

/// Positions of `a` on one longest common subsequence with `b`.
fn lcs_positions<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> Vec<usize> {
    let t = lcs_table(a, b);
    let (mut i, mut j, mut out) = (0, 0, Vec::new());
    while i < a.len() && j < b.len() {
        if a[i].as_ref() == b[j].as_ref() {
            out.push(i);
            i += 1;
            j += 1;
        } else if t[i + 1][j] >= t[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

pub fn rouge_l<S: AsRef<str>, T: AsRef<str>>(system: &[S], reference: &[T]) -> Prf {
    let l = lcs_len(system, reference);
    Prf::from_counts(l as f64, system.len() as f64, reference.len() as f64)
}

pub fn rouge_all<S: AsRef<str>, T: AsRef<str>>(system: &[S], reference: &[T]) -> RougeScore {
    RougeScore {
        rouge1: rouge_n(system, reference, 1),
        rouge2: rouge_n(system, reference, 2),
        rouge_l: rouge_l(system, reference),
    }
}

/// Longest prefix of at most `budget` bytes that ends on a character
/// boundary and does not end inside a word.
pub fn truncate_bytes(text: &str, budget: usize) -> &str {
    if text.len() <= budget {
        return text;
    }
    let mut end = budget;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    let next_is_word = text[end..]
        .chars()
        .next()
        .is_some_and(char::is_alphanumeric);
    if next_is_word {
        let head = &text[..end];
        end = head.trim_end_matches(char::is_alphanumeric).len();
    }
    &text[..end]
}

/// Recall of the system text cut to `byte_budget` bytes.
pub fn rouge_limited_recall<T: AsRef<str>>(
    system: &str,
    reference: &[T],
    byte_budget: usize,
) -> RougeScore {
    let sys = rouge_tokenize(truncate_bytes(system, byte_budget.max(1)));
    let keep_recall = |p: Prf| Prf {
        precision: 0.0,
        recall: p.recall,
        f1: 0.0,
    };
    let full = rouge_all(&sys, reference);
    RougeScore {
        rouge1: keep_recall(full.rouge1),
        rouge2: keep_recall(full.rouge2),
        rouge_l: keep_recall(full.rouge_l),
    }
}

/// Every highlight is a separate unit: n-grams never cross highlights, and
/// ROUGE-L takes the union of LCS matches of each reference highlight
/// against every system highlight.
pub fn rouge_multisent<S: AsRef<str>, T: AsRef<str>>(
    system: &[Vec<S>],
    reference: &[Vec<T>],
) -> RougeScore {
    if reference.is_empty() {
        log::warn!("empty reference highlight list; scoring 0");
        return RougeScore::default();
    }
    let sys: Vec<&[S]> = system.iter().map(Vec::as_slice).collect();
    let refs: Vec<&[T]> = reference.iter().map(Vec::as_slice).collect();
    let mut hits = 0usize;
    for r in &refs {
        let mut covered = vec![false; r.len()];
        for s in &sys {
            for i in lcs_positions(r, s) {
                covered[i] = true;
            }
        }
        hits += covered.iter().filter(|c| **c).count();
    }
    let s_len: usize = sys.iter().map(|s| s.len()).sum();
    let r_len: usize = refs.iter().map(|r| r.len()).sum();
    RougeScore {
        rouge1: rouge_n_units(&sys, &refs, 1),
        rouge2: rouge_n_units(&sys, &refs, 2),
        rouge_l: Prf::from_counts(hits as f64, s_len as f64, r_len as f64),
    }
}

/// Splits text into highlights on sentence ends and ROUGE-tokenizes each.
pub fn highlights(text: &str) -> Vec<Vec<String>> {
    tokenize(text)
        .into_iter()
        .map(|s| rouge_tokenize(&s.join(" ")))
        .filter(|s| !s.is_empty())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap {
    /// Share of resamples where system a does not beat b, ties counted half.
    pub p_value: f64,
    pub mean_diff: f64,
    /// 95% percentile interval of the mean difference `a - b`.
    pub interval: (f64, f64),
}

/// Paired bootstrap over examples.
pub fn bootstrap_significance(
    a: &[f64],
    b: &[f64],
    iterations: usize,
    seed: u64,
) -> Result<Bootstrap> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Contract(format!(
            "bootstrap needs two equal-length lists of at least 2 scores, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if iterations == 0 {
        return Err(Error::Contract(
            "bootstrap needs at least one iteration".into(),
        ));
    }
    let n = a.len();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(iterations);
    let mut not_better = 0.0;
    for _ in 0..iterations {
        let m = (0..n).map(|_| diff[rng.gen_range(0..n)]).sum::<f64>() / n as f64;
        if m < 0.0 {
            not_better += 1.0;
        } else if m == 0.0 {
            not_better += 0.5;
        }
        means.push(m);
    }
    means.sort_by(f64::total_cmp);
    let q = |p: f64| means[((p * (iterations - 1) as f64).round() as usize).min(iterations - 1)];
    Ok(Bootstrap {
        p_value: not_better / iterations as f64,
        mean_diff: diff.iter().sum::<f64>() / n as f64,
        interval: (q(0.025), q(0.975)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    F1,
    LimitedRecall,
    Multisent,
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(EvalMode::F1),
            "limited_recall" | "limited-recall" => Ok(EvalMode::LimitedRecall),
            "multisent" => Ok(EvalMode::Multisent),
            other => Err(Error::Config(format!("unknown eval mode {other}"))),
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::F1 => "f1",
            EvalMode::LimitedRecall => "limited_recall",
            EvalMode::Multisent => "multisent",
        })
    }
}

/// Scores one system summary against its reference under `mode`.
pub fn score_pair(system: &str, reference: &str, mode: EvalMode, byte_budget: usize) -> RougeScore {
    match mode {
        EvalMode::F1 => rouge_all(&rouge_tokenize(system), &rouge_tokenize(reference)),
        EvalMode::LimitedRecall => {
            rouge_limited_recall(system, &rouge_tokenize(reference), byte_budget)
        }
        EvalMode::Multisent => rouge_multisent(&highlights(system), &highlights(reference)),
    }
}

/// Corpus-level averages of per-example scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RougeReport {
    pub rouge1: Prf,
    pub rouge2: Prf,
    #[serde(rename = "rougeL")]
    pub rouge_l: Prf,
    pub src_copy_rate: Option<f64>,
    pub n_examples: usize,
}

/// One evaluation item: system text, reference text and optional source.
pub struct EvalItem<'a> {
    pub system: &'a str,
    pub reference: &'a str,
    pub source: Option<&'a str>,
}

pub fn evaluate(
    items: &[EvalItem<'_>],
    mode: EvalMode,
    byte_budget: usize,
) -> (RougeReport, Vec<RougeScore>) {
    let scores: Vec<RougeScore> = items
        .iter()
        .map(|it| score_pair(it.system, it.reference, mode, byte_budget))
        .collect();
    let n = scores.len().max(1) as f64;
    let avg = |f: fn(&RougeScore) -> Prf| {
        let mut acc = Prf::default();
        for s in &scores {
            let p = f(s);
            acc.precision += p.precision;
            acc.recall += p.recall;
            acc.f1 += p.f1;
        }
        Prf {
            precision: acc.precision / n,
            recall: acc.recall / n,
            f1: acc.f1 / n,
        }
    };
    let rates: Vec<f64> = items
        .iter()
        .filter_map(|it| {
            let src = rouge_tokenize(it.source?);
            src_copy_rate(&rouge_tokenize(it.system), &src).ok()
        })
        .collect();
    let report = RougeReport {
        rouge1: avg(|s| s.rouge1),
        rouge2: avg(|s| s.rouge2),
        rouge_l: avg(|s| s.rouge_l),
        src_copy_rate: (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
        n_examples: scores.len(),
    };
    (report, scores)
}

/// Fraction of trigrams that repeat an earlier trigram of the same text.
pub fn repeated_trigram_rate<S: AsRef<str>>(tokens: &[S]) -> f64 {
    if tokens.len() < 3 {
        return 0.0;
    }
    let mut seen = std::collections::HashSet::new();
    let total = tokens.len() - 2;
    let repeats = tokens
        .windows(3)
        .filter(|w| !seen.insert([w[0].as_ref(), w[1].as_ref(), w[2].as_ref()]))
        .count();
    repeats as f64 / total as f64
}
