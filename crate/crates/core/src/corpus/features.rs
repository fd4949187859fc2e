use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Term frequency and inverse document frequency for each token of `doc`,
/// flattened in reading order.
///
/// `tf(w) = count(w) / len(doc)` and `idf(w) = ln(N / (1 + df(w)))`, which is
/// negative for words present in every document.
pub fn compute_tfidf<S: AsRef<str>>(
    doc: &[Vec<S>],
    doc_freq: &HashMap<String, u64>,
    corpus_size: u64,
) -> Result<Vec<(f64, f64)>> {
    if corpus_size == 0 {
        return Err(Error::Contract("corpus_size must be at least 1".into()));
    }
    let flat: Vec<&str> = doc.iter().flatten().map(AsRef::as_ref).collect();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &flat {
        *counts.entry(t).or_default() += 1;
    }
    let len = flat.len() as f64;
    Ok(flat
        .iter()
        .map(|t| {
            let tf = counts[t] as f64 / len;
            let df = doc_freq.get(*t).copied().unwrap_or(0);
            let idf = (corpus_size as f64 / (1 + df) as f64).ln();
            (tf, idf)
        })
        .collect())
}

/// Number of documents each token occurs in.
pub fn document_frequencies<'a, I, S>(docs: I) -> HashMap<String, u64>
where
    I: IntoIterator<Item = &'a [Vec<S>]>,
    S: AsRef<str> + 'a,
{
    let mut df: HashMap<String, u64> = HashMap::new();
    for doc in docs {
        let seen: HashSet<&str> = doc.iter().flatten().map(AsRef::as_ref).collect();
        for t in seen {
            *df.entry(t.to_string()).or_default() += 1;
        }
    }
    df
}

/// Discretizes a continuous statistic into at most `bins` categories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBinner {
    boundaries: Vec<f64>,
    bins: usize,
}

impl FeatureBinner {
    pub fn new(boundaries: Vec<f64>, bins: usize) -> Result<Self> {
        if bins == 0 || boundaries.len() >= bins.max(1) {
            return Err(Error::Config(format!(
                "{} boundaries do not fit in {bins} bins",
                boundaries.len()
            )));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) || boundaries.iter().any(|b| !b.is_finite())
        {
            return Err(Error::Config(
                "bin boundaries must be finite and strictly increasing".into(),
            ));
        }
        Ok(FeatureBinner { boundaries, bins })
    }

    /// Equal-frequency quantile boundaries; duplicates from skewed data collapse.
    pub fn fit(values: &[f64], bins: usize) -> Result<Self> {
        let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        sorted.sort_by(f64::total_cmp);
        let mut boundaries: Vec<f64> = Vec::new();
        if !sorted.is_empty() {
            for q in 1..bins {
                let b = sorted[(q * sorted.len() / bins).min(sorted.len() - 1)];
                if boundaries.last().is_none_or(|last| b > *last) && b > sorted[0] {
                    boundaries.push(b);
                }
            }
        }
        Self::new(boundaries, bins)
    }

    /// Number of boundaries not exceeding `x`.
    pub fn bin(&self, x: f64) -> usize {
        if x.is_nan() {
            return 0;
        }
        self.boundaries.partition_point(|b| *b <= x)
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }
}

/// Part-of-speech and named-entity tag source.
pub trait Tagger: Send + Sync {
    fn pos_tags(&self) -> &[&'static str];
    fn ner_tags(&self) -> &[&'static str];
    /// One `(pos, ner)` pair per token, flattened in reading order.
    fn tag(&self, doc: &[Vec<String>]) -> Vec<(String, String)>;
}

const POS_TAGS: [&str; 11] = [
    "NOUN", "PROPN", "VERB", "ADJ", "ADV", "DET", "PRON", "ADP", "CONJ", "NUM", "PUNCT",
];
const NER_TAGS: [&str; 2] = ["O", "ENT"];

const DETERMINERS: [&str; 9] = [
    "the", "a", "an", "this", "that", "these", "those", "its", "their",
];
const PRONOUNS: [&str; 12] = [
    "i", "you", "he", "she", "it", "we", "they", "him", "her", "them", "his", "us",
];
const ADPOSITIONS: [&str; 12] = [
    "in", "on", "at", "of", "to", "for", "with", "by", "from", "into", "over", "after",
];
const CONJUNCTIONS: [&str; 4] = ["and", "or", "but", "nor"];

/// Deterministic suffix and word-list tagger used when no statistical tagger is plugged in.
#[derive(Clone, Copy, Debug, Default)]
pub struct RuleTagger;

impl RuleTagger {
    fn pos(token: &str) -> &'static str {
        let lower = token.to_lowercase();
        if token.chars().all(|c| c.is_ascii_punctuation()) {
            "PUNCT"
        } else if token
            .chars()
            .all(|c| c.is_ascii_digit() || c == ',' || c == '.')
        {
            "NUM"
        } else if DETERMINERS.contains(&lower.as_str()) {
            "DET"
        } else if PRONOUNS.contains(&lower.as_str()) {
            "PRON"
        } else if ADPOSITIONS.contains(&lower.as_str()) {
            "ADP"
        } else if CONJUNCTIONS.contains(&lower.as_str()) {
            "CONJ"
        } else if lower.len() > 3 && lower.ends_with("ly") {
            "ADV"
        } else if lower.len() > 4 && (lower.ends_with("ing") || lower.ends_with("ed")) {
            "VERB"
        } else if lower.len() > 4
            && ["ous", "ful", "ive", "able"]
                .iter()
                .any(|s| lower.ends_with(s))
        {
            "ADJ"
        } else if Self::is_entity(token) {
            "PROPN"
        } else {
            "NOUN"
        }
    }

    fn is_entity(token: &str) -> bool {
        token.starts_with("@entity") || token.chars().next().is_some_and(char::is_uppercase)
    }
}

impl Tagger for RuleTagger {
    fn pos_tags(&self) -> &[&'static str] {
        &POS_TAGS
    }

    fn ner_tags(&self) -> &[&'static str] {
        &NER_TAGS
    }

    fn tag(&self, doc: &[Vec<String>]) -> Vec<(String, String)> {
        doc.iter()
            .flatten()
            .map(|t| {
                let ner = if Self::is_entity(t) { "ENT" } else { "O" };
                (Self::pos(t).to_string(), ner.to_string())
            })
            .collect()
    }
}

/// Per-token categorical feature ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenFeatures {
    pub pos_ids: Vec<u32>,
    pub ner_ids: Vec<u32>,
    pub tf_bin: Vec<u32>,
    pub idf_bin: Vec<u32>,
}

/// Tags `doc` (cased tokens) and bins its TF/IDF statistics.
pub fn annotate_features(
    doc: &[Vec<String>],
    tagger: &dyn Tagger,
    tfidf: &[(f64, f64)],
    tf_binner: &FeatureBinner,
    idf_binner: &FeatureBinner,
) -> Result<TokenFeatures> {
    let n: usize = doc.iter().map(Vec::len).sum();
    let tags = tagger.tag(doc);
    if tags.len() != n {
        return Err(Error::Annotation(format!(
            "tagger returned {} tags for {n} tokens",
            tags.len()
        )));
    }
    if tfidf.len() != n {
        return Err(Error::Annotation(format!(
            "{} tf/idf pairs for {n} tokens",
            tfidf.len()
        )));
    }
    let lookup = |set: &[&str], tag: &str| -> Result<u32> {
        set.iter()
            .position(|t| *t == tag)
            .map(|i| i as u32)
            .ok_or_else(|| Error::Annotation(format!("tag {tag} not in the tagger's tag set")))
    };
    let mut out = TokenFeatures::default();
    for ((pos, ner), (tf, idf)) in tags.iter().zip(tfidf) {
        out.pos_ids.push(lookup(tagger.pos_tags(), pos)?);
        out.ner_ids.push(lookup(tagger.ner_tags(), ner)?);
        out.tf_bin.push(tf_binner.bin(*tf) as u32);
        out.idf_bin.push(idf_binner.bin(*idf) as u32);
    }
    Ok(out)
}
