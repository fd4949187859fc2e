use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::example::{build_pointer_supervision, Example, PointerPolicy};
use super::features::{
    annotate_features, compute_tfidf, document_frequencies, FeatureBinner, Tagger,
};
use super::tokenize::tokenize_cased;
use super::vocab::{Vocabulary, BOS};
use crate::error::{Error, Result};

/// One line of a JSONL corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub document: String,
    pub summary: String,
}

pub fn parse_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> Result<()> {
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub bins: usize,
    pub pointer_policy: PointerPolicy,
    /// Keep only the first N source sentences.
    pub max_sentences: Option<usize>,
    pub max_doc_len: Option<usize>,
    /// Tokens rarer than this stay out of both vocabularies.
    pub min_count: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            src_vocab_size: 120_000,
            tgt_vocab_size: 69_000,
            bins: 10,
            pointer_policy: PointerPolicy::Oov,
            max_sentences: None,
            max_doc_len: None,
            min_count: 1,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Stats {
    config: PipelineConfig,
    corpus_size: u64,
    tf_binner: FeatureBinner,
    idf_binner: FeatureBinner,
    doc_freq: Vec<(String, u64)>,
}

/// Fitted preprocessing state: vocabularies, document frequencies and bins.
#[derive(Clone, Debug)]
pub struct CorpusPipeline {
    pub config: PipelineConfig,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub doc_freq: HashMap<String, u64>,
    pub corpus_size: u64,
    pub tf_binner: FeatureBinner,
    pub idf_binner: FeatureBinner,
}

struct Tokenized {
    cased: Vec<Vec<String>>,
    lower: Vec<Vec<String>>,
    summary: Vec<String>,
}

fn tokenize_record(rec: &CorpusRecord, config: &PipelineConfig) -> Tokenized {
    let mut cased = tokenize_cased(&rec.document);
    if let Some(n) = config.max_sentences {
        cased.truncate(n);
    }
    if let Some(limit) = config.max_doc_len {
        let mut left = limit;
        cased.retain_mut(|s| {
            s.truncate(left);
            left -= s.len();
            !s.is_empty()
        });
    }
    let lower = cased
        .iter()
        .map(|s| s.iter().map(|t| t.to_lowercase()).collect())
        .collect();
    let summary = tokenize_cased(&rec.summary)
        .into_iter()
        .flatten()
        .map(|t| t.to_lowercase())
        .collect();
    Tokenized {
        cased,
        lower,
        summary,
    }
}

impl CorpusPipeline {
    /// Builds vocabularies, document frequencies and quantile bins from a training corpus.
    pub fn fit(records: &[CorpusRecord], config: PipelineConfig) -> Result<Self> {
        let toks: Vec<Tokenized> = records
            .iter()
            .map(|r| tokenize_record(r, &config))
            .collect();
        let src_flat: Vec<Vec<String>> = toks.iter().map(|t| t.lower.concat()).collect();
        let src_vocab = Vocabulary::build_min_count(
            src_flat.iter().map(Vec::as_slice),
            config.src_vocab_size,
            config.min_count,
        )?;
        let tgt_vocab = Vocabulary::build_min_count(
            toks.iter().map(|t| t.summary.as_slice()),
            config.tgt_vocab_size,
            config.min_count,
        )?;
        let doc_freq = document_frequencies(toks.iter().map(|t| t.lower.as_slice()));
        let corpus_size = records.len().max(1) as u64;
        let mut tfs = Vec::new();
        let mut idfs = Vec::new();
        for t in &toks {
            for (tf, idf) in compute_tfidf(&t.lower, &doc_freq, corpus_size)? {
                tfs.push(tf);
                idfs.push(idf);
            }
        }
        Ok(CorpusPipeline {
            tf_binner: FeatureBinner::fit(&tfs, config.bins)?,
            idf_binner: FeatureBinner::fit(&idfs, config.bins)?,
            config,
            src_vocab,
            tgt_vocab,
            doc_freq,
            corpus_size,
        })
    }

    /// Converts one raw record into an [`Example`].
    pub fn example(
        &self,
        rec: &CorpusRecord,
        fallback_id: usize,
        tagger: &dyn Tagger,
    ) -> Result<Example> {
        let t = tokenize_record(rec, &self.config);
        let id = rec.id.clone().unwrap_or_else(|| fallback_id.to_string());
        let doc_surface: Vec<String> = t.lower.concat();
        if doc_surface.is_empty() {
            return Err(Error::Format(format!("example {id}: empty document")));
        }
        let tfidf = compute_tfidf(&t.lower, &self.doc_freq, self.corpus_size)?;
        let feats = annotate_features(&t.cased, tagger, &tfidf, &self.tf_binner, &self.idf_binner)?;
        let sent_ids = t
            .lower
            .iter()
            .enumerate()
            .flat_map(|(s, sent)| std::iter::repeat_n(s as u32, sent.len()))
            .collect();
        let sup = build_pointer_supervision(
            &doc_surface,
            &t.summary,
            &self.tgt_vocab,
            self.config.pointer_policy,
        );
        let mut summary_tokens = Vec::with_capacity(sup.target_ids.len() + 1);
        summary_tokens.push(BOS);
        summary_tokens.extend(&sup.target_ids);
        let ex = Example {
            id,
            doc_tokens: self.src_vocab.encode(&doc_surface),
            doc_surface,
            pos_ids: feats.pos_ids,
            ner_ids: feats.ner_ids,
            tf_bin: feats.tf_bin,
            idf_bin: feats.idf_bin,
            sent_ids,
            summary_tokens,
            summary_surface: t.summary,
            switch_targets: sup.switch_targets,
            pointer_targets: sup.pointer_targets,
        };
        ex.validate()?;
        Ok(ex)
    }

    /// Converts every record, skipping (and logging) records with empty documents.
    pub fn examples(&self, records: &[CorpusRecord], tagger: &dyn Tagger) -> Result<Vec<Example>> {
        let mut out = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            match self.example(r, i, tagger) {
                Ok(ex) => out.push(ex),
                Err(Error::Format(msg)) if msg.ends_with("empty document") => {
                    log::warn!("skipping {msg}");
                }
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.src_vocab.save(&dir.join("src.vocab"))?;
        self.tgt_vocab.save(&dir.join("tgt.vocab"))?;
        let mut doc_freq: Vec<(String, u64)> =
            self.doc_freq.iter().map(|(k, v)| (k.clone(), *v)).collect();
        doc_freq.sort();
        let stats = Stats {
            config: self.config.clone(),
            corpus_size: self.corpus_size,
            tf_binner: self.tf_binner.clone(),
            idf_binner: self.idf_binner.clone(),
            doc_freq,
        };
        fs::write(dir.join("pipeline.json"), serde_json::to_string(&stats)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let stats: Stats = serde_json::from_str(&fs::read_to_string(dir.join("pipeline.json"))?)?;
        Ok(CorpusPipeline {
            config: stats.config,
            src_vocab: Vocabulary::load(&dir.join("src.vocab"))?,
            tgt_vocab: Vocabulary::load(&dir.join("tgt.vocab"))?,
            doc_freq: stats.doc_freq.into_iter().collect(),
            corpus_size: stats.corpus_size,
            tf_binner: stats.tf_binner,
            idf_binner: stats.idf_binner,
        })
    }
}
