use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use s2sm_core::corpus::{
    load_shard, read_jsonl, save_shard, write_jsonl, CorpusPipeline, CorpusRecord, Example,
    RuleTagger,
};
use s2sm_core::infer::{decode_with_attention, DecodedSummary};
use s2sm_core::rouge::{evaluate, EvalItem};
use s2sm_core::train::{load_checkpoint, save_checkpoint, train as fit_model, TrainConfig};

use crate::config::RunConfig;
use crate::Usage;

const CHECKPOINT: &str = "model.ckpt";
const TRAIN_SHARD: &str = "train.shard";
const VALID_SHARD: &str = "valid.shard";

/// Caps the worker pool at `S2SM_THREADS` when set.
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("S2SM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Usage(format!(
            "S2SM_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_records(cfg: &RunConfig, records: &[CorpusRecord]) -> Result<()> {
    write_jsonl(output(cfg.paths.output.as_deref())?, records)?;
    Ok(())
}

fn to_examples(pipeline: &CorpusPipeline, records: &[CorpusRecord]) -> Result<Vec<Example>> {
    let converted: Vec<_> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| pipeline.example(r, i, &RuleTagger))
        .collect();
    let mut out = Vec::with_capacity(records.len());
    for ex in converted {
        match ex {
            Ok(ex) => out.push(ex),
            Err(s2sm_core::Error::Format(msg)) if msg.ends_with("empty document") => {
                log::warn!("skipping {msg}")
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

struct Prepared {
    pipeline: CorpusPipeline,
    train: Vec<Example>,
    valid: Vec<Example>,
}

/// Fits the pipeline on the training records and writes it with both shards
/// into `out`. Without a validation file the last tenth of the corpus is held out.
fn prepare(cfg: &RunConfig, out: &Path) -> Result<Prepared> {
    let corpus = cfg.paths.require("corpus")?;
    let mut records: Vec<CorpusRecord> = read_jsonl(corpus)?;
    let valid_records = match &cfg.paths.valid {
        Some(p) => read_jsonl(p)?,
        None => {
            if records.len() < 2 {
                bail!(s2sm_core::Error::Format(
                    "need at least two records to hold out validation data".into()
                ));
            }
            let n_valid = (records.len() / 10).max(1);
            records.split_off(records.len() - n_valid)
        }
    };
    let pipeline = CorpusPipeline::fit(&records, cfg.pipeline.clone())?;
    let train = to_examples(&pipeline, &records)?;
    let valid = to_examples(&pipeline, &valid_records)?;
    pipeline.save(out)?;
    save_shard(&out.join(TRAIN_SHARD), &train)?;
    save_shard(&out.join(VALID_SHARD), &valid)?;
    eprintln!(
        "preprocessed train={} valid={} src_vocab={} tgt_vocab={}",
        train.len(),
        valid.len(),
        pipeline.src_vocab.len(),
        pipeline.tgt_vocab.len()
    );
    Ok(Prepared {
        pipeline,
        train,
        valid,
    })
}

pub fn preprocess(cfg: &RunConfig) -> Result<()> {
    prepare(cfg, cfg.paths.require("out")?)?;
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let (out, prepared) = match &cfg.paths.data {
        Some(dir) => {
            let out = cfg.paths.out.as_deref().unwrap_or(dir);
            let prepared = Prepared {
                pipeline: CorpusPipeline::load(dir)?,
                train: load_shard(&dir.join(TRAIN_SHARD))?,
                valid: load_shard(&dir.join(VALID_SHARD))?,
            };
            if out != dir.as_path() {
                prepared.pipeline.save(out)?;
            }
            (out, prepared)
        }
        None => {
            let out = cfg.paths.require("out")?;
            (out, prepare(cfg, out)?)
        }
    };
    let mut tc: TrainConfig = cfg.train.clone();
    tc.model.src_vocab = prepared.pipeline.src_vocab.len();
    tc.model.tgt_vocab = prepared.pipeline.tgt_vocab.len();
    tc.model.n_tf_bins = prepared.pipeline.tf_binner.bins();
    tc.model.n_idf_bins = prepared.pipeline.idf_binner.bins();
    let outcome = fit_model(
        &tc,
        &prepared.train,
        &prepared.valid,
        &prepared.pipeline.tgt_vocab,
        |e| eprintln!("{}", e.line()),
    )?;
    let path = out.join(CHECKPOINT);
    save_checkpoint(&path, &outcome.meta(&tc), &outcome.model)?;
    eprintln!(
        "saved {} best_epoch={} valid_loss={:.6}",
        path.display(),
        outcome.best_epoch,
        outcome.best_valid_loss
    );
    Ok(())
}

/// A document to summarize; the reference summary is optional.
#[derive(Deserialize)]
struct DecodeInput {
    id: Option<String>,
    document: String,
    #[serde(default)]
    summary: String,
}

#[derive(Serialize)]
struct AttentionDump<'a> {
    id: &'a str,
    attention: &'a [Vec<f64>],
}

pub fn decode(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.paths.require("model")?;
    let pipeline = CorpusPipeline::load(dir)?;
    let (_, model) = load_checkpoint(&dir.join(CHECKPOINT))?;
    let inputs: Vec<DecodeInput> = read_jsonl(cfg.paths.require("input")?)?;
    let records: Vec<CorpusRecord> = inputs
        .into_iter()
        .map(|d| CorpusRecord {
            id: d.id,
            document: d.document,
            summary: d.summary,
        })
        .collect();
    let examples: Vec<Example> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| pipeline.example(r, i, &RuleTagger))
        .collect::<s2sm_core::Result<_>>()?;
    let opts = &cfg.decode;
    let decoded: Vec<(DecodedSummary, Vec<Vec<f64>>)> = examples
        .par_iter()
        .map(|ex| decode_with_attention(&model, ex, &pipeline.tgt_vocab, opts))
        .collect::<s2sm_core::Result<_>>()?;
    let summaries: Vec<&DecodedSummary> = decoded.iter().map(|(d, _)| d).collect();
    write_jsonl(output(cfg.paths.output.as_deref())?, &summaries)?;
    if let Some(path) = &cfg.paths.attention {
        let dumps: Vec<AttentionDump<'_>> = decoded
            .iter()
            .map(|(d, a)| AttentionDump {
                id: &d.id,
                attention: a,
            })
            .collect();
        write_jsonl(output(Some(path))?, &dumps)?;
    }
    Ok(())
}

struct Line {
    id: Option<String>,
    summary: String,
    document: Option<String>,
}

fn read_lines(path: &Path) -> Result<Vec<Line>> {
    let values: Vec<Value> = read_jsonl(path)?;
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let field = |k: &str| v.get(k).and_then(Value::as_str).map(str::to_string);
            Ok(Line {
                id: field("id"),
                summary: field("summary").ok_or_else(|| {
                    s2sm_core::Error::Format(format!(
                        "{}:{}: missing \"summary\"",
                        path.display(),
                        i + 1
                    ))
                })?,
                document: field("document"),
            })
        })
        .collect()
}

/// Pairs system and reference lines by id when every line has one, else by position.
fn align<'a>(system: &'a [Line], reference: &'a [Line]) -> Result<Vec<(&'a Line, &'a Line)>> {
    if system.len() != reference.len() {
        bail!(s2sm_core::Error::Format(format!(
            "{} system lines but {} reference lines",
            system.len(),
            reference.len()
        )));
    }
    let ids = system.iter().chain(reference).all(|l| l.id.is_some());
    if !ids {
        return Ok(system.iter().zip(reference).collect());
    }
    let by_id: std::collections::HashMap<&str, &Line> = reference
        .iter()
        .map(|l| (l.id.as_deref().unwrap(), l))
        .collect();
    system
        .iter()
        .map(|s| {
            let id = s.id.as_deref().unwrap();
            by_id.get(id).map(|r| (s, *r)).ok_or_else(|| {
                s2sm_core::Error::Format(format!("no reference with id {id}")).into()
            })
        })
        .collect()
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let system = read_lines(cfg.paths.require("system")?)?;
    let reference = read_lines(cfg.paths.require("reference")?)?;
    let pairs = align(&system, &reference)?;
    let items: Vec<EvalItem<'_>> = pairs
        .iter()
        .map(|(s, r)| EvalItem {
            system: &s.summary,
            reference: &r.summary,
            source: r.document.as_deref(),
        })
        .collect();
    let (report, _) = evaluate(&items, cfg.eval.mode, cfg.eval.byte_budget);
    let mut w = output(cfg.paths.output.as_deref())?;
    serde_json::to_writer(&mut w, &report)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
