//! `s2sm`: preprocess, train, decode and evaluate summarization models.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde_json::{json, Value};

use config::RunConfig;

/// Bad invocation or configuration; exits with status 1.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser, Debug)]
#[command(
    name = "s2sm",
    version,
    about = "Abstractive summarization with attentional encoder-decoders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit vocabularies and feature bins, then write example shards.
    Preprocess,
    /// Train a model and write its checkpoint.
    Train,
    /// Decode summaries for a JSONL corpus.
    Decode,
    /// Score system summaries against references.
    Eval,
    /// Write the synthetic copy corpus.
    GenCopy {
        #[arg(long, default_value_t = 200)]
        n: usize,
    },
    /// Write the synthetic templated news corpus.
    GenTemplate {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        highlights: usize,
    },
}

#[derive(Args, Debug)]
struct Opts {
    /// JSON file of dotted keys, e.g. {"train.model.hidden": 64}.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Enable the feature-rich encoder.
    #[arg(long, global = true)]
    features: bool,
    /// Enable the switching generator-pointer.
    #[arg(long, global = true)]
    switch: bool,
    #[arg(long, global = true)]
    hierarchical: bool,
    #[arg(long, global = true)]
    temporal: bool,
    #[arg(long, global = true)]
    lvt_size: Option<usize>,
    #[arg(long, global = true)]
    beam_size: Option<usize>,
    #[arg(long, global = true)]
    max_len: Option<usize>,
    #[arg(long, global = true)]
    fixed_length: Option<usize>,
    #[arg(long, global = true)]
    byte_budget: Option<usize>,
    /// f1, limited_recall or multisent.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Raw JSONL corpus.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Raw JSONL validation corpus.
    #[arg(long, global = true)]
    valid: Option<PathBuf>,
    /// Directory written by preprocess.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory holding a trained model.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// JSONL file for per-example attention matrices.
    #[arg(long, global = true)]
    attention: Option<PathBuf>,
    #[arg(long, global = true)]
    system: Option<PathBuf>,
    #[arg(long, global = true)]
    reference: Option<PathBuf>,
}

impl Opts {
    fn overrides(&self) -> Vec<(&'static str, Value)> {
        let mut o: Vec<(&'static str, Value)> = Vec::new();
        if let Some(s) = self.seed {
            o.push(("train.seed", json!(s)));
        }
        for (on, key) in [
            (self.features, "train.model.features"),
            (self.switch, "train.model.switch"),
            (self.hierarchical, "train.model.hierarchical"),
            (self.temporal, "train.model.temporal"),
        ] {
            if on {
                o.push((key, json!(true)));
            }
        }
        if let Some(v) = self.lvt_size {
            o.push(("train.lvt_size", json!(v)));
            o.push(("decode.lvt_size", json!(v)));
        }
        let scalars = [
            ("decode.beam_size", self.beam_size),
            ("decode.max_len", self.max_len),
            ("decode.fixed_length", self.fixed_length),
            ("eval.byte_budget", self.byte_budget),
        ];
        o.extend(
            scalars
                .into_iter()
                .filter_map(|(k, v)| v.map(|v| (k, json!(v)))),
        );
        if let Some(m) = &self.mode {
            o.push(("eval.mode", json!(m.replace('-', "_"))));
        }
        let paths = [
            ("paths.corpus", &self.corpus),
            ("paths.valid", &self.valid),
            ("paths.data", &self.data),
            ("paths.out", &self.out),
            ("paths.model", &self.model),
            ("paths.input", &self.input),
            ("paths.output", &self.output),
            ("paths.attention", &self.attention),
            ("paths.system", &self.system),
            ("paths.reference", &self.reference),
        ];
        o.extend(
            paths
                .into_iter()
                .filter_map(|(k, v)| v.as_ref().map(|p| (k, json!(p)))),
        );
        o
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    match err.downcast_ref::<s2sm_core::Error>() {
        Some(s2sm_core::Error::Divergence(_)) => 3,
        Some(s2sm_core::Error::Config(_)) => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    commands::init_threads()?;
    let cfg = RunConfig::resolve(cli.opts.config.as_deref(), &cli.opts.overrides())?;
    eprintln!("{}", cfg.summary_line());
    match cli.command {
        Command::Preprocess => commands::preprocess(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Decode => commands::decode(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::GenCopy { n } => {
            commands::write_records(&cfg, &s2sm_core::synth::gen_copy(n, cfg.train.seed))
        }
        Command::GenTemplate { n, highlights } => commands::write_records(
            &cfg,
            &s2sm_core::synth::gen_template(n, cfg.train.seed, highlights),
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            eprintln!("\n{}", Cli::command().render_help());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
