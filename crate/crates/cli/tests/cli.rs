use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_s2sm"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Trains the bundled configuration into `out`.
fn train_into(out: &Path, extra: &[&str]) -> Output {
    let cfg = data("config.json");
    let corpus = data("synthetic50.jsonl");
    let mut args = vec![
        "train",
        "--config",
        s(&cfg),
        "--corpus",
        s(&corpus),
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "train failed: {}", stderr(&o));
    o
}

#[test]
fn train_smoke_run_writes_checkpoint_and_epoch_log() {
    let dir = tempfile::tempdir().unwrap();
    let o = train_into(dir.path(), &[]);
    let err = stderr(&o);
    let first = err.lines().next().unwrap();
    assert!(
        first.starts_with("config={") && first.ends_with(" seed=1"),
        "{first}"
    );
    let epochs: Vec<&str> = err.lines().filter(|l| l.starts_with("epoch=")).collect();
    assert!(!epochs.is_empty());
    for line in epochs {
        let keys: Vec<&str> = line
            .split(' ')
            .map(|kv| kv.split('=').next().unwrap())
            .collect();
        assert_eq!(keys, ["epoch", "train_loss", "valid_loss", "seconds"]);
        for kv in line.split(' ') {
            kv.split('=').nth(1).unwrap().parse::<f64>().unwrap();
        }
    }
    assert!(dir.path().join("model.ckpt").exists());
}

#[test]
fn eval_identical_files_is_perfect() {
    let corpus = data("synthetic50.jsonl");
    for mode in ["f1", "multisent"] {
        let o = run(&[
            "eval",
            "--mode",
            mode,
            "--system",
            s(&corpus),
            "--reference",
            s(&corpus),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        for k in ["rouge1", "rouge2", "rougeL"] {
            assert_eq!(report[k]["f1"], 1.0, "{mode} {k}");
        }
        assert_eq!(report["n_examples"], 50);
    }
}

#[test]
fn fixed_length_decode_emits_exactly_thirty_words() {
    let dir = tempfile::tempdir().unwrap();
    train_into(dir.path(), &[]);
    let input = data("synthetic50.jsonl");
    let o = run(&[
        "decode",
        "--model",
        s(dir.path()),
        "--input",
        s(&input),
        "--fixed-length",
        "30",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 50);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(
            v["summary"].as_str().unwrap().split_whitespace().count(),
            30,
            "{line}"
        );
    }
}

#[test]
fn identical_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    train_into(a.path(), &["--switch"]);
    train_into(b.path(), &["--switch"]);
    assert_eq!(
        fs::read(a.path().join("model.ckpt")).unwrap(),
        fs::read(b.path().join("model.ckpt")).unwrap()
    );
    let input = data("synthetic50.jsonl");
    let decode = |dir: &Path| {
        let o = run(&["decode", "--model", s(dir), "--input", s(&input)]);
        assert!(o.status.success(), "{}", stderr(&o));
        o.stdout
    };
    assert_eq!(decode(a.path()), decode(b.path()));
}

#[test]
fn attention_dump_has_one_row_per_output_step() {
    let dir = tempfile::tempdir().unwrap();
    train_into(dir.path(), &[]);
    let input = data("synthetic50.jsonl");
    let att = dir.path().join("att.jsonl");
    let o = run(&[
        "decode",
        "--model",
        s(dir.path()),
        "--input",
        s(&input),
        "--attention",
        s(&att),
        "--max-len",
        "6",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dumps = fs::read_to_string(&att).unwrap();
    let first: serde_json::Value = serde_json::from_str(dumps.lines().next().unwrap()).unwrap();
    let rows = first["attention"].as_array().unwrap();
    assert!(!rows.is_empty() && rows.len() <= 6);
    for row in rows {
        let total: f64 = row
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn exit_codes() {
    let o = run(&["decode", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--beam-size"), "usage lists flags");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"train.no_such_key": 1}"#).unwrap();
    assert_eq!(run(&["train", "--config", s(&bad)]).status.code(), Some(1));

    let missing = dir.path().join("missing.jsonl");
    let o = run(&["eval", "--system", s(&missing), "--reference", s(&missing)]);
    assert_eq!(o.status.code(), Some(2));

    let garbled = dir.path().join("garbled.jsonl");
    fs::write(&garbled, "{not json\n").unwrap();
    let o = run(&["train", "--corpus", s(&garbled), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));

    let corpus = data("synthetic50.jsonl");
    let hot = dir.path().join("hot.json");
    let settings = r#"{"train.learning_rate": 1e300, "train.max_epochs": 2, "train.model.d_word": 8,
        "train.model.hidden": 8, "train.model.attn_dim": 8, "train.batch_size": 10}"#;
    fs::write(&hot, settings).unwrap();
    let o = run(&[
        "train",
        "--config",
        s(&hot),
        "--corpus",
        s(&corpus),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn generators_are_seeded() {
    let a = run(&["gen-copy", "--n", "5", "--seed", "3"]);
    let b = run(&["gen-copy", "--n", "5", "--seed", "3"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8(a.stdout).unwrap().lines().count(), 5);
    let t = run(&["gen-template", "--n", "3", "--highlights", "4"]);
    let text = String::from_utf8(t.stdout).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["summary"].as_str().unwrap().matches(" .").count(), 4);
    }
}

#[test]
fn preprocess_then_train_from_shards() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = data("synthetic50.jsonl");
    let o = run(&["preprocess", "--corpus", s(&corpus), "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "src.vocab",
        "tgt.vocab",
        "pipeline.json",
        "train.shard",
        "valid.shard",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let cfg = data("config.json");
    let o = run(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        s(dir.path()),
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("model.ckpt").exists());
}
