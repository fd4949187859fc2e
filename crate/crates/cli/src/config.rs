//! Run configuration: typed defaults overlaid by a flat dotted-key JSON file,
//! then by command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use s2sm_core::corpus::PipelineConfig;
use s2sm_core::infer::DecodeOptions;
use s2sm_core::rouge::EvalMode;
use s2sm_core::train::TrainConfig;

use crate::Usage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub mode: EvalMode,
    pub byte_budget: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mode: EvalMode::F1,
            byte_budget: 75,
        }
    }
}

/// Input and output locations; every one can come from the file or a flag.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub attention: Option<PathBuf>,
    pub system: Option<PathBuf>,
    pub reference: Option<PathBuf>,
}

impl Paths {
    pub fn require(&self, key: &str) -> Result<&Path> {
        let v = match key {
            "corpus" => &self.corpus,
            "data" => &self.data,
            "out" => &self.out,
            "model" => &self.model,
            "input" => &self.input,
            "system" => &self.system,
            "reference" => &self.reference,
            _ => &None,
        };
        v.as_deref().ok_or_else(|| {
            Usage(format!(
                "missing --{key} (or paths.{key} in the config file)"
            ))
            .into()
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub pipeline: PipelineConfig,
    pub decode: DecodeOptions,
    pub eval: EvalConfig,
    pub paths: Paths,
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

fn unflatten(flat: &BTreeMap<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, v) in flat {
        let mut node = &mut root;
        let mut parts = key.split('.').peekable();
        while let Some(p) = parts.next() {
            if parts.peek().is_none() {
                node.insert(p.to_string(), v.clone());
            } else {
                node = node
                    .entry(p)
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("config keys form a tree");
            }
        }
    }
    Value::Object(root)
}

impl RunConfig {
    /// Every setting as a dotted key.
    pub fn flat(&self) -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        flatten(
            "",
            &serde_json::to_value(self).expect("config serializes"),
            &mut out,
        );
        out
    }

    /// Defaults, then `file`, then `overrides`, each by dotted key. Unknown
    /// keys are usage errors.
    pub fn resolve(file: Option<&Path>, overrides: &[(&str, Value)]) -> Result<RunConfig> {
        let mut flat = RunConfig::default().flat();
        let mut set = |key: &str, v: Value| -> Result<()> {
            match flat.get_mut(key) {
                Some(slot) => {
                    *slot = v;
                    Ok(())
                }
                None => Err(Usage(format!("unknown config key {key}")).into()),
            }
        };
        if let Some(path) = file {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| Usage(format!("{}: {e}", path.display())))?;
            if !v.is_object() {
                return Err(Usage(format!("{}: expected a JSON object", path.display())).into());
            }
            let mut given = BTreeMap::new();
            flatten("", &v, &mut given);
            for (k, v) in given {
                set(&k, v)?;
            }
        }
        for (k, v) in overrides {
            set(k, v.clone())?;
        }
        serde_json::from_value(unflatten(&flat))
            .map_err(|e| Usage(format!("invalid config: {e}")).into())
    }

    /// One-line rendering of the resolved settings.
    pub fn summary_line(&self) -> String {
        let flat: Map<String, Value> = self.flat().into_iter().collect();
        format!("config={} seed={}", Value::Object(flat), self.train.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::resolve(None, &[]).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(
            &path,
            r#"{"train.batch_size": 7, "train.model.hidden": 12, "decode.beam_size": 3}"#,
        )
        .unwrap();
        let c = RunConfig::resolve(Some(&path), &[("decode.beam_size", json!(9))]).unwrap();
        assert_eq!(c.train.batch_size, 7);
        assert_eq!(c.train.model.hidden, 12);
        assert_eq!(c.decode.beam_size, 9);
    }

    #[test]
    fn unknown_key_is_usage_error() {
        let err = RunConfig::resolve(None, &[("train.nope", json!(1))]).unwrap_err();
        assert!(err.downcast_ref::<Usage>().is_some());
    }

    #[test]
    fn optional_values_settable() {
        let c = RunConfig::resolve(
            None,
            &[
                ("decode.fixed_length", json!(30)),
                ("paths.out", json!("x")),
            ],
        )
        .unwrap();
        assert_eq!(c.decode.fixed_length, Some(30));
        assert_eq!(c.paths.out.as_deref(), Some(Path::new("x")));
    }
}
