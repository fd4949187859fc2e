#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s2sm_core::corpus::{Example, LvtVocab, BOS, EOS};
use s2sm_core::model::{Emission, Model, ModelConfig};
use s2sm_core::tensor::ParamId;

/// Toy model variants used by the gradient checks.
pub fn variants() -> Vec<(&'static str, ModelConfig)> {
    let base = ModelConfig {
        src_vocab: 20,
        tgt_vocab: 20,
        d_word: 8,
        hidden: 8,
        attn_dim: 8,
        d_pos: 3,
        d_ner: 2,
        d_tf: 2,
        d_idf: 2,
        max_sentences: 4,
        d_sent_pos: 3,
        init_scale: 0.3,
        ..Default::default()
    };
    vec![
        ("flat", base.clone()),
        (
            "feature-rich",
            ModelConfig {
                features: true,
                ..base.clone()
            },
        ),
        (
            "switch",
            ModelConfig {
                switch: true,
                ..base.clone()
            },
        ),
        (
            "hierarchical",
            ModelConfig {
                hierarchical: true,
                switch: true,
                features: true,
                ..base.clone()
            },
        ),
        (
            "temporal",
            ModelConfig {
                temporal: true,
                switch: true,
                ..base
            },
        ),
    ]
}

/// Random but structurally valid example over the toy vocabularies.
pub fn random_example(
    rng: &mut ChaCha8Rng,
    config: &ModelConfig,
    max_doc: usize,
    max_targets: usize,
) -> Example {
    let n = rng.gen_range(1..=max_doc);
    let mut sent_ids = Vec::with_capacity(n);
    let mut s = 0u32;
    for j in 0..n {
        if j > 0 && rng.gen_bool(0.3) {
            s += 1;
        }
        sent_ids.push(s);
    }
    let pick = |rng: &mut ChaCha8Rng, k: usize| {
        (0..n)
            .map(|_| rng.gen_range(0..k as u32))
            .collect::<Vec<_>>()
    };
    let doc_tokens = pick(rng, config.src_vocab);
    let m = rng.gen_range(1..=max_targets);
    let mut summary_tokens = vec![BOS];
    let mut switch_targets = Vec::new();
    let mut pointer_targets = Vec::new();
    for i in 0..m {
        let last = i + 1 == m;
        if !last && rng.gen_bool(0.4) {
            summary_tokens.push(1);
            switch_targets.push(false);
            pointer_targets.push(Some(rng.gen_range(0..n as u32)));
        } else {
            summary_tokens.push(if last {
                EOS
            } else {
                rng.gen_range(4..config.tgt_vocab as u32)
            });
            switch_targets.push(true);
            pointer_targets.push(None);
        }
    }
    Example {
        id: "toy".into(),
        doc_surface: doc_tokens.iter().map(|t| format!("w{t}")).collect(),
        pos_ids: pick(rng, config.n_pos),
        ner_ids: pick(rng, config.n_ner),
        tf_bin: pick(rng, config.n_tf_bins),
        idf_bin: pick(rng, config.n_idf_bins),
        doc_tokens,
        sent_ids,
        summary_surface: Vec::new(),
        summary_tokens,
        switch_targets,
        pointer_targets,
    }
}

/// Mean per-target loss of `examples` under `model`.
pub fn loss_value(model: &Model, examples: &[&Example], lvt: &LvtVocab) -> f64 {
    let mut tape = model.tape();
    let (l, _) = model.batch_loss(&mut tape, examples, lvt).unwrap();
    tape.scalar(l)
}

/// Analytic gradient of the batch loss, one buffer per parameter.
pub fn analytic_gradient(model: &Model, examples: &[&Example], lvt: &LvtVocab) -> Vec<Vec<f64>> {
    let mut tape = model.tape();
    let (l, _) = model.batch_loss(&mut tape, examples, lvt).unwrap();
    tape.backward(l).unwrap();
    let g = tape.into_gradients();
    model
        .params
        .iter()
        .map(|(id, _, t)| g.get(id).map_or_else(|| vec![0.0; t.len()], |v| v.to_vec()))
        .collect()
}

/// Central difference of the loss along `dir` (one buffer per parameter).
pub fn directional_fd(
    model: &Model,
    examples: &[&Example],
    lvt: &LvtVocab,
    dir: &[Vec<f64>],
    h: f64,
) -> f64 {
    let mut m = model.clone();
    let ids: Vec<ParamId> = m.params.iter().map(|(id, _, _)| id).collect();
    let shift = |m: &mut Model, c: f64| {
        for (id, d) in ids.iter().zip(dir) {
            m.params
                .get_mut(*id)
                .data_mut()
                .iter_mut()
                .zip(d)
                .for_each(|(x, u)| *x += c * u);
        }
    };
    shift(&mut m, h);
    let up = loss_value(&m, examples, lvt);
    shift(&mut m, -2.0 * h);
    let down = loss_value(&m, examples, lvt);
    (up - down) / (2.0 * h)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between analytic and central-difference
/// directional derivatives, over one random direction per parameter tensor
/// plus one joint direction.
pub fn gradient_check(
    model: &Model,
    examples: &[&Example],
    lvt: &LvtVocab,
    rng: &mut ChaCha8Rng,
) -> (f64, String) {
    let grads = analytic_gradient(model, examples, lvt);
    let shapes: Vec<(String, usize)> = model
        .params
        .iter()
        .map(|(_, n, t)| (n.to_string(), t.len()))
        .collect();
    let mut worst = (0.0, String::new());
    let mut dirs: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for k in 0..shapes.len() {
        let d = shapes
            .iter()
            .enumerate()
            .map(|(i, (_, n))| {
                if i == k {
                    (0..*n).map(|_| rng.gen_range(-1.0..1.0)).collect()
                } else {
                    vec![0.0; *n]
                }
            })
            .collect();
        dirs.push((shapes[k].0.clone(), d));
    }
    let joint = shapes
        .iter()
        .map(|(_, n)| (0..*n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    dirs.push(("<all>".into(), joint));
    for (name, d) in dirs {
        let analytic: f64 = grads
            .iter()
            .zip(&d)
            .map(|(g, u)| g.iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let fd = directional_fd(model, examples, lvt, &d, 1e-5);
        let err = relative_error(analytic, fd);
        if err > worst.0 {
            worst = (err, format!("{name}: analytic {analytic:e} vs fd {fd:e}"));
        }
    }
    worst
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Path of a file in the bundled data directory.
pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

/// Fits a pipeline on `fit_on` and converts `records` with it.
pub fn prepare(
    fit_on: &[s2sm_core::corpus::CorpusRecord],
    records: &[s2sm_core::corpus::CorpusRecord],
    config: s2sm_core::corpus::PipelineConfig,
) -> (s2sm_core::corpus::CorpusPipeline, Vec<Example>) {
    let pipeline = s2sm_core::corpus::CorpusPipeline::fit(fit_on, config).unwrap();
    let examples = pipeline
        .examples(records, &s2sm_core::corpus::RuleTagger)
        .unwrap();
    (pipeline, examples)
}

/// The reference summary of `ex` as emissions, EOS included.
pub fn gold_emissions(ex: &Example) -> Vec<s2sm_core::model::Emission> {
    use s2sm_core::model::Emission;
    (0..ex.num_targets())
        .map(|i| match ex.pointer_targets[i] {
            Some(j) if !ex.switch_targets[i] => Emission::Copy(j),
            _ => Emission::Token(ex.summary_tokens[i + 1]),
        })
        .collect()
}

/// Toy scorer whose next-emission distribution is a seeded function of the prefix.
pub struct Toy {
    pub seed: u64,
}

pub const TOY_VOCAB: u32 = 4;
pub const TOY_EOS: u32 = 3;

impl Toy {
    pub fn logps(&self, prefix: &[u32]) -> Vec<f64> {
        let key = prefix
            .iter()
            .fold(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15), |h, &t| {
                (h ^ u64::from(t + 1)).wrapping_mul(0x100_0000_01b3)
            });
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let logits: Vec<f64> = (0..TOY_VOCAB).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let z = logits.iter().map(|x| x.exp()).sum::<f64>().ln();
        logits.iter().map(|x| x - z).collect()
    }
}

impl s2sm_core::infer::StepModel for Toy {
    type State = Vec<u32>;

    fn start(&self) -> s2sm_core::Result<Vec<u32>> {
        Ok(Vec::new())
    }

    fn step(&self, s: &Vec<u32>) -> s2sm_core::Result<(Vec<u32>, Vec<(Emission, f64)>)> {
        let opts = self
            .logps(s)
            .into_iter()
            .enumerate()
            .map(|(k, lp)| (Emission::Token(k as u32), lp))
            .collect();
        Ok((s.clone(), opts))
    }

    fn advance(&self, s: &Vec<u32>, e: Emission) -> Vec<u32> {
        let mut s = s.clone();
        if let Emission::Token(k) = e {
            s.push(k);
        }
        s
    }

    fn is_eos(&self, e: Emission) -> bool {
        e == Emission::Token(TOY_EOS)
    }
}
