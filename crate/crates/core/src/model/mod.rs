//! Attentional encoder-decoder with optional tag features, switching
//! generator-pointer, hierarchical and temporal attention.

pub mod attention;
mod config;
pub mod decoder;
pub mod encoder;

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use attention::{
    attend_flat, attend_sentence, rescale_hierarchical, temporal_raw, temporal_rescale, Scorer,
};
pub use config::ModelConfig;
pub use decoder::{emit, step_loss, switch_probability, DecoderStep, Emission, LOG_FLOOR};
pub use encoder::{
    embed, encode_flat, encode_hierarchical, EmbeddingBank, EncoderStates, GruCell, SentenceLayer,
    TagTables,
};

use crate::corpus::{Example, LvtVocab, BOS};
use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tape, Var};

/// Handles of every learnable tensor, grouped by component.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub embeddings: EmbeddingBank,
    pub target_embedding: ParamId,
    pub enc_fwd: GruCell,
    pub enc_bwd: GruCell,
    pub sentence: Option<SentenceLayer>,
    pub sentence_attention: Option<Scorer>,
    pub init_w: ParamId,
    pub init_b: ParamId,
    pub attention: Scorer,
    pub pointer_attention: Option<Scorer>,
    pub decoder: GruCell,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub switch: Option<Scorer>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub ids: ModelParams,
}

/// Encoder outputs of one document as recorded on a tape, padded to a batch length.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub len: usize,
    pub source_tokens: Vec<usize>,
    /// `[P, 2H]`
    pub states: Var,
    pub keys: Var,
    pub pointer_keys: Option<Var>,
    pub sent_keys: Option<Var>,
    pub sent_of_word: Vec<usize>,
    pub mask: Vec<bool>,
    /// 1 at real positions, 0 at padding; present only when padded.
    pub keep: Option<Var>,
    /// 0 at real positions, 1 at padding; present only when padded.
    pub pad_fill: Option<Var>,
    pub init: Var,
}

impl Encoded {
    pub fn padded_len(&self) -> usize {
        self.mask.len()
    }

    /// Copies the values off the tape so later tapes can share them.
    pub fn values(&self, tape: &Tape<'_>) -> EncodedValues {
        let grab = |v: Var| (tape.shape(v).to_vec(), Rc::new(tape.value(v).to_vec()));
        EncodedValues {
            len: self.len,
            source_tokens: self.source_tokens.clone(),
            states: grab(self.states),
            keys: grab(self.keys),
            pointer_keys: self.pointer_keys.map(grab),
            sent_keys: self.sent_keys.map(grab),
            sent_of_word: self.sent_of_word.clone(),
            mask: self.mask.clone(),
            init: tape.value(self.init).to_vec(),
        }
    }
}

type Shared = (Vec<usize>, Rc<Vec<f64>>);

/// Tape-independent copy of [`Encoded`], cheap to clone.
#[derive(Clone, Debug)]
pub struct EncodedValues {
    pub len: usize,
    pub source_tokens: Vec<usize>,
    pub states: Shared,
    pub keys: Shared,
    pub pointer_keys: Option<Shared>,
    pub sent_keys: Option<Shared>,
    pub sent_of_word: Vec<usize>,
    pub mask: Vec<bool>,
    pub init: Vec<f64>,
}

impl EncodedValues {
    pub fn load(&self, tape: &mut Tape<'_>) -> Result<Encoded> {
        let mut put = |s: &Shared| tape.shared(s.0.clone(), s.1.clone());
        let states = put(&self.states)?;
        let keys = put(&self.keys)?;
        let pointer_keys = self.pointer_keys.as_ref().map(&mut put).transpose()?;
        let sent_keys = self.sent_keys.as_ref().map(&mut put).transpose()?;
        let (keep, pad_fill) = pad_vectors(tape, &self.mask);
        Ok(Encoded {
            len: self.len,
            source_tokens: self.source_tokens.clone(),
            states,
            keys,
            pointer_keys,
            sent_keys,
            sent_of_word: self.sent_of_word.clone(),
            mask: self.mask.clone(),
            keep,
            pad_fill,
            init: tape.vector(self.init.clone()),
        })
    }
}

fn pad_vectors(tape: &mut Tape<'_>, mask: &[bool]) -> (Option<Var>, Option<Var>) {
    if mask.iter().all(|m| *m) {
        return (None, None);
    }
    let keep = tape.vector(mask.iter().map(|m| if *m { 1.0 } else { 0.0 }).collect());
    let fill = tape.vector(mask.iter().map(|m| if *m { 0.0 } else { 1.0 }).collect());
    (Some(keep), Some(fill))
}

/// Summed loss of one example together with its number of targets.
#[derive(Clone, Copy, Debug)]
pub struct ExampleLoss {
    pub loss: Var,
    pub targets: usize,
}

impl Model {
    /// Registers all parameters, drawing weights from a generator seeded with `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let (h, a, s) = (c.hidden, c.attn_dim, c.init_scale);
        let mut store = ParamStore::new();
        let st = &mut store;
        let word = st.uniform("emb.word", vec![c.src_vocab, c.d_word], s, &mut rng)?;
        let tags = if c.features {
            Some(TagTables {
                pos: st.uniform("emb.pos", vec![c.n_pos, c.d_pos], s, &mut rng)?,
                ner: st.uniform("emb.ner", vec![c.n_ner, c.d_ner], s, &mut rng)?,
                tf: st.uniform("emb.tf", vec![c.n_tf_bins, c.d_tf], s, &mut rng)?,
                idf: st.uniform("emb.idf", vec![c.n_idf_bins, c.d_idf], s, &mut rng)?,
            })
        } else {
            None
        };
        let target_embedding =
            st.uniform("emb.target", vec![c.tgt_vocab, c.d_word], s, &mut rng)?;
        let d_in = c.input_dim();
        let enc_fwd = GruCell::new(st, &mut rng, "enc.fwd", d_in, h, s)?;
        let enc_bwd = GruCell::new(st, &mut rng, "enc.bwd", d_in, h, s)?;
        let (sentence, sentence_attention) = if c.hierarchical {
            let layer = SentenceLayer {
                fwd: GruCell::new(st, &mut rng, "sent.fwd", 2 * h, h, s)?,
                bwd: GruCell::new(st, &mut rng, "sent.bwd", 2 * h, h, s)?,
                positions: st.uniform(
                    "sent.pos",
                    vec![c.max_sentences, c.d_sent_pos],
                    s,
                    &mut rng,
                )?,
                max_sentences: c.max_sentences,
            };
            let scorer = Scorer::new(
                st,
                &mut rng,
                "sent.att",
                h,
                c.d_word,
                2 * h + c.d_sent_pos,
                a,
                s,
            )?;
            (Some(layer), Some(scorer))
        } else {
            (None, None)
        };
        let init_w = st.uniform("dec.init.w", vec![h, h], s, &mut rng)?;
        let init_b = st.zeros("dec.init.b", vec![h])?;
        let attention = Scorer::new(st, &mut rng, "att", h, c.d_word, 2 * h, a, s)?;
        let pointer_attention = if c.separate_pointer_attention {
            Some(Scorer::new(
                st,
                &mut rng,
                "ptr.att",
                h,
                c.d_word,
                2 * h,
                a,
                s,
            )?)
        } else {
            None
        };
        let decoder = GruCell::new(st, &mut rng, "dec.gru", c.d_word + 2 * h, h, s)?;
        let out_w = st.uniform("out.w", vec![c.tgt_vocab, 3 * h], s, &mut rng)?;
        let out_b = st.zeros("out.b", vec![c.tgt_vocab])?;
        let switch = if c.switch {
            Some(Scorer::new(
                st,
                &mut rng,
                "switch",
                h,
                c.d_word,
                2 * h,
                a,
                s,
            )?)
        } else {
            None
        };
        let ids = ModelParams {
            embeddings: EmbeddingBank { word, tags },
            target_embedding,
            enc_fwd,
            enc_bwd,
            sentence,
            sentence_attention,
            init_w,
            init_b,
            attention,
            pointer_attention,
            decoder,
            out_w,
            out_b,
            switch,
        };
        Ok(Model {
            config,
            params: store,
            ids,
        })
    }

    /// Rebuilds a model around stored parameter values, matched by name.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let mut model = Model::new(config, 0)?;
        if model.params.len() != params.len() {
            return Err(Error::Format(format!(
                "expected {} parameter tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        let ids: Vec<(ParamId, String)> = model
            .params
            .iter()
            .map(|(id, n, _)| (id, n.to_string()))
            .collect();
        for (id, name) in ids {
            let src = params
                .id(&name)
                .ok_or_else(|| Error::Format(format!("missing parameter {name}")))?;
            let t = params.get(src);
            let dst = model.params.get_mut(id);
            if t.shape() != dst.shape() {
                return Err(Error::Format(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    dst.shape()
                )));
            }
            dst.data_mut().copy_from_slice(t.data());
        }
        Ok(model)
    }

    pub fn tape(&self) -> Tape<'_> {
        Tape::with_params(&self.params)
    }

    /// Runs the encoder and precomputes attention keys. States are padded
    /// with zero rows up to `padded_len`, which are masked out of attention.
    pub fn encode(&self, tape: &mut Tape<'_>, ex: &Example, padded_len: usize) -> Result<Encoded> {
        let n = ex.doc_len();
        if padded_len < n {
            return Err(Error::Contract(format!(
                "padded length {padded_len} below document length {n}"
            )));
        }
        let p = &self.ids;
        let inputs = embed(tape, &p.embeddings, ex)?;
        let enc = match &p.sentence {
            Some(layer) => {
                encode_hierarchical(tape, &p.enc_fwd, &p.enc_bwd, layer, inputs, &ex.sent_ids)?
            }
            None => encode_flat(tape, &p.enc_fwd, &p.enc_bwd, inputs)?,
        };
        let states = tape.pad_rows(enc.word_states, padded_len)?;
        let keys = p.attention.keys(tape, states)?;
        let pointer_keys = p
            .pointer_attention
            .map(|s| s.keys(tape, states))
            .transpose()?;
        let sent_keys = match (&p.sentence_attention, enc.sent_states) {
            (Some(s), Some(ss)) => Some(s.keys(tape, ss)?),
            _ => None,
        };
        let mut sent_of_word = enc.sent_of_word;
        sent_of_word.resize(padded_len, 0);
        let mask: Vec<bool> = (0..padded_len).map(|j| j < n).collect();
        let (keep, pad_fill) = pad_vectors(tape, &mask);
        let (iw, ib) = (tape.param(p.init_w), tape.param(p.init_b));
        let pre = tape.matvec(iw, enc.final_backward)?;
        let pre = tape.add(pre, ib)?;
        let init = tape.tanh(pre);
        Ok(Encoded {
            len: n,
            source_tokens: ex.doc_tokens.iter().map(|t| *t as usize).collect(),
            states,
            keys,
            pointer_keys,
            sent_keys,
            sent_of_word,
            mask,
            keep,
            pad_fill,
            init,
        })
    }

    pub fn target_embedding(&self, tape: &mut Tape<'_>, id: u32) -> Result<Var> {
        let t = tape.param(self.ids.target_embedding);
        tape.row(t, id as usize)
    }

    /// Embedding fed back after an emission: the decoder-side embedding of a
    /// generated word, or the source-side embedding of a copied one.
    pub fn feedback(&self, tape: &mut Tape<'_>, enc: &Encoded, emission: Emission) -> Result<Var> {
        match emission {
            Emission::Token(id) => self.target_embedding(tape, id),
            Emission::Copy(j) => {
                let tok = *enc.source_tokens.get(j as usize).ok_or(Error::Lookup {
                    position: 0,
                    id: j as usize,
                    limit: enc.len,
                })?;
                let t = tape.param(self.ids.embeddings.word);
                tape.row(t, tok)
            }
        }
    }

    /// Generator softmax over the rows of `lvt` only.
    pub fn output_distribution(
        &self,
        tape: &mut Tape<'_>,
        h: Var,
        context: Var,
        lvt: &LvtVocab,
    ) -> Result<Var> {
        let o = tape.concat(&[h, context])?;
        let (ow, ob) = (tape.param(self.ids.out_w), tape.param(self.ids.out_b));
        let logits = tape.matvec_rows(ow, o, lvt.rows())?;
        let bias = tape.select(ob, lvt.rows())?;
        let logits = tape.add(logits, bias)?;
        tape.softmax(logits, None)
    }

    /// One decoder step from the previous state and feedback embedding.
    pub fn step(
        &self,
        tape: &mut Tape<'_>,
        enc: &Encoded,
        h_prev: Var,
        e_prev: Var,
        trace: Option<Var>,
        lvt: &LvtVocab,
    ) -> Result<DecoderStep> {
        if lvt.is_empty() {
            return Err(Error::Contract("empty batch vocabulary".into()));
        }
        let p = &self.ids;
        let mask = Some(enc.mask.as_slice());
        let scores = p.attention.scores(tape, enc.keys, h_prev, e_prev)?;
        let (attention, trace) =
            if let (Some(sa), Some(sk)) = (&p.sentence_attention, enc.sent_keys) {
                let pw = tape.softmax(scores, mask)?;
                let ps = attend_sentence(tape, sa, sk, h_prev, e_prev)?;
                (rescale_hierarchical(tape, pw, ps, &enc.sent_of_word)?, None)
            } else if self.config.temporal {
                let raw = temporal_raw(tape, scores, enc.keep)?;
                let (w, next) = temporal_rescale(tape, raw, trace, enc.pad_fill)?;
                (w, Some(next))
            } else {
                (tape.softmax(scores, mask)?, None)
            };
        let context = tape.vecmat(attention, enc.states)?;
        let x = tape.concat(&[e_prev, context])?;
        let h = p.decoder.step(tape, x, h_prev)?;
        let gen = self.output_distribution(tape, h, context, lvt)?;
        let switch = p
            .switch
            .as_ref()
            .map(|sw| switch_probability(tape, sw, h, e_prev, context))
            .transpose()?;
        let pointer = match (&p.switch, &p.pointer_attention, enc.pointer_keys) {
            (None, _, _) => None,
            (Some(_), Some(pa), Some(pk)) => {
                let s = pa.scores(tape, pk, h_prev, e_prev)?;
                Some(tape.softmax(s, mask)?)
            }
            (Some(_), _, _) => Some(attention),
        };
        Ok(DecoderStep {
            h,
            context,
            attention,
            gen,
            switch,
            pointer,
            trace,
        })
    }

    /// Teacher-forced loss of one example, summed over its targets.
    pub fn example_loss(
        &self,
        tape: &mut Tape<'_>,
        ex: &Example,
        padded_len: usize,
        lvt: &LvtVocab,
    ) -> Result<ExampleLoss> {
        let enc = self.encode(tape, ex, padded_len)?;
        let mut h = enc.init;
        let mut e = self.target_embedding(tape, BOS)?;
        let mut trace = None;
        let mut losses = Vec::with_capacity(ex.num_targets());
        for i in 0..ex.num_targets() {
            let step = self.step(tape, &enc, h, e, trace, lvt)?;
            let target = ex.summary_tokens[i + 1];
            let generate = !self.config.switch || ex.switch_targets[i];
            let pointer = ex.pointer_targets[i].map(|p| p as usize);
            losses.push(step_loss(
                tape,
                &step,
                lvt,
                lvt.restrict(target),
                generate,
                pointer,
            )?);
            let emitted = match (generate, pointer) {
                (false, Some(j)) => Emission::Copy(j as u32),
                _ => Emission::Token(target),
            };
            e = self.feedback(tape, &enc, emitted)?;
            h = step.h;
            trace = step.trace;
        }
        let loss = tape.add_n(&losses)?;
        Ok(ExampleLoss {
            loss,
            targets: losses.len(),
        })
    }

    /// `switch_l2 · Σ‖θ‖²` over the switch parameters, when enabled.
    pub fn switch_penalty(&self, tape: &mut Tape<'_>) -> Option<Var> {
        let sw = self.ids.switch.as_ref()?;
        if self.config.switch_l2 == 0.0 {
            return None;
        }
        let mut terms = Vec::new();
        for id in sw.ids() {
            let v = tape.param(id);
            let sq = tape.mul(v, v).ok()?;
            terms.push(tape.sum(sq));
        }
        let total = tape.add_n(&terms).ok()?;
        Some(tape.scale(total, self.config.switch_l2))
    }

    /// Mean per-target loss of a group of examples on one tape, all padded
    /// to the longest document.
    pub fn batch_loss(
        &self,
        tape: &mut Tape<'_>,
        examples: &[&Example],
        lvt: &LvtVocab,
    ) -> Result<(Var, usize)> {
        let padded = examples.iter().map(|e| e.doc_len()).max().unwrap_or(0);
        let mut parts = Vec::with_capacity(examples.len());
        let mut targets = 0;
        for ex in examples {
            let l = self.example_loss(tape, ex, padded, lvt)?;
            parts.push(l.loss);
            targets += l.targets;
        }
        if targets == 0 {
            return Err(Error::Contract("batch has no targets".into()));
        }
        let total = tape.add_n(&parts)?;
        let mut loss = tape.scale(total, 1.0 / targets as f64);
        if let Some(pen) = self.switch_penalty(tape) {
            loss = tape.add(loss, pen)?;
        }
        Ok((loss, targets))
    }
}
