//! Beam-search decoding, fixed-length decoding and output records.

mod beam;

use std::collections::HashSet;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

pub use beam::{beam_search, Hypothesis, StepModel, Termination};

use crate::corpus::{lvt_batch_vocab, Example, LvtVocab, Vocabulary, BOS, EOS};
use crate::error::{Error, Result};
use crate::model::{Emission, EncodedValues, Model};

/// Decoder state between steps of one hypothesis.
#[derive(Clone, Debug)]
pub struct NeuralState {
    pub h: Rc<Vec<f64>>,
    pub trace: Option<Rc<Vec<f64>>>,
    pub prev: Emission,
}

/// A trained model bound to one source document.
pub struct NeuralDecoder<'m> {
    model: &'m Model,
    encoded: EncodedValues,
    lvt: LvtVocab,
}

impl<'m> NeuralDecoder<'m> {
    pub fn new(model: &'m Model, ex: &Example, lvt: LvtVocab) -> Result<Self> {
        let mut tape = model.tape();
        let enc = model.encode(&mut tape, ex, ex.doc_len())?;
        Ok(NeuralDecoder {
            model,
            encoded: enc.values(&tape),
            lvt,
        })
    }

    pub fn lvt(&self) -> &LvtVocab {
        &self.lvt
    }

    /// Replays `emissions` and collects the attention weights of every step.
    pub fn attention_trace(&self, emissions: &[Emission]) -> Result<Vec<Vec<f64>>> {
        let mut state = self.start()?;
        let mut rows = Vec::with_capacity(emissions.len());
        for &e in emissions {
            let (next, d) = self.distributions(&state)?;
            rows.push(d.attention);
            state = self.advance(&next, e);
        }
        Ok(rows)
    }

    /// Generator, switch and pointer probabilities of the next step.
    pub fn distributions(&self, state: &NeuralState) -> Result<(NeuralState, StepDistributions)> {
        let model = self.model;
        let mut tape = model.tape();
        let enc = self.encoded.load(&mut tape)?;
        let h = tape.vector(state.h.as_ref().clone());
        let e = model.feedback(&mut tape, &enc, state.prev)?;
        let trace = state
            .trace
            .as_ref()
            .map(|t| tape.vector(t.as_ref().clone()));
        let step = model.step(&mut tape, &enc, h, e, trace, &self.lvt)?;
        let next = NeuralState {
            h: Rc::new(tape.value(step.h).to_vec()),
            trace: step.trace.map(|t| Rc::new(tape.value(t).to_vec())),
            prev: state.prev,
        };
        let dists = StepDistributions {
            gen: tape.value(step.gen).to_vec(),
            switch: step.switch.map(|s| tape.scalar(s)),
            pointer: step.pointer.map(|p| tape.value(p).to_vec()),
            attention: tape.value(step.attention).to_vec(),
        };
        Ok((next, dists))
    }
}

#[derive(Clone, Debug)]
pub struct StepDistributions {
    pub gen: Vec<f64>,
    pub switch: Option<f64>,
    pub pointer: Option<Vec<f64>>,
    pub attention: Vec<f64>,
}

impl StepDistributions {
    /// Log-probability of every emission: generated words weighted by the
    /// switch and source positions weighted by its complement.
    pub fn candidates(&self, lvt: &LvtVocab) -> Vec<(Emission, f64)> {
        let s = self.switch.unwrap_or(1.0);
        let mut out: Vec<(Emission, f64)> = lvt
            .ids()
            .iter()
            .zip(&self.gen)
            .map(|(id, p)| (Emission::Token(*id), (s * p).ln()))
            .collect();
        if let Some(ptr) = &self.pointer {
            out.extend(
                ptr.iter()
                    .enumerate()
                    .map(|(j, p)| (Emission::Copy(j as u32), ((1.0 - s) * p).ln())),
            );
        }
        out
    }
}

impl StepModel for NeuralDecoder<'_> {
    type State = NeuralState;

    fn start(&self) -> Result<NeuralState> {
        Ok(NeuralState {
            h: Rc::new(self.encoded.init.clone()),
            trace: None,
            prev: Emission::Token(BOS),
        })
    }

    fn step(&self, state: &NeuralState) -> Result<(NeuralState, Vec<(Emission, f64)>)> {
        let (next, d) = self.distributions(state)?;
        Ok((next, d.candidates(&self.lvt)))
    }

    fn advance(&self, next: &NeuralState, emission: Emission) -> NeuralState {
        NeuralState {
            prev: emission,
            ..next.clone()
        }
    }

    fn is_eos(&self, emission: Emission) -> bool {
        emission == Emission::Token(EOS)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub beam_size: usize,
    pub max_len: usize,
    /// Suppress EOS and emit exactly this many words.
    pub fixed_length: Option<usize>,
    pub lvt_size: usize,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            beam_size: 5,
            max_len: 30,
            fixed_length: None,
            lvt_size: 2000,
        }
    }
}

/// One line of decoder output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodedSummary {
    pub id: String,
    pub summary: String,
    /// Source index of every copied word, in output order.
    pub copy_positions: Vec<usize>,
    pub avg_logprob: f64,
}

impl DecodedSummary {
    pub fn tokens(&self) -> Vec<&str> {
        self.summary.split_whitespace().collect()
    }
}

/// Decodes one example with beam search.
pub fn decode_example(
    model: &Model,
    ex: &Example,
    tgt_vocab: &Vocabulary,
    opts: &DecodeOptions,
) -> Result<DecodedSummary> {
    let (_, best) = search(model, ex, tgt_vocab, opts)?;
    Ok(summarize(ex, tgt_vocab, &best))
}

/// Decodes one example and also returns its attention matrix, one row of
/// source weights per output step.
pub fn decode_with_attention(
    model: &Model,
    ex: &Example,
    tgt_vocab: &Vocabulary,
    opts: &DecodeOptions,
) -> Result<(DecodedSummary, Vec<Vec<f64>>)> {
    let (dec, best) = search(model, ex, tgt_vocab, opts)?;
    let attention = dec.attention_trace(&best.emissions)?;
    Ok((summarize(ex, tgt_vocab, &best), attention))
}

fn search<'m>(
    model: &'m Model,
    ex: &Example,
    tgt_vocab: &Vocabulary,
    opts: &DecodeOptions,
) -> Result<(NeuralDecoder<'m>, Hypothesis<NeuralState>)> {
    let lvt = lvt_batch_vocab([ex.doc_surface.as_slice()], tgt_vocab, opts.lvt_size)?;
    let dec = NeuralDecoder::new(model, ex, lvt)?;
    let termination = match opts.fixed_length {
        Some(n) => Termination::Fixed { n },
        None => Termination::Eos {
            max_len: opts.max_len,
        },
    };
    let best = beam_search(&dec, opts.beam_size, termination)?;
    Ok((dec, best))
}

/// Decodes with fixed length `n_words`.
pub fn decode_fixed_length(
    model: &Model,
    ex: &Example,
    tgt_vocab: &Vocabulary,
    beam_size: usize,
    n_words: usize,
    lvt_size: usize,
) -> Result<DecodedSummary> {
    let opts = DecodeOptions {
        beam_size,
        max_len: n_words,
        fixed_length: Some(n_words),
        lvt_size,
    };
    decode_example(model, ex, tgt_vocab, &opts)
}

fn summarize<S>(ex: &Example, vocab: &Vocabulary, hyp: &Hypothesis<S>) -> DecodedSummary {
    let words = hyp.words();
    let summary: Vec<&str> = words
        .iter()
        .map(|e| e.surface(vocab, &ex.doc_surface))
        .collect();
    let copy_positions = words
        .iter()
        .filter_map(|e| match e {
            Emission::Copy(j) => Some(*j as usize),
            Emission::Token(_) => None,
        })
        .collect();
    DecodedSummary {
        id: ex.id.clone(),
        summary: summary.join(" "),
        copy_positions,
        avg_logprob: hyp.avg_logp(),
    }
}

/// Percentage of summary tokens that occur anywhere in the source.
pub fn src_copy_rate<S: AsRef<str>, T: AsRef<str>>(summary: &[S], source: &[T]) -> Result<f64> {
    if summary.is_empty() {
        return Err(Error::UndefinedRate("copy rate of an empty summary".into()));
    }
    let src: HashSet<&str> = source.iter().map(AsRef::as_ref).collect();
    let hits = summary.iter().filter(|w| src.contains(w.as_ref())).count();
    Ok(100.0 * hits as f64 / summary.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_rate() {
        assert_eq!(src_copy_rate(&["a", "b"], &["a", "c"]).unwrap(), 50.0);
        assert_eq!(src_copy_rate(&["a", "a"], &["a"]).unwrap(), 100.0);
        assert!(matches!(
            src_copy_rate::<&str, &str>(&[], &["a"]),
            Err(Error::UndefinedRate(_))
        ));
    }
}
