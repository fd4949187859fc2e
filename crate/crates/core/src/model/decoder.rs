use crate::corpus::{LvtVocab, Vocabulary};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

use super::attention::Scorer;

/// Probabilities are floored here before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// One decoder time step.
#[derive(Clone, Copy, Debug)]
pub struct DecoderStep {
    pub h: Var,
    pub context: Var,
    /// Final attention distribution over (padded) source positions.
    pub attention: Var,
    /// Distribution over the slots of the batch vocabulary.
    pub gen: Var,
    /// Scalar probability that the generator is used.
    pub switch: Option<Var>,
    /// Distribution over source positions used for copying.
    pub pointer: Option<Var>,
    /// Running sum of raw attention weights, in temporal mode.
    pub trace: Option<Var>,
}

/// `σ(v · (W_h h + W_e e + W_c c + b))`.
pub fn switch_probability(
    tape: &mut Tape<'_>,
    params: &Scorer,
    h: Var,
    e: Var,
    c: Var,
) -> Result<Var> {
    let q = params.query(tape, h, e)?;
    let wc = tape.param(params.wc);
    let pc = tape.matvec(wc, c)?;
    let u = tape.add(q, pc)?;
    let v = tape.param(params.v);
    let prod = tape.mul(v, u)?;
    let logit = tape.sum(prod);
    Ok(tape.sigmoid(logit))
}

/// Negative log-likelihood of one target.
///
/// With `generate` the target must be in `lvt`; otherwise `pointer_target`
/// names the source position to copy. Without a switch the generator term
/// alone is used.
pub fn step_loss(
    tape: &mut Tape<'_>,
    step: &DecoderStep,
    lvt: &LvtVocab,
    target: u32,
    generate: bool,
    pointer_target: Option<usize>,
) -> Result<Var> {
    let (prob, branch) = if generate || step.switch.is_none() {
        let slot = lvt.slot(target).ok_or_else(|| {
            Error::Contract(format!(
                "target id {target} is outside the batch vocabulary"
            ))
        })?;
        let p = tape.index(step.gen, slot)?;
        (p, step.switch)
    } else {
        let j = pointer_target.ok_or_else(|| Error::Contract("pointer target missing".into()))?;
        let ptr = step
            .pointer
            .ok_or_else(|| Error::Contract("model has no pointer".into()))?;
        let p = tape.index(ptr, j)?;
        let s = step.switch.map(|s| tape.one_minus(s));
        (p, s)
    };
    let mut ll = tape.log_floor(prob, LOG_FLOOR);
    if let Some(b) = branch {
        let lb = tape.log_floor(b, LOG_FLOOR);
        ll = tape.add(ll, lb)?;
    }
    Ok(tape.neg(ll))
}

/// One decoded output: a decoder-vocabulary word or a copied source position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Emission {
    Token(u32),
    Copy(u32),
}

impl Emission {
    pub fn surface<'a>(&self, vocab: &'a Vocabulary, doc_surface: &'a [String]) -> &'a str {
        match *self {
            Emission::Token(id) => vocab.token(id),
            Emission::Copy(j) => &doc_surface[j as usize],
        }
    }
}

fn argmax(xs: &[f64]) -> (usize, f64) {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
}

/// Greedy choice: the best generated word when the switch is at least one
/// half, otherwise the best source position.
pub fn emit(gen: &[f64], switch: Option<f64>, pointer: Option<&[f64]>, lvt: &LvtVocab) -> Emission {
    let token = Emission::Token(lvt.ids()[argmax(gen).0]);
    match (switch, pointer) {
        (Some(s), Some(ptr)) if s < 0.5 => Emission::Copy(argmax(ptr).0 as u32),
        _ => token,
    }
}
