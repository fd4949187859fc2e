use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tape, Var};

/// Additive scorer `v · f(W_h h + W_e e + W_c x + b)` shared by attention and
/// the switch. Attention applies `tanh` inside; the switch is linear.
#[derive(Clone, Copy, Debug)]
pub struct Scorer {
    pub wh: ParamId,
    pub we: ParamId,
    pub wc: ParamId,
    pub b: ParamId,
    pub v: ParamId,
}

impl Scorer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        h_dim: usize,
        e_dim: usize,
        c_dim: usize,
        dim: usize,
        scale: f64,
    ) -> Result<Self> {
        Ok(Scorer {
            wh: store.uniform(&format!("{name}.wh"), vec![dim, h_dim], scale, rng)?,
            we: store.uniform(&format!("{name}.we"), vec![dim, e_dim], scale, rng)?,
            wc: store.uniform(&format!("{name}.wc"), vec![dim, c_dim], scale, rng)?,
            b: store.zeros(&format!("{name}.b"), vec![dim])?,
            v: store.uniform(&format!("{name}.v"), vec![dim], scale, rng)?,
        })
    }

    pub fn ids(&self) -> [ParamId; 5] {
        [self.wh, self.we, self.wc, self.b, self.v]
    }

    /// `W_c x_j` for every row of `states`; computed once per document.
    pub fn keys(&self, tape: &mut Tape<'_>, states: Var) -> Result<Var> {
        let wc = tape.param(self.wc);
        tape.matmul_nt(states, wc)
    }

    /// `W_h h + W_e e + b`.
    pub fn query(&self, tape: &mut Tape<'_>, h: Var, e: Var) -> Result<Var> {
        let (wh, we, b) = (tape.param(self.wh), tape.param(self.we), tape.param(self.b));
        let a = tape.matvec(wh, h)?;
        let c = tape.matvec(we, e)?;
        let s = tape.add(a, c)?;
        tape.add(s, b)
    }

    /// Unnormalized scores over the rows of `keys`.
    pub fn scores(&self, tape: &mut Tape<'_>, keys: Var, h: Var, e: Var) -> Result<Var> {
        let q = self.query(tape, h, e)?;
        let pre = tape.add_row_bias(keys, q)?;
        let act = tape.tanh(pre);
        let v = tape.param(self.v);
        tape.matvec(act, v)
    }
}

/// Attention weights over source positions and the resulting context vector.
pub fn attend_flat(
    tape: &mut Tape<'_>,
    scorer: &Scorer,
    keys: Var,
    states: Var,
    h_prev: Var,
    e_prev: Var,
    mask: Option<&[bool]>,
) -> Result<(Var, Var)> {
    let s = scorer.scores(tape, keys, h_prev, e_prev)?;
    let w = tape.softmax(s, mask)?;
    let c = tape.vecmat(w, states)?;
    Ok((w, c))
}

/// Sentence-level attention weights.
pub fn attend_sentence(
    tape: &mut Tape<'_>,
    scorer: &Scorer,
    sent_keys: Var,
    h_prev: Var,
    e_prev: Var,
) -> Result<Var> {
    let s = scorer.scores(tape, sent_keys, h_prev, e_prev)?;
    tape.softmax(s, None)
}

/// Word attention re-weighted by the attention of each word's sentence and
/// renormalized over all positions.
pub fn rescale_hierarchical(
    tape: &mut Tape<'_>,
    p_w: Var,
    p_s: Var,
    sent_of_word: &[usize],
) -> Result<Var> {
    if tape.shape(p_w) != [sent_of_word.len()] {
        return Err(Error::shape(
            "rescale_hierarchical",
            tape.shape(p_w),
            &[sent_of_word.len()],
        ));
    }
    let per_word = tape.select(p_s, sent_of_word)?;
    let prod = tape.mul(p_w, per_word)?;
    tape.normalize(prod)
}

/// Exponentiated scores, zeroed where `keep` is 0. These are the positive
/// unnormalized weights tracked by temporal attention.
pub fn temporal_raw(tape: &mut Tape<'_>, scores: Var, keep: Option<Var>) -> Result<Var> {
    let e = tape.exp(scores);
    match keep {
        Some(k) => tape.mul(e, k),
        None => Ok(e),
    }
}

/// Divides the raw weights by the running sum of earlier raw weights and
/// renormalizes. `past` is `None` on the first step, where the divisor is all
/// ones. `pad_fill` holds 1 at padded positions so the divisor never vanishes
/// there. Returns the weights and the updated running sum.
pub fn temporal_rescale(
    tape: &mut Tape<'_>,
    alpha_raw: Var,
    past: Option<Var>,
    pad_fill: Option<Var>,
) -> Result<(Var, Var)> {
    let Some(beta) = past else {
        let w = tape.normalize(alpha_raw)?;
        return Ok((w, alpha_raw));
    };
    let divisor = match pad_fill {
        Some(p) => tape.add(beta, p)?,
        None => beta,
    };
    let ratio = tape.div(alpha_raw, divisor)?;
    let w = tape.normalize(ratio)?;
    let next = tape.add(beta, alpha_raw)?;
    Ok((w, next))
}
