use rand::Rng;

use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tape, Var};

/// GRU weights with the update, reset and candidate blocks stacked row-wise
/// in that order.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub input_dim: usize,
    pub hidden: usize,
    /// `[3H, d_in]`
    pub wx: ParamId,
    /// `[2H, H]`, recurrent weights of the two gates
    pub uzr: ParamId,
    /// `[H, H]`, recurrent weights of the candidate
    pub uh: ParamId,
    /// `[3H]`
    pub b: ParamId,
    zr_idx: Vec<usize>,
    h_idx: Vec<usize>,
    z_idx: Vec<usize>,
    r_idx: Vec<usize>,
}

impl GruCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        input_dim: usize,
        hidden: usize,
        scale: f64,
    ) -> Result<Self> {
        let h = hidden;
        Ok(GruCell {
            input_dim,
            hidden,
            wx: store.uniform(&format!("{name}.wx"), vec![3 * h, input_dim], scale, rng)?,
            uzr: store.uniform(&format!("{name}.uzr"), vec![2 * h, h], scale, rng)?,
            uh: store.uniform(&format!("{name}.uh"), vec![h, h], scale, rng)?,
            b: store.zeros(&format!("{name}.b"), vec![3 * h])?,
            zr_idx: (0..2 * h).collect(),
            h_idx: (2 * h..3 * h).collect(),
            z_idx: (0..h).collect(),
            r_idx: (h..2 * h).collect(),
        })
    }

    /// Input projections `W x + b` for every row of `xs`, shape `[N, 3H]`.
    pub fn project(&self, tape: &mut Tape<'_>, xs: Var) -> Result<Var> {
        let wx = tape.param(self.wx);
        let b = tape.param(self.b);
        let p = tape.matmul_nt(xs, wx)?;
        tape.add_row_bias(p, b)
    }

    /// One recurrence step given the input projection `xp` of shape `[3H]`.
    pub fn step_projected(&self, tape: &mut Tape<'_>, xp: Var, h: Var) -> Result<Var> {
        if tape.shape(h) != [self.hidden] {
            return Err(Error::Contract(format!(
                "gru state has shape {:?}, cell expects [{}]",
                tape.shape(h),
                self.hidden
            )));
        }
        let uzr = tape.param(self.uzr);
        let uh = tape.param(self.uh);
        let x_zr = tape.select(xp, &self.zr_idx)?;
        let x_h = tape.select(xp, &self.h_idx)?;
        let h_zr = tape.matvec(uzr, h)?;
        let pre = tape.add(x_zr, h_zr)?;
        let zr = tape.sigmoid(pre);
        let z = tape.select(zr, &self.z_idx)?;
        let r = tape.select(zr, &self.r_idx)?;
        let rh = tape.mul(r, h)?;
        let u = tape.matvec(uh, rh)?;
        let pre_h = tape.add(x_h, u)?;
        let cand = tape.tanh(pre_h);
        // (1 - z) h + z cand == h + z (cand - h)
        let diff = tape.sub(cand, h)?;
        let step = tape.mul(z, diff)?;
        tape.add(h, step)
    }

    pub fn step(&self, tape: &mut Tape<'_>, x: Var, h: Var) -> Result<Var> {
        if tape.shape(x) != [self.input_dim] {
            return Err(Error::Contract(format!(
                "gru input has shape {:?}, cell expects [{}]",
                tape.shape(x),
                self.input_dim
            )));
        }
        let wx = tape.param(self.wx);
        let b = tape.param(self.b);
        let p = tape.matvec(wx, x)?;
        let xp = tape.add(p, b)?;
        self.step_projected(tape, xp, h)
    }

    /// Runs over the rows of `xs` (forward or reversed) from a zero state and
    /// returns the state at every position, in position order.
    pub fn run(&self, tape: &mut Tape<'_>, xs: Var, reverse: bool) -> Result<Vec<Var>> {
        let n = tape.shape(xs)[0];
        let proj = self.project(tape, xs)?;
        let mut h = tape.vector(vec![0.0; self.hidden]);
        let mut out = vec![h; n];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..n).rev())
        } else {
            Box::new(0..n)
        };
        for t in order {
            let xp = tape.row(proj, t)?;
            h = self.step_projected(tape, xp, h)?;
            out[t] = h;
        }
        Ok(out)
    }
}

/// Word and tag embedding tables of the encoder.
#[derive(Clone, Debug)]
pub struct EmbeddingBank {
    pub word: ParamId,
    pub tags: Option<TagTables>,
}

#[derive(Clone, Copy, Debug)]
pub struct TagTables {
    pub pos: ParamId,
    pub ner: ParamId,
    pub tf: ParamId,
    pub idf: ParamId,
}

fn ids(xs: &[u32]) -> Vec<usize> {
    xs.iter().map(|x| *x as usize).collect()
}

/// Encoder input rows `[word | pos | ner | tf | idf]`, or word only when the
/// tag tables are absent.
pub fn embed(tape: &mut Tape<'_>, bank: &EmbeddingBank, ex: &Example) -> Result<Var> {
    let word = tape.param(bank.word);
    let w = tape.gather_rows(word, &ids(&ex.doc_tokens))?;
    let Some(t) = bank.tags else {
        return Ok(w);
    };
    let mut parts = vec![w];
    for (table, col) in [
        (t.pos, &ex.pos_ids),
        (t.ner, &ex.ner_ids),
        (t.tf, &ex.tf_bin),
        (t.idf, &ex.idf_bin),
    ] {
        let tv = tape.param(table);
        parts.push(tape.gather_rows(tv, &ids(col))?);
    }
    tape.concat(&parts)
}

/// Outputs of the source-side encoder for one document.
#[derive(Clone, Debug)]
pub struct EncoderStates {
    /// `[N, 2H]`, forward and backward states per position
    pub word_states: Var,
    /// `[N_s, 2H + d_sent_pos]` in hierarchical mode
    pub sent_states: Option<Var>,
    pub sent_of_word: Vec<usize>,
    /// Backward state at the first position, i.e. the last backward step.
    pub final_backward: Var,
}

pub fn encode_flat(
    tape: &mut Tape<'_>,
    fwd: &GruCell,
    bwd: &GruCell,
    inputs: Var,
) -> Result<EncoderStates> {
    let n = tape.shape(inputs)[0];
    if n == 0 {
        return Err(Error::Contract("cannot encode an empty document".into()));
    }
    let (f, b) = bi_run(tape, fwd, bwd, inputs)?;
    let word_states = join_states(tape, &f, &b)?;
    Ok(EncoderStates {
        word_states,
        sent_states: None,
        sent_of_word: vec![0; n],
        final_backward: b[0],
    })
}

fn bi_run(
    tape: &mut Tape<'_>,
    fwd: &GruCell,
    bwd: &GruCell,
    xs: Var,
) -> Result<(Vec<Var>, Vec<Var>)> {
    Ok((fwd.run(tape, xs, false)?, bwd.run(tape, xs, true)?))
}

fn join_states(tape: &mut Tape<'_>, f: &[Var], b: &[Var]) -> Result<Var> {
    let fm = tape.stack_rows(f)?;
    let bm = tape.stack_rows(b)?;
    tape.concat(&[fm, bm])
}

/// Contiguous `[start, end)` word spans of each sentence.
pub fn sentence_spans(sent_ids: &[u32]) -> Result<Vec<(usize, usize)>> {
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for (j, &s) in sent_ids.iter().enumerate() {
        let s = s as usize;
        if s == spans.len() {
            spans.push((j, j + 1));
        } else if s + 1 == spans.len() {
            spans[s].1 = j + 1;
        } else {
            return Err(Error::Contract(format!(
                "sentence id {s} at position {j} breaks contiguity"
            )));
        }
    }
    Ok(spans)
}

/// Parameters of the sentence layer of the hierarchical encoder.
#[derive(Clone, Debug)]
pub struct SentenceLayer {
    pub fwd: GruCell,
    pub bwd: GruCell,
    /// `[max_sentences, d_sent_pos]`
    pub positions: ParamId,
    pub max_sentences: usize,
}

/// Word-level bi-GRU as in [`encode_flat`], plus a sentence-level bi-GRU over
/// `[last forward | first backward]` word states of each sentence, with a
/// learned positional embedding appended to every sentence state.
pub fn encode_hierarchical(
    tape: &mut Tape<'_>,
    fwd: &GruCell,
    bwd: &GruCell,
    layer: &SentenceLayer,
    inputs: Var,
    sent_ids: &[u32],
) -> Result<EncoderStates> {
    let n = tape.shape(inputs)[0];
    if n == 0 {
        return Err(Error::Contract("cannot encode an empty document".into()));
    }
    if sent_ids.len() != n {
        return Err(Error::Contract(format!(
            "{} sentence ids for {n} positions",
            sent_ids.len()
        )));
    }
    let spans = sentence_spans(sent_ids)?;
    let (f, b) = bi_run(tape, fwd, bwd, inputs)?;
    let word_states = join_states(tape, &f, &b)?;
    let mut summaries = Vec::with_capacity(spans.len());
    for &(start, end) in &spans {
        summaries.push(tape.concat(&[f[end - 1], b[start]])?);
    }
    let sx = tape.stack_rows(&summaries)?;
    let (sf, sb) = bi_run(tape, &layer.fwd, &layer.bwd, sx)?;
    let sent_rnn = join_states(tape, &sf, &sb)?;
    if spans.len() > layer.max_sentences {
        log::warn!(
            "{} sentences exceed the {} positional embeddings; reusing the last one",
            spans.len(),
            layer.max_sentences
        );
    }
    let pos_ids: Vec<usize> = (0..spans.len())
        .map(|s| s.min(layer.max_sentences - 1))
        .collect();
    let table = tape.param(layer.positions);
    let pos = tape.gather_rows(table, &pos_ids)?;
    let sent_states = tape.concat(&[sent_rnn, pos])?;
    Ok(EncoderStates {
        word_states,
        sent_states: Some(sent_states),
        sent_of_word: sent_ids.iter().map(|s| *s as usize).collect(),
        final_backward: b[0],
    })
}
