use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::entities::is_entity_placeholder;
use super::vocab::{Vocabulary, EOS, UNK};
use crate::error::{Error, Result};

/// One training or evaluation pair in model-ready form.
///
/// `summary_tokens` is `[BOS, y_1, .., y_m, EOS]`. The per-target vectors
/// (`switch_targets`, `pointer_targets`) have one entry for every predicted
/// token, i.e. `summary_tokens.len() - 1` entries.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub doc_tokens: Vec<u32>,
    pub doc_surface: Vec<String>,
    pub pos_ids: Vec<u32>,
    pub ner_ids: Vec<u32>,
    pub tf_bin: Vec<u32>,
    pub idf_bin: Vec<u32>,
    pub sent_ids: Vec<u32>,
    pub summary_tokens: Vec<u32>,
    pub summary_surface: Vec<String>,
    /// `true` where the generator produces the target (g_i = 1).
    pub switch_targets: Vec<bool>,
    /// First source position holding the target word, set where g_i = 0.
    pub pointer_targets: Vec<Option<u32>>,
}

impl Example {
    pub fn doc_len(&self) -> usize {
        self.doc_tokens.len()
    }

    pub fn num_targets(&self) -> usize {
        self.summary_tokens.len().saturating_sub(1)
    }

    pub fn num_sentences(&self) -> usize {
        self.sent_ids.last().map_or(0, |s| *s as usize + 1)
    }

    /// Checks the structural invariants of an example.
    pub fn validate(&self) -> Result<()> {
        let n = self.doc_tokens.len();
        let fail = |m: String| Err(Error::Format(format!("example {}: {m}", self.id)));
        if n == 0 {
            return fail("empty document".into());
        }
        for (name, len) in [
            ("doc_surface", self.doc_surface.len()),
            ("pos_ids", self.pos_ids.len()),
            ("ner_ids", self.ner_ids.len()),
            ("tf_bin", self.tf_bin.len()),
            ("idf_bin", self.idf_bin.len()),
            ("sent_ids", self.sent_ids.len()),
        ] {
            if len != n {
                return fail(format!("{name} has {len} entries for {n} tokens"));
            }
        }
        if self.sent_ids[0] != 0
            || self
                .sent_ids
                .windows(2)
                .any(|w| w[1] < w[0] || w[1] > w[0] + 1)
        {
            return fail("sentence ids must start at 0 and grow by at most one".into());
        }
        let t = self.num_targets();
        if self.summary_tokens.len() < 2
            || self.switch_targets.len() != t
            || self.pointer_targets.len() != t
        {
            return fail("target vectors disagree with summary length".into());
        }
        for (i, (g, p)) in self
            .switch_targets
            .iter()
            .zip(&self.pointer_targets)
            .enumerate()
        {
            match (g, p) {
                (false, Some(p)) if (*p as usize) < n => {}
                (true, None) => {}
                _ => return fail(format!("inconsistent pointer supervision at target {i}")),
            }
        }
        Ok(())
    }
}

/// Which summary words are supervised as copies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointerPolicy {
    /// Words missing from the decoder vocabulary that occur in the source.
    #[default]
    Oov,
    /// Anonymized `@entityK` placeholders that occur in the source.
    Entities,
}

/// Per-target switch labels and pointer positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointerSupervision {
    /// Generator targets, `[y_1 .. y_m, EOS]` with UNK for non-generable words.
    pub target_ids: Vec<u32>,
    pub switch_targets: Vec<bool>,
    pub pointer_targets: Vec<Option<u32>>,
}

/// Builds g_i and p(i) for `summary` against `doc_surface`.
///
/// A word is pointed (g_i = 0) when the policy selects it and it occurs in the
/// source; the pointer is its first occurrence. Words that cannot be generated
/// and do not occur in the source fall back to the generator with UNK.
pub fn build_pointer_supervision<S: AsRef<str>>(
    doc_surface: &[S],
    summary: &[S],
    decoder_vocab: &Vocabulary,
    policy: PointerPolicy,
) -> PointerSupervision {
    let first_pos = |w: &str| doc_surface.iter().position(|d| d.as_ref() == w);
    let mut out = PointerSupervision {
        target_ids: Vec::with_capacity(summary.len() + 1),
        switch_targets: Vec::with_capacity(summary.len() + 1),
        pointer_targets: Vec::with_capacity(summary.len() + 1),
    };
    for w in summary {
        let w = w.as_ref();
        let in_vocab = decoder_vocab.get(w);
        let wants_pointer = match policy {
            PointerPolicy::Oov => in_vocab.is_none(),
            PointerPolicy::Entities => is_entity_placeholder(w),
        };
        match (wants_pointer, first_pos(w)) {
            (true, Some(p)) => {
                out.target_ids.push(in_vocab.unwrap_or(UNK));
                out.switch_targets.push(false);
                out.pointer_targets.push(Some(p as u32));
            }
            _ => {
                out.target_ids.push(in_vocab.unwrap_or(UNK));
                out.switch_targets.push(true);
                out.pointer_targets.push(None);
            }
        }
    }
    out.target_ids.push(EOS);
    out.switch_targets.push(true);
    out.pointer_targets.push(None);
    out
}

const SHARD_MAGIC: &[u8; 8] = b"S2SMEXv1";
const SHARD_VERSION: u32 = 1;
const NO_POINTER: u32 = u32::MAX;

struct Enc(Vec<u8>);

impl Enc {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn ids(&mut self, v: &[u32]) {
        self.u32(v.len() as u32);
        v.iter().for_each(|x| self.u32(*x));
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn strs(&mut self, v: &[String]) {
        self.u32(v.len() as u32);
        v.iter().for_each(|s| self.str(s));
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated example record".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn ids(&mut self) -> Result<Vec<u32>> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.u32()).collect()
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }
    fn strs(&mut self) -> Result<Vec<String>> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.str()).collect()
    }
}

pub fn encode_example(ex: &Example) -> Vec<u8> {
    let mut e = Enc(Vec::new());
    e.str(&ex.id);
    e.ids(&ex.doc_tokens);
    e.strs(&ex.doc_surface);
    e.ids(&ex.pos_ids);
    e.ids(&ex.ner_ids);
    e.ids(&ex.tf_bin);
    e.ids(&ex.idf_bin);
    e.ids(&ex.sent_ids);
    e.ids(&ex.summary_tokens);
    e.strs(&ex.summary_surface);
    let g: Vec<u32> = ex.switch_targets.iter().map(|b| *b as u32).collect();
    e.ids(&g);
    let p: Vec<u32> = ex
        .pointer_targets
        .iter()
        .map(|p| p.unwrap_or(NO_POINTER))
        .collect();
    e.ids(&p);
    e.0
}

pub fn decode_example(buf: &[u8]) -> Result<Example> {
    let mut d = Dec { buf, pos: 0 };
    let ex = Example {
        id: d.str()?,
        doc_tokens: d.ids()?,
        doc_surface: d.strs()?,
        pos_ids: d.ids()?,
        ner_ids: d.ids()?,
        tf_bin: d.ids()?,
        idf_bin: d.ids()?,
        sent_ids: d.ids()?,
        summary_tokens: d.ids()?,
        summary_surface: d.strs()?,
        switch_targets: d.ids()?.into_iter().map(|g| g != 0).collect(),
        pointer_targets: d
            .ids()?
            .into_iter()
            .map(|p| (p != NO_POINTER).then_some(p))
            .collect(),
    };
    if d.pos != buf.len() {
        return Err(Error::Format("trailing bytes in example record".into()));
    }
    ex.validate()?;
    Ok(ex)
}

/// Writes a shard: 16-byte header (magic, version, count) then
/// length-prefixed example records.
pub fn write_shard<W: Write>(mut w: W, examples: &[Example]) -> Result<()> {
    w.write_all(SHARD_MAGIC)?;
    w.write_all(&SHARD_VERSION.to_le_bytes())?;
    w.write_all(&(examples.len() as u32).to_le_bytes())?;
    for ex in examples {
        let rec = encode_example(ex);
        w.write_all(&(rec.len() as u32).to_le_bytes())?;
        w.write_all(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_shard<R: Read>(mut r: R) -> Result<Vec<Example>> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..8] != SHARD_MAGIC {
        return Err(Error::Format("not an example shard (bad magic)".into()));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if version != SHARD_VERSION {
        return Err(Error::Format(format!(
            "unsupported shard version {version}"
        )));
    }
    let count = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut rec = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut rec)?;
        out.push(decode_example(&rec)?);
    }
    Ok(out)
}

pub fn save_shard(path: &Path, examples: &[Example]) -> Result<()> {
    write_shard(BufWriter::new(File::create(path)?), examples)
}

pub fn load_shard(path: &Path) -> Result<Vec<Example>> {
    read_shard(BufReader::new(File::open(path)?))
}
