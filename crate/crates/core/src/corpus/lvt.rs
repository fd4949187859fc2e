use std::collections::{BTreeSet, HashMap};

use super::example::Example;
use super::vocab::{Vocabulary, NUM_SPECIALS, UNK};
use crate::error::{Error, Result};

/// Decoder-vocabulary subset used for one mini-batch softmax.
///
/// Ids are kept in ascending order; position `k` of a generator distribution
/// refers to `ids()[k]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LvtVocab {
    ids: Vec<u32>,
    rows: Vec<usize>,
    slot: HashMap<u32, usize>,
}

impl LvtVocab {
    pub fn from_ids(ids: impl IntoIterator<Item = u32>) -> Result<Self> {
        let ids: Vec<u32> = ids
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if ids.is_empty() {
            return Err(Error::Contract("empty LVT vocabulary".into()));
        }
        let slot = ids.iter().enumerate().map(|(k, id)| (*id, k)).collect();
        let rows = ids.iter().map(|i| *i as usize).collect();
        Ok(LvtVocab { ids, rows, slot })
    }

    /// Every id of a vocabulary of size `n`.
    pub fn full(n: usize) -> Result<Self> {
        Self::from_ids(0..n as u32)
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// The ids as row indices of the output layer.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.slot.contains_key(&id)
    }

    /// Position of `id` inside the restricted distribution.
    pub fn slot(&self, id: u32) -> Option<usize> {
        self.slot.get(&id).copied()
    }

    /// `id` if it is in the set, otherwise UNK.
    pub fn restrict(&self, id: u32) -> u32 {
        if self.contains(id) {
            id
        } else {
            UNK
        }
    }
}

/// Specials, every source word of the batch that the decoder vocabulary
/// knows, then the most frequent decoder words until `lvt_size` is reached.
/// The source words are always kept, even past `lvt_size`.
pub fn lvt_batch_vocab<'a, I>(
    docs: I,
    decoder_vocab: &Vocabulary,
    lvt_size: usize,
) -> Result<LvtVocab>
where
    I: IntoIterator<Item = &'a [String]>,
{
    if lvt_size < NUM_SPECIALS {
        return Err(Error::Config(format!(
            "lvt_size must be at least {NUM_SPECIALS}"
        )));
    }
    let mut set: BTreeSet<u32> = (0..NUM_SPECIALS as u32).collect();
    for doc in docs {
        set.extend(doc.iter().filter_map(|w| decoder_vocab.get(w)));
    }
    let target = lvt_size.min(decoder_vocab.len());
    let mut next = NUM_SPECIALS as u32;
    while set.len() < target && (next as usize) < decoder_vocab.len() {
        set.insert(next);
        next += 1;
    }
    LvtVocab::from_ids(set)
}

pub fn lvt_for_examples(
    examples: &[&Example],
    decoder_vocab: &Vocabulary,
    lvt_size: usize,
) -> Result<LvtVocab> {
    lvt_batch_vocab(
        examples.iter().map(|e| e.doc_surface.as_slice()),
        decoder_vocab,
        lvt_size,
    )
}
