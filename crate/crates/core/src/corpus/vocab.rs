use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const NUM_SPECIALS: usize = 4;

pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Bidirectional token/id map. Ids `0..4` are the specials; the rest are in
/// descending corpus frequency with ties broken lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    freqs: Vec<u64>,
}

impl Vocabulary {
    /// Counts tokens over `corpus` and keeps the `max_size - 4` most frequent.
    pub fn build<'a, I, S>(corpus: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for seq in corpus {
            for tok in seq {
                *counts.entry(tok.as_ref().to_string()).or_default() += 1;
            }
        }
        Self::from_counts(counts, max_size)
    }

    /// Like [`Vocabulary::build`], dropping tokens seen fewer than `min_count` times.
    pub fn build_min_count<'a, I, S>(corpus: I, max_size: usize, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for seq in corpus {
            for tok in seq {
                *counts.entry(tok.as_ref().to_string()).or_default() += 1;
            }
        }
        counts.retain(|_, c| *c >= min_count);
        Self::from_counts(counts, max_size)
    }

    pub fn from_counts(counts: HashMap<String, u64>, max_size: usize) -> Result<Self> {
        if max_size < NUM_SPECIALS + 1 {
            return Err(Error::Config(format!(
                "vocabulary max_size must be at least {}, got {max_size}",
                NUM_SPECIALS + 1
            )));
        }
        let mut ranked: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(t, _)| !SPECIAL_TOKENS.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - NUM_SPECIALS);

        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut freqs = vec![0; NUM_SPECIALS];
        for (t, c) in ranked {
            tokens.push(t);
            freqs.push(c);
        }
        Ok(Self::from_parts(tokens, freqs))
    }

    fn from_parts(tokens: Vec<String>, freqs: Vec<u64>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            tokens,
            index,
            freqs,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Id of `token`, or [`UNK`] when absent.
    pub fn id(&self, token: &str) -> u32 {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Corpus frequency; zero for specials and for vocabularies loaded from text.
    pub fn freq(&self, id: u32) -> u64 {
        self.freqs.get(id as usize).copied().unwrap_or(0)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < NUM_SPECIALS
            || tokens[..NUM_SPECIALS]
                .iter()
                .zip(SPECIAL_TOKENS)
                .any(|(a, b)| a != b)
        {
            return Err(Error::Format(
                "vocabulary must start with the four specials".into(),
            ));
        }
        let freqs = vec![0; tokens.len()];
        let vocab = Self::from_parts(tokens, freqs);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(Error::Format("vocabulary contains duplicate tokens".into()));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn corpus(tokens: &[&str]) -> Vec<Vec<String>> {
        vec![tokens.iter().map(|s| s.to_string()).collect()]
    }

    fn build(tokens: &[&str], max: usize) -> Vocabulary {
        let c = corpus(tokens);
        Vocabulary::build(c.iter().map(Vec::as_slice), max).unwrap()
    }

    #[test]
    fn frequency_order_and_truncation() {
        let v = build(&["c", "a", "b", "a", "b", "a"], 6);
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "<s>", "</s>", "a", "b"]);
        assert_eq!(v.freq(4), 3);
    }

    #[test]
    fn empty_corpus_gives_specials() {
        let v = build(&[], 10);
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = build(&["b", "a", "b", "a"], 5);
        assert_eq!(v.token(4), "a");
        assert!(!v.contains("b"));
    }

    #[test]
    fn small_max_size_rejected() {
        let c = corpus(&["a"]);
        assert!(Vocabulary::build(c.iter().map(Vec::as_slice), 4).is_err());
    }

    #[test]
    fn text_round_trip() {
        let v = build(&["x", "y", "y"], 10);
        let back = Vocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(back.tokens(), v.tokens());
        assert!(Vocabulary::from_text("a\nb\n").is_err());
    }

    proptest! {
        #[test]
        fn id_token_round_trip(words in prop::collection::vec("[a-e]{1,3}", 0..40)) {
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            let v = build(&refs, 12);
            for id in 0..v.len() as u32 {
                prop_assert_eq!(v.id(v.token(id)), id);
            }
            for w in 4..v.len() - 1 {
                let (a, b) = (v.freq(w as u32), v.freq(w as u32 + 1));
                prop_assert!(a > b || (a == b && v.token(w as u32) < v.token(w as u32 + 1)));
            }
        }
    }
}
