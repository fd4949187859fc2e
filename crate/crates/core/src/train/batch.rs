use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Example;

/// Number of batches whose examples are sorted together by source length.
pub const SORT_WINDOW_BATCHES: usize = 10;

/// Indices of the examples of one mini-batch and its padded lengths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    /// Longest document of the batch; shorter ones are padded to it.
    pub src_len: usize,
    /// Most targets of any example of the batch.
    pub tgt_len: usize,
}

impl Batch {
    pub fn new(indices: Vec<usize>, examples: &[Example]) -> Self {
        let src_len = indices
            .iter()
            .map(|&i| examples[i].doc_len())
            .max()
            .unwrap_or(0);
        let tgt_len = indices
            .iter()
            .map(|&i| examples[i].num_targets())
            .max()
            .unwrap_or(0);
        Batch {
            indices,
            src_len,
            tgt_len,
        }
    }

    pub fn examples<'a>(&self, examples: &'a [Example]) -> Vec<&'a Example> {
        self.indices.iter().map(|&i| &examples[i]).collect()
    }

    /// Per-example source mask over the padded length.
    pub fn source_masks(&self, examples: &[Example]) -> Vec<Vec<bool>> {
        self.indices
            .iter()
            .map(|&i| {
                (0..self.src_len)
                    .map(|j| j < examples[i].doc_len())
                    .collect()
            })
            .collect()
    }

    /// Per-example target mask over the padded target length.
    pub fn target_masks(&self, examples: &[Example]) -> Vec<Vec<bool>> {
        self.indices
            .iter()
            .map(|&i| {
                (0..self.tgt_len)
                    .map(|t| t < examples[i].num_targets())
                    .collect()
            })
            .collect()
    }
}

/// Shuffles with a generator keyed on `(seed, epoch)`, sorts every window of
/// `SORT_WINDOW_BATCHES * batch_size` examples by source length, then cuts
/// consecutive batches.
pub fn make_batches(examples: &[Example], batch_size: usize, seed: u64, epoch: u64) -> Vec<Batch> {
    let batch_size = batch_size.max(1);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    if batch_size > 1 {
        for window in order.chunks_mut(SORT_WINDOW_BATCHES * batch_size) {
            window.sort_by_key(|&i| examples[i].doc_len());
        }
    }
    order
        .chunks(batch_size)
        .map(|c| Batch::new(c.to_vec(), examples))
        .collect()
}

/// Consecutive batches in corpus order, for evaluation.
pub fn sequential_batches(examples: &[Example], batch_size: usize) -> Vec<Batch> {
    let idx: Vec<usize> = (0..examples.len()).collect();
    idx.chunks(batch_size.max(1))
        .map(|c| Batch::new(c.to_vec(), examples))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BOS, EOS};

    fn ex(len: usize) -> Example {
        Example {
            id: len.to_string(),
            doc_tokens: vec![5; len],
            summary_tokens: vec![BOS, EOS],
            ..Default::default()
        }
    }

    #[test]
    fn window_sorted_by_length() {
        let exs = vec![ex(9), ex(3), ex(7)];
        for epoch in 0..5 {
            let b = make_batches(&exs, 1, 1, epoch);
            assert_eq!(b.len(), 3);
            let b = make_batches(&exs, 3, 1, epoch);
            let lens: Vec<usize> = b[0].indices.iter().map(|&i| exs[i].doc_len()).collect();
            assert_eq!(lens, vec![3, 7, 9]);
            assert_eq!(b[0].src_len, 9);
        }
    }

    #[test]
    fn deterministic_per_seed_and_epoch() {
        let exs: Vec<Example> = (1..40).map(ex).collect();
        assert_eq!(make_batches(&exs, 4, 9, 2), make_batches(&exs, 4, 9, 2));
        assert_ne!(make_batches(&exs, 1, 9, 2), make_batches(&exs, 1, 9, 3));
        let all: usize = make_batches(&exs, 4, 9, 2)
            .iter()
            .map(|b| b.indices.len())
            .sum();
        assert_eq!(all, exs.len());
    }

    #[test]
    fn masks_cover_padding() {
        let exs = vec![ex(2), ex(4)];
        let b = Batch::new(vec![0, 1], &exs);
        assert_eq!(b.source_masks(&exs)[0], vec![true, true, false, false]);
        assert_eq!(b.target_masks(&exs)[1], vec![true]);
    }
}
