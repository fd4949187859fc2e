//! Raw text to training examples: tokenization, vocabularies, features,
//! pointer supervision, binary shards and per-batch vocabularies.

pub mod entities;
pub mod example;
pub mod features;
pub mod lvt;
pub mod pipeline;
pub mod tokenize;
pub mod vocab;

pub use entities::{anonymize_entities, is_entity_placeholder};
pub use example::{
    build_pointer_supervision, decode_example, encode_example, load_shard, read_shard, save_shard,
    write_shard, Example, PointerPolicy, PointerSupervision,
};
pub use features::{
    annotate_features, compute_tfidf, document_frequencies, FeatureBinner, RuleTagger, Tagger,
    TokenFeatures,
};
pub use lvt::{lvt_batch_vocab, lvt_for_examples, LvtVocab};
pub use pipeline::{
    parse_jsonl, read_jsonl, write_jsonl, CorpusPipeline, CorpusRecord, PipelineConfig,
};
pub use tokenize::{tokenize, tokenize_cased};
pub use vocab::{Vocabulary, BOS, EOS, NUM_SPECIALS, PAD, SPECIAL_TOKENS, UNK};
