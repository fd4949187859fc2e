use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions and feature switches of one model variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub d_word: usize,
    pub hidden: usize,
    pub attn_dim: usize,
    pub features: bool,
    pub n_pos: usize,
    pub n_ner: usize,
    pub n_tf_bins: usize,
    pub n_idf_bins: usize,
    pub d_pos: usize,
    pub d_ner: usize,
    pub d_tf: usize,
    pub d_idf: usize,
    pub switch: bool,
    /// Give the pointer its own attention scorer instead of reusing the main one.
    pub separate_pointer_attention: bool,
    pub hierarchical: bool,
    pub max_sentences: usize,
    pub d_sent_pos: usize,
    pub temporal: bool,
    /// L2 penalty on the switch parameters.
    pub switch_l2: f64,
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            src_vocab: 0,
            tgt_vocab: 0,
            d_word: 100,
            hidden: 400,
            attn_dim: 400,
            features: false,
            n_pos: 11,
            n_ner: 2,
            n_tf_bins: 10,
            n_idf_bins: 10,
            d_pos: 20,
            d_ner: 15,
            d_tf: 10,
            d_idf: 10,
            switch: false,
            separate_pointer_attention: false,
            hierarchical: false,
            max_sentences: 64,
            d_sent_pos: 16,
            temporal: false,
            switch_l2: 0.0,
            init_scale: 0.1,
        }
    }
}

impl ModelConfig {
    /// Width of one encoder input vector.
    pub fn input_dim(&self) -> usize {
        if self.features {
            self.d_word + self.d_pos + self.d_ner + self.d_tf + self.d_idf
        } else {
            self.d_word
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.src_vocab == 0 || self.tgt_vocab == 0 {
            return fail("vocabulary sizes must be positive");
        }
        if self.d_word == 0 || self.hidden == 0 || self.attn_dim == 0 {
            return fail("dimensions must be positive");
        }
        if self.hierarchical && self.temporal {
            return fail("hierarchical and temporal attention are mutually exclusive");
        }
        if self.hierarchical && self.max_sentences == 0 {
            return fail("max_sentences must be positive");
        }
        if self.separate_pointer_attention && !self.switch {
            return fail("separate pointer attention needs the switch");
        }
        if !(self.init_scale > 0.0) || self.switch_l2 < 0.0 {
            return fail("init_scale must be positive and switch_l2 nonnegative");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_rich_width() {
        let mut c = ModelConfig::default();
        assert_eq!(c.input_dim(), 100);
        c.features = true;
        assert_eq!(c.input_dim(), 155);
    }

    #[test]
    fn exclusive_modes() {
        let c = ModelConfig {
            src_vocab: 10,
            tgt_vocab: 10,
            hierarchical: true,
            temporal: true,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
