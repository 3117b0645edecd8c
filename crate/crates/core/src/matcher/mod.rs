//! Stage two: the query-by-text phoneme matcher.
//!
//! Keyword phonemes are embedded with a lookup table and act as queries in
//! two pre-norm cross-attention layers over projected audio features. The
//! aligned phoneme states feed a per-phoneme match head and a GRU whose last
//! state feeds the utterance-level head. Gradients are derived by hand; see
//! [`backward`].

mod gradcheck;
mod model;
mod train;
mod weights;

pub use gradcheck::{gradient_check, small_case, small_config, GradCheckReport};
pub use model::{backward, forward, loss, LossBreakdown, MatchResult};
pub use train::{train, train_from, TrainHyper, TrainOutcome};
pub use weights::{
    decode_weights, encode_weights, infer_config, load_weights, load_weights_inferred,
    save_weights, AttentionLayer, MatcherWeights, MWTS_MAGIC,
};

use ndarray::Array2;
use thiserror::Error;

use crate::phoneme::PhonemeSeq;

#[derive(Debug, Error)]
pub enum MatcherError {
    #[error("invalid matcher config: {0}")]
    BadConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("input features contain non-finite values")]
    NonFiniteInput,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset contains a single utterance label")]
    DegenerateLabels,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic bytes, expected MWTS1")]
    BadMagic,
    #[error("weights file does not match the config: {0}")]
    ShapeMismatch(String),
    #[error("weights file is truncated")]
    TruncatedFile,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    /// Width of the incoming audio features.
    pub d_enc: usize,
    pub n_attn_layers: usize,
    pub n_heads: usize,
    pub d_gru: usize,
    pub seed: u64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            vocab_size: 71,
            d_model: 64,
            d_enc: 144,
            n_attn_layers: 2,
            n_heads: 2,
            d_gru: 64,
            seed: 0,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<(), MatcherError> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("d_enc", self.d_enc),
            ("n_attn_layers", self.n_attn_layers),
            ("n_heads", self.n_heads),
            ("d_gru", self.d_gru),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(MatcherError::BadConfig(format!(
                "{name} must be at least 1"
            )));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(MatcherError::BadConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn ffn_dim(&self) -> usize {
        4 * self.d_model
    }
}

/// One training pair: audio features for a segment and the anchor keyword.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchExample {
    /// T'×d_enc.
    pub audio_features: Array2<f64>,
    pub anchor: PhonemeSeq,
    pub label_utt: bool,
    /// One entry per anchor phoneme.
    pub labels_phon: Vec<bool>,
}

impl MatchExample {
    /// Phoneme labels by positionwise equality of the anchor with the keyword
    /// actually present in the audio; positions past its end are mismatches.
    pub fn positional_labels(anchor: &PhonemeSeq, spoken: &PhonemeSeq) -> Vec<bool> {
        anchor
            .tokens()
            .iter()
            .enumerate()
            .map(|(i, t)| spoken.tokens().get(i) == Some(t))
            .collect()
    }
}
