//! Attentive encoder-decoder paraphrase model.
//!
//! A bidirectional GRU encodes the input utterance; a GRU decoder attends
//! over the encoder states and predicts the canonical utterance one token at
//! a time. The same parameters serve two evaluation paths: [`infer`] scores
//! one pair directly, [`batch_loss`] records a padded batch on a tape for
//! training.

mod batch;
pub mod infer;
mod params;

pub use batch::{batch_loss, gru_step, DropoutConfig, Pair};
pub use infer::{
    advance, decoder_init, decoder_step, encode, gru_cell, predict, score_encoded, sequence_log_prob,
    EncoderStates, StepOutput,
};
pub use params::{GruParams, GruVars, ModelDims, ModelParams, ParamVars};

pub(crate) use params::xavier;

/// Longest accepted utterance, in tokens.
pub const DEFAULT_MAX_LEN: usize = 60;
