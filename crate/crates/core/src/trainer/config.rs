use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::Transform;
use crate::error::{Error, Result};
use crate::model::{DropoutConfig, DEFAULT_MAX_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingInit {
    #[default]
    Random,
    Pretrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Hyperparameters for one training run. Missing JSON keys take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub state_size: usize,
    pub embed_dim: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub input_keep: f64,
    pub output_keep: f64,
    pub dropout: bool,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub embedding_init: EmbeddingInit,
    pub embedding_transform: Transform,
    pub precision: Precision,
    pub max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            state_size: 100,
            embed_dim: 300,
            batch_size: 512,
            clip_norm: 5.0,
            input_keep: 0.7,
            output_keep: 0.5,
            dropout: true,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 300,
            patience: 5,
            seed: 0,
            embedding_init: EmbeddingInit::Random,
            embedding_transform: Transform::None,
            precision: Precision::F64,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Range(msg));
        if self.state_size == 0 || self.embed_dim == 0 {
            return fail("state_size and embed_dim must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.clip_norm > 0.0) {
            return fail(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        self.dropout_config().validate()?;
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return fail("learning_rate and epsilon must be positive".into());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if self.patience == 0 {
            return fail("patience must be at least 1".into());
        }
        if self.max_len == 0 {
            return fail("max_len must be at least 1".into());
        }
        if self.embedding_init == EmbeddingInit::Random && self.embedding_transform != Transform::None {
            return fail("embedding_transform applies only to pretrained initialization".into());
        }
        Ok(())
    }

    pub fn dropout_config(&self) -> DropoutConfig {
        DropoutConfig {
            input_keep: self.input_keep,
            output_keep: self.output_keep,
            enabled: self.dropout,
        }
    }

    pub fn adam(&self) -> numcore::AdamConfig {
        numcore::AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    /// Label such as `random`, `pretrained` or `pretrained+es`.
    pub fn init_label(&self) -> String {
        match (self.embedding_init, self.embedding_transform) {
            (EmbeddingInit::Random, _) => "random".into(),
            (EmbeddingInit::Pretrained, Transform::None) => "pretrained".into(),
            (EmbeddingInit::Pretrained, t) => format!("pretrained+{}", t.label()),
        }
    }

    /// SHA-256 of the JSON encoding, hex encoded.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
