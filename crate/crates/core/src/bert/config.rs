use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub vocab_size: usize,
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    /// Longest input including the leading `<CLS>`.
    pub max_len: usize,
    /// Longest pre-training piece.
    pub piece_len: usize,
    pub window: usize,
    pub stride: usize,
    pub threshold: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("hidden size {hidden} is not divisible by {heads} heads")]
    Heads { hidden: usize, heads: usize },
    #[error("pair of two {piece}-token pieces plus <CLS> exceeds max length {max}")]
    Piece { piece: usize, max: usize },
    #[error("window {window} plus <CLS> exceeds max length {max}")]
    Window { window: usize, max: usize },
    #[error("{0} must be positive")]
    Zero(&'static str),
}

impl TransformerConfig {
    /// L=3, H=64, A=2 with the scanning defaults.
    pub fn full(vocab_size: usize) -> Self {
        TransformerConfig {
            vocab_size,
            layers: 3,
            hidden: 64,
            heads: 2,
            ffn_mult: 4,
            max_len: 250,
            piece_len: 50,
            window: 80,
            stride: 16,
            threshold: 0.48,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (v, name) in [
            (self.vocab_size, "vocab_size"),
            (self.layers, "layers"),
            (self.hidden, "hidden"),
            (self.heads, "heads"),
            (self.ffn_mult, "ffn_mult"),
            (self.piece_len, "piece_len"),
            (self.window, "window"),
            (self.stride, "stride"),
        ] {
            if v == 0 {
                return Err(ConfigError::Zero(name));
            }
        }
        if self.hidden % self.heads != 0 {
            return Err(ConfigError::Heads { hidden: self.hidden, heads: self.heads });
        }
        if 2 * self.piece_len + 1 > self.max_len {
            return Err(ConfigError::Piece { piece: self.piece_len, max: self.max_len });
        }
        if self.window + 1 > self.max_len {
            return Err(ConfigError::Window { window: self.window, max: self.max_len });
        }
        Ok(())
    }
}
