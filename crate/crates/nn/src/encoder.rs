//! Size-configurable BERT-style transformer encoder.

use rand::Rng;

use crate::attention::MultiHeadAttention;
use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::layers::{Embedding, LayerNorm, Linear};
use crate::tensor::ParamStore;

/// Number of segment (token type) embeddings.
pub const SEGMENTS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    /// Gradient-check scale.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            layers: 1,
            model_dim: 8,
            heads: 2,
            ff_dim: 16,
            vocab_size,
            max_positions: 64,
            dropout: 0.1,
        }
    }

    /// Default desk-scale encoder.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            layers: 2,
            model_dim: 32,
            heads: 4,
            ff_dim: 64,
            vocab_size,
            max_positions: 128,
            dropout: 0.1,
        }
    }

    /// Dimensions of BERT-base.
    pub fn base(vocab_size: usize) -> Self {
        Self {
            layers: 12,
            model_dim: 768,
            heads: 12,
            ff_dim: 3072,
            vocab_size,
            max_positions: 512,
            dropout: 0.1,
        }
    }

    /// Dimensions of BERT-large.
    pub fn large(vocab_size: usize) -> Self {
        Self {
            layers: 24,
            model_dim: 1024,
            heads: 16,
            ff_dim: 4096,
            vocab_size,
            max_positions: 512,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("layers", self.layers),
            ("model_dim", self.model_dim),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("vocab_size", self.vocab_size),
            ("max_positions", self.max_positions),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(NnError::Config(format!("{name} must be at least 1")));
        }
        if self.model_dim % self.heads != 0 {
            return Err(NnError::Config(format!(
                "model_dim {} is not divisible by heads {}",
                self.model_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attention: MultiHeadAttention,
    pub attention_norm: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub output_norm: LayerNorm,
}

impl EncoderLayer {
    fn new<R: Rng>(store: &mut ParamStore, name: &str, cfg: &EncoderConfig, rng: &mut R) -> Result<Self> {
        Ok(Self {
            attention: MultiHeadAttention::new(store, &format!("{name}.attention"), cfg.model_dim, cfg.heads, rng)?,
            attention_norm: LayerNorm::new(store, &format!("{name}.attention_norm"), cfg.model_dim),
            ff_in: Linear::new(store, &format!("{name}.ff_in"), cfg.model_dim, cfg.ff_dim, rng),
            ff_out: Linear::new(store, &format!("{name}.ff_out"), cfg.ff_dim, cfg.model_dim, rng),
            output_norm: LayerNorm::new(store, &format!("{name}.output_norm"), cfg.model_dim),
        })
    }

    /// Post-norm block: `LN(x + Attn(x))`, then `LN(h + FF(h))`.
    pub fn forward(&self, g: &mut Graph, x: Var, attn_mask: &[bool], dropout: f64) -> Result<Var> {
        let a = self.attention.forward(g, x, attn_mask)?;
        let a = g.dropout(a, dropout)?;
        let h = g.add(x, a)?;
        let h = self.attention_norm.forward(g, h)?;
        let f = self.ff_in.forward(g, h)?;
        let f = g.gelu(f);
        let f = self.ff_out.forward(g, f)?;
        let f = g.dropout(f, dropout)?;
        let out = g.add(h, f)?;
        self.output_norm.forward(g, out)
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub tokens: Embedding,
    pub positions: Embedding,
    pub segments: Embedding,
    pub embedding_norm: LayerNorm,
    pub layers: Vec<EncoderLayer>,
}

impl Encoder {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.model_dim;
        let tokens = Embedding::new(store, &format!("{name}.tokens"), config.vocab_size, d, rng);
        let positions = Embedding::new(store, &format!("{name}.positions"), config.max_positions, d, rng);
        let segments = Embedding::new(store, &format!("{name}.segments"), SEGMENTS, d, rng);
        let embedding_norm = LayerNorm::new(store, &format!("{name}.embedding_norm"), d);
        let layers = (0..config.layers)
            .map(|i| EncoderLayer::new(store, &format!("{name}.layer{i}"), &config, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            tokens,
            positions,
            segments,
            embedding_norm,
            layers,
        })
    }

    /// Contextual representation `[n, d]` for one (possibly right-padded) sequence.
    pub fn forward(&self, g: &mut Graph, token_ids: &[usize], segment_ids: &[usize], attn_mask: &[bool]) -> Result<Var> {
        let n = token_ids.len();
        if n == 0 {
            return Err(NnError::EmptySequence { op: "encoder" });
        }
        if n > self.config.max_positions {
            return Err(NnError::TooLong {
                len: n,
                max: self.config.max_positions,
            });
        }
        for (found, op) in [(segment_ids.len(), "encoder segments"), (attn_mask.len(), "encoder mask")] {
            if found != n {
                return Err(NnError::Shape {
                    op,
                    axis: 0,
                    expected: n,
                    found,
                });
            }
        }
        if let Some(&id) = token_ids.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(NnError::Vocabulary {
                op: "encoder",
                id,
                size: self.config.vocab_size,
            });
        }
        if let Some(&id) = segment_ids.iter().find(|&&id| id >= SEGMENTS) {
            return Err(NnError::Vocabulary {
                op: "encoder segments",
                id,
                size: SEGMENTS,
            });
        }
        let positions: Vec<usize> = (0..n).collect();
        let tok = self.tokens.forward(g, token_ids)?;
        let pos = self.positions.forward(g, &positions)?;
        let seg = self.segments.forward(g, segment_ids)?;
        let x = g.add(tok, pos)?;
        let x = g.add(x, seg)?;
        let x = self.embedding_norm.forward(g, x)?;
        let mut x = g.dropout(x, self.config.dropout)?;
        for layer in &self.layers {
            x = layer.forward(g, x, attn_mask, self.config.dropout)?;
        }
        Ok(x)
    }
}
