//! Multi-head scaled dot-product self-attention.

use rand::Rng;

use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::layers::Linear;
use crate::tensor::ParamStore;

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(NnError::Config(format!(
                "model dimension {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            query: Linear::new(store, &format!("{name}.query"), dim, dim, rng),
            key: Linear::new(store, &format!("{name}.key"), dim, dim, rng),
            value: Linear::new(store, &format!("{name}.value"), dim, dim, rng),
            output: Linear::new(store, &format!("{name}.output"), dim, dim, rng),
            heads,
            dim,
        })
    }

    /// `attn_mask[j]` is true for real tokens and false for padding; padded
    /// positions are never attended to.
    pub fn forward(&self, g: &mut Graph, x: Var, attn_mask: &[bool]) -> Result<Var> {
        self.forward_with_weights(g, x, attn_mask).map(|(out, _)| out)
    }

    /// Also returns the per-head `[n, n]` attention weight matrices.
    pub fn forward_with_weights(&self, g: &mut Graph, x: Var, attn_mask: &[bool]) -> Result<(Var, Vec<Var>)> {
        let (n, d) = g.dims(x);
        if d != self.dim {
            return Err(NnError::Shape {
                op: "attention",
                axis: 1,
                expected: self.dim,
                found: d,
            });
        }
        if attn_mask.len() != n {
            return Err(NnError::Shape {
                op: "attention",
                axis: 0,
                expected: n,
                found: attn_mask.len(),
            });
        }
        if !attn_mask.iter().any(|&m| m) {
            return Err(NnError::DegenerateMask { op: "attention" });
        }
        let q = self.query.forward(g, x)?;
        let k = self.key.forward(g, x)?;
        let v = self.value.forward(g, x)?;
        let head_dim = d / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();

        let mut outputs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * head_dim, head_dim)?;
            let kh = g.slice_cols(k, h * head_dim, head_dim)?;
            let vh = g.slice_cols(v, h * head_dim, head_dim)?;
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale);
            let w = g.masked_softmax(scores, attn_mask)?;
            outputs.push(g.matmul(w, vh)?);
            weights.push(w);
        }
        let merged = g.concat_cols(&outputs)?;
        Ok((self.output.forward(g, merged)?, weights))
    }
}
