//! Basic parameterized layers: linear maps, layer normalization, embedding
//! tables and the one-hidden-layer MLP used by every task head.

use rand::Rng;

use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Standard deviation for weight and embedding initialization.
pub const INIT_STD: f64 = 0.02;

/// `y = x·W + b` with `W` of shape `[a, b]`.
pub fn linear(g: &mut Graph, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let (_, a) = g.dims(x);
    let (wa, wb) = g.dims(weight);
    if a != wa {
        return Err(NnError::Shape {
            op: "linear",
            axis: 1,
            expected: wa,
            found: a,
        });
    }
    let (br, bc) = g.dims(bias);
    if br != 1 || bc != wb {
        return Err(NnError::Shape {
            op: "linear",
            axis: 0,
            expected: wb,
            found: br * bc,
        });
    }
    let y = g.matmul(x, weight)?;
    g.add_row(y, bias)
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::truncated_normal(vec![input_dim, output_dim], INIT_STD, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![output_dim]));
        Self {
            weight,
            bias,
            input_dim,
            output_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        linear(g, x, w, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub const DEFAULT_EPS: f64 = 1e-12;

    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Tensor::filled(vec![dim], 1.0));
        let shift = store.add(format!("{name}.shift"), Tensor::zeros(vec![dim]));
        Self {
            gain,
            shift,
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let gain = g.param(self.gain);
        let shift = g.param(self.shift);
        g.layer_norm(x, gain, shift, self.eps)
    }
}

/// A lookup table of `rows` learned vectors.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, rows: usize, dim: usize, rng: &mut R) -> Self {
        let table = store.add(
            format!("{name}.table"),
            Tensor::truncated_normal(vec![rows, dim], INIT_STD, rng),
        );
        Self { table, rows, dim }
    }

    pub fn forward(&self, g: &mut Graph, ids: &[usize]) -> Result<Var> {
        let t = g.param(self.table);
        g.gather(t, ids)
    }
}

/// Linear → ReLU → linear, producing unnormalized logits row by row.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

impl Mlp {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden_dim == 0 || output_dim == 0 {
            return Err(NnError::Config("MLP hidden and output sizes must be at least 1".into()));
        }
        Ok(Self {
            hidden: Linear::new(store, &format!("{name}.hidden"), input_dim, hidden_dim, rng),
            output: Linear::new(store, &format!("{name}.output"), hidden_dim, output_dim, rng),
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = self.hidden.forward(g, x)?;
        let h = g.relu(h);
        self.output.forward(g, h)
    }
}
