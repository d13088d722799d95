//! Minimal `f64` tensor library with reverse-mode automatic differentiation and
//! the layers needed for BERT-style encoders with BiLSTM/MLP task heads.

pub mod attention;
pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod lstm;
pub mod optim;
pub mod tensor;

pub use attention::MultiHeadAttention;
pub use encoder::{Encoder, EncoderConfig, EncoderLayer};
pub use error::{NnError, Result};
pub use graph::{Gradients, Graph, Var};
pub use layers::{linear, Embedding, LayerNorm, Linear, Mlp};
pub use lstm::{BiLstm, BiLstmOutput, LstmCell};
pub use optim::{clip_grad_norm, Adam, OptimizerState};
pub use tensor::{ParamId, ParamStore, Tensor};
