//! Relation extraction and semantic role labeling on a BERT-style encoder.

pub mod archive;
pub mod data;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod labels;
pub mod models;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
pub use models::{ArgModel, Model, ModelConfig, ModelKind, Prediction, Preset, ReModel, SenseModel};
pub use relsrl_nn as nn;
