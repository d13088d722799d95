#![allow(dead_code)]

pub mod oracles;

use std::ops::ControlFlow;

use relsrl_core::data::{re_vocab, relation_inventory, role_inventory, sense_inventory, srl_vocab, synth_re, synth_srl};
use relsrl_core::encoding::{ReInstance, SrlInstance};
use relsrl_core::labels::LabelVocab;
use relsrl_core::models::{ArgModel, ModelConfig, Net, OwnedRow, Preset, ReModel, SenseModel};
use relsrl_core::nn::gradcheck::{check_params, GradCheckReport};
use relsrl_core::train::{train_with, History, TrainConfig};
use relsrl_core::Model;

pub fn re_model(instances: &[ReInstance], preset: Preset, seed: u64) -> ReModel {
    let vocab = re_vocab(instances).unwrap();
    let labels = LabelVocab::relations(relation_inventory(instances)).unwrap();
    let cfg = ModelConfig::preset(preset, vocab.len());
    ReModel::new(cfg, vocab, labels, seed).unwrap()
}

pub fn sense_model(instances: &[SrlInstance], preset: Preset, seed: u64) -> SenseModel {
    let vocab = srl_vocab(instances).unwrap();
    let labels = LabelVocab::senses(sense_inventory(instances)).unwrap();
    let cfg = ModelConfig::preset(preset, vocab.len());
    SenseModel::new(cfg, vocab, labels, seed).unwrap()
}

pub fn arg_model(instances: &[SrlInstance], preset: Preset, seed: u64) -> ArgModel {
    let vocab = srl_vocab(instances).unwrap();
    let labels = LabelVocab::arguments(role_inventory(instances)).unwrap();
    let cfg = ModelConfig::preset(preset, vocab.len());
    ArgModel::new(cfg, vocab, labels, seed).unwrap()
}

/// Gradient-check scale: the tiny preset without dropout and with short position tables.
pub fn check_config(vocab_size: usize) -> ModelConfig {
    let mut cfg = ModelConfig::preset(Preset::Tiny, vocab_size).without_dropout();
    cfg.head.position_clip = 8;
    cfg
}

pub fn rebuild<N: Net>(model: &Model<N>, config: ModelConfig, seed: u64) -> Model<N> {
    Model::new(config, model.vocab.clone(), model.labels.clone(), seed).unwrap()
}

pub const GRAD_STEP: f64 = 1e-5;

/// Central differences on every parameter against the instance cross-entropy.
pub fn grad_check<N: Net>(model: &mut Model<N>, enc: &N::Encoded) -> GradCheckReport {
    let (targets, mask) = N::targets(enc).expect("instance has targets");
    let row = OwnedRow::unpadded(enc);
    let Model { net, store, .. } = model;
    check_params(store, GRAD_STEP, |_| true, |g| {
        let logits = net.logits(g, enc, &row.as_row()).unwrap();
        g.cross_entropy(logits, &targets, &mask)
    })
    .unwrap()
}

pub fn re_corpus(seed: u64, size: usize) -> Vec<ReInstance> {
    synth_re(seed, size).unwrap().instances
}

pub fn srl_corpus(seed: u64, size: usize) -> Vec<SrlInstance> {
    synth_srl(seed, size).unwrap().instances
}

/// Trains until the train-set metric reaches 1.0 or `max_epochs` pass.
/// Returns the epoch at which it first did, and the history.
pub fn overfit<N: Net>(
    model: &mut Model<N>,
    data: &[N::Instance],
    cfg: &TrainConfig,
) -> (Option<usize>, History) {
    let mut reached = None;
    let history = train_with(model, data, None, cfg, |m, row| {
        if m.evaluate(data).unwrap().metric == 1.0 {
            reached = Some(row.epoch);
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    })
    .unwrap();
    (reached, history)
}
