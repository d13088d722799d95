//! Mini-batch training shared by all models.

use std::fmt::Write as _;
use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relsrl_nn::{clip_grad_norm, Adam, Graph, NnError, OptimizerState};

use crate::error::{Error, Result};
use crate::models::{Model, ModelInput, ModelRow, Net};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub freeze_encoder: bool,
    /// Evaluate on the dev set every this many epochs.
    pub eval_every: usize,
    /// Stop after this many evaluations without improvement.
    pub patience: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            batch_size: 8,
            max_epochs: 20,
            seed: 0,
            freeze_encoder: false,
            eval_every: 1,
            patience: 5,
            clip_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("eval_every", self.eval_every),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return Err(Error::Argument(format!("{name} must be at least 1")));
            }
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Argument(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Right-padded encoder inputs for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    pub width: usize,
    pub input_ids: Vec<Vec<usize>>,
    pub segment_ids: Vec<Vec<usize>>,
    /// True on real tokens.
    pub attn_mask: Vec<Vec<bool>>,
    /// True on the kept `[CLS] .. [SEP]` region.
    pub loss_mask: Vec<Vec<bool>>,
    pub keep_lens: Vec<usize>,
}

impl PaddedBatch {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> ModelRow<'_> {
        ModelRow {
            input_ids: &self.input_ids[i],
            segment_ids: &self.segment_ids[i],
            attn_mask: &self.attn_mask[i],
        }
    }
}

pub fn pad_batch<E: ModelInput>(encoded: &[&E], pad_id: usize) -> Result<PaddedBatch> {
    if encoded.is_empty() {
        return Err(Error::Empty("pad"));
    }
    let width = encoded.iter().map(|e| e.input_ids().len()).max().unwrap_or(0);
    let mut batch = PaddedBatch {
        width,
        input_ids: Vec::with_capacity(encoded.len()),
        segment_ids: Vec::with_capacity(encoded.len()),
        attn_mask: Vec::with_capacity(encoded.len()),
        loss_mask: Vec::with_capacity(encoded.len()),
        keep_lens: Vec::with_capacity(encoded.len()),
    };
    for e in encoded {
        let n = e.input_ids().len();
        let mut ids = e.input_ids().to_vec();
        ids.resize(width, pad_id);
        let mut segs = e.segment_ids().to_vec();
        segs.resize(width, 0);
        batch.input_ids.push(ids);
        batch.segment_ids.push(segs);
        batch.attn_mask.push((0..width).map(|j| j < n).collect());
        batch.loss_mask.push((0..width).map(|j| j < e.keep_len()).collect());
        batch.keep_lens.push(e.keep_len());
    }
    Ok(batch)
}

/// Mean loss over the instances of a batch that have a known target.
pub fn batch_loss<N: Net>(
    model: &Model<N>,
    g: &mut Graph,
    encoded: &[&N::Encoded],
    batch: &PaddedBatch,
) -> Result<Option<relsrl_nn::Var>> {
    let mut losses = Vec::with_capacity(encoded.len());
    for (i, enc) in encoded.iter().enumerate() {
        if let Some(l) = model.loss(g, enc, &batch.row(i))? {
            losses.push(l);
        }
    }
    if losses.is_empty() {
        return Ok(None);
    }
    Ok(Some(g.mean_of(&losses)?))
}

fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &p in parts {
        h ^= p;
        h = h.wrapping_mul(0x0000_0100_0000_01b3).rotate_left(29) ^ 0x9e37_79b9_7f4a_7c15;
    }
    h
}

/// Visiting order of `n` training instances in `epoch`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[seed, epoch as u64])));
    order
}

/// Optimizer state plus the update rule.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub adam: Adam,
    pub state: OptimizerState,
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
}

impl Trainer {
    pub fn new<N: Net>(model: &Model<N>, learning_rate: f64, clip_norm: Option<f64>) -> Self {
        Self {
            adam: Adam::default(),
            state: OptimizerState::new(&model.store),
            learning_rate,
            clip_norm,
        }
    }

    /// One update on `encoded`. With `dropout_seed` the graph runs in training
    /// mode; otherwise dropout is off. Returns the batch loss, or `None` when no
    /// instance had a known target.
    pub fn step<N: Net>(
        &mut self,
        model: &mut Model<N>,
        encoded: &[&N::Encoded],
        dropout_seed: Option<u64>,
        (epoch, batch_index): (usize, usize),
    ) -> Result<Option<f64>> {
        let batch = pad_batch(encoded, model.vocab.pad_id())?;
        model.store.zero_grads();
        let (value, grads) = {
            let mut g = match dropout_seed {
                Some(seed) => Graph::training(&model.store, seed),
                None => Graph::new(&model.store),
            };
            let Some(loss) = batch_loss(model, &mut g, encoded, &batch)? else {
                return Ok(None);
            };
            (g.scalar(loss), g.backward(loss)?)
        };
        grads.accumulate_into(&mut model.store);
        let bad_values = |id| model.store.get(id).data().iter().any(|x: &f64| !x.is_finite());
        let bad_grads = |id| {
            model
                .store
                .get(id)
                .grad()
                .is_some_and(|g| g.iter().any(|x| !x.is_finite()))
        };
        let culprit = model
            .store
            .ids()
            .find(|&id| bad_values(id))
            .or_else(|| model.store.ids().find(|&id| bad_grads(id)));
        if !value.is_finite() || culprit.is_some() {
            return Err(Error::NonFinite {
                epoch,
                batch: batch_index,
                param: culprit.map(|id| model.store.name(id).to_string()),
            });
        }
        let non_finite = |e: NnError| match e {
            NnError::NonFiniteGradient { param } => Error::NonFinite {
                epoch,
                batch: batch_index,
                param: Some(param),
            },
            other => other.into(),
        };
        if let Some(c) = self.clip_norm {
            clip_grad_norm(&mut model.store, c);
        }
        self.adam
            .step(&mut model.store, &mut self.state, self.learning_rate)
            .map_err(non_finite)?;
        Ok(Some(value))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub rows: Vec<HistoryRow>,
    pub best_epoch: Option<usize>,
    pub best_metric: Option<f64>,
}

impl History {
    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.train_loss).collect()
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:>5}  {:>12}  {:>10}\n", "epoch", "train_loss", "dev_metric");
        for r in &self.rows {
            let dev = r.dev_metric.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(s, "{:>5}  {:>12.6}  {:>10}", r.epoch, r.train_loss, dev);
        }
        s
    }

    /// Tab-separated series: `epoch train_loss dev_metric`, with an empty metric when not evaluated.
    pub fn to_series(&self) -> String {
        let mut s = String::from("epoch\ttrain_loss\tdev_metric\n");
        for r in &self.rows {
            let dev = r.dev_metric.map(|m| m.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{}\t{}\t{}", r.epoch, r.train_loss, dev);
        }
        s
    }
}

/// Trains `model` in place. With a dev set the parameters from the best
/// evaluation are restored at the end.
pub fn train<N: Net>(
    model: &mut Model<N>,
    train_set: &[N::Instance],
    dev_set: Option<&[N::Instance]>,
    cfg: &TrainConfig,
) -> Result<History> {
    train_with(model, train_set, dev_set, cfg, |_, _| ControlFlow::Continue(()))
}

/// Like [`train`], calling `on_epoch` after every epoch; returning
/// `ControlFlow::Break` stops training after that epoch.
pub fn train_with<N: Net>(
    model: &mut Model<N>,
    train_set: &[N::Instance],
    dev_set: Option<&[N::Instance]>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&Model<N>, &HistoryRow) -> ControlFlow<()>,
) -> Result<History> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("train on"));
    }
    if dev_set.is_some_and(<[_]>::is_empty) {
        return Err(Error::Empty("evaluate"));
    }
    let encoded = model.encode_all(train_set)?;
    model.freeze_encoder(cfg.freeze_encoder);
    let mut trainer = Trainer::new(model, cfg.learning_rate, cfg.clip_norm);
    let mut history = History::default();
    let mut best_snapshot = None;
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        let order = epoch_order(encoded.len(), cfg.seed, epoch);
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&N::Encoded> = chunk.iter().map(|&i| &encoded[i]).collect();
            let seed = derive_seed(&[cfg.seed, epoch as u64, b as u64]);
            if let Some(loss) = trainer.step(model, &batch, Some(seed), (epoch, b))? {
                total += loss;
                batches += 1;
            }
        }
        if batches == 0 {
            return Err(Error::Empty("learn from: no instance has a known label"));
        }
        let dev_metric = match dev_set {
            Some(dev) if epoch % cfg.eval_every == 0 => Some(model.evaluate(dev)?.metric),
            _ => None,
        };
        let row = HistoryRow {
            epoch,
            train_loss: total / batches as f64,
            dev_metric,
        };
        let flow = on_epoch(model, &row);
        history.rows.push(row);
        if let Some(m) = dev_metric {
            if history.best_metric.map_or(true, |b| m > b) {
                history.best_metric = Some(m);
                history.best_epoch = Some(epoch);
                best_snapshot = Some(model.store.snapshot());
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        if flow.is_break() {
            break;
        }
    }
    if let Some(s) = best_snapshot {
        model.store.restore(&s);
    }
    Ok(history)
}
