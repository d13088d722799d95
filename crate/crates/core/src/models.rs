//! The relation classifier, the predicate sense tagger and the argument tagger.
//!
//! Each model is a [`Net`] (layer handles) plus the [`ParamStore`] holding its
//! weights, the sub-word vocabulary and the label inventory. All encoder
//! parameters are named `encoder.*`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relsrl_nn::{BiLstm, Embedding, Encoder, EncoderConfig, Graph, Mlp, NnError, ParamStore, Var};

use crate::encoding::{
    encode_arguments, encode_re, encode_sense, position_index, EncodeOptions, MaskMode, ReEncoded, ReInstance,
    SrlEncoded, SrlInstance, DEFAULT_POSITION_CLIP,
};
use crate::error::{Error, Result};
use crate::eval::{decode_bio, score_re, score_spans, sense_accuracy, ScoreReport, Span};
use crate::labels::{LabelKind, LabelVocab, NO_RELATION};
use crate::tokenizer::Vocab;

pub const ENCODER_PREFIX: &str = "encoder";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Relation,
    Sense,
    Argument,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Relation => "relation",
            ModelKind::Sense => "sense",
            ModelKind::Argument => "argument",
        }
    }

    pub fn label_kind(self) -> LabelKind {
        match self {
            ModelKind::Relation => LabelKind::Relation,
            ModelKind::Sense => LabelKind::Sense,
            ModelKind::Argument => LabelKind::Argument,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relation" => Ok(ModelKind::Relation),
            "sense" => Ok(ModelKind::Sense),
            "argument" => Ok(ModelKind::Argument),
            other => Err(Error::Argument(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Sizes of the task-specific layers on top of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub lstm_hidden: usize,
    pub mlp_hidden: usize,
    pub position_dim: usize,
    pub indicator_dim: usize,
    pub position_clip: i64,
    /// Dropout applied to MLP inputs while training.
    pub dropout: f64,
}

impl HeadConfig {
    pub fn new(lstm_hidden: usize, mlp_hidden: usize) -> Self {
        Self {
            lstm_hidden,
            mlp_hidden,
            position_dim: 20,
            indicator_dim: 10,
            position_clip: DEFAULT_POSITION_CLIP,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lstm_hidden", self.lstm_hidden),
            ("mlp_hidden", self.mlp_hidden),
            ("position_dim", self.position_dim),
            ("indicator_dim", self.indicator_dim),
        ] {
            if v == 0 {
                return Err(Error::Argument(format!("{name} must be at least 1")));
            }
        }
        if self.position_clip < 1 {
            return Err(Error::Argument("position_clip must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Argument(format!("head dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn position_rows(&self) -> usize {
        2 * self.position_clip as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Tiny,
    Desk,
    Base,
    Large,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Tiny => "tiny",
            Preset::Desk => "desk",
            Preset::Base => "base",
            Preset::Large => "large",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "desk" => Ok(Preset::Desk),
            "base" => Ok(Preset::Base),
            "large" => Ok(Preset::Large),
            other => Err(Error::Argument(format!(
                "unknown preset `{other}` (expected tiny, desk, base or large)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub head: HeadConfig,
}

impl ModelConfig {
    pub fn preset(preset: Preset, vocab_size: usize) -> Self {
        let (encoder, head) = match preset {
            Preset::Tiny => (EncoderConfig::tiny(vocab_size), HeadConfig::new(4, 8)),
            Preset::Desk => (EncoderConfig::desk(vocab_size), HeadConfig::new(16, 32)),
            Preset::Base => (EncoderConfig::base(vocab_size), HeadConfig::new(768, 300)),
            Preset::Large => (EncoderConfig::large(vocab_size), HeadConfig::new(768, 300)),
        };
        Self { encoder, head }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.head.validate()
    }

    /// Turns off every dropout layer.
    pub fn without_dropout(mut self) -> Self {
        self.encoder.dropout = 0.0;
        self.head.dropout = 0.0;
        self
    }

    pub fn encode_options(&self) -> EncodeOptions {
        EncodeOptions {
            max_positions: self.encoder.max_positions,
            mask_mode: MaskMode::PerSpan,
            position_clip: self.head.position_clip,
        }
    }

    pub fn to_key_values(&self) -> String {
        let e = &self.encoder;
        let h = &self.head;
        format!(
            "layers={}\nmodel_dim={}\nheads={}\nff_dim={}\nvocab_size={}\nmax_positions={}\ndropout={}\n\
             lstm_hidden={}\nmlp_hidden={}\nposition_dim={}\nindicator_dim={}\nposition_clip={}\nhead_dropout={}\n",
            e.layers,
            e.model_dim,
            e.heads,
            e.ff_dim,
            e.vocab_size,
            e.max_positions,
            e.dropout,
            h.lstm_hidden,
            h.mlp_hidden,
            h.position_dim,
            h.indicator_dim,
            h.position_clip,
            h.dropout
        )
    }

    pub fn parse_key_values(text: &str) -> Result<Self> {
        let mut cfg = Self::preset(Preset::Tiny, 1);
        let mut seen = 0;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| Error::Format { line: n + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got `{line}`")))?;
            let int = || value.parse::<usize>().map_err(|e| bad(format!("{key}: {e}")));
            let float = || value.parse::<f64>().map_err(|e| bad(format!("{key}: {e}")));
            match key {
                "layers" => cfg.encoder.layers = int()?,
                "model_dim" => cfg.encoder.model_dim = int()?,
                "heads" => cfg.encoder.heads = int()?,
                "ff_dim" => cfg.encoder.ff_dim = int()?,
                "vocab_size" => cfg.encoder.vocab_size = int()?,
                "max_positions" => cfg.encoder.max_positions = int()?,
                "dropout" => cfg.encoder.dropout = float()?,
                "lstm_hidden" => cfg.head.lstm_hidden = int()?,
                "mlp_hidden" => cfg.head.mlp_hidden = int()?,
                "position_dim" => cfg.head.position_dim = int()?,
                "indicator_dim" => cfg.head.indicator_dim = int()?,
                "position_clip" => cfg.head.position_clip = int()? as i64,
                "head_dropout" => cfg.head.dropout = float()?,
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
            seen += 1;
        }
        if seen != 13 {
            return Err(Error::Format {
                line: 0,
                message: format!("expected 13 model settings, found {seen}"),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Accessors shared by the encoded inputs of all models.
pub trait ModelInput {
    fn id(&self) -> &str;
    fn input_ids(&self) -> &[usize];
    fn segment_ids(&self) -> &[usize];
    fn keep_len(&self) -> usize;
}

impl ModelInput for ReEncoded {
    fn id(&self) -> &str {
        &self.id
    }
    fn input_ids(&self) -> &[usize] {
        &self.input_ids
    }
    fn segment_ids(&self) -> &[usize] {
        &self.segment_ids
    }
    fn keep_len(&self) -> usize {
        self.keep_len
    }
}

impl ModelInput for SrlEncoded {
    fn id(&self) -> &str {
        &self.id
    }
    fn input_ids(&self) -> &[usize] {
        &self.input_ids
    }
    fn segment_ids(&self) -> &[usize] {
        &self.segment_ids
    }
    fn keep_len(&self) -> usize {
        self.keep_len
    }
}

/// One encoder input row, possibly right-padded; `attn_mask` is true on real tokens.
#[derive(Debug, Clone, Copy)]
pub struct ModelRow<'a> {
    pub input_ids: &'a [usize],
    pub segment_ids: &'a [usize],
    pub attn_mask: &'a [bool],
}

/// Owned unpadded row for a single instance.
#[derive(Debug, Clone)]
pub struct OwnedRow {
    pub input_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
    pub attn_mask: Vec<bool>,
}

impl OwnedRow {
    pub fn unpadded<E: ModelInput + ?Sized>(enc: &E) -> Self {
        Self {
            input_ids: enc.input_ids().to_vec(),
            segment_ids: enc.segment_ids().to_vec(),
            attn_mask: vec![true; enc.input_ids().len()],
        }
    }

    pub fn as_row(&self) -> ModelRow<'_> {
        ModelRow {
            input_ids: &self.input_ids,
            segment_ids: &self.segment_ids,
            attn_mask: &self.attn_mask,
        }
    }
}

fn check_row<E: ModelInput>(enc: &E, row: &ModelRow) -> Result<()> {
    let n = row.input_ids.len();
    for (found, what) in [(row.segment_ids.len(), 1), (row.attn_mask.len(), 2)] {
        if found != n {
            return Err(NnError::Shape {
                op: "model row",
                axis: what,
                expected: n,
                found,
            }
            .into());
        }
    }
    if n < enc.input_ids().len() || enc.keep_len() == 0 || enc.keep_len() > enc.input_ids().len() {
        return Err(NnError::Shape {
            op: "model row",
            axis: 0,
            expected: enc.input_ids().len(),
            found: n,
        }
        .into());
    }
    Ok(())
}

fn shape_error(op: &'static str, expected: usize, found: usize) -> Error {
    NnError::Shape {
        op,
        axis: 0,
        expected,
        found,
    }
    .into()
}

/// A model's output for one instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Relation { class: usize, label: String },
    Sense { class: usize, label: String },
    Arguments { word_tags: Vec<String>, spans: Vec<Span> },
}

impl Prediction {
    /// Single-field rendering used in prediction files.
    pub fn to_field(&self) -> String {
        match self {
            Prediction::Relation { label, .. } | Prediction::Sense { label, .. } => label.clone(),
            Prediction::Arguments { spans, .. } if spans.is_empty() => "-".into(),
            Prediction::Arguments { spans, .. } => spans.iter().map(Span::to_string).collect::<Vec<_>>().join(" "),
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Prediction::Relation { label, .. } | Prediction::Sense { label, .. } => Some(label),
            Prediction::Arguments { .. } => None,
        }
    }

    pub fn spans(&self) -> Option<&[Span]> {
        match self {
            Prediction::Arguments { spans, .. } => Some(spans),
            _ => None,
        }
    }
}

/// Index of the largest value among `candidates`; ties go to the lowest index.
pub fn argmax(values: &[f64], candidates: std::ops::Range<usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in candidates {
        if best.map_or(true, |b| values[i] > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Scores of a model on a labeled set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: Option<ScoreReport>,
    pub accuracy: Option<f64>,
    /// F1 for relations and arguments, accuracy for senses.
    pub metric: f64,
}

/// Layer wiring of one model.
pub trait Net: Sized {
    type Instance: Clone;
    type Encoded: ModelInput;
    const KIND: ModelKind;

    fn build<R: Rng>(store: &mut ParamStore, config: &ModelConfig, labels: &LabelVocab, rng: &mut R) -> Result<Self>;

    fn encode(inst: &Self::Instance, vocab: &Vocab, labels: &LabelVocab, opts: &EncodeOptions) -> Result<Self::Encoded>;

    fn logits(&self, g: &mut Graph, enc: &Self::Encoded, row: &ModelRow) -> Result<Var>;

    /// Targets and loss mask over the logit rows; `None` when nothing is learnable.
    fn targets(enc: &Self::Encoded) -> Option<(Vec<usize>, Vec<bool>)>;

    fn decode(logits: &[f64], cols: usize, enc: &Self::Encoded, labels: &LabelVocab) -> Result<Prediction>;

    fn evaluate(instances: &[Self::Instance], predictions: &[Prediction]) -> Result<Evaluation>;
}

fn position_ids(distances: &[i64], clip: i64) -> Vec<usize> {
    distances.iter().map(|&p| position_index(p, clip)).collect()
}

/// Encoder, subject/object position embeddings, BiLSTM over the kept tokens and an MLP
/// over the final BiLSTM states.
#[derive(Debug, Clone)]
pub struct ReNet {
    pub encoder: Encoder,
    pub subj_positions: Embedding,
    pub obj_positions: Embedding,
    pub lstm: BiLstm,
    pub mlp: Mlp,
    pub position_clip: i64,
    pub dropout: f64,
}

impl ReNet {
    /// Head over the encoder output `h`; rows from `keep_len` on are ignored.
    pub fn forward_from_hidden(&self, g: &mut Graph, h: Var, enc: &ReEncoded) -> Result<Var> {
        let n = enc.keep_len;
        if g.rows(h) < n {
            return Err(shape_error("relation head", n, g.rows(h)));
        }
        for len in [enc.pos_subj.len(), enc.pos_obj.len()] {
            if len != n {
                return Err(shape_error("relation positions", n, len));
            }
        }
        let kept = g.slice_rows(h, 0, n)?;
        let ps = self.subj_positions.forward(g, &position_ids(&enc.pos_subj, self.position_clip))?;
        let po = self.obj_positions.forward(g, &position_ids(&enc.pos_obj, self.position_clip))?;
        let x = g.concat_cols(&[kept, ps, po])?;
        let out = self.lstm.forward(g, x, None)?;
        let f = g.concat_cols(&[out.final_forward, out.final_backward])?;
        let f = g.dropout(f, self.dropout)?;
        Ok(self.mlp.forward(g, f)?)
    }
}

impl Net for ReNet {
    type Instance = ReInstance;
    type Encoded = ReEncoded;
    const KIND: ModelKind = ModelKind::Relation;

    fn build<R: Rng>(store: &mut ParamStore, config: &ModelConfig, labels: &LabelVocab, rng: &mut R) -> Result<Self> {
        let h = &config.head;
        let d = config.encoder.model_dim;
        let encoder = Encoder::new(store, ENCODER_PREFIX, config.encoder.clone(), rng)?;
        let subj_positions = Embedding::new(store, "re.subj_positions", h.position_rows(), h.position_dim, rng);
        let obj_positions = Embedding::new(store, "re.obj_positions", h.position_rows(), h.position_dim, rng);
        let lstm = BiLstm::new(store, "re.lstm", d + 2 * h.position_dim, h.lstm_hidden, rng);
        let mlp = Mlp::new(store, "re.mlp", 2 * h.lstm_hidden, h.mlp_hidden, labels.num_classes(), rng)?;
        Ok(Self {
            encoder,
            subj_positions,
            obj_positions,
            lstm,
            mlp,
            position_clip: h.position_clip,
            dropout: h.dropout,
        })
    }

    fn encode(inst: &ReInstance, vocab: &Vocab, labels: &LabelVocab, opts: &EncodeOptions) -> Result<ReEncoded> {
        encode_re(inst, vocab, labels, opts)
    }

    fn logits(&self, g: &mut Graph, enc: &ReEncoded, row: &ModelRow) -> Result<Var> {
        check_row(enc, row)?;
        let h = self.encoder.forward(g, row.input_ids, row.segment_ids, row.attn_mask)?;
        self.forward_from_hidden(g, h, enc)
    }

    fn targets(enc: &ReEncoded) -> Option<(Vec<usize>, Vec<bool>)> {
        enc.relation.map(|r| (vec![r], vec![true]))
    }

    fn decode(logits: &[f64], cols: usize, _enc: &ReEncoded, labels: &LabelVocab) -> Result<Prediction> {
        let class = argmax(logits, 0..cols).ok_or(Error::Empty("predict from"))?;
        Ok(Prediction::Relation {
            class,
            label: labels.label(class).unwrap_or_default().to_string(),
        })
    }

    fn evaluate(instances: &[ReInstance], predictions: &[Prediction]) -> Result<Evaluation> {
        let gold: Vec<&str> = instances.iter().map(|i| i.relation.as_str()).collect();
        let pred: Vec<&str> = predictions.iter().map(|p| p.label().unwrap_or_default()).collect();
        let report = score_re(&gold, &pred, NO_RELATION)?;
        Ok(Evaluation {
            metric: report.f1,
            report: Some(report),
            accuracy: None,
        })
    }
}

/// Encoder plus predicate-indicator embedding, then a per-token MLP.
#[derive(Debug, Clone)]
pub struct SenseNet {
    pub encoder: Encoder,
    pub indicator: Embedding,
    pub mlp: Mlp,
    pub dropout: f64,
}

fn check_srl(enc: &SrlEncoded) -> Result<()> {
    let n = enc.keep_len;
    for len in [enc.indicator.len(), enc.labels.len(), enc.loss_mask.len()] {
        if len != n {
            return Err(shape_error("srl labels", n, len));
        }
    }
    if enc.predicate_piece >= n {
        return Err(Error::Instance {
            id: enc.id.clone(),
            reason: format!("predicate piece {} outside the {n} kept positions", enc.predicate_piece),
        });
    }
    Ok(())
}

fn srl_targets(enc: &SrlEncoded) -> Option<(Vec<usize>, Vec<bool>)> {
    enc.loss_mask.iter().any(|&m| m).then(|| (enc.labels.clone(), enc.loss_mask.clone()))
}

impl Net for SenseNet {
    type Instance = SrlInstance;
    type Encoded = SrlEncoded;
    const KIND: ModelKind = ModelKind::Sense;

    fn build<R: Rng>(store: &mut ParamStore, config: &ModelConfig, labels: &LabelVocab, rng: &mut R) -> Result<Self> {
        if labels.sense_ids().is_empty() {
            return Err(Error::Argument("sense inventory has no senses".into()));
        }
        let h = &config.head;
        let d = config.encoder.model_dim;
        Ok(Self {
            encoder: Encoder::new(store, ENCODER_PREFIX, config.encoder.clone(), rng)?,
            indicator: Embedding::new(store, "sense.indicator", 2, h.indicator_dim, rng),
            mlp: Mlp::new(store, "sense.mlp", d + h.indicator_dim, h.mlp_hidden, labels.num_classes(), rng)?,
            dropout: h.dropout,
        })
    }

    fn encode(inst: &SrlInstance, vocab: &Vocab, labels: &LabelVocab, opts: &EncodeOptions) -> Result<SrlEncoded> {
        encode_sense(inst, vocab, labels, opts)
    }

    fn logits(&self, g: &mut Graph, enc: &SrlEncoded, row: &ModelRow) -> Result<Var> {
        check_row(enc, row)?;
        check_srl(enc)?;
        let h = self.encoder.forward(g, row.input_ids, row.segment_ids, row.attn_mask)?;
        let kept = g.slice_rows(h, 0, enc.keep_len)?;
        let ind = self.indicator.forward(g, &enc.indicator)?;
        let x = g.concat_cols(&[kept, ind])?;
        let x = g.dropout(x, self.dropout)?;
        Ok(self.mlp.forward(g, x)?)
    }

    fn targets(enc: &SrlEncoded) -> Option<(Vec<usize>, Vec<bool>)> {
        srl_targets(enc)
    }

    fn decode(logits: &[f64], cols: usize, enc: &SrlEncoded, labels: &LabelVocab) -> Result<Prediction> {
        let row = &logits[enc.predicate_piece * cols..(enc.predicate_piece + 1) * cols];
        let class = argmax(row, labels.sense_ids()).ok_or(Error::Empty("predict from"))?;
        Ok(Prediction::Sense {
            class,
            label: labels.label(class).unwrap_or_default().to_string(),
        })
    }

    fn evaluate(instances: &[SrlInstance], predictions: &[Prediction]) -> Result<Evaluation> {
        let gold: Vec<&str> = instances.iter().map(|i| i.sense.as_deref().unwrap_or_default()).collect();
        let pred: Vec<&str> = predictions.iter().map(|p| p.label().unwrap_or_default()).collect();
        let accuracy = sense_accuracy(&gold, &pred)?;
        Ok(Evaluation {
            report: None,
            accuracy: Some(accuracy),
            metric: accuracy,
        })
    }
}

/// Encoder plus predicate indicator, a BiLSTM, and an MLP over `[g_i ; g_p]`.
#[derive(Debug, Clone)]
pub struct ArgNet {
    pub encoder: Encoder,
    pub indicator: Embedding,
    pub lstm: BiLstm,
    pub mlp: Mlp,
    pub dropout: f64,
}

impl Net for ArgNet {
    type Instance = SrlInstance;
    type Encoded = SrlEncoded;
    const KIND: ModelKind = ModelKind::Argument;

    fn build<R: Rng>(store: &mut ParamStore, config: &ModelConfig, labels: &LabelVocab, rng: &mut R) -> Result<Self> {
        let h = &config.head;
        let d = config.encoder.model_dim;
        Ok(Self {
            encoder: Encoder::new(store, ENCODER_PREFIX, config.encoder.clone(), rng)?,
            indicator: Embedding::new(store, "arg.indicator", 2, h.indicator_dim, rng),
            lstm: BiLstm::new(store, "arg.lstm", d + h.indicator_dim, h.lstm_hidden, rng),
            mlp: Mlp::new(store, "arg.mlp", 4 * h.lstm_hidden, h.mlp_hidden, labels.num_classes(), rng)?,
            dropout: h.dropout,
        })
    }

    fn encode(inst: &SrlInstance, vocab: &Vocab, labels: &LabelVocab, opts: &EncodeOptions) -> Result<SrlEncoded> {
        encode_arguments(inst, vocab, labels, opts)
    }

    fn logits(&self, g: &mut Graph, enc: &SrlEncoded, row: &ModelRow) -> Result<Var> {
        check_row(enc, row)?;
        check_srl(enc)?;
        let n = enc.keep_len;
        let h = self.encoder.forward(g, row.input_ids, row.segment_ids, row.attn_mask)?;
        let kept = g.slice_rows(h, 0, n)?;
        let ind = self.indicator.forward(g, &enc.indicator)?;
        let x = g.concat_cols(&[kept, ind])?;
        let states = self.lstm.forward(g, x, None)?.states;
        let gp = g.gather(states, &vec![enc.predicate_piece; n])?;
        let x = g.concat_cols(&[states, gp])?;
        let x = g.dropout(x, self.dropout)?;
        Ok(self.mlp.forward(g, x)?)
    }

    fn targets(enc: &SrlEncoded) -> Option<(Vec<usize>, Vec<bool>)> {
        srl_targets(enc)
    }

    fn decode(logits: &[f64], cols: usize, enc: &SrlEncoded, labels: &LabelVocab) -> Result<Prediction> {
        let word_tags: Vec<String> = enc
            .word_starts
            .iter()
            .map(|&p| {
                let class = argmax(&logits[p * cols..(p + 1) * cols], 0..cols).unwrap_or(0);
                labels.label(class).unwrap_or_default().to_string()
            })
            .collect();
        let spans = decode_bio(&word_tags)?;
        Ok(Prediction::Arguments { word_tags, spans })
    }

    fn evaluate(instances: &[SrlInstance], predictions: &[Prediction]) -> Result<Evaluation> {
        let gold: Vec<Vec<Span>> = instances.iter().map(|i| i.arguments.clone()).collect();
        let pred: Vec<Vec<Span>> = predictions
            .iter()
            .map(|p| p.spans().map(<[Span]>::to_vec).unwrap_or_default())
            .collect();
        let report = score_spans(&gold, &pred)?;
        Ok(Evaluation {
            metric: report.f1,
            report: Some(report),
            accuracy: None,
        })
    }
}

/// A network with its weights, vocabulary and labels.
#[derive(Debug, Clone)]
pub struct Model<N> {
    pub net: N,
    pub store: ParamStore,
    pub vocab: Vocab,
    pub labels: LabelVocab,
    pub config: ModelConfig,
}

pub type ReModel = Model<ReNet>;
pub type SenseModel = Model<SenseNet>;
pub type ArgModel = Model<ArgNet>;

impl<N: Net> Model<N> {
    pub fn new(config: ModelConfig, vocab: Vocab, labels: LabelVocab, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.encoder.vocab_size != vocab.len() {
            return Err(Error::Argument(format!(
                "encoder vocab_size {} does not match the {}-token vocabulary",
                config.encoder.vocab_size,
                vocab.len()
            )));
        }
        if labels.kind() != N::KIND.label_kind() {
            return Err(Error::Argument(format!(
                "{} model needs {} labels, got {}",
                N::KIND,
                N::KIND.label_kind().as_str(),
                labels.kind().as_str()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let net = N::build(&mut store, &config, &labels, &mut rng)?;
        Ok(Self {
            net,
            store,
            vocab,
            labels,
            config,
        })
    }

    pub fn kind(&self) -> ModelKind {
        N::KIND
    }

    pub fn encode(&self, inst: &N::Instance) -> Result<N::Encoded> {
        N::encode(inst, &self.vocab, &self.labels, &self.config.encode_options())
    }

    pub fn encode_all(&self, instances: &[N::Instance]) -> Result<Vec<N::Encoded>> {
        instances.iter().map(|i| self.encode(i)).collect()
    }

    /// Freezes or unfreezes every encoder parameter.
    pub fn freeze_encoder(&mut self, frozen: bool) -> usize {
        self.store.freeze_prefix(&format!("{ENCODER_PREFIX}."), frozen)
    }

    pub fn logits(&self, g: &mut Graph, enc: &N::Encoded, row: &ModelRow) -> Result<Var> {
        self.net.logits(g, enc, row)
    }

    /// Cross-entropy of one instance, or `None` when it has no known target.
    pub fn loss(&self, g: &mut Graph, enc: &N::Encoded, row: &ModelRow) -> Result<Option<Var>> {
        let Some((targets, mask)) = N::targets(enc) else {
            return Ok(None);
        };
        let logits = self.net.logits(g, enc, row)?;
        Ok(Some(g.cross_entropy(logits, &targets, &mask)?))
    }

    /// Evaluation-mode loss of one unpadded instance.
    pub fn instance_loss(&self, enc: &N::Encoded) -> Result<Option<f64>> {
        let row = OwnedRow::unpadded(enc);
        let mut g = Graph::new(&self.store);
        Ok(self.loss(&mut g, enc, &row.as_row())?.map(|l| g.scalar(l)))
    }

    /// Evaluation-mode logits of one unpadded instance, row-major.
    pub fn logit_values(&self, enc: &N::Encoded) -> Result<(Vec<f64>, usize)> {
        self.logit_values_in(enc, &OwnedRow::unpadded(enc).as_row())
    }

    pub fn logit_values_in(&self, enc: &N::Encoded, row: &ModelRow) -> Result<(Vec<f64>, usize)> {
        let mut g = Graph::new(&self.store);
        let l = self.net.logits(&mut g, enc, row)?;
        Ok((g.value(l).to_vec(), g.cols(l)))
    }

    pub fn predict(&self, enc: &N::Encoded) -> Result<Prediction> {
        let (values, cols) = self.logit_values(enc)?;
        N::decode(&values, cols, enc, &self.labels)
    }

    pub fn predict_all(&self, instances: &[N::Instance]) -> Result<Vec<Prediction>> {
        instances.iter().map(|i| self.predict(&self.encode(i)?)).collect()
    }

    pub fn evaluate(&self, instances: &[N::Instance]) -> Result<Evaluation> {
        if instances.is_empty() {
            return Err(Error::Empty("evaluate"));
        }
        let predictions = self.predict_all(instances)?;
        N::evaluate(instances, &predictions)
    }
}
