//! Task-specific input construction.
//!
//! Relation extraction inputs are `[CLS] masked-sentence [SEP] subject [SEP] object [SEP]`
//! with entity mentions in the sentence replaced by `SUBJ-<TYPE>` / `OBJ-<TYPE>`
//! masks and two relative position sequences over the `[CLS] .. [SEP]` prefix.
//!
//! SRL inputs are `[CLS] sentence [SEP] predicate [SEP]` with a predicate
//! indicator over the prefix and per-sub-token labels: sense/`O`/`X` for the
//! sense task, BIO×role for the argument task.

use crate::error::{Error, Result};
use crate::eval::{encode_bio, Span};
use crate::labels::{LabelKind, LabelVocab, FRAGMENT, OUTSIDE};
use crate::tokenizer::{tokenize_words, TokenizedSentence, Vocab};

/// Relative distances are clipped to `[-clip, clip]` before embedding lookup.
pub const DEFAULT_POSITION_CLIP: i64 = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReInstance {
    pub id: String,
    pub words: Vec<String>,
    /// Inclusive word indices.
    pub subj_span: (usize, usize),
    pub obj_span: (usize, usize),
    pub subj_type: String,
    pub obj_type: String,
    pub relation: String,
}

impl ReInstance {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::Instance {
            id: self.id.clone(),
            reason,
        };
        if self.words.is_empty() {
            return Err(bad("empty sentence".into()));
        }
        if self.words.iter().any(String::is_empty) {
            return Err(bad("empty word".into()));
        }
        for (name, (s, e)) in [("subject", self.subj_span), ("object", self.obj_span)] {
            if s > e {
                return Err(bad(format!("{name} span starts at {s} after its end {e}")));
            }
            if e >= self.words.len() {
                return Err(bad(format!(
                    "{name} span ends at {e} beyond {} words",
                    self.words.len()
                )));
            }
        }
        let (a, b) = (self.subj_span, self.obj_span);
        if a.0 <= b.1 && b.0 <= a.1 {
            return Err(bad("subject and object spans overlap".into()));
        }
        for t in [&self.subj_type, &self.obj_type] {
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(bad(format!("invalid entity type `{t}`")));
            }
        }
        Ok(())
    }
}

pub fn subject_mask(entity_type: &str) -> String {
    format!("SUBJ-{entity_type}")
}

pub fn object_mask(entity_type: &str) -> String {
    format!("OBJ-{entity_type}")
}

/// How an entity mention is replaced in the sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskMode {
    /// One mask token for the whole mention.
    #[default]
    PerSpan,
    /// One mask token per mention word.
    PerWord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeOptions {
    pub max_positions: usize,
    pub mask_mode: MaskMode,
    pub position_clip: i64,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self {
            max_positions: 128,
            mask_mode: MaskMode::PerSpan,
            position_clip: DEFAULT_POSITION_CLIP,
        }
    }
}

struct Masked {
    words: Vec<String>,
    subj: (usize, usize),
    obj: (usize, usize),
}

fn mask_with_spans(inst: &ReInstance, mode: MaskMode) -> Result<Masked> {
    inst.validate()?;
    let mut words = Vec::with_capacity(inst.words.len());
    let mut subj = (0, 0);
    let mut obj = (0, 0);
    let mut i = 0;
    while i < inst.words.len() {
        let mention = if i == inst.subj_span.0 {
            Some((inst.subj_span, subject_mask(&inst.subj_type), &mut subj))
        } else if i == inst.obj_span.0 {
            Some((inst.obj_span, object_mask(&inst.obj_type), &mut obj))
        } else {
            None
        };
        match mention {
            Some(((s, e), mask, out)) => {
                let copies = match mode {
                    MaskMode::PerSpan => 1,
                    MaskMode::PerWord => e - s + 1,
                };
                let start = words.len();
                words.extend(std::iter::repeat(mask).take(copies));
                *out = (start, words.len() - 1);
                i = e + 1;
            }
            None => {
                words.push(inst.words[i].clone());
                i += 1;
            }
        }
    }
    Ok(Masked { words, subj, obj })
}

/// Replaces the subject and object mentions with their mask tokens.
pub fn mask_entities(inst: &ReInstance, mode: MaskMode) -> Result<Vec<String>> {
    mask_with_spans(inst, mode).map(|m| m.words)
}

/// Relative distance of each position in `0..keep_len` to the span `[s1, s2]`:
/// negative before it, zero inside it, positive after it.
pub fn position_sequence(keep_len: usize, s1: usize, s2: usize) -> Result<Vec<i64>> {
    if s1 > s2 {
        return Err(Error::Span(format!("span start {s1} is after its end {s2}")));
    }
    if s1 == 0 || s2 + 1 >= keep_len {
        return Err(Error::Span(format!(
            "span [{s1}, {s2}] must lie strictly inside 0..{keep_len}"
        )));
    }
    Ok((0..keep_len)
        .map(|i| {
            let i = i as i64;
            if i < s1 as i64 {
                i - s1 as i64
            } else if i <= s2 as i64 {
                0
            } else {
                i - s2 as i64
            }
        })
        .collect())
}

/// Embedding row for a relative distance.
pub fn position_index(distance: i64, clip: i64) -> usize {
    (distance.clamp(-clip, clip) + clip) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReEncoded {
    pub id: String,
    pub input_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
    /// Length of `[CLS] sentence [SEP]`, the part kept after encoding.
    pub keep_len: usize,
    pub subj: (usize, usize),
    pub obj: (usize, usize),
    pub pos_subj: Vec<i64>,
    pub pos_obj: Vec<i64>,
    /// `None` when the gold relation is not in the label inventory.
    pub relation: Option<usize>,
    pub words_kept: usize,
}

/// Number of leading words to keep so the template fits `max_positions`,
/// never dropping words before `min_words`.
fn fit_words(
    id: &str,
    sentence: &TokenizedSentence,
    fixed: usize,
    min_words: usize,
    max_positions: usize,
) -> Result<usize> {
    let mut n = sentence.word_to_pieces.len();
    loop {
        let pieces = if n == 0 { 0 } else { sentence.word_to_pieces[n - 1].end };
        let total = pieces + fixed;
        if total <= max_positions {
            return Ok(n);
        }
        if n <= min_words {
            return Err(Error::Length {
                id: id.to_string(),
                len: total,
                max: max_positions,
            });
        }
        n -= 1;
    }
}

pub fn encode_re(
    inst: &ReInstance,
    vocab: &Vocab,
    relations: &LabelVocab,
    opts: &EncodeOptions,
) -> Result<ReEncoded> {
    if relations.kind() != LabelKind::Relation {
        return Err(Error::Argument(format!("expected relation labels, got {}", relations.kind())));
    }
    let masked = mask_with_spans(inst, opts.mask_mode)?;
    let sentence = tokenize_words(&masked.words, vocab)?;
    let subj = tokenize_words(&inst.words[inst.subj_span.0..=inst.subj_span.1], vocab)?;
    let obj = tokenize_words(&inst.words[inst.obj_span.0..=inst.obj_span.1], vocab)?;

    let fixed = 4 + subj.len() + obj.len();
    let min_words = masked.subj.1.max(masked.obj.1) + 1;
    let words_kept = fit_words(&inst.id, &sentence, fixed, min_words, opts.max_positions)?;
    let pieces = sentence.word_to_pieces[words_kept - 1].end;

    let mut input_ids = Vec::with_capacity(pieces + fixed);
    input_ids.push(vocab.cls_id());
    input_ids.extend_from_slice(&sentence.sub_ids[..pieces]);
    input_ids.push(vocab.sep_id());
    let keep_len = input_ids.len();
    input_ids.extend_from_slice(&subj.sub_ids);
    input_ids.push(vocab.sep_id());
    input_ids.extend_from_slice(&obj.sub_ids);
    input_ids.push(vocab.sep_id());
    let segment_ids = (0..input_ids.len()).map(|i| (i >= keep_len) as usize).collect();

    let span_pieces = |(s, e): (usize, usize)| {
        (
            1 + sentence.word_to_pieces[s].start,
            sentence.word_to_pieces[e].end,
        )
    };
    let subj_pieces = span_pieces(masked.subj);
    let obj_pieces = span_pieces(masked.obj);
    Ok(ReEncoded {
        id: inst.id.clone(),
        pos_subj: position_sequence(keep_len, subj_pieces.0, subj_pieces.1)?,
        pos_obj: position_sequence(keep_len, obj_pieces.0, obj_pieces.1)?,
        input_ids,
        segment_ids,
        keep_len,
        subj: subj_pieces,
        obj: obj_pieces,
        relation: relations.id(&inst.relation),
        words_kept,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SrlInstance {
    pub id: String,
    pub words: Vec<String>,
    pub predicate_index: usize,
    pub sense: Option<String>,
    /// Labeled argument spans; dependency-style heads are width-1 spans.
    pub arguments: Vec<Span>,
}

impl SrlInstance {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::Instance {
            id: self.id.clone(),
            reason,
        };
        if self.words.is_empty() || self.words.iter().any(String::is_empty) {
            return Err(bad("empty sentence or word".into()));
        }
        if self.predicate_index >= self.words.len() {
            return Err(bad(format!(
                "predicate index {} beyond {} words",
                self.predicate_index,
                self.words.len()
            )));
        }
        if let Some(s) = &self.sense {
            if s.is_empty() || s.contains(char::is_whitespace) {
                return Err(bad(format!("invalid sense `{s}`")));
            }
        }
        for a in &self.arguments {
            if a.role.is_empty() || a.role.contains(char::is_whitespace) {
                return Err(bad(format!("invalid role `{}`", a.role)));
            }
        }
        encode_bio(self.words.len(), &self.arguments).map_err(|e| bad(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrlEncoded {
    pub id: String,
    pub input_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
    pub keep_len: usize,
    /// 1 on the predicate's sub-tokens within `[CLS] sentence [SEP]`.
    pub indicator: Vec<usize>,
    pub labels: Vec<usize>,
    pub loss_mask: Vec<bool>,
    /// Index of the predicate's first sub-token.
    pub predicate_piece: usize,
    /// Index of each kept word's first sub-token.
    pub word_starts: Vec<usize>,
    pub gold_spans: Vec<Span>,
    pub gold_sense: Option<String>,
}

impl SrlEncoded {
    pub fn words_kept(&self) -> usize {
        self.word_starts.len()
    }
}

struct SrlTemplate {
    input_ids: Vec<usize>,
    segment_ids: Vec<usize>,
    keep_len: usize,
    indicator: Vec<usize>,
    predicate_piece: usize,
    /// Word ranges shifted by one for `[CLS]`.
    ranges: Vec<std::ops::Range<usize>>,
}

fn srl_template(inst: &SrlInstance, vocab: &Vocab, opts: &EncodeOptions) -> Result<SrlTemplate> {
    inst.validate()?;
    let sentence = tokenize_words(&inst.words, vocab)?;
    let predicate = tokenize_words(&inst.words[inst.predicate_index..=inst.predicate_index], vocab)?;
    let fixed = 3 + predicate.len();
    let kept = fit_words(&inst.id, &sentence, fixed, inst.predicate_index + 1, opts.max_positions)?;
    let pieces = sentence.word_to_pieces[kept - 1].end;

    let mut input_ids = Vec::with_capacity(pieces + fixed);
    input_ids.push(vocab.cls_id());
    input_ids.extend_from_slice(&sentence.sub_ids[..pieces]);
    input_ids.push(vocab.sep_id());
    let keep_len = input_ids.len();
    input_ids.extend_from_slice(&predicate.sub_ids);
    input_ids.push(vocab.sep_id());
    let segment_ids = (0..input_ids.len()).map(|i| (i >= keep_len) as usize).collect();

    let ranges: Vec<_> = sentence.word_to_pieces[..kept]
        .iter()
        .map(|r| r.start + 1..r.end + 1)
        .collect();
    let pred_range = ranges[inst.predicate_index].clone();
    let mut indicator = vec![0; keep_len];
    indicator[pred_range.clone()].iter_mut().for_each(|v| *v = 1);
    Ok(SrlTemplate {
        input_ids,
        segment_ids,
        keep_len,
        indicator,
        predicate_piece: pred_range.start,
        ranges,
    })
}

/// Word-level sense labels: the sense on the predicate, `O` elsewhere.
pub fn sense_word_labels(inst: &SrlInstance) -> Result<Vec<String>> {
    let sense = inst.sense.as_ref().ok_or_else(|| Error::Instance {
        id: inst.id.clone(),
        reason: "no predicate sense".into(),
    })?;
    Ok((0..inst.words.len())
        .map(|i| {
            if i == inst.predicate_index {
                sense.clone()
            } else {
                OUTSIDE.to_string()
            }
        })
        .collect())
}

/// Word-level BIO×role labels.
pub fn argument_word_labels(inst: &SrlInstance) -> Result<Vec<String>> {
    inst.validate()?;
    encode_bio(inst.words.len(), &inst.arguments)
}

pub fn encode_sense(
    inst: &SrlInstance,
    vocab: &Vocab,
    labels: &LabelVocab,
    opts: &EncodeOptions,
) -> Result<SrlEncoded> {
    if labels.kind() != LabelKind::Sense {
        return Err(Error::Argument(format!("expected sense labels, got {}", labels.kind())));
    }
    let word_labels = sense_word_labels(inst)?;
    let t = srl_template(inst, vocab, opts)?;
    let outside = labels.outside_id().expect("sense inventory has O");
    let fragment = labels.fragment_id().expect("sense inventory has X");
    let mut ids = vec![outside; t.keep_len];
    let mut loss_mask = vec![false; t.keep_len];
    for (w, range) in t.ranges.iter().enumerate() {
        let first = labels.id(&word_labels[w]);
        ids[range.start] = first.unwrap_or(outside);
        loss_mask[range.start] = first.is_some();
        for p in range.start + 1..range.end {
            ids[p] = fragment;
            loss_mask[p] = true;
        }
    }
    Ok(SrlEncoded {
        id: inst.id.clone(),
        word_starts: t.ranges.iter().map(|r| r.start).collect(),
        input_ids: t.input_ids,
        segment_ids: t.segment_ids,
        keep_len: t.keep_len,
        indicator: t.indicator,
        labels: ids,
        loss_mask,
        predicate_piece: t.predicate_piece,
        gold_spans: inst.arguments.clone(),
        gold_sense: inst.sense.clone(),
    })
}

pub fn encode_arguments(
    inst: &SrlInstance,
    vocab: &Vocab,
    labels: &LabelVocab,
    opts: &EncodeOptions,
) -> Result<SrlEncoded> {
    if labels.kind() != LabelKind::Argument {
        return Err(Error::Argument(format!("expected argument labels, got {}", labels.kind())));
    }
    let t = srl_template(inst, vocab, opts)?;
    let kept = t.ranges.len();
    let visible: Vec<Span> = inst
        .arguments
        .iter()
        .filter(|s| s.start < kept)
        .map(|s| Span::new(s.start, s.end.min(kept - 1), s.role.clone()))
        .collect();
    let word_labels = encode_bio(kept, &visible)?;
    let pad = labels.id(FRAGMENT).expect("argument inventory has a padding label");
    let outside = labels.outside_id().expect("argument inventory has O");
    let mut ids = vec![pad; t.keep_len];
    let mut loss_mask = vec![false; t.keep_len];
    for (range, tag) in t.ranges.iter().zip(&word_labels) {
        let id = labels.id(tag);
        ids[range.start] = id.unwrap_or(outside);
        loss_mask[range.start] = id.is_some();
    }
    Ok(SrlEncoded {
        id: inst.id.clone(),
        word_starts: t.ranges.iter().map(|r| r.start).collect(),
        input_ids: t.input_ids,
        segment_ids: t.segment_ids,
        keep_len: t.keep_len,
        indicator: t.indicator,
        labels: ids,
        loss_mask,
        predicate_piece: t.predicate_piece,
        gold_spans: inst.arguments.clone(),
        gold_sense: inst.sense.clone(),
    })
}
