//! BIO decoding and the task scorers: labeled span P/R/F1, dependency head
//! F1 (optionally with predicate senses folded in), sense accuracy and
//! relation micro P/R/F1 excluding the null relation.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A labeled, inclusive word span.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub role: String,
}

impl Span {
    pub fn new(start: usize, end: usize, role: impl Into<String>) -> Self {
        Self {
            start,
            end,
            role: role.into(),
        }
    }

    pub fn width(&self) -> usize {
        self.end + 1 - self.start
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}:{}", self.start, self.end, self.role)
    }
}

impl FromStr for Span {
    type Err = Error;

    /// Parses the `start-end:role` form written by `Display`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Span(format!("expected `start-end:role`, got `{s}`"));
        let (range, role) = s.split_once(':').ok_or_else(bad)?;
        let (a, b) = range.split_once('-').ok_or_else(bad)?;
        let (start, end) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
        if role.is_empty() || start > end {
            return Err(bad());
        }
        Ok(Span::new(start, end, role))
    }
}

/// Parses a space-separated span list; `-` is the empty list.
pub fn parse_span_list(field: &str) -> Result<Vec<Span>> {
    match field.trim() {
        "-" | "" => Ok(Vec::new()),
        f => f.split_whitespace().map(str::parse).collect(),
    }
}

enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_tag(tag: &str) -> Result<Tag<'_>> {
    if tag == "O" {
        return Ok(Tag::Outside);
    }
    let parsed = if let Some(role) = tag.strip_prefix("B-") {
        Tag::Begin(role)
    } else if let Some(role) = tag.strip_prefix("I-") {
        Tag::Inside(role)
    } else {
        return Err(Error::Label(tag.to_string()));
    };
    match parsed {
        Tag::Begin("") | Tag::Inside("") => Err(Error::Label(tag.to_string())),
        t => Ok(t),
    }
}

/// Decodes BIO tags into maximal labeled spans, sorted by start.
///
/// Decoding is relaxed: an `I-r` that does not continue an open `r` span
/// starts a new one.
pub fn decode_bio<S: AsRef<str>>(tags: &[S]) -> Result<Vec<Span>> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match parse_tag(tag.as_ref())? {
            Tag::Outside => {
                if let Some((s, r)) = open.take() {
                    spans.push(Span::new(s, i - 1, r));
                }
            }
            Tag::Begin(role) => {
                if let Some((s, r)) = open.take() {
                    spans.push(Span::new(s, i - 1, r));
                }
                open = Some((i, role));
            }
            Tag::Inside(role) => match open {
                Some((_, r)) if r == role => {}
                _ => {
                    if let Some((s, r)) = open.take() {
                        spans.push(Span::new(s, i - 1, r));
                    }
                    open = Some((i, role));
                }
            },
        }
    }
    if let Some((s, r)) = open {
        spans.push(Span::new(s, tags.len() - 1, r));
    }
    Ok(spans)
}

/// Word-level BIO tags for non-overlapping spans.
pub fn encode_bio(len: usize, spans: &[Span]) -> Result<Vec<String>> {
    let mut tags = vec!["O".to_string(); len];
    let mut taken = vec![false; len];
    for s in spans {
        if s.start > s.end || s.end >= len {
            return Err(Error::Span(format!("{s} outside a sentence of {len} words")));
        }
        for i in s.start..=s.end {
            if taken[i] {
                return Err(Error::Span(format!("{s} overlaps another span")));
            }
            taken[i] = true;
            tags[i] = if i == s.start {
                format!("B-{}", s.role)
            } else {
                format!("I-{}", s.role)
            };
        }
    }
    Ok(tags)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold: usize,
    pub predicted: usize,
    pub matched: usize,
}

impl ScoreReport {
    pub fn from_counts(gold: usize, predicted: usize, matched: usize) -> Self {
        debug_assert!(matched <= gold.min(predicted));
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matched, predicted);
        let recall = ratio(matched, gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            gold,
            predicted,
            matched,
        }
    }

    /// Sums counts of two disjoint shards.
    pub fn merge(&self, other: &ScoreReport) -> ScoreReport {
        Self::from_counts(
            self.gold + other.gold,
            self.predicted + other.predicted,
            self.matched + other.matched,
        )
    }

    pub fn to_table(&self) -> String {
        format!(
            "{:<10} {:>8}\n{:<10} {:>8.4}\n{:<10} {:>8.4}\n{:<10} {:>8.4}\n{:<10} {:>8}\n{:<10} {:>8}\n{:<10} {:>8}\n",
            "metric", "value",
            "precision", self.precision,
            "recall", self.recall,
            "f1", self.f1,
            "gold", self.gold,
            "predicted", self.predicted,
            "matched", self.matched,
        )
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "precision={}\nrecall={}\nf1={}\ngold={}\npredicted={}\nmatched={}\n",
            self.precision, self.recall, self.f1, self.gold, self.predicted, self.matched
        )
    }
}

fn check_pairing(gold: usize, predicted: usize) -> Result<()> {
    if gold != predicted {
        return Err(Error::Pairing { gold, predicted });
    }
    Ok(())
}

/// Multiset intersection size.
fn matched_items<'a, T: Eq + std::hash::Hash + 'a>(
    gold: impl IntoIterator<Item = &'a T>,
    pred: impl IntoIterator<Item = &'a T>,
) -> usize {
    let mut available: HashMap<&T, usize> = HashMap::new();
    for g in gold {
        *available.entry(g).or_default() += 1;
    }
    pred.into_iter()
        .filter(|p| match available.get_mut(p) {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        })
        .count()
}

/// Micro-averaged labeled span scoring. Each gold span matches at most once.
pub fn score_spans(gold: &[Vec<Span>], pred: &[Vec<Span>]) -> Result<ScoreReport> {
    check_pairing(gold.len(), pred.len())?;
    let (mut g, mut p, mut m) = (0, 0, 0);
    for (gs, ps) in gold.iter().zip(pred) {
        g += gs.len();
        p += ps.len();
        m += matched_items(gs, ps);
    }
    Ok(ScoreReport::from_counts(g, p, m))
}

fn heads_only(sets: &[Vec<Span>]) -> Vec<Vec<Span>> {
    sets.iter()
        .map(|s| s.iter().filter(|sp| sp.start == sp.end).cloned().collect())
        .collect()
}

/// Labeled head scoring: span scoring restricted to width-1 spans.
pub fn score_dependency(gold: &[Vec<Span>], pred: &[Vec<Span>]) -> Result<ScoreReport> {
    check_pairing(gold.len(), pred.len())?;
    score_spans(&heads_only(gold), &heads_only(pred))
}

/// Dependency scoring with each predicate's sense counted as one additional
/// scored item, matched when the sense labels are equal.
pub fn score_dependency_with_senses(
    gold: &[Vec<Span>],
    pred: &[Vec<Span>],
    gold_senses: &[Option<String>],
    pred_senses: &[Option<String>],
) -> Result<ScoreReport> {
    check_pairing(gold.len(), pred.len())?;
    check_pairing(gold.len(), gold_senses.len())?;
    check_pairing(gold.len(), pred_senses.len())?;
    let args = score_dependency(gold, pred)?;
    let (mut g, mut p, mut m) = (0, 0, 0);
    for (gs, ps) in gold_senses.iter().zip(pred_senses) {
        g += gs.is_some() as usize;
        p += ps.is_some() as usize;
        m += matches!((gs, ps), (Some(a), Some(b)) if a == b) as usize;
    }
    Ok(args.merge(&ScoreReport::from_counts(g, p, m)))
}

/// Fraction of predicates whose predicted sense equals the gold sense.
pub fn sense_accuracy<S: AsRef<str>>(gold: &[S], pred: &[S]) -> Result<f64> {
    check_pairing(gold.len(), pred.len())?;
    if gold.is_empty() {
        return Err(Error::Empty("score"));
    }
    let correct = gold
        .iter()
        .zip(pred)
        .filter(|(g, p)| g.as_ref() == p.as_ref())
        .count();
    Ok(correct as f64 / gold.len() as f64)
}

/// Relation micro P/R/F1 over non-null labels.
pub fn score_re<S: AsRef<str>>(gold: &[S], pred: &[S], null_label: &str) -> Result<ScoreReport> {
    check_pairing(gold.len(), pred.len())?;
    let (mut g, mut p, mut m) = (0, 0, 0);
    for (gl, pl) in gold.iter().zip(pred) {
        let (gl, pl) = (gl.as_ref(), pl.as_ref());
        g += (gl != null_label) as usize;
        p += (pl != null_label) as usize;
        m += (pl != null_label && pl == gl) as usize;
    }
    Ok(ScoreReport::from_counts(g, p, m))
}
