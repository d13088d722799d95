//! WordPiece sub-tokenization with an explicit word ↔ sub-token alignment.
//!
//! Control tokens (`[CLS]`, `[SEP]`, `[UNK]`, `[PAD]`) and entity masks
//! (`SUBJ-*`, `OBJ-*`) are atomic: they are never split. No case folding or
//! Unicode normalization is applied.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::ops::Range;
use std::path::Path;

use crate::error::{file_error, Error, Result};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const UNK: &str = "[UNK]";
pub const PAD: &str = "[PAD]";
pub const CONTROL_TOKENS: [&str; 4] = [PAD, UNK, CLS, SEP];

/// Marker prepended to every non-initial piece of a word.
pub const CONTINUATION: &str = "##";

/// Words longer than this many characters map to `[UNK]`.
pub const MAX_WORD_CHARS: usize = 100;

pub fn is_mask_token(token: &str) -> bool {
    token.len() > 5 && token.starts_with("SUBJ-") || token.len() > 4 && token.starts_with("OBJ-")
}

pub fn is_control_token(token: &str) -> bool {
    CONTROL_TOKENS.contains(&token)
}

/// Token inventory with dense ids; id = line number in the vocab file.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    pad: usize,
    unk: usize,
    cls: usize,
    sep: usize,
}

impl Vocab {
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Vocab(format!("empty token at line {}", i + 1)));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Vocab(format!("duplicate token `{t}`")));
            }
        }
        let find = |t: &str| {
            index
                .get(t)
                .copied()
                .ok_or_else(|| Error::Vocab(format!("missing control token {t}")))
        };
        Ok(Self {
            pad: find(PAD)?,
            unk: find(UNK)?,
            cls: find(CLS)?,
            sep: find(SEP)?,
            tokens,
            index,
        })
    }

    /// Builds a vocabulary from corpus words.
    ///
    /// Every character appears both as an initial piece and as a `##` piece,
    /// so any word made of seen characters segments without `[UNK]`. Words of
    /// at most `max_whole_word` characters are added whole; longer words
    /// contribute fixed-width chunks as pieces.
    pub fn build<'a, W, M>(words: W, atomic: M, max_whole_word: usize) -> Result<Self>
    where
        W: IntoIterator<Item = &'a str>,
        M: IntoIterator<Item = String>,
    {
        if max_whole_word == 0 {
            return Err(Error::Argument("max_whole_word must be at least 1".into()));
        }
        let mut tokens: Vec<String> = CONTROL_TOKENS.iter().map(|s| s.to_string()).collect();
        let masks: BTreeSet<String> = atomic.into_iter().collect();
        let mut chars = BTreeSet::new();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for w in words {
            if is_control_token(w) || is_mask_token(w) {
                continue;
            }
            chars.extend(w.chars());
            *counts.entry(w).or_default() += 1;
        }
        let mut pieces = BTreeSet::new();
        let mut whole = Vec::new();
        for (&w, &n) in &counts {
            let cs: Vec<char> = w.chars().collect();
            if cs.len() <= max_whole_word {
                whole.push((n, w));
            } else {
                for (i, chunk) in cs.chunks(max_whole_word).enumerate() {
                    let s: String = chunk.iter().collect();
                    pieces.insert(if i == 0 { s } else { format!("{CONTINUATION}{s}") });
                }
            }
        }
        whole.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));

        let mut seen: BTreeSet<String> = tokens.iter().cloned().collect();
        let mut push = |t: String, tokens: &mut Vec<String>| {
            if seen.insert(t.clone()) {
                tokens.push(t);
            }
        };
        for m in masks {
            push(m, &mut tokens);
        }
        for c in &chars {
            push(c.to_string(), &mut tokens);
            push(format!("{CONTINUATION}{c}"), &mut tokens);
        }
        for (_, w) in whole {
            push(w.to_string(), &mut tokens);
        }
        for p in pieces {
            push(p, &mut tokens);
        }
        Self::from_tokens(tokens)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r')))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(file_error(path))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(file_error(path))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn pad_id(&self) -> usize {
        self.pad
    }

    pub fn unk_id(&self) -> usize {
        self.unk
    }

    pub fn cls_id(&self) -> usize {
        self.cls
    }

    pub fn sep_id(&self) -> usize {
        self.sep
    }

    /// Control tokens and entity masks present in the vocabulary are never split.
    pub fn is_atomic(&self, token: &str) -> bool {
        (is_control_token(token) || is_mask_token(token)) && self.contains(token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Greedy longest-match-first segmentation of a single word.
///
/// Returns exactly `[UNK]` if some position cannot be matched.
pub fn wordpiece(word: &str, vocab: &Vocab) -> Result<Vec<String>> {
    if word.is_empty() {
        return Err(Error::Argument("cannot tokenize an empty word".into()));
    }
    if vocab.is_atomic(word) {
        return Ok(vec![word.to_string()]);
    }
    let chars: Vec<char> = word.chars().collect();
    if chars.len() > MAX_WORD_CHARS {
        return Ok(vec![UNK.to_string()]);
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::with_capacity(word.len() + CONTINUATION.len());
    while start < chars.len() {
        let mut found = None;
        for end in (start + 1..=chars.len()).rev() {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION);
            }
            candidate.extend(&chars[start..end]);
            if vocab.contains(&candidate) {
                found = Some(end);
                break;
            }
        }
        match found {
            Some(end) => {
                pieces.push(candidate.clone());
                start = end;
            }
            None => return Ok(vec![UNK.to_string()]),
        }
    }
    Ok(pieces)
}

/// A sentence after sub-tokenization, with the pieces of each source word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedSentence {
    pub sub_tokens: Vec<String>,
    pub sub_ids: Vec<usize>,
    /// Half-open sub-token range for each source word.
    pub word_to_pieces: Vec<Range<usize>>,
}

impl TokenizedSentence {
    pub fn len(&self) -> usize {
        self.sub_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sub_tokens.is_empty()
    }

    /// Ranges are non-empty, contiguous, in order and cover every sub-token.
    pub fn alignment_tiles(&self) -> bool {
        let mut next = 0;
        for r in &self.word_to_pieces {
            if r.start != next || r.end <= r.start {
                return false;
            }
            next = r.end;
        }
        next == self.sub_tokens.len() && self.sub_ids.len() == self.sub_tokens.len()
    }

    /// Word index owning each sub-token.
    pub fn piece_to_word(&self) -> Vec<usize> {
        let mut out = vec![0; self.sub_tokens.len()];
        for (w, r) in self.word_to_pieces.iter().enumerate() {
            out[r.clone()].iter_mut().for_each(|o| *o = w);
        }
        out
    }

    /// Concatenates a word's pieces with continuation markers stripped.
    pub fn reconstruct_word(&self, word: usize) -> String {
        self.sub_tokens[self.word_to_pieces[word].clone()]
            .iter()
            .map(|p| p.strip_prefix(CONTINUATION).unwrap_or(p))
            .collect()
    }
}

pub fn tokenize_words<S: AsRef<str>>(words: &[S], vocab: &Vocab) -> Result<TokenizedSentence> {
    if words.is_empty() {
        return Err(Error::Argument("cannot tokenize an empty sentence".into()));
    }
    let mut sub_tokens = Vec::new();
    let mut word_to_pieces = Vec::with_capacity(words.len());
    for w in words {
        let start = sub_tokens.len();
        sub_tokens.extend(wordpiece(w.as_ref(), vocab)?);
        word_to_pieces.push(start..sub_tokens.len());
    }
    let sub_ids = sub_tokens
        .iter()
        .map(|t| vocab.id(t).expect("wordpiece emits vocabulary tokens"))
        .collect();
    Ok(TokenizedSentence {
        sub_tokens,
        sub_ids,
        word_to_pieces,
    })
}
