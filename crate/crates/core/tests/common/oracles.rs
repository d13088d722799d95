//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use relsrl_core::eval::Span;
use relsrl_core::tokenizer::{Vocab, CONTINUATION, UNK};

/// Relative distance to `[s1, s2]`, written as the sum of a clipped left and right part.
pub fn position_oracle(keep_len: usize, s1: usize, s2: usize) -> Vec<i64> {
    (0..keep_len as i64)
        .map(|i| (i - s1 as i64).min(0) + (i - s2 as i64).max(0))
        .collect()
}

fn segmentations(chars: &[char], start: usize, vocab: &Vocab, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    if start == chars.len() {
        out.push(prefix.clone());
        return;
    }
    for end in start + 1..=chars.len() {
        let body: String = chars[start..end].iter().collect();
        let piece = if start == 0 { body } else { format!("{CONTINUATION}{body}") };
        if vocab.contains(&piece) {
            prefix.push(piece);
            segmentations(chars, end, vocab, prefix, out);
            prefix.pop();
        }
    }
}

fn piece_len(piece: &str) -> usize {
    piece.strip_prefix(CONTINUATION).unwrap_or(piece).chars().count()
}

/// Enumerates every complete segmentation and keeps the one whose every piece
/// is the longest vocabulary match available at its position; `[UNK]` if none is.
pub fn brute_force_wordpiece(word: &str, vocab: &Vocab) -> Vec<String> {
    if vocab.is_atomic(word) {
        return vec![word.to_string()];
    }
    let chars: Vec<char> = word.chars().collect();
    let mut all = Vec::new();
    segmentations(&chars, 0, vocab, &mut Vec::new(), &mut all);
    let longest_at = |pos: usize| {
        (pos + 1..=chars.len())
            .filter(|&end| {
                let body: String = chars[pos..end].iter().collect();
                let piece = if pos == 0 { body } else { format!("{CONTINUATION}{body}") };
                vocab.contains(&piece)
            })
            .max()
            .map(|end| end - pos)
    };
    all.into_iter()
        .find(|seg| {
            let mut pos = 0;
            seg.iter().all(|p| {
                let ok = longest_at(pos) == Some(piece_len(p));
                pos += piece_len(p);
                ok
            })
        })
        .unwrap_or_else(|| vec![UNK.to_string()])
}

/// Every set of non-overlapping labeled spans over `len` words, roles drawn from `roles`.
pub fn all_span_sets(len: usize, roles: &[&str]) -> Vec<Vec<Span>> {
    fn go(pos: usize, len: usize, roles: &[&str], cur: &mut Vec<Span>, out: &mut Vec<Vec<Span>>) {
        if pos == len {
            out.push(cur.clone());
            return;
        }
        go(pos + 1, len, roles, cur, out);
        for end in pos..len {
            for r in roles {
                cur.push(Span::new(pos, end, *r));
                go(end + 1, len, roles, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(0, len, roles, &mut Vec::new(), &mut out);
    out
}

/// Maximum matching between gold and predicted spans where an edge joins equal spans,
/// found by augmenting paths.
pub fn bipartite_matches(gold: &[Span], pred: &[Span]) -> usize {
    fn augment(p: usize, gold: &[Span], pred: &[Span], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for g in 0..gold.len() {
            if gold[g] == pred[p] && !seen[g] {
                seen[g] = true;
                if owner[g].map_or(true, |q| augment(q, gold, pred, seen, owner)) {
                    owner[g] = Some(p);
                    return true;
                }
            }
        }
        false
    }
    let mut owner = vec![None; gold.len()];
    (0..pred.len())
        .filter(|&p| augment(p, gold, pred, &mut vec![false; gold.len()], &mut owner))
        .count()
}

/// Relation counts by enumerating every non-null class separately.
pub fn re_counts_by_class(gold: &[String], pred: &[String], null: &str) -> (usize, usize, usize) {
    let classes: BTreeSet<&String> = gold.iter().chain(pred).filter(|c| *c != null).collect();
    let mut totals = (0, 0, 0);
    for c in classes {
        totals.0 += gold.iter().filter(|g| *g == c).count();
        totals.1 += pred.iter().filter(|p| *p == c).count();
        totals.2 += gold.iter().zip(pred).filter(|(g, p)| *g == c && *p == c).count();
    }
    totals
}

pub fn prf(gold: usize, pred: usize, matched: usize) -> (f64, f64, f64) {
    let p = if pred == 0 { 0.0 } else { matched as f64 / pred as f64 };
    let r = if gold == 0 { 0.0 } else { matched as f64 / gold as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Random (possibly duplicated, possibly overlapping) spans over a short sentence.
pub fn random_spans<R: Rng>(rng: &mut R, max: usize) -> Vec<Span> {
    let roles = ["A0", "A1", "A2"];
    let n = rng.gen_range(0..=max);
    (0..n)
        .map(|_| {
            let s = rng.gen_range(0..6);
            let e = s + rng.gen_range(0..3);
            Span::new(s, e, *roles.choose(rng).unwrap())
        })
        .collect()
}

/// Predictions that copy some gold spans and add some random ones.
pub fn noisy_copy<R: Rng>(rng: &mut R, gold: &[Span]) -> Vec<Span> {
    let mut out: Vec<Span> = gold.iter().filter(|_| rng.gen_bool(0.6)).cloned().collect();
    out.extend(random_spans(rng, 3));
    out.shuffle(rng);
    out
}

pub const ALPHABET: [char; 5] = ['a', 'b', 'c', 'd', 'e'];

/// Random word over a small alphabet.
pub fn random_word<R: Rng>(rng: &mut R, max_len: usize) -> String {
    let n = rng.gen_range(1..=max_len);
    (0..n).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

/// Random vocabulary of initial and continuation pieces over [`ALPHABET`],
/// deliberately incomplete so greedy matching can dead-end.
pub fn random_vocab<R: Rng>(rng: &mut R, pieces: usize, masks: &[&str]) -> Vocab {
    let mut set = BTreeSet::new();
    while set.len() < pieces {
        let body = random_word(rng, 4);
        set.insert(if rng.gen_bool(0.5) { body } else { format!("{CONTINUATION}{body}") });
    }
    let tokens = relsrl_core::tokenizer::CONTROL_TOKENS
        .iter()
        .map(|s| s.to_string())
        .chain(masks.iter().map(|s| s.to_string()))
        .chain(set);
    Vocab::from_tokens(tokens).unwrap()
}
