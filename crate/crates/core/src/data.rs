//! Corpus loading and writing, plus deterministic synthetic corpora.
//!
//! Relation files follow the TACRED release schema, either as one JSON array
//! or as JSON lines.
//!
//! SRL files use a small column dialect. Each line is
//! `word pred role_1 .. role_k`, sentences are separated by blank lines and
//! there is one role column per predicate, in sentence order. The `pred`
//! column is `-` for non-predicates, `V` for a predicate without a sense and
//! otherwise the sense label. Span-style role columns may be BIO tags or
//! bracket notation (`(ARG0*`, `*`, `*)`, `(V*)`); the `V` role is ignored.
//! Dependency-style role columns hold a role on each argument head and `_`
//! (or `-`, `O`) elsewhere.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{object_mask, subject_mask, ReInstance, SrlInstance};
use crate::error::{file_error, Error, Result};
use crate::eval::{decode_bio, encode_bio, Span};
use crate::labels::OUTSIDE;
use crate::tokenizer::Vocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Split {
    #[default]
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub split: Split,
    pub instances: Vec<T>,
}

impl<T> Dataset<T> {
    pub fn new(split: Split, instances: Vec<T>) -> Self {
        Self { split, instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Result of a lenient load: everything that parsed plus one error per
/// rejected record.
#[derive(Debug)]
pub struct LoadReport<T> {
    pub dataset: Dataset<T>,
    pub errors: Vec<Error>,
    pub records: usize,
}

impl<T> LoadReport<T> {
    fn into_strict(mut self) -> Result<Dataset<T>> {
        if self.errors.is_empty() {
            Ok(self.dataset)
        } else {
            Err(self.errors.swap_remove(0))
        }
    }
}

pub fn relation_inventory(instances: &[ReInstance]) -> Vec<String> {
    let set: BTreeSet<&str> = instances.iter().map(|i| i.relation.as_str()).collect();
    set.into_iter().map(String::from).collect()
}

pub fn sense_inventory(instances: &[SrlInstance]) -> Vec<String> {
    let set: BTreeSet<&str> = instances.iter().filter_map(|i| i.sense.as_deref()).collect();
    set.into_iter().map(String::from).collect()
}

pub fn role_inventory(instances: &[SrlInstance]) -> Vec<String> {
    let set: BTreeSet<&str> = instances
        .iter()
        .flat_map(|i| i.arguments.iter().map(|a| a.role.as_str()))
        .collect();
    set.into_iter().map(String::from).collect()
}

/// Words of at most this many characters enter built vocabularies whole.
pub const VOCAB_WHOLE_WORD_CHARS: usize = 16;

/// Entity masks for every type seen in `instances`.
pub fn mask_tokens(instances: &[ReInstance]) -> Vec<String> {
    let mut set = BTreeSet::new();
    for i in instances {
        set.insert(subject_mask(&i.subj_type));
        set.insert(object_mask(&i.obj_type));
    }
    set.into_iter().collect()
}

/// Sub-word vocabulary covering the words and entity masks of a relation corpus.
pub fn re_vocab(instances: &[ReInstance]) -> Result<Vocab> {
    Vocab::build(
        instances.iter().flat_map(|i| i.words.iter().map(String::as_str)),
        mask_tokens(instances),
        VOCAB_WHOLE_WORD_CHARS,
    )
}

/// Sub-word vocabulary covering the words of an SRL corpus.
pub fn srl_vocab(instances: &[SrlInstance]) -> Result<Vocab> {
    Vocab::build(
        instances.iter().flat_map(|i| i.words.iter().map(String::as_str)),
        std::iter::empty(),
        VOCAB_WHOLE_WORD_CHARS,
    )
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(file_error(path))
}

#[derive(Debug, Serialize, Deserialize)]
struct TacredRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    token: Vec<String>,
    subj_start: usize,
    subj_end: usize,
    obj_start: usize,
    obj_end: usize,
    subj_type: String,
    obj_type: String,
    relation: String,
}

impl TacredRecord {
    fn into_instance(self, record: usize) -> ReInstance {
        ReInstance {
            id: self.id.unwrap_or_else(|| record.to_string()),
            words: self.token,
            subj_span: (self.subj_start, self.subj_end),
            obj_span: (self.obj_start, self.obj_end),
            subj_type: self.subj_type,
            obj_type: self.obj_type,
            relation: self.relation,
        }
    }

    fn from_instance(inst: &ReInstance) -> Self {
        Self {
            id: Some(inst.id.clone()),
            token: inst.words.clone(),
            subj_start: inst.subj_span.0,
            subj_end: inst.subj_span.1,
            obj_start: inst.obj_span.0,
            obj_end: inst.obj_span.1,
            subj_type: inst.subj_type.clone(),
            obj_type: inst.obj_type.clone(),
            relation: inst.relation.clone(),
        }
    }
}

/// Parses relation records, keeping going past bad ones.
pub fn parse_re_json_lenient(text: &str, split: Split) -> Result<LoadReport<ReInstance>> {
    let values: Vec<std::result::Result<serde_json::Value, String>> = if text.trim_start().starts_with('[') {
        let all: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| Error::Format {
            line: e.line(),
            message: e.to_string(),
        })?;
        all.into_iter().map(Ok).collect()
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
            .collect()
    };
    let records = values.len();
    let mut instances = Vec::new();
    let mut errors = Vec::new();
    for (record, value) in values.into_iter().enumerate() {
        let parsed = value
            .and_then(|v| serde_json::from_value::<TacredRecord>(v).map_err(|e| e.to_string()))
            .map_err(|message| Error::Schema { record, message });
        match parsed {
            Ok(r) => {
                let inst = r.into_instance(record);
                match inst.validate() {
                    Ok(()) => instances.push(inst),
                    Err(e) => errors.push(e),
                }
            }
            Err(e) => errors.push(e),
        }
    }
    Ok(LoadReport {
        dataset: Dataset::new(split, instances),
        errors,
        records,
    })
}

pub fn parse_re_json(text: &str, split: Split) -> Result<Dataset<ReInstance>> {
    parse_re_json_lenient(text, split)?.into_strict()
}

pub fn load_re_json(path: impl AsRef<Path>, split: Split) -> Result<Dataset<ReInstance>> {
    parse_re_json(&read_text(path.as_ref())?, split)
}

pub fn load_re_json_lenient(path: impl AsRef<Path>, split: Split) -> Result<LoadReport<ReInstance>> {
    parse_re_json_lenient(&read_text(path.as_ref())?, split)
}

/// Serializes relation instances as JSON lines.
pub fn re_json_lines(instances: &[ReInstance]) -> String {
    let mut out = String::new();
    for inst in instances {
        out.push_str(&serde_json::to_string(&TacredRecord::from_instance(inst)).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_re_json(path: impl AsRef<Path>, instances: &[ReInstance]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, re_json_lines(instances)).map_err(file_error(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrlStyle {
    Span,
    Dependency,
}

impl SrlStyle {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "span" => Ok(SrlStyle::Span),
            "dependency" | "dep" => Ok(SrlStyle::Dependency),
            other => Err(Error::Argument(format!("unknown SRL style `{other}`"))),
        }
    }
}

const NO_PREDICATE: &str = "-";
const PREDICATE_WITHOUT_SENSE: &str = "V";
const VERB_ROLE: &str = "V";

/// Id given to the frame of `predicate` in the `sentence`-th sentence of a file.
pub fn frame_id(sentence: usize, predicate: usize) -> String {
    format!("{sentence}:{predicate}")
}

fn is_empty_cell(cell: &str) -> bool {
    matches!(cell, "_" | "-" | OUTSIDE)
}

fn bracket_spans(cells: &[&str], first_line: usize) -> Result<Vec<Span>> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, cell) in cells.iter().enumerate() {
        let err = |message: String| Error::Format {
            line: first_line + i,
            message,
        };
        let star = cell
            .find('*')
            .ok_or_else(|| err(format!("bracket cell `{cell}` has no `*`")))?;
        let (head, tail) = (&cell[..star], &cell[star + 1..]);
        if !head.is_empty() {
            let role = head
                .strip_prefix('(')
                .filter(|r| !r.is_empty() && !r.contains(['(', ')']))
                .ok_or_else(|| err(format!("malformed bracket cell `{cell}`")))?;
            if open.is_some() {
                return Err(err("nested bracket spans are not supported".into()));
            }
            open = Some((i, role.to_string()));
        }
        match tail {
            "" => {}
            ")" => {
                let (start, role) = open
                    .take()
                    .ok_or_else(|| err(format!("`{cell}` closes no open span")))?;
                spans.push(Span::new(start, i, role));
            }
            _ => return Err(err(format!("malformed bracket cell `{cell}`"))),
        }
    }
    if let Some((start, _)) = open {
        return Err(Error::Format {
            line: first_line + start,
            message: "bracket span is never closed".into(),
        });
    }
    Ok(spans)
}

fn column_spans(cells: &[&str], style: SrlStyle, first_line: usize) -> Result<Vec<Span>> {
    let spans = match style {
        SrlStyle::Dependency => cells
            .iter()
            .enumerate()
            .filter(|(_, c)| !is_empty_cell(c))
            .map(|(i, c)| Span::new(i, i, *c))
            .collect(),
        SrlStyle::Span if cells.iter().any(|c| c.contains('*')) => bracket_spans(cells, first_line)?,
        SrlStyle::Span => {
            let tags: Vec<&str> = cells.iter().map(|c| if is_empty_cell(c) { OUTSIDE } else { c }).collect();
            decode_bio(&tags).map_err(|e| Error::Format {
                line: first_line,
                message: e.to_string(),
            })?
        }
    };
    Ok(spans.into_iter().filter(|s| s.role != VERB_ROLE).collect())
}

fn parse_sentence(
    rows: &[(usize, Vec<&str>)],
    sentence: usize,
    style: SrlStyle,
    instances: &mut Vec<SrlInstance>,
    errors: &mut Vec<Error>,
) -> Result<usize> {
    let first_line = rows[0].0;
    let width = rows[0].1.len();
    if width < 2 {
        return Err(Error::Format {
            line: first_line,
            message: "expected at least a word and a predicate column".into(),
        });
    }
    if let Some((line, cells)) = rows.iter().find(|(_, c)| c.len() != width) {
        return Err(Error::Format {
            line: *line,
            message: format!("expected {width} columns, found {}", cells.len()),
        });
    }
    let words: Vec<String> = rows.iter().map(|(_, c)| c[0].to_string()).collect();
    let predicates: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, (_, c))| c[1] != NO_PREDICATE)
        .map(|(i, _)| i)
        .collect();
    if predicates.len() != width - 2 {
        return Err(Error::Format {
            line: first_line,
            message: format!(
                "{} predicates but {} role columns",
                predicates.len(),
                width - 2
            ),
        });
    }
    for (k, &p) in predicates.iter().enumerate() {
        let cells: Vec<&str> = rows.iter().map(|(_, c)| c[2 + k]).collect();
        let marker = rows[p].1[1];
        let frame = column_spans(&cells, style, first_line).and_then(|arguments| {
            let inst = SrlInstance {
                id: frame_id(sentence, p),
                words: words.clone(),
                predicate_index: p,
                sense: (marker != PREDICATE_WITHOUT_SENSE).then(|| marker.to_string()),
                arguments,
            };
            inst.validate().map(|()| inst)
        });
        match frame {
            Ok(inst) => instances.push(inst),
            Err(e) => errors.push(e),
        }
    }
    Ok(predicates.len())
}

/// Parses a column file, keeping going past bad frames. A malformed sentence
/// counts as a single rejected record.
pub fn parse_srl_columns_lenient(text: &str, style: SrlStyle, split: Split) -> Result<LoadReport<SrlInstance>> {
    let mut instances = Vec::new();
    let mut errors = Vec::new();
    let mut records = 0;
    let mut sentence = 0;
    let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
    let lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    for (line, raw) in lines.chain(std::iter::once((0, ""))) {
        let cells: Vec<&str> = raw.split_whitespace().collect();
        if !cells.is_empty() {
            rows.push((line, cells));
            continue;
        }
        if rows.is_empty() {
            continue;
        }
        match parse_sentence(&rows, sentence, style, &mut instances, &mut errors) {
            Ok(frames) => records += frames,
            Err(e) => {
                records += 1;
                errors.push(e);
            }
        }
        sentence += 1;
        rows.clear();
    }
    Ok(LoadReport {
        dataset: Dataset::new(split, instances),
        errors,
        records,
    })
}

pub fn parse_srl_columns(text: &str, style: SrlStyle, split: Split) -> Result<Dataset<SrlInstance>> {
    parse_srl_columns_lenient(text, style, split)?.into_strict()
}

pub fn load_srl_columns(path: impl AsRef<Path>, style: SrlStyle, split: Split) -> Result<Dataset<SrlInstance>> {
    parse_srl_columns(&read_text(path.as_ref())?, style, split)
}

pub fn load_srl_columns_lenient(
    path: impl AsRef<Path>,
    style: SrlStyle,
    split: Split,
) -> Result<LoadReport<SrlInstance>> {
    parse_srl_columns_lenient(&read_text(path.as_ref())?, style, split)
}

/// Groups consecutive frames over identical words into sentences.
fn group_sentences(instances: &[SrlInstance]) -> Vec<Vec<&SrlInstance>> {
    let mut groups: Vec<Vec<&SrlInstance>> = Vec::new();
    for inst in instances {
        match groups.last_mut() {
            Some(g)
                if g[0].words == inst.words
                    && g.iter().all(|o| o.predicate_index != inst.predicate_index) =>
            {
                g.push(inst)
            }
            _ => groups.push(vec![inst]),
        }
    }
    for g in &mut groups {
        g.sort_by_key(|i| i.predicate_index);
    }
    groups
}

/// Renders frames in the column dialect. Span-style roles are written as BIO tags.
pub fn srl_columns(instances: &[SrlInstance], style: SrlStyle) -> Result<String> {
    let mut out = String::new();
    for group in group_sentences(instances) {
        let n = group[0].words.len();
        let mut columns = Vec::with_capacity(group.len());
        for inst in &group {
            inst.validate()?;
            let cells = match style {
                SrlStyle::Span => encode_bio(n, &inst.arguments)?,
                SrlStyle::Dependency => {
                    let mut cells = vec!["_".to_string(); n];
                    for a in &inst.arguments {
                        if a.width() != 1 {
                            return Err(Error::Argument(format!(
                                "frame `{}`: dependency arguments must be single words, got {a}",
                                inst.id
                            )));
                        }
                        cells[a.start] = a.role.clone();
                    }
                    cells
                }
            };
            columns.push(cells);
        }
        for (w, word) in group[0].words.iter().enumerate() {
            out.push_str(word);
            out.push('\t');
            let marker = group
                .iter()
                .find(|i| i.predicate_index == w)
                .map(|i| i.sense.as_deref().unwrap_or(PREDICATE_WITHOUT_SENSE))
                .unwrap_or(NO_PREDICATE);
            out.push_str(marker);
            for col in &columns {
                out.push('\t');
                out.push_str(&col[w]);
            }
            out.push('\n');
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_srl_columns(path: impl AsRef<Path>, instances: &[SrlInstance], style: SrlStyle) -> Result<()> {
    let path = path.as_ref();
    let text = srl_columns(instances, style)?;
    let mut f = fs::File::create(path).map_err(file_error(path))?;
    f.write_all(text.as_bytes()).map_err(file_error(path))
}

/// Relation assigned by the synthetic corpus to a (subject type, object type) pair.
pub const SYNTH_RELATIONS: [(&str, &str, &str); 8] = [
    ("PER", "LOC", "per:city_of_birth"),
    ("PER", "PER", "per:spouse"),
    ("PER", "ORG", "per:employee_of"),
    ("PER", "DATE", "per:date_of_birth"),
    ("ORG", "LOC", "org:city_of_headquarters"),
    ("ORG", "PER", "org:founded_by"),
    ("ORG", "ORG", "no_relation"),
    ("ORG", "DATE", "org:founded"),
];

pub const SYNTH_SUBJECT_TYPES: [&str; 2] = ["PER", "ORG"];
pub const SYNTH_OBJECT_TYPES: [&str; 4] = ["PER", "LOC", "ORG", "DATE"];
pub const SYNTH_SENSES: [&str; 3] = ["01", "02", "03"];
pub const SYNTH_ROLE: &str = "ARG1";

pub fn synth_relation(subj_type: &str, obj_type: &str) -> Option<&'static str> {
    SYNTH_RELATIONS
        .iter()
        .find(|(s, o, _)| *s == subj_type && *o == obj_type)
        .map(|(_, _, r)| *r)
}

const LEXICON_SEED: u64 = 0x5eed_1e71c0;
const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "ren", "tas", "vo", "ne", "dri", "pu", "sel", "ga", "to", "bri", "mon", "fe", "li", "ur", "zan",
    "ho", "qua",
];

struct Lexicon {
    filler: Vec<String>,
    entities: Vec<(&'static str, Vec<String>)>,
    predicates: Vec<String>,
}

fn make_words(rng: &mut ChaCha8Rng, count: usize, capitalized: bool, seen: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let n = rng.gen_range(1..=3);
        let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        if capitalized {
            w[..1].make_ascii_uppercase();
        }
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn lexicon() -> Lexicon {
    let mut rng = ChaCha8Rng::seed_from_u64(LEXICON_SEED);
    let mut seen = BTreeSet::new();
    let filler = make_words(&mut rng, 24, false, &mut seen);
    let mut entities = Vec::new();
    for t in ["PER", "ORG", "LOC"] {
        entities.push((t, make_words(&mut rng, 8, true, &mut seen)));
    }
    entities.push(("DATE", (0..8).map(|i| (1950 + 7 * i).to_string()).collect()));
    let predicates = make_words(&mut rng, 6, false, &mut seen)
        .into_iter()
        .map(|w| format!("{w}ed"))
        .collect();
    Lexicon {
        filler,
        entities,
        predicates,
    }
}

fn mention(lex: &Lexicon, rng: &mut ChaCha8Rng, entity_type: &str) -> Vec<String> {
    let names = &lex.entities.iter().find(|(t, _)| *t == entity_type).unwrap().1;
    let len = if entity_type == "DATE" { 1 } else { rng.gen_range(1..=2) };
    (0..len).map(|_| names.choose(rng).unwrap().clone()).collect()
}

fn fillers(lex: &Lexicon, rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<String> {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| lex.filler.choose(rng).unwrap().clone()).collect()
}

/// Synthetic relation corpus where the relation is fixed by the entity types.
pub fn synth_re(seed: u64, size: usize) -> Result<Dataset<ReInstance>> {
    if size == 0 {
        return Err(Error::Argument("size must be at least 1".into()));
    }
    let lex = lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(size);
    for i in 0..size {
        let subj_type = *SYNTH_SUBJECT_TYPES.choose(&mut rng).unwrap();
        let obj_type = *SYNTH_OBJECT_TYPES.choose(&mut rng).unwrap();
        let subj = mention(&lex, &mut rng, subj_type);
        let obj = mention(&lex, &mut rng, obj_type);
        let subject_first = rng.gen_bool(0.5);
        let (first, second) = if subject_first { (&subj, &obj) } else { (&obj, &subj) };
        let mut words = fillers(&lex, &mut rng, 0, 2);
        let a = (words.len(), words.len() + first.len() - 1);
        words.extend(first.iter().cloned());
        words.extend(fillers(&lex, &mut rng, 1, 3));
        let b = (words.len(), words.len() + second.len() - 1);
        words.extend(second.iter().cloned());
        words.extend(fillers(&lex, &mut rng, 0, 2));
        let (subj_span, obj_span) = if subject_first { (a, b) } else { (b, a) };
        instances.push(ReInstance {
            id: format!("re-{i}"),
            words,
            subj_span,
            obj_span,
            subj_type: subj_type.to_string(),
            obj_type: obj_type.to_string(),
            relation: synth_relation(subj_type, obj_type).unwrap().to_string(),
        });
    }
    Ok(Dataset::new(Split::Train, instances))
}

/// Sense of a synthetic predicate word.
pub fn synth_sense(predicate: &str) -> &'static str {
    let sum: usize = predicate.bytes().map(usize::from).sum();
    SYNTH_SENSES[sum % SYNTH_SENSES.len()]
}

/// Synthetic SRL corpus, one frame per sentence: the word left of the
/// predicate is its `ARG1` and the sense depends only on the predicate word.
pub fn synth_srl(seed: u64, size: usize) -> Result<Dataset<SrlInstance>> {
    if size == 0 {
        return Err(Error::Argument("size must be at least 1".into()));
    }
    let lex = lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(size);
    for i in 0..size {
        let mut words = fillers(&lex, &mut rng, 1, 4);
        let v = words.len();
        let predicate = lex.predicates.choose(&mut rng).unwrap().clone();
        let sense = synth_sense(&predicate).to_string();
        words.push(predicate);
        words.extend(fillers(&lex, &mut rng, 0, 4));
        instances.push(SrlInstance {
            id: frame_id(i, v),
            words,
            predicate_index: v,
            sense: Some(sense),
            arguments: vec![Span::new(v - 1, v - 1, SYNTH_ROLE)],
        });
    }
    Ok(Dataset::new(Split::Train, instances))
}

/// `key=value` sidecar describing a synthetic corpus.
pub fn synth_metadata(kind: &str, seed: u64, size: usize) -> String {
    let rule = match kind {
        "re" => {
            let pairs: Vec<String> = SYNTH_RELATIONS.iter().map(|(s, o, r)| format!("{s}+{o}->{r}")).collect();
            format!("relation = f(subj_type, obj_type): {}", pairs.join(", "))
        }
        _ => format!(
            "ARG1 = the word left of the predicate; sense = one of {} by byte sum of the predicate word mod {}",
            SYNTH_SENSES.join("/"),
            SYNTH_SENSES.len()
        ),
    };
    format!("kind={kind}\nseed={seed}\nsize={size}\nrule={rule}\n")
}
