//! Label inventories for the three tasks.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{file_error, Error, Result};

pub const OUTSIDE: &str = "O";
/// Continuation-fragment label of the sense task; also the padding label of the argument task.
pub const FRAGMENT: &str = "X";
pub const NO_RELATION: &str = "no_relation";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Relation,
    Sense,
    Argument,
}

impl LabelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::Relation => "relation",
            LabelKind::Sense => "sense",
            LabelKind::Argument => "argument",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relation" => Ok(LabelKind::Relation),
            "sense" => Ok(LabelKind::Sense),
            "argument" => Ok(LabelKind::Argument),
            other => Err(Error::Label(other.to_string())),
        }
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bijective label ↔ id map.
///
/// * relation: the relation labels as given.
/// * sense: `O`, `X`, then the sense labels.
/// * argument: `O`, `B-r`/`I-r` for each role, then the padding label `X`,
///   which is never a prediction target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocab {
    kind: LabelKind,
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocab {
    fn from_labels(kind: LabelKind, labels: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() || l.contains(char::is_whitespace) {
                return Err(Error::Label(l.clone()));
            }
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::Argument(format!("duplicate label `{l}`")));
            }
        }
        Ok(Self {
            kind,
            labels,
            index,
        })
    }

    pub fn relations<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::Empty("build a relation inventory from"));
        }
        Self::from_labels(LabelKind::Relation, labels)
    }

    pub fn senses<I, S>(senses: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels = vec![OUTSIDE.to_string(), FRAGMENT.to_string()];
        labels.extend(senses.into_iter().map(Into::into));
        if labels.len() == 2 {
            return Err(Error::Empty("build a sense inventory from"));
        }
        Self::from_labels(LabelKind::Sense, labels)
    }

    pub fn arguments<I, S>(roles: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut labels = vec![OUTSIDE.to_string()];
        for r in roles {
            let r = r.as_ref();
            labels.push(format!("B-{r}"));
            labels.push(format!("I-{r}"));
        }
        labels.push(FRAGMENT.to_string());
        Self::from_labels(LabelKind::Argument, labels)
    }

    /// Builds the inventory for `kind` from raw inventory entries (relations, senses or roles).
    pub fn from_inventory(kind: LabelKind, entries: &[String]) -> Result<Self> {
        match kind {
            LabelKind::Relation => Self::relations(entries.iter().cloned()),
            LabelKind::Sense => Self::senses(entries.iter().cloned()),
            LabelKind::Argument => Self::arguments(entries),
        }
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of classes a model predicts over (excludes the argument padding label).
    pub fn num_classes(&self) -> usize {
        match self.kind {
            LabelKind::Argument => self.labels.len() - 1,
            _ => self.labels.len(),
        }
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn outside_id(&self) -> Option<usize> {
        self.id(OUTSIDE)
    }

    pub fn fragment_id(&self) -> Option<usize> {
        match self.kind {
            LabelKind::Relation => None,
            _ => self.id(FRAGMENT),
        }
    }

    /// Ids of real senses, excluding `O` and `X`.
    pub fn sense_ids(&self) -> std::ops::Range<usize> {
        match self.kind {
            LabelKind::Sense => 2..self.labels.len(),
            _ => 0..0,
        }
    }

    /// Serialized form: the kind on the first line, then one label per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.kind);
        for l in &self.labels {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let kind = LabelKind::parse(lines.next().unwrap_or_default().trim())?;
        Self::from_labels(kind, lines.map(|l| l.trim().to_string()).collect())
    }
}

/// Reads a plain inventory file: one label per line, blank lines ignored.
pub fn load_inventory(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(file_error(path))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

pub fn save_inventory(path: impl AsRef<Path>, labels: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut text = labels.join("\n");
    text.push('\n');
    fs::write(path, text).map_err(file_error(path))
}
