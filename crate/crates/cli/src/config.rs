//! Run configuration: defaults, then a `key=value` file, then command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use relsrl_core::data::SrlStyle;
use relsrl_core::train::TrainConfig;
use relsrl_core::{ModelKind, Preset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Re,
    SrlSense,
    SrlSpan,
    SrlDep,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Re => "re",
            Task::SrlSense => "srl-sense",
            Task::SrlSpan => "srl-span",
            Task::SrlDep => "srl-dep",
        }
    }

    pub fn model_kind(self) -> ModelKind {
        match self {
            Task::Re => ModelKind::Relation,
            Task::SrlSense => ModelKind::Sense,
            Task::SrlSpan | Task::SrlDep => ModelKind::Argument,
        }
    }

    /// Column style of the task's corpus files.
    pub fn default_style(self) -> SrlStyle {
        match self {
            Task::SrlSpan => SrlStyle::Span,
            _ => SrlStyle::Dependency,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "re" => Ok(Task::Re),
            "srl-sense" => Ok(Task::SrlSense),
            "srl-span" => Ok(Task::SrlSpan),
            "srl-dep" => Ok(Task::SrlDep),
            other => bail!("unknown task `{other}` (expected re, srl-sense, srl-span or srl-dep)"),
        }
    }
}

/// Every accepted key with its default, if any.
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("task", None),
    ("train", None),
    ("dev", None),
    ("test", None),
    ("input", None),
    ("vocab", None),
    ("labels", None),
    ("checkpoint", None),
    ("sense_checkpoint", None),
    ("predictions", None),
    ("out", None),
    ("style", None),
    ("preset", Some("desk")),
    ("seed", Some("0")),
    ("learning_rate", Some("5e-5")),
    ("batch_size", Some("8")),
    ("max_epochs", Some("20")),
    ("eval_every", Some("1")),
    ("patience", Some("5")),
    ("clip_norm", Some("1.0")),
    ("freeze_encoder", Some("false")),
    ("size", Some("50")),
];

pub const KEY_HELP: &str = "\
Configuration keys (config file lines are key=value, # starts a comment;
flags override file values):
  task              re | srl-sense | srl-span | srl-dep
  train, dev, test  corpus paths (TACRED-style JSON for re, column files for srl)
  input             corpus to predict on (defaults to test)
  vocab             vocabulary file, one token per line (built from train if absent)
  labels            label inventory file, one label per line (taken from train if absent)
  checkpoint        model archive (defaults to <out>/model.bin)
  sense_checkpoint  srl-dep eval only: sense model whose senses are scored with the heads
  predictions       eval only: score this id<TAB>prediction file instead of a model
  out               output directory
  style             span | dependency column style (span for srl-span, else dependency)
  preset            tiny | desk | base | large            [desk]
  seed              initialization, shuffling and synthesis seed  [0]
  learning_rate     Adam step size                       [5e-5]
  batch_size        instances per update                 [8]
  max_epochs        epoch limit                          [20]
  eval_every        epochs between dev evaluations       [1]
  patience          dev evaluations without improvement before stopping  [5]
  clip_norm         global gradient norm limit, or none  [1.0]
  freeze_encoder    true | false                         [false]
  size              synth only: number of instances      [50]";

/// Parses `key=value` lines.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key=value, got `{line}`", i + 1))?;
        let k = k.trim();
        if !KEYS.iter().any(|(key, _)| *key == k) {
            bail!("line {}: unknown key `{k}`", i + 1);
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            bail!("line {}: key `{k}` given twice", i + 1);
        }
    }
    Ok(out)
}

/// Effective settings after layering defaults, file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    pub task: Task,
    pub preset: Preset,
    pub train: TrainConfig,
    pub style: SrlStyle,
    pub size: usize,
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e| anyhow!("`{key}`: cannot parse `{v}`: {e}"))
}

impl RunConfig {
    /// Layers `file` (if any) and then `flags` over the defaults.
    pub fn resolve(file: Option<&Path>, flags: &BTreeMap<String, String>) -> Result<Self> {
        let mut values: BTreeMap<String, String> = KEYS
            .iter()
            .filter_map(|(k, d)| d.map(|d| (k.to_string(), d.to_string())))
            .collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
            let parsed = parse_key_values(&text).with_context(|| format!("{}", path.display()))?;
            values.extend(parsed);
        }
        values.extend(flags.iter().map(|(k, v)| (k.clone(), v.clone())));
        Self::from_values(values)
    }

    pub fn from_values(values: BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| values.get(k).map(String::as_str);
        let task: Task = get("task").ok_or_else(|| anyhow!("no task given (use --task)"))?.parse()?;
        let preset = parse_value("preset", get("preset").unwrap_or("desk"))?;
        let clip_norm = match get("clip_norm").unwrap_or("none") {
            "none" | "off" => None,
            v => Some(parse_value("clip_norm", v)?),
        };
        let train = TrainConfig {
            learning_rate: parse_value("learning_rate", get("learning_rate").unwrap_or("5e-5"))?,
            batch_size: parse_value("batch_size", get("batch_size").unwrap_or("8"))?,
            max_epochs: parse_value("max_epochs", get("max_epochs").unwrap_or("20"))?,
            seed: parse_value("seed", get("seed").unwrap_or("0"))?,
            freeze_encoder: parse_value("freeze_encoder", get("freeze_encoder").unwrap_or("false"))?,
            eval_every: parse_value("eval_every", get("eval_every").unwrap_or("1"))?,
            patience: parse_value("patience", get("patience").unwrap_or("5"))?,
            clip_norm,
        };
        train.validate()?;
        let style = match get("style") {
            Some(s) => SrlStyle::parse(s)?,
            None => task.default_style(),
        };
        let size = parse_value("size", get("size").unwrap_or("50"))?;
        if size == 0 {
            bail!("`size` must be at least 1");
        }
        Ok(Self {
            values,
            task,
            preset,
            train,
            style,
            size,
        })
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).filter(|v| !v.is_empty()).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| anyhow!("`{key}` is required for this command (use --{})", key.replace('_', "-")))
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        self.require_path("out")
    }

    /// Explicit checkpoint, else `<out>/model.bin`.
    pub fn checkpoint(&self) -> Result<PathBuf> {
        match (self.path("checkpoint"), self.path("out")) {
            (Some(p), _) => Ok(p),
            (None, Some(out)) => Ok(out.join("model.bin")),
            _ => bail!("no checkpoint given (use --checkpoint or --out)"),
        }
    }

    /// Effective settings as `key=value` lines.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
