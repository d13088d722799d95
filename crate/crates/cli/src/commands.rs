use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::ops::ControlFlow;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use relsrl_core::archive::{archive_kind, load_model, save_model};
use relsrl_core::data::{
    load_re_json, load_srl_columns, re_vocab, relation_inventory, role_inventory, sense_inventory, srl_columns,
    srl_vocab, synth_metadata, synth_re, synth_srl, write_re_json, write_srl_columns, Split,
};
use relsrl_core::encoding::{ReInstance, SrlInstance};
use relsrl_core::eval::{
    parse_span_list, score_dependency, score_dependency_with_senses, score_re, score_spans, sense_accuracy,
    ScoreReport, Span,
};
use relsrl_core::labels::{load_inventory, save_inventory, LabelVocab, NO_RELATION};
use relsrl_core::models::{ArgNet, Net, ReNet, SenseNet};
use relsrl_core::tokenizer::Vocab;
use relsrl_core::train::train_with;
use relsrl_core::{Model, ModelConfig};

use crate::config::{RunConfig, Task};

/// Per-model glue: corpus format, inventories and scoring of prediction fields.
trait TaskNet: Net {
    fn load(path: &Path, cfg: &RunConfig, split: Split) -> Result<Vec<Self::Instance>>;
    fn inventory(instances: &[Self::Instance]) -> Vec<String>;
    fn vocab(instances: &[Self::Instance]) -> Result<Vocab>;
    fn id(inst: &Self::Instance) -> &str;
    /// Scores `fields` (one prediction field per instance) and renders `key=value` lines.
    fn score(task: Task, instances: &[Self::Instance], fields: &[String]) -> Result<String>;
    /// Column-file rendering of predictions, for tasks that have one.
    fn columns(_cfg: &RunConfig, _instances: &[Self::Instance], _fields: &[String]) -> Result<Option<String>> {
        Ok(None)
    }
}

fn report_lines(report: &ScoreReport) -> String {
    report.to_key_values()
}

impl TaskNet for ReNet {
    fn load(path: &Path, _cfg: &RunConfig, split: Split) -> Result<Vec<ReInstance>> {
        let data = load_re_json(path, split).map_err(|e| in_file(path, e))?;
        Ok(data.instances)
    }

    fn inventory(instances: &[ReInstance]) -> Vec<String> {
        relation_inventory(instances)
    }

    fn vocab(instances: &[ReInstance]) -> Result<Vocab> {
        Ok(re_vocab(instances)?)
    }

    fn id(inst: &ReInstance) -> &str {
        &inst.id
    }

    fn score(_task: Task, instances: &[ReInstance], fields: &[String]) -> Result<String> {
        let gold: Vec<&str> = instances.iter().map(|i| i.relation.as_str()).collect();
        let pred: Vec<&str> = fields.iter().map(String::as_str).collect();
        Ok(report_lines(&score_re(&gold, &pred, NO_RELATION)?))
    }
}

/// Prefixes the path unless the error already names it.
fn in_file(path: &Path, e: relsrl_core::Error) -> anyhow::Error {
    let shown = path.display().to_string();
    if e.to_string().contains(&shown) {
        e.into()
    } else {
        anyhow::Error::from(e).context(shown)
    }
}

fn load_frames(path: &Path, cfg: &RunConfig, split: Split) -> Result<Vec<SrlInstance>> {
    let data = load_srl_columns(path, cfg.style, split).map_err(|e| in_file(path, e))?;
    Ok(data.instances)
}

impl TaskNet for SenseNet {
    fn load(path: &Path, cfg: &RunConfig, split: Split) -> Result<Vec<SrlInstance>> {
        load_frames(path, cfg, split)
    }

    fn inventory(instances: &[SrlInstance]) -> Vec<String> {
        sense_inventory(instances)
    }

    fn vocab(instances: &[SrlInstance]) -> Result<Vocab> {
        Ok(srl_vocab(instances)?)
    }

    fn id(inst: &SrlInstance) -> &str {
        &inst.id
    }

    fn score(_task: Task, instances: &[SrlInstance], fields: &[String]) -> Result<String> {
        let (gold, pred): (Vec<&str>, Vec<&str>) = instances
            .iter()
            .zip(fields)
            .filter_map(|(i, f)| i.sense.as_deref().map(|s| (s, f.as_str())))
            .unzip();
        let accuracy = sense_accuracy(&gold, &pred)?;
        let correct = gold.iter().zip(&pred).filter(|(g, p)| g == p).count();
        Ok(format!("accuracy={accuracy}\ncorrect={correct}\ntotal={}\n", gold.len()))
    }

    fn columns(cfg: &RunConfig, instances: &[SrlInstance], fields: &[String]) -> Result<Option<String>> {
        let frames: Vec<SrlInstance> = instances
            .iter()
            .zip(fields)
            .map(|(i, f)| SrlInstance {
                sense: Some(f.clone()),
                arguments: Vec::new(),
                ..i.clone()
            })
            .collect();
        Ok(Some(srl_columns(&frames, cfg.style)?))
    }
}

fn parse_fields(fields: &[String]) -> Result<Vec<Vec<Span>>> {
    fields.iter().map(|f| Ok(parse_span_list(f)?)).collect()
}

impl TaskNet for ArgNet {
    fn load(path: &Path, cfg: &RunConfig, split: Split) -> Result<Vec<SrlInstance>> {
        load_frames(path, cfg, split)
    }

    fn inventory(instances: &[SrlInstance]) -> Vec<String> {
        role_inventory(instances)
    }

    fn vocab(instances: &[SrlInstance]) -> Result<Vocab> {
        Ok(srl_vocab(instances)?)
    }

    fn id(inst: &SrlInstance) -> &str {
        &inst.id
    }

    fn score(task: Task, instances: &[SrlInstance], fields: &[String]) -> Result<String> {
        let gold: Vec<Vec<Span>> = instances.iter().map(|i| i.arguments.clone()).collect();
        let pred = parse_fields(fields)?;
        let report = match task {
            Task::SrlDep => score_dependency(&gold, &pred)?,
            _ => score_spans(&gold, &pred)?,
        };
        Ok(report_lines(&report))
    }

    fn columns(cfg: &RunConfig, instances: &[SrlInstance], fields: &[String]) -> Result<Option<String>> {
        let pred = parse_fields(fields)?;
        let frames: Vec<SrlInstance> = instances
            .iter()
            .zip(pred)
            .map(|(i, spans)| SrlInstance {
                arguments: match cfg.task {
                    Task::SrlDep => spans.into_iter().filter(|s| s.width() == 1).collect(),
                    _ => spans,
                },
                ..i.clone()
            })
            .collect();
        Ok(Some(srl_columns(&frames, cfg.style)?))
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("{}", path.display()))
}

fn create_out_dir(cfg: &RunConfig) -> Result<std::path::PathBuf> {
    let out = cfg.out_dir()?;
    fs::create_dir_all(&out).with_context(|| format!("{}", out.display()))?;
    Ok(out)
}

fn run_train<N: TaskNet>(cfg: &RunConfig, quiet: bool) -> Result<String> {
    let train_set = N::load(&cfg.require_path("train")?, cfg, Split::Train)?;
    let dev_set = cfg.path("dev").map(|p| N::load(&p, cfg, Split::Dev)).transpose()?;
    let out = create_out_dir(cfg)?;
    let vocab = match cfg.path("vocab") {
        Some(p) => Vocab::load(p)?,
        None => N::vocab(&train_set)?,
    };
    let inventory = match cfg.path("labels") {
        Some(p) => load_inventory(p)?,
        None => N::inventory(&train_set),
    };
    let labels = LabelVocab::from_inventory(N::KIND.label_kind(), &inventory)?;
    let config = ModelConfig::preset(cfg.preset, vocab.len());
    let mut model = Model::<N>::new(config, vocab, labels, cfg.train.seed)?;
    write_file(&out.join("config.txt"), &cfg.to_text())?;

    let history = train_with(&mut model, &train_set, dev_set.as_deref(), &cfg.train, |_, row| {
        if !quiet {
            match row.dev_metric {
                Some(m) => eprintln!("epoch {} loss {:.6} dev {:.4}", row.epoch, row.train_loss, m),
                None => eprintln!("epoch {} loss {:.6}", row.epoch, row.train_loss),
            }
        }
        ControlFlow::Continue(())
    })?;
    let model_path = out.join("model.bin");
    save_model(&model, &model_path)?;
    write_file(&out.join("history.txt"), &history.to_table())?;
    write_file(&out.join("history.tsv"), &history.to_series())?;
    write_file(&out.join("vocab.txt"), &model.vocab.to_text())?;
    save_inventory(out.join("labels.txt"), &inventory)?;

    let mut msg = history.to_table();
    if let (Some(e), Some(m)) = (history.best_epoch, history.best_metric) {
        let _ = writeln!(msg, "best_epoch={e}\nbest_dev={m}");
    }
    let _ = writeln!(msg, "model={}", model_path.display());
    Ok(msg)
}

fn read_prediction_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, field) = line
            .split_once('\t')
            .ok_or_else(|| anyhow!("{}: line {}: expected id<TAB>prediction", path.display(), i + 1))?;
        if out.insert(id.to_string(), field.to_string()).is_some() {
            bail!("{}: line {}: instance `{id}` predicted twice", path.display(), i + 1);
        }
    }
    Ok(out)
}

fn model_fields<N: TaskNet>(model: &Model<N>, instances: &[N::Instance]) -> Result<Vec<String>> {
    Ok(model.predict_all(instances)?.iter().map(|p| p.to_field()).collect())
}

fn load_checkpoint<N: TaskNet>(cfg: &RunConfig) -> Result<Model<N>> {
    let path = cfg.checkpoint()?;
    let kind = archive_kind(&path)?;
    if kind != cfg.task.model_kind() {
        bail!(
            "{} holds a {kind} model but task {} needs the {} kind",
            path.display(),
            cfg.task,
            cfg.task.model_kind()
        );
    }
    load_model::<N>(&path).with_context(|| format!("loading {}", path.display()))
}

fn run_eval<N: TaskNet>(cfg: &RunConfig) -> Result<String> {
    let model = match cfg.path("predictions") {
        Some(_) => None,
        None => Some(load_checkpoint::<N>(cfg)?),
    };
    let test = N::load(&cfg.require_path("test")?, cfg, Split::Test)?;
    if test.is_empty() {
        bail!("test set is empty");
    }
    let fields = match cfg.path("predictions") {
        Some(path) => {
            let mut by_id = read_prediction_file(&path)?;
            let fields = test
                .iter()
                .map(|i| {
                    by_id
                        .remove(N::id(i))
                        .ok_or_else(|| anyhow!("{}: no prediction for instance `{}`", path.display(), N::id(i)))
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(extra) = by_id.keys().min() {
                bail!("{}: instance `{extra}` is not in the test set", path.display());
            }
            fields
        }
        None => model_fields(model.as_ref().expect("checkpoint loaded"), &test)?,
    };
    let mut out = format!("task={}\ninstances={}\n", cfg.task, test.len());
    out.push_str(&N::score(cfg.task, &test, &fields)?);
    if let Some(path) = cfg.path("sense_checkpoint") {
        out.push_str(&combined_report(cfg, &path)?);
    }
    if let Some(dir) = cfg.path("out") {
        fs::create_dir_all(&dir).with_context(|| format!("{}", dir.display()))?;
        write_file(&dir.join("report.txt"), &out)?;
    }
    Ok(out)
}

/// Dependency heads and predicate senses scored together.
fn combined_report(cfg: &RunConfig, sense_path: &Path) -> Result<String> {
    if cfg.task != Task::SrlDep {
        bail!("`sense_checkpoint` only applies to the srl-dep task");
    }
    let test = load_frames(&cfg.require_path("test")?, cfg, Split::Test)?;
    let args: Model<ArgNet> = load_checkpoint(cfg)?;
    let senses: Model<SenseNet> =
        load_model(sense_path).with_context(|| format!("loading {}", sense_path.display()))?;
    let gold: Vec<Vec<Span>> = test.iter().map(|i| i.arguments.clone()).collect();
    let pred = parse_fields(&model_fields(&args, &test)?)?;
    let gold_senses: Vec<Option<String>> = test.iter().map(|i| i.sense.clone()).collect();
    let pred_senses: Vec<Option<String>> = model_fields(&senses, &test)?.into_iter().map(Some).collect();
    let report = score_dependency_with_senses(&gold, &pred, &gold_senses, &pred_senses)?;
    Ok(report_lines(&report)
        .lines()
        .map(|l| format!("combined_{l}\n"))
        .collect())
}

fn run_predict<N: TaskNet>(cfg: &RunConfig) -> Result<String> {
    let input = cfg.path("input").or_else(|| cfg.path("test"));
    let input = input.ok_or_else(|| anyhow!("`input` is required for this command (use --input)"))?;
    let instances = N::load(&input, cfg, Split::Test)?;
    let model = load_checkpoint::<N>(cfg)?;
    let out = create_out_dir(cfg)?;
    let fields = model_fields(&model, &instances)?;
    let tsv: String = instances
        .iter()
        .zip(&fields)
        .map(|(i, f)| format!("{}\t{f}\n", N::id(i)))
        .collect();
    let tsv_path = out.join("predictions.tsv");
    write_file(&tsv_path, &tsv)?;
    let mut msg = format!("predictions={}\n", tsv_path.display());
    if let Some(columns) = N::columns(cfg, &instances, &fields)? {
        let path = out.join("predictions.conll");
        write_file(&path, &columns)?;
        let _ = writeln!(msg, "columns={}", path.display());
    }
    let _ = writeln!(msg, "instances={}", instances.len());
    Ok(msg)
}

pub fn train(cfg: &RunConfig, quiet: bool) -> Result<String> {
    match cfg.task {
        Task::Re => run_train::<ReNet>(cfg, quiet),
        Task::SrlSense => run_train::<SenseNet>(cfg, quiet),
        Task::SrlSpan | Task::SrlDep => run_train::<ArgNet>(cfg, quiet),
    }
}

pub fn eval(cfg: &RunConfig) -> Result<String> {
    match cfg.task {
        Task::Re => run_eval::<ReNet>(cfg),
        Task::SrlSense => run_eval::<SenseNet>(cfg),
        Task::SrlSpan | Task::SrlDep => run_eval::<ArgNet>(cfg),
    }
}

pub fn predict(cfg: &RunConfig) -> Result<String> {
    match cfg.task {
        Task::Re => run_predict::<ReNet>(cfg),
        Task::SrlSense => run_predict::<SenseNet>(cfg),
        Task::SrlSpan | Task::SrlDep => run_predict::<ArgNet>(cfg),
    }
}

pub fn synth(cfg: &RunConfig) -> Result<String> {
    let out = create_out_dir(cfg)?;
    let (seed, size) = (cfg.train.seed, cfg.size);
    let (corpus, kind) = match cfg.task {
        Task::Re => {
            let path = out.join("corpus.json");
            write_re_json(&path, &synth_re(seed, size)?.instances)?;
            (path, "re")
        }
        _ => {
            let path = out.join("corpus.conll");
            write_srl_columns(&path, &synth_srl(seed, size)?.instances, cfg.style)?;
            (path, "srl")
        }
    };
    let meta = out.join("metadata.txt");
    write_file(&meta, &synth_metadata(kind, seed, size))?;
    Ok(format!("corpus={}\nmetadata={}\n", corpus.display(), meta.display()))
}
