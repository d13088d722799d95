//! `relsrl`: train, evaluate and run relation extraction and SRL models.

mod commands;
mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, KEY_HELP};

#[derive(Parser, Debug)]
#[command(name = "relsrl", version, about, after_help = KEY_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write it, its history and the effective config to --out
    Train(Flags),
    /// Score a checkpoint (or a predictions file) on --test
    Eval(Flags),
    /// Write id<TAB>prediction lines for --input to <out>/predictions.tsv
    Predict(Flags),
    /// Write a deterministic synthetic corpus and its metadata to --out
    Synth(Flags),
}

#[derive(Args, Debug, Default)]
#[command(after_help = KEY_HELP)]
struct Flags {
    /// re | srl-sense | srl-span | srl-dep
    #[arg(long)]
    task: Option<String>,
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// tiny | desk | base | large
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    sense_checkpoint: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// span | dependency
    #[arg(long)]
    style: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Gradient norm limit, or `none`
    #[arg(long)]
    clip_norm: Option<String>,
    #[arg(long)]
    freeze_encoder: bool,
    #[arg(long)]
    size: Option<usize>,
    /// No per-epoch progress on stderr
    #[arg(long, short)]
    quiet: bool,
}

impl Flags {
    fn overrides(&self) -> BTreeMap<String, String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let entries: [(&str, Option<String>); 21] = [
            ("task", self.task.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("preset", self.preset.clone()),
            ("out", path(&self.out)),
            ("train", path(&self.train)),
            ("dev", path(&self.dev)),
            ("test", path(&self.test)),
            ("input", path(&self.input)),
            ("vocab", path(&self.vocab)),
            ("labels", path(&self.labels)),
            ("checkpoint", path(&self.checkpoint)),
            ("sense_checkpoint", path(&self.sense_checkpoint)),
            ("predictions", path(&self.predictions)),
            ("style", self.style.clone()),
            ("learning_rate", self.learning_rate.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("max_epochs", self.max_epochs.map(|v| v.to_string())),
            ("eval_every", self.eval_every.map(|v| v.to_string())),
            ("patience", self.patience.map(|v| v.to_string())),
            ("clip_norm", self.clip_norm.clone()),
            ("freeze_encoder", self.freeze_encoder.then(|| "true".to_string())),
        ];
        let mut map: BTreeMap<String, String> =
            entries.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))).collect();
        if let Some(size) = self.size {
            map.insert("size".into(), size.to_string());
        }
        map
    }

    fn resolve(&self) -> anyhow::Result<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), &self.overrides())
    }
}

fn run(cli: Cli) -> anyhow::Result<String> {
    match cli.command {
        Command::Train(f) => commands::train(&f.resolve()?, f.quiet),
        Command::Eval(f) => commands::eval(&f.resolve()?),
        Command::Predict(f) => commands::predict(&f.resolve()?),
        Command::Synth(f) => commands::synth(&f.resolve()?),
    }
}

/// The error and its causes on one line, skipping causes already spelled out.
fn one_line(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
    }
    msg.replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
