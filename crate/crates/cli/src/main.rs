use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use docrel::pipeline::ThresholdSetting;
use docrel::synth::SynthConfig;
use docrel::toolkit::{self, EvalOptions, HeatmapOptions, PredictOptions, SynthOptions, TrainOptions};
use docrel::{Error, Result};

#[derive(Parser)]
#[command(name = "docrel", version, about = "Document-level relation extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a per-epoch loss log.
    Train(TrainArgs),
    /// Write leaderboard-format predictions for a corpus.
    Predict(PredictArgs),
    /// Score a prediction file against a gold corpus.
    Eval(EvalArgs),
    /// Generate a synthetic corpus with planted relations and evidence.
    Synth(SynthArgs),
    /// Export pooled attention heatmaps for entity pairs.
    Heatmap(HeatmapArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Development corpus used to tune the threshold under `--threshold auto`.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Relation table (`name id` per line); inferred from the data if omitted.
    #[arg(long)]
    relations: Option<PathBuf>,
    /// File of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Loss log path; defaults to `<out>.loss.csv`.
    #[arg(long)]
    loss_log: Option<PathBuf>,
    #[arg(long)]
    max_seq_len: Option<usize>,
    #[arg(long)]
    layers_l: Option<usize>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `auto` or a value in [0, 1].
    #[arg(long)]
    threshold: Option<String>,
    /// Any other config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Prediction file path.
    #[arg(long)]
    out: PathBuf,
    /// `auto` uses the checkpoint's tuned value; otherwise a value in [0, 1].
    #[arg(long, default_value = "auto")]
    threshold: String,
    #[arg(long)]
    max_seq_len: Option<usize>,
    #[arg(long)]
    layers_l: Option<usize>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Gold corpus.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    relations: Option<PathBuf>,
    /// Training corpus whose facts Ign F1 excludes.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Report path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Corpus path.
    #[arg(long)]
    out: PathBuf,
    /// Relation table path; defaults to `<out>.relations.tsv`.
    #[arg(long)]
    relations_out: Option<PathBuf>,
    #[arg(long)]
    num_documents: Option<usize>,
    #[arg(long)]
    num_relations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    title: Option<String>,
    /// Comma-separated `head:tail` pairs; every gold pair if omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    pairs: Vec<(usize, usize)>,
    #[arg(long)]
    layers_l: Option<usize>,
    #[arg(long)]
    max_seq_len: Option<usize>,
    /// Also render an SVG per pair.
    #[arg(long)]
    svg: bool,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, t) = s.split_once(':').ok_or_else(|| format!("expected head:tail, got `{s}`"))?;
    let idx = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((idx(h)?, idx(t)?))
}

fn train_options(a: TrainArgs) -> Result<TrainOptions> {
    let mut overrides = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            overrides.push((k.to_string(), v));
        }
    };
    push("max_seq_len", a.max_seq_len.map(|v| v.to_string()));
    push("layers_l", a.layers_l.map(|v| v.to_string()));
    push("lambda1", a.lambda1.map(|v| v.to_string()));
    push("learning_rate", a.lr.map(|v| v.to_string()));
    push("epochs", a.epochs.map(|v| v.to_string()));
    push("seed", a.seed.map(|v| v.to_string()));
    push("threshold", a.threshold);
    for kv in a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{kv}`")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(TrainOptions {
        data: a.data,
        dev: a.dev,
        relations: a.relations,
        config_file: a.config,
        overrides,
        out: a.out,
        loss_log: a.loss_log,
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => {
            let log = toolkit::cli_train(&train_options(a)?)?;
            if let Some(last) = log.last() {
                eprintln!("epoch {}: loss {:.6}", last.epoch, last.total_loss);
            }
        }
        Command::Predict(a) => {
            let records = toolkit::cli_predict(&PredictOptions {
                data: a.data,
                checkpoint: a.checkpoint,
                out: a.out,
                threshold: a.threshold.parse::<ThresholdSetting>()?,
                max_seq_len: a.max_seq_len,
                layers_l: a.layers_l,
                workers: a.workers,
            })?;
            eprintln!("{} triples", records.len());
        }
        Command::Eval(a) => {
            let report = toolkit::cli_eval(&EvalOptions {
                data: a.data,
                predictions: a.predictions,
                relations: a.relations,
                train: a.train,
                out: a.out,
            })?;
            print!("{}", report.to_json());
        }
        Command::Synth(a) => {
            let mut config = SynthConfig::default();
            if let Some(n) = a.num_documents {
                config.num_documents = n;
            }
            if let Some(n) = a.num_relations {
                config.num_relations = n;
            }
            if let Some(s) = a.seed {
                config.seed = s;
            }
            let docs = toolkit::cli_synth(&SynthOptions {
                config,
                out: a.out,
                relations_out: a.relations_out,
            })?;
            eprintln!("{} documents", docs.len());
        }
        Command::Heatmap(a) => {
            let records = toolkit::cli_heatmap(&HeatmapOptions {
                data: a.data,
                checkpoint: a.checkpoint,
                out: a.out,
                title: a.title,
                pairs: a.pairs,
                layers_l: a.layers_l,
                max_seq_len: a.max_seq_len,
                svg: a.svg,
            })?;
            eprintln!("{} heatmaps", records.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(toolkit::exit_code(&e) as u8)
        }
    }
}
