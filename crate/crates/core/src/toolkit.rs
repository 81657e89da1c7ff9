//! Entry points behind the `docrel` subcommands, and attention heatmaps.
//!
//! Every command computes all of its output before writing, and writes
//! each file atomically.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::autograd::Tape;
use crate::checkpoint::Checkpoint;
use crate::corpus::{build_train_fact_index, infer_vocabulary, parse_corpus, write_corpus, Document, LabelVocabulary, TrainFactIndex};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::metrics::{evaluate, leaderboard_from_predictions, read_leaderboard, write_leaderboard, EvalReport, LeaderboardRecord};
use crate::model::Model;
use crate::pipeline::{loss_log_csv, predict_corpus, train, EpochLog, ThresholdPolicy, ThresholdSetting, TrainConfig};
use crate::sequencer::EntityGuidedSequence;
use crate::synth::{generate, SynthConfig};

/// Process exit status for a failed command: 1 usage or configuration,
/// 2 data, 3 training divergence.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Divergence { .. } => 3,
        _ => 2,
    }
}

fn vocabulary(relations: Option<&Path>, texts: &[&str]) -> Result<LabelVocabulary> {
    match relations {
        Some(p) => LabelVocabulary::load(p),
        None => infer_vocabulary(texts),
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub data: PathBuf,
    pub dev: Option<PathBuf>,
    /// Two-column `name id` relation table; inferred from the data when absent.
    pub relations: Option<PathBuf>,
    pub config_file: Option<PathBuf>,
    /// `key = value` overrides applied after the config file.
    pub overrides: Vec<(String, String)>,
    /// Checkpoint destination.
    pub out: PathBuf,
    /// Loss log destination; `<out>.loss.csv` when absent.
    pub loss_log: Option<PathBuf>,
}

pub fn cli_train(opts: &TrainOptions) -> Result<Vec<EpochLog>> {
    let mut config = match &opts.config_file {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    for (k, v) in &opts.overrides {
        config.set(k, v)?;
    }
    let text = fsutil::read_to_string(&opts.data)?;
    let dev_text = opts.dev.as_deref().map(fsutil::read_to_string).transpose()?;
    let mut texts = vec![text.as_str()];
    texts.extend(dev_text.as_deref());
    let vocab = vocabulary(opts.relations.as_deref(), &texts)?;
    let docs = parse_corpus(&text, &vocab)?;
    let dev = dev_text.map(|t| parse_corpus(&t, &vocab)).transpose()?;
    let outcome = train(&docs, &vocab, config, dev.as_deref())?;
    let log_path = opts
        .loss_log
        .clone()
        .unwrap_or_else(|| with_suffix(&opts.out, ".loss.csv"));
    outcome.checkpoint.save(&opts.out)?;
    fsutil::write_atomic(&log_path, loss_log_csv(&outcome.log).as_bytes())?;
    Ok(outcome.log)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Clone, Debug)]
pub struct PredictOptions {
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    pub out: PathBuf,
    pub threshold: ThresholdSetting,
    pub max_seq_len: Option<usize>,
    pub layers_l: Option<usize>,
    pub workers: usize,
}

/// Loads a checkpoint's model, applying inference-time overrides.
fn load_model(path: &Path, max_seq_len: Option<usize>, layers_l: Option<usize>) -> Result<(Checkpoint, Model)> {
    let checkpoint = Checkpoint::load(path)?;
    let mut config = checkpoint.config.clone();
    if let Some(m) = max_seq_len {
        config.max_seq_len = m;
    }
    if let Some(l) = layers_l {
        config.attention_layers = l;
    }
    let model = Model::bind(config, &checkpoint.store)?;
    Ok((checkpoint, model))
}

pub fn cli_predict(opts: &PredictOptions) -> Result<Vec<LeaderboardRecord>> {
    let (checkpoint, model) = load_model(&opts.checkpoint, opts.max_seq_len, opts.layers_l)?;
    let docs = crate::corpus::load_corpus(&opts.data, &checkpoint.relations)?;
    let policy = ThresholdPolicy::resolve(opts.threshold, &checkpoint);
    let predictions = predict_corpus(&model, &checkpoint.store, &checkpoint.tokenizer, &docs, policy, opts.workers)?;
    let records = leaderboard_from_predictions(&predictions, &checkpoint.relations);
    write_leaderboard(&opts.out, &records)?;
    Ok(records)
}

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    /// Gold corpus.
    pub data: PathBuf,
    pub predictions: PathBuf,
    pub relations: Option<PathBuf>,
    /// Training corpus whose facts are ignored by Ign F1; empty index when absent.
    pub train: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn cli_eval(opts: &EvalOptions) -> Result<EvalReport> {
    let gold_text = fsutil::read_to_string(&opts.data)?;
    let train_text = opts.train.as_deref().map(fsutil::read_to_string).transpose()?;
    let mut texts = vec![gold_text.as_str()];
    texts.extend(train_text.as_deref());
    let vocab = vocabulary(opts.relations.as_deref(), &texts)?;
    let gold = parse_corpus(&gold_text, &vocab)?;
    let index = match train_text {
        Some(t) => build_train_fact_index(&parse_corpus(&t, &vocab)?),
        None => TrainFactIndex::default(),
    };
    let records = read_leaderboard(&opts.predictions)?;
    let report = evaluate(&records, &gold, &vocab, &index)?;
    fsutil::write_atomic(&opts.out, report.to_json().as_bytes())?;
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct SynthOptions {
    pub config: SynthConfig,
    pub out: PathBuf,
    /// Where to write the relation table; `<out>.relations.tsv` when absent.
    pub relations_out: Option<PathBuf>,
}

pub fn cli_synth(opts: &SynthOptions) -> Result<Vec<Document>> {
    let docs = generate(&opts.config)?;
    let vocab = opts.config.relation_vocabulary();
    let rel_path = opts
        .relations_out
        .clone()
        .unwrap_or_else(|| with_suffix(&opts.out, ".relations.tsv"));
    write_corpus(&opts.out, &docs, &vocab)?;
    fsutil::write_atomic(&rel_path, vocab.to_table().as_bytes())?;
    Ok(docs)
}

/// Pooled attention of one entity pair, remapped to document coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapRecord {
    pub title: String,
    pub head_idx: usize,
    pub tail_idx: usize,
    pub tokens: Vec<String>,
    /// One value per document token.
    pub token_features: Vec<f64>,
    /// One attention feature per sentence.
    pub sentence_features: Vec<f64>,
}

impl HeatmapRecord {
    pub fn token_csv(&self) -> String {
        let mut out = String::from("token_index,token,feature_value\n");
        for (i, (tok, v)) in self.tokens.iter().zip(&self.token_features).enumerate() {
            let _ = writeln!(out, "{i},{},{v}", csv_field(tok));
        }
        out
    }

    pub fn sentence_csv(&self) -> String {
        let mut out = String::from("sentence_index,feature_value\n");
        for (i, v) in self.sentence_features.iter().enumerate() {
            let _ = writeln!(out, "{i},{v}");
        }
        out
    }

    /// Tokens laid out one sentence per line, shaded by feature value.
    pub fn svg(&self, doc: &Document) -> String {
        const CHAR_W: f64 = 7.5;
        const ROW_H: f64 = 22.0;
        let max = self.token_features.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
        let mut body = String::new();
        let mut width: f64 = 0.0;
        let mut idx = 0;
        for (s, sentence) in doc.sentences.iter().enumerate() {
            let y = 10.0 + s as f64 * ROW_H;
            let mut x = 10.0;
            for word in sentence {
                let w = CHAR_W * word.chars().count() as f64 + 8.0;
                let shade = self.token_features[idx] / max;
                let _ = writeln!(
                    body,
                    r#"<rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{:.1}" fill="rgb(255,{g},{g})"/><text x="{:.1}" y="{:.1}" font-family="monospace" font-size="12">{}</text>"#,
                    ROW_H - 4.0,
                    x + 4.0,
                    y + 13.0,
                    xml_escape(word),
                    g = (255.0 * (1.0 - shade)).round() as u8,
                );
                x += w + 2.0;
                idx += 1;
            }
            width = width.max(x);
        }
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\">\n{body}</svg>\n",
            width + 10.0,
            20.0 + doc.sentences.len() as f64 * ROW_H
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Averages per-window token rows into one value per document word.
fn remap_to_document(seq: &EntityGuidedSequence, rows: &[Option<Vec<f64>>]) -> Vec<f64> {
    seq.doc_pos_map
        .iter()
        .map(|positions| {
            let (mut sum, mut n) = (0.0, 0usize);
            for p in positions.clone() {
                for (w, wp) in seq.locate(p) {
                    if let Some(row) = &rows[w] {
                        sum += row[wp];
                        n += 1;
                    }
                }
            }
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        })
        .collect()
}

/// Heatmap of pair `(head, tail)` in `doc`.
pub fn heatmap(model: &Model, checkpoint: &Checkpoint, doc: &Document, head: usize, tail: usize) -> Result<HeatmapRecord> {
    let ne = doc.num_entities();
    if head >= ne || tail >= ne || head == tail {
        return Err(Error::Validation {
            title: doc.title.clone(),
            detail: format!("no ordered pair ({head}, {tail}) among {ne} entities"),
        });
    }
    let seqs = model.sequences(doc, &checkpoint.tokenizer)?;
    let seq = seqs
        .iter()
        .find(|s| s.head_entity_idx.is_none_or(|h| h == head))
        .expect("a sequence scores every head");
    let mut tape = Tape::new(checkpoint.store.values());
    let mut graph = model.forward(&mut tape, doc, seq, None)?;
    let pair = graph.pair_index(head, tail).expect("pair present in its head's sequence");
    let rows: Vec<Option<Vec<f64>>> = graph
        .token_features(&mut tape, pair)
        .into_iter()
        .map(|v| v.map(|v| tape.value(v).row(0).to_vec()))
        .collect();
    let a = graph.attention_features(&mut tape, pair);
    Ok(HeatmapRecord {
        title: doc.title.clone(),
        head_idx: head,
        tail_idx: tail,
        tokens: doc.tokens().map(str::to_string).collect(),
        token_features: remap_to_document(seq, &rows),
        sentence_features: tape.value(a).column(0).to_vec(),
    })
}

#[derive(Clone, Debug)]
pub struct HeatmapOptions {
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    /// Output directory.
    pub out: PathBuf,
    /// Restricts output to one document.
    pub title: Option<String>,
    /// Pairs to render; every gold pair when empty.
    pub pairs: Vec<(usize, usize)>,
    pub layers_l: Option<usize>,
    pub max_seq_len: Option<usize>,
    pub svg: bool,
}

fn file_stem(title: &str) -> String {
    title
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

pub fn cli_heatmap(opts: &HeatmapOptions) -> Result<Vec<HeatmapRecord>> {
    let (checkpoint, model) = load_model(&opts.checkpoint, opts.max_seq_len, opts.layers_l)?;
    let docs = crate::corpus::load_corpus(&opts.data, &checkpoint.relations)?;
    let selected: Vec<&Document> = docs
        .iter()
        .filter(|d| opts.title.as_ref().is_none_or(|t| &d.title == t))
        .collect();
    if selected.is_empty() {
        return Err(Error::Config("no document matches the requested title".into()));
    }
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let mut records = Vec::new();
    for (i, doc) in selected.iter().enumerate() {
        let pairs: Vec<(usize, usize)> = if opts.pairs.is_empty() {
            let mut gold: Vec<_> = doc.gold_relations.iter().map(|r| (r.head_idx, r.tail_idx)).collect();
            gold.sort_unstable();
            gold.dedup();
            gold
        } else {
            opts.pairs.clone()
        };
        for (h, t) in pairs {
            let record = heatmap(&model, &checkpoint, doc, h, t)?;
            let stem = format!("{i:04}_{}_{h}_{t}", file_stem(&doc.title));
            files.push((opts.out.join(format!("{stem}.csv")), record.token_csv()));
            files.push((opts.out.join(format!("{stem}.sentences.csv")), record.sentence_csv()));
            if opts.svg {
                files.push((opts.out.join(format!("{stem}.svg")), record.svg(doc)));
            }
            records.push(record);
        }
    }
    std::fs::create_dir_all(&opts.out).map_err(|e| Error::io(&opts.out, e))?;
    for (path, content) in files {
        fsutil::write_atomic(&path, content.as_bytes())?;
    }
    Ok(records)
}
