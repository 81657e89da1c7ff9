//! Training loop, document-level prediction and threshold tuning.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autograd::{Mat, Tape};
use crate::checkpoint::Checkpoint;
use crate::corpus::{Document, LabelVocabulary};
use crate::encoder::{Dropout, EncoderConfig};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::model::{Model, ModelConfig};
use crate::objectives::LossWeights;
use crate::optim::{AdamW, AdamWConfig, LinearSchedule};
use crate::params::ParamStore;
use crate::sequencer::{EntityGuidedSequence, Tokenizer, WordTokenizer, DEFAULT_MAX_LEN};

/// Evidence sentences are those with probability above this value.
pub const EVIDENCE_THRESHOLD: f64 = 0.5;

/// How the relation threshold is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdSetting {
    /// Tuned for RE F1 on held-out scores after training.
    Auto,
    Fixed(f64),
}

impl FromStr for ThresholdSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(ThresholdSetting::Auto);
        }
        match s.parse::<f64>() {
            Ok(t) if (0.0..=1.0).contains(&t) => Ok(ThresholdSetting::Fixed(t)),
            _ => Err(Error::Config(format!("threshold must be `auto` or in [0, 1], got `{s}`"))),
        }
    }
}

/// Relation emission rule applied to sigmoid scores.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdPolicy {
    /// Emit when the score is strictly above the value.
    Fixed(f64),
    /// A tuned threshold is one of the observed scores; emit at or above it.
    Tuned(f64),
}

impl ThresholdPolicy {
    pub fn emits(&self, score: f64) -> bool {
        match *self {
            ThresholdPolicy::Fixed(t) => score > t,
            ThresholdPolicy::Tuned(t) => score >= t,
        }
    }

    /// Resolves a setting against a checkpoint's stored tuned value.
    pub fn resolve(setting: ThresholdSetting, checkpoint: &Checkpoint) -> Self {
        match (setting, checkpoint.tuned_threshold) {
            (ThresholdSetting::Fixed(t), _) => ThresholdPolicy::Fixed(t),
            (ThresholdSetting::Auto, Some(t)) => ThresholdPolicy::Tuned(t),
            (ThresholdSetting::Auto, None) => ThresholdPolicy::Fixed(0.5),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Encoder learning rate.
    pub learning_rate: f64,
    /// Learning rate of the freshly initialized heads.
    pub head_learning_rate: f64,
    pub epochs: usize,
    pub lambda1: f64,
    pub plain_evidence_loss: bool,
    pub lambda2: f64,
    /// Number of final layers pooled into attention features.
    pub layers_l: usize,
    pub seed: u64,
    /// Documents per optimizer step.
    pub batch_size: usize,
    pub threshold: ThresholdSetting,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_seq_len: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub relation_dim: usize,
    pub entity_guided: bool,
    pub per_relation_evidence: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            head_learning_rate: 1e-4,
            epochs: 60,
            lambda1: crate::objectives::DEFAULT_LAMBDA1,
            plain_evidence_loss: false,
            lambda2: crate::objectives::DEFAULT_LAMBDA1,
            layers_l: crate::model::DEFAULT_ATTENTION_LAYERS,
            seed: 42,
            batch_size: 1,
            threshold: ThresholdSetting::Auto,
            warmup_fraction: 0.06,
            weight_decay: 0.01,
            dropout: 0.1,
            max_seq_len: DEFAULT_MAX_LEN,
            num_layers: 3,
            num_heads: 2,
            model_dim: 32,
            ffn_dim: 64,
            relation_dim: crate::model::DEFAULT_RELATION_DIM,
            entity_guided: true,
            per_relation_evidence: false,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl TrainConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.lambda1,
            include_plain_evidence_loss: self.plain_evidence_loss,
            lambda2: self.lambda2,
        }
    }

    pub fn model_config(&self, vocab_size: usize, num_relations: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                num_layers: self.num_layers,
                num_heads: self.num_heads,
                model_dim: self.model_dim,
                ffn_dim: self.ffn_dim,
                vocab_size,
                max_positions: self.max_seq_len,
                dropout: self.dropout,
            },
            num_relations,
            relation_dim: self.relation_dim,
            per_relation_evidence: self.per_relation_evidence,
            attention_layers: self.layers_l,
            max_seq_len: self.max_seq_len,
            entity_guided: self.entity_guided,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.head_learning_rate > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config("warmup_fraction must lie in [0, 1]".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        self.loss_weights().validate()?;
        self.model_config(1, 1).validate()
    }

    /// Sets one field from its textual key and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "learning_rate" | "lr" => self.learning_rate = parse_value(key, v)?,
            "head_learning_rate" => self.head_learning_rate = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "lambda1" => self.lambda1 = parse_value(key, v)?,
            "lambda2" => self.lambda2 = parse_value(key, v)?,
            "plain_evidence_loss" => self.plain_evidence_loss = parse_value(key, v)?,
            "layers_l" => self.layers_l = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "threshold" => self.threshold = v.parse()?,
            "warmup_fraction" => self.warmup_fraction = parse_value(key, v)?,
            "weight_decay" => self.weight_decay = parse_value(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "max_seq_len" => self.max_seq_len = parse_value(key, v)?,
            "num_layers" => self.num_layers = parse_value(key, v)?,
            "num_heads" => self.num_heads = parse_value(key, v)?,
            "model_dim" => self.model_dim = parse_value(key, v)?,
            "ffn_dim" => self.ffn_dim = parse_value(key, v)?,
            "relation_dim" => self.relation_dim = parse_value(key, v)?,
            "entity_guided" => self.entity_guided = parse_value(key, v)?,
            "per_relation_evidence" => self.per_relation_evidence = parse_value(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines over the current values; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut config = TrainConfig::default();
        config.apply_text(&fsutil::read_to_string(path)?)?;
        Ok(config)
    }
}

/// Mean per-sequence losses of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub relation_loss: f64,
    pub evidence_loss: f64,
    pub total_loss: f64,
}

pub fn loss_log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,L_RE,L_Evi^a,Loss\n");
    for e in log {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch, e.relation_loss, e.evidence_loss, e.total_loss
        ));
    }
    out
}

fn accumulate(acc: &mut [Option<Mat>], grads: Vec<Option<Mat>>) {
    for (a, g) in acc.iter_mut().zip(grads) {
        match (a.as_mut(), g) {
            (Some(a), Some(g)) => *a += &g,
            (None, Some(g)) => *a = Some(g),
            _ => {}
        }
    }
}

/// Epoch-by-epoch trainer over a fixed corpus.
pub struct Trainer<'a> {
    docs: &'a [Document],
    /// Indices of documents with at least one entity pair.
    trainable: Vec<usize>,
    sequences: Vec<Vec<EntityGuidedSequence>>,
    config: TrainConfig,
    weights: LossWeights,
    model: Model,
    store: ParamStore,
    tokenizer: WordTokenizer,
    relations: LabelVocabulary,
    optimizer: AdamW,
    schedule: LinearSchedule,
    rng: ChaCha8Rng,
    log: Vec<EpochLog>,
}

impl<'a> Trainer<'a> {
    pub fn new(docs: &'a [Document], relations: &LabelVocabulary, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        for d in docs {
            d.validate(relations.len())?;
        }
        let trainable: Vec<usize> = (0..docs.len()).filter(|&i| docs[i].num_entities() >= 2).collect();
        if trainable.is_empty() {
            return Err(Error::Config("training corpus has no document with two entities".into()));
        }
        let tokenizer = WordTokenizer::from_corpus(docs);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model_config = config.model_config(tokenizer.vocab_size(), relations.len());
        let (model, store) = Model::init(model_config, &mut rng)?;
        let sequences = docs
            .iter()
            .map(|d| model.sequences(d, &tokenizer))
            .collect::<Result<Vec<_>>>()?;
        let optimizer = AdamW::new(
            AdamWConfig {
                encoder_lr: config.learning_rate,
                head_lr: config.head_learning_rate,
                weight_decay: config.weight_decay,
                ..AdamWConfig::default()
            },
            &store,
        );
        let steps = trainable.len().div_ceil(config.batch_size) * config.epochs;
        Ok(Trainer {
            docs,
            trainable,
            sequences,
            weights: config.loss_weights(),
            schedule: LinearSchedule::with_warmup_fraction(steps as u64, config.warmup_fraction),
            config,
            model,
            store,
            tokenizer,
            relations: relations.clone(),
            optimizer,
            rng,
            log: Vec::new(),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn tokenizer(&self) -> &WordTokenizer {
        &self.tokenizer
    }

    pub fn log(&self) -> &[EpochLog] {
        &self.log
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.model.config.clone(),
            tokenizer: self.tokenizer.clone(),
            relations: self.relations.clone(),
            tuned_threshold: None,
            store: self.store.clone(),
        }
    }

    /// One pass over the corpus in a seeded random document order. Gradients
    /// of every sequence in a batch are summed before the optimizer step.
    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let epoch = self.log.len() + 1;
        let mut order = self.trainable.clone();
        order.shuffle(&mut self.rng);
        let (mut re, mut evi, mut total, mut count) = (0.0, 0.0, 0.0, 0usize);
        for batch in order.chunks(self.config.batch_size) {
            let mut grads: Vec<Option<Mat>> = vec![None; self.store.len()];
            for &d in batch {
                let doc = &self.docs[d];
                for seq in &self.sequences[d] {
                    let mut dropout = (self.config.dropout > 0.0).then(|| Dropout {
                        rate: self.config.dropout,
                        rng: ChaCha8Rng::seed_from_u64(self.rng.random()),
                    });
                    let mut tape = Tape::new(self.store.values());
                    let loss = self
                        .model
                        .sequence_loss(&mut tape, doc, seq, &self.weights, dropout.as_mut())?;
                    let value = tape.scalar(loss.total);
                    if !value.is_finite() {
                        return Err(Error::Divergence {
                            epoch,
                            document: doc.title.clone(),
                            loss: value,
                        });
                    }
                    re += tape.scalar(loss.relation);
                    evi += loss.attention_evidence.map_or(0.0, |v| tape.scalar(v));
                    total += value;
                    count += 1;
                    accumulate(&mut grads, tape.backward(loss.total));
                }
            }
            let factor = self.schedule.factor(self.optimizer.steps() + 1);
            self.optimizer.step(&mut self.store, &grads, factor);
        }
        let n = count as f64;
        let entry = EpochLog {
            epoch,
            relation_loss: re / n,
            evidence_loss: evi / n,
            total_loss: total / n,
        };
        self.log.push(entry);
        Ok(entry)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Trains for `config.epochs` epochs. With [`ThresholdSetting::Auto`] the
/// relation threshold is tuned on `dev` (the training corpus when absent)
/// and stored in the checkpoint.
pub fn train(
    docs: &[Document],
    relations: &LabelVocabulary,
    config: TrainConfig,
    dev: Option<&[Document]>,
) -> Result<TrainOutcome> {
    let setting = config.threshold;
    let mut trainer = Trainer::new(docs, relations, config)?;
    for _ in 0..trainer.config.epochs {
        trainer.run_epoch()?;
    }
    let mut checkpoint = trainer.checkpoint();
    if setting == ThresholdSetting::Auto {
        let dev = dev.unwrap_or(docs);
        let scored = predict_corpus(
            trainer.model(),
            trainer.store(),
            trainer.tokenizer(),
            dev,
            ThresholdPolicy::Fixed(f64::INFINITY),
            1,
        )?;
        checkpoint.tuned_threshold = Some(tune_threshold(&scored, dev));
    }
    Ok(TrainOutcome {
        checkpoint,
        log: trainer.log,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredTriple {
    pub head: usize,
    pub tail: usize,
    pub relation: usize,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmittedTriple {
    pub head: usize,
    pub tail: usize,
    pub relation: usize,
    pub probability: f64,
    /// One attention-guided probability per sentence.
    pub evidence_probabilities: Vec<f64>,
    pub evidence: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DocumentPrediction {
    pub title: String,
    /// Every ordered pair under every relation, sorted by (head, tail, relation).
    pub scores: Vec<ScoredTriple>,
    pub emitted: Vec<EmittedTriple>,
}

/// Scores all ordered entity pairs of `doc` and, for each triple the policy
/// emits, predicts evidence with that relation's embedding.
pub fn predict_document(
    model: &Model,
    store: &ParamStore,
    tok: &dyn Tokenizer,
    doc: &Document,
    policy: ThresholdPolicy,
) -> Result<DocumentPrediction> {
    let nr = model.config.num_relations;
    let mut scores = Vec::new();
    let mut emitted = Vec::new();
    let mut seen = HashSet::new();
    for seq in model.sequences(doc, tok)? {
        let mut tape = Tape::new(store.values());
        let mut graph = model.forward(&mut tape, doc, &seq, None)?;
        let Some(probs) = graph.scores else { continue };
        let probs = tape.value(probs).clone();
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("relation scores of `{}`", doc.title)));
        }
        for p in 0..graph.pairs.len() {
            let (head, tail) = graph.pairs[p];
            if !seen.insert((head, tail)) {
                return Err(Error::Shape(format!("pair ({head}, {tail}) scored twice")));
            }
            for relation in 0..nr {
                let probability = probs[[p, relation]];
                scores.push(ScoredTriple {
                    head,
                    tail,
                    relation,
                    probability,
                });
                if policy.emits(probability) {
                    let ev = model.evidence(&mut tape, &mut graph, p, relation);
                    let evidence_probabilities = tape.value(ev.guided).column(0).to_vec();
                    let evidence = (0..evidence_probabilities.len())
                        .filter(|&j| evidence_probabilities[j] > EVIDENCE_THRESHOLD)
                        .collect();
                    emitted.push(EmittedTriple {
                        head,
                        tail,
                        relation,
                        probability,
                        evidence_probabilities,
                        evidence,
                    });
                }
            }
        }
    }
    let ne = doc.num_entities();
    if seen.len() != ne * ne.saturating_sub(1) {
        return Err(Error::Shape(format!(
            "{} of {} ordered pairs scored",
            seen.len(),
            ne * ne.saturating_sub(1)
        )));
    }
    let key = |h: usize, t: usize, r: usize| (h, t, r);
    scores.sort_by_key(|s| key(s.head, s.tail, s.relation));
    emitted.sort_by_key(|s| key(s.head, s.tail, s.relation));
    Ok(DocumentPrediction {
        title: doc.title.clone(),
        scores,
        emitted,
    })
}

/// Predicts every document, on `workers` threads when more than one.
/// Output order follows `docs` regardless of the worker count.
pub fn predict_corpus(
    model: &Model,
    store: &ParamStore,
    tok: &dyn Tokenizer,
    docs: &[Document],
    policy: ThresholdPolicy,
    workers: usize,
) -> Result<Vec<DocumentPrediction>> {
    let one = |d: &Document| predict_document(model, store, tok, d, policy);
    if workers <= 1 {
        return docs.iter().map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| docs.par_iter().map(one).collect())
}

/// Threshold maximizing micro RE F1 over the candidate set of observed
/// scores (emitting at or above the candidate). Ties go to the higher
/// threshold; no scores at all gives 0.5.
pub fn tune_threshold(predictions: &[DocumentPrediction], gold: &[Document]) -> f64 {
    let gold_keys: HashSet<(&str, usize, usize, usize)> = gold
        .iter()
        .flat_map(|d| {
            d.gold_relations
                .iter()
                .map(move |r| (d.title.as_str(), r.head_idx, r.tail_idx, r.relation_id))
        })
        .collect();
    let mut scored: Vec<(f64, bool)> = predictions
        .iter()
        .flat_map(|p| {
            let gold_keys = &gold_keys;
            p.scores.iter().map(move |s| {
                (
                    s.probability,
                    gold_keys.contains(&(p.title.as_str(), s.head, s.tail, s.relation)),
                )
            })
        })
        .collect();
    if scored.is_empty() {
        return 0.5;
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n_gold = gold_keys.len();
    let (mut tp, mut predicted) = (0usize, 0usize);
    let (mut best_f1, mut best) = (-1.0, scored[0].0);
    let mut i = 0;
    while i < scored.len() {
        let score = scored[i].0;
        while i < scored.len() && scored[i].0 == score {
            tp += usize::from(scored[i].1);
            predicted += 1;
            i += 1;
        }
        let f1 = 2.0 * tp as f64 / (predicted + n_gold) as f64;
        if f1 > best_f1 {
            best_f1 = f1;
            best = score;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;

    fn doc_with(title: &str, gold: &[(usize, usize, usize)]) -> Document {
        let labels: Vec<String> = gold
            .iter()
            .map(|(h, t, r)| format!(r#"{{"r": "P{}", "h": {h}, "t": {t}, "evidence": [0]}}"#, r + 1))
            .collect();
        let json = format!(
            r#"[{{"title": "{title}", "sents": [["a", "b", "c"]],
               "vertexSet": [[{{"name": "a", "sent_id": 0, "pos": [0, 1], "type": "X"}}],
                             [{{"name": "b", "sent_id": 0, "pos": [1, 2], "type": "X"}}],
                             [{{"name": "c", "sent_id": 0, "pos": [2, 3], "type": "X"}}]],
               "labels": [{}]}}]"#,
            labels.join(",")
        );
        let vocab = LabelVocabulary::from_names(["P1", "P2"]).unwrap();
        parse_corpus(&json, &vocab).unwrap().remove(0)
    }

    fn prediction(title: &str, scores: &[(usize, usize, usize, f64)]) -> DocumentPrediction {
        DocumentPrediction {
            title: title.into(),
            scores: scores
                .iter()
                .map(|&(head, tail, relation, probability)| ScoredTriple {
                    head,
                    tail,
                    relation,
                    probability,
                })
                .collect(),
            emitted: Vec::new(),
        }
    }

    /// Tries every candidate and keeps the best F1, preferring higher thresholds.
    fn sweep_oracle(scores: &[(f64, bool)], n_gold: usize) -> f64 {
        let mut candidates: Vec<f64> = scores.iter().map(|s| s.0).collect();
        candidates.sort_by(|a, b| b.total_cmp(a));
        candidates.dedup();
        let mut best = (f64::NEG_INFINITY, 0.5);
        for c in candidates {
            let tp = scores.iter().filter(|s| s.0 >= c && s.1).count() as f64;
            let pred = scores.iter().filter(|s| s.0 >= c).count() as f64;
            let p = if pred > 0.0 { tp / pred } else { 0.0 };
            let r = tp / n_gold as f64;
            let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            if f1 > best.0 {
                best = (f1, c);
            }
        }
        best.1
    }

    #[test]
    fn tuning_on_separated_scores_picks_the_gold_score() {
        let gold = vec![doc_with("d", &[(0, 1, 0), (1, 2, 1)])];
        let pred = prediction("d", &[(0, 1, 0, 0.9), (1, 2, 1, 0.9), (0, 2, 0, 0.1), (2, 0, 1, 0.1)]);
        assert_eq!(tune_threshold(&[pred], &gold), 0.9);
        assert_eq!(tune_threshold(&[], &gold), 0.5);
    }

    #[test]
    fn tuning_matches_exhaustive_sweep_with_a_mislabeled_score() {
        let gold = vec![doc_with("d", &[(0, 1, 0), (1, 2, 1), (2, 0, 0)])];
        // (1, 0, 1) is not gold but outranks the gold (2, 0, 0).
        let rows = [(0, 1, 0, 0.95), (1, 2, 1, 0.8), (1, 0, 1, 0.7), (2, 0, 0, 0.4)];
        let got = tune_threshold(&[prediction("d", &rows)], &gold);
        let flagged: Vec<(f64, bool)> = rows
            .iter()
            .map(|&(h, t, r, p)| (p, gold[0].gold_relations.iter().any(|g| (g.head_idx, g.tail_idx, g.relation_id) == (h, t, r))))
            .collect();
        assert_eq!(got, sweep_oracle(&flagged, 3));
        assert_eq!(got, 0.4);
    }

    #[test]
    fn policies_differ_only_at_the_boundary() {
        assert!(!ThresholdPolicy::Fixed(0.5).emits(0.5));
        assert!(ThresholdPolicy::Tuned(0.5).emits(0.5));
        assert!(ThresholdPolicy::Fixed(0.5).emits(0.5000001));
    }

    #[test]
    fn config_text_overrides_defaults() {
        let mut c = TrainConfig::default();
        c.apply_text("# desk run\nlr = 1e-3\nepochs=5\nthreshold = 0.4\nentity_guided = false\n")
            .unwrap();
        assert_eq!(c.learning_rate, 1e-3);
        assert_eq!(c.epochs, 5);
        assert_eq!(c.threshold, ThresholdSetting::Fixed(0.4));
        assert!(!c.entity_guided);
        assert!(c.apply_text("nope = 1").is_err());
        assert!(c.apply_text("epochs").is_err());
        assert!(c.set("threshold", "1.5").is_err());
        let bad = TrainConfig {
            layers_l: 4,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn loss_log_has_the_expected_header() {
        let csv = loss_log_csv(&[EpochLog {
            epoch: 1,
            relation_loss: 0.5,
            evidence_loss: 0.25,
            total_loss: 0.5000025,
        }]);
        assert_eq!(csv, "epoch,L_RE,L_Evi^a,Loss\n1,0.5,0.25,0.5000025\n");
    }
}
