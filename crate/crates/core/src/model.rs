//! The full relation/evidence model: encoder plus heads, wired per input
//! sequence onto a [`Tape`].

use std::collections::BTreeMap;

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Mat, Tape, Var};
use crate::corpus::Document;
use crate::encoder::{forward_sequence, Dropout, EncoderBackend, EncoderConfig, TransformerEncoder};
use crate::error::{Error, Result};
use crate::heads::{
    attention_features_var, attention_guided_var, fused_evidence_var, pair_token_features_var,
    pooled_attention_var, relation_scores_var, AttentionPlan, EvidenceHeadParams, RelationEmbeddingTable,
    RelationHeadParams,
};
use crate::objectives::{joint_loss_var, LossWeights, PROB_EPS};
use crate::params::{Init, ParamGroup, ParamStore};
use crate::sequencer::{build_sequences, build_unguided_sequence, EntityGuidedSequence, Tokenizer};

pub const DEFAULT_RELATION_DIM: usize = 108;
pub const DEFAULT_ATTENTION_LAYERS: usize = 3;

const HEAD_INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub num_relations: usize,
    /// Dimension m of relation vectors and fused sentence representations.
    pub relation_dim: usize,
    /// One evidence head per relation instead of a shared one.
    pub per_relation_evidence: bool,
    /// Number of final encoder layers pooled into attention features.
    pub attention_layers: usize,
    pub max_seq_len: usize,
    /// `false` selects the prefix-free layout: one `CLS + SEP + D + SEP`
    /// sequence per document with heads pooled from their mentions.
    pub entity_guided: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.num_relations == 0 || self.relation_dim == 0 {
            return Err(Error::Config("relation count and dimension must be positive".into()));
        }
        if self.attention_layers == 0 || self.attention_layers > self.encoder.num_layers {
            return Err(Error::Config(format!(
                "attention layers {} outside 1..={}",
                self.attention_layers, self.encoder.num_layers
            )));
        }
        if self.max_seq_len > self.encoder.max_positions {
            return Err(Error::Config(format!(
                "max_seq_len {} exceeds the encoder's {} positions",
                self.max_seq_len, self.encoder.max_positions
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct EvidenceSlot {
    in_w: usize,
    in_b: usize,
    out_w: usize,
    out_b: usize,
    attn_w: usize,
    attn_b: usize,
}

pub struct Model {
    pub config: ModelConfig,
    encoder: Box<dyn EncoderBackend>,
    rel_w: usize,
    rel_b: usize,
    rel_emb: usize,
    evidence: Vec<EvidenceSlot>,
}

fn lookup(store: &ParamStore, name: &str) -> Result<usize> {
    store
        .index(name)
        .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
}

impl Model {
    /// Fresh model with the reference encoder.
    pub fn init(config: ModelConfig, rng: &mut impl Rng) -> Result<(Self, ParamStore)> {
        config.validate()?;
        let mut store = ParamStore::new();
        TransformerEncoder::init(config.encoder.clone(), &mut store, rng)?;
        Self::init_heads(&config, &mut store, rng);
        let model = Self::bind(config, &store)?;
        Ok((model, store))
    }

    /// Adds head parameters for `config` to a store that already holds an encoder.
    pub fn init_heads(config: &ModelConfig, store: &mut ParamStore, rng: &mut impl Rng) {
        let d = config.encoder.model_dim;
        let nr = config.num_relations;
        let m = config.relation_dim;
        store.add("relation.weight", ParamGroup::RelationHead, (d, nr * d), Init::Normal(HEAD_INIT_STD), rng);
        store.add("relation.bias", ParamGroup::RelationHead, (1, nr), Init::Zeros, rng);
        store.add("relation_embedding", ParamGroup::RelationEmbedding, (nr, m), Init::Normal(1.0), rng);
        let slots = if config.per_relation_evidence { nr } else { 1 };
        let g = ParamGroup::EvidenceHead;
        for s in 0..slots {
            let p = format!("evidence{s}");
            store.add(format!("{p}.in.weight"), g, (m * d, m), Init::Normal(HEAD_INIT_STD), rng);
            store.add(format!("{p}.in.bias"), g, (1, m), Init::Zeros, rng);
            store.add(format!("{p}.out.weight"), g, (m, 1), Init::Normal(HEAD_INIT_STD), rng);
            store.add(format!("{p}.out.bias"), g, (1, 1), Init::Zeros, rng);
            store.add(format!("{p}.attn.weight"), g, (m, 1), Init::Normal(HEAD_INIT_STD), rng);
            store.add(format!("{p}.attn.bias"), g, (1, 1), Init::Zeros, rng);
        }
    }

    /// Binds to a populated store using the reference encoder.
    pub fn bind(config: ModelConfig, store: &ParamStore) -> Result<Self> {
        let encoder = TransformerEncoder::bind(config.encoder.clone(), store)?;
        Self::with_encoder(config, Box::new(encoder), store)
    }

    /// Binds heads to a store around any encoder implementation.
    pub fn with_encoder(config: ModelConfig, encoder: Box<dyn EncoderBackend>, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        if encoder.config() != &config.encoder {
            return Err(Error::Config("encoder backend disagrees with the model config".into()));
        }
        let slots = if config.per_relation_evidence {
            config.num_relations
        } else {
            1
        };
        let evidence = (0..slots)
            .map(|s| {
                let p = format!("evidence{s}");
                Ok(EvidenceSlot {
                    in_w: lookup(store, &format!("{p}.in.weight"))?,
                    in_b: lookup(store, &format!("{p}.in.bias"))?,
                    out_w: lookup(store, &format!("{p}.out.weight"))?,
                    out_b: lookup(store, &format!("{p}.out.bias"))?,
                    attn_w: lookup(store, &format!("{p}.attn.weight"))?,
                    attn_b: lookup(store, &format!("{p}.attn.bias"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = Model {
            rel_w: lookup(store, "relation.weight")?,
            rel_b: lookup(store, "relation.bias")?,
            rel_emb: lookup(store, "relation_embedding")?,
            evidence,
            encoder,
            config,
        };
        let expected = (model.config.encoder.model_dim, model.config.num_relations * model.config.encoder.model_dim);
        if store.values()[model.rel_w].dim() != expected {
            return Err(Error::Checkpoint("relation head shape disagrees with the config".into()));
        }
        Ok(model)
    }

    pub fn encoder(&self) -> &dyn EncoderBackend {
        self.encoder.as_ref()
    }

    pub fn relation_head(&self, store: &ParamStore) -> RelationHeadParams {
        let v = store.values();
        RelationHeadParams::from_stacked(&v[self.rel_w], &v[self.rel_b])
    }

    pub fn relation_embeddings(&self, store: &ParamStore) -> RelationEmbeddingTable {
        RelationEmbeddingTable {
            table: store.values()[self.rel_emb].clone(),
        }
    }

    pub fn evidence_head(&self, store: &ParamStore, relation: usize) -> EvidenceHeadParams {
        let slot = self.slot(relation);
        let v = store.values();
        let m = self.config.relation_dim;
        let d = self.config.encoder.model_dim;
        EvidenceHeadParams {
            in_weight: v[slot.in_w]
                .clone()
                .into_shape_with_order((m, d, m))
                .expect("contiguous"),
            in_bias: v[slot.in_b].row(0).to_owned(),
            out_weight: v[slot.out_w].column(0).to_owned(),
            out_bias: v[slot.out_b][[0, 0]],
            attn_weight: v[slot.attn_w].column(0).to_owned(),
            attn_bias: v[slot.attn_b][[0, 0]],
        }
    }

    fn slot(&self, relation: usize) -> EvidenceSlot {
        if self.config.per_relation_evidence {
            self.evidence[relation]
        } else {
            self.evidence[0]
        }
    }

    /// Input sequences of `doc` under the configured layout.
    pub fn sequences(&self, doc: &Document, tok: &dyn Tokenizer) -> Result<Vec<EntityGuidedSequence>> {
        if self.config.entity_guided {
            build_sequences(doc, tok, self.config.max_seq_len)
        } else {
            Ok(vec![build_unguided_sequence(doc, tok, self.config.max_seq_len)?])
        }
    }

    /// Builds the forward graph of one sequence: relation probabilities for
    /// every pair it scores, sentence embeddings, and pooled attention.
    pub fn forward(
        &self,
        tape: &mut Tape,
        doc: &Document,
        seq: &EntityGuidedSequence,
        dropout: Option<&mut Dropout>,
    ) -> Result<SequenceGraph> {
        let merged = forward_sequence(tape, seq, self.encoder.as_ref(), dropout)?;
        let emb = merged.embeddings;
        let ne = doc.num_entities();
        let entity_positions: Vec<Vec<usize>> = (0..ne).map(|e| seq.entity_positions(doc, e)).collect();
        if let Some(e) = entity_positions.iter().position(Vec::is_empty) {
            return Err(Error::Validation {
                title: doc.title.clone(),
                detail: format!("entity {e} has no tokens in the sequence"),
            });
        }
        let heads: Vec<usize> = match seq.head_entity_idx {
            Some(h) => vec![h],
            None => (0..ne).collect(),
        };
        let w = tape.param(self.rel_w);
        let b = tape.param(self.rel_b);
        let mut pairs = Vec::new();
        let mut head_rows = Vec::new();
        let mut blocks = Vec::new();
        for &h in &heads {
            let tails: Vec<usize> = (0..ne).filter(|&t| t != h).collect();
            if tails.is_empty() {
                continue;
            }
            let rows: Vec<usize> = match seq.head_entity_idx {
                Some(_) => seq.head_span.clone().collect(),
                None => entity_positions[h].clone(),
            };
            let hv = tape.row_means(emb, std::slice::from_ref(&rows));
            let groups: Vec<Vec<usize>> = tails.iter().map(|&t| entity_positions[t].clone()).collect();
            let tv = tape.row_means(emb, &groups);
            blocks.push(relation_scores_var(tape, hv, tv, w, b));
            for &t in &tails {
                pairs.push((h, t));
                head_rows.push(rows.clone());
            }
        }
        let scores = match blocks.len() {
            0 => None,
            1 => Some(blocks[0]),
            _ => Some(tape.concat_rows(blocks)),
        };
        let spans: Vec<Vec<usize>> = seq.sentence_spans.iter().map(|s| s.clone().collect()).collect();
        let sentences = tape.row_means(emb, &spans);
        let pooled = merged
            .windows
            .iter()
            .map(|w| pooled_attention_var(tape, w, self.config.attention_layers))
            .collect();
        let plans = pairs
            .iter()
            .zip(&head_rows)
            .map(|(&(_, t), rows)| AttentionPlan::for_pair(seq, rows, &entity_positions[t]))
            .collect::<Result<Vec<_>>>()?;
        Ok(SequenceGraph {
            pairs,
            scores,
            sentences,
            pooled,
            plans,
            attention: BTreeMap::new(),
        })
    }

    /// Fused representation, plain and attention-guided evidence
    /// probabilities for pair `pair` under relation `relation`.
    pub fn evidence(
        &self,
        tape: &mut Tape,
        graph: &mut SequenceGraph,
        pair: usize,
        relation: usize,
    ) -> EvidenceVars {
        let slot = self.slot(relation);
        let table = tape.param(self.rel_emb);
        let r = tape.gather_rows(table, vec![relation]);
        let r = tape.transpose(r);
        let in_w = tape.param(slot.in_w);
        let in_b = tape.param(slot.in_b);
        let out_w = tape.param(slot.out_w);
        let out_b = tape.param(slot.out_b);
        let (fused, plain) = fused_evidence_var(tape, graph.sentences, r, in_w, in_b, out_w, out_b);
        let a = graph.attention_features(tape, pair);
        let attn_w = tape.param(slot.attn_w);
        let attn_b = tape.param(slot.attn_b);
        let guided = attention_guided_var(tape, a, fused, attn_w, attn_b);
        EvidenceVars {
            fused,
            plain,
            guided,
            attention: a,
        }
    }

    /// Joint training objective of one sequence, using gold relation
    /// embeddings for the evidence terms.
    pub fn sequence_loss(
        &self,
        tape: &mut Tape,
        doc: &Document,
        seq: &EntityGuidedSequence,
        weights: &LossWeights,
        dropout: Option<&mut Dropout>,
    ) -> Result<SequenceLoss> {
        let mut graph = self.forward(tape, doc, seq, dropout)?;
        let Some(scores) = graph.scores else {
            return Err(Error::Validation {
                title: doc.title.clone(),
                detail: "document has fewer than two entities".into(),
            });
        };
        let gold = doc.gold_by_pair();
        let nr = self.config.num_relations;
        let ns = doc.num_sentences();
        let mut labels = Mat::zeros((graph.pairs.len(), nr));
        let mut terms: Vec<(usize, usize, Array1<f64>)> = Vec::new();
        for (p, pair) in graph.pairs.iter().enumerate() {
            let mut rels: Vec<_> = gold.get(pair).map(|v| v.to_vec()).unwrap_or_default();
            rels.sort_by_key(|r| r.relation_id);
            for r in rels {
                labels[[p, r.relation_id]] = 1.0;
                let target = Array1::from_shape_fn(ns, |j| f64::from(u8::from(r.evidence.contains(&j))));
                terms.push((p, r.relation_id, target));
            }
        }
        let relation = tape.bce_mean(scores, labels, PROB_EPS);
        let (attention_evidence, plain_evidence) = if terms.is_empty() {
            (None, None)
        } else {
            let mut guided = Vec::with_capacity(terms.len());
            let mut plain = Vec::with_capacity(terms.len());
            let mut targets = Vec::with_capacity(terms.len() * ns);
            for (p, rel, target) in &terms {
                let ev = self.evidence(tape, &mut graph, *p, *rel);
                guided.push(ev.guided);
                plain.push(ev.plain);
                targets.extend(target.iter().copied());
            }
            let n = targets.len();
            let targets = Mat::from_shape_vec((n, 1), targets).expect("length");
            let guided = tape.concat_rows(guided);
            let plain = tape.concat_rows(plain);
            let ga = tape.bce_mean(guided, targets.clone(), PROB_EPS);
            let gp = tape.bce_mean(plain, targets, PROB_EPS);
            (Some(ga), Some(gp))
        };
        let total = joint_loss_var(tape, relation, attention_evidence, plain_evidence, weights);
        Ok(SequenceLoss {
            relation,
            attention_evidence,
            plain_evidence,
            total,
            num_terms: terms.len(),
        })
    }
}

/// Tape handles for one forward pass of a sequence.
pub struct SequenceGraph {
    /// Ordered (head, tail) entity pairs, one per row of `scores`.
    pub pairs: Vec<(usize, usize)>,
    /// pairs × N_r relation probabilities; `None` for single-entity documents.
    pub scores: Option<Var>,
    /// N_s × d sentence embeddings.
    pub sentences: Var,
    /// Per window: pooled L×L attention (max over heads, mean over layers).
    pub pooled: Vec<Var>,
    pub plans: Vec<AttentionPlan>,
    attention: BTreeMap<usize, Var>,
}

impl SequenceGraph {
    /// N_s × 1 attention features of pair `pair`, built once per graph.
    pub fn attention_features(&mut self, tape: &mut Tape, pair: usize) -> Var {
        if let Some(&v) = self.attention.get(&pair) {
            return v;
        }
        let v = attention_features_var(tape, &self.pooled, &self.plans[pair]);
        self.attention.insert(pair, v);
        v
    }

    /// Per window: the 1×L head/tail-averaged pooled attention row of `pair`.
    pub fn token_features(&self, tape: &mut Tape, pair: usize) -> Vec<Option<Var>> {
        pair_token_features_var(tape, &self.pooled, &self.plans[pair])
    }

    pub fn pair_index(&self, head: usize, tail: usize) -> Option<usize> {
        self.pairs.iter().position(|&p| p == (head, tail))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EvidenceVars {
    pub fused: Var,
    pub plain: Var,
    pub guided: Var,
    pub attention: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct SequenceLoss {
    pub relation: Var,
    pub attention_evidence: Option<Var>,
    pub plain_evidence: Option<Var>,
    pub total: Var,
    pub num_terms: usize,
}
