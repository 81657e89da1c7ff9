//! Seeded generator of small documents with planted relations.
//!
//! Each planted relation `r(h, t)` is written as one or more sentences
//! `... name(h) trigger(r) name(t) ...`; those sentences are its evidence.
//! Filler sentences carry no trigger and never mention both entities of a
//! planted pair.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, Entity, LabelVocabulary, Mention, RelationInstance};
use crate::error::{Error, Result};

const ENTITY_TYPES: [&str; 4] = ["PER", "ORG", "LOC", "MISC"];
const MIN_FILLER_WORDS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub num_documents: usize,
    pub min_entities: usize,
    pub max_entities: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub num_relations: usize,
    /// Evidence sentences per planted relation are drawn from `1..=max_evidence`.
    pub max_evidence: usize,
    /// Distinct words across triggers, entity names and filler.
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_documents: 50,
            min_entities: 2,
            max_entities: 4,
            min_sentences: 4,
            max_sentences: 6,
            num_relations: 5,
            max_evidence: 2,
            vocab_size: 120,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn name_pool(&self) -> usize {
        4 * self.max_entities
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_documents == 0 {
            return fail("num_documents must be positive");
        }
        if !(2 <= self.min_entities && self.min_entities <= self.max_entities && self.max_entities <= 6) {
            return fail("entities per document must satisfy 2 <= min <= max <= 6");
        }
        if !(4 <= self.min_sentences && self.min_sentences <= self.max_sentences && self.max_sentences <= 10) {
            return fail("sentences per document must satisfy 4 <= min <= max <= 10");
        }
        if !(1..=10).contains(&self.num_relations) {
            return fail("num_relations must lie in 1..=10");
        }
        if !(1..=3).contains(&self.max_evidence) {
            return fail("max_evidence must lie in 1..=3");
        }
        if self.vocab_size < self.num_relations + self.name_pool() + MIN_FILLER_WORDS {
            return Err(Error::Config(format!(
                "vocabulary of {} words cannot hold {} triggers, {} name words and {MIN_FILLER_WORDS} filler words",
                self.vocab_size,
                self.num_relations,
                self.name_pool()
            )));
        }
        Ok(())
    }

    pub fn relation_vocabulary(&self) -> LabelVocabulary {
        LabelVocabulary::from_names((1..=self.num_relations).map(|i| format!("P{i}"))).expect("distinct names")
    }

    /// The word that marks relation `relation` in evidence sentences.
    pub fn trigger(&self, relation: usize) -> String {
        format!("v{relation}")
    }
}

struct Plan {
    head: usize,
    tail: usize,
    relation: usize,
    evidence: usize,
}

/// Generates the corpus; identical configs give identical corpora.
pub fn generate(config: &SynthConfig) -> Result<Vec<Document>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let names: Vec<String> = (0..config.name_pool()).map(|i| format!("n{i}")).collect();
    let fillers: Vec<String> = (0..config.vocab_size - config.num_relations - config.name_pool())
        .map(|i| format!("w{i}"))
        .collect();
    (0..config.num_documents)
        .map(|d| {
            let doc = generate_document(config, d, &names, &fillers, &mut rng)?;
            doc.validate(config.num_relations)?;
            Ok(doc)
        })
        .collect()
}

fn generate_document(
    config: &SynthConfig,
    index: usize,
    names: &[String],
    fillers: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<Document> {
    let ne = rng.random_range(config.min_entities..=config.max_entities);
    let mut entity_order: Vec<usize> = (0..ne).collect();
    entity_order.shuffle(rng);
    let num_planted = rng.random_range(1..=(ne / 2).min(config.num_relations));
    let mut relations: Vec<usize> = (0..config.num_relations).collect();
    relations.shuffle(rng);
    let mut plans: Vec<Plan> = (0..num_planted)
        .map(|k| Plan {
            head: entity_order[2 * k],
            tail: entity_order[2 * k + 1],
            relation: relations[k],
            evidence: rng.random_range(1..=config.max_evidence),
        })
        .collect();

    // Mentions placed in filler sentences: enough for two mentions per entity.
    let mut filler_mentions = Vec::new();
    for e in 0..ne {
        let in_evidence: usize = plans
            .iter()
            .filter(|p| p.head == e || p.tail == e)
            .map(|p| p.evidence)
            .sum();
        for _ in in_evidence..2 {
            filler_mentions.push(e);
        }
    }
    let mut num_sentences = rng.random_range(config.min_sentences..=config.max_sentences);
    let evidence_total = |plans: &[Plan]| plans.iter().map(|p| p.evidence).sum::<usize>();
    let min_filler = filler_mentions.len().div_ceil(2).max(1);
    while evidence_total(&plans) + min_filler > num_sentences {
        if num_sentences < config.max_sentences {
            num_sentences += 1;
        } else if let Some(p) = plans.iter_mut().filter(|p| p.evidence > 1).last() {
            p.evidence -= 1;
        } else {
            return Err(Error::Config("too many entities for the sentence budget".into()));
        }
    }
    let num_filler = num_sentences - evidence_total(&plans);

    // Sentence slots: evidence sentences carry one plan each.
    let mut slots: Vec<Option<usize>> = plans
        .iter()
        .enumerate()
        .flat_map(|(k, p)| std::iter::repeat_n(Some(k), p.evidence))
        .chain(std::iter::repeat_n(None, num_filler))
        .collect();
    slots.shuffle(rng);

    let related = |a: usize, b: usize| {
        plans
            .iter()
            .any(|p| (p.head, p.tail) == (a, b) || (p.head, p.tail) == (b, a))
    };
    let filler_groups = pack_filler(&filler_mentions, num_filler, &related, rng);

    let mut name_ids: Vec<usize> = (0..names.len()).collect();
    name_ids.shuffle(rng);
    let entity_names: Vec<Vec<String>> = (0..ne)
        .map(|e| vec![names[name_ids[2 * e]].clone(), names[name_ids[2 * e + 1]].clone()])
        .collect();
    let entity_types: Vec<&str> = (0..ne)
        .map(|_| ENTITY_TYPES[rng.random_range(0..ENTITY_TYPES.len())])
        .collect();

    let mut sentences = Vec::with_capacity(num_sentences);
    let mut mentions: Vec<Vec<Mention>> = vec![Vec::new(); ne];
    let mut evidence: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); plans.len()];
    let mut filler_iter = filler_groups.into_iter();
    let filler_words = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
        (0..n).map(|_| fillers[rng.random_range(0..fillers.len())].clone()).collect()
    };
    for (sid, slot) in slots.iter().enumerate() {
        let mut words = Vec::new();
        let mut place = |words: &mut Vec<String>, e: usize| {
            let start = words.len();
            words.extend(entity_names[e].iter().cloned());
            mentions[e].push(Mention {
                sent_id: sid,
                start,
                end: words.len(),
                surface: entity_names[e].join(" "),
                entity_type: entity_types[e].to_string(),
            });
        };
        match *slot {
            Some(k) => {
                let lead = rng.random_range(0..=2);
                words.extend(filler_words(rng, lead));
                place(&mut words, plans[k].head);
                words.push(config.trigger(plans[k].relation));
                place(&mut words, plans[k].tail);
                let trail = rng.random_range(0..=2);
                words.extend(filler_words(rng, trail));
                evidence[k].insert(sid);
            }
            None => {
                let group = filler_iter.next().expect("one group per filler sentence");
                let n = rng.random_range(4..=7);
                let pieces = group.len() + 1;
                for (i, e) in group.into_iter().enumerate() {
                    let k = rng.random_range(1..=n / pieces);
                    words.extend(filler_words(rng, if i == 0 { k - 1 } else { k }));
                    place(&mut words, e);
                }
                let k = rng.random_range(1..=n / pieces);
                words.extend(filler_words(rng, k));
            }
        }
        sentences.push(words);
    }
    let mut gold_relations: Vec<RelationInstance> = plans
        .iter()
        .zip(evidence)
        .map(|(p, ev)| RelationInstance {
            head_idx: p.head,
            tail_idx: p.tail,
            relation_id: p.relation,
            evidence: ev,
        })
        .collect();
    gold_relations.sort_by_key(|r| (r.head_idx, r.tail_idx, r.relation_id));
    Ok(Document {
        title: format!("synthetic-{index:04}"),
        sentences,
        entities: mentions.into_iter().map(|m| Entity { mentions: m }).collect(),
        gold_relations,
    })
}

/// Splits filler mentions into `slots` groups of at most two distinct,
/// unrelated entities; some groups may be empty.
fn pack_filler(
    mentions: &[usize],
    slots: usize,
    related: &dyn Fn(usize, usize) -> bool,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut order = mentions.to_vec();
    for _ in 0..1000 {
        order.shuffle(rng);
        let groups: Vec<Vec<usize>> = (0..slots)
            .map(|s| order.iter().skip(s).step_by(slots).copied().collect())
            .collect();
        let ok = groups
            .iter()
            .all(|g| g.len() <= 2 && (g.len() < 2 || (g[0] != g[1] && !related(g[0], g[1]))));
        if ok {
            return groups;
        }
    }
    // Fallback: one mention per group, dropping extras beyond the first mention of each entity.
    let mut seen = BTreeSet::new();
    let mut firsts: Vec<usize> = mentions.iter().copied().filter(|e| seen.insert(*e)).collect();
    firsts.truncate(slots);
    let mut groups: Vec<Vec<usize>> = firsts.into_iter().map(|e| vec![e]).collect();
    groups.resize(slots, Vec::new());
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::corpus_to_json;

    /// Predicts `r(h, t)` whenever a sentence holds trigger `r` with a
    /// mention of `h` ending right before it and one of `t` starting right after.
    fn trigger_classifier(doc: &Document, config: &SynthConfig) -> BTreeSet<(usize, usize, usize)> {
        let mut out = BTreeSet::new();
        for (sid, words) in doc.sentences.iter().enumerate() {
            for (pos, w) in words.iter().enumerate() {
                let Some(r) = (0..config.num_relations).find(|&r| *w == config.trigger(r)) else {
                    continue;
                };
                let at = |pred: &dyn Fn(&Mention) -> bool| {
                    doc.entities
                        .iter()
                        .position(|e| e.mentions.iter().any(|m| m.sent_id == sid && pred(m)))
                };
                if let (Some(h), Some(t)) = (at(&|m| m.end == pos), at(&|m| m.start == pos + 1)) {
                    out.insert((h, t, r));
                }
            }
        }
        out
    }

    #[test]
    fn single_pair_document() {
        let config = SynthConfig {
            num_documents: 1,
            min_entities: 2,
            max_entities: 2,
            num_relations: 1,
            ..SynthConfig::default()
        };
        let docs = generate(&config).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].gold_relations.len(), 1);
        assert!(!docs[0].gold_relations[0].evidence.is_empty());
    }

    #[test]
    fn same_seed_same_corpus() {
        let config = SynthConfig::default();
        let vocab = config.relation_vocabulary();
        let a = corpus_to_json(&generate(&config).unwrap(), &vocab);
        let b = corpus_to_json(&generate(&config).unwrap(), &vocab);
        assert_eq!(a, b);
        let other = SynthConfig { seed: 1, ..config };
        assert_ne!(a, corpus_to_json(&generate(&other).unwrap(), &vocab));
    }

    #[test]
    fn evidence_sentences_hold_their_trigger_and_corpus_is_separable() {
        for config in [
            SynthConfig::default(),
            SynthConfig {
                max_entities: 6,
                max_sentences: 10,
                num_relations: 10,
                max_evidence: 3,
                seed: 3,
                ..SynthConfig::default()
            },
        ] {
            let docs = generate(&config).unwrap();
            for doc in &docs {
                for r in &doc.gold_relations {
                    for &s in &r.evidence {
                        assert!(doc.sentences[s].contains(&config.trigger(r.relation_id)));
                    }
                }
                for e in &doc.entities {
                    assert!(e.mentions.iter().all(|m| m.end - m.start == 2));
                }
                let gold: BTreeSet<_> = doc
                    .gold_relations
                    .iter()
                    .map(|r| (r.head_idx, r.tail_idx, r.relation_id))
                    .collect();
                assert_eq!(trigger_classifier(doc, &config), gold, "{}", doc.title);
            }
            let mentions: usize = docs.iter().flat_map(|d| &d.entities).map(|e| e.mentions.len()).sum();
            let entities: usize = docs.iter().map(|d| d.entities.len()).sum();
            assert!(mentions >= 2 * entities);
        }
    }

    #[test]
    fn small_vocabulary_is_rejected() {
        let config = SynthConfig {
            vocab_size: 20,
            ..SynthConfig::default()
        };
        assert!(matches!(generate(&config), Err(Error::Config(_))));
    }
}
