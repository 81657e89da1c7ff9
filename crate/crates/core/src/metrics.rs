//! Micro-averaged RE, Ign RE and evidence F1, and the leaderboard
//! prediction-file format.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, LabelVocabulary, NormalizedFact, TrainFactIndex};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::pipeline::DocumentPrediction;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TripleKey {
    pub title: String,
    pub head: usize,
    pub tail: usize,
    pub relation: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EvidenceKey {
    pub triple: TripleKey,
    pub sentence: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl Prf {
    pub fn from_counts(true_positives: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(true_positives, predicted);
        let recall = ratio(true_positives, gold);
        // 2PR/(P+R) reduced to counts, which keeps fixture values exact.
        let f1 = if true_positives == 0 {
            0.0
        } else {
            2.0 * true_positives as f64 / (predicted + gold) as f64
        };
        Prf {
            precision,
            recall,
            f1,
            true_positives,
            false_positives: predicted - true_positives,
            false_negatives: gold - true_positives,
        }
    }
}

fn unique_set<'a, T: Eq + Hash + std::fmt::Debug>(items: &'a [T], what: &str) -> Result<HashSet<&'a T>> {
    let mut set = HashSet::with_capacity(items.len());
    for item in items {
        if !set.insert(item) {
            return Err(Error::Format(format!("duplicate {what} {item:?}")));
        }
    }
    Ok(set)
}

fn overlap<T: Eq + Hash>(pred: &HashSet<T>, gold: &HashSet<T>) -> Prf {
    let tp = pred.iter().filter(|p| gold.contains(*p)).count();
    Prf::from_counts(tp, pred.len(), gold.len())
}

/// Micro P/R/F1 of the set overlap; duplicate triples are an error.
pub fn re_f1(pred: &[TripleKey], gold: &[TripleKey]) -> Result<Prf> {
    Ok(overlap(&unique_set(pred, "predicted triple")?, &unique_set(gold, "gold triple")?))
}

/// As [`re_f1`] after removing, from both sides, every triple whose
/// normalized fact appears in the training index.
pub fn ign_re_f1<'a>(pred: &'a [TripleKey], gold: &'a [TripleKey], docs: &[Document], index: &TrainFactIndex) -> Result<Prf> {
    let by_title: HashMap<&str, &Document> = docs.iter().map(|d| (d.title.as_str(), d)).collect();
    let keep = |k: &&TripleKey| -> Result<bool> {
        let doc = by_title
            .get(k.title.as_str())
            .ok_or_else(|| Error::Format(format!("unknown document `{}`", k.title)))?;
        if k.head >= doc.num_entities() || k.tail >= doc.num_entities() {
            return Err(Error::Format(format!("entity index out of range in {k:?}")));
        }
        Ok(!index.contains(&NormalizedFact::new(doc, k.head, k.tail, k.relation)))
    };
    let filter = |set: HashSet<&'a TripleKey>| -> Result<HashSet<&'a TripleKey>> {
        let mut out = HashSet::with_capacity(set.len());
        for k in set {
            if keep(&k)? {
                out.insert(k);
            }
        }
        Ok(out)
    };
    let p = filter(unique_set(pred, "predicted triple")?)?;
    let g = filter(unique_set(gold, "gold triple")?)?;
    Ok(overlap(&p, &g))
}

/// Micro P/R/F1 over (triple, sentence) tuples.
pub fn evi_f1(pred: &[EvidenceKey], gold: &[EvidenceKey]) -> Prf {
    let p: HashSet<&EvidenceKey> = pred.iter().collect();
    let g: HashSet<&EvidenceKey> = gold.iter().collect();
    overlap(&p, &g)
}

pub fn gold_triples(docs: &[Document]) -> Vec<TripleKey> {
    docs.iter()
        .flat_map(|d| {
            d.gold_relations.iter().map(move |r| TripleKey {
                title: d.title.clone(),
                head: r.head_idx,
                tail: r.tail_idx,
                relation: r.relation_id,
            })
        })
        .collect()
}

pub fn gold_evidence(docs: &[Document]) -> Vec<EvidenceKey> {
    docs.iter()
        .flat_map(|d| {
            d.gold_relations.iter().flat_map(move |r| {
                r.evidence.iter().map(move |&sentence| EvidenceKey {
                    triple: TripleKey {
                        title: d.title.clone(),
                        head: r.head_idx,
                        tail: r.tail_idx,
                        relation: r.relation_id,
                    },
                    sentence,
                })
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub re: Prf,
    pub ign_re: Prf,
    pub evidence: Prf,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// One line of a leaderboard prediction file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderboardRecord {
    pub title: String,
    pub h_idx: usize,
    pub t_idx: usize,
    pub r: String,
    pub evidence: Vec<usize>,
}

pub fn leaderboard_from_predictions(predictions: &[DocumentPrediction], vocab: &LabelVocabulary) -> Vec<LeaderboardRecord> {
    predictions
        .iter()
        .flat_map(|p| {
            p.emitted.iter().map(move |t| LeaderboardRecord {
                title: p.title.clone(),
                h_idx: t.head,
                t_idx: t.tail,
                r: vocab.name(t.relation).expect("relation id in vocabulary").to_string(),
                evidence: t.evidence.clone(),
            })
        })
        .collect()
}

pub fn leaderboard_from_gold(docs: &[Document], vocab: &LabelVocabulary) -> Vec<LeaderboardRecord> {
    docs.iter()
        .flat_map(|d| {
            d.gold_relations.iter().map(move |r| LeaderboardRecord {
                title: d.title.clone(),
                h_idx: r.head_idx,
                t_idx: r.tail_idx,
                r: vocab.name(r.relation_id).expect("relation id in vocabulary").to_string(),
                evidence: r.evidence.iter().copied().collect(),
            })
        })
        .collect()
}

pub fn leaderboard_to_json(records: &[LeaderboardRecord]) -> String {
    serde_json::to_string_pretty(records).expect("records serialize") + "\n"
}

pub fn parse_leaderboard(text: &str) -> Result<Vec<LeaderboardRecord>> {
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_leaderboard(path: &Path) -> Result<Vec<LeaderboardRecord>> {
    parse_leaderboard(&fsutil::read_to_string(path)?)
}

pub fn write_leaderboard(path: &Path, records: &[LeaderboardRecord]) -> Result<()> {
    fsutil::write_atomic(path, leaderboard_to_json(records).as_bytes())
}

/// Checks titles, relation names, entity and sentence indices against the
/// reference documents, and rejects duplicate triples.
pub fn validate_leaderboard(records: &[LeaderboardRecord], docs: &[Document], vocab: &LabelVocabulary) -> Result<()> {
    let by_title: HashMap<&str, &Document> = docs.iter().map(|d| (d.title.as_str(), d)).collect();
    let mut seen = HashSet::new();
    for (i, rec) in records.iter().enumerate() {
        let fail = |detail: String| Err(Error::Format(format!("record {i}: {detail}")));
        let Some(doc) = by_title.get(rec.title.as_str()) else {
            return fail(format!("unknown document `{}`", rec.title));
        };
        if vocab.id(&rec.r).is_none() {
            return fail(format!("relation `{}` is not in the vocabulary", rec.r));
        }
        let ne = doc.num_entities();
        if rec.h_idx >= ne || rec.t_idx >= ne {
            return fail(format!("entity index out of range for {ne} entities"));
        }
        if rec.h_idx == rec.t_idx {
            return fail("head and tail are the same entity".into());
        }
        if let Some(&s) = rec.evidence.iter().find(|&&s| s >= doc.num_sentences()) {
            return fail(format!("evidence sentence {s} out of range"));
        }
        if !seen.insert((&rec.title, rec.h_idx, rec.t_idx, &rec.r)) {
            return fail("duplicate triple".into());
        }
    }
    Ok(())
}

/// Validates `records`, then scores them against the gold documents.
pub fn evaluate(
    records: &[LeaderboardRecord],
    docs: &[Document],
    vocab: &LabelVocabulary,
    index: &TrainFactIndex,
) -> Result<EvalReport> {
    validate_leaderboard(records, docs, vocab)?;
    let key = |r: &LeaderboardRecord| TripleKey {
        title: r.title.clone(),
        head: r.h_idx,
        tail: r.t_idx,
        relation: vocab.id(&r.r).expect("validated"),
    };
    let pred: Vec<TripleKey> = records.iter().map(key).collect();
    let pred_evidence: Vec<EvidenceKey> = records
        .iter()
        .flat_map(|r| {
            let k = key(r);
            r.evidence.iter().map(move |&sentence| EvidenceKey {
                triple: k.clone(),
                sentence,
            })
        })
        .collect();
    let gold = gold_triples(docs);
    Ok(EvalReport {
        re: re_f1(&pred, &gold)?,
        ign_re: ign_re_f1(&pred, &gold, docs, index)?,
        evidence: evi_f1(&pred_evidence, &gold_evidence(docs)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(title: &str, head: usize, tail: usize, relation: usize) -> TripleKey {
        TripleKey {
            title: title.into(),
            head,
            tail,
            relation,
        }
    }

    #[test]
    fn counts_and_zero_division() {
        let p = Prf::from_counts(0, 0, 0);
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
        let p = Prf::from_counts(1, 3, 2);
        assert_eq!((p.true_positives, p.false_positives, p.false_negatives), (1, 2, 1));
    }

    #[test]
    fn re_fixture() {
        let gold = [t("d", 0, 1, 0), t("d", 1, 2, 1)];
        let pred = [t("d", 0, 1, 0), t("d", 2, 1, 1), t("d", 0, 2, 0)];
        let p = re_f1(&pred, &gold).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0 / 3.0, 0.5, 0.4));
        assert_eq!(re_f1(&gold, &gold).unwrap().f1, 1.0);
    }

    #[test]
    fn evidence_fixture() {
        let e = |s| EvidenceKey {
            triple: t("d", 0, 1, 0),
            sentence: s,
        };
        let p = evi_f1(&[e(0), e(3)], &[e(0), e(3), e(4)]);
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 2.0 / 3.0, 0.8));
    }

    #[test]
    fn duplicate_predictions_are_rejected() {
        let a = t("d", 0, 1, 0);
        assert!(re_f1(&[a.clone(), a.clone()], &[a]).is_err());
    }
}
