//! Annotated documents in the DocRED release layout, the relation label
//! vocabulary, and the train-fact index used by the Ign F1 metric.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mention {
    pub sent_id: usize,
    /// Half-open token interval within sentence `sent_id`.
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub entity_type: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entity {
    /// Sorted by `(sent_id, start)`.
    pub mentions: Vec<Mention>,
}

impl Entity {
    pub fn first_mention(&self) -> &Mention {
        &self.mentions[0]
    }

    /// Distinct surface names over all mentions, case-sensitive.
    pub fn surface_names(&self) -> BTreeSet<String> {
        self.mentions.iter().map(|m| m.surface.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationInstance {
    pub head_idx: usize,
    pub tail_idx: usize,
    pub relation_id: usize,
    pub evidence: BTreeSet<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub title: String,
    pub sentences: Vec<Vec<String>>,
    pub entities: Vec<Entity>,
    pub gold_relations: Vec<RelationInstance>,
}

impl Document {
    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Document-level index of the first token of each sentence.
    pub fn sentence_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.sentences.len());
        let mut acc = 0;
        for s in &self.sentences {
            offsets.push(acc);
            acc += s.len();
        }
        offsets
    }

    /// Flat token list in document order.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    /// Document-level token indices covered by any mention of `entity`.
    pub fn entity_token_indices(&self, entity: usize) -> Vec<usize> {
        let offsets = self.sentence_offsets();
        let mut out = BTreeSet::new();
        for m in &self.entities[entity].mentions {
            out.extend(offsets[m.sent_id] + m.start..offsets[m.sent_id] + m.end);
        }
        out.into_iter().collect()
    }

    /// Gold relation ids keyed by ordered entity pair.
    pub fn gold_by_pair(&self) -> HashMap<(usize, usize), Vec<&RelationInstance>> {
        let mut map: HashMap<(usize, usize), Vec<&RelationInstance>> = HashMap::new();
        for r in &self.gold_relations {
            map.entry((r.head_idx, r.tail_idx)).or_default().push(r);
        }
        map
    }

    pub fn validate(&self, num_relations: usize) -> Result<()> {
        let fail = |detail: String| {
            Err(Error::Validation {
                title: self.title.clone(),
                detail,
            })
        };
        if self.sentences.is_empty() {
            return fail("document has no sentences".into());
        }
        if let Some(j) = self.sentences.iter().position(Vec::is_empty) {
            return fail(format!("sentence {j} is empty"));
        }
        for (e, entity) in self.entities.iter().enumerate() {
            if entity.mentions.is_empty() {
                return fail(format!("entity {e} has no mentions"));
            }
            for m in &entity.mentions {
                let Some(sentence) = self.sentences.get(m.sent_id) else {
                    return fail(format!(
                        "entity {e}: mention sent_id {} out of range (N_s = {})",
                        m.sent_id,
                        self.sentences.len()
                    ));
                };
                if m.start >= m.end || m.end > sentence.len() {
                    return fail(format!(
                        "entity {e}: mention span [{}, {}) invalid for sentence {} of length {}",
                        m.start,
                        m.end,
                        m.sent_id,
                        sentence.len()
                    ));
                }
                if m.surface.is_empty() {
                    return fail(format!("entity {e}: mention with empty surface"));
                }
            }
            let ordered = entity
                .mentions
                .windows(2)
                .all(|w| (w[0].sent_id, w[0].start) <= (w[1].sent_id, w[1].start));
            if !ordered {
                return fail(format!("entity {e}: mentions out of document order"));
            }
        }
        let mut seen = HashSet::new();
        for r in &self.gold_relations {
            let n = self.entities.len();
            if r.head_idx >= n || r.tail_idx >= n {
                return fail(format!(
                    "relation ({}, {}) references an entity outside 0..{n}",
                    r.head_idx, r.tail_idx
                ));
            }
            if r.head_idx == r.tail_idx {
                return fail(format!("relation with head = tail = {}", r.head_idx));
            }
            if r.relation_id >= num_relations {
                return fail(format!("relation id {} out of range", r.relation_id));
            }
            if let Some(&bad) = r.evidence.iter().find(|&&s| s >= self.sentences.len()) {
                return fail(format!(
                    "evidence sentence {bad} out of range (N_s = {})",
                    self.sentences.len()
                ));
            }
            if !seen.insert((r.head_idx, r.tail_idx, r.relation_id)) {
                return fail(format!(
                    "duplicate triple ({}, {}, {})",
                    r.head_idx, r.tail_idx, r.relation_id
                ));
            }
        }
        Ok(())
    }
}

/// Relation names for the trainable (non-NA) relations, ids `0..len()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVocabulary {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl LabelVocabulary {
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut ids = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if Self::is_na(n) {
                return Err(Error::Config(format!("`{n}` is reserved for the NA sentinel")));
            }
            if ids.insert(n.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate relation name `{n}`")));
            }
        }
        Ok(LabelVocabulary { names, ids })
    }

    /// Parses a two-column `name id` table. NA rows are dropped and the
    /// remaining names are renumbered contiguously in id order.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split_whitespace();
            let (Some(name), Some(id), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Config(format!(
                    "relation table line {}: expected two columns",
                    lineno + 1
                )));
            };
            let id: i64 = id.parse().map_err(|_| {
                Error::Config(format!("relation table line {}: bad id `{id}`", lineno + 1))
            })?;
            if !Self::is_na(name) {
                rows.push((id, name.to_string()));
            }
        }
        rows.sort();
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config("relation table repeats an id".into()));
        }
        Self::from_names(rows.into_iter().map(|(_, n)| n))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fsutil::read_to_string(path)?)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (i, n) in self.names.iter().enumerate() {
            out.push_str(&format!("{n}\t{i}\n"));
        }
        out
    }

    pub fn is_na(name: &str) -> bool {
        name.eq_ignore_ascii_case("na")
    }

    /// Id used for "no relation"; never a trainable slot.
    pub fn na_sentinel(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// On-disk record of one document in the DocRED release layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub title: String,
    pub sents: Vec<Vec<String>>,
    #[serde(rename = "vertexSet")]
    pub vertex_set: Vec<Vec<MentionRecord>>,
    #[serde(default)]
    pub labels: Vec<LabelRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub name: String,
    pub sent_id: usize,
    pub pos: [usize; 2],
    #[serde(rename = "type")]
    pub kind: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub r: String,
    pub h: usize,
    pub t: usize,
    #[serde(default)]
    pub evidence: Vec<usize>,
}

impl Document {
    pub fn from_record(record: DocumentRecord, vocab: &LabelVocabulary) -> Result<Self> {
        let title = record.title;
        let entities = record
            .vertex_set
            .into_iter()
            .map(|mentions| {
                let mut mentions: Vec<Mention> = mentions
                    .into_iter()
                    .map(|m| Mention {
                        sent_id: m.sent_id,
                        start: m.pos[0],
                        end: m.pos[1],
                        surface: m.name,
                        entity_type: m.kind,
                    })
                    .collect();
                mentions.sort_by_key(|m| (m.sent_id, m.start));
                Entity { mentions }
            })
            .collect();
        let mut gold_relations = Vec::with_capacity(record.labels.len());
        for l in record.labels {
            let relation_id = vocab.id(&l.r).ok_or_else(|| Error::Validation {
                title: title.clone(),
                detail: format!("unknown relation name `{}`", l.r),
            })?;
            gold_relations.push(RelationInstance {
                head_idx: l.h,
                tail_idx: l.t,
                relation_id,
                evidence: l.evidence.into_iter().collect(),
            });
        }
        let doc = Document {
            title,
            sentences: record.sents,
            entities,
            gold_relations,
        };
        doc.validate(vocab.len())?;
        Ok(doc)
    }

    pub fn to_record(&self, vocab: &LabelVocabulary) -> DocumentRecord {
        DocumentRecord {
            title: self.title.clone(),
            sents: self.sentences.clone(),
            vertex_set: self
                .entities
                .iter()
                .map(|e| {
                    e.mentions
                        .iter()
                        .map(|m| MentionRecord {
                            name: m.surface.clone(),
                            sent_id: m.sent_id,
                            pos: [m.start, m.end],
                            kind: m.entity_type.clone(),
                        })
                        .collect()
                })
                .collect(),
            labels: self
                .gold_relations
                .iter()
                .map(|r| LabelRecord {
                    r: vocab.name(r.relation_id).unwrap_or("?").to_string(),
                    h: r.head_idx,
                    t: r.tail_idx,
                    evidence: r.evidence.iter().copied().collect(),
                })
                .collect(),
        }
    }
}

/// Parses a JSON array of release-format records.
pub fn parse_corpus(text: &str, vocab: &LabelVocabulary) -> Result<Vec<Document>> {
    let values: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| Error::Parse {
        title: "<corpus>".into(),
        field: "<root>".into(),
        detail: e.to_string(),
    })?;
    values
        .into_iter()
        .enumerate()
        .map(|(i, value)| {
            let title = value
                .get("title")
                .and_then(|t| t.as_str())
                .map(str::to_string)
                .unwrap_or_else(|| format!("<record {i}>"));
            let record: DocumentRecord =
                serde_path_to_error::deserialize(value).map_err(|e| Error::Parse {
                    title: title.clone(),
                    field: e.path().to_string(),
                    detail: e.inner().to_string(),
                })?;
            Document::from_record(record, vocab)
        })
        .collect()
}

/// Relation names used in the `labels` of release-format corpora, sorted.
pub fn infer_vocabulary(texts: &[&str]) -> Result<LabelVocabulary> {
    let mut names = BTreeSet::new();
    for text in texts {
        let values: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| Error::Parse {
            title: "<corpus>".into(),
            field: "<root>".into(),
            detail: e.to_string(),
        })?;
        let labels = values
            .iter()
            .filter_map(|v| v.get("labels").and_then(|l| l.as_array()))
            .flatten();
        for label in labels {
            if let Some(r) = label.get("r").and_then(|r| r.as_str()) {
                if !LabelVocabulary::is_na(r) {
                    names.insert(r.to_string());
                }
            }
        }
    }
    if names.is_empty() {
        return Err(Error::Config("no relation labels to infer a vocabulary from".into()));
    }
    LabelVocabulary::from_names(names)
}

pub fn load_corpus(path: &Path, vocab: &LabelVocabulary) -> Result<Vec<Document>> {
    parse_corpus(&fsutil::read_to_string(path)?, vocab)
}

pub fn corpus_to_json(docs: &[Document], vocab: &LabelVocabulary) -> String {
    let records: Vec<DocumentRecord> = docs.iter().map(|d| d.to_record(vocab)).collect();
    serde_json::to_string(&records).expect("records serialize")
}

pub fn write_corpus(path: &Path, docs: &[Document], vocab: &LabelVocabulary) -> Result<()> {
    fsutil::write_atomic(path, corpus_to_json(docs, vocab).as_bytes())
}

/// A relational fact with entities reduced to their surface-name sets.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NormalizedFact {
    pub head: BTreeSet<String>,
    pub tail: BTreeSet<String>,
    pub relation_id: usize,
}

impl NormalizedFact {
    pub fn new(doc: &Document, head: usize, tail: usize, relation_id: usize) -> Self {
        NormalizedFact {
            head: doc.entities[head].surface_names(),
            tail: doc.entities[tail].surface_names(),
            relation_id,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrainFactIndex {
    facts: HashSet<NormalizedFact>,
}

impl TrainFactIndex {
    pub fn insert(&mut self, fact: NormalizedFact) {
        self.facts.insert(fact);
    }

    pub fn contains(&self, fact: &NormalizedFact) -> bool {
        self.facts.contains(fact)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

pub fn build_train_fact_index(train_docs: &[Document]) -> TrainFactIndex {
    let mut index = TrainFactIndex::default();
    for doc in train_docs {
        for r in &doc.gold_relations {
            index.insert(NormalizedFact::new(doc, r.head_idx, r.tail_idx, r.relation_id));
        }
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> LabelVocabulary {
        LabelVocabulary::from_names(["P1", "P2"]).unwrap()
    }

    const FIXTURE: &str = r#"[{
        "title": "Doc A",
        "sents": [["Alpha", "Corp", "hired", "Bob", "."], ["Bob", "left", "."]],
        "vertexSet": [
            [{"name": "Alpha Corp", "sent_id": 0, "pos": [0, 2], "type": "ORG"}],
            [{"name": "Bob", "sent_id": 1, "pos": [0, 1], "type": "PER"},
             {"name": "Bob", "sent_id": 0, "pos": [3, 4], "type": "PER"}]
        ],
        "labels": [{"r": "P2", "h": 0, "t": 1, "evidence": [0]}]
    }]"#;

    #[test]
    fn loads_minimal_fixture() {
        let docs = parse_corpus(FIXTURE, &vocab()).unwrap();
        assert_eq!(docs.len(), 1);
        let d = &docs[0];
        assert_eq!(d.num_entities(), 2);
        assert_eq!(d.num_sentences(), 2);
        assert_eq!(d.gold_relations[0].relation_id, 1);
        // mentions re-sorted into document order
        assert_eq!(d.entities[1].first_mention().sent_id, 0);
        assert_eq!(d.entity_token_indices(1), vec![3, 5]);
    }

    #[test]
    fn mention_past_sentence_end_is_rejected() {
        let bad = FIXTURE.replace("[3, 4]", "[3, 9]");
        match parse_corpus(&bad, &vocab()) {
            Err(Error::Validation { title, .. }) => assert_eq!(title, "Doc A"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_field_is_named() {
        let bad = FIXTURE.replace("\"sent_id\": 1", "\"sent_id\": \"one\"");
        match parse_corpus(&bad, &vocab()) {
            Err(Error::Parse { title, field, .. }) => {
                assert_eq!(title, "Doc A");
                assert!(field.contains("vertexSet"), "{field}");
                assert!(field.contains("sent_id"), "{field}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_field_is_named() {
        let bad = FIXTURE.replace("\"sents\"", "\"sentences\"");
        let err = parse_corpus(&bad, &vocab()).unwrap_err();
        assert!(err.to_string().contains("sents"), "{err}");
    }

    #[test]
    fn evidence_out_of_range_and_duplicates_rejected() {
        let bad = FIXTURE.replace("\"evidence\": [0]", "\"evidence\": [2]");
        assert!(matches!(parse_corpus(&bad, &vocab()), Err(Error::Validation { .. })));
        let dup = FIXTURE.replace(
            r#"[{"r": "P2", "h": 0, "t": 1, "evidence": [0]}]"#,
            r#"[{"r": "P2", "h": 0, "t": 1}, {"r": "P2", "h": 0, "t": 1}]"#,
        );
        assert!(matches!(parse_corpus(&dup, &vocab()), Err(Error::Validation { .. })));
        let selfloop = FIXTURE.replace("\"h\": 0, \"t\": 1", "\"h\": 1, \"t\": 1");
        assert!(matches!(parse_corpus(&selfloop, &vocab()), Err(Error::Validation { .. })));
    }

    #[test]
    fn unknown_relation_rejected() {
        let bad = FIXTURE.replace("\"P2\"", "\"P99\"");
        assert!(matches!(parse_corpus(&bad, &vocab()), Err(Error::Validation { .. })));
    }

    #[test]
    fn round_trip_is_identity() {
        let v = vocab();
        let docs = parse_corpus(FIXTURE, &v).unwrap();
        let again = parse_corpus(&corpus_to_json(&docs, &v), &v).unwrap();
        assert_eq!(docs, again);
    }

    #[test]
    fn vocabulary_table_drops_na_and_renumbers() {
        let v = LabelVocabulary::parse("Na 0\nP17 2\nP131 1\n# comment\n\n").unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.id("P131"), Some(0));
        assert_eq!(v.id("P17"), Some(1));
        assert_eq!(v.na_sentinel(), 2);
        assert!(v.id("Na").is_none());
        assert_eq!(LabelVocabulary::parse(&v.to_table()).unwrap(), v);
        assert!(LabelVocabulary::parse("P1 0 extra\n").is_err());
        assert!(LabelVocabulary::parse("P1 0\nP2 0\n").is_err());
    }

    #[test]
    fn fact_index_counts() {
        assert!(build_train_fact_index(&[]).is_empty());
        let v = vocab();
        let mut doc = parse_corpus(FIXTURE, &v).unwrap().remove(0);
        doc.gold_relations.push(RelationInstance {
            head_idx: 1,
            tail_idx: 0,
            relation_id: 0,
            evidence: BTreeSet::new(),
        });
        let index = build_train_fact_index(std::slice::from_ref(&doc));
        assert_eq!(index.len(), 2);
        let mut copy = doc.clone();
        copy.title = "Doc B".into();
        assert_eq!(build_train_fact_index(&[doc, copy]).len(), 2);
    }
}
