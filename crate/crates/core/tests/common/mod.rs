#![allow(dead_code)]

use docrel::corpus::{parse_corpus, Document, LabelVocabulary};

pub fn vocab(n: usize) -> LabelVocabulary {
    LabelVocabulary::from_names((1..=n).map(|i| format!("P{i}"))).unwrap()
}

/// Three entities over two sentences, eight document tokens; one pair
/// carries two relations.
pub const SMALL_DOC: &str = r#"[{
  "title": "small",
  "sents": [["alpha", "beta", "joins", "gamma"], ["gamma", "delta", "holds", "alpha"]],
  "vertexSet": [
    [{"name": "alpha", "sent_id": 0, "pos": [0, 1], "type": "PER"},
     {"name": "alpha", "sent_id": 1, "pos": [3, 4], "type": "PER"}],
    [{"name": "beta", "sent_id": 0, "pos": [1, 2], "type": "ORG"}],
    [{"name": "gamma delta", "sent_id": 1, "pos": [0, 2], "type": "LOC"},
     {"name": "gamma", "sent_id": 0, "pos": [3, 4], "type": "LOC"}]
  ],
  "labels": [
    {"r": "P1", "h": 0, "t": 1, "evidence": [0]},
    {"r": "P3", "h": 0, "t": 1, "evidence": [1]},
    {"r": "P2", "h": 2, "t": 0, "evidence": [0, 1]}
  ]
}]"#;

pub fn small_doc() -> (Document, LabelVocabulary) {
    let v = vocab(3);
    let mut docs = parse_corpus(SMALL_DOC, &v).unwrap();
    (docs.remove(0), v)
}
