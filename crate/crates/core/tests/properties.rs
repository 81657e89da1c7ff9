mod common;

use docrel::corpus::{build_train_fact_index, infer_vocabulary, Document, DocumentRecord, MentionRecord};
use docrel::encoder::{encode, EncoderConfig, TransformerEncoder};
use docrel::metrics::{ign_re_f1, re_f1, TripleKey};
use docrel::params::ParamStore;
use docrel::sequencer::{build_sequences, coverage_count, split_windows, WordTokenizer};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn encoder_config(num_layers: usize, num_heads: usize, vocab_size: usize) -> EncoderConfig {
    EncoderConfig {
        num_layers,
        num_heads,
        model_dim: 4 * num_heads,
        ffn_dim: 8,
        vocab_size,
        max_positions: 24,
        dropout: 0.0,
    }
}

/// Words `t0..`, split into sentences of the given lengths, with one
/// single-word entity per listed position.
fn document(sentence_lengths: &[usize], entity_words: &[usize]) -> Document {
    let mut sents = Vec::new();
    let mut starts = Vec::new();
    let mut next = 0;
    for &len in sentence_lengths {
        starts.push(next);
        sents.push((next..next + len).map(|i| format!("t{i}")).collect::<Vec<_>>());
        next += len;
    }
    let vertex_set = entity_words
        .iter()
        .map(|&w| {
            let s = starts.iter().rposition(|&st| st <= w).unwrap();
            vec![MentionRecord {
                name: format!("t{w}"),
                sent_id: s,
                pos: [w - starts[s], w - starts[s] + 1],
                kind: "X".into(),
            }]
        })
        .collect();
    let record = DocumentRecord {
        title: "prop".into(),
        sents,
        vertex_set,
        labels: Vec::new(),
    };
    Document::from_record(record, &common::vocab(1)).unwrap()
}

fn doc_strategy() -> impl Strategy<Value = Document> {
    prop::collection::vec(1usize..8, 1..5).prop_flat_map(|lengths| {
        let total: usize = lengths.iter().sum();
        prop::collection::btree_set(0..total, 1..=total.min(4))
            .prop_map(move |ents| document(&lengths, &ents.into_iter().collect::<Vec<_>>()))
    })
}

fn triples() -> impl Strategy<Value = Vec<TripleKey>> {
    prop::collection::btree_set((0usize..2, 0usize..3, 0usize..3, 0usize..2), 0..12).prop_map(|set| {
        set.into_iter()
            .map(|(d, head, tail, relation)| TripleKey {
                title: format!("d{d}"),
                head,
                tail,
                relation,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn attention_rows_are_distributions(
        seed in any::<u64>(),
        layers in 1usize..3,
        heads in 1usize..4,
        ids in prop::collection::vec(0u32..12, 2..20),
        prefix in 0usize..2,
    ) {
        let mut store = ParamStore::new();
        let config = encoder_config(layers, heads, 12);
        let encoder = TransformerEncoder::init(config, &mut store, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for v in store.values_mut() {
            v.mapv_inplace(|x| x * 40.0);
        }
        let window = docrel::sequencer::Window {
            offset: 0,
            doc_len: ids.len() - prefix,
            prefix_len: prefix,
            ids,
        };
        let out = encode(&window, &encoder, &store).unwrap();
        for row in out.attention_stack.lanes(ndarray::Axis(3)) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.sum() - 1.0).abs() <= 1e-5);
        }
    }

    #[test]
    fn sequences_cover_every_entity_and_token(doc in doc_strategy(), max_len in 14usize..40) {
        let tok = WordTokenizer::from_corpus([&doc]);
        let Ok(seqs) = build_sequences(&doc, &tok, max_len) else {
            // Only too-long documents for two windows may be rejected.
            prop_assert!(doc.num_tokens() > 2 * (max_len - 4));
            return Ok(());
        };
        let heads: Vec<_> = seqs.iter().map(|s| s.head_entity_idx).collect();
        prop_assert_eq!(heads, (0..doc.num_entities()).map(Some).collect::<Vec<_>>());
        for seq in &seqs {
            prop_assert_eq!(&split_windows(seq, max_len).unwrap(), &seq.windows);
            let prefix = &seq.windows[0].ids[..seq.prefix_len()];
            prop_assert!(seq.windows.iter().all(|w| &w.ids[..w.prefix_len] == prefix && w.len() <= max_len));
            let counts = coverage_count(seq);
            prop_assert_eq!(counts.len(), doc.num_tokens());
            prop_assert!(counts.iter().all(|&c| c == 1 || c == 2));
            for (w, positions) in seq.doc_pos_map.iter().enumerate() {
                for p in positions.clone() {
                    prop_assert_eq!(seq.doc_word_at(p), Some(w));
                    let hits = seq.locate(p);
                    prop_assert_eq!(hits.len(), usize::from(counts[w]));
                    for (win, wp) in hits {
                        prop_assert_eq!(seq.windows[win].ids[wp], seq.ids[p]);
                    }
                }
            }
        }
    }

    #[test]
    fn metrics_ignore_prediction_order(pred in triples(), gold in triples(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = pred.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(re_f1(&pred, &gold).unwrap(), re_f1(&shuffled, &gold).unwrap());
    }

    #[test]
    fn adding_predictions_moves_metrics_monotonically(pred in triples(), gold in triples(), pick in any::<prop::sample::Index>()) {
        let base = re_f1(&pred, &gold).unwrap();
        let missing: Vec<_> = gold.iter().filter(|g| !pred.contains(g)).cloned().collect();
        if !missing.is_empty() {
            let mut more = pred.clone();
            more.push(pick.get(&missing).clone());
            prop_assert!(re_f1(&more, &gold).unwrap().recall >= base.recall);
        }
        let wrong = TripleKey { title: "d9".into(), head: 0, tail: 1, relation: 0 };
        let mut more = pred.clone();
        more.push(wrong);
        prop_assert!(re_f1(&more, &gold).unwrap().precision <= base.precision);
    }

    #[test]
    fn ign_without_overlap_equals_re(pred in triples(), gold in triples()) {
        let docs: Vec<Document> = (0..2)
            .map(|d| {
                let mut doc = document(&[3], &[0, 1, 2]);
                doc.title = format!("d{d}");
                doc
            })
            .collect();
        // Facts between entities named differently from any evaluated entity.
        let mut other = document(&[3], &[0, 1, 2]);
        for e in &mut other.entities {
            for m in &mut e.mentions {
                m.surface = format!("x{}", m.surface);
            }
        }
        other.gold_relations = common::small_doc().0.gold_relations;
        let index = build_train_fact_index(&[other]);
        prop_assert!(!index.is_empty());
        prop_assert_eq!(ign_re_f1(&pred, &gold, &docs, &index).unwrap(), re_f1(&pred, &gold).unwrap());
    }
}

#[test]
fn inferred_vocabulary_is_sorted_and_skips_na() {
    let vocab = infer_vocabulary(&[common::SMALL_DOC]).unwrap();
    assert_eq!(vocab.names(), ["P1", "P2", "P3"]);
    let unlabeled = r#"[{"title": "u", "sents": [["a"]], "vertexSet": [], "labels": []}]"#;
    assert!(infer_vocabulary(&[unlabeled]).is_err());
}
