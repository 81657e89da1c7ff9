//! Entity-guided input sequences (`CLS + H + SEP + D + SEP`), their
//! document/sequence position maps, and the two-window split for documents
//! longer than the encoder limit.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::fsutil;

pub const DEFAULT_MAX_LEN: usize = 512;

/// Anything that maps document words to token ids with CLS/SEP markers.
/// Must be deterministic and return at least one id per word.
pub trait Tokenizer: Send + Sync {
    fn cls_id(&self) -> u32;
    fn sep_id(&self) -> u32;
    fn vocab_size(&self) -> usize;
    fn tokenize_word(&self, word: &str) -> Vec<u32>;

    fn tokenize_text(&self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .flat_map(|w| self.tokenize_word(w))
            .collect()
    }
}

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// Word-level reference tokenizer: one id per word, unknown words map to `[UNK]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordTokenizer {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl WordTokenizer {
    /// Special tokens must appear; ids are line order.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token `{t}`")));
            }
        }
        for special in [PAD, UNK, CLS, SEP] {
            if !ids.contains_key(special) {
                return Err(Error::Config(format!("vocabulary lacks `{special}`")));
            }
        }
        Ok(WordTokenizer { tokens, ids })
    }

    /// Specials first, then corpus words in first-seen order.
    pub fn from_corpus<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Self {
        let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP].iter().map(|s| s.to_string()).collect();
        let mut seen: std::collections::HashSet<String> = tokens.iter().cloned().collect();
        for doc in docs {
            let words = doc
                .tokens()
                .chain(doc.entities.iter().flat_map(|e| e.mentions.iter()).flat_map(|m| m.surface.split_whitespace()));
            for w in words {
                if seen.insert(w.to_string()) {
                    tokens.push(w.to_string());
                }
            }
        }
        Self::from_tokens(tokens).expect("specials present")
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fsutil::read_to_string(path)?)
    }

    pub fn to_vocab_file(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }
}

impl Tokenizer for WordTokenizer {
    fn cls_id(&self) -> u32 {
        self.ids[CLS]
    }

    fn sep_id(&self) -> u32 {
        self.ids[SEP]
    }

    fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    fn tokenize_word(&self, word: &str) -> Vec<u32> {
        vec![self.ids.get(word).copied().unwrap_or_else(|| self.ids[UNK])]
    }
}

/// One encoder input: the shared prefix plus a slice of the document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    /// First document-token (subtoken) index covered by this window.
    pub offset: usize,
    /// Number of document tokens in this window.
    pub doc_len: usize,
    /// Length of `CLS + H + SEP`.
    pub prefix_len: usize,
    pub ids: Vec<u32>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn covers(&self, doc_token: usize) -> bool {
        doc_token >= self.offset && doc_token < self.offset + self.doc_len
    }

    /// Window position of document token `doc_token`, if covered.
    pub fn doc_position(&self, doc_token: usize) -> Option<usize> {
        self.covers(doc_token)
            .then(|| self.prefix_len + doc_token - self.offset)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityGuidedSequence {
    /// `None` for the prefix-free ablation layout (`CLS + SEP + D + SEP`).
    pub head_entity_idx: Option<usize>,
    /// Full un-windowed sequence.
    pub ids: Vec<u32>,
    pub head_span: Range<usize>,
    /// Per document word: the sequence positions of its subtokens.
    pub doc_pos_map: Vec<Range<usize>>,
    /// Per sentence: sequence positions inside the D segment.
    pub sentence_spans: Vec<Range<usize>>,
    pub windows: Vec<Window>,
}

impl EntityGuidedSequence {
    /// Length of `CLS + H + SEP`.
    pub fn prefix_len(&self) -> usize {
        self.head_span.end + 1
    }

    /// Number of document subtokens.
    pub fn doc_len(&self) -> usize {
        self.ids.len() - self.prefix_len() - 1
    }

    pub fn doc_segment(&self) -> Range<usize> {
        self.prefix_len()..self.prefix_len() + self.doc_len()
    }

    /// Sequence positions of every token of every mention of `entity`.
    pub fn entity_positions(&self, doc: &Document, entity: usize) -> Vec<usize> {
        doc.entity_token_indices(entity)
            .into_iter()
            .flat_map(|w| self.doc_pos_map[w].clone())
            .collect()
    }

    /// Sequence position → (window index, window position) for every window holding it.
    pub fn locate(&self, position: usize) -> Vec<(usize, usize)> {
        let prefix = self.prefix_len();
        let last = self.ids.len() - 1;
        self.windows
            .iter()
            .enumerate()
            .filter_map(|(w, win)| {
                if position < prefix {
                    Some((w, position))
                } else if position == last {
                    Some((w, win.len() - 1))
                } else {
                    win.doc_position(position - prefix).map(|p| (w, p))
                }
            })
            .collect()
    }

    /// Maps a sequence position back to the document word it came from.
    pub fn doc_word_at(&self, position: usize) -> Option<usize> {
        let seg = self.doc_segment();
        if !seg.contains(&position) {
            return None;
        }
        let idx = self.doc_pos_map.partition_point(|r| r.end <= position);
        Some(idx)
    }
}

fn tokenize_document(doc: &Document, tok: &dyn Tokenizer) -> (Vec<u32>, Vec<Range<usize>>) {
    let mut ids = Vec::new();
    let mut word_ranges = Vec::with_capacity(doc.num_tokens());
    for word in doc.tokens() {
        let start = ids.len();
        let sub = tok.tokenize_word(word);
        assert!(!sub.is_empty(), "tokenizer produced no ids for `{word}`");
        ids.extend(sub);
        word_ranges.push(start..ids.len());
    }
    (ids, word_ranges)
}

fn assemble(
    doc: &Document,
    tok: &dyn Tokenizer,
    head_entity_idx: Option<usize>,
    head_ids: Vec<u32>,
    doc_ids: &[u32],
    word_ranges: &[Range<usize>],
    max_len: usize,
) -> Result<EntityGuidedSequence> {
    let prefix_len = head_ids.len() + 2;
    let mut ids = Vec::with_capacity(prefix_len + doc_ids.len() + 1);
    ids.push(tok.cls_id());
    ids.extend(&head_ids);
    ids.push(tok.sep_id());
    ids.extend_from_slice(doc_ids);
    ids.push(tok.sep_id());

    let doc_pos_map: Vec<Range<usize>> = word_ranges
        .iter()
        .map(|r| r.start + prefix_len..r.end + prefix_len)
        .collect();
    let mut sentence_spans = Vec::with_capacity(doc.num_sentences());
    let mut word = 0;
    for sentence in &doc.sentences {
        let first = doc_pos_map[word].start;
        word += sentence.len();
        let last = doc_pos_map[word - 1].end;
        sentence_spans.push(first..last);
    }
    let mut seq = EntityGuidedSequence {
        head_entity_idx,
        ids,
        head_span: 1..1 + head_ids.len(),
        doc_pos_map,
        sentence_spans,
        windows: Vec::new(),
    };
    seq.windows = split_windows(&seq, max_len)?;
    Ok(seq)
}

fn check_max_len(head_len: usize, max_len: usize) -> Result<()> {
    if max_len < head_len + 4 {
        return Err(Error::Config(format!(
            "max_len {max_len} leaves no room for a document token after a {head_len}-token head prefix"
        )));
    }
    Ok(())
}

/// One sequence per entity, headed by the tokenization of its first mention.
pub fn build_sequences(
    doc: &Document,
    tok: &dyn Tokenizer,
    max_len: usize,
) -> Result<Vec<EntityGuidedSequence>> {
    let (doc_ids, word_ranges) = tokenize_document(doc, tok);
    doc.entities
        .iter()
        .enumerate()
        .map(|(e, entity)| {
            let head_ids = tok.tokenize_text(&entity.first_mention().surface);
            if head_ids.len() * 2 > max_len {
                return Err(Error::Config(format!(
                    "entity {e} of `{}` tokenizes to {} tokens, more than max_len/2 = {}",
                    doc.title,
                    head_ids.len(),
                    max_len / 2
                )));
            }
            check_max_len(head_ids.len(), max_len)?;
            assemble(doc, tok, Some(e), head_ids, &doc_ids, &word_ranges, max_len)
        })
        .collect()
}

/// Prefix-free layout used as the ablation baseline: one sequence per document.
pub fn build_unguided_sequence(
    doc: &Document,
    tok: &dyn Tokenizer,
    max_len: usize,
) -> Result<EntityGuidedSequence> {
    check_max_len(0, max_len)?;
    let (doc_ids, word_ranges) = tokenize_document(doc, tok);
    assemble(doc, tok, None, Vec::new(), &doc_ids, &word_ranges, max_len)
}

/// Splits into one window when the sequence fits, otherwise two windows
/// `D[0..B)` and `D[len-B..len)` with `B = max_len - (|H| + 3)`.
pub fn split_windows(seq: &EntityGuidedSequence, max_len: usize) -> Result<Vec<Window>> {
    let prefix_len = seq.prefix_len();
    let doc_len = seq.doc_len();
    let prefix = &seq.ids[..prefix_len];
    let sep = seq.ids[seq.ids.len() - 1];
    if seq.ids.len() <= max_len {
        return Ok(vec![Window {
            offset: 0,
            doc_len,
            prefix_len,
            ids: seq.ids.clone(),
        }]);
    }
    let budget = max_len
        .checked_sub(prefix_len + 1)
        .filter(|&b| b > 0)
        .ok_or_else(|| Error::Config(format!("max_len {max_len} too small for the prefix")))?;
    if doc_len > 2 * budget {
        return Err(Error::Config(format!(
            "document of {doc_len} tokens exceeds the two-window capacity {} at max_len {max_len}",
            2 * budget
        )));
    }
    let doc = &seq.ids[prefix_len..prefix_len + doc_len];
    let make = |offset: usize| {
        let mut ids = Vec::with_capacity(max_len);
        ids.extend_from_slice(prefix);
        ids.extend_from_slice(&doc[offset..offset + budget]);
        ids.push(sep);
        Window {
            offset,
            doc_len: budget,
            prefix_len,
            ids,
        }
    };
    Ok(vec![make(0), make(doc_len - budget)])
}

/// Number of windows covering each document token.
pub fn coverage_count(seq: &EntityGuidedSequence) -> Vec<u8> {
    (0..seq.doc_len())
        .map(|t| seq.windows.iter().filter(|w| w.covers(t)).count() as u8)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Entity, Mention};

    fn doc_with(words: usize, head_words: usize, entities: usize) -> Document {
        let sentence: Vec<String> = (0..words).map(|i| format!("w{i}")).collect();
        let ents = (0..entities)
            .map(|e| Entity {
                mentions: vec![Mention {
                    sent_id: 0,
                    start: e * head_words,
                    end: (e + 1) * head_words,
                    surface: sentence[e * head_words..(e + 1) * head_words].join(" "),
                    entity_type: "X".into(),
                }],
            })
            .collect();
        Document {
            title: "t".into(),
            sentences: vec![sentence],
            entities: ents,
            gold_relations: vec![],
        }
    }

    #[test]
    fn one_sequence_per_entity() {
        let doc = doc_with(20, 2, 1);
        let tok = WordTokenizer::from_corpus([&doc]);
        assert_eq!(build_sequences(&doc, &tok, 512).unwrap().len(), 1);
        let doc = doc_with(20, 2, 5);
        let tok = WordTokenizer::from_corpus([&doc]);
        let seqs = build_sequences(&doc, &tok, 512).unwrap();
        let heads: Vec<_> = seqs.iter().map(|s| s.head_entity_idx.unwrap()).collect();
        assert_eq!(heads, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn counting_layout() {
        let doc = doc_with(100, 3, 1);
        let tok = WordTokenizer::from_corpus([&doc]);
        let seq = build_sequences(&doc, &tok, 512).unwrap().remove(0);
        assert_eq!(seq.ids.len(), 106);
        assert_eq!(seq.windows.len(), 1);
        assert_eq!(seq.windows[0].ids, seq.ids);
        assert_eq!(seq.head_span, 1..4);
        for w in 0..100 {
            assert_eq!(seq.doc_pos_map[w], w + 5..w + 6);
            assert_eq!(seq.doc_word_at(w + 5), Some(w));
        }
        assert_eq!(seq.ids[seq.head_span.clone()], seq.ids[5..8]);
        assert_eq!(coverage_count(&seq), vec![1u8; 100]);
    }

    #[test]
    fn two_window_split() {
        let doc = doc_with(600, 4, 1);
        let tok = WordTokenizer::from_corpus([&doc]);
        let seq = build_sequences(&doc, &tok, 512).unwrap().remove(0);
        assert_eq!(seq.windows.len(), 2);
        let (a, b) = (&seq.windows[0], &seq.windows[1]);
        assert_eq!((a.offset, a.doc_len), (0, 505));
        assert_eq!((b.offset, b.doc_len), (95, 505));
        assert_eq!(a.len(), 512);
        assert_eq!(b.len(), 512);
        assert_eq!(a.ids[..6], b.ids[..6]);
        let counts = coverage_count(&seq);
        for (t, &c) in counts.iter().enumerate() {
            assert_eq!(c, if (95..505).contains(&t) { 2 } else { 1 }, "token {t}");
        }
        // word 100 sits at window-1 position 106 and window-2 position 11
        assert_eq!(seq.locate(seq.doc_pos_map[100].start), vec![(0, 106), (1, 11)]);
        assert_eq!(seq.locate(seq.ids.len() - 1), vec![(0, 511), (1, 511)]);
    }

    #[test]
    fn exact_two_budget_has_empty_overlap() {
        // |H| = 4 → B = 505
        let doc = doc_with(1010, 4, 1);
        let tok = WordTokenizer::from_corpus([&doc]);
        let seq = build_sequences(&doc, &tok, 512).unwrap().remove(0);
        assert_eq!(seq.windows[1].offset, 505);
        assert_eq!(coverage_count(&seq), vec![1u8; 1010]);
        let doc = doc_with(1011, 4, 1);
        let tok = WordTokenizer::from_corpus([&doc]);
        assert!(matches!(build_sequences(&doc, &tok, 512), Err(Error::Config(_))));
    }

    #[test]
    fn overlong_head_rejected() {
        let doc = doc_with(20, 6, 1);
        let tok = WordTokenizer::from_corpus([&doc]);
        assert!(matches!(build_sequences(&doc, &tok, 10), Err(Error::Config(_))));
    }

    #[test]
    fn unguided_layout_has_empty_head() {
        let doc = doc_with(10, 2, 2);
        let tok = WordTokenizer::from_corpus([&doc]);
        let seq = build_unguided_sequence(&doc, &tok, 512).unwrap();
        assert_eq!(seq.head_span, 1..1);
        assert_eq!(seq.ids.len(), 13);
        assert_eq!(seq.doc_pos_map[0], 2..3);
    }

    #[test]
    fn vocab_file_round_trip() {
        let doc = doc_with(5, 1, 1);
        let tok = WordTokenizer::from_corpus([&doc]);
        assert_eq!(WordTokenizer::parse(&tok.to_vocab_file()).unwrap(), tok);
        assert_eq!(tok.tokenize_word("never-seen"), vec![1]);
        assert!(WordTokenizer::parse("a\nb\n").is_err());
    }
}
