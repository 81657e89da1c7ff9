//! Readouts on top of the encoder: entity and sentence pooling, the bilinear
//! relation head, the fused sentence/relation evidence representation, the
//! pooled attention features per sentence, and the attention-guided
//! evidence classifier.
//!
//! Each readout has a tape form (`*_var`) used for training and a plain
//! array form for inspection and tests; the array forms run the tape form
//! on constants so both share one implementation.

use std::collections::BTreeSet;
use std::ops::Range;

use ndarray::{Array1, Array2, Array3, Array4, ArrayView1, ArrayView2, Axis};

use crate::autograd::{Mat, Tape, Var};
use crate::corpus::Document;
use crate::encoder::EncodedWindow;
use crate::error::{Error, Result};
use crate::sequencer::EntityGuidedSequence;

/// Per-relation bilinear forms `W_i` (N_r × d × d) and biases `b_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationHeadParams {
    pub weights: Array3<f64>,
    pub bias: Array1<f64>,
}

impl RelationHeadParams {
    pub fn zeros(num_relations: usize, dim: usize) -> Self {
        RelationHeadParams {
            weights: Array3::zeros((num_relations, dim, dim)),
            bias: Array1::zeros(num_relations),
        }
    }

    /// `W_i` laid side by side: a d × (N_r·d) matrix.
    pub fn stacked(&self) -> Mat {
        let (nr, d, _) = self.weights.dim();
        Mat::from_shape_fn((d, nr * d), |(a, col)| self.weights[[col / d, a, col % d]])
    }

    pub fn from_stacked(stacked: &Mat, bias: &Mat) -> Self {
        let d = stacked.nrows();
        let nr = stacked.ncols() / d;
        RelationHeadParams {
            weights: Array3::from_shape_fn((nr, d, d), |(i, a, b)| stacked[[a, i * d + b]]),
            bias: bias.row(0).to_owned(),
        }
    }
}

/// Relation embedding table, one m-vector per relation.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationEmbeddingTable {
    pub table: Array2<f64>,
}

/// Evidence-head parameters: the fused-representation bilinear map
/// `(s ∈ R^d, r ∈ R^m) → R^m`, its scalar output layer, and the
/// attention-combine layer.
#[derive(Clone, Debug, PartialEq)]
pub struct EvidenceHeadParams {
    /// m × d × m, indexed `[output, sentence_dim, relation_dim]`.
    pub in_weight: Array3<f64>,
    pub in_bias: Array1<f64>,
    pub out_weight: Array1<f64>,
    pub out_bias: f64,
    pub attn_weight: Array1<f64>,
    pub attn_bias: f64,
}

impl EvidenceHeadParams {
    pub fn zeros(dim: usize, relation_dim: usize) -> Self {
        EvidenceHeadParams {
            in_weight: Array3::zeros((relation_dim, dim, relation_dim)),
            in_bias: Array1::zeros(relation_dim),
            out_weight: Array1::zeros(relation_dim),
            out_bias: 0.0,
            attn_weight: Array1::zeros(relation_dim),
            attn_bias: 0.0,
        }
    }

    /// The bilinear tensor flattened to (m·d) × m for a single matmul with `r`.
    pub fn in_weight_matrix(&self) -> Mat {
        let (m, d, _) = self.in_weight.dim();
        self.in_weight
            .clone()
            .into_shape_with_order((m * d, m))
            .expect("contiguous")
    }
}

fn check_finite<'a>(what: &str, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

fn row(v: ArrayView1<f64>) -> Mat {
    v.to_owned().insert_axis(Axis(0))
}

fn column(v: ArrayView1<f64>) -> Mat {
    v.to_owned().insert_axis(Axis(1))
}

fn mean_rows(emb: ArrayView2<f64>, rows: impl IntoIterator<Item = usize>) -> Result<Array1<f64>> {
    let mut acc = Array1::zeros(emb.ncols());
    let mut n = 0usize;
    for r in rows {
        if r >= emb.nrows() {
            return Err(Error::Shape(format!("row {r} outside {} rows", emb.nrows())));
        }
        acc += &emb.row(r);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Shape("mean over an empty row set".into()));
    }
    Ok(acc / n as f64)
}

pub fn extract_head_embedding(embeddings: ArrayView2<f64>, head_span: Range<usize>) -> Result<Array1<f64>> {
    mean_rows(embeddings, head_span)
}

/// Mean over every token of every mention of `tail_idx`.
pub fn extract_tail_embedding(
    embeddings: ArrayView2<f64>,
    doc: &Document,
    seq: &EntityGuidedSequence,
    tail_idx: usize,
) -> Result<Array1<f64>> {
    mean_rows(embeddings, seq.entity_positions(doc, tail_idx))
}

pub fn extract_sentence_embeddings(
    embeddings: ArrayView2<f64>,
    sentence_spans: &[Range<usize>],
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((sentence_spans.len(), embeddings.ncols()));
    for (j, span) in sentence_spans.iter().enumerate() {
        out.row_mut(j).assign(&mean_rows(embeddings, span.clone())?);
    }
    Ok(out)
}

/// `sigmoid(h^T W_i t_k + b_i)` for every tail row k and relation i.
/// `stacked` is d × (N_r·d), `bias` is 1 × N_r.
pub fn relation_scores_var(tape: &mut Tape, h: Var, tails: Var, stacked: Var, bias: Var) -> Var {
    let d = tape.value(h).ncols();
    let nr = tape.value(bias).ncols();
    let hw = tape.matmul(h, stacked);
    let per_relation = tape.reshape(hw, nr, d);
    let pt = tape.transpose(per_relation);
    let logits = tape.matmul(tails, pt);
    let logits = tape.add_row(logits, bias);
    tape.sigmoid(logits)
}

pub fn relation_scores(
    h: ArrayView1<f64>,
    tails: ArrayView2<f64>,
    params: &RelationHeadParams,
) -> Result<Array2<f64>> {
    let (nr, d, d2) = params.weights.dim();
    if h.len() != d || tails.ncols() != d || d2 != d || params.bias.len() != nr {
        return Err(Error::Shape(format!(
            "h {}, tails {:?}, weights {:?}, bias {}",
            h.len(),
            tails.dim(),
            params.weights.dim(),
            params.bias.len()
        )));
    }
    check_finite("relation head input", h.iter().chain(tails.iter()))?;
    check_finite("relation head parameters", params.weights.iter().chain(params.bias.iter()))?;
    let no_params: [Mat; 0] = [];
    let mut tape = Tape::new(&no_params);
    let hv = tape.constant(row(h));
    let tv = tape.constant(tails.to_owned());
    let w = tape.constant(params.stacked());
    let b = tape.constant(row(params.bias.view()));
    let out = relation_scores_var(&mut tape, hv, tv, w, b);
    Ok(tape.value(out).clone())
}

/// Fused representation `f_j = bilinear(s_j, r) + b_in` (N_s × m) and the
/// plain evidence probabilities `sigmoid(f_j · w_out + b_out)` (N_s × 1).
/// `r` is m × 1, `in_weight` is (m·d) × m.
pub fn fused_evidence_var(
    tape: &mut Tape,
    sentences: Var,
    r: Var,
    in_weight: Var,
    in_bias: Var,
    out_weight: Var,
    out_bias: Var,
) -> (Var, Var) {
    let d = tape.value(sentences).ncols();
    let m = tape.value(r).nrows();
    let wr = tape.matmul(in_weight, r);
    let mapped = tape.reshape(wr, m, d);
    let mapped_t = tape.transpose(mapped);
    let f = tape.matmul(sentences, mapped_t);
    let f = tape.add_row(f, in_bias);
    let logits = tape.matmul(f, out_weight);
    let logits = tape.add_row(logits, out_bias);
    let probs = tape.sigmoid(logits);
    (f, probs)
}

pub fn fused_evidence(
    sentences: ArrayView2<f64>,
    r: ArrayView1<f64>,
    params: &EvidenceHeadParams,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let (m, d, m2) = params.in_weight.dim();
    if sentences.ncols() != d
        || r.len() != m
        || m2 != m
        || params.in_bias.len() != m
        || params.out_weight.len() != m
    {
        return Err(Error::Shape(format!(
            "sentences {:?}, relation vector {}, bilinear {:?}",
            sentences.dim(),
            r.len(),
            params.in_weight.dim()
        )));
    }
    check_finite("evidence input", sentences.iter().chain(r.iter()))?;
    check_finite(
        "evidence parameters",
        params
            .in_weight
            .iter()
            .chain(params.in_bias.iter())
            .chain(params.out_weight.iter())
            .chain(std::iter::once(&params.out_bias)),
    )?;
    let no_params: [Mat; 0] = [];
    let mut tape = Tape::new(&no_params);
    let s = tape.constant(sentences.to_owned());
    let rv = tape.constant(column(r));
    let w = tape.constant(params.in_weight_matrix());
    let b = tape.constant(row(params.in_bias.view()));
    let wo = tape.constant(column(params.out_weight.view()));
    let bo = tape.constant(Mat::from_elem((1, 1), params.out_bias));
    let (f, p) = fused_evidence_var(&mut tape, s, rv, w, b, wo, bo);
    Ok((tape.value(f).clone(), tape.value(p).column(0).to_owned()))
}

/// `sigmoid(a_j * <w_a, f_j> + b_a)` per sentence; `a` is N_s × 1.
pub fn attention_guided_var(tape: &mut Tape, a: Var, f: Var, attn_weight: Var, attn_bias: Var) -> Var {
    let g = tape.matmul(f, attn_weight);
    let z = tape.mul(a, g);
    let z = tape.add_row(z, attn_bias);
    tape.sigmoid(z)
}

pub fn attention_guided_evidence(
    a: ArrayView1<f64>,
    f: ArrayView2<f64>,
    params: &EvidenceHeadParams,
) -> Result<Array1<f64>> {
    if a.len() != f.nrows() || f.ncols() != params.attn_weight.len() {
        return Err(Error::Shape(format!(
            "attention features {}, fused {:?}, weight {}",
            a.len(),
            f.dim(),
            params.attn_weight.len()
        )));
    }
    check_finite(
        "attention-guided evidence input",
        a.iter()
            .chain(f.iter())
            .chain(params.attn_weight.iter())
            .chain(std::iter::once(&params.attn_bias)),
    )?;
    let no_params: [Mat; 0] = [];
    let mut tape = Tape::new(&no_params);
    let av = tape.constant(column(a));
    let fv = tape.constant(f.to_owned());
    let w = tape.constant(column(params.attn_weight.view()));
    let b = tape.constant(Mat::from_elem((1, 1), params.attn_bias));
    let out = attention_guided_var(&mut tape, av, fv, w, b);
    Ok(tape.value(out).column(0).to_owned())
}

/// Index geometry for pooling one window's attention into sentence features.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowPlan {
    /// Window positions of head and tail tokens.
    pub rows: Vec<usize>,
    /// Per sentence: its window positions (possibly empty).
    pub sentence_cols: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionPlan {
    pub windows: Vec<WindowPlan>,
    /// Per sentence: `(window, weight)` terms averaging the per-window features.
    pub combine: Vec<Vec<(usize, f64)>>,
}

impl AttentionPlan {
    pub fn num_sentences(&self) -> usize {
        self.combine.len()
    }

    /// Plan for a pair whose head and tail rows are given as sequence positions.
    ///
    /// A window contributes to sentence j when it covers some of j's tokens
    /// and some tail token; if no window does both, every window covering
    /// j contributes.
    pub fn for_pair(
        seq: &EntityGuidedSequence,
        head_positions: &[usize],
        tail_positions: &[usize],
    ) -> Result<Self> {
        let mut windows = Vec::with_capacity(seq.windows.len());
        let mut has_tail = Vec::with_capacity(seq.windows.len());
        for w in 0..seq.windows.len() {
            let locate = |positions: &[usize]| -> BTreeSet<usize> {
                positions
                    .iter()
                    .flat_map(|&p| seq.locate(p))
                    .filter(|&(win, _)| win == w)
                    .map(|(_, wp)| wp)
                    .collect()
            };
            let tails = locate(tail_positions);
            has_tail.push(!tails.is_empty());
            let mut rows = locate(head_positions);
            rows.extend(tails);
            let sentence_cols = seq
                .sentence_spans
                .iter()
                .map(|span| {
                    span.clone()
                        .flat_map(|p| seq.locate(p))
                        .filter(|&(win, _)| win == w)
                        .map(|(_, wp)| wp)
                        .collect()
                })
                .collect();
            windows.push(WindowPlan {
                rows: rows.into_iter().collect(),
                sentence_cols,
            });
        }
        let mut combine = Vec::with_capacity(seq.sentence_spans.len());
        for j in 0..seq.sentence_spans.len() {
            let covering: Vec<usize> = (0..windows.len())
                .filter(|&w| !windows[w].sentence_cols[j].is_empty() && !windows[w].rows.is_empty())
                .collect();
            let preferred: Vec<usize> = covering.iter().copied().filter(|&w| has_tail[w]).collect();
            let chosen = if preferred.is_empty() { covering } else { preferred };
            if chosen.is_empty() {
                return Err(Error::Shape(format!("sentence {j} is not covered by any window")));
            }
            let weight = 1.0 / chosen.len() as f64;
            combine.push(chosen.into_iter().map(|w| (w, weight)).collect());
        }
        Ok(AttentionPlan { windows, combine })
    }
}

/// Step 1 of the pooling: max over heads, then mean over the last `last_layers` layers (L×L).
pub fn pooled_attention_var(tape: &mut Tape, window: &EncodedWindow, last_layers: usize) -> Var {
    let n = window.attention.len();
    assert!(last_layers >= 1 && last_layers <= n, "last_layers must be in 1..={n}");
    let mut acc: Option<Var> = None;
    for per_head in &window.attention[n - last_layers..] {
        let maxed = if per_head.len() == 1 {
            per_head[0]
        } else {
            tape.max_of(per_head.clone())
        };
        acc = Some(match acc {
            Some(a) => tape.add(a, maxed),
            None => maxed,
        });
    }
    let acc = acc.expect("at least one layer");
    if last_layers == 1 {
        acc
    } else {
        tape.scale(acc, 1.0 / last_layers as f64)
    }
}

/// Step 2: mean over the head/tail rows of each window's pooled matrix (1×L per window).
pub fn pair_token_features_var(tape: &mut Tape, pooled: &[Var], plan: &AttentionPlan) -> Vec<Option<Var>> {
    pooled
        .iter()
        .zip(&plan.windows)
        .map(|(&p, wp)| {
            (!wp.rows.is_empty()).then(|| tape.row_means(p, std::slice::from_ref(&wp.rows)))
        })
        .collect()
}

/// Steps 2 and 3: per-sentence attention features as an N_s × 1 column.
pub fn attention_features_var(tape: &mut Tape, pooled: &[Var], plan: &AttentionPlan) -> Var {
    let token_rows = pair_token_features_var(tape, pooled, plan);
    let ns = plan.num_sentences();
    let per_window: Vec<Var> = token_rows
        .into_iter()
        .zip(&plan.windows)
        .map(|(row, wp)| match row {
            Some(row) => {
                let col = tape.transpose(row);
                tape.row_means(col, &wp.sentence_cols)
            }
            None => tape.constant(Mat::zeros((ns, 1))),
        })
        .collect();
    if per_window.len() == 1 && plan.combine.iter().all(|c| c == &[(0, 1.0)]) {
        return per_window[0];
    }
    let stacked = tape.concat_rows(per_window);
    let groups = plan
        .combine
        .iter()
        .enumerate()
        .map(|(j, terms)| terms.iter().map(|&(w, wt)| (w * ns + j, wt)).collect())
        .collect();
    tape.row_combine(stacked, groups)
}

/// Array form of the pooling: `stacks[w]` is window w's full
/// layers × heads × L × L attention tensor.
pub fn attention_sentence_features(
    stacks: &[Array4<f64>],
    last_layers: usize,
    plan: &AttentionPlan,
) -> Result<Array1<f64>> {
    if stacks.len() != plan.windows.len() {
        return Err(Error::Shape(format!(
            "{} attention stacks for a {}-window plan",
            stacks.len(),
            plan.windows.len()
        )));
    }
    let no_params: [Mat; 0] = [];
    let mut tape = Tape::new(&no_params);
    let mut pooled = Vec::with_capacity(stacks.len());
    for (stack, wp) in stacks.iter().zip(&plan.windows) {
        let (layers, heads, l1, l2) = stack.dim();
        if last_layers == 0 || last_layers > layers {
            return Err(Error::Config(format!(
                "last_layers {last_layers} outside 1..={layers}"
            )));
        }
        if l1 != l2 || wp.rows.iter().chain(wp.sentence_cols.iter().flatten()).any(|&p| p >= l1) {
            return Err(Error::Shape(format!("attention {l1}×{l2} vs plan positions")));
        }
        let attention = (0..layers)
            .map(|l| {
                (0..heads)
                    .map(|h| {
                        let m = stack.slice(ndarray::s![l, h, .., ..]).to_owned();
                        tape.constant(m)
                    })
                    .collect()
            })
            .collect();
        let window = EncodedWindow {
            embeddings: tape.constant(Mat::zeros((l1, 1))),
            attention,
        };
        pooled.push(pooled_attention_var(&mut tape, &window, last_layers));
    }
    let out = attention_features_var(&mut tape, &pooled, plan);
    Ok(tape.value(out).column(0).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    const SIGMOID_2: f64 = 0.880_797_077_977_882_3;

    #[test]
    fn pooling_means() {
        let emb = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        assert_eq!(extract_head_embedding(emb.view(), 1..2).unwrap(), array![3.0, 4.0]);
        assert_eq!(extract_head_embedding(emb.view(), 0..2).unwrap(), array![2.0, 3.0]);
        let same = array![[0.5, -1.0], [0.5, -1.0], [0.5, -1.0]];
        assert_eq!(extract_head_embedding(same.view(), 0..3).unwrap(), array![0.5, -1.0]);
        let s = extract_sentence_embeddings(emb.view(), &[0..1, 1..3]).unwrap();
        assert_eq!(s, array![[1.0, 2.0], [4.0, 5.0]]);
        assert!(extract_head_embedding(emb.view(), 1..1).is_err());
    }

    #[test]
    fn relation_scores_fixtures() {
        let zero = RelationHeadParams::zeros(3, 2);
        let tails = array![[0.3, -1.0], [2.0, 0.5]];
        let p = relation_scores(array![1.0, 2.0].view(), tails.view(), &zero).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));

        let mut params = RelationHeadParams::zeros(1, 2);
        params.weights[[0, 0, 1]] = 2.0;
        let p = relation_scores(array![1.0, 0.0].view(), array![[0.0, 1.0]].view(), &params).unwrap();
        assert_abs_diff_eq!(p[[0, 0]], SIGMOID_2, epsilon = 1e-12);

        let mut params = RelationHeadParams::zeros(2, 2);
        params.weights.fill(0.7);
        params.bias = array![0.3, -1.2];
        let p = relation_scores(array![0.0, 0.0].view(), tails.view(), &params).unwrap();
        for k in 0..2 {
            assert_abs_diff_eq!(p[[k, 0]], crate::autograd::sigmoid(0.3), epsilon = 1e-15);
            assert_abs_diff_eq!(p[[k, 1]], crate::autograd::sigmoid(-1.2), epsilon = 1e-15);
        }
    }

    #[test]
    fn relation_scores_rejects_bad_input() {
        let params = RelationHeadParams::zeros(1, 2);
        let bad = relation_scores(array![f64::NAN, 0.0].view(), array![[0.0, 1.0]].view(), &params);
        assert!(matches!(bad, Err(Error::NonFinite(_))));
        let bad = relation_scores(array![1.0].view(), array![[0.0, 1.0]].view(), &params);
        assert!(matches!(bad, Err(Error::Shape(_))));
    }

    #[test]
    fn stacked_layout_round_trips() {
        let mut params = RelationHeadParams::zeros(3, 2);
        for (i, v) in params.weights.iter_mut().enumerate() {
            *v = i as f64;
        }
        let back = RelationHeadParams::from_stacked(&params.stacked(), &row(params.bias.view()));
        assert_eq!(back, params);
    }

    #[test]
    fn fused_evidence_fixtures() {
        let mut params = EvidenceHeadParams::zeros(2, 3);
        params.in_bias = array![0.1, 0.2, 0.3];
        params.in_weight.fill(0.9);
        let s = array![[1.0, 2.0], [3.0, -4.0]];
        let (f, _) = fused_evidence(s.view(), array![0.0, 0.0, 0.0].view(), &params).unwrap();
        for j in 0..2 {
            assert_eq!(f.row(j), params.in_bias);
        }

        let zero = EvidenceHeadParams::zeros(2, 3);
        let (_, p) = fused_evidence(s.view(), array![1.0, 2.0, 3.0].view(), &zero).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));

        let mut params = EvidenceHeadParams::zeros(2, 1);
        params.in_weight.fill(1.0);
        params.out_weight = array![0.5];
        let (f, p) = fused_evidence(array![[1.0, 1.0]].view(), array![2.0].view(), &params).unwrap();
        assert_abs_diff_eq!(f[[0, 0]], 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], SIGMOID_2, epsilon = 1e-12);
    }

    #[test]
    fn attention_guided_fixtures() {
        let mut params = EvidenceHeadParams::zeros(2, 2);
        params.attn_bias = -0.4;
        params.attn_weight = array![1.0, -2.0];
        let f = array![[1.0, 2.0], [3.0, 4.0]];
        let p = attention_guided_evidence(array![0.0, 0.0].view(), f.view(), &params).unwrap();
        assert!(p.iter().all(|&v| v == crate::autograd::sigmoid(-0.4)));
        params.attn_weight = array![0.0, 0.0];
        let p = attention_guided_evidence(array![0.3, 0.9].view(), f.view(), &params).unwrap();
        assert!(p.iter().all(|&v| v == crate::autograd::sigmoid(-0.4)));

        let mut params = EvidenceHeadParams::zeros(2, 1);
        params.attn_weight = array![2.0];
        let p = attention_guided_evidence(array![0.25].view(), array![[4.0]].view(), &params).unwrap();
        assert_abs_diff_eq!(p[0], SIGMOID_2, epsilon = 1e-12);
    }

    fn single_window_plan(rows: Vec<usize>, cols: Vec<Vec<usize>>) -> AttentionPlan {
        let ns = cols.len();
        AttentionPlan {
            windows: vec![WindowPlan {
                rows,
                sentence_cols: cols,
            }],
            combine: vec![vec![(0, 1.0)]; ns],
        }
    }

    #[test]
    fn uniform_attention_gives_one_over_len() {
        let len = 7;
        let stack = Array4::from_elem((3, 2, len, len), 1.0 / len as f64);
        let plan = single_window_plan(vec![1, 4], vec![vec![3, 4], vec![5], vec![6]]);
        let a = attention_sentence_features(&[stack], 2, &plan).unwrap();
        for &v in &a {
            assert_abs_diff_eq!(v, 1.0 / len as f64, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_head_single_layer_is_row_restriction() {
        let len = 5;
        let stack = Array4::from_shape_fn((1, 1, len, len), |(_, _, i, j)| (1 + i * len + j) as f64 / 100.0);
        // head token at 1, one token per sentence at positions 3 and 4
        let plan = single_window_plan(vec![1], vec![vec![3], vec![4]]);
        let a = attention_sentence_features(std::slice::from_ref(&stack), 1, &plan).unwrap();
        assert_eq!(a[0], stack[[0, 0, 1, 3]]);
        assert_eq!(a[1], stack[[0, 0, 1, 4]]);
    }

    #[test]
    fn last_layers_out_of_range() {
        let stack = Array4::from_elem((2, 1, 3, 3), 1.0 / 3.0);
        let plan = single_window_plan(vec![0], vec![vec![1, 2]]);
        assert!(attention_sentence_features(std::slice::from_ref(&stack), 3, &plan).is_err());
        assert!(attention_sentence_features(&[stack], 0, &plan).is_err());
    }
}
