//! Encoder contract and the reference transformer encoder.
//!
//! An encoder turns a window of token ids into per-position embeddings and
//! exposes the post-softmax attention probabilities of every head in every
//! layer. [`EncoderBackend`] is the seam for plugging in another encoder
//! whose parameters live in the same [`ParamStore`].

use ndarray::{Array2, Array4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Mat, RowGroups, Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Init, ParamGroup, ParamStore};
use crate::sequencer::{EntityGuidedSequence, Window};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    /// Used only when a forward pass is given a [`Dropout`] source.
    pub dropout: f64,
}

impl EncoderConfig {
    pub fn desk(vocab_size: usize, max_positions: usize) -> Self {
        EncoderConfig {
            num_layers: 2,
            num_heads: 2,
            model_dim: 32,
            ffn_dim: 64,
            vocab_size,
            max_positions,
            dropout: 0.1,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.num_layers,
            self.num_heads,
            self.model_dim,
            self.ffn_dim,
            self.vocab_size,
            self.max_positions,
        ];
        if dims.contains(&0) {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if !self.model_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "model_dim {} not divisible by num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Per-forward dropout mask source.
pub struct Dropout {
    pub rate: f64,
    pub rng: ChaCha8Rng,
}

impl Dropout {
    fn apply(&mut self, tape: &mut Tape, x: Var) -> Var {
        if self.rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - self.rate;
        let dim = tape.value(x).dim();
        let mask = Mat::from_shape_simple_fn(dim, || {
            if self.rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        tape.mul_const(x, mask)
    }
}

/// Tape handles for one encoded window.
#[derive(Clone, Debug)]
pub struct EncodedWindow {
    /// L×d.
    pub embeddings: Var,
    /// `[layer][head]`, each L×L, rows summing to one.
    pub attention: Vec<Vec<Var>>,
}

pub trait EncoderBackend: Send + Sync {
    fn config(&self) -> &EncoderConfig;

    /// `segment_split`: positions before it belong to the prefix segment.
    fn forward(
        &self,
        tape: &mut Tape,
        ids: &[u32],
        segment_split: usize,
        dropout: Option<&mut Dropout>,
    ) -> Result<EncodedWindow>;
}

struct LayerParams {
    q_w: usize,
    q_b: usize,
    k_w: usize,
    k_b: usize,
    v_w: usize,
    v_b: usize,
    o_w: usize,
    o_b: usize,
    ln1_g: usize,
    ln1_b: usize,
    ff1_w: usize,
    ff1_b: usize,
    ff2_w: usize,
    ff2_b: usize,
    ln2_g: usize,
    ln2_b: usize,
}

/// Post-layer-norm transformer encoder with learned token, position and
/// segment embeddings.
pub struct TransformerEncoder {
    config: EncoderConfig,
    token_emb: usize,
    pos_emb: usize,
    seg_emb: usize,
    emb_ln_g: usize,
    emb_ln_b: usize,
    layers: Vec<LayerParams>,
}

const LN_EPS: f64 = 1e-12;
const INIT_STD: f64 = 0.02;

fn lookup(store: &ParamStore, name: &str) -> Result<usize> {
    store
        .index(name)
        .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
}

impl TransformerEncoder {
    /// Registers freshly initialized parameters in `store`.
    pub fn init(config: EncoderConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.model_dim;
        let f = config.ffn_dim;
        let g = ParamGroup::Encoder;
        let mut add = |name: String, shape, init| store.add(name, g, shape, init, rng);
        add("encoder.token_embedding".into(), (config.vocab_size, d), Init::Normal(INIT_STD));
        add("encoder.position_embedding".into(), (config.max_positions, d), Init::Normal(INIT_STD));
        add("encoder.segment_embedding".into(), (2, d), Init::Normal(INIT_STD));
        add("encoder.embedding_ln.gain".into(), (1, d), Init::Ones);
        add("encoder.embedding_ln.bias".into(), (1, d), Init::Zeros);
        for l in 0..config.num_layers {
            let p = format!("encoder.layer{l}");
            for proj in ["query", "key", "value", "output"] {
                add(format!("{p}.{proj}.weight"), (d, d), Init::Normal(INIT_STD));
                add(format!("{p}.{proj}.bias"), (1, d), Init::Zeros);
            }
            add(format!("{p}.attention_ln.gain"), (1, d), Init::Ones);
            add(format!("{p}.attention_ln.bias"), (1, d), Init::Zeros);
            add(format!("{p}.ffn_in.weight"), (d, f), Init::Normal(INIT_STD));
            add(format!("{p}.ffn_in.bias"), (1, f), Init::Zeros);
            add(format!("{p}.ffn_out.weight"), (f, d), Init::Normal(INIT_STD));
            add(format!("{p}.ffn_out.bias"), (1, d), Init::Zeros);
            add(format!("{p}.ffn_ln.gain"), (1, d), Init::Ones);
            add(format!("{p}.ffn_ln.bias"), (1, d), Init::Zeros);
        }
        Self::bind(config, store)
    }

    /// Resolves parameter indices of an already populated store.
    pub fn bind(config: EncoderConfig, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let p = format!("encoder.layer{l}");
            let i = |n: &str| lookup(store, &format!("{p}.{n}"));
            layers.push(LayerParams {
                q_w: i("query.weight")?,
                q_b: i("query.bias")?,
                k_w: i("key.weight")?,
                k_b: i("key.bias")?,
                v_w: i("value.weight")?,
                v_b: i("value.bias")?,
                o_w: i("output.weight")?,
                o_b: i("output.bias")?,
                ln1_g: i("attention_ln.gain")?,
                ln1_b: i("attention_ln.bias")?,
                ff1_w: i("ffn_in.weight")?,
                ff1_b: i("ffn_in.bias")?,
                ff2_w: i("ffn_out.weight")?,
                ff2_b: i("ffn_out.bias")?,
                ln2_g: i("ffn_ln.gain")?,
                ln2_b: i("ffn_ln.bias")?,
            });
        }
        let enc = TransformerEncoder {
            token_emb: lookup(store, "encoder.token_embedding")?,
            pos_emb: lookup(store, "encoder.position_embedding")?,
            seg_emb: lookup(store, "encoder.segment_embedding")?,
            emb_ln_g: lookup(store, "encoder.embedding_ln.gain")?,
            emb_ln_b: lookup(store, "encoder.embedding_ln.bias")?,
            layers,
            config,
        };
        let tok = &store.values()[enc.token_emb];
        if tok.dim() != (enc.config.vocab_size, enc.config.model_dim) {
            return Err(Error::Checkpoint(format!(
                "token embedding shape {:?} disagrees with the encoder config",
                tok.dim()
            )));
        }
        Ok(enc)
    }

    fn linear(tape: &mut Tape, x: Var, w: usize, b: usize) -> Var {
        let w = tape.param(w);
        let b = tape.param(b);
        let xw = tape.matmul(x, w);
        tape.add_row(xw, b)
    }
}

impl EncoderBackend for TransformerEncoder {
    fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn forward(
        &self,
        tape: &mut Tape,
        ids: &[u32],
        segment_split: usize,
        mut dropout: Option<&mut Dropout>,
    ) -> Result<EncodedWindow> {
        let cfg = &self.config;
        let len = ids.len();
        if len == 0 || len > cfg.max_positions {
            return Err(Error::Config(format!(
                "window length {len} outside 1..={}",
                cfg.max_positions
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(Error::Config(format!("token id {bad} outside the vocabulary")));
        }
        let tok_table = tape.param(self.token_emb);
        let pos_table = tape.param(self.pos_emb);
        let seg_table = tape.param(self.seg_emb);
        let tok = tape.gather_rows(tok_table, ids.iter().map(|&i| i as usize).collect());
        let pos = tape.gather_rows(pos_table, (0..len).collect());
        let seg = tape.gather_rows(
            seg_table,
            (0..len).map(|p| usize::from(p >= segment_split)).collect(),
        );
        let x = tape.add(tok, pos);
        let x = tape.add(x, seg);
        let g = tape.param(self.emb_ln_g);
        let b = tape.param(self.emb_ln_b);
        let mut x = tape.layer_norm(x, g, b, LN_EPS);
        if let Some(d) = dropout.as_deref_mut() {
            x = d.apply(tape, x);
        }

        let head_dim = cfg.head_dim();
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut attention = Vec::with_capacity(self.layers.len());
        for lp in &self.layers {
            let q = Self::linear(tape, x, lp.q_w, lp.q_b);
            let k = Self::linear(tape, x, lp.k_w, lp.k_b);
            let v = Self::linear(tape, x, lp.v_w, lp.v_b);
            let mut probs = Vec::with_capacity(cfg.num_heads);
            let mut contexts = Vec::with_capacity(cfg.num_heads);
            for h in 0..cfg.num_heads {
                let qh = tape.slice_cols(q, h * head_dim, head_dim);
                let kh = tape.slice_cols(k, h * head_dim, head_dim);
                let vh = tape.slice_cols(v, h * head_dim, head_dim);
                let kt = tape.transpose(kh);
                let scores = tape.matmul(qh, kt);
                let scores = tape.scale(scores, scale);
                let p = tape.softmax_rows(scores);
                probs.push(p);
                contexts.push(tape.matmul(p, vh));
            }
            attention.push(probs);
            let joined = tape.concat_cols(contexts);
            let o_w = tape.param(lp.o_w);
            let attn_out = tape.matmul(joined, o_w);
            let o_b = tape.param(lp.o_b);
            let mut attn_out = tape.add_row(attn_out, o_b);
            if let Some(d) = dropout.as_deref_mut() {
                attn_out = d.apply(tape, attn_out);
            }
            let res = tape.add(x, attn_out);
            let g = tape.param(lp.ln1_g);
            let b = tape.param(lp.ln1_b);
            let h1 = tape.layer_norm(res, g, b, LN_EPS);

            let ff = Self::linear(tape, h1, lp.ff1_w, lp.ff1_b);
            let ff = tape.gelu(ff);
            let mut ff = Self::linear(tape, ff, lp.ff2_w, lp.ff2_b);
            if let Some(d) = dropout.as_deref_mut() {
                ff = d.apply(tape, ff);
            }
            let res = tape.add(h1, ff);
            let g = tape.param(lp.ln2_g);
            let b = tape.param(lp.ln2_b);
            x = tape.layer_norm(res, g, b, LN_EPS);
        }
        Ok(EncodedWindow {
            embeddings: x,
            attention,
        })
    }
}

/// Materialized encoder output for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    pub embeddings: Array2<f64>,
    /// layers × heads × L × L.
    pub attention_stack: Array4<f64>,
}

impl EncoderOutput {
    fn from_tape(tape: &Tape, enc: &EncodedWindow) -> Self {
        let embeddings = tape.value(enc.embeddings).clone();
        let layers = enc.attention.len();
        let heads = enc.attention.first().map_or(0, Vec::len);
        let len = embeddings.nrows();
        let mut attention_stack = Array4::zeros((layers, heads, len, len));
        for (l, per_head) in enc.attention.iter().enumerate() {
            for (h, &p) in per_head.iter().enumerate() {
                attention_stack
                    .slice_mut(ndarray::s![l, h, .., ..])
                    .assign(tape.value(p));
            }
        }
        EncoderOutput {
            embeddings,
            attention_stack,
        }
    }
}

/// Dropout-free forward pass of a single window.
pub fn encode(window: &Window, encoder: &dyn EncoderBackend, store: &ParamStore) -> Result<EncoderOutput> {
    let mut tape = Tape::new(store.values());
    let out = encoder.forward(&mut tape, &window.ids, window.prefix_len, None)?;
    let result = EncoderOutput::from_tape(&tape, &out);
    if result.embeddings.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoder embeddings".into()));
    }
    Ok(result)
}

/// Tape handles for a whole sequence after the window merge.
#[derive(Clone, Debug)]
pub struct MergedSequence {
    /// One row per position of the un-windowed sequence.
    pub embeddings: Var,
    pub windows: Vec<EncodedWindow>,
}

/// Row groups averaging each un-windowed position over the windows holding it.
pub fn merge_groups(seq: &EntityGuidedSequence) -> RowGroups {
    let mut base = Vec::with_capacity(seq.windows.len());
    let mut acc = 0;
    for w in &seq.windows {
        base.push(acc);
        acc += w.len();
    }
    (0..seq.ids.len())
        .map(|p| {
            let hits = seq.locate(p);
            let weight = 1.0 / hits.len() as f64;
            hits.into_iter().map(|(w, wp)| (base[w] + wp, weight)).collect()
        })
        .collect()
}

/// Encodes every window of `seq` and averages embeddings where windows overlap.
pub fn forward_sequence(
    tape: &mut Tape,
    seq: &EntityGuidedSequence,
    encoder: &dyn EncoderBackend,
    mut dropout: Option<&mut Dropout>,
) -> Result<MergedSequence> {
    let mut windows = Vec::with_capacity(seq.windows.len());
    for w in &seq.windows {
        windows.push(encoder.forward(tape, &w.ids, w.prefix_len, dropout.as_deref_mut())?);
    }
    let embeddings = if windows.len() == 1 {
        windows[0].embeddings
    } else {
        let parts = windows.iter().map(|w| w.embeddings).collect();
        let stacked = tape.concat_rows(parts);
        tape.row_combine(stacked, merge_groups(seq))
    };
    Ok(MergedSequence {
        embeddings,
        windows,
    })
}

/// Materialized windowed encoding: merged embeddings in sequence
/// coordinates plus each window's own output and document offset.
#[derive(Clone, Debug, PartialEq)]
pub struct MergedOutput {
    pub embeddings: Array2<f64>,
    pub windows: Vec<(usize, EncoderOutput)>,
}

pub fn encode_with_windows(
    seq: &EntityGuidedSequence,
    encoder: &dyn EncoderBackend,
    store: &ParamStore,
) -> Result<MergedOutput> {
    let mut tape = Tape::new(store.values());
    let merged = forward_sequence(&mut tape, seq, encoder, None)?;
    let embeddings = tape.value(merged.embeddings).clone();
    if embeddings.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoder embeddings".into()));
    }
    let windows = seq
        .windows
        .iter()
        .zip(&merged.windows)
        .map(|(w, enc)| (w.offset, EncoderOutput::from_tape(&tape, enc)))
        .collect();
    Ok(MergedOutput { embeddings, windows })
}
