//! Binary checkpoint: magic, version, a JSON header describing the model,
//! tokenizer, relation inventory and parameter layout, then every
//! parameter as little-endian f64 in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::Mat;
use crate::corpus::LabelVocabulary;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::model::{Model, ModelConfig};
use crate::params::{ParamSpec, ParamStore};
use crate::sequencer::WordTokenizer;

const MAGIC: &[u8; 8] = b"DOCRELCK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub tokenizer: WordTokenizer,
    pub relations: LabelVocabulary,
    /// Relation threshold tuned on held-out scores, if any.
    pub tuned_threshold: Option<f64>,
    pub store: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    tokens: Vec<String>,
    relations: Vec<String>,
    tuned_threshold: Option<f64>,
    params: Vec<ParamHeader>,
}

#[derive(Serialize, Deserialize)]
struct ParamHeader {
    #[serde(flatten)]
    spec: ParamSpec,
    rows: usize,
    cols: usize,
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

impl Checkpoint {
    pub fn model(&self) -> Result<Model> {
        Model::bind(self.config.clone(), &self.store)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.config.clone(),
            tokens: self.tokenizer.tokens().to_vec(),
            relations: self.relations.names().to_vec(),
            tuned_threshold: self.tuned_threshold,
            params: self
                .store
                .specs()
                .iter()
                .zip(self.store.values())
                .map(|(spec, v)| ParamHeader {
                    spec: spec.clone(),
                    rows: v.nrows(),
                    cols: v.ncols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.store.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in self.store.values() {
            for x in v.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let b = &mut bytes;
        if take(b, 8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(take(b, 4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(take(b, 8)?.try_into().expect("8 bytes")) as usize;
        let header: Header = serde_json::from_slice(take(b, len)?)
            .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let mut store = ParamStore::new();
        for p in header.params {
            let raw = take(b, 8 * p.rows * p.cols)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let value = Mat::from_shape_vec((p.rows, p.cols), data).expect("length");
            if store.index(&p.spec.name).is_some() {
                return Err(Error::Checkpoint(format!("duplicate parameter `{}`", p.spec.name)));
            }
            store.push(p.spec, value);
        }
        if !b.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", b.len())));
        }
        let checkpoint = Checkpoint {
            tokenizer: WordTokenizer::from_tokens(header.tokens)?,
            relations: LabelVocabulary::from_names(header.relations)?,
            config: header.model,
            tuned_threshold: header.tuned_threshold,
            store,
        };
        if checkpoint.relations.len() != checkpoint.config.num_relations {
            return Err(Error::Checkpoint("relation inventory disagrees with the model".into()));
        }
        checkpoint.model()?;
        Ok(checkpoint)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
