//! Named parameter storage shared by the encoder and the readout heads.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Encoder,
    RelationHead,
    RelationEmbedding,
    EvidenceHead,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub group: ParamGroup,
    /// Whether decoupled weight decay applies.
    pub decay: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    specs: Vec<ParamSpec>,
    values: Vec<Mat>,
    by_name: HashMap<String, usize>,
}

pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        group: ParamGroup,
        shape: (usize, usize),
        init: Init,
        rng: &mut impl Rng,
    ) -> usize {
        let name = name.into();
        let value = match init {
            Init::Zeros => Mat::zeros(shape),
            Init::Ones => Mat::ones(shape),
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).expect("finite std");
                Mat::from_shape_simple_fn(shape, || dist.sample(rng))
            }
        };
        let decay = matches!(init, Init::Normal(_)) && shape.0 > 1;
        self.push(ParamSpec { name, group, decay }, value)
    }

    pub fn push(&mut self, spec: ParamSpec, value: Mat) -> usize {
        assert!(
            !self.by_name.contains_key(&spec.name),
            "duplicate parameter {}",
            spec.name
        );
        let idx = self.values.len();
        self.by_name.insert(spec.name.clone(), idx);
        self.specs.push(spec);
        self.values.push(value);
        idx
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn values(&self) -> &[Mat] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Mat] {
        &mut self.values
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.index(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Mat> {
        self.index(name).map(move |i| &mut self.values[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Mat::len).sum()
    }
}
