//! Document-level relation extraction with entity-guided input sequences,
//! a bilinear relation head, and evidence prediction guided by the
//! encoder's own attention probabilities.

pub mod autograd;
pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod error;
mod fsutil;
pub mod heads;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod sequencer;
pub mod synth;
pub mod toolkit;

pub use error::{Error, Result};
