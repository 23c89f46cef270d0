//! Lemmatization with character-level encoder-decoders conditioned on
//! sentence context, plus edit-tree classification baselines and the
//! evaluation tooling to compare them.

pub mod context;
pub mod corpus;
pub mod edittree;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod transducer;

pub use error::{Error, Result};

#[cfg(test)]
mod testutil;
