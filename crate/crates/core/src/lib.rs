//! Session-based next-item recommendation with frequent attribute pattern memory.
//!
//! The pipeline has five stages, each living in its own module:
//!
//! * [`sessions`] parses click logs, applies core filtering and day-based
//!   splits, and turns sessions into item and attribute transition graphs.
//! * [`miner`] mines small frequent cyclic attribute patterns with a
//!   restricted gSpan and drops patterns contained in larger ones (VF2).
//! * [`retrieval`] indexes the mined patterns and picks the most similar
//!   ones for a session by Jaccard similarity of node labels.
//! * [`model`] encodes patterns and sessions with relational graph
//!   attention, memory attention, gating and a transformer block, then
//!   scores every item by dot product. It runs on the small reverse-mode
//!   engine in [`autodiff`].
//! * [`training`] and [`eval`] optimize the model and measure it.
//!
//! [`cli`] wires the stages into the `attrpat` binary, and [`synth`]
//! generates small reproducible corpora for tests and examples.

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod eval;
pub mod miner;
pub mod model;
pub mod retrieval;
pub mod sessions;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
