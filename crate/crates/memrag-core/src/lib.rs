//! Editable memory graph with retrieval driven by a learned traversal policy.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation: the memory data model, hashed text embeddings, TransE, the
//! three-layer memory graph and its edits, the traversal environment, the
//! policy network, answer metrics, a deterministic answer oracle and the
//! synthetic corpus generator. File formats, HTTP and the CLI live in the
//! `memrag` crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod embedding;
pub mod example;
pub mod env;
pub mod generation;
pub mod graph;
pub mod memory;
pub mod metrics;
pub mod pipeline;
pub mod policy;
pub mod synth;
pub mod taxonomy;
pub mod text;
pub mod transe;

pub use embedding::{cosine, embed_text, Vector, TEXT_DIM};
pub use env::{activate, extract_question_anchor, run_episode, Action, EnvConfig, EnvState};
pub use generation::{AnswerCache, AnswerTemplate, Generator, MockOracle};
pub use graph::{EditOutcome, Emg};
pub use memory::{EditCommand, EditKind, MemoryRecord, QaPair, Session, Timestamp, Triple};
pub use policy::{PolicyNet, TrainConfig};
pub use transe::{train_transe, TransEConfig, TransEModel};
