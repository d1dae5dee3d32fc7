//! Switch-matrix harness for measuring how a chat model's performance drifts
//! when it has to continue a dialogue whose earlier assistant turns were
//! written by a different model.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the shared domain types (episodes, transcripts, cell results).
//! * [`backend`] talks to chat-completion endpoints, plus a deterministic mock.
//! * [`cache`] is the write-once on-disk store of prefix-model generations.
//! * [`tasks`] contains the CoQA and Multi-IF adapters and scorers.
//! * [`runner`] executes the K×K prefix/suffix matrix.
//! * [`stats`] computes paired BCa intervals, the additive factorization and correlations.
//! * [`config`], [`commands`] and [`report`] make up the command-line surface.

pub mod backend;
pub mod cache;
pub mod commands;
pub mod config;
pub mod digest;
pub mod model;
pub mod report;
pub mod runner;
pub mod stats;
pub mod tasks;

pub use model::{CellId, CellResult, Episode, Gold, Message, ModelId, Role, Task, Transcript};

/// Version string embedded in every file this tool writes.
pub const TOOL_VERSION: &str = concat!("switchbench ", env!("CARGO_PKG_VERSION"));

/// Schema version for results, matrix, factor and report files.
pub const SCHEMA_VERSION: u32 = 1;
