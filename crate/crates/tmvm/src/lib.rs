//! File formats, run configuration and commands around `tmvm-core`.
//!
//! Corpora are JSON-lines manifests with raw f32 blobs ([`corpus_io`]);
//! training writes CSV logs, binary checkpoints and JSON/plain-text reports
//! ([`artifacts`]) into a run directory named by the config hash and seed.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod corpus_io;
pub mod error;

pub use commands::{run, Command, Outcome};
pub use config::RunConfig;
pub use error::{Error, Result};
