//! Std companion to `appi-verify-core`: model backends, concurrent runtime,
//! corpus files, run directories and the command-line interface.

pub mod batch;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod llm;
pub mod manifest;
pub mod report;
pub mod runtime;

pub use appi_verify_core as core;
pub use config::{AppConfig, BackendKind};
pub use runtime::{Mode, RuntimeError, Verifier};
