//! Allocation-only core of a multi-agent compliance verifier for APPI Article 16.
//!
//! Everything here is pure: domain types, the statute oracle, the rule-based
//! agent backend, coordinator synthesis, response parsing, prompt rendering,
//! corpus generation and evaluation metrics. IO, HTTP and threading live in
//! the `appi-verify` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod backend;
pub mod coordinator;
pub mod domain;
pub mod forge;
pub mod metrics;
pub mod oracle;
pub mod parse;
pub mod prompt;

pub use backend::{AgentBackend, BackendError, RuleBackend, RuleBackendConfig};
pub use coordinator::{decide_single, synthesize, CoordinatorConfig, SynthesisError};
pub use domain::{
    validate_case, AgentAnalysis, AgentRole, AgentVerdict, CaseCategory, ComplianceStatus, DataTransferAction,
    Exception, LabeledCase, Plan, StructuredFacts, SynthesisDecision, Validation,
};
pub use forge::{generate, ForgeError, GeneratorConfig, TemplatePack};
pub use metrics::{evaluate, EvaluationReport};
pub use oracle::{classify, classify_action, Basis, OracleVerdict};
pub use parse::parse_analysis;
pub use prompt::{render_prompt, PromptTemplate};
