//! Prover/verifier revision loop for LLM theorem proving.
//!
//! A statement goes through alternating prover and verifier agents until a
//! proof is accepted, the iteration limit is hit, or transient backend
//! failures exhaust the run's budget. Accepted proofs are formalized,
//! machine-checked and put in front of a human who only confirms that the
//! formal premises and conclusion restate the original ones.

pub mod agents;
pub mod archive;
pub mod backend;
pub mod certification;
pub mod config;
pub mod engine;
pub mod error;
pub mod model;
pub mod record;
pub mod report;
pub mod research;
pub mod wire;

pub use engine::{difficulty_index, revise_bindings, Engine, RunTrace};
pub use model::*;
