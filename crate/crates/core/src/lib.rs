//! Energy-aware retrieval and classification of requirement dependencies.
//!
//! The crate shortlists candidate requirement pairs with either a typed
//! knowledge graph over extracted entities ([`kg`]) or a dense cosine index
//! ([`vsr`]), classifies each shortlisted pair as Conflict or Neutral through
//! a chat-completion endpoint with majority voting ([`infer`]), and accounts
//! for the energy, latency, and carbon cost of every stage ([`sustain`]).
//! Retrieval and classification quality are scored with Recall@K and
//! macro-averaged precision/recall/F1 ([`metrics`]).
//!
//! [`pipeline`] wires the stages into resumable, config-driven experiment
//! runs; the `reqdep` binary exposes them as subcommands.

pub mod config;
pub mod corpus;
pub mod error;
pub mod extract;
pub mod infer;
pub mod kg;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod sustain;
pub mod vsr;

pub use error::{Error, Result};
