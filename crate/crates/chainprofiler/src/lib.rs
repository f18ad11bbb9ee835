//! Analysis toolkit for Ethereum address activity: quasi-identifier feature
//! profiles, transaction-graph embeddings, pair-ranking evaluation, mixer
//! linkability heuristics, and balance fingerprint measurements.
//!
//! The [`ingest`] module defines the corpus formats everything else consumes.
//! [`profiles`] and [`embeddings`] turn activity into comparable feature
//! vectors, [`eval`] scores how well those vectors expose known address
//! pairs, [`tornado`] links mixer deposits to withdraws, and [`fingerprint`]
//! quantifies how balance digits leak identity.

pub mod embeddings;
pub mod eval;
pub mod fingerprint;
pub mod ingest;
pub mod profiles;
pub mod tornado;
pub mod txgraph;
pub mod types;
