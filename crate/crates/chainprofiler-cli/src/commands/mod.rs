pub mod common;
pub mod embed;
pub mod evaluate;
pub mod features;
pub mod fingerprint;
pub mod graph;
pub mod ingest;
pub mod pipeline;
pub mod rank;
pub mod tornado;
