//! Transaction-graph node embeddings and ranking fusion.
//!
//! A walk strategy (see [`walks`]) turns the preprocessed graph into token
//! sequences, the skip-gram trainer (see [`sgns`]) turns sequences into
//! vectors, and the pieces here assemble address-keyed tables, fill in
//! addresses the graph preprocessing removed, and fuse candidate rankings
//! produced from different embeddings.

pub mod sgns;
pub mod walks;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::Deserialize;

use crate::eval::RankedResult;
use crate::profiles::{FeatureKind, FeatureVector};
use crate::txgraph::TransactionGraph;
use crate::types::Address;

pub use sgns::train_skipgram;
pub use walks::{
    degree_bucket, walk_strategies, walk_strategy, DiffusionWalks, RoleWalks, WalkCorpus,
    WalkParams, WalkStrategy,
};

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("no nonempty training sequences")]
    EmptySequences,
    #[error("unknown walk strategy {0:?}: expected \"diffusion\" or \"role\"")]
    UnknownStrategy(String),
    #[error("invalid walk parameters: {0}")]
    InvalidParams(String),
    #[error("rankings do not cover the same candidates: {0}")]
    MismatchedCandidates(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed embedding row {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
}

/// Address-keyed embedding vectors plus the provenance needed to reproduce
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    /// Walk strategy name ("diffusion" or "role").
    pub algorithm: String,
    pub params: WalkParams,
    pub vectors: BTreeMap<Address, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.params.dim
    }

    /// Sidecar payload describing how the table was produced.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "algorithm": self.algorithm,
            "seed": self.params.seed,
            "params": self.params,
        })
    }

    /// Reinterprets the table as evaluation feature vectors.
    pub fn feature_vectors(&self) -> Vec<FeatureVector> {
        self.vectors
            .iter()
            .map(|(a, v)| FeatureVector {
                address: *a,
                kind: FeatureKind::Embedding,
                values: v.clone(),
            })
            .collect()
    }
}

/// Walks the graph with the named strategy and trains vectors for every
/// node. Single-worker runs are bit-reproducible for a fixed seed.
pub fn embed_graph(
    g: &TransactionGraph,
    strategy: &str,
    params: &WalkParams,
    workers: usize,
) -> Result<EmbeddingTable, EmbeddingError> {
    let strategy_impl = walk_strategy(strategy)?;
    let corpus = strategy_impl.generate(g, params)?;
    let rows = train_skipgram(&corpus, g.node_count(), params, workers)?;
    let vectors = g
        .addresses()
        .iter()
        .zip(rows)
        .map(|(a, row)| (*a, row.into_iter().map(f64::from).collect()))
        .collect();
    Ok(EmbeddingTable { algorithm: strategy.to_string(), params: params.clone(), vectors })
}

/// Gives every address missing from the table the component-wise mean of
/// the vectors that are present, so downstream ranking can score addresses
/// the graph preprocessing removed.
pub fn complete_embeddings(table: &EmbeddingTable, all_addresses: &BTreeSet<Address>) -> EmbeddingTable {
    assert!(!table.vectors.is_empty(), "cannot complete an empty table");
    let dim = table.dim();
    let mut mean = vec![0.0f64; dim];
    for vector in table.vectors.values() {
        for (m, v) in mean.iter_mut().zip(vector) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= table.vectors.len() as f64;
    }
    let mut completed = table.clone();
    for address in all_addresses {
        completed.vectors.entry(*address).or_insert_with(|| mean.clone());
    }
    completed
}

/// Harmonic mean of two ranks: 2 / (1/a + 1/b). Symmetric, and improving
/// either rank can only lower (improve) the score.
pub fn harmonic_rank(rank_a: usize, rank_b: usize) -> f64 {
    2.0 / (1.0 / rank_a as f64 + 1.0 / rank_b as f64)
}

/// Fuses two rankings of the same candidate set for the same target:
/// candidates are re-ranked by the harmonic mean of their two ranks,
/// ascending, ties broken by address.
pub fn fuse_rankings(a: &RankedResult, b: &RankedResult) -> Result<RankedResult, EmbeddingError> {
    if a.target != b.target || a.truth != b.truth {
        return Err(EmbeddingError::MismatchedCandidates(format!(
            "targets or truths differ: {} vs {}",
            a.target, b.target
        )));
    }
    let rank_in_b: BTreeMap<Address, usize> = b
        .ordered
        .iter()
        .enumerate()
        .map(|(i, (addr, _))| (*addr, i + 1))
        .collect();
    if a.ordered.len() != b.ordered.len() {
        return Err(EmbeddingError::MismatchedCandidates(format!(
            "candidate counts differ: {} vs {}",
            a.ordered.len(),
            b.ordered.len()
        )));
    }
    let mut fused: Vec<(Address, f64)> = Vec::with_capacity(a.ordered.len());
    for (i, (addr, _)) in a.ordered.iter().enumerate() {
        let Some(rb) = rank_in_b.get(addr) else {
            return Err(EmbeddingError::MismatchedCandidates(format!(
                "{addr} is ranked on one side only"
            )));
        };
        fused.push((*addr, harmonic_rank(i + 1, *rb)));
    }
    fused.sort_by(|(x, sx), (y, sy)| sx.partial_cmp(sy).expect("finite scores").then(x.cmp(y)));
    let rank = fused
        .iter()
        .position(|(addr, _)| *addr == a.truth)
        .expect("truth is a candidate on both sides")
        + 1;
    Ok(RankedResult { target: a.target, truth: a.truth, n: fused.len(), rank, ordered: fused })
}

/// Fuses two result lists pairwise, matching entries by target address.
pub fn fuse_ranking_lists(
    a: &[RankedResult],
    b: &[RankedResult],
) -> Result<Vec<RankedResult>, EmbeddingError> {
    let by_target: BTreeMap<Address, &RankedResult> =
        b.iter().map(|r| (r.target, r)).collect();
    if a.len() != b.len() || by_target.len() != b.len() {
        return Err(EmbeddingError::MismatchedCandidates(
            "result lists do not pair up one-to-one by target".into(),
        ));
    }
    a.iter()
        .map(|ra| {
            let rb = by_target.get(&ra.target).ok_or_else(|| {
                EmbeddingError::MismatchedCandidates(format!("no counterpart for target {}", ra.target))
            })?;
            fuse_rankings(ra, rb)
        })
        .collect()
}

/// `address,v0..v{dim-1}` rows, addresses ascending.
pub fn write_embeddings_csv<W: Write>(writer: W, table: &EmbeddingTable) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["address".to_string()];
    header.extend((0..table.dim()).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(csv_io)?;
    for (address, vector) in &table.vectors {
        let mut record = vec![address.to_string()];
        record.extend(vector.iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(csv_io)?;
    }
    w.flush()
}

/// Reads vectors back; provenance lives in the metadata sidecar, not the CSV.
pub fn read_embeddings_csv<R: Read>(reader: R) -> Result<BTreeMap<Address, Vec<f64>>, EmbeddingError> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers().map_err(|e| EmbeddingError::MalformedRow {
        line: 1,
        reason: e.to_string(),
    })?;
    if headers.get(0) != Some("address") {
        return Err(EmbeddingError::MalformedRow {
            line: 1,
            reason: format!("expected header to start with \"address\", got {headers:?}"),
        });
    }
    let dim = headers.len() - 1;
    let mut vectors = BTreeMap::new();
    for (idx, row) in r.records().enumerate() {
        let line = idx as u64 + 2;
        let row = row.map_err(|e| EmbeddingError::MalformedRow { line, reason: e.to_string() })?;
        let malformed = |reason: String| EmbeddingError::MalformedRow { line, reason };
        if row.len() != dim + 1 {
            return Err(malformed(format!("expected {} fields, got {}", dim + 1, row.len())));
        }
        let address = Address::parse(row.get(0).unwrap_or_default())
            .map_err(|e| malformed(e.to_string()))?;
        let mut vector = Vec::with_capacity(dim);
        for field in row.iter().skip(1) {
            let value: f64 = field.parse().map_err(|_| malformed(format!("bad number {field:?}")))?;
            if !value.is_finite() {
                return Err(malformed(format!("non-finite component {value}")));
            }
            vector.push(value);
        }
        vectors.insert(address, vector);
    }
    Ok(vectors)
}

fn csv_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

/// Deserialization helper mirroring [`write_embeddings_csv`]'s sidecar.
#[derive(Debug, Clone, Deserialize)]
pub struct EmbeddingSidecar {
    pub algorithm: String,
    pub seed: u64,
    pub params: WalkParams,
}
