//! Node-sequence generation for embedding training.
//!
//! Two strategies produce the corpora the skip-gram trainer consumes:
//!
//! * **Diffusion walks**: from each root, grow a random diffusion tree of
//!   `cover_size` nodes, then emit its Euler tour (every tree edge walked
//!   down and back up). Nearby nodes land in each other's windows, giving
//!   proximity-preserving embeddings.
//! * **Role walks**: plain uniform random walks, but each node contributes
//!   its structural role token — the floor(log2(degree)) bucket — as the
//!   context, while updates still attribute to the concrete node. Nodes
//!   with similar connectivity patterns end up close, regardless of where
//!   they sit in the graph.
//!
//! Every walk draws from its own RNG, seeded from (global seed, root node,
//! walk index), so corpora are identical no matter how generation is
//! scheduled.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingError;
use crate::txgraph::TransactionGraph;

/// Hyperparameters shared by walk generation and training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    /// Embedding dimension.
    pub dim: usize,
    pub walks_per_node: usize,
    /// Diffusion-tree size for diffusion walks.
    pub cover_size: usize,
    /// Steps per walk for role walks.
    pub walk_length: usize,
    /// Max skip-gram context distance (the per-center radius is drawn
    /// uniformly from 1..=window).
    pub window: usize,
    /// Negative samples per positive pair.
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate_initial: f64,
    pub seed: u64,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            dim: 128,
            walks_per_node: 10,
            cover_size: 40,
            walk_length: 40,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate_initial: 0.025,
            seed: 0,
        }
    }
}

impl WalkParams {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        for (name, value) in [
            ("dim", self.dim),
            ("walks_per_node", self.walks_per_node),
            ("cover_size", self.cover_size),
            ("walk_length", self.walk_length),
            ("window", self.window),
            ("negatives", self.negatives),
            ("epochs", self.epochs),
        ] {
            if value < 1 {
                return Err(EmbeddingError::InvalidParams(format!("{name} must be at least 1")));
            }
        }
        if !(self.learning_rate_initial > 0.0) {
            return Err(EmbeddingError::InvalidParams("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// One corpus position: the node an update attributes to, and the token it
/// exposes as context. Diffusion walks use the node itself as the token;
/// role walks use the node's degree bucket.
pub type WalkStep = (u32, u32);

#[derive(Debug, Clone, PartialEq)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<WalkStep>>,
    /// Context-token id space size (node count for diffusion walks, number
    /// of degree buckets for role walks).
    pub token_count: usize,
}

/// A pluggable sequence generator, selectable by registry name.
pub trait WalkStrategy {
    fn name(&self) -> &'static str;
    fn generate(&self, g: &TransactionGraph, params: &WalkParams)
        -> Result<WalkCorpus, EmbeddingError>;
}

/// Deterministic per-walk seed: mixes the global seed with the root node
/// and walk index through the splitmix64 finalizer, so any scheduling of
/// walk generation sees the same streams.
pub(crate) fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// floor(log2(degree)) bucket; degree must be ≥ 1.
pub fn degree_bucket(degree: usize) -> u32 {
    debug_assert!(degree >= 1);
    usize::BITS - 1 - degree.leading_zeros()
}

pub struct DiffusionWalks;

impl WalkStrategy for DiffusionWalks {
    fn name(&self) -> &'static str {
        "diffusion"
    }

    fn generate(
        &self,
        g: &TransactionGraph,
        params: &WalkParams,
    ) -> Result<WalkCorpus, EmbeddingError> {
        params.validate()?;
        let n = g.node_count();
        if n == 0 {
            return Err(EmbeddingError::EmptyGraph);
        }
        let cover = if params.cover_size > n {
            log::warn!(
                "diffusion cover size {} exceeds the graph's {} nodes; clamping",
                params.cover_size,
                n
            );
            n
        } else {
            params.cover_size
        };
        let mut walks = Vec::with_capacity(n * params.walks_per_node);
        for root in 0..n as u32 {
            for walk in 0..params.walks_per_node {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(params.seed, u64::from(root), walk as u64));
                let tour = diffusion_tour(g, root, cover, &mut rng);
                walks.push(tour.into_iter().map(|v| (v, v)).collect());
            }
        }
        Ok(WalkCorpus { walks, token_count: n })
    }
}

/// Grows a random diffusion tree of `cover` nodes rooted at `root`, then
/// returns its Euler tour (2·cover − 1 node visits, children shuffled).
fn diffusion_tour(g: &TransactionGraph, root: u32, cover: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut in_tree = vec![false; g.node_count()];
    in_tree[root as usize] = true;
    let mut members = vec![root];
    let mut children: Vec<Vec<u32>> = vec![Vec::new(); g.node_count()];
    while members.len() < cover {
        // Sample a tree node, then one of its neighbors; adopt the neighbor
        // if it is new. Retries are part of the diffusion dynamics: nodes
        // with more unexplored edges get adopted sooner.
        let u = members[rng.gen_range(0..members.len())];
        let candidates = g.neighbors(u);
        if candidates.is_empty() {
            break; // isolated root; nothing to grow
        }
        let v = candidates[rng.gen_range(0..candidates.len())];
        if !in_tree[v as usize] {
            in_tree[v as usize] = true;
            members.push(v);
            children[u as usize].push(v);
        }
    }

    // Euler tour: emit a node on entry and again after each child returns.
    let mut tour = Vec::with_capacity(2 * members.len() - 1);
    let mut stack: Vec<(u32, usize)> = vec![(root, 0)];
    for c in &mut children {
        c.shuffle(rng);
    }
    tour.push(root);
    while let Some((node, next_child)) = stack.last_mut() {
        let node = *node;
        if let Some(&child) = children[node as usize].get(*next_child) {
            *next_child += 1;
            stack.push((child, 0));
            tour.push(child);
        } else {
            stack.pop();
            if let Some((parent, _)) = stack.last() {
                tour.push(*parent);
            }
        }
    }
    tour
}

pub struct RoleWalks;

impl WalkStrategy for RoleWalks {
    fn name(&self) -> &'static str {
        "role"
    }

    fn generate(
        &self,
        g: &TransactionGraph,
        params: &WalkParams,
    ) -> Result<WalkCorpus, EmbeddingError> {
        params.validate()?;
        let n = g.node_count();
        if n == 0 {
            return Err(EmbeddingError::EmptyGraph);
        }
        let buckets: Vec<u32> = (0..n as u32).map(|v| degree_bucket(g.degree(v).max(1))).collect();
        let token_count = buckets.iter().max().copied().unwrap_or(0) as usize + 1;
        let mut walks = Vec::with_capacity(n * params.walks_per_node);
        for root in 0..n as u32 {
            for walk in 0..params.walks_per_node {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(params.seed, u64::from(root), walk as u64));
                let mut seq = Vec::with_capacity(params.walk_length);
                let mut current = root;
                seq.push((current, buckets[current as usize]));
                for _ in 1..params.walk_length {
                    let neighbors = g.neighbors(current);
                    if neighbors.is_empty() {
                        break;
                    }
                    current = neighbors[rng.gen_range(0..neighbors.len())];
                    seq.push((current, buckets[current as usize]));
                }
                walks.push(seq);
            }
        }
        Ok(WalkCorpus { walks, token_count })
    }
}

/// All walk strategies, in registry order.
pub fn walk_strategies() -> Vec<Box<dyn WalkStrategy>> {
    vec![Box::new(DiffusionWalks), Box::new(RoleWalks)]
}

/// Looks a strategy up by name ("diffusion" or "role").
pub fn walk_strategy(name: &str) -> Result<Box<dyn WalkStrategy>, EmbeddingError> {
    walk_strategies()
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| EmbeddingError::UnknownStrategy(name.to_string()))
}
