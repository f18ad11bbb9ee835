//! Skip-gram-with-negative-sampling trainer over walk corpora.
//!
//! Input vectors live per node; output (context) vectors live per token, so
//! the same trainer serves both proximity corpora (token = node) and role
//! corpora (token = degree bucket). Weights sit in shared atomic storage:
//! with one worker updates are applied sequentially and training is
//! bit-reproducible for a fixed seed; with several workers they run
//! lock-free in parallel and results vary slightly between runs, which is
//! acceptable for evaluation but not for golden tests.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::walks::{derive_seed, WalkCorpus, WalkParams, WalkStep};
use super::EmbeddingError;

/// Seed-stream tags keeping trainer RNGs disjoint from walk RNGs (walk
/// streams are node ids, well below either tag).
const INIT_STREAM: u64 = 1 << 62;
const EPOCH_STREAM: u64 = 1 << 63;

/// Once the linear decay bottoms out, the learning rate stays at this
/// fraction of its initial value.
const MIN_LR_FRACTION: f64 = 1e-4;

struct SharedMatrix {
    bits: Vec<AtomicU32>,
    dim: usize,
}

impl SharedMatrix {
    fn random(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let spread = 0.5 / dim as f32;
        let bits = (0..rows * dim)
            .map(|_| AtomicU32::new(rng.gen_range(-spread..spread).to_bits()))
            .collect();
        SharedMatrix { bits, dim }
    }

    fn zeros(rows: usize, dim: usize) -> Self {
        let bits = (0..rows * dim).map(|_| AtomicU32::new(0f32.to_bits())).collect();
        SharedMatrix { bits, dim }
    }

    #[inline]
    fn get(&self, row: usize, col: usize) -> f32 {
        f32::from_bits(self.bits[row * self.dim + col].load(Ordering::Relaxed))
    }

    #[inline]
    fn set(&self, row: usize, col: usize, value: f32) {
        self.bits[row * self.dim + col].store(value.to_bits(), Ordering::Relaxed);
    }

    fn to_rows(&self) -> Vec<Vec<f32>> {
        self.bits
            .chunks(self.dim)
            .map(|chunk| chunk.iter().map(|b| f32::from_bits(b.load(Ordering::Relaxed))).collect())
            .collect()
    }
}

/// Cumulative unigram^(3/4) weights over context tokens, for negative
/// sampling by binary search.
fn negative_table(corpus: &WalkCorpus) -> Vec<f64> {
    let mut freq = vec![0u64; corpus.token_count];
    for walk in &corpus.walks {
        for (_, token) in walk {
            freq[*token as usize] += 1;
        }
    }
    let mut cumulative = Vec::with_capacity(freq.len());
    let mut acc = 0.0f64;
    for f in freq {
        acc += (f as f64).powf(0.75);
        cumulative.push(acc);
    }
    cumulative
}

#[inline]
fn sample_negative(cumulative: &[f64], rng: &mut ChaCha8Rng) -> u32 {
    let total = *cumulative.last().expect("nonempty token space");
    let r = rng.gen_range(0.0..total);
    cumulative.partition_point(|&c| c <= r) as u32
}

/// Trains node vectors against token contexts. Returns one `dim`-vector of
/// finite f32 per node; nodes that never appear in a walk keep their random
/// initialization.
pub fn train_skipgram(
    corpus: &WalkCorpus,
    node_count: usize,
    params: &WalkParams,
    workers: usize,
) -> Result<Vec<Vec<f32>>, EmbeddingError> {
    params.validate()?;
    assert!(workers >= 1, "need at least one worker");
    if node_count == 0 {
        return Err(EmbeddingError::EmptyGraph);
    }
    if corpus.walks.iter().all(|w| w.is_empty()) {
        return Err(EmbeddingError::EmptySequences);
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, INIT_STREAM, 0));
    let input = SharedMatrix::random(node_count, params.dim, &mut init_rng);
    let output = SharedMatrix::zeros(corpus.token_count, params.dim);
    let cumulative = negative_table(corpus);

    let positions_per_epoch: u64 = corpus.walks.iter().map(|w| w.len() as u64).sum();
    let total_positions = positions_per_epoch * params.epochs as u64;
    let processed = AtomicU64::new(0);

    for epoch in 0..params.epochs {
        if workers == 1 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                params.seed,
                EPOCH_STREAM | epoch as u64,
                0,
            ));
            train_shard(
                &mut corpus.walks.iter(),
                &mut rng,
                &input,
                &output,
                &cumulative,
                params,
                &processed,
                total_positions,
            );
        } else {
            std::thread::scope(|scope| {
                for worker in 0..workers {
                    let input = &input;
                    let output = &output;
                    let cumulative = &cumulative;
                    let processed = &processed;
                    let walks = &corpus.walks;
                    scope.spawn(move || {
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                            params.seed,
                            EPOCH_STREAM | epoch as u64,
                            worker as u64 + 1,
                        ));
                        let mut shard = walks.iter().skip(worker).step_by(workers);
                        train_shard(
                            &mut shard,
                            &mut rng,
                            input,
                            output,
                            cumulative,
                            params,
                            processed,
                            total_positions,
                        );
                    });
                }
            });
        }
    }

    let rows = input.to_rows();
    debug_assert!(rows.iter().flatten().all(|v| v.is_finite()));
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn train_shard<'a>(
    walks: &mut dyn Iterator<Item = &'a Vec<WalkStep>>,
    rng: &mut ChaCha8Rng,
    input: &SharedMatrix,
    output: &SharedMatrix,
    cumulative: &[f64],
    params: &WalkParams,
    processed: &AtomicU64,
    total_positions: u64,
) {
    let dim = params.dim;
    let mut pull = vec![0f32; dim]; // accumulated gradient for the center vector
    for walk in walks {
        for center_pos in 0..walk.len() {
            let done = processed.fetch_add(1, Ordering::Relaxed);
            let progress = done as f64 / total_positions as f64;
            let lr = (params.learning_rate_initial * (1.0 - progress).max(MIN_LR_FRACTION)) as f32;

            let radius = rng.gen_range(1..=params.window);
            let (center, _) = walk[center_pos];
            let lo = center_pos.saturating_sub(radius);
            let hi = (center_pos + radius).min(walk.len() - 1);
            for context_pos in lo..=hi {
                if context_pos == center_pos {
                    continue;
                }
                let (_, positive) = walk[context_pos];
                pull.iter_mut().for_each(|v| *v = 0.0);
                for sample in 0..=params.negatives {
                    let (target, label) = if sample == 0 {
                        (positive, 1.0f32)
                    } else {
                        let t = sample_negative(cumulative, rng);
                        if t == positive {
                            continue;
                        }
                        (t, 0.0f32)
                    };
                    let row = target as usize;
                    let mut dot = 0f32;
                    for k in 0..dim {
                        dot += input.get(center as usize, k) * output.get(row, k);
                    }
                    let predicted = 1.0 / (1.0 + (-dot).exp());
                    let gradient = (label - predicted) * lr;
                    for k in 0..dim {
                        let out_k = output.get(row, k);
                        pull[k] += gradient * out_k;
                        output.set(row, k, out_k + gradient * input.get(center as usize, k));
                    }
                }
                for k in 0..dim {
                    input.set(center as usize, k, input.get(center as usize, k) + pull[k]);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::walks::{DiffusionWalks, WalkStrategy};
    use crate::txgraph::TransactionGraph;
    use crate::types::Address;
    use std::collections::BTreeSet;

    fn addr(n: u16) -> Address {
        let mut b = [0u8; 20];
        b[0] = (n >> 8) as u8;
        b[1] = n as u8;
        Address(b)
    }

    fn barbell(clique: u16) -> TransactionGraph {
        let mut edges = BTreeSet::new();
        let mut nodes = BTreeSet::new();
        for side in 0..2u16 {
            let base = side * clique;
            for i in 0..clique {
                nodes.insert(addr(base + i));
                for j in (i + 1)..clique {
                    edges.insert((addr(base + i), addr(base + j)));
                }
            }
        }
        edges.insert((addr(clique - 1), addr(clique))); // bridge
        TransactionGraph::from_edges(nodes, edges)
    }

    fn quick_params(seed: u64) -> WalkParams {
        WalkParams {
            dim: 16,
            walks_per_node: 5,
            cover_size: 8,
            walk_length: 10,
            window: 3,
            negatives: 3,
            epochs: 3,
            learning_rate_initial: 0.025,
            seed,
        }
    }

    fn cosine(a: &[f32], b: &[f32]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
        let na: f64 = a.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn single_worker_training_is_bitwise_reproducible() {
        let g = barbell(6);
        let p = quick_params(7);
        let corpus = DiffusionWalks.generate(&g, &p).unwrap();
        let a = train_skipgram(&corpus, g.node_count(), &p, 1).unwrap();
        let b = train_skipgram(&corpus, g.node_count(), &p, 1).unwrap();
        let bits = |rows: &Vec<Vec<f32>>| -> Vec<u32> {
            rows.iter().flatten().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));

        let c = train_skipgram(&corpus, g.node_count(), &WalkParams { seed: 8, ..p }, 1).unwrap();
        assert_ne!(bits(&a), bits(&c), "different seed should move the weights");
    }

    #[test]
    fn vectors_have_declared_shape_and_finite_entries() {
        let g = barbell(5);
        let p = quick_params(3);
        let corpus = DiffusionWalks.generate(&g, &p).unwrap();
        let rows = train_skipgram(&corpus, g.node_count(), &p, 1).unwrap();
        assert_eq!(rows.len(), g.node_count());
        for row in &rows {
            assert_eq!(row.len(), p.dim);
            assert!(row.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn cliques_cluster_tighter_than_the_bridge() {
        let g = barbell(8);
        let p = quick_params(7);
        let corpus = DiffusionWalks.generate(&g, &p).unwrap();
        let rows = train_skipgram(&corpus, g.node_count(), &p, 1).unwrap();

        // Addresses 0..8 form clique A, 8..16 clique B (address order is
        // node order).
        let half = g.node_count() / 2;
        let mut intra = Vec::new();
        let mut inter = Vec::new();
        for i in 0..g.node_count() {
            for j in (i + 1)..g.node_count() {
                let sim = cosine(&rows[i], &rows[j]);
                if (i < half) == (j < half) {
                    intra.push(sim);
                } else {
                    inter.push(sim);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&intra) > mean(&inter),
            "intra {} should exceed inter {}",
            mean(&intra),
            mean(&inter)
        );
    }

    #[test]
    fn multi_worker_training_stays_finite() {
        let g = barbell(6);
        let p = quick_params(13);
        let corpus = DiffusionWalks.generate(&g, &p).unwrap();
        let rows = train_skipgram(&corpus, g.node_count(), &p, 3).unwrap();
        assert_eq!(rows.len(), g.node_count());
        assert!(rows.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let corpus = WalkCorpus { walks: vec![], token_count: 4 };
        assert!(matches!(
            train_skipgram(&corpus, 4, &quick_params(1), 1),
            Err(EmbeddingError::EmptySequences)
        ));
        let corpus = WalkCorpus { walks: vec![vec![]], token_count: 4 };
        assert!(matches!(
            train_skipgram(&corpus, 4, &quick_params(1), 1),
            Err(EmbeddingError::EmptySequences)
        ));
    }

    #[test]
    fn negative_sampling_tracks_token_mass() {
        // Token 0 appears 8x, token 1 once: cumulative table must be
        // monotone and weight 0 must dominate draws.
        let corpus = WalkCorpus {
            walks: vec![(0..9).map(|i| (0u32, u32::from(i == 8))).collect()],
            token_count: 2,
        };
        let table = negative_table(&corpus);
        assert_eq!(table.len(), 2);
        assert!(table[0] < table[1]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut zero_draws = 0;
        for _ in 0..1000 {
            if sample_negative(&table, &mut rng) == 0 {
                zero_draws += 1;
            }
        }
        // weight(0) = 8^0.75 ≈ 4.76, weight(1) = 1 → expect ≈ 83% zeros.
        assert!((700..=950).contains(&zero_draws), "got {zero_draws}");
    }
}
