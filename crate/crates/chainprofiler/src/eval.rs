//! Deanonymization power metrics. The attacker produces, for each target
//! address, a distance-ordered list of candidate partners containing exactly
//! one true match; these functions summarize how far up the truth lands.
//!
//! # Metrics
//!
//! * `average_rank`: mean 1-based rank of the truth. Lower is better.
//! * `auc_lemma`: mean of r/n. By the rank identity this *decreases* as the
//!   attacker improves, opposite to the usual AUC orientation.
//! * `auc_standard`: mean probability that a uniformly chosen incorrect
//!   candidate ranks strictly below the truth; increases with quality.
//!   Both orientations are always reported side by side and never converted
//!   into one another.
//! * `entropy_gain`: each result spreads unit mass uniformly over the rank
//!   interval [(r-1)/n, r/n]; the averaged distribution is compared against
//!   uniform on [0,1] at a grid resolution of M bins.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::profiles::FeatureVector;
use crate::types::Address;

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub target: Address,
    pub truth: Address,
    /// Candidate set size.
    pub n: usize,
    /// 1-based position of the truth in the ordered list.
    pub rank: usize,
    /// Candidates with distances, ascending; ties ordered by address.
    pub ordered: Vec<(Address, f64)>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("feature dimension mismatch for {address}: expected {expected}, got {got}")]
    DimensionMismatch { address: Address, expected: usize, got: usize },
    #[error("no features for {0}")]
    MissingFeatures(Address),
    #[error("no results to aggregate")]
    EmptyResults,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Orders `candidates` by Euclidean distance from the target's feature
/// vector, ascending, ties broken by address. `truth` must be one of the
/// candidates; its 1-based position becomes the result's rank.
pub fn rank_candidates(
    features: &BTreeMap<Address, FeatureVector>,
    target: Address,
    truth: Address,
    candidates: &[Address],
) -> Result<RankedResult, EvalError> {
    let target_vec = features.get(&target).ok_or(EvalError::MissingFeatures(target))?;
    let mut ordered: Vec<(Address, f64)> = Vec::with_capacity(candidates.len());
    for c in candidates {
        let fv = features.get(c).ok_or(EvalError::MissingFeatures(*c))?;
        if fv.values.len() != target_vec.values.len() || fv.kind != target_vec.kind {
            return Err(EvalError::DimensionMismatch {
                address: *c,
                expected: target_vec.values.len(),
                got: fv.values.len(),
            });
        }
        ordered.push((*c, euclidean(&target_vec.values, &fv.values)));
    }
    ordered.sort_by(|(a, da), (b, db)| {
        da.partial_cmp(db).expect("finite distances").then(a.cmp(b))
    });
    let rank = ordered
        .iter()
        .position(|(a, _)| *a == truth)
        .ok_or(EvalError::MissingFeatures(truth))?
        + 1;
    Ok(RankedResult { target, truth, n: ordered.len(), rank, ordered })
}

pub fn average_rank(results: &[RankedResult]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    Ok(results.iter().map(|r| r.rank as f64).sum::<f64>() / results.len() as f64)
}

/// Both AUC readings of the same rankings. `lemma` is mean r/n; `standard`
/// is the mean over results (with n > 1) of the fraction of incorrect
/// candidates ranked strictly below the truth, or `None` when no result has
/// an incorrect candidate to compare against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AucPair {
    pub lemma: f64,
    pub standard: Option<f64>,
}

pub fn auc_lemma(results: &[RankedResult]) -> Result<AucPair, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let lemma = results
        .iter()
        .map(|r| r.rank as f64 / r.n as f64)
        .sum::<f64>()
        / results.len() as f64;
    let comparable: Vec<&RankedResult> = results.iter().filter(|r| r.n > 1).collect();
    let standard = if comparable.is_empty() {
        None
    } else {
        // With rank r among n, exactly n - r incorrect candidates sit below.
        Some(
            comparable
                .iter()
                .map(|r| (r.n - r.rank) as f64 / (r.n - 1) as f64)
                .sum::<f64>()
                / comparable.len() as f64,
        )
    };
    Ok(AucPair { lemma, standard })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub resolution: usize,
    /// Averaged per-bin probability mass; sums to 1.
    pub density: Vec<f64>,
    pub gain_bits: f64,
}

/// Default grid resolution: the largest candidate set size, capped at 1000.
pub fn default_resolution(results: &[RankedResult]) -> usize {
    results.iter().map(|r| r.n).max().unwrap_or(1).clamp(1, 1000)
}

/// Averages the per-result uniform densities on [(r-1)/n, r/n] over an
/// M-bin grid, splitting fractional overlaps exactly, and reports how many
/// bits the averaged distribution gains over uniform.
pub fn entropy_gain(results: &[RankedResult], m: usize) -> Result<EntropyEstimate, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    assert!(m >= 1, "resolution must be at least 1");
    let mut density = vec![0.0f64; m];
    for r in results {
        deposit(&mut density, r.rank, r.n, m);
    }
    for q in &mut density {
        *q /= results.len() as f64;
    }
    let entropy: f64 = density
        .iter()
        .filter(|q| **q > 0.0)
        .map(|q| -q * q.log2())
        .sum();
    Ok(EntropyEstimate { resolution: m, density, gain_bits: (m as f64).log2() - entropy })
}

/// Adds the unit mass of one result to the grid. Works in integer units of
/// 1/(n*M) so bin overlaps are exact.
fn deposit(density: &mut [f64], rank: usize, n: usize, m: usize) {
    debug_assert!((1..=n).contains(&rank));
    let (rank, n, m) = (rank as u128, n as u128, m as u128);
    // Interval spans [(rank-1)*m, rank*m]; bin i spans [(i-1)*n, i*n].
    let first = ((rank - 1) * m) / n + 1;
    let last = (rank * m).div_ceil(n);
    for i in first..=last {
        let lo = ((i - 1) * n).max((rank - 1) * m);
        let hi = (i * n).min(rank * m);
        if hi > lo {
            density[(i - 1) as usize] += (hi - lo) as f64 / m as f64;
        }
    }
}

/// Expected extra average rank contributed by targets whose true partner is
/// not in the filtered candidate set: those land uniformly in the remaining
/// (total - candidate) positions, for an expected (total - candidate)/2.
pub fn rank_correction(total_set: u64, candidate_set: u64, miss_fraction: f64) -> f64 {
    assert!(candidate_set <= total_set, "candidate set larger than total set");
    assert!((0.0..=1.0).contains(&miss_fraction), "miss fraction outside [0,1]");
    miss_fraction * ((total_set - candidate_set) as f64 / 2.0)
}

/// One method's row in the evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub average_rank: f64,
    pub auc_lemma: f64,
    pub auc_standard: Option<f64>,
    pub entropy_gain_bits: f64,
    pub count: usize,
}

/// Convenience aggregation of every metric for one method's results.
pub fn method_metrics(results: &[RankedResult], resolution: Option<usize>) -> Result<MethodMetrics, EvalError> {
    let m = resolution.unwrap_or_else(|| default_resolution(results));
    let auc = auc_lemma(results)?;
    Ok(MethodMetrics {
        average_rank: average_rank(results)?,
        auc_lemma: auc.lemma,
        auc_standard: auc.standard,
        entropy_gain_bits: entropy_gain(results, m)?.gain_bits,
        count: results.len(),
    })
}

/// `method,avg_rank,auc_lemma,auc_standard,entropy_gain_bits,count` rows,
/// methods in name order.
pub fn write_metrics_csv<W: Write>(
    writer: W,
    methods: &BTreeMap<String, MethodMetrics>,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "avg_rank", "auc_lemma", "auc_standard", "entropy_gain_bits", "count"])
        .map_err(csv_io)?;
    for (name, m) in methods {
        w.write_record([
            name.clone(),
            m.average_rank.to_string(),
            m.auc_lemma.to_string(),
            m.auc_standard.map(|v| v.to_string()).unwrap_or_default(),
            m.entropy_gain_bits.to_string(),
            m.count.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()
}

fn csv_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::FeatureKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn addr(n: u16) -> Address {
        let mut b = [0u8; 20];
        b[0] = (n >> 8) as u8;
        b[1] = n as u8;
        Address(b)
    }

    fn fv(a: Address, values: Vec<f64>) -> FeatureVector {
        FeatureVector { address: a, kind: FeatureKind::TimeOfDay, values }
    }

    fn feature_map(vecs: Vec<FeatureVector>) -> BTreeMap<Address, FeatureVector> {
        vecs.into_iter().map(|v| (v.address, v)).collect()
    }

    /// Fabricates a result with the truth at the given rank; distances are
    /// consistent with the ordering.
    fn fake(n: usize, rank: usize) -> RankedResult {
        let ordered: Vec<(Address, f64)> = (0..n).map(|i| (addr(i as u16 + 1), i as f64)).collect();
        RankedResult {
            target: addr(0),
            truth: ordered[rank - 1].0,
            n,
            rank,
            ordered,
        }
    }

    #[test]
    fn identical_vector_ranks_first() {
        let target = addr(100);
        let truth = addr(1);
        let features = feature_map(vec![
            fv(target, vec![1.0, 2.0]),
            fv(truth, vec![1.0, 2.0]),
            fv(addr(2), vec![5.0, 2.0]),
            fv(addr(3), vec![1.0, 9.0]),
        ]);
        let r = rank_candidates(&features, target, truth, &[addr(1), addr(2), addr(3)]).unwrap();
        assert_eq!(r.rank, 1);
        assert_eq!(r.ordered[0].1, 0.0);
    }

    #[test]
    fn distance_ties_break_lexicographically() {
        let target = addr(100);
        let features = feature_map(vec![
            fv(target, vec![0.0]),
            fv(addr(7), vec![1.0]),
            fv(addr(2), vec![-1.0]),
        ]);
        let r = rank_candidates(&features, target, addr(7), &[addr(7), addr(2)]).unwrap();
        assert_eq!(r.ordered[0].0, addr(2), "equal distances order by address");
        assert_eq!(r.rank, 2);
    }

    #[test]
    fn ordering_matches_brute_force_distance_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let target = addr(999);
        let dim = 6;
        let mut vecs = vec![fv(target, (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())];
        let candidates: Vec<Address> = (1..=20).map(addr).collect();
        for c in &candidates {
            vecs.push(fv(*c, (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()));
        }
        let features = feature_map(vecs);
        let truth = addr(5);
        let r = rank_candidates(&features, target, truth, &candidates).unwrap();

        // Oracle: compute squared distances independently and sort indices.
        let tv = &features[&target].values;
        let mut with_d: Vec<(f64, Address)> = candidates
            .iter()
            .map(|c| {
                let cv = &features[c].values;
                let mut d2 = 0.0;
                for k in 0..dim {
                    let diff = tv[k] - cv[k];
                    d2 += diff * diff;
                }
                (d2, *c)
            })
            .collect();
        with_d.sort_by(|(da, aa), (db, ab)| da.partial_cmp(db).unwrap().then(aa.cmp(ab)));
        let expect: Vec<Address> = with_d.into_iter().map(|(_, a)| a).collect();
        let got: Vec<Address> = r.ordered.iter().map(|(a, _)| *a).collect();
        assert_eq!(got, expect);
        assert_eq!(r.rank, expect.iter().position(|a| *a == truth).unwrap() + 1);
        // Distances are non-decreasing.
        assert!(r.ordered.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn missing_and_mismatched_features_error() {
        let target = addr(1);
        let features = feature_map(vec![fv(target, vec![0.0, 0.0]), fv(addr(2), vec![1.0])]);
        assert!(matches!(
            rank_candidates(&features, target, addr(2), &[addr(2)]),
            Err(EvalError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            rank_candidates(&features, target, addr(3), &[addr(3)]),
            Err(EvalError::MissingFeatures(_))
        ));
    }

    #[test]
    fn average_rank_examples() {
        let results = vec![fake(10, 1), fake(10, 2), fake(10, 3)];
        assert_eq!(average_rank(&results).unwrap(), 2.0);
        let perfect = vec![fake(10, 1), fake(8, 1)];
        assert_eq!(average_rank(&perfect).unwrap(), 1.0);
        assert_eq!(average_rank(&[]).unwrap_err(), EvalError::EmptyResults);
    }

    #[test]
    fn random_ranker_averages_near_middle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 40;
        let results: Vec<RankedResult> =
            (0..10_000).map(|_| fake(n, rng.gen_range(1..=n))).collect();
        let avg = average_rank(&results).unwrap();
        let expected = (n as f64 + 1.0) / 2.0;
        assert!(
            (avg - expected).abs() / expected < 0.03,
            "got {avg}, expected about {expected}"
        );
    }

    #[test]
    fn auc_examples() {
        let one = vec![fake(4, 2)];
        let auc = auc_lemma(&one).unwrap();
        assert_eq!(auc.lemma, 0.5);

        let perfect: Vec<RankedResult> = (0..5).map(|_| fake(10, 1)).collect();
        let auc = auc_lemma(&perfect).unwrap();
        assert!((auc.lemma - 0.1).abs() < 1e-15);
        assert_eq!(auc.standard, Some(1.0));
    }

    #[test]
    fn auc_standard_matches_pairwise_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let count = rng.gen_range(1..8);
            let results: Vec<RankedResult> = (0..count)
                .map(|_| {
                    let n = rng.gen_range(2..50);
                    fake(n, rng.gen_range(1..=n))
                })
                .collect();
            let auc = auc_lemma(&results).unwrap();

            // Oracle: walk each ordered list and literally count incorrect
            // candidates sitting strictly below the truth's position.
            let mut per_result = Vec::new();
            for r in &results {
                let truth_pos = r.ordered.iter().position(|(a, _)| *a == r.truth).unwrap();
                let below = r.ordered.len() - 1 - truth_pos;
                per_result.push(below as f64 / (r.ordered.len() - 1) as f64);
            }
            let expect = per_result.iter().sum::<f64>() / per_result.len() as f64;
            let got = auc.standard.unwrap();
            assert!((got - expect).abs() <= 1e-12, "{got} vs {expect}");
        }
    }

    #[test]
    fn auc_lemma_is_normalized_average_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let results: Vec<RankedResult> = (0..200)
            .map(|_| {
                let n = rng.gen_range(1..60);
                fake(n, rng.gen_range(1..=n))
            })
            .collect();
        let got = auc_lemma(&results).unwrap().lemma;
        let expect: f64 =
            results.iter().map(|r| r.rank as f64 / r.n as f64).sum::<f64>() / results.len() as f64;
        assert!((got - expect).abs() < 1e-15);
    }

    #[test]
    fn perfect_ranker_gains_all_bits() {
        let results: Vec<RankedResult> = (0..10).map(|_| fake(8, 1)).collect();
        let e = entropy_gain(&results, 8).unwrap();
        assert!((e.gain_bits - 3.0).abs() < 1e-9, "got {}", e.gain_bits);
        assert_eq!(e.density[0], 1.0);
    }

    #[test]
    fn uniform_ranker_gains_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 100;
        let results: Vec<RankedResult> =
            (0..10_000).map(|_| fake(n, rng.gen_range(1..=n))).collect();
        let e = entropy_gain(&results, default_resolution(&results)).unwrap();
        assert!(e.gain_bits <= 0.1, "got {}", e.gain_bits);
        assert!(e.gain_bits >= 0.0);
    }

    #[test]
    fn fractional_overlap_splits_mass_exactly() {
        // n=3, r=2 covers [1/3, 2/3]; a 2-bin grid splits it evenly.
        let e = entropy_gain(&[fake(3, 2)], 2).unwrap();
        assert!((e.density[0] - 0.5).abs() < 1e-12);
        assert!((e.density[1] - 0.5).abs() < 1e-12);
        assert!(e.gain_bits.abs() < 1e-12);
    }

    #[test]
    fn density_sums_to_one_and_gain_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..30 {
            let m = rng.gen_range(1..40);
            let results: Vec<RankedResult> = (0..rng.gen_range(1..60))
                .map(|_| {
                    let n = rng.gen_range(1..30);
                    fake(n, rng.gen_range(1..=n))
                })
                .collect();
            let e = entropy_gain(&results, m).unwrap();
            let total: f64 = e.density.iter().sum();
            assert!((total - 1.0).abs() < 1e-9, "mass {total}");
            assert!(e.density.iter().all(|q| *q >= 0.0));
            assert!(e.gain_bits >= -1e-9);
            assert!(e.gain_bits <= (m as f64).log2() + 1e-9);
        }
    }

    #[test]
    fn entropy_is_permutation_invariant() {
        let results = vec![fake(5, 1), fake(7, 3), fake(9, 9), fake(4, 2)];
        let mut reversed = results.clone();
        reversed.reverse();
        let a = entropy_gain(&results, 16).unwrap();
        let b = entropy_gain(&reversed, 16).unwrap();
        assert_eq!(a.density, b.density);
        assert_eq!(a.gain_bits, b.gain_bits);
    }

    #[test]
    fn doubling_resolution_barely_moves_gain_on_smooth_distributions() {
        // Monotone-decreasing rank distribution over mixed candidate-set
        // sizes, so intervals never align with the grid.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let sizes = [50usize, 64, 100];
        let results: Vec<RankedResult> = (0..5000)
            .map(|i| {
                let n = sizes[i % sizes.len()];
                // p(r) proportional to (n - r + 1): triangular, monotone.
                let total = n * (n + 1) / 2;
                let mut pick = rng.gen_range(0..total);
                let mut r = 1;
                for cand in 1..=n {
                    let w = n - cand + 1;
                    if pick < w {
                        r = cand;
                        break;
                    }
                    pick -= w;
                }
                fake(n, r)
            })
            .collect();
        let m = 101;
        let g1 = entropy_gain(&results, m).unwrap().gain_bits;
        let g2 = entropy_gain(&results, 2 * m).unwrap().gain_bits;
        assert!((g1 - g2).abs() < 0.05, "gain moved from {g1} to {g2}");
    }

    #[test]
    fn default_resolution_caps_at_1000() {
        assert_eq!(default_resolution(&[fake(8, 1), fake(40, 2)]), 40);
        assert_eq!(default_resolution(&[fake(5000, 1)]), 1000);
    }

    #[test]
    fn rank_correction_examples() {
        assert_eq!(rank_correction(400, 80, 0.2), 32.0);
        assert_eq!(rank_correction(400, 80, 0.0), 0.0);
        assert_eq!(rank_correction(400, 80, 1.0), 160.0);
    }

    #[test]
    fn metrics_csv_has_expected_shape() {
        let mut methods = BTreeMap::new();
        methods.insert(
            "timeofday".to_string(),
            MethodMetrics {
                average_rank: 12.5,
                auc_lemma: 0.4,
                auc_standard: Some(0.6),
                entropy_gain_bits: 1.25,
                count: 7,
            },
        );
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &methods).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "method,avg_rank,auc_lemma,auc_standard,entropy_gain_bits,count"
        );
        assert!(text.lines().nth(1).unwrap().starts_with("timeofday,12.5,0.4,0.6,"));
    }

    proptest! {
        #[test]
        fn global_isometry_preserves_order(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let target = addr(999);
            let candidates: Vec<Address> = (1..=15).map(addr).collect();
            let mut vecs = vec![fv(target, vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])];
            for c in &candidates {
                vecs.push(fv(*c, vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]));
            }
            let features = feature_map(vecs.clone());
            let base = rank_candidates(&features, target, addr(3), &candidates).unwrap();

            // Rotate by a random angle and translate.
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let (s, c) = theta.sin_cos();
            let (dx, dy) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let moved: Vec<FeatureVector> = vecs
                .into_iter()
                .map(|mut v| {
                    let (x, y) = (v.values[0], v.values[1]);
                    v.values = vec![c * x - s * y + dx, s * x + c * y + dy];
                    v
                })
                .collect();
            let features2 = feature_map(moved);
            let isometric = rank_candidates(&features2, target, addr(3), &candidates).unwrap();

            let order_a: Vec<Address> = base.ordered.iter().map(|(a, _)| *a).collect();
            let order_b: Vec<Address> = isometric.ordered.iter().map(|(a, _)| *a).collect();
            prop_assert_eq!(order_a, order_b);
            prop_assert_eq!(base.rank, isometric.rank);
        }
    }
}
