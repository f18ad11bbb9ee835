use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use chainprofiler::eval::{rank_candidates, RankedResult};
use chainprofiler::ingest::{
    filter_active_addresses, load_ens_pairs, load_transactions, GroundTruthPair, Transaction,
};
use chainprofiler::profiles::{
    concat_features, daily_average_gas_price, profiler, read_features_csv, FeatureConfig,
    FeatureVector,
};
use chainprofiler::types::Address;

use crate::errors::CliError;

/// Prefixes the offending path onto an error message.
pub fn with_path(path: &Path, e: CliError) -> CliError {
    match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
    }
}

pub fn load_corpus(path: &Path) -> Result<Vec<Transaction>, CliError> {
    load_transactions(path).map_err(|e| with_path(path, e.into()))
}

pub fn load_pairs(path: &Path) -> Result<Vec<GroundTruthPair>, CliError> {
    let f = std::fs::File::open(path).map_err(|e| with_path(path, e.into()))?;
    load_ens_pairs(f).map_err(|e| with_path(path, e.into()))
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureVector>, CliError> {
    let f = std::fs::File::open(path).map_err(|e| with_path(path, e.into()))?;
    read_features_csv(f).map_err(|e| with_path(path, e.into()))
}

pub fn draw_seed() -> u64 {
    rand::random()
}

/// Merges corpora from several sources into one canonically ordered list,
/// dropping exact duplicates and rejecting conflicting rows that reuse a
/// non-internal transaction hash.
pub fn merge_corpora(mut all: Vec<Transaction>) -> Result<Vec<Transaction>, CliError> {
    fn key(
        t: &Transaction,
    ) -> (
        u64,
        chainprofiler::types::TxHash,
        bool,
        Address,
        Option<Address>,
        chainprofiler::types::Wei,
        chainprofiler::types::Wei,
        u64,
        i64,
    ) {
        (
            t.block_number,
            t.tx_hash,
            t.is_internal,
            t.from_address,
            t.to_address,
            t.value_wei,
            t.gas_price_wei,
            t.gas_used,
            t.timestamp,
        )
    }
    all.sort_by(|a, b| key(a).cmp(&key(b)));
    all.dedup();
    let mut seen = HashSet::new();
    for t in all.iter().filter(|t| !t.is_internal) {
        if !seen.insert(t.tx_hash) {
            return Err(CliError::validation(format!(
                "transaction hash {} appears twice with conflicting fields",
                t.tx_hash
            )));
        }
    }
    Ok(all)
}

/// Non-internal transactions grouped by sender, keys ascending.
pub fn sent_index(corpus: &[Transaction]) -> BTreeMap<Address, Vec<Transaction>> {
    let mut index: BTreeMap<Address, Vec<Transaction>> = BTreeMap::new();
    for tx in corpus.iter().filter(|t| !t.is_internal) {
        index.entry(tx.from_address).or_default().push(tx.clone());
    }
    index
}

pub const FEATURE_KINDS: [&str; 3] = ["timeofday", "gasprice", "concat"];

/// Profiles every address with at least `min_sent` sent transactions.
/// `kind` is a profiler registry name or "concat" for both joined.
pub fn profile_features(
    corpus: &[Transaction],
    cfg: &FeatureConfig,
    min_sent: usize,
    kind: &str,
) -> Result<Vec<FeatureVector>, CliError> {
    cfg.validate()?;
    if !FEATURE_KINDS.contains(&kind) {
        return Err(CliError::validation(format!(
            "unknown feature kind {kind:?}: expected timeofday, gasprice, or concat"
        )));
    }
    if min_sent == 0 {
        return Err(CliError::validation("--min-sent must be at least 1"));
    }
    let series = daily_average_gas_price(corpus);
    let active = filter_active_addresses(corpus, min_sent);
    let index = sent_index(corpus);
    let mut out = Vec::new();
    for address in active.addresses() {
        let txs = index.get(address).map(Vec::as_slice).unwrap_or(&[]);
        let fv = match kind {
            "concat" => {
                let time = profiler("timeofday")
                    .expect("registry has timeofday")
                    .profile(*address, txs, &series, cfg)?;
                let gas = profiler("gasprice")
                    .expect("registry has gasprice")
                    .profile(*address, txs, &series, cfg)?;
                concat_features(&[&time, &gas])?
            }
            name => profiler(name)
                .expect("kind checked against the registry above")
                .profile(*address, txs, &series, cfg)?,
        };
        out.push(fv);
    }
    Ok(out)
}

/// Groups feature vectors by kind label into per-method lookup maps.
pub fn feature_sets(
    features: Vec<FeatureVector>,
) -> Result<BTreeMap<String, BTreeMap<Address, FeatureVector>>, CliError> {
    let mut sets: BTreeMap<String, BTreeMap<Address, FeatureVector>> = BTreeMap::new();
    for fv in features {
        let method = fv.kind.to_string();
        if sets.entry(method.clone()).or_default().insert(fv.address, fv).is_some() {
            return Err(CliError::validation(format!(
                "duplicate feature row for kind {method} and one address"
            )));
        }
    }
    Ok(sets)
}

pub struct RankingSet {
    pub methods: BTreeMap<String, Vec<RankedResult>>,
    /// Pair directions dropped per method because an endpoint had no profile.
    pub skipped: BTreeMap<String, usize>,
}

/// Ranks both directions of every ground-truth pair against all profiled
/// addresses, independently per method. Directions whose target or truth
/// has no profile under a method are skipped and counted.
pub fn build_rankings(
    sets: &BTreeMap<String, BTreeMap<Address, FeatureVector>>,
    pairs: &[GroundTruthPair],
) -> Result<RankingSet, CliError> {
    let mut methods = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    for (name, set) in sets {
        let all: Vec<Address> = set.keys().copied().collect();
        let mut results = Vec::new();
        let mut miss = 0usize;
        for pair in pairs {
            for (target, truth) in [(pair.id_a, pair.id_b), (pair.id_b, pair.id_a)] {
                if !set.contains_key(&target) || !set.contains_key(&truth) {
                    miss += 1;
                    continue;
                }
                let candidates: Vec<Address> =
                    all.iter().copied().filter(|a| *a != target).collect();
                results.push(rank_candidates(set, target, truth, &candidates)?);
            }
        }
        methods.insert(name.clone(), results);
        skipped.insert(name.clone(), miss);
    }
    Ok(RankingSet { methods, skipped })
}

/// `method,target,truth,candidates,rank` rows for every ranked direction.
pub fn ranks_csv(methods: &BTreeMap<String, Vec<RankedResult>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "target", "truth", "candidates", "rank"])
        .expect("write to Vec cannot fail");
    for (method, results) in methods {
        for r in results {
            w.write_record([
                method.clone(),
                r.target.to_string(),
                r.truth.to_string(),
                r.n.to_string(),
                r.rank.to_string(),
            ])
            .expect("write to Vec cannot fail");
        }
    }
    w.into_inner().expect("flush to Vec cannot fail")
}
