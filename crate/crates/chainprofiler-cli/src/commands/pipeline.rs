use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::str::FromStr;

use chainprofiler::embeddings::{
    complete_embeddings, embed_graph, fuse_rankings, write_embeddings_csv, WalkParams,
};
use chainprofiler::eval::{method_metrics, write_metrics_csv, MethodMetrics};
use chainprofiler::profiles::{write_features_csv, FeatureConfig, FeatureKind, FeatureVector};
use chainprofiler::tornado::load_events_csv;
use chainprofiler::txgraph::{build_graph, preprocess};
use chainprofiler::types::Address;

use crate::commands::{common, fingerprint, tornado};
use crate::config::ConfigFile;
use crate::errors::CliError;
use crate::meta::SidecarBuilder;
use crate::staging::OutputSet;

const CONFIG_KEYS: &[&str] = &[
    "corpus",
    "pairs",
    "out_dir",
    "seed",
    "workers",
    "min_sent",
    "b_hour",
    "b_gas",
    "gas_clip",
    "dim",
    "walks_per_node",
    "cover_size",
    "walk_length",
    "window",
    "negatives",
    "epochs",
    "learning_rate",
    "resolution",
    "tornado_events",
    "gas_scope",
    "fingerprint_digits",
    "fingerprint_cutoffs",
];

#[derive(Debug, clap::Args)]
pub struct PipelineArgs {
    /// Flat key=value configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Transaction corpus (CSV or JSONL).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Ground-truth pair CSV (ens_name,address).
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Directory receiving every artifact.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// RNG seed. Required: pass the flag or set seed= in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trainer threads; 1 (the default) is bit-reproducible.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Profile addresses with at least this many sent transactions.
    #[arg(long)]
    pub min_sent: Option<usize>,
    /// Hour-of-day histogram bins for the time-of-day profile.
    #[arg(long)]
    pub b_hour: Option<usize>,
    /// Gas-price histogram bins for the gas-price profile.
    #[arg(long)]
    pub b_gas: Option<usize>,
    /// Gas prices above this many gwei fall into the top bin.
    #[arg(long)]
    pub gas_clip: Option<f64>,
    /// Embedding dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Random walks started per node.
    #[arg(long)]
    pub walks_per_node: Option<usize>,
    /// Nodes per diffusion cover before the walk is serialized.
    #[arg(long)]
    pub cover_size: Option<usize>,
    /// Tokens per serialized walk.
    #[arg(long)]
    pub walk_length: Option<usize>,
    /// Skip-gram context window.
    #[arg(long)]
    pub window: Option<usize>,
    /// Negative samples per center-context pair.
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Training passes over the walk corpus.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Initial SGD learning rate (decays linearly).
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Entropy resolution (rank bins).
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Mixer event CSV; enables the mixer-analysis stage.
    #[arg(long)]
    pub tornado_events: Option<PathBuf>,
    /// Gas-price uniqueness scope: per-pool | global.
    #[arg(long)]
    pub gas_scope: Option<String>,
    /// Fingerprint width in digits; enables the balance-replay stage.
    #[arg(long)]
    pub fingerprint_digits: Option<u32>,
    /// Comma-separated sent-transaction cutoffs for the replay stage.
    #[arg(long)]
    pub fingerprint_cutoffs: Option<String>,
}

fn resolve<T: FromStr + Clone>(
    flag: &Option<T>,
    cfg: &ConfigFile,
    key: &str,
) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v.clone())),
        None => cfg.parse::<T>(key),
    }
}

fn require<T>(value: Option<T>, what: &str) -> Result<T, CliError> {
    value.ok_or_else(|| {
        CliError::validation(format!(
            "missing required {what}: pass the flag or set it in the config file"
        ))
    })
}

pub fn run(args: &PipelineArgs) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(path) => ConfigFile::load(path, CONFIG_KEYS)?,
        None => ConfigFile::empty(),
    };

    let corpus_path = require(resolve(&args.corpus, &cfg, "corpus")?, "--corpus")?;
    let pairs_path = require(resolve(&args.pairs, &cfg, "pairs")?, "--pairs")?;
    let out_dir = require(resolve(&args.out_dir, &cfg, "out_dir")?, "--out-dir")?;
    let seed = require(
        resolve(&args.seed, &cfg, "seed")?,
        "--seed (pipeline runs need an explicit seed)",
    )?;
    let workers = resolve(&args.workers, &cfg, "workers")?.unwrap_or(1);
    if workers == 0 {
        return Err(CliError::validation("--workers must be at least 1"));
    }
    let min_sent = resolve(&args.min_sent, &cfg, "min_sent")?.unwrap_or(1);
    let defaults = FeatureConfig::default();
    let fcfg = FeatureConfig {
        b_hour: resolve(&args.b_hour, &cfg, "b_hour")?.unwrap_or(defaults.b_hour),
        b_gas: resolve(&args.b_gas, &cfg, "b_gas")?.unwrap_or(defaults.b_gas),
        gas_clip: resolve(&args.gas_clip, &cfg, "gas_clip")?.unwrap_or(defaults.gas_clip),
    };
    let wp = WalkParams::default();
    let params = WalkParams {
        dim: resolve(&args.dim, &cfg, "dim")?.unwrap_or(wp.dim),
        walks_per_node: resolve(&args.walks_per_node, &cfg, "walks_per_node")?
            .unwrap_or(wp.walks_per_node),
        cover_size: resolve(&args.cover_size, &cfg, "cover_size")?.unwrap_or(wp.cover_size),
        walk_length: resolve(&args.walk_length, &cfg, "walk_length")?.unwrap_or(wp.walk_length),
        window: resolve(&args.window, &cfg, "window")?.unwrap_or(wp.window),
        negatives: resolve(&args.negatives, &cfg, "negatives")?.unwrap_or(wp.negatives),
        epochs: resolve(&args.epochs, &cfg, "epochs")?.unwrap_or(wp.epochs),
        learning_rate_initial: resolve(&args.learning_rate, &cfg, "learning_rate")?
            .unwrap_or(wp.learning_rate_initial),
        seed,
    };
    let resolution = resolve(&args.resolution, &cfg, "resolution")?;
    let tornado_events = resolve(&args.tornado_events, &cfg, "tornado_events")?;
    let gas_scope = tornado::parse_gas_scope(
        &resolve(&args.gas_scope, &cfg, "gas_scope")?.unwrap_or_else(|| "per-pool".to_string()),
    )?;
    let fingerprint_digits = resolve(&args.fingerprint_digits, &cfg, "fingerprint_digits")?;
    let fingerprint_cutoffs = resolve(&args.fingerprint_cutoffs, &cfg, "fingerprint_cutoffs")?
        .unwrap_or_else(|| "50,100,500".to_string());

    let total =
        6 + usize::from(tornado_events.is_some()) + usize::from(fingerprint_digits.is_some());
    let mut stage = 0usize;
    let mut progress = |line: String| {
        stage += 1;
        println!("[{stage}/{total}] {line}");
    };

    let mut sidecar = SidecarBuilder::new(Some(seed));
    if let Some(path) = &args.config {
        sidecar.input(path)?;
    }
    sidecar.input(&corpus_path)?;
    sidecar.input(&pairs_path)?;

    // Stage 1: corpus.
    let corpus = common::load_corpus(&corpus_path)?;
    progress(format!("corpus: {} transactions", corpus.len()));

    // Stage 2: quasi-identifier profiles.
    let mut features: Vec<FeatureVector> = Vec::new();
    for kind in common::FEATURE_KINDS {
        features.extend(common::profile_features(&corpus, &fcfg, min_sent, kind)?);
    }
    if features.is_empty() {
        return Err(CliError::validation(format!(
            "no address has at least {min_sent} sent transactions"
        )));
    }
    let mut sets = common::feature_sets(features.clone())?;
    let active: BTreeSet<Address> =
        sets.get("concat").expect("concat profiled above").keys().copied().collect();
    progress(format!(
        "profiles: {} addresses, kinds {}",
        active.len(),
        common::FEATURE_KINDS.join("+")
    ));

    // Stage 3: transaction graph.
    let full = build_graph(&corpus);
    let (graph, removed) = preprocess(&full)?;
    progress(format!(
        "graph: {} nodes, {} edges (removed {} of {})",
        graph.node_count(),
        graph.edge_count(),
        removed.len(),
        full.node_count()
    ));

    // Stage 4: walk embeddings, one table per registered strategy.
    let mut out = OutputSet::new();
    for (strategy, file_name) in [("diffusion", "embeddings.csv"), ("role", "embeddings_role.csv")] {
        let table = embed_graph(&graph, strategy, &params, workers)?;
        let completed = complete_embeddings(&table, &active);
        let mut method: BTreeMap<Address, FeatureVector> = BTreeMap::new();
        for a in &active {
            let values = completed.vectors.get(a).expect("completion covers active").clone();
            method.insert(
                *a,
                FeatureVector { address: *a, kind: FeatureKind::Embedding, values },
            );
        }
        sets.insert(strategy.to_string(), method);

        let path = out_dir.join(file_name);
        let mut bytes = Vec::new();
        write_embeddings_csv(&mut bytes, &completed)?;
        out.stage(&path, &bytes)?;
        sidecar.stage_for(
            &mut out,
            &path,
            &[
                ("algorithm", serde_json::Value::String(strategy.to_string())),
                ("params", serde_json::to_value(&params).expect("params serialize")),
                ("workers", serde_json::Value::from(workers)),
            ],
        )?;
    }
    progress(format!(
        "embeddings: diffusion+role, dim {}, seed {seed}, workers {workers}",
        params.dim
    ));

    // Stage 5: rank every ground-truth pair direction under every method,
    // plus the harmonic fusion of the profile and embedding rankings.
    let pairs = common::load_pairs(&pairs_path)?;
    let mut rankings = common::build_rankings(&sets, &pairs)?;
    let combined = match (rankings.methods.get("concat"), rankings.methods.get("diffusion")) {
        (Some(a), Some(b)) if !a.is_empty() && a.len() == b.len() => {
            let mut fused = Vec::with_capacity(a.len());
            for (ra, rb) in a.iter().zip(b) {
                fused.push(fuse_rankings(ra, rb)?);
            }
            Some(fused)
        }
        _ => None,
    };
    if let Some(fused) = combined {
        let skipped = rankings.skipped.get("concat").copied().unwrap_or(0);
        rankings.methods.insert("combined".to_string(), fused);
        rankings.skipped.insert("combined".to_string(), skipped);
    }
    let ranked = rankings.methods.values().map(Vec::len).max().unwrap_or(0);
    let skipped = rankings.skipped.values().max().copied().unwrap_or(0);
    progress(format!(
        "ranking: {} pairs -> {ranked} directions per method, {} methods (skipped {skipped})",
        pairs.len(),
        rankings.methods.len()
    ));

    // Stage 6: metrics.
    let mut metrics: BTreeMap<String, MethodMetrics> = BTreeMap::new();
    for (method, results) in &rankings.methods {
        if results.is_empty() {
            continue;
        }
        metrics.insert(method.clone(), method_metrics(results, resolution)?);
    }
    if metrics.is_empty() {
        return Err(CliError::validation(
            "no ground-truth pair has profiles on both endpoints",
        ));
    }
    progress(format!("metrics: {} methods", metrics.len()));

    let features_path = out_dir.join("features.csv");
    let mut bytes = Vec::new();
    write_features_csv(&mut bytes, &features)?;
    out.stage(&features_path, &bytes)?;
    sidecar.stage_for(
        &mut out,
        &features_path,
        &[
            ("feature_config", serde_json::to_value(fcfg).expect("config serializes")),
            ("min_sent", serde_json::Value::from(min_sent)),
            ("addresses", serde_json::Value::from(active.len())),
        ],
    )?;

    let ranks_path = out_dir.join("ranks.csv");
    out.stage(&ranks_path, &common::ranks_csv(&rankings.methods))?;
    sidecar.stage_for(&mut out, &ranks_path, &[])?;

    let metrics_json_path = out_dir.join("metrics.json");
    let mut json = serde_json::to_vec_pretty(&metrics).expect("metrics serialize");
    json.push(b'\n');
    out.stage(&metrics_json_path, &json)?;
    sidecar.stage_for(&mut out, &metrics_json_path, &[])?;

    let metrics_csv_path = out_dir.join("metrics.csv");
    let mut bytes = Vec::new();
    write_metrics_csv(&mut bytes, &metrics)?;
    out.stage(&metrics_csv_path, &bytes)?;
    sidecar.stage_for(&mut out, &metrics_csv_path, &[])?;

    // Optional stage: mixer analysis.
    let mut tornado_summary = None;
    if let Some(events_path) = &tornado_events {
        let events = load_events_csv(events_path)?;
        let mut tornado_sidecar = sidecar.clone();
        tornado_sidecar.input(events_path)?;
        let names = tornado::default_heuristics(true);
        let summary = tornado::stage_artifacts(
            &events,
            &corpus,
            &names,
            gas_scope,
            &out_dir,
            &tornado_sidecar,
            &mut out,
        )?;
        progress(format!(
            "mixer: {} links, {} distinct withdraws",
            summary.per_heuristic.iter().map(|(_, l, _)| l).sum::<usize>(),
            summary.distinct_withdraws
        ));
        tornado_summary = Some(summary);
    }

    // Optional stage: balance-fingerprint replay.
    let mut fingerprint_summary = None;
    if let Some(digits) = fingerprint_digits {
        let cutoffs = fingerprint::parse_cutoffs(&fingerprint_cutoffs)?;
        let (report, json) = fingerprint::build_report(&corpus, digits, &cutoffs)?;
        let path = out_dir.join("fingerprint_report.json");
        out.stage(&path, &json)?;
        sidecar.stage_for(&mut out, &path, &[("digits", serde_json::Value::from(digits))])?;
        progress(format!("fingerprints: digits={digits}, {} cutoff bands", report.rows.len()));
        fingerprint_summary = Some(report);
    }

    let written = out.commit()?;

    for (method, m) in &metrics {
        println!(
            "method {method}: pairs={} avg_rank={:.3} auc_lemma={:.4} entropy_gain={:.3} bits",
            m.count, m.average_rank, m.auc_lemma, m.entropy_gain_bits
        );
    }
    if let Some(summary) = &tornado_summary {
        summary.print();
    }
    if let Some(report) = &fingerprint_summary {
        fingerprint::print_summary(report);
    }
    println!("wrote {} artifacts to {}", written.len(), out_dir.display());
    Ok(())
}
