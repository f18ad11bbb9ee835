use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chainprofiler::ingest::Transaction;
use chainprofiler::tornado::{
    anonymity_series, build_ground_truth, link_heuristic, link_heuristics, load_events_csv,
    mixing_delay_distribution, reuse_histogram, validate_events, write_links_csv,
    GasUniquenessScope, Link, TimeWindow, TornadoEvent, UniqueGasPrice,
};
use chainprofiler::types::TxHash;

use crate::commands::common;
use crate::errors::CliError;
use crate::meta::SidecarBuilder;
use crate::staging::OutputSet;

#[derive(Debug, clap::Args)]
pub struct TornadoArgs {
    /// Mixer event CSV: mixer,kind,address,timestamp,gas_price_wei,tx_hash.
    #[arg(long)]
    pub events: PathBuf,
    /// Directory receiving links.csv, ground-truth pair CSVs, and series.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Transaction corpus enabling the interaction heuristic.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Gas-price uniqueness scope: per-pool | global.
    #[arg(long, default_value = "per-pool")]
    pub gas_scope: String,
    /// Comma-separated heuristic names to run (default: all applicable).
    #[arg(long)]
    pub heuristics: Option<String>,
}

pub fn parse_gas_scope(raw: &str) -> Result<GasUniquenessScope, CliError> {
    match raw {
        "per-pool" => Ok(GasUniquenessScope::PerPool),
        "global" => Ok(GasUniquenessScope::Global),
        other => Err(CliError::validation(format!(
            "unknown gas scope {other:?}: expected per-pool or global"
        ))),
    }
}

pub struct TornadoSummary {
    /// (heuristic name, links, distinct linked withdraws).
    pub per_heuristic: Vec<(String, usize, usize)>,
    pub distinct_withdraws: usize,
    /// (window label, ground-truth pairs).
    pub per_window: Vec<(String, usize)>,
}

impl TornadoSummary {
    pub fn print(&self) {
        for (name, links, withdraws) in &self.per_heuristic {
            println!("heuristic {name}: {links} links, {withdraws} distinct withdraws");
        }
        println!("all heuristics: {} distinct linked withdraws", self.distinct_withdraws);
        for (window, pairs) in &self.per_window {
            println!("ground truth ({window}): {pairs} pairs");
        }
    }
}

/// Runs the selected heuristics and stages every mixer artifact into
/// `dir`: links.csv, per-window ground-truth pairs, the anonymity-set
/// series, and the reuse/delay histograms.
pub fn stage_artifacts(
    events: &[TornadoEvent],
    corpus: &[Transaction],
    heuristic_names: &[String],
    scope: GasUniquenessScope,
    dir: &Path,
    sidecar: &SidecarBuilder,
    out: &mut OutputSet,
) -> Result<TornadoSummary, CliError> {
    validate_events(events)?;

    let mut links: Vec<Link> = Vec::new();
    let mut per_heuristic = Vec::new();
    for name in heuristic_names {
        // Resolve through the registry so unknown names fail loudly, then
        // honor the scope override for the gas-price rule.
        let rule = link_heuristic(name)?;
        let rule: Box<dyn chainprofiler::tornado::LinkHeuristic> = if rule.id() == 2 {
            Box::new(UniqueGasPrice { scope })
        } else {
            rule
        };
        let found = rule.link(events, corpus);
        let withdraws: BTreeSet<TxHash> = found.iter().map(|l| l.withdraw.tx_hash).collect();
        per_heuristic.push((name.clone(), found.len(), withdraws.len()));
        links.extend(found);
    }
    let distinct_withdraws =
        links.iter().map(|l| l.withdraw.tx_hash).collect::<BTreeSet<_>>().len();

    let mut staged_csv = Vec::new();
    write_links_csv(&mut staged_csv, &links)?;
    let links_path = dir.join("links.csv");
    out.stage(&links_path, &staged_csv)?;
    sidecar.stage_for(
        out,
        &links_path,
        &[("links", serde_json::Value::from(links.len()))],
    )?;

    let mut per_window = Vec::new();
    for window in TimeWindow::ALL {
        let pairs = build_ground_truth(&links, window);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id_a", "id_b", "origin", "label"]).expect("write to Vec cannot fail");
        for pair in &pairs {
            w.serialize(pair).expect("pair serializes to Vec");
        }
        let bytes = w.into_inner().expect("flush to Vec cannot fail");
        let path = dir.join(format!("ground_truth_{}.csv", window.label()));
        out.stage(&path, &bytes)?;
        sidecar.stage_for(out, &path, &[("pairs", serde_json::Value::from(pairs.len()))])?;
        per_window.push((window.label().to_string(), pairs.len()));
    }

    let series = anonymity_series(events, &links);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["mixer", "timestamp", "deposits", "reduced"])
        .expect("write to Vec cannot fail");
    for (pool, points) in &series {
        for p in points {
            w.write_record([
                pool.to_string(),
                p.t.to_string(),
                p.deposits.to_string(),
                p.reduced.to_string(),
            ])
            .expect("write to Vec cannot fail");
        }
    }
    let bytes = w.into_inner().expect("flush to Vec cannot fail");
    let series_path = dir.join("anonymity_series.csv");
    out.stage(&series_path, &bytes)?;
    sidecar.stage_for(out, &series_path, &[])?;

    let reuse = reuse_histogram(events);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["mixer", "withdraws", "addresses"]).expect("write to Vec cannot fail");
    for (pool, histogram) in &reuse {
        for (count, addresses) in histogram {
            w.write_record([pool.to_string(), count.to_string(), addresses.to_string()])
                .expect("write to Vec cannot fail");
        }
    }
    let bytes = w.into_inner().expect("flush to Vec cannot fail");
    let reuse_path = dir.join("reuse_histogram.csv");
    out.stage(&reuse_path, &bytes)?;
    sidecar.stage_for(out, &reuse_path, &[])?;

    let delays = mixing_delay_distribution(&links);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["elapsed_days", "links"]).expect("write to Vec cannot fail");
    for (days, n) in &delays {
        w.write_record([days.to_string(), n.to_string()]).expect("write to Vec cannot fail");
    }
    let bytes = w.into_inner().expect("flush to Vec cannot fail");
    let delay_path = dir.join("delay_histogram.csv");
    out.stage(&delay_path, &bytes)?;
    sidecar.stage_for(out, &delay_path, &[])?;

    Ok(TornadoSummary { per_heuristic, distinct_withdraws, per_window })
}

/// The default heuristic roster: every registered rule, with the
/// corpus-dependent interaction rule included only when a corpus exists.
pub fn default_heuristics(have_corpus: bool) -> Vec<String> {
    link_heuristics()
        .iter()
        .filter(|h| have_corpus || h.id() != 3)
        .map(|h| h.name().to_string())
        .collect()
}

pub fn run(args: &TornadoArgs) -> Result<(), CliError> {
    let events = load_events_csv(&args.events)?;
    let corpus = match &args.corpus {
        Some(path) => common::load_corpus(path)?,
        None => Vec::new(),
    };
    let scope = parse_gas_scope(&args.gas_scope)?;
    let names: Vec<String> = match &args.heuristics {
        Some(raw) => raw.split(',').map(|s| s.trim().to_string()).collect(),
        None => default_heuristics(args.corpus.is_some()),
    };
    for name in &names {
        if link_heuristic(name)?.id() == 3 && args.corpus.is_none() {
            return Err(CliError::validation(
                "the interaction heuristic requires --corpus",
            ));
        }
    }

    let mut sidecar = SidecarBuilder::new(None);
    sidecar.input(&args.events)?;
    if let Some(path) = &args.corpus {
        sidecar.input(path)?;
    }
    let mut out = OutputSet::new();
    let summary =
        stage_artifacts(&events, &corpus, &names, scope, &args.out_dir, &sidecar, &mut out)?;
    out.commit()?;
    summary.print();
    println!("wrote mixer artifacts to {}", args.out_dir.display());
    Ok(())
}
