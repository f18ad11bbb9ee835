use std::collections::BTreeMap;
use std::path::PathBuf;

use chainprofiler::eval::{method_metrics, write_metrics_csv, MethodMetrics};

use crate::commands::common;
use crate::errors::CliError;
use crate::meta::SidecarBuilder;
use crate::staging::OutputSet;

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    /// Feature CSV (address,kind,v0,...); kinds become separate methods.
    #[arg(long)]
    pub features: PathBuf,
    /// Ground-truth pair CSV (ens_name,address).
    #[arg(long)]
    pub pairs: PathBuf,
    /// Metrics JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the metrics table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Entropy resolution (rank bins); defaults to the largest
    /// candidate-set size, capped at 1000.
    #[arg(long)]
    pub resolution: Option<usize>,
}

pub fn run(args: &EvaluateArgs) -> Result<(), CliError> {
    let features = common::load_features(&args.features)?;
    let pairs = common::load_pairs(&args.pairs)?;
    let sets = common::feature_sets(features)?;
    let rankings = common::build_rankings(&sets, &pairs)?;

    let mut metrics: BTreeMap<String, MethodMetrics> = BTreeMap::new();
    for (method, results) in &rankings.methods {
        if results.is_empty() {
            continue;
        }
        metrics.insert(method.clone(), method_metrics(results, args.resolution)?);
    }
    if metrics.is_empty() {
        return Err(CliError::validation(
            "no ground-truth pair has profiles on both endpoints",
        ));
    }

    let mut sidecar = SidecarBuilder::new(None);
    sidecar.input(&args.features)?;
    sidecar.input(&args.pairs)?;
    let extra = [
        ("pairs", serde_json::Value::from(pairs.len())),
        (
            "resolution",
            match args.resolution {
                Some(r) => serde_json::Value::from(r),
                None => serde_json::Value::Null,
            },
        ),
    ];

    let mut out = OutputSet::new();
    let mut json = serde_json::to_vec_pretty(&metrics).expect("metrics serialize");
    json.push(b'\n');
    out.stage(&args.out, &json)?;
    sidecar.stage_for(&mut out, &args.out, &extra)?;
    if let Some(csv_path) = &args.csv {
        let mut bytes = Vec::new();
        write_metrics_csv(&mut bytes, &metrics)?;
        out.stage(csv_path, &bytes)?;
        sidecar.stage_for(&mut out, csv_path, &extra)?;
    }
    out.commit()?;

    for (method, m) in &metrics {
        println!(
            "method {method}: pairs={} avg_rank={:.3} auc_lemma={:.4} entropy_gain={:.3} bits",
            m.count, m.average_rank, m.auc_lemma, m.entropy_gain_bits
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
