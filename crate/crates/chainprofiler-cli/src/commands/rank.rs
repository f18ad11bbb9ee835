use std::path::PathBuf;

use crate::commands::common;
use crate::errors::CliError;
use crate::meta::SidecarBuilder;
use crate::staging::OutputSet;

#[derive(Debug, clap::Args)]
pub struct RankArgs {
    /// Feature CSV (address,kind,v0,...); kinds become separate methods.
    #[arg(long)]
    pub features: PathBuf,
    /// Ground-truth pair CSV (ens_name,address).
    #[arg(long)]
    pub pairs: PathBuf,
    /// Rank CSV to write: method,target,truth,candidates,rank.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &RankArgs) -> Result<(), CliError> {
    let features = common::load_features(&args.features)?;
    let pairs = common::load_pairs(&args.pairs)?;
    let sets = common::feature_sets(features)?;
    let rankings = common::build_rankings(&sets, &pairs)?;
    if rankings.methods.values().all(Vec::is_empty) {
        return Err(CliError::validation(
            "no ground-truth pair has profiles on both endpoints",
        ));
    }

    let mut sidecar = SidecarBuilder::new(None);
    sidecar.input(&args.features)?;
    sidecar.input(&args.pairs)?;
    let mut out = OutputSet::new();
    out.stage(&args.out, &common::ranks_csv(&rankings.methods))?;
    sidecar.stage_for(
        &mut out,
        &args.out,
        &[("pairs", serde_json::Value::from(pairs.len()))],
    )?;
    out.commit()?;

    for (method, results) in &rankings.methods {
        println!(
            "method {method}: ranked {} pair-directions (skipped {})",
            results.len(),
            rankings.skipped.get(method).copied().unwrap_or(0)
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
