use std::path::PathBuf;

use chainprofiler::profiles::{daily_average_gas_price, write_features_csv, FeatureConfig};

use crate::commands::common;
use crate::errors::CliError;
use crate::meta::SidecarBuilder;
use crate::staging::OutputSet;

#[derive(Debug, clap::Args)]
pub struct FeaturesArgs {
    /// Transaction corpus (CSV or JSONL).
    #[arg(long)]
    pub input: PathBuf,
    /// Feature kind: timeofday | gasprice | concat.
    #[arg(long, default_value = "concat")]
    pub kind: String,
    /// Feature CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Time-of-day histogram bins over [0, 24) hours.
    #[arg(long, default_value_t = 6)]
    pub b_hour: usize,
    /// Normalized-gas histogram bins over [0, gas-clip].
    #[arg(long, default_value_t = 50)]
    pub b_gas: usize,
    /// Normalized gas ratios above this are dropped from the histogram.
    #[arg(long, default_value_t = 5.0)]
    pub gas_clip: f64,
    /// Profile only addresses with at least this many sent transactions.
    #[arg(long, default_value_t = 1)]
    pub min_sent: usize,
    /// Also write the reference daily-average gas series here.
    #[arg(long)]
    pub daily_gas: Option<PathBuf>,
}

pub fn run(args: &FeaturesArgs) -> Result<(), CliError> {
    let corpus = common::load_corpus(&args.input)?;
    let cfg = FeatureConfig { b_hour: args.b_hour, b_gas: args.b_gas, gas_clip: args.gas_clip };
    let features = common::profile_features(&corpus, &cfg, args.min_sent, &args.kind)?;
    if features.is_empty() {
        return Err(CliError::validation(format!(
            "no address has at least {} sent transactions",
            args.min_sent
        )));
    }
    let dim = features[0].values.len();

    let mut sidecar = SidecarBuilder::new(None);
    sidecar.input(&args.input)?;
    let params = serde_json::to_value(cfg).expect("feature config serializes");

    let mut out = OutputSet::new();
    let mut bytes = Vec::new();
    write_features_csv(&mut bytes, &features)?;
    out.stage(&args.out, &bytes)?;
    sidecar.stage_for(
        &mut out,
        &args.out,
        &[
            ("kind", serde_json::Value::String(args.kind.clone())),
            ("feature_config", params.clone()),
            ("min_sent", serde_json::Value::from(args.min_sent)),
            ("addresses", serde_json::Value::from(features.len())),
        ],
    )?;

    if let Some(daily) = &args.daily_gas {
        let series = daily_average_gas_price(&corpus);
        let mut bytes = Vec::new();
        series.write_csv(&mut bytes)?;
        out.stage(daily, &bytes)?;
        sidecar.stage_for(&mut out, daily, &[("days", serde_json::Value::from(series.len()))])?;
    }

    out.commit()?;
    println!(
        "profiled {} addresses (kind={}, dim={}) -> {}",
        features.len(),
        args.kind,
        dim,
        args.out.display()
    );
    Ok(())
}
