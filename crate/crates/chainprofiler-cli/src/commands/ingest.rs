use std::path::PathBuf;

use chainprofiler::ingest::{
    filter_active_addresses, load_labels, service_exposure, write_transactions_csv, ApiClient,
    ClientConfig,
};
use chainprofiler::types::Address;

use crate::commands::common;
use crate::errors::CliError;
use crate::meta::SidecarBuilder;
use crate::staging::OutputSet;

#[derive(Debug, clap::Args)]
pub struct IngestArgs {
    /// Transaction corpus file, CSV or JSONL; repeat to merge several.
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    /// File of addresses (one per line) to fetch via the explorer API;
    /// configure with CHAINPROFILER_API_URL / _API_KEY / _CACHE_DIR.
    #[arg(long)]
    pub fetch: Option<PathBuf>,
    /// Merged canonical corpus CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Service label CSV (address,name,category) for the exposure report.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Output CSV of per-category exposure fractions.
    #[arg(long, requires = "labels")]
    pub exposure: Option<PathBuf>,
    /// Exposure report covers addresses with at least this many sent txs.
    #[arg(long, default_value_t = 1)]
    pub min_sent: usize,
}

pub fn run(args: &IngestArgs) -> Result<(), CliError> {
    if args.inputs.is_empty() && args.fetch.is_none() {
        return Err(CliError::validation(
            "nothing to ingest: provide --input files and/or a --fetch address list",
        ));
    }

    let mut all = Vec::new();
    let mut sidecar = SidecarBuilder::new(None);
    for path in &args.inputs {
        all.extend(common::load_corpus(path)?);
        sidecar.input(path)?;
    }
    let mut fetched_addresses = 0usize;
    if let Some(list) = &args.fetch {
        sidecar.input(list)?;
        let text = std::fs::read_to_string(list)
            .map_err(|e| CliError::Io(format!("{}: {e}", list.display())))?;
        let client = ApiClient::new(ClientConfig::from_env()?)?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let address = Address::parse(line).map_err(|e| {
                CliError::validation(format!("{}:{}: {e}", list.display(), i + 1))
            })?;
            all.extend(client.fetch_address_history(&address)?);
            fetched_addresses += 1;
        }
    }

    let merged = common::merge_corpora(all)?;
    if merged.is_empty() {
        return Err(CliError::validation("merged corpus is empty"));
    }

    let mut out = OutputSet::new();
    let mut csv_bytes = Vec::new();
    write_transactions_csv(&mut csv_bytes, &merged)?;
    out.stage(&args.out, &csv_bytes)?;
    sidecar.stage_for(
        &mut out,
        &args.out,
        &[("transactions", serde_json::Value::from(merged.len()))],
    )?;

    let mut exposure_summary = None;
    if let (Some(labels_path), Some(exposure_path)) = (&args.labels, &args.exposure) {
        let f = std::fs::File::open(labels_path)
            .map_err(|e| CliError::Io(format!("{}: {e}", labels_path.display())))?;
        let labels = load_labels(f).map_err(|e| common::with_path(labels_path, e.into()))?;
        let active = filter_active_addresses(&merged, args.min_sent);
        let report = service_exposure(&active, &labels, &merged);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["category", "fraction"]).expect("write to Vec cannot fail");
        for (category, fraction) in &report {
            w.write_record([category.clone(), fraction.to_string()])
                .expect("write to Vec cannot fail");
        }
        let bytes = w.into_inner().expect("flush to Vec cannot fail");
        out.stage(exposure_path, &bytes)?;
        let mut exposure_sidecar = sidecar.clone();
        exposure_sidecar.input(labels_path)?;
        exposure_sidecar.stage_for(
            &mut out,
            exposure_path,
            &[
                ("categories", serde_json::Value::from(report.len())),
                ("active_addresses", serde_json::Value::from(active.len())),
            ],
        )?;
        exposure_summary = Some((report.len(), active.len()));
    }

    out.commit()?;
    println!(
        "ingested {} transactions from {} file(s){} -> {}",
        merged.len(),
        args.inputs.len(),
        if fetched_addresses > 0 {
            format!(" and {fetched_addresses} fetched address(es)")
        } else {
            String::new()
        },
        args.out.display()
    );
    if let Some((categories, active)) = exposure_summary {
        println!(
            "exposure report: {categories} categories over {active} active addresses -> {}",
            args.exposure.as_ref().expect("exposure path present").display()
        );
    }
    Ok(())
}
