use std::path::PathBuf;

use chainprofiler::fingerprint::{fingerprint_report, BalanceLedger, FingerprintReport};
use chainprofiler::ingest::Transaction;

use crate::commands::common;
use crate::errors::CliError;
use crate::meta::SidecarBuilder;
use crate::staging::OutputSet;

#[derive(Debug, clap::Args)]
pub struct FingerprintArgs {
    /// Transaction corpus (CSV or JSONL).
    #[arg(long)]
    pub input: PathBuf,
    /// Report JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Fingerprint width: the last N decimal digits of the balance.
    #[arg(long, default_value_t = 9)]
    pub digits: u32,
    /// Comma-separated sent-transaction cutoffs; the unlimited band is
    /// always appended.
    #[arg(long, default_value = "50,100,500")]
    pub cutoffs: String,
}

pub fn parse_cutoffs(raw: &str) -> Result<Vec<Option<u64>>, CliError> {
    let mut cutoffs = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let n: u64 = part
            .parse()
            .map_err(|e| CliError::validation(format!("cutoff {part:?}: {e}")))?;
        if n == 0 {
            return Err(CliError::validation("cutoffs must be positive"));
        }
        cutoffs.push(Some(n));
    }
    cutoffs.push(None);
    Ok(cutoffs)
}

/// Replays the corpus and renders the survival report, shared with the
/// pipeline stage.
pub fn build_report(
    corpus: &[Transaction],
    digits: u32,
    cutoffs: &[Option<u64>],
) -> Result<(FingerprintReport, Vec<u8>), CliError> {
    if !(1..=18).contains(&digits) {
        return Err(CliError::validation("--digits must be in [1, 18]"));
    }
    let ledger = BalanceLedger::replay(corpus);
    let report = fingerprint_report(&ledger, digits, cutoffs)?;
    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    Ok((report, json))
}

pub fn print_summary(report: &FingerprintReport) {
    println!(
        "balance replay: digits={}, tail exponent k={}{}",
        report.digits,
        report
            .power_law_k
            .map(|k| format!("{k:.4}"))
            .unwrap_or_else(|| "unavailable".to_string()),
        if report.approximate_ledger { " (approximate: some balances dipped negative)" } else { "" }
    );
    for row in &report.rows {
        let cutoff = row.cutoff.map(|c| c.to_string()).unwrap_or_else(|| "all".to_string());
        println!(
            "cutoff {cutoff:>5}: addresses={} txs={} changing={} p={:.4} survival(avg)={:.4}%{}",
            row.addresses,
            row.txs,
            row.fingerprinting_txs,
            row.p,
            row.survival_point * 100.0,
            row.survival_integral
                .map(|s| format!(" survival(tail)={:.4}%", s * 100.0))
                .unwrap_or_default()
        );
    }
}

pub fn run(args: &FingerprintArgs) -> Result<(), CliError> {
    let corpus = common::load_corpus(&args.input)?;
    let cutoffs = parse_cutoffs(&args.cutoffs)?;
    let (report, json) = build_report(&corpus, args.digits, &cutoffs)?;

    let mut sidecar = SidecarBuilder::new(None);
    sidecar.input(&args.input)?;
    let mut out = OutputSet::new();
    out.stage(&args.out, &json)?;
    sidecar.stage_for(
        &mut out,
        &args.out,
        &[("digits", serde_json::Value::from(args.digits))],
    )?;
    out.commit()?;

    print_summary(&report);
    println!("wrote {}", args.out.display());
    Ok(())
}
