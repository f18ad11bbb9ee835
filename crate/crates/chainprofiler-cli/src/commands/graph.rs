use std::path::PathBuf;

use chainprofiler::txgraph::{build_graph, preprocess};

use crate::commands::common;
use crate::errors::CliError;
use crate::meta::SidecarBuilder;
use crate::staging::OutputSet;

#[derive(Debug, clap::Args)]
pub struct GraphArgs {
    /// Transaction corpus (CSV or JSONL).
    #[arg(long)]
    pub input: PathBuf,
    /// Edge-list CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep the raw graph: skip largest-component extraction and
    /// degree-1 pruning.
    #[arg(long)]
    pub raw: bool,
    /// Also write the addresses preprocessing removed.
    #[arg(long, conflicts_with = "raw")]
    pub removed: Option<PathBuf>,
}

pub fn run(args: &GraphArgs) -> Result<(), CliError> {
    let corpus = common::load_corpus(&args.input)?;
    let full = build_graph(&corpus);
    let (raw_nodes, raw_edges) = (full.node_count(), full.edge_count());
    let (graph, removed) = if args.raw { (full, Vec::new()) } else { preprocess(&full)? };

    let mut sidecar = SidecarBuilder::new(None);
    sidecar.input(&args.input)?;

    let mut out = OutputSet::new();
    let mut bytes = Vec::new();
    graph.write_edge_csv(&mut bytes)?;
    out.stage(&args.out, &bytes)?;
    sidecar.stage_for(
        &mut out,
        &args.out,
        &[
            ("raw", serde_json::Value::Bool(args.raw)),
            ("nodes", serde_json::Value::from(graph.node_count())),
            ("edges", serde_json::Value::from(graph.edge_count())),
            ("removed", serde_json::Value::from(removed.len())),
        ],
    )?;

    if let Some(removed_path) = &args.removed {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["address"]).expect("write to Vec cannot fail");
        for a in &removed {
            w.write_record([a.to_string()]).expect("write to Vec cannot fail");
        }
        let bytes = w.into_inner().expect("flush to Vec cannot fail");
        out.stage(removed_path, &bytes)?;
        sidecar.stage_for(
            &mut out,
            removed_path,
            &[("removed", serde_json::Value::from(removed.len()))],
        )?;
    }

    out.commit()?;
    println!(
        "graph: {} nodes, {} edges (raw {raw_nodes} nodes, {raw_edges} edges; removed {}) -> {}",
        graph.node_count(),
        graph.edge_count(),
        removed.len(),
        args.out.display()
    );
    Ok(())
}
