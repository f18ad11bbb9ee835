use std::path::PathBuf;

use chainprofiler::embeddings::{embed_graph, write_embeddings_csv, WalkParams};
use chainprofiler::txgraph::TransactionGraph;

use crate::commands::common;
use crate::errors::CliError;
use crate::meta::SidecarBuilder;
use crate::staging::OutputSet;

#[derive(Debug, clap::Args)]
pub struct EmbedArgs {
    /// Edge-list CSV (addr_a,addr_b).
    #[arg(long)]
    pub graph: PathBuf,
    /// Walk strategy: diffusion | role.
    #[arg(long, default_value = "diffusion")]
    pub strategy: String,
    /// Embedding CSV to write (a .meta.json sidecar records the params).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 10)]
    pub walks_per_node: usize,
    /// Diffusion-tree size per walk (diffusion strategy).
    #[arg(long, default_value_t = 40)]
    pub cover_size: usize,
    /// Steps per walk (role strategy).
    #[arg(long, default_value_t = 40)]
    pub walk_length: usize,
    /// Max skip-gram context radius.
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    /// Negative samples per positive pair.
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    pub learning_rate: f64,
    /// RNG seed; drawn and printed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trainer threads; 1 is bit-reproducible.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

pub fn run(args: &EmbedArgs) -> Result<(), CliError> {
    if args.workers == 0 {
        return Err(CliError::validation("--workers must be at least 1"));
    }
    let file = std::fs::File::open(&args.graph)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.graph.display())))?;
    let graph = TransactionGraph::read_edge_csv(file)
        .map_err(|e| common::with_path(&args.graph, e.into()))?;

    let seed = args.seed.unwrap_or_else(|| {
        let s = common::draw_seed();
        println!("seed: {s}");
        s
    });
    let params = WalkParams {
        dim: args.dim,
        walks_per_node: args.walks_per_node,
        cover_size: args.cover_size,
        walk_length: args.walk_length,
        window: args.window,
        negatives: args.negatives,
        epochs: args.epochs,
        learning_rate_initial: args.learning_rate,
        seed,
    };
    let table = embed_graph(&graph, &args.strategy, &params, args.workers)?;

    let mut sidecar = SidecarBuilder::new(Some(seed));
    sidecar.input(&args.graph)?;
    let mut out = OutputSet::new();
    let mut bytes = Vec::new();
    write_embeddings_csv(&mut bytes, &table)?;
    out.stage(&args.out, &bytes)?;
    sidecar.stage_for(
        &mut out,
        &args.out,
        &[
            ("algorithm", serde_json::Value::String(table.algorithm.clone())),
            ("params", serde_json::to_value(&table.params).expect("params serialize")),
            ("workers", serde_json::Value::from(args.workers)),
        ],
    )?;
    out.commit()?;
    println!(
        "embedded {} nodes into {} dimensions (strategy={}, seed={seed}) -> {}",
        graph.node_count(),
        table.dim(),
        table.algorithm,
        args.out.display()
    );
    Ok(())
}
