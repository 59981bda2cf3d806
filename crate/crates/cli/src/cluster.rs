//! `cluster`: embedding container + mask container -> instance map.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use lanekit_core::io::{read_embedding, read_mask, write_instances};
use lanekit_core::{threshold_cluster, ClusterConfig, ClusterError, InstanceMap};

use crate::CliError;

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    /// Embedding container (LKIT kind 0).
    #[arg(long)]
    pub embedding: PathBuf,
    /// Lane-pixel mask container (LKIT kind 1).
    #[arg(long)]
    pub mask: PathBuf,
    /// Pull margin; the default radius is twice this.
    #[arg(long, default_value_t = 0.5)]
    pub delta_v: f64,
    /// Clustering radius [default: 2 * delta-v].
    #[arg(long)]
    pub radius: Option<f64>,
    /// Seed for picking starting pixels.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Always start from the lowest unassigned pixel index.
    #[arg(long)]
    pub deterministic: bool,
    /// Drop clusters with fewer pixels than this (relabelling the rest).
    #[arg(long, default_value_t = 1)]
    pub min_pixels: usize,
    /// Where to write the instance map (text format).
    #[arg(long)]
    pub out: PathBuf,
}

fn open(path: &PathBuf) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Returns the map and the instance count L, which is also printed.
pub fn run(args: &ClusterArgs) -> Result<(InstanceMap, u32), CliError> {
    let radius = args.radius.unwrap_or(2.0 * args.delta_v);
    let field = read_embedding(open(&args.embedding)?, &args.embedding.display().to_string())?;
    let mask = read_mask(open(&args.mask)?, &args.mask.display().to_string())?;
    let config = ClusterConfig::new(radius)
        .with_seed(args.seed)
        .deterministic(args.deterministic)
        .with_min_pixels(args.min_pixels);
    let (map, count) = threshold_cluster(&field, &mask, &config).map_err(|e| match e {
        ClusterError::InvalidRadius(_) => CliError::Usage(e.to_string()),
        other => CliError::Input(format!(
            "{} vs {}: {other}",
            args.embedding.display(),
            args.mask.display()
        )),
    })?;
    let file = File::create(&args.out).map_err(|e| CliError::Internal(format!("{}: {e}", args.out.display())))?;
    let mut w = BufWriter::new(file);
    write_instances(&mut w, &map)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::Internal(format!("{}: {e}", args.out.display())))?;
    println!("{count}");
    Ok((map, count))
}
