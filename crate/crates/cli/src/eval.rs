//! `eval-tusimple` and `eval-culane`.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::Args;
use lanekit_core::io::{
    load_frame, read_tusimple, render_table, write_report, CategoryMap, DatasetManifest, MissingPrediction,
};
use lanekit_core::metrics::{
    check_culane_params, check_tusimple_params, culane_config, culane_frame_counts, report_from_sums,
    tusimple_frame_counts, tusimple_report, Counts, TuSimpleCounts, CULANE_LANE_WIDTH, DEFAULT_IOU_THRESHOLD,
    DEFAULT_LANE_CORRECT_FRACTION, DEFAULT_X_TOLERANCE,
};
use lanekit_core::{EvalReport, ImageGrid};
use rayon::prelude::*;

use crate::{parse_grid, CliError, OutArgs, ThreadArgs};

#[derive(Debug, Clone, Args)]
pub struct TusimpleArgs {
    /// Ground-truth JSON-lines file.
    #[arg(long)]
    pub gt: PathBuf,
    /// Prediction JSON-lines file, matched to ground truth by raw_file.
    #[arg(long)]
    pub pred: PathBuf,
    /// Horizontal tolerance for a correct point, pixels.
    #[arg(long, default_value_t = DEFAULT_X_TOLERANCE)]
    pub x_tol: f64,
    /// Fraction of a lane's points that must be correct for it to count as detected.
    #[arg(long, default_value_t = DEFAULT_LANE_CORRECT_FRACTION)]
    pub lane_fraction: f64,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CulaneArgs {
    /// List file with one frame path per line.
    #[arg(long)]
    pub list: PathBuf,
    /// Root of the ground-truth .lines.txt tree.
    #[arg(long)]
    pub gt_root: PathBuf,
    /// Root of the prediction .lines.txt tree.
    #[arg(long)]
    pub pred_root: PathBuf,
    /// Category table: lines of `<path prefix> <category>`. Unmatched frames count as normal.
    #[arg(long)]
    pub categories: Option<PathBuf>,
    /// Lane width used to rasterize both sides, pixels.
    #[arg(long, default_value_t = CULANE_LANE_WIDTH)]
    pub width: u32,
    /// A match needs IoU strictly above this.
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou: f64,
    /// Image size as WxH.
    #[arg(long, default_value = "1640x590", value_parser = parse_grid)]
    pub grid: ImageGrid,
    /// Fail on a missing prediction file instead of scoring it as empty.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn emit(report: &EvalReport, out: &OutArgs) -> Result<(), CliError> {
    print!("{}", render_table(report));
    if let Some(dir) = &out.out {
        write_report(report, dir).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    Ok(())
}

pub fn tusimple(args: &TusimpleArgs) -> Result<EvalReport, CliError> {
    check_tusimple_params(args.x_tol, args.lane_fraction).map_err(|e| CliError::Usage(e.to_string()))?;
    let gt_path = args.gt.display().to_string();
    let pred_path = args.pred.display().to_string();
    let gt = read_tusimple(open(&args.gt)?, &gt_path)?;
    let pred = read_tusimple(open(&args.pred)?, &pred_path)?;
    let frames = lanekit_core::io::pair_tusimple(gt, pred, &pred_path)?;
    if frames.is_empty() {
        return Err(CliError::Input(format!("{gt_path}: no frames")));
    }
    let per_frame = args.threads.install(|| {
        frames
            .par_iter()
            .map(|f| tusimple_frame_counts(f, args.x_tol, args.lane_fraction))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let per_frame = per_frame.map_err(|e| CliError::Input(e.to_string()))?;
    let mut total = TuSimpleCounts::default();
    for c in per_frame {
        total += c;
    }
    Ok(tusimple_report(
        frames.len() as u64,
        total,
        args.x_tol,
        args.lane_fraction,
    ))
}

pub fn run_tusimple(args: &TusimpleArgs) -> Result<EvalReport, CliError> {
    let report = tusimple(args)?;
    emit(&report, &args.out)?;
    Ok(report)
}

pub fn culane(args: &CulaneArgs) -> Result<EvalReport, CliError> {
    check_culane_params(args.width, args.iou).map_err(|e| CliError::Usage(e.to_string()))?;
    let categories = match &args.categories {
        Some(p) => Some(CategoryMap::parse(open(p)?, &p.display().to_string())?),
        None => None,
    };
    let manifest = DatasetManifest::from_list(
        &args.gt_root,
        open(&args.list)?,
        &args.list.display().to_string(),
        categories.as_ref(),
    )?;
    if manifest.is_empty() {
        return Err(CliError::Input(format!("{}: no frames listed", args.list.display())));
    }
    let missing = if args.strict {
        MissingPrediction::Error
    } else {
        MissingPrediction::Empty
    };
    // each worker loads and scores whole frames; results come back in list order
    let results = args.threads.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|entry| -> Result<_, CliError> {
                let loaded = load_frame(entry, &args.pred_root, args.grid, missing)?;
                let counts = culane_frame_counts(&loaded.frame, args.width, args.iou)
                    .map_err(|e| CliError::Input(format!("{}: {e}", loaded.frame.id)))?;
                Ok((
                    loaded.frame.category,
                    counts,
                    loaded.prediction_missing,
                    loaded.frame.id,
                ))
            })
            .collect::<Vec<_>>()
    })?;
    let mut sums = [Counts::default(); 9];
    let mut frames = [0u64; 9];
    let mut missing_count = 0usize;
    for r in results {
        let (category, counts, was_missing, id) = r?;
        if was_missing {
            log::warn!("no prediction for {id}; scored as empty");
            missing_count += 1;
        }
        sums[category as usize] += counts;
        frames[category as usize] += 1;
    }
    if missing_count > 0 {
        log::warn!("{missing_count} prediction file(s) missing");
    }
    let mut report = report_from_sums(&sums, &frames);
    report.config = culane_config(args.width, args.iou);
    Ok(report)
}

pub fn run_culane(args: &CulaneArgs) -> Result<EvalReport, CliError> {
    let report = culane(args)?;
    emit(&report, &args.out)?;
    Ok(report)
}
