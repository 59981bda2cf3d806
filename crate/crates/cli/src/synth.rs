//! `synth`: write a synthetic corpus in benchmark layouts.
//!
//! Layout under `--out`:
//!
//! ```text
//! tusimple/gt.json, tusimple/pred.json
//! culane/list.txt, culane/categories.txt
//! culane/gt/synth/<category>/<frame>.lines.txt   (and culane/pred/...)
//! embeddings/<frame>.emb, <frame>.mask, <frame>.instances.txt
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use lanekit_core::io::{
    format_lines, format_tusimple_record, lines_path, write_embedding, write_instances, write_mask, CategoryMap,
};
use lanekit_core::synth::{frame_category, frame_seed, generate_lanes, generate_scene, SceneSpec};
use lanekit_core::{Category, ImageGrid, SynthError};
use rayon::prelude::*;

use crate::{parse_grid, CliError, CorpusFormat, ThreadArgs};

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = CorpusFormat::Both)]
    pub format: CorpusFormat,
    #[arg(long, default_value_t = 50)]
    pub frames: u64,
    /// Lanes per frame (1 to 8).
    #[arg(long, default_value_t = 4)]
    pub lanes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of prediction x noise, pixels.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Quadratic lane term as a fraction of the image width.
    #[arg(long, default_value_t = 0.1)]
    pub curvature: f64,
    /// Probability of dropping one predicted lane per frame.
    #[arg(long, default_value_t = 0.1)]
    pub drop_prob: f64,
    /// Probability of adding one spurious predicted lane per frame.
    #[arg(long, default_value_t = 0.1)]
    pub add_prob: f64,
    /// Image size as WxH [default: 1280x720 for TuSimple, 1640x590 for CULane].
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<ImageGrid>,
    /// Lane width for instance maps and lane spacing, pixels.
    #[arg(long, default_value_t = 30)]
    pub width: u32,
    /// Annotated rows per lane.
    #[arg(long, default_value_t = 56)]
    pub samples: usize,
    /// Lower bound on the spacing between neighbouring lanes, pixels.
    #[arg(long, default_value_t = 0.0)]
    pub min_gap: f64,
    /// Pull margin for the generated embeddings.
    #[arg(long, default_value_t = 0.5)]
    pub delta_v: f64,
    /// Push margin for the generated embeddings; must exceed 6 * delta-v.
    #[arg(long, default_value_t = 3.1)]
    pub delta_d: f64,
    /// Embedding dimension.
    #[arg(long, default_value_t = 2)]
    pub embedding_dim: usize,
    /// How many frames also get embedding, mask and instance files.
    #[arg(long, default_value_t = 1)]
    pub embedding_frames: u64,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

/// Paths written by [`run`].
#[derive(Debug, Clone, Default)]
pub struct SynthOutput {
    pub tusimple_gt: Option<PathBuf>,
    pub tusimple_pred: Option<PathBuf>,
    pub culane_list: Option<PathBuf>,
    pub culane_categories: Option<PathBuf>,
    pub culane_gt_root: Option<PathBuf>,
    pub culane_pred_root: Option<PathBuf>,
    /// (embedding, mask, ground-truth instances, lane count) per frame.
    pub embeddings: Vec<(PathBuf, PathBuf, PathBuf, usize)>,
}

impl SynthArgs {
    pub fn spec(&self, grid: ImageGrid, index: u64) -> SceneSpec {
        SceneSpec {
            curvature: self.curvature,
            jitter: self.jitter,
            embedding_dim: self.embedding_dim,
            delta_v: self.delta_v,
            delta_d: self.delta_d,
            lane_width: self.width,
            samples: self.samples,
            drop_prob: self.drop_prob,
            add_prob: self.add_prob,
            min_gap: self.min_gap,
            ..SceneSpec::new(grid, self.lanes, frame_seed(self.seed, index))
        }
    }
}

/// Frame id in the CULane list, e.g. `/synth/night/00012.jpg`.
pub fn culane_id(index: u64) -> String {
    format!("/synth/{}/{index:05}.jpg", frame_category(index).name())
}

fn infeasible(e: SynthError) -> CliError {
    CliError::Usage(format!("infeasible scene spec: {e}"))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Internal(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn write_tusimple(args: &SynthArgs, dir: &Path, out: &mut SynthOutput) -> Result<(), CliError> {
    let grid = args.grid.unwrap_or(ImageGrid::TUSIMPLE);
    let lines = args.threads.install(|| {
        (0..args.frames)
            .into_par_iter()
            .map(|i| {
                let lanes = generate_lanes(&args.spec(grid, i)).map_err(infeasible)?;
                let (gt, pred) = lanes.tusimple_records(grid, &format!("clips/synth/{i:05}/20.jpg"));
                Ok((
                    format_tusimple_record(&gt.lanes, &gt.h_samples, &gt.raw_file),
                    format_tusimple_record(&pred.lanes, &pred.h_samples, &pred.raw_file),
                ))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })??;
    let (gt, pred): (String, String) = lines.into_iter().unzip();
    let (gt_path, pred_path) = (dir.join("gt.json"), dir.join("pred.json"));
    write_file(&gt_path, gt.as_bytes())?;
    write_file(&pred_path, pred.as_bytes())?;
    out.tusimple_gt = Some(gt_path);
    out.tusimple_pred = Some(pred_path);
    Ok(())
}

fn write_culane(args: &SynthArgs, dir: &Path, out: &mut SynthOutput) -> Result<(), CliError> {
    let grid = args.grid.unwrap_or(ImageGrid::CULANE);
    let (gt_root, pred_root) = (dir.join("gt"), dir.join("pred"));
    let ids = args.threads.install(|| {
        (0..args.frames)
            .into_par_iter()
            .map(|i| {
                let lanes = generate_lanes(&args.spec(grid, i)).map_err(infeasible)?;
                let id = culane_id(i);
                let frame = lanes.culane_frame(&id, grid, frame_category(i));
                write_file(&lines_path(&gt_root, &id), format_lines(&frame.gt_lanes).as_bytes())?;
                write_file(&lines_path(&pred_root, &id), format_lines(&frame.pred_lanes).as_bytes())?;
                Ok(id)
            })
            .collect::<Result<Vec<_>, CliError>>()
    })??;
    let mut list = ids.join("\n");
    list.push('\n');
    let list_path = dir.join("list.txt");
    write_file(&list_path, list.as_bytes())?;
    let mut categories = CategoryMap::default();
    for c in Category::ALL {
        categories.insert(format!("/synth/{}/", c.name()), c);
    }
    let cat_path = dir.join("categories.txt");
    write_file(&cat_path, categories.format().as_bytes())?;
    out.culane_list = Some(list_path);
    out.culane_categories = Some(cat_path);
    out.culane_gt_root = Some(gt_root);
    out.culane_pred_root = Some(pred_root);
    Ok(())
}

fn write_embeddings(args: &SynthArgs, dir: &Path, out: &mut SynthOutput) -> Result<(), CliError> {
    let grid = args.grid.unwrap_or(match args.format {
        CorpusFormat::Tusimple => ImageGrid::TUSIMPLE,
        _ => ImageGrid::CULANE,
    });
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for i in 0..args.embedding_frames.min(args.frames) {
        let scene = generate_scene(&args.spec(grid, i)).map_err(infeasible)?;
        let stem = format!("{i:05}");
        let paths = (
            dir.join(format!("{stem}.emb")),
            dir.join(format!("{stem}.mask")),
            dir.join(format!("{stem}.instances.txt")),
        );
        let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| io_err(p, e));
        let mut w = create(&paths.0)?;
        write_embedding(&mut w, &scene.field)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&paths.0, e))?;
        let mut w = create(&paths.1)?;
        write_mask(&mut w, &scene.mask)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&paths.1, e))?;
        let mut w = create(&paths.2)?;
        write_instances(&mut w, &scene.instances)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&paths.2, e))?;
        out.embeddings.push((paths.0, paths.1, paths.2, args.lanes));
    }
    Ok(())
}

pub fn run(args: &SynthArgs) -> Result<SynthOutput, CliError> {
    if args.frames == 0 {
        return Err(CliError::Usage("--frames must be at least 1".into()));
    }
    // fail fast on an impossible spec before touching the output directory
    let probe = args.grid.unwrap_or(ImageGrid::CULANE);
    generate_lanes(&args.spec(probe, 0)).map_err(infeasible)?;

    let mut out = SynthOutput::default();
    if matches!(args.format, CorpusFormat::Tusimple | CorpusFormat::Both) {
        write_tusimple(args, &args.out.join("tusimple"), &mut out)?;
    }
    if matches!(args.format, CorpusFormat::Culane | CorpusFormat::Both) {
        write_culane(args, &args.out.join("culane"), &mut out)?;
    }
    write_embeddings(args, &args.out.join("embeddings"), &mut out)?;
    println!(
        "wrote {} frame(s) and {} embedding file set(s) to {}",
        args.frames,
        out.embeddings.len(),
        args.out.display()
    );
    Ok(out)
}
