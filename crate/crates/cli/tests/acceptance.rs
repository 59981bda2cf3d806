//! Acceptance checks, one PASS/FAIL line each. Exits non-zero on any failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{brute_iou, brute_max_matching, brute_raster, mask_bits, random_lane, shifted};
use lanekit_core::gradcheck::{bce_instance, clustering_instance, l2_instance, GradInstance, DEFAULT_STEP};
use lanekit_core::io::{format_lines, format_tusimple_record, parse_lines, read_tusimple, report_from_json};
use lanekit_core::metrics::culane_frame_counts;
use lanekit_core::synth::{frame_seed, generate_lanes, recovery_trial, separation_holds, SceneSpec};
use lanekit_core::{
    distance_loss, mask_iou, partition_agreement, rasterize_lane, threshold_cluster, variance_loss, Category,
    ClusterAssignment, ClusterConfig, CulaneFrame, EmbeddingField, EvalReport, ImageGrid, InstanceMap, LanePolyline,
    LossParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn lanekit(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lanekit"))
        .args(args)
        .env_remove("LANEKIT_THREADS")
        .output()
        .expect("spawn lanekit")
}

fn lanekit_ok(args: &[&str]) -> Result<std::process::Output, String> {
    let out = lanekit(args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_report(dir: &Path) -> Result<EvalReport, String> {
    let text = std::fs::read_to_string(dir.join("report.json")).map_err(|e| e.to_string())?;
    report_from_json(&text, "report.json").map_err(|e| e.to_string())
}

/// Largest |F1 - 2PR/(P+R)| over every row of the report.
fn f1_identity_gap(report: &EvalReport) -> f64 {
    report
        .summaries()
        .map(|s| {
            let (p, r) = (s.precision, s.recall);
            let expected = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            (s.f1 - expected).abs()
        })
        .fold(0.0, f64::max)
}

fn gradients() -> Outcome {
    let start = Instant::now();
    type Maker = fn(u64) -> GradInstance;
    let makers: [(&str, Maker); 3] = [
        ("clustering_loss", |s| clustering_instance(s, DEFAULT_STEP)),
        ("weighted_binary_ce", bce_instance),
        ("l2_loss", l2_instance),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, make) in makers {
        let mut worst = 0.0f64;
        for seed in 0..100 {
            match make(seed).check(DEFAULT_STEP) {
                Ok(e) if e.is_finite() => worst = worst.max(e),
                _ => {
                    worst = f64::INFINITY;
                    break;
                }
            }
        }
        pass &= worst <= 1e-6;
        parts.push(format!("{name} {worst:.2e}"));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(10);
    Outcome::new(pass, format!("max rel err: {}; {}", parts.join(", "), secs(elapsed)))
}

fn loss_fixtures() -> Outcome {
    let grid = ImageGrid::new(2, 1).unwrap();
    let field = EmbeddingField::from_vec(grid, 1, vec![0.0, 4.0]).unwrap();
    let assign = ClusterAssignment::new(vec![(0, 1), (1, 1)], 1).unwrap();
    // mean 2, squared distance 4, (4 - 1)^2 = 9 for each pixel
    let pull_oracle = ((4.0f64 - 1.0).max(0.0)).powi(2);
    let pull = LossParams::new(1.0, 7.0)
        .and_then(|p| variance_loss(&field, &assign, &p))
        .map(|v| v.value);
    // squared mean distance 1, (4 - 1)^2 = 9 for each ordered pair
    let push_oracle = ((4.0f64 - 1.0).max(0.0)).powi(2);
    let push = LossParams::new(0.5, 4.0)
        .and_then(|p| distance_loss(&[vec![0.0], vec![1.0]], &p))
        .map(|v| v.value);
    match (pull, push) {
        (Ok(a), Ok(b)) => Outcome::new(
            (a - pull_oracle).abs() <= 1e-12 && (b - push_oracle).abs() <= 1e-12 && pull_oracle == 9.0,
            format!("pull {a} push {b} (expected 9)"),
        ),
        (a, b) => Outcome::new(false, format!("pull {a:?} push {b:?}")),
    }
}

fn descent_then_cluster() -> Outcome {
    let start = Instant::now();
    let mut recovered = 0;
    let mut separated_at_start = 0;
    for seed in 0..100 {
        match recovery_trial(seed, 500, 0.1) {
            Ok(t) => {
                recovered += (t.ari_after == 1.0) as usize;
                separated_at_start += (t.ari_before == 1.0) as usize;
            }
            Err(e) => return Outcome::new(false, format!("seed {seed}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        recovered >= 95 && elapsed < Duration::from_secs(60),
        format!(
            "ARI 1.0 on {recovered}/100 scenes ({separated_at_start} already clustered before descent); {}",
            secs(elapsed)
        ),
    )
}

/// Clusters on the separation boundary, pixels interleaved across lanes.
fn separated_field(seed: u64, lanes: usize, per_lane: usize, delta_v: f64) -> (EmbeddingField, InstanceMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 3;
    let delta_d = 6.0 * delta_v + 1e-9;
    let n = lanes * per_lane * 2;
    let grid = ImageGrid::new(n as u32, 1).unwrap();
    let mut pixels = Vec::with_capacity(n);
    for k in 0..lanes {
        for _ in 0..per_lane {
            let dir: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r = rng.random_range(0.0..0.999) * delta_v;
            for sign in [1.0, -1.0] {
                let v: Vec<f64> = dir
                    .iter()
                    .enumerate()
                    .map(|(d, x)| if d == 0 { k as f64 * delta_d } else { 0.0 } + sign * x / norm * r)
                    .collect();
                pixels.push((v, k as u32 + 1));
            }
        }
    }
    for i in (1..n).rev() {
        pixels.swap(i, rng.random_range(0..=i));
    }
    let data = pixels.iter().flat_map(|(v, _)| v.clone()).collect();
    let labels = pixels.iter().map(|(_, l)| *l).collect();
    (
        EmbeddingField::from_vec(grid, dim, data).unwrap(),
        InstanceMap::from_labels(grid, labels).unwrap(),
    )
}

fn exact_recovery() -> Outcome {
    let delta_v = 0.5;
    let (field, truth) = separated_field(11, 5, 20, delta_v);
    if !separation_holds(&field, &truth, delta_v) {
        return Outcome::new(false, "fixture does not satisfy the separation precondition");
    }
    let mask = truth.support();
    let mut exact = 0;
    for seed in 0..1000 {
        let cfg = ClusterConfig::from_delta_v(delta_v).with_seed(seed);
        if let Ok((found, count)) = threshold_cluster(&field, &mask, &cfg) {
            if count == 5 && partition_agreement(&found, &truth) == Ok(1.0) {
                exact += 1;
            }
        }
    }
    Outcome::new(exact == 1000, format!("exact on {exact}/1000 start orders"))
}

fn matching_and_iou() -> Outcome {
    let grid = ImageGrid::new(160, 90).unwrap();
    let width = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut frames_ok = 0;
    for _ in 0..50 {
        let gt: Vec<LanePolyline> = (0..rng.random_range(0..=5))
            .map(|_| random_lane(&mut rng, grid, 4))
            .collect();
        let mut pred = Vec::new();
        for lane in &gt {
            if rng.random_bool(0.8) {
                pred.push(shifted(lane, rng.random_range(-12.0..12.0)));
            }
        }
        while pred.len() < 5 && rng.random_bool(0.3) {
            pred.push(random_lane(&mut rng, grid, 4));
        }
        let gb: Vec<Vec<bool>> = gt.iter().map(|l| brute_raster(l, width, grid)).collect();
        let pb: Vec<Vec<bool>> = pred.iter().map(|l| brute_raster(l, width, grid)).collect();
        let iou: Vec<Vec<f64>> = gb
            .iter()
            .map(|g| pb.iter().map(|p| brute_iou(g, p)).collect())
            .collect();
        let tp = brute_max_matching(&iou, 0.5) as u64;
        let frame = CulaneFrame::new("f", grid, Category::Normal, gt, pred).unwrap();
        if let Ok(c) = culane_frame_counts(&frame, width, 0.5) {
            let (np, ng) = (frame.pred_lanes.len() as u64, frame.gt_lanes.len() as u64);
            frames_ok += (c.tp == tp && c.fp == np - tp && c.fn_ == ng - tp) as usize;
        }
    }
    let mut pairs_ok = 0;
    for _ in 0..50 {
        let a = random_lane(&mut rng, grid, 5);
        let b = if rng.random_bool(0.5) {
            shifted(&a, rng.random_range(-15.0..15.0))
        } else {
            random_lane(&mut rng, grid, 5)
        };
        let w = rng.random_range(1..=20);
        let expected = brute_iou(&brute_raster(&a, w, grid), &brute_raster(&b, w, grid));
        let (ma, mb) = (rasterize_lane(&a, w, grid), rasterize_lane(&b, w, grid));
        if let (Ok(ma), Ok(mb)) = (ma, mb) {
            let bits_match = mask_bits(&ma) == brute_raster(&a, w, grid);
            pairs_ok += (bits_match && mask_iou(&ma, &mb) == Ok(expected)) as usize;
        }
    }
    Outcome::new(
        frames_ok == 50 && pairs_ok == 50,
        format!("counts exact on {frames_ok}/50 frames, IoU exact on {pairs_ok}/50 pairs"),
    )
}

fn self_evaluation(root: &Path, reports: &mut Vec<EvalReport>) -> Result<Outcome, String> {
    let corpus = root.join("self");
    lanekit_ok(&[
        "synth",
        "--out",
        s(&corpus),
        "--frames",
        "90",
        "--jitter",
        "4",
        "--embedding-frames",
        "0",
    ])?;
    let t = corpus.join("tusimple/gt.json");
    let tus_out = root.join("self_tusimple");
    lanekit_ok(&["eval-tusimple", "--gt", s(&t), "--pred", s(&t), "--out", s(&tus_out)])?;
    let c = corpus.join("culane");
    let cul_out = root.join("self_culane");
    lanekit_ok(&[
        "eval-culane",
        "--list",
        s(&c.join("list.txt")),
        "--gt-root",
        s(&c.join("gt")),
        "--pred-root",
        s(&c.join("gt")),
        "--categories",
        s(&c.join("categories.txt")),
        "--out",
        s(&cul_out),
    ])?;
    let (tus, cul) = (read_report(&tus_out)?, read_report(&cul_out)?);
    let tus_ok = tus.totals.accuracy == Some(1.0) && tus.totals.counts.fp == 0 && tus.totals.counts.fn_ == 0;
    let cul_rows_ok = cul
        .per_category
        .iter()
        .all(|row| row.summary.counts.fp == 0 && (row.category == Category::Crossroad || row.summary.f1 == 1.0));
    let cul_ok = cul.totals.f1 == 1.0 && cul.totals.counts.fp == 0 && cul.totals.counts.fn_ == 0 && cul_rows_ok;
    let detail = format!(
        "TuSimple accuracy {:?} FP {} FN {}; CULane F1 {} FP {} FN {}",
        tus.totals.accuracy,
        tus.totals.counts.fp,
        tus.totals.counts.fn_,
        100.0 * cul.totals.f1,
        cul.totals.counts.fp,
        cul.totals.counts.fn_
    );
    reports.push(tus);
    reports.push(cul);
    Ok(Outcome::new(tus_ok && cul_ok, detail))
}

fn f1_identity(reports: &[EvalReport]) -> Outcome {
    let gap = reports.iter().map(f1_identity_gap).fold(0.0, f64::max);
    Outcome::new(
        gap <= 1e-12,
        format!("max |F1 - 2PR/(P+R)| = {gap:.1e} over {} reports", reports.len()),
    )
}

fn round_trips() -> Outcome {
    let mut tus_text = String::new();
    let mut culane_ok = 0;
    for i in 0..1000u64 {
        let grid = if i % 2 == 0 {
            ImageGrid::TUSIMPLE
        } else {
            ImageGrid::CULANE
        };
        let mut spec = SceneSpec::new(grid, 1 + (i as usize % 4), frame_seed(77, i));
        spec.jitter = 3.0;
        spec.lane_width = 30;
        let Ok(lanes) = generate_lanes(&spec) else {
            return Outcome::new(false, format!("generator failed on frame {i}"));
        };
        let (_, pred) = lanes.tusimple_records(grid, &format!("clips/{i:05}/20.jpg"));
        tus_text.push_str(&format_tusimple_record(&pred.lanes, &pred.h_samples, &pred.raw_file));
        let text = format_lines(&lanes.pred);
        if let Ok(parsed) = parse_lines(text.as_bytes(), "frame.lines.txt") {
            culane_ok += (format_lines(&parsed) == text) as usize;
        }
    }
    let tus_ok = match read_tusimple(tus_text.as_bytes(), "frames.json") {
        Ok(records) => {
            let again: String = records
                .iter()
                .map(|r| format_tusimple_record(&r.lanes, &r.h_samples, &r.raw_file))
                .collect();
            records.len() == 1000 && again == tus_text
        }
        Err(_) => false,
    };
    Outcome::new(
        tus_ok && culane_ok == 1000,
        format!("TuSimple identical: {tus_ok}; CULane identical on {culane_ok}/1000"),
    )
}

fn eval_culane_args(corpus: &Path, out: &Path, threads: &str) -> Vec<String> {
    let c = corpus.join("culane");
    vec![
        "eval-culane".into(),
        "--list".into(),
        s(&c.join("list.txt")).into(),
        "--gt-root".into(),
        s(&c.join("gt")).into(),
        "--pred-root".into(),
        s(&c.join("pred")).into(),
        "--categories".into(),
        s(&c.join("categories.txt")).into(),
        "--out".into(),
        s(out).into(),
        "--threads".into(),
        threads.into(),
    ]
}

fn thread_invariance(root: &Path, reports: &mut Vec<EvalReport>) -> Result<Outcome, String> {
    let corpus = root.join("threads");
    lanekit_ok(&[
        "synth",
        "--out",
        s(&corpus),
        "--format",
        "culane",
        "--frames",
        "500",
        "--jitter",
        "8",
        "--seed",
        "5",
        "--embedding-frames",
        "0",
    ])?;
    let mut outputs = Vec::new();
    for t in ["1", "4", "8"] {
        let out = root.join(format!("threads_{t}"));
        let args = eval_culane_args(&corpus, &out, t);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = lanekit_ok(&refs)?;
        let json = std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?;
        let txt = std::fs::read(out.join("report.txt")).map_err(|e| e.to_string())?;
        outputs.push((o.stdout, json, txt));
        if t == "1" {
            reports.push(read_report(&out)?);
        }
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    Ok(Outcome::new(
        same,
        format!("stdout, report.json and report.txt identical for 1/4/8 threads: {same}"),
    ))
}

fn throughput(root: &Path, reports: &mut Vec<EvalReport>) -> Result<Outcome, String> {
    let corpus = root.join("speed");
    lanekit_ok(&[
        "synth",
        "--out",
        s(&corpus),
        "--format",
        "culane",
        "--frames",
        "1000",
        "--lanes",
        "4",
        "--jitter",
        "6",
        "--grid",
        "1640x590",
        "--width",
        "30",
        "--embedding-frames",
        "0",
    ])?;
    let out = root.join("speed_report");
    let args = eval_culane_args(&corpus, &out, "1");
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let start = Instant::now();
    lanekit_ok(&refs)?;
    let elapsed = start.elapsed();
    let report = read_report(&out)?;
    let frames = report.per_category.iter().map(|r| r.summary.frames).sum::<u64>();
    reports.push(report);
    Ok(Outcome::new(
        frames == 1000 && elapsed < Duration::from_secs(10),
        format!(
            "{frames} frames read, matched and reported in {} on one thread",
            secs(elapsed)
        ),
    ))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let root = dir.path();
    let mut reports = Vec::new();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("gradients match central differences", gradients()),
        ("loss fixtures", loss_fixtures()),
        ("descent then clustering recovers lanes", descent_then_cluster()),
        ("exact recovery under separation", exact_recovery()),
        ("matching and IoU equal exhaustive oracles", matching_and_iou()),
    ];
    let self_eval = self_evaluation(root, &mut reports).unwrap_or_else(|e| Outcome::new(false, e));
    results.push(("self-evaluation is perfect", self_eval));
    results.push(("annotation round-trips", round_trips()));
    let threads = thread_invariance(root, &mut reports).unwrap_or_else(|e| Outcome::new(false, e));
    results.push(("eval-culane independent of threads", threads));
    let speed = throughput(root, &mut reports).unwrap_or_else(|e| Outcome::new(false, e));
    results.push(("1000-frame CULane evaluation under 10s", speed));
    results.push(("F1 = 2PR/(P+R) on every report", f1_identity(&reports)));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    println!("{}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
