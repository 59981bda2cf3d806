//! `grad-check`: finite-difference verification of every loss gradient.

use clap::Args;
use lanekit_core::gradcheck::{bce_instance, clustering_instance, l2_instance, GradInstance, DEFAULT_STEP};
use rayon::prelude::*;

use crate::{CliError, ThreadArgs};

#[derive(Debug, Clone, Args)]
pub struct GradCheckArgs {
    /// Seed of the first instance; instance i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random instances per loss.
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = DEFAULT_STEP)]
    pub step: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    /// Add a bias to every analytic gradient (negative control for tests).
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

/// Largest error seen for one loss and the seed where it occurred.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSummary {
    pub name: &'static str,
    pub worst: f64,
    pub worst_seed: u64,
}

fn corrupted(inst: GradInstance) -> GradInstance {
    let inner = inst.loss;
    GradInstance {
        loss: Box::new(move |x: &[f64]| {
            inner(x).map(|mut v| {
                v.gradient.iter_mut().for_each(|g| *g += 1e-3);
                v
            })
        }),
        ..inst
    }
}

pub fn check(args: &GradCheckArgs) -> Result<Vec<LossSummary>, CliError> {
    if !(args.step > 0.0 && args.step.is_finite()) {
        return Err(CliError::Usage(format!("--step must be positive, got {}", args.step)));
    }
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    type Maker = fn(u64, f64) -> GradInstance;
    let makers: [(&'static str, Maker); 3] = [
        ("clustering_loss", clustering_instance),
        ("weighted_binary_ce", |s, _| bce_instance(s)),
        ("l2_loss", |s, _| l2_instance(s)),
    ];
    let mut out = Vec::new();
    for (name, make) in makers {
        let errors = args.threads.install(|| {
            (0..args.trials)
                .into_par_iter()
                .map(|i| {
                    let seed = args.seed.wrapping_add(i);
                    let mut inst = make(seed, args.step);
                    if args.corrupt_gradient {
                        inst = corrupted(inst);
                    }
                    inst.check(args.step).map(|e| (seed, e)).map_err(|e| (seed, e))
                })
                .collect::<Vec<_>>()
        })?;
        let mut summary = LossSummary {
            name,
            worst: 0.0,
            worst_seed: args.seed,
        };
        for r in errors {
            let (seed, err) = r.map_err(|(seed, e)| CliError::CheckFailed(format!("{name}: seed {seed}: {e}")))?;
            if err > summary.worst || err.is_nan() {
                summary.worst = err;
                summary.worst_seed = seed;
            }
        }
        out.push(summary);
    }
    Ok(out)
}

pub fn run(args: &GradCheckArgs) -> Result<Vec<LossSummary>, CliError> {
    let summaries = check(args)?;
    let mut failed = Vec::new();
    for s in &summaries {
        let ok = s.worst <= args.tolerance;
        println!(
            "{:<20} max relative error {:.3e} (seed {}) {}",
            s.name,
            s.worst,
            s.worst_seed,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(format!("{} seed {}", s.name, s.worst_seed));
        }
    }
    if failed.is_empty() {
        Ok(summaries)
    } else {
        Err(CliError::CheckFailed(format!(
            "gradient check failed above {:e}: {}",
            args.tolerance,
            failed.join(", ")
        )))
    }
}
