//! `condex`: drives the grasp pipeline end to end from one TOML config.
//! Exit codes: 0 success, 1 operational failure, 2 usage error.

mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "condex", version, about = "Few-shot grasp-quality pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for generation and evaluation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Run single-threaded. Artifacts are byte-identical either way; this
    /// only removes scheduling variance from timings.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment TOML. Omitted sections (or the whole flag) use defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory; artifacts land in objects/, shards/, checkpoints/,
    /// metrics/ below it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Objects sampled evenly across the dataset for the rate estimate.
    #[arg(long, default_value_t = 200)]
    sample: usize,
    /// Positive rate to aim for.
    #[arg(long, default_value_t = 0.427)]
    target: f64,
    /// Acceptable distance from the target rate.
    #[arg(long, default_value_t = 0.08)]
    tolerance: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Overrides training.seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Seed for episode construction and benchmark sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint to evaluate; defaults to the one `condex train` writes
    /// for the configured model and training seed.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct EvalErrorArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Context size; defaults to training.k_max.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct EvalGraspArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Benchmark objects, sampled evenly from the split.
    #[arg(long, default_value_t = 50)]
    objects: usize,
    /// "intra" or "cross".
    #[arg(long, default_value = "cross")]
    split: String,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// "intra" or "cross".
    #[arg(long, default_value = "cross")]
    split: String,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the object dataset and write its catalog.
    GenObjects(CommonArgs),
    /// Run random grasps on every object and write labeled shards.
    Collect(CommonArgs),
    /// Per-category label statistics of the collected shards.
    Stats(CommonArgs),
    /// Bisect the clamp force until random grasps hit a target positive rate.
    Calibrate(CalibrateArgs),
    /// Train the configured model and write a checkpoint.
    Train(TrainArgs),
    /// Prediction error on held-out episodes at a fixed context size.
    EvalError(EvalErrorArgs),
    /// Scored grasp trials against the physics oracle.
    EvalGrasp(EvalGraspArgs),
    /// Prediction error as a function of context size, with a chart.
    Curve(CurveArgs),
    /// Merge metrics and stamp the config into a portable export directory.
    Export(CommonArgs),
}

fn main() {
    let cli = Cli::parse();
    let threads = if cli.deterministic { 1 } else { cli.jobs.unwrap_or(0) };
    if threads > 0 {
        // Errors only if a pool already exists, which is fine.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let outcome = match cli.command {
        Command::GenObjects(a) => run::gen_objects(&a.config, &a.out),
        Command::Collect(a) => run::collect(&a.config, &a.out),
        Command::Stats(a) => run::stats(&a.config, &a.out),
        Command::Calibrate(a) => {
            run::calibrate(&a.common.config, &a.common.out, a.sample, a.target, a.tolerance)
        }
        Command::Train(a) => run::train(&a.common.config, &a.common.out, a.seed),
        Command::EvalError(a) => run::eval_error(
            &a.eval.common.config,
            &a.eval.common.out,
            a.eval.seed,
            &a.eval.checkpoint,
            a.k,
        ),
        Command::EvalGrasp(a) => run::eval_grasp(
            &a.eval.common.config,
            &a.eval.common.out,
            a.eval.seed,
            &a.eval.checkpoint,
            a.objects,
            &a.split,
        ),
        Command::Curve(a) => run::curve(
            &a.eval.common.config,
            &a.eval.common.out,
            a.eval.seed,
            &a.eval.checkpoint,
            &a.split,
        ),
        Command::Export(a) => run::export(&a.config, &a.out),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
