//! `otassign`: train assignment-method generators, evaluate checkpoints,
//! draw snapshots and solve discrete transport problems.
//!
//! Exit codes: 0 success, 2 usage error, 1 runtime error.

mod points;
mod snapshot;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use otassign::ot::{emd, DiscreteMeasure};
use otassign::trainer::{rng_stream, run, MetricRecord, StopReason};
use otassign::{Checkpoint, CostKind, CostSpec, Dataset, TrainConfig, TrainState};

/// Random stream reserved for evaluation draws (matches the trainer's).
const STREAM_EVAL: u64 = 5;
/// Snapshot draws use streams above this offset, one per step.
const STREAM_SNAPSHOT: u64 = 1 << 32;

#[derive(Parser)]
#[command(name = "otassign", version, about = "Generative training by optimal assignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a TOML config; writes metrics.csv, checkpoints and snapshots.
    Train(TrainArgs),
    /// Evaluate a checkpoint: exact W1 and assignment variance.
    Eval(EvalArgs),
    /// Draw a checkpoint: SVG assignment plot (2-D) or sample grid (images).
    Snapshot(SnapshotArgs),
    /// Exact transport cost between two CSV point sets with uniform weights.
    Emd(EmdArgs),
}

#[derive(Args)]
struct Overrides {
    /// Seed for every random stream (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Assignment cost (overrides `cost.kind`).
    #[arg(long, value_parser = parse_cost)]
    cost: Option<CostKind>,
    /// Any config key, e.g. `--set train.m=128`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    set: Vec<(String, String)>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(String, String)> {
        let mut out = self.set.clone();
        if let Some(s) = self.seed {
            out.push(("seed".into(), s.to_string()));
        }
        if let Some(c) = self.cost {
            out.push(("cost.kind".into(), c.name().to_string()));
        }
        out
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run directory; created if missing.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvalArgs {
    checkpoint: PathBuf,
    /// Oversampling factor: `k` generated points per real.
    #[arg(long)]
    k: Option<usize>,
    /// Reals used for W1 (first rows); 0 uses all of them.
    #[arg(long)]
    reals: Option<usize>,
    /// Seed for the evaluation draws; defaults to the checkpoint's stream.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON report path; defaults to `eval.json` next to the checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SnapshotArgs {
    checkpoint: PathBuf,
    /// Output file; defaults to `snapshot.svg` / `snapshot.pgm` next to the checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Generated points in a 2-D plot.
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EmdArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long, default_value = "euclidean", value_parser = parse_cost)]
    cost: CostKind,
    /// Cost multiplier.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Image shape `HxW`, needed by the SSIM cost.
    #[arg(long, value_parser = parse_shape)]
    image: Option<(usize, usize)>,
    /// Write the optimal plan as `i,j,mass` rows.
    #[arg(long)]
    plan: Option<PathBuf>,
}

fn parse_cost(s: &str) -> Result<CostKind, String> {
    s.parse().map_err(|_| {
        let names: Vec<_> = CostKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown cost `{s}`; expected one of {}", names.join(", "))
    })
}

fn parse_assignment(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse_shape(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got `{s}`"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((p(h)?, p(w)?))
}

/// A problem with how the command was invoked rather than with its inputs.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Snapshot(a) => cmd_snapshot(a),
        Command::Emd(a) => cmd_emd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(Usage(format!("{what} `{}` does not exist", path.display())).into());
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn checkpoint_path(dir: &Path, step: usize) -> PathBuf {
    dir.join("checkpoints").join(format!("step_{step:06}.json"))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    require_file(&args.config, "config file")?;
    let config = TrainConfig::from_path_with(&args.config, &args.overrides.pairs())?;
    let dataset = config.data.load(config.seed)?;
    let out = &args.out;
    fs::create_dir_all(out.join("checkpoints"))
        .with_context(|| format!("creating run directory {}", out.display()))?;
    write_json(&out.join("config.json"), &config)?;

    let with_w1 = config.eval.w1;
    let mut metrics = BufWriter::new(File::create(out.join("metrics.csv"))?);
    writeln!(metrics, "{}", MetricRecord::header(with_w1))?;
    let snap_every = config.snapshot_every;
    let can_snapshot = snapshot::supported(&dataset);
    let mut evaluations = 0usize;

    let state = TrainState::new(&config, &dataset)?;
    let outcome = run(state, &dataset, |state, rec| {
        writeln!(metrics, "{}", rec.csv_row(with_w1))?;
        metrics.flush()?;
        state.checkpoint().save(&checkpoint_path(out, rec.step))?;
        evaluations += 1;
        if snap_every > 0 && evaluations % snap_every == 0 && can_snapshot {
            let mut rng = rng_stream(state.config.seed, STREAM_SNAPSHOT + rec.step as u64);
            let path = out.join("snapshots").join(format!("step_{:06}.{}", rec.step, snapshot::extension(&dataset)));
            snapshot::write(state, &dataset, &path, 500, &mut rng).map_err(|e| otassign::Error::Invalid(e.to_string()))?;
        }
        let w1 = rec.w1.map(|w| format!(" w1 {w:.5}")).unwrap_or_default();
        eprintln!(
            "step {:>6}  dual {:.6}  variance {:.4}{w1}",
            rec.step, rec.dual_estimate, rec.assignment_variance
        );
        Ok(())
    })?;
    metrics.flush()?;
    outcome.state.checkpoint().save(&out.join("checkpoint.json"))?;
    match outcome.stop {
        StopReason::MaxSteps => eprintln!("finished {} steps; run directory {}", outcome.state.step, out.display()),
        StopReason::Plateau => eprintln!("dual estimate plateaued at step {}", outcome.state.step),
        StopReason::NonFinite(what) => bail!(
            "non-finite {what}; rolled back to step {} and saved checkpoint.json",
            outcome.state.step
        ),
    }
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(TrainState, Dataset)> {
    require_file(path, "checkpoint")?;
    let ckpt = Checkpoint::load(path)?;
    let dataset = ckpt.config.data.load(ckpt.config.seed)?;
    let state = TrainState::from_checkpoint(&ckpt, &dataset)?;
    Ok((state, dataset))
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: String,
    step: usize,
    k: usize,
    reals: usize,
    w1_reals: usize,
    w1: f64,
    assignment_variance: f64,
    dual_estimate: f64,
    samples: usize,
    wall_time_s: f64,
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let start = Instant::now();
    let (mut state, dataset) = load_checkpoint(&args.checkpoint)?;
    let m = dataset.len();
    let k = args.k.unwrap_or(state.config.eval.k);
    if k == 0 {
        return Err(Usage("--k must be at least 1".into()).into());
    }
    let w1_reals = match args.reals.unwrap_or(state.config.eval.w1_reals) {
        0 => m,
        r => r.min(m),
    };
    if let Some(seed) = args.seed {
        state.eval_rng = rng_stream(seed, STREAM_EVAL);
    }
    state.config.eval.k = k;
    state.config.eval.w1 = true;
    state.config.eval.w1_reals = w1_reals;
    let ev = state.evaluate()?;
    let report = EvalReport {
        checkpoint: args.checkpoint.display().to_string(),
        step: state.step,
        k,
        reals: m,
        w1_reals,
        w1: ev.w1.expect("W1 requested"),
        assignment_variance: ev.assignment_variance,
        dual_estimate: ev.dual_estimate,
        samples: k * m + k * w1_reals,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let out = args
        .out
        .unwrap_or_else(|| args.checkpoint.with_file_name("eval.json"));
    write_json(&out, &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_snapshot(args: SnapshotArgs) -> Result<()> {
    let (state, dataset) = load_checkpoint(&args.checkpoint)?;
    if !snapshot::supported(&dataset) {
        bail!(
            "cannot draw {}-dimensional data without an image shape",
            dataset.dim()
        );
    }
    let out = args.out.unwrap_or_else(|| {
        args.checkpoint
            .with_file_name(format!("snapshot.{}", snapshot::extension(&dataset)))
    });
    let seed = args.seed.unwrap_or(state.config.seed);
    let mut rng = rng_stream(seed, STREAM_SNAPSHOT + state.step as u64);
    snapshot::write(&state, &dataset, &out, args.n, &mut rng)?;
    println!("{}", out.display());
    Ok(())
}

fn cmd_emd(args: EmdArgs) -> Result<()> {
    require_file(&args.a, "point file")?;
    require_file(&args.b, "point file")?;
    let a = points::read_csv(&args.a)?;
    let b = points::read_csv(&args.b)?;
    if a.cols() != b.cols() {
        bail!("point sets have dimensions {} and {}", a.cols(), b.cols());
    }
    let spec = CostSpec::new(args.cost, args.scale, args.image)?;
    let plan = emd(&DiscreteMeasure::uniform(a)?, &DiscreteMeasure::uniform(b)?, &spec)?;
    println!("{}", plan.cost_value);
    if let Some(path) = args.plan {
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        writeln!(w, "i,j,mass")?;
        for &(i, j, mass) in &plan.entries {
            writeln!(w, "{i},{j},{mass}")?;
        }
        w.flush()?;
    }
    Ok(())
}
