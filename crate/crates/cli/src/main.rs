//! `divide` command-line entry point.

mod commands;
mod config;
mod manifest;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use divide_core::benchgen::Benchmark;
use divide_core::gp::KernelKind;
use serde::de::DeserializeOwned;
use serde::Serialize;

use config::{overlay, ActiveCmdConfig, DisentangleConfig, FerrosimConfig, GenBenchConfig, Sweep, TrainCmdConfig};
use manifest::{Run, RunManifest};

/// Invalid invocation or configuration; exits with code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser)]
#[command(name = "divide", version, about = "Mechanism-disentangling deep-kernel GP experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with the command's settings; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    inducing: Option<usize>,
    #[arg(long)]
    kernel: Option<KernelKind>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    structured_mean: Option<bool>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset.
    GenBench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        benchmark: Option<Benchmark>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long)]
        patch_size: Option<usize>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        no_spatial: Option<bool>,
    },
    /// Run FerroSim loop-area sweeps and/or build the (K, P) dataset.
    Ferrosim {
        #[command(flatten)]
        common: Common,
        #[arg(long, ignore_case = true)]
        sweep: Option<Sweep>,
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        dataset: Option<bool>,
        #[arg(long, allow_hyphen_values = true)]
        k_min: Option<i32>,
        #[arg(long, allow_hyphen_values = true)]
        k_max: Option<i32>,
        #[arg(long)]
        p_min: Option<u32>,
        #[arg(long)]
        p_max: Option<u32>,
        /// Fixed K for the P sweep.
        #[arg(long = "K", allow_hyphen_values = true)]
        k: Option<i32>,
        /// Fixed P for the K sweep.
        #[arg(long = "P")]
        p: Option<u32>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Train a model on a random subset of a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        labeled: Option<usize>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Run the uncertainty-driven acquisition loop.
    Active {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed_points: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        d0: Option<f64>,
        #[arg(long)]
        snapshot_every: Option<usize>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Isolate per-mechanism responses of a trained model.
    Disentangle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Repeatable: mechanism@x,y, mechanism@cell:N or mechanism@ref.
        #[arg(long, num_args = 1..)]
        anchors: Option<Vec<String>>,
        /// Repeatable reference override: mechanism@x,y or mechanism@cell:N.
        #[arg(long, num_args = 1..)]
        references: Option<Vec<String>>,
        #[arg(long)]
        cluster_seed: Option<u64>,
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        scaling: Option<bool>,
        #[arg(long)]
        p_star: Option<f64>,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn execute<C: Serialize>(
    name: &str,
    common: &Common,
    cfg: &C,
    seed: u64,
    body: impl FnOnce(&C, &mut Run) -> Result<()>,
) -> Result<()> {
    let mut run = Run::create(&common.out, common.force)?;
    body(cfg, &mut run)?;
    let m = run.finish(name, seed, cfg)?;
    eprintln!("{name}: wrote {} files to {}", m.outputs.len() + 1, common.out.display());
    Ok(())
}

fn replay_config<C: DeserializeOwned>(m: &RunManifest) -> Result<C> {
    serde_json::from_value(m.config.clone()).map_err(|e| Usage(format!("manifest config: {e}")).into())
}

fn replay(manifest: &std::path::Path, out: PathBuf, force: bool) -> Result<()> {
    let m = RunManifest::load(manifest)?;
    let common = Common { config: None, out, force };
    match m.command.as_str() {
        "gen-bench" => {
            let c: GenBenchConfig = replay_config(&m)?;
            execute("gen-bench", &common, &c, c.seed, commands::gen_bench)
        }
        "ferrosim" => execute("ferrosim", &common, &replay_config::<FerrosimConfig>(&m)?, 0, commands::ferrosim),
        "train" => {
            let c: TrainCmdConfig = replay_config(&m)?;
            execute("train", &common, &c, c.seed, commands::train_cmd)
        }
        "active" => {
            let c: ActiveCmdConfig = replay_config(&m)?;
            execute("active", &common, &c, c.seed, commands::active_cmd)
        }
        "disentangle" => {
            let c: DisentangleConfig = replay_config(&m)?;
            execute("disentangle", &common, &c, c.cluster_seed, commands::disentangle_cmd)
        }
        other => Err(Usage(format!("manifest records unknown command `{other}`")).into()),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenBench { common, benchmark, seed, rows, cols, patch_size, noise_sigma, no_spatial } => {
            let mut c: GenBenchConfig = config::load(common.config.as_deref())?;
            overlay!(c; benchmark, seed, rows, cols, patch_size, noise_sigma, no_spatial);
            execute("gen-bench", &common, &c, c.seed, commands::gen_bench)
        }
        Command::Ferrosim { common, sweep, dataset, k_min, k_max, p_min, p_max, k, p, size } => {
            let mut c: FerrosimConfig = config::load(common.config.as_deref())?;
            let (sweep, k, p) = (sweep.map(Some), k.map(Some), p.map(Some));
            overlay!(c; sweep, dataset, k_min, k_max, p_min, p_max, k, p, size);
            c.validate()?;
            execute("ferrosim", &common, &c, 0, commands::ferrosim)
        }
        Command::Train { common, data, labeled, train } => {
            let mut c: TrainCmdConfig = config::load(common.config.as_deref())?;
            let TrainFlags { seed, lr, iterations, batch_size, inducing, kernel, structured_mean } = train;
            overlay!(c; data, labeled, seed, lr, iterations, batch_size, inducing, kernel, structured_mean);
            c.train()?;
            execute("train", &common, &c, c.seed, commands::train_cmd)
        }
        Command::Active { common, data, budget, seed_points, lambda, d0, snapshot_every, train } => {
            let mut c: ActiveCmdConfig = config::load(common.config.as_deref())?;
            let TrainFlags { seed, lr, iterations, batch_size, inducing, kernel, structured_mean } = train;
            overlay!(c; data, budget, seed_points, lambda, d0, snapshot_every);
            overlay!(c; seed, lr, iterations, batch_size, inducing, kernel, structured_mean);
            c.configs()?;
            execute("active", &common, &c, c.seed, commands::active_cmd)
        }
        Command::Disentangle { common, data, model, anchors, references, cluster_seed, scaling, p_star } => {
            let mut c: DisentangleConfig = config::load(common.config.as_deref())?;
            let p_star = p_star.map(Some);
            overlay!(c; data, model, anchors, references, cluster_seed, scaling, p_star);
            execute("disentangle", &common, &c, c.cluster_seed, commands::disentangle_cmd)
        }
        Command::Replay { manifest, out, force } => {
            replay(&manifest, out, force).with_context(|| format!("replaying {}", manifest.display()))
        }
    }
}

fn is_usage(e: &anyhow::Error) -> bool {
    e.downcast_ref::<Usage>().is_some()
        || matches!(
            e.downcast_ref::<divide_core::Error>(),
            Some(divide_core::Error::Config(_) | divide_core::Error::AnchorCountMismatch { .. })
        )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}
