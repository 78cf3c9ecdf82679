//! `skelattack`: generate synthetic motion data, train recognizers, attack
//! them and analyze the results.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use skelattack::attack::{LossPreset, StrategySpec};
use skelattack::models::Architecture;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "skelattack", about = "Adversarial attacks on skeletal-motion action recognizers")]
pub struct Cli {
    /// Run seed. Overrides the config file and per-section seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-motion work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    GenData {
        /// Dataset spec (TOML, or JSON with a .json extension). Defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier and write a checkpoint.
    Train {
        #[arg(long)]
        arch: Architecture,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Print accuracy and confusion matrix as JSON.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// test, train or all
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Attack the correctly classified test motions of a dataset.
    Attack {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        attack: AttackArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attack with a surrogate and evaluate the adversarials on target models.
    Transfer {
        #[arg(long)]
        surrogate: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        targets: Vec<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        attack: AttackArgs,
        /// Report file; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Joint displacement statistics and correlation maps.
    Analyze {
        /// Directory holding the original motions.
        #[arg(long)]
        orig: PathBuf,
        /// Directory holding the adversarial motions.
        #[arg(long)]
        adv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write one report per ground-truth class.
        #[arg(long)]
        by_class: bool,
        /// Skip adversarials whose attack did not succeed.
        #[arg(long)]
        successful_only: bool,
    },
    /// Finite-difference check of every primitive and of the attack objective.
    Gradcheck {
        #[arg(long)]
        arch: Option<Architecture>,
        /// Random motions per architecture and strategy.
        #[arg(long, default_value_t = 20)]
        motions: usize,
    },
}

#[derive(Debug, Clone, Args)]
struct AttackArgs {
    /// ab, abn:N, sa:K or sa:random
    #[arg(long)]
    strategy: Option<StrategySpec>,
    /// full, l2, l2acc or l2bone
    #[arg(long)]
    preset: Option<LossPreset>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Attack at most this many motions (first by id).
    #[arg(long)]
    limit: Option<usize>,
}

fn version_text() -> String {
    format!(
        "{} (dataset format {}, motion format {}, checkpoint format {}, report format {})",
        skelattack::VERSION,
        skelattack::datagen::DATASET_FORMAT_VERSION,
        skelattack::motion::MOTION_FORMAT_VERSION,
        skelattack::models::CHECKPOINT_FORMAT_VERSION,
        skelattack::analysis::REPORT_FORMAT_VERSION,
    )
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed);
    let jobs = cli.jobs.or(cfg.jobs);
    if let Some(n) = jobs {
        anyhow::ensure!(n >= 1, "--jobs must be >= 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting worker pool")?;
    }
    let data = |d: Option<PathBuf>| -> Result<PathBuf> {
        d.or_else(|| cfg.data.clone())
            .context("no dataset directory: pass --data or set `data` in the config")
    };
    match cli.command {
        Command::GenData { spec, out } => commands::gen_data(&cfg, spec.as_deref(), &out, seed).map(|_| true),
        Command::Train { arch, data: d, out, epochs, batch_size, lr } => {
            commands::train(&cfg, arch, &data(d)?, &out, seed, epochs, batch_size, lr).map(|_| true)
        }
        Command::Eval { ckpt, data: d, split } => commands::eval(&ckpt, &data(d)?, &split).map(|_| true),
        Command::Attack { ckpt, data: d, attack, out } => {
            commands::attack(&cfg, &ckpt, &data(d)?, &attack, &out, seed).map(|_| true)
        }
        Command::Transfer { surrogate, targets, data: d, attack, out } => {
            commands::transfer(&cfg, &surrogate, &targets, &data(d)?, &attack, out.as_deref(), seed).map(|_| true)
        }
        Command::Analyze { orig, adv, out, by_class, successful_only } => {
            commands::analyze(&orig, &adv, &out, by_class, successful_only).map(|_| true)
        }
        Command::Gradcheck { arch, motions } => commands::gradcheck(arch, motions, seed.unwrap_or(0)),
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().version(version_text()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
