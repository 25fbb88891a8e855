//! Experiment runner behind the `wa3c` binary.
//!
//! Settings resolve in three layers: built-in defaults, then the TOML file
//! given with `--config`, then command-line flags. Each command writes its
//! tables plus a `manifest.json` (build id, command, seed, full config) into
//! the output directory.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use wa3c_core::experiment::{self, SweepKind};
use wa3c_core::metrics::export_tables;
use wa3c_core::policy::{load_checkpoint, save_checkpoint};
use wa3c_core::workload::{generate_synthetic, write_trace};
use wa3c_core::{ExperimentConfig, PolicyParams, SchedulerKind};

pub const BUILD_ID: &str = env!("WA3C_BUILD_ID");

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "wa3c", version = BUILD_ID, about = "Datacenter job-scheduling simulator with a WA3C scheduler")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment config file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Scheduler kind: rr, sjf, ljf, tetris, random, plain-a3c, wa3c.
    #[arg(long, global = true, value_name = "KIND")]
    pub scheduler: Option<SchedulerKind>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic trace as CSV.
    Generate {
        /// Destination file; defaults to `<out>/trace.csv`.
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Train WA3C (or the plain-a3c ablation with `--scheduler plain-a3c`).
    Train,
    /// Evaluate one scheduler on held-out traces.
    Evaluate {
        /// Trained policy; required for learned schedulers.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// CSV trace to evaluate on instead of synthetic traces.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
    },
    /// Run a discount, learning-rate or load sweep.
    Sweep {
        /// discount, lr or load.
        kind: SweepKind,
        /// Policy to include in the load sweep.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Compare every heuristic with the learned schedulers on the same traces.
    Compare {
        /// Trained WA3C policy.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Trained plain-a3c policy.
        #[arg(long, value_name = "PATH")]
        ablation: Option<PathBuf>,
        /// Train WA3C and plain-a3c first; ignored for kinds given a checkpoint.
        #[arg(long)]
        train: bool,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

/// Configuration errors anywhere in the chain map to exit code 1.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    let config = e
        .chain()
        .any(|c| c.downcast_ref::<wa3c_core::Error>().is_some_and(|e| e.is_config()));
    if config {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(global: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut config = match &global.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.set_seed(seed);
    }
    if let Some(out) = &global.out {
        config.output_dir = out.clone();
    }
    if let Some(kind) = global.scheduler {
        config.scheduler = kind;
    }
    config.validate()?;
    Ok(config)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut config = resolve_config(&cli.global)?;
    let out = config.output_dir.clone();
    match &cli.command {
        Command::Generate { output } => {
            let path = output.clone().unwrap_or_else(|| out.join("trace.csv"));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                create_dir(parent)?;
            }
            let jobs = generate_synthetic(&config.workload.synthetic)?;
            write_trace(&jobs, &path)?;
            log::info!("wrote {} jobs to {}", jobs.len(), path.display());
        }
        Command::Train => {
            let report = experiment::run_training(&config, &out, BUILD_ID)
                .with_context(|| format!("training into {}", out.display()))?;
            let window = config.evaluation.window;
            log::info!(
                "{} episodes, {} commits, {} rejected updates; final mean reward over {window}: {}",
                report.episodes.len(),
                report.commits_by_worker.iter().sum::<usize>(),
                report.rejected_updates,
                report.final_mean_reward(window).map_or("n/a".into(), |r| format!("{r:.3}"))
            );
        }
        Command::Evaluate { checkpoint, trace } => {
            if let Some(trace) = trace {
                config.workload.path = Some(trace.clone());
            }
            let kind = config.scheduler;
            let params = checkpoint.as_deref().map(|p| load_policy(p, &config)).transpose()?;
            create_dir(&out)?;
            experiment::write_manifest(&out, "evaluate", BUILD_ID, &config)?;
            let stats = experiment::evaluate(&config, kind, params.as_ref())?;
            export_tables(&stats, &out, "evaluate")?;
            for s in &stats {
                println!(
                    "{kind}\tepisode {}\treward {:.3}\tlatency {:.3}\tdismissal {:.4}\tjain {:.4}",
                    s.episode, s.total_reward, s.mean_latency, s.dismissal_rate, s.jain
                );
            }
        }
        Command::Sweep { kind, checkpoint } => {
            let params = checkpoint.as_deref().map(|p| load_policy(p, &config)).transpose()?;
            create_dir(&out)?;
            experiment::write_manifest(&out, &format!("sweep {}", kind.name()), BUILD_ID, &config)?;
            let rows = experiment::sweep(&config, *kind, params.as_ref())?;
            let failures = rows.iter().filter(|r| !r.error.is_empty()).count();
            export_tables(&rows, &out, &format!("sweep_{}", kind.name()))?;
            log::info!("{} rows, {failures} failed points", rows.len());
        }
        Command::Compare {
            checkpoint,
            ablation,
            train,
        } => {
            create_dir(&out)?;
            experiment::write_manifest(&out, "compare", BUILD_ID, &config)?;
            let wa3c = learned_policy(&config, SchedulerKind::Wa3c, checkpoint.as_deref(), *train, &out)?;
            let plain = learned_policy(&config, SchedulerKind::PlainA3c, ablation.as_deref(), *train, &out)?;
            let learned: Vec<(SchedulerKind, &PolicyParams)> = [(SchedulerKind::Wa3c, &wa3c), (SchedulerKind::PlainA3c, &plain)]
                .into_iter()
                .filter_map(|(k, p)| p.as_ref().map(|p| (k, p)))
                .collect();
            let rows = experiment::compare(&config, &learned)?;
            export_tables(&rows, &out, "compare")?;
            for r in &rows {
                println!(
                    "{}\tepisode {}\treward {:.3}\tlatency {:.3}\tdismissal {:.4}",
                    r.scheduler, r.episode, r.total_reward, r.mean_latency, r.dismissal_rate
                );
            }
        }
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_policy(path: &Path, config: &ExperimentConfig) -> Result<PolicyParams> {
    let env = &config.environment;
    Ok(load_checkpoint(path, Some((env.observation_len(), env.action_count())))?)
}

fn learned_policy(
    config: &ExperimentConfig,
    kind: SchedulerKind,
    checkpoint: Option<&Path>,
    train: bool,
    out: &Path,
) -> Result<Option<PolicyParams>> {
    if let Some(path) = checkpoint {
        return load_policy(path, config).map(Some);
    }
    if !train {
        return Ok(None);
    }
    let report = config.train(kind).with_context(|| format!("training {kind}"))?;
    export_tables(&report.episodes, out, &format!("train_{}", kind.name()))?;
    save_checkpoint(&report.params, out.join(format!("checkpoint_{}.json", kind.name())))?;
    Ok(Some(report.params))
}
