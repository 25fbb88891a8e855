//! Declarative experiment configuration plus the runs built on it: training,
//! greedy evaluation, scheduler comparison and parameter sweeps.
//!
//! The top-level `seed` drives everything. Training episode `e` uses a
//! synthetic trace seeded from `(seed, e)`, evaluation trace `i` one seeded
//! from `(seed, i)` on a separate stream, and the trainer's own streams
//! derive from the same seed. The `seed` fields inside `[workload.synthetic]`
//! and `[trainer]` are overwritten on load.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{Heuristic, SchedulerKind};
use crate::environment::{Action, ClusterConfig, Environment};
use crate::error::{Error, Result};
use crate::metrics::{export_tables, fmt_opt, fmt_real, moving_average, EpisodeStats, Tabular};
use crate::policy::{self, save_checkpoint, PolicyParams};
use crate::reward::{RewardParams, RewardWeights};
use crate::seed::{derive, STREAM_EVAL, STREAM_TRACE};
use crate::trainer::{self, TrainerConfig, TrainingReport};
use crate::workload::{generate_synthetic, load_trace, Job, TraceConfig};

pub const DISCOUNT_GRID: [f64; 4] = [0.6, 0.7, 0.8, 0.9];
pub const LR_GRID: [f64; 4] = [0.1, 0.01, 0.001, 0.0001];
pub const LOAD_GRID: [f64; 7] = [0.4, 0.8, 1.2, 1.6, 2.0, 2.4, 2.8];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSection {
    /// CSV trace used for every episode instead of synthetic traces.
    pub path: Option<PathBuf>,
    pub synthetic: TraceConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSection {
    pub weights: RewardWeights,
    pub params: RewardParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    /// Number of held-out traces each evaluation runs.
    pub episodes: usize,
    /// Window for the moving-average reward.
    pub window: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection { episodes: 1, window: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scheduler: SchedulerKind,
    pub output_dir: PathBuf,
    pub workload: WorkloadSection,
    pub environment: ClusterConfig,
    pub reward: RewardSection,
    pub trainer: TrainerConfig,
    pub evaluation: EvaluationSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut config = ExperimentConfig {
            seed: 42,
            scheduler: SchedulerKind::Wa3c,
            output_dir: PathBuf::from("runs"),
            workload: WorkloadSection::default(),
            environment: ClusterConfig::default(),
            reward: RewardSection::default(),
            trainer: TrainerConfig::default(),
            evaluation: EvaluationSection::default(),
        };
        config.set_seed(42);
        config
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))?;
        config.set_seed(config.seed);
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigFile {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut config: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::ConfigFile {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        config.set_seed(config.seed);
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("experiment config serializes")
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.workload.synthetic.seed = seed;
        self.trainer.seed = seed;
    }

    /// Cross-field validation; run before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.workload.synthetic.validate()?;
        self.environment.validate()?;
        self.reward.weights.validate()?;
        self.reward.params.validate()?;
        self.trainer.validate()?;
        if self.evaluation.window == 0 {
            return Err(Error::config("evaluation.window", "must be at least 1"));
        }
        Ok(())
    }

    pub fn make_env(&self) -> Result<Environment> {
        Environment::new(self.environment.clone(), self.reward.weights, self.reward.params)
    }

    fn trace(&self, stream: u64, index: usize) -> Result<Vec<Job>> {
        match &self.workload.path {
            Some(path) => load_trace(path),
            None => generate_synthetic(&TraceConfig {
                seed: derive(self.seed, stream, index as u64),
                ..self.workload.synthetic.clone()
            }),
        }
    }

    pub fn training_trace(&self, episode: usize) -> Result<Vec<Job>> {
        self.trace(STREAM_TRACE, episode)
    }

    pub fn evaluation_trace(&self, index: usize) -> Result<Vec<Job>> {
        self.trace(STREAM_EVAL, index)
    }

    /// Trainer settings for a learned scheduler kind.
    pub fn trainer_for(&self, kind: SchedulerKind) -> TrainerConfig {
        TrainerConfig {
            beta: kind.beta(self.trainer.beta),
            learning_weights: kind.learning_weights().or(self.trainer.learning_weights),
            ..self.trainer.clone()
        }
    }

    /// Trains `kind` (WA3C or the plain ablation) without writing anything.
    pub fn train(&self, kind: SchedulerKind) -> Result<TrainingReport> {
        if !kind.is_learned() {
            return Err(Error::config("scheduler", format!("{kind} is not trainable")));
        }
        self.validate()?;
        let trainer = self.trainer_for(kind);
        trainer::train(&trainer, || self.make_env(), |ep| self.training_trace(ep))
    }
}

/// Anything that can drive an evaluation episode.
#[derive(Debug, Clone)]
pub enum Scheduler {
    Heuristic(Heuristic),
    /// Greedy policy: argmax of `score + beta * priority`.
    Policy { params: PolicyParams, beta: f64 },
}

impl Scheduler {
    /// Builds a scheduler of `kind`; learned kinds need `params`.
    pub fn new(kind: SchedulerKind, params: Option<&PolicyParams>, config: &ExperimentConfig) -> Result<Self> {
        if kind.is_learned() {
            let params = params.ok_or_else(|| Error::config("scheduler", format!("{kind} needs trained parameters")))?;
            let env = &config.environment;
            if params.obs_len() != env.observation_len() || params.action_count() != env.action_count() {
                return Err(Error::Shape(format!(
                    "policy maps {} inputs to {} actions, environment needs {} -> {}",
                    params.obs_len(),
                    params.action_count(),
                    env.observation_len(),
                    env.action_count()
                )));
            }
            Ok(Scheduler::Policy {
                params: params.clone(),
                beta: kind.beta(config.trainer.beta),
            })
        } else {
            Ok(Scheduler::Heuristic(Heuristic::new(kind, derive(config.seed, STREAM_EVAL, u64::MAX))?))
        }
    }
}

/// Runs one full episode of `scheduler` on `trace`.
pub fn run_episode(env: &mut Environment, trace: Vec<Job>, scheduler: &mut Scheduler, episode: usize) -> Result<EpisodeStats> {
    let start = Instant::now();
    let slots = env.config().queue_slots;
    let mut obs = env.reset(trace);
    while !env.is_done() {
        let action = match scheduler {
            Scheduler::Heuristic(h) => h.schedule(&env.queue_view(), env.availability()),
            Scheduler::Policy { params, beta } => {
                let mask = obs.action_mask();
                if mask[..slots].iter().any(|m| *m) {
                    let scores = policy::actor_forward(&obs.features, params)?;
                    Action::from_index(policy::greedy_action(&scores, &obs.action_priorities(), &mask, *beta), slots)
                } else {
                    Action::NoOp
                }
            }
        };
        obs = env.step(action)?.observation;
    }
    let mut stats = env.episode_stats(episode, 0);
    stats.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(stats)
}

/// Evaluates `kind` on the configured number of held-out traces.
pub fn evaluate(config: &ExperimentConfig, kind: SchedulerKind, params: Option<&PolicyParams>) -> Result<Vec<EpisodeStats>> {
    config.validate()?;
    let mut env = config.make_env()?;
    let mut scheduler = Scheduler::new(kind, params, config)?;
    (0..config.evaluation.episodes)
        .map(|i| run_episode(&mut env, config.evaluation_trace(i)?, &mut scheduler, i))
        .collect()
}

/// Build identity recorded in run manifests.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub build_id: &'a str,
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a ExperimentConfig,
}

pub fn write_manifest(dir: &Path, command: &str, build_id: &str, config: &ExperimentConfig) -> Result<()> {
    let path = dir.join("manifest.json");
    let manifest = Manifest {
        build_id,
        command,
        seed: config.seed,
        config,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Trains the configured scheduler and writes `report.csv`/`report.json`,
/// `checkpoint.json` and `manifest.json` into `dir`.
pub fn run_training(config: &ExperimentConfig, dir: &Path, build_id: &str) -> Result<TrainingReport> {
    config.validate()?;
    let kind = if config.scheduler.is_learned() {
        config.scheduler
    } else {
        SchedulerKind::Wa3c
    };
    create_dir(dir)?;
    write_manifest(dir, "train", build_id, config)?;
    let report = config.train(kind)?;
    export_tables(&report.episodes, dir, "report")?;
    save_checkpoint(&report.params, dir.join("checkpoint.json"))?;
    Ok(report)
}

/// One row of a sweep or comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub sweep: String,
    pub point: f64,
    pub scheduler: SchedulerKind,
    pub episode: usize,
    pub total_reward: f64,
    pub moving_average: f64,
    pub mean_latency: f64,
    pub energy_kwh: f64,
    pub dismissal_rate: f64,
    pub jain_index: f64,
    pub latency_low: Option<f64>,
    pub latency_medium: Option<f64>,
    pub latency_high: Option<f64>,
    /// Empty unless the point failed.
    pub error: String,
}

impl Tabular for SweepRecord {
    fn header() -> Vec<&'static str> {
        vec![
            "sweep",
            "point",
            "scheduler",
            "episode",
            "total_reward",
            "moving_average",
            "mean_latency",
            "energy_kwh",
            "dismissal_rate",
            "jain_index",
            "latency_low",
            "latency_medium",
            "latency_high",
            "error",
        ]
    }

    fn row(&self) -> Vec<String> {
        vec![
            self.sweep.clone(),
            fmt_real(self.point),
            self.scheduler.to_string(),
            self.episode.to_string(),
            fmt_real(self.total_reward),
            fmt_real(self.moving_average),
            fmt_real(self.mean_latency),
            fmt_real(self.energy_kwh),
            fmt_real(self.dismissal_rate),
            fmt_real(self.jain_index),
            fmt_opt(self.latency_low),
            fmt_opt(self.latency_medium),
            fmt_opt(self.latency_high),
            self.error.clone(),
        ]
    }
}

fn records(sweep: &str, point: f64, kind: SchedulerKind, stats: &[EpisodeStats], window: usize) -> Vec<SweepRecord> {
    let rewards: Vec<f64> = stats.iter().map(|s| s.total_reward).collect();
    let ma = moving_average(&rewards, window);
    stats
        .iter()
        .zip(ma)
        .map(|(s, m)| SweepRecord {
            sweep: sweep.to_string(),
            point,
            scheduler: kind,
            episode: s.episode,
            total_reward: s.total_reward,
            moving_average: m,
            mean_latency: s.mean_latency,
            energy_kwh: s.total_energy_kwh,
            dismissal_rate: s.dismissal_rate,
            jain_index: s.jain,
            latency_low: s.band_latency[0],
            latency_medium: s.band_latency[1],
            latency_high: s.band_latency[2],
            error: String::new(),
        })
        .collect()
}

fn failed(sweep: &str, point: f64, kind: SchedulerKind, e: &Error) -> SweepRecord {
    SweepRecord {
        sweep: sweep.to_string(),
        point,
        scheduler: kind,
        episode: 0,
        total_reward: f64::NAN,
        moving_average: f64::NAN,
        mean_latency: f64::NAN,
        energy_kwh: f64::NAN,
        dismissal_rate: f64::NAN,
        jain_index: f64::NAN,
        latency_low: None,
        latency_medium: None,
        latency_high: None,
        error: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Discount,
    Lr,
    Load,
}

impl std::str::FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "discount" => Ok(SweepKind::Discount),
            "lr" | "learning-rate" => Ok(SweepKind::Lr),
            "load" => Ok(SweepKind::Load),
            other => Err(Error::config("sweep", format!("unknown sweep {other:?}; expected discount, lr or load"))),
        }
    }
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Discount => "discount",
            SweepKind::Lr => "lr",
            SweepKind::Load => "load",
        }
    }

    pub fn grid(self) -> &'static [f64] {
        match self {
            SweepKind::Discount => &DISCOUNT_GRID,
            SweepKind::Lr => &LR_GRID,
            SweepKind::Load => &LOAD_GRID,
        }
    }
}

/// Discount and learning-rate sweeps train WA3C once per grid point and emit
/// one row per training episode. The load sweep evaluates every heuristic,
/// plus WA3C when `policy` is given, at each load factor. A failing point is
/// recorded as an error row and the sweep moves on.
pub fn sweep(config: &ExperimentConfig, kind: SweepKind, policy: Option<&PolicyParams>) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let window = config.evaluation.window;
    let mut out = Vec::new();
    for &point in kind.grid() {
        let mut point_config = config.clone();
        match kind {
            SweepKind::Discount => point_config.trainer.discount = point,
            SweepKind::Lr => {
                point_config.trainer.lr_actor = point;
                point_config.trainer.lr_critic = point;
            }
            SweepKind::Load => point_config.workload.synthetic.load_factor = point,
        }
        match kind {
            SweepKind::Discount | SweepKind::Lr => match point_config.train(SchedulerKind::Wa3c) {
                Ok(report) => out.extend(records(kind.name(), point, SchedulerKind::Wa3c, &report.episodes, window)),
                Err(e) => {
                    log::error!("{} sweep point {point} failed: {e}", kind.name());
                    out.push(failed(kind.name(), point, SchedulerKind::Wa3c, &e));
                }
            },
            SweepKind::Load => {
                let kinds = SchedulerKind::HEURISTICS.into_iter().chain(policy.map(|_| SchedulerKind::Wa3c));
                for sched in kinds {
                    match evaluate(&point_config, sched, policy) {
                        Ok(stats) => out.extend(records(kind.name(), point, sched, &stats, window)),
                        Err(e) => {
                            log::error!("load sweep point {point}, {sched} failed: {e}");
                            out.push(failed(kind.name(), point, sched, &e));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Evaluates every heuristic, plus each given learned policy, on the same
/// held-out traces.
pub fn compare(config: &ExperimentConfig, learned: &[(SchedulerKind, &PolicyParams)]) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let load = config.workload.synthetic.load_factor;
    let mut out = Vec::new();
    for kind in SchedulerKind::HEURISTICS {
        let stats = evaluate(config, kind, None)?;
        out.extend(records("compare", load, kind, &stats, config.evaluation.window));
    }
    for (kind, params) in learned {
        let stats = evaluate(config, *kind, Some(params))?;
        out.extend(records("compare", load, *kind, &stats, config.evaluation.window));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut config = ExperimentConfig::default();
        config.set_seed(7);
        config.environment.vm_count = 6;
        config.trainer.sync_interval = None;
        config.workload.path = Some(PathBuf::from("trace.csv"));
        let text = config.to_toml();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, config);
        assert_eq!(ExperimentConfig::from_toml_str(&back.to_toml()).unwrap(), back);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let config = ExperimentConfig::from_toml_str("seed = 3\nscheduler = \"sjf\"\n[trainer]\nepisodes = 2\n").unwrap();
        assert_eq!(config.seed, 3);
        assert_eq!(config.trainer.seed, 3);
        assert_eq!(config.scheduler, SchedulerKind::Sjf);
        assert_eq!(config.trainer.episodes, 2);
        assert_eq!(config.environment, ClusterConfig::default());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml_str("[trainer]\nbogus = 1\n").unwrap_err().is_config());
        let bad = ExperimentConfig::from_toml_str("[reward.weights]\nqos = 0.5\nenergy = 0.5\npriority = 0.5\nfairness = 0.0\ndismissal = 0.0\n").unwrap();
        assert!(bad.validate().unwrap_err().is_config());
        let mut bad = ExperimentConfig::default();
        bad.environment.w_max = 50.0;
        assert!(bad.validate().unwrap_err().is_config());
    }

    fn small() -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.workload.synthetic.job_count = 20;
        config.environment.queue_slots = 4;
        config.trainer.n_workers = 1;
        config.trainer.episodes = 2;
        config.trainer.hidden = vec![8];
        config
    }

    #[test]
    fn evaluation_is_reproducible() {
        let config = small();
        for kind in SchedulerKind::HEURISTICS {
            let a = evaluate(&config, kind, None).unwrap();
            let mut b = evaluate(&config, kind, None).unwrap();
            b[0].wall_clock_secs = a[0].wall_clock_secs;
            assert_eq!(a, b);
            assert_eq!(a[0].arrived, 20);
            assert_eq!(a[0].completed + a[0].dismissed, 20);
        }
    }

    #[test]
    fn learned_kinds_need_parameters() {
        let config = small();
        assert!(evaluate(&config, SchedulerKind::Wa3c, None).unwrap_err().is_config());
        let report = config.train(SchedulerKind::Wa3c).unwrap();
        assert_eq!(report.episodes.len(), 2);
        let stats = evaluate(&config, SchedulerKind::Wa3c, Some(&report.params)).unwrap();
        assert_eq!(stats[0].arrived, 20);
    }

    #[test]
    fn ablation_trainer_settings() {
        let config = ExperimentConfig::default();
        let plain = config.trainer_for(SchedulerKind::PlainA3c);
        assert_eq!(plain.beta, 0.0);
        assert_eq!(plain.learning_weights, Some(RewardWeights::qos_energy_only()));
        let full = config.trainer_for(SchedulerKind::Wa3c);
        assert_eq!(full.beta, 2.0);
        assert_eq!(full.learning_weights, None);
    }

    #[test]
    fn grids() {
        assert_eq!(SweepKind::Load.grid().len(), 7);
        for (i, x) in LOAD_GRID.iter().enumerate() {
            assert!((x - (0.4 + 0.4 * i as f64)).abs() < 1e-12);
        }
        assert_eq!(SweepKind::Discount.grid(), &DISCOUNT_GRID);
        assert_eq!(SweepKind::Lr.grid(), &LR_GRID);
    }

    #[test]
    fn load_sweep_covers_grid() {
        let rows = sweep(&small(), SweepKind::Load, None).unwrap();
        assert_eq!(rows.len(), 7 * SchedulerKind::HEURISTICS.len());
        assert!(rows.iter().all(|r| r.error.is_empty()));
    }
}
