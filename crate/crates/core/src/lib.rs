//! Discrete-time datacenter job-scheduling simulator with an embedded
//! weighted asynchronous advantage actor-critic (WA3C) scheduler.
//!
//! The crate is organised bottom-up:
//!
//! * [`workload`] generates and loads job traces.
//! * [`environment`] is the scheduling MDP: queue, cluster, placement,
//!   overload victim selection, latency and energy accounting.
//! * [`reward`] turns one tick's outcome into the weighted multi-objective reward.
//! * [`policy`] holds the actor/critic networks, action selection and gradients.
//! * [`trainer`] runs asynchronous workers against a shared parameter store.
//! * [`baselines`] contains the heuristic schedulers.
//! * [`metrics`] aggregates episode statistics and writes tabular output.
//! * [`experiment`] ties everything together behind a declarative config.

pub mod baselines;
pub mod environment;
mod error;
pub mod events;
pub mod experiment;
pub mod metrics;
pub mod policy;
pub mod reward;
pub mod seed;
pub mod trainer;
pub mod workload;

pub use baselines::{Heuristic, SchedulerKind};
pub use environment::{Action, ClusterConfig, ClusterState, Environment, Observation, QueueEntry, StepOutcome};
pub use error::{Error, Result};
pub use experiment::ExperimentConfig;
pub use metrics::EpisodeStats;
pub use policy::{ActionDistribution, Gradients, PolicyParams};
pub use reward::{RewardBreakdown, RewardParams, RewardWeights};
pub use trainer::{GlobalStore, TrainerConfig, TrainingReport};
pub use workload::{Job, TraceConfig};
