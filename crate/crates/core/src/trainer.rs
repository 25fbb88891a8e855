//! Asynchronous actor-critic training: a mutex-guarded global parameter store
//! with RMSProp, and workers that push accumulated gradients and pull fresh
//! parameters every `sync_interval` steps.
//!
//! With one worker the run is bit-for-bit reproducible from the seed. With
//! several workers the commit interleaving depends on thread scheduling.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{Action, Environment};
use crate::error::{Error, Result};
use crate::metrics::{moving_average, EpisodeStats};
use crate::policy::{self, Gradients, PolicyParams, Segment, Transition, DEFAULT_HIDDEN};
use crate::reward::RewardWeights;
use crate::seed::{derive, STREAM_WORKER};
use crate::workload::Job;

const STREAM_INIT: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub n_workers: usize,
    pub episodes: usize,
    /// Steps between gradient pushes; `None` syncs only at episode end
    /// (written as `"episode"` in config files).
    #[serde(with = "sync_interval")]
    pub sync_interval: Option<usize>,
    pub discount: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    /// Per-network gradient norm cap applied before each push.
    pub grad_clip: f64,
    /// Priority weight in the action softmax.
    pub beta: f64,
    /// Weight of the policy-entropy bonus in the actor objective.
    pub entropy: f64,
    /// Reward weights the learner optimizes; `None` uses the environment's.
    pub learning_weights: Option<RewardWeights>,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            n_workers: 4,
            episodes: 500,
            sync_interval: Some(20),
            discount: 0.95,
            lr_actor: 0.01,
            lr_critic: 0.01,
            rmsprop_decay: 0.99,
            rmsprop_epsilon: 1e-8,
            grad_clip: 5.0,
            beta: 2.0,
            entropy: 0.05,
            learning_weights: None,
            hidden: DEFAULT_HIDDEN.to_vec(),
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_workers == 0 {
            return Err(Error::config("trainer.n_workers", "must be at least 1"));
        }
        if self.sync_interval == Some(0) {
            return Err(Error::config("trainer.sync_interval", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::config("trainer.discount", "must lie in [0, 1]"));
        }
        for (field, lr) in [("trainer.lr_actor", self.lr_actor), ("trainer.lr_critic", self.lr_critic)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if !(self.rmsprop_decay > 0.0 && self.rmsprop_decay < 1.0) {
            return Err(Error::config("trainer.rmsprop_decay", "must lie in (0, 1)"));
        }
        if !(self.rmsprop_epsilon > 0.0) {
            return Err(Error::config("trainer.rmsprop_epsilon", "must be positive"));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::config("trainer.grad_clip", "must be positive"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("trainer.beta", "must be non-negative"));
        }
        if !(self.entropy >= 0.0 && self.entropy.is_finite()) {
            return Err(Error::config("trainer.entropy", "must be non-negative"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("trainer.hidden", "layer widths must be positive"));
        }
        if let Some(w) = &self.learning_weights {
            w.validate()?;
        }
        Ok(())
    }
}

mod sync_interval {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Steps(usize),
        Word(String),
    }

    pub fn serialize<S: Serializer>(value: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(u) => s.serialize_u64(*u as u64),
            None => s.serialize_str("episode"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Steps(u) => Ok(Some(u)),
            Repr::Word(w) if w == "episode" => Ok(None),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "expected a step count or \"episode\", got {w:?}"
            ))),
        }
    }
}

/// One RMSProp update in place.
///
/// `state <- decay * state + (1 - decay) * grad^2`, then
/// `param <- param + direction * lr * grad / sqrt(state + epsilon)`.
/// Use `direction = 1` for an ascent gradient and `-1` for a descent gradient.
pub fn rmsprop_step(param: &mut [f64], grad: &[f64], state: &mut [f64], lr: f64, decay: f64, epsilon: f64, direction: f64) {
    for ((p, g), s) in param.iter_mut().zip(grad).zip(state.iter_mut()) {
        *s = decay * *s + (1.0 - decay) * g * g;
        *p += direction * lr * g / (*s + epsilon).sqrt();
    }
}

#[derive(Debug)]
struct StoreInner {
    params: PolicyParams,
    sq_actor: Vec<f64>,
    sq_critic: Vec<f64>,
    update_count: u64,
    commits_by_worker: Vec<usize>,
    rejected: usize,
}

/// Shared parameters plus optimizer state. Reads and commits both take the
/// lock, so every snapshot carries exactly one version.
///
/// RMSProp normalizes every parameter's step to roughly `lr`, so a unit with
/// `n` inputs would move by about `n * lr` per commit. Each layer therefore
/// uses `lr / fan_in`, keeping per-unit movement near `lr` at any width.
#[derive(Debug)]
pub struct GlobalStore {
    inner: Mutex<StoreInner>,
    lr_actor: f64,
    lr_critic: f64,
    decay: f64,
    epsilon: f64,
}

impl GlobalStore {
    pub fn new(params: PolicyParams, config: &TrainerConfig) -> Self {
        GlobalStore {
            inner: Mutex::new(StoreInner {
                sq_actor: vec![0.0; params.actor.param_count()],
                sq_critic: vec![0.0; params.critic.param_count()],
                update_count: params.version,
                params,
                commits_by_worker: vec![0; config.n_workers],
                rejected: 0,
            }),
            lr_actor: config.lr_actor,
            lr_critic: config.lr_critic,
            decay: config.rmsprop_decay,
            epsilon: config.rmsprop_epsilon,
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, StoreInner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn snapshot(&self) -> PolicyParams {
        self.lock().params.clone()
    }

    pub fn update_count(&self) -> u64 {
        self.lock().update_count
    }

    pub fn commits_by_worker(&self) -> Vec<usize> {
        self.lock().commits_by_worker.clone()
    }

    pub fn rejected_updates(&self) -> usize {
        self.lock().rejected
    }

    pub fn rmsprop_state(&self) -> (Vec<f64>, Vec<f64>) {
        let inner = self.lock();
        (inner.sq_actor.clone(), inner.sq_critic.clone())
    }

    /// Applies `grads` to the global parameters, resets `grads`, and returns
    /// the updated parameters. Non-finite or mis-shaped gradients are rejected
    /// (the accumulator is still reset).
    pub fn sync_update(&self, grads: &mut Gradients, worker_id: usize) -> Result<PolicyParams> {
        let mut inner = self.lock();
        if !grads.is_congruent(&inner.params) {
            grads.reset();
            inner.rejected += 1;
            return Err(Error::Shape("gradient shape does not match the global parameters".into()));
        }
        if !grads.is_finite() {
            grads.reset();
            inner.rejected += 1;
            log::warn!("worker {worker_id}: rejected non-finite gradient");
            return Err(Error::Numerical {
                step: 0,
                what: "non-finite gradient pushed to the global store".into(),
            });
        }
        let StoreInner {
            params,
            sq_actor,
            sq_critic,
            ..
        } = &mut *inner;
        let version = params.version + 1;
        let nets = [
            (&mut params.actor, &grads.actor, sq_actor, self.lr_actor, 1.0),
            (&mut params.critic, &grads.critic, sq_critic, self.lr_critic, -1.0),
        ];
        let mut stamps = params.layer_stamps.iter_mut();
        for (net, grad, state, lr, direction) in nets {
            for (offset, len, fan_in) in net.layer_spans() {
                let span = offset..offset + len;
                rmsprop_step(
                    &mut net.params_mut()[span.clone()],
                    &grad[span.clone()],
                    &mut state[span],
                    lr / fan_in as f64,
                    self.decay,
                    self.epsilon,
                    direction,
                );
                *stamps.next().expect("one stamp per layer") = version;
            }
        }
        params.version = version;
        inner.update_count += 1;
        if let Some(c) = inner.commits_by_worker.get_mut(worker_id) {
            *c += 1;
        }
        grads.reset();
        Ok(inner.params.clone())
    }
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    /// One record per completed episode, ordered by episode index.
    pub episodes: Vec<EpisodeStats>,
    pub params: PolicyParams,
    pub commits_by_worker: Vec<usize>,
    pub rejected_updates: usize,
    /// Episodes that aborted with an error, as `(episode, message)`.
    pub failures: Vec<(usize, String)>,
}

impl TrainingReport {
    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.total_reward).collect()
    }

    /// Mean reward over the last `window` episodes.
    pub fn final_mean_reward(&self, window: usize) -> Option<f64> {
        moving_average(&self.rewards(), window).last().copied()
    }
}

fn learning_reward(reward: &crate::reward::RewardBreakdown, weights: Option<&RewardWeights>) -> f64 {
    match weights {
        Some(w) => reward.reweighted(w).total,
        None => reward.total,
    }
}

/// Runs one training episode against `env`, pushing gradients through `store`.
/// Returns the episode's statistics.
#[allow(clippy::too_many_arguments)]
fn run_episode(
    episode: usize,
    worker_id: usize,
    env: &mut Environment,
    trace: Vec<Job>,
    local: &mut PolicyParams,
    store: &GlobalStore,
    config: &TrainerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeStats> {
    let start = Instant::now();
    let slots = env.config().queue_slots;
    let mut obs = env.reset(trace);
    let mut segment = Segment::default();
    let mut done = env.is_done();
    while !done {
        let mask = obs.action_mask();
        let priorities = obs.action_priorities();
        let mut live = mask.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i);
        let action = if let (Some(only), None) = (live.next(), live.next()) {
            only
        } else {
            let scores = policy::actor_forward(&obs.features, local)?;
            policy::select_action(&scores, &priorities, &mask, config.beta, rng)?.chosen
        };
        let out = env.step(Action::from_index(action, slots))?;
        done = out.done;
        segment.steps.push(Transition {
            features: std::mem::take(&mut obs.features),
            mask,
            priorities,
            action,
            reward: learning_reward(&out.reward, config.learning_weights.as_ref()),
        });
        obs = out.observation;
        if done || config.sync_interval.is_some_and(|u| segment.steps.len() >= u) {
            segment.bootstrap = (!done).then(|| obs.features.clone());
            let mut grads = policy::compute_gradients(&segment, local, config.discount, config.beta, config.entropy)?;
            grads.clip_norm(config.grad_clip);
            match store.sync_update(&mut grads, worker_id) {
                Ok(fresh) => *local = fresh,
                Err(e) => {
                    log::warn!("worker {worker_id} episode {episode}: {e}");
                    *local = store.snapshot();
                }
            }
            segment.steps.clear();
        }
    }
    let mut stats = env.episode_stats(episode, worker_id);
    stats.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(stats)
}

/// Worker loop: claims episode indices from `next` until `config.episodes`
/// are taken. Episode failures are logged and skipped.
pub fn run_worker<F, T>(
    worker_id: usize,
    store: &GlobalStore,
    env_factory: &F,
    traces: &T,
    config: &TrainerConfig,
    next: &AtomicUsize,
) -> (Vec<EpisodeStats>, Vec<(usize, String)>)
where
    F: Fn() -> Result<Environment>,
    T: Fn(usize) -> Result<Vec<Job>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, STREAM_WORKER, worker_id as u64));
    let mut local = store.snapshot();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    loop {
        let episode = next.fetch_add(1, Ordering::SeqCst);
        if episode >= config.episodes {
            break;
        }
        let result = traces(episode)
            .and_then(|trace| Ok((trace, env_factory()?)))
            .and_then(|(trace, mut env)| {
                run_episode(episode, worker_id, &mut env, trace, &mut local, store, config, &mut rng)
            });
        match result {
            Ok(stats) => {
                log::debug!(
                    "worker {worker_id} episode {episode}: reward {:.3}, latency {:.2}",
                    stats.total_reward,
                    stats.mean_latency
                );
                records.push(stats);
            }
            Err(e) => {
                log::error!("worker {worker_id} episode {episode} failed: {e}");
                failures.push((episode, e.to_string()));
                local = store.snapshot();
            }
        }
    }
    (records, failures)
}

/// Trains from freshly initialized parameters. `traces(episode)` supplies the
/// job trace for each episode; `env_factory` builds one environment per episode.
pub fn train<F, T>(config: &TrainerConfig, env_factory: F, traces: T) -> Result<TrainingReport>
where
    F: Fn() -> Result<Environment> + Sync,
    T: Fn(usize) -> Result<Vec<Job>> + Sync,
{
    config.validate()?;
    let probe = env_factory()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive(config.seed, STREAM_INIT, 0));
    let params = PolicyParams::new(
        probe.config().observation_len(),
        probe.config().action_count(),
        &config.hidden,
        &mut init_rng,
    )?;
    train_from(config, params, env_factory, traces)
}

/// Trains starting from `params`.
pub fn train_from<F, T>(config: &TrainerConfig, params: PolicyParams, env_factory: F, traces: T) -> Result<TrainingReport>
where
    F: Fn() -> Result<Environment> + Sync,
    T: Fn(usize) -> Result<Vec<Job>> + Sync,
{
    config.validate()?;
    let store = GlobalStore::new(params, config);
    let next = AtomicUsize::new(0);
    let results: Vec<_> = if config.n_workers == 1 {
        vec![run_worker(0, &store, &env_factory, &traces, config, &next)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..config.n_workers)
                .map(|w| {
                    let (store, env_factory, traces, next) = (&store, &env_factory, &traces, &next);
                    s.spawn(move || run_worker(w, store, env_factory, traces, config, next))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
        })
    };
    let mut episodes = Vec::new();
    let mut failures = Vec::new();
    for (records, fails) in results {
        episodes.extend(records);
        failures.extend(fails);
    }
    episodes.sort_by_key(|e| e.episode);
    failures.sort();
    Ok(TrainingReport {
        episodes,
        params: store.snapshot(),
        commits_by_worker: store.commits_by_worker(),
        rejected_updates: store.rejected_updates(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::ClusterConfig;
    use crate::reward::RewardParams;
    use crate::seed::STREAM_TRACE;
    use crate::workload::{generate_synthetic, TraceConfig};

    #[test]
    fn rmsprop_scalar_example() {
        let (mut p, mut s) = ([1.0], [0.0]);
        rmsprop_step(&mut p, &[1.0], &mut s, 0.1, 0.9, 1e-8, -1.0);
        assert!((s[0] - 0.1).abs() < 1e-12);
        assert!((1.0 - p[0] - 0.1 / (0.1f64 + 1e-8).sqrt()).abs() < 1e-12);
        assert!((1.0 - p[0] - 0.3162).abs() < 1e-4);
    }

    #[test]
    fn rmsprop_second_step_is_smaller() {
        let (mut p, mut s) = ([0.0], [0.0]);
        rmsprop_step(&mut p, &[1.0], &mut s, 0.1, 0.9, 1e-8, 1.0);
        let first = p[0];
        rmsprop_step(&mut p, &[1.0], &mut s, 0.1, 0.9, 1e-8, 1.0);
        assert!(p[0] - first < first);
    }

    #[test]
    fn rmsprop_zero_gradient_and_epsilon_floor() {
        let (mut p, mut s) = ([2.5], [0.4]);
        rmsprop_step(&mut p, &[0.0], &mut s, 0.1, 0.9, 1e-8, 1.0);
        assert_eq!(p[0], 2.5);
        assert!((s[0] - 0.36).abs() < 1e-12);
        let (mut p, mut s) = ([0.0], [0.0]);
        rmsprop_step(&mut p, &[0.0], &mut s, 0.1, 0.9, 1e-8, 1.0);
        assert_eq!(p[0], 0.0);
    }

    fn small_params() -> PolicyParams {
        PolicyParams::new(4, 3, &[3], &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn zero_gradient_only_bumps_version() {
        let p = small_params();
        let store = GlobalStore::new(p.clone(), &TrainerConfig::default());
        let mut g = Gradients::zeros(&p);
        let fresh = store.sync_update(&mut g, 0).unwrap();
        assert_eq!(fresh.actor, p.actor);
        assert_eq!(fresh.critic, p.critic);
        assert_eq!(fresh.version, 1);
        assert!(fresh.is_consistent());
        assert_eq!(store.update_count(), 1);
    }

    #[test]
    fn non_finite_gradient_rejected_and_reset() {
        let p = small_params();
        let store = GlobalStore::new(p.clone(), &TrainerConfig::default());
        let mut g = Gradients::zeros(&p);
        g.actor[0] = f64::NAN;
        g.accumulation_count = 3;
        assert!(matches!(store.sync_update(&mut g, 0), Err(Error::Numerical { .. })));
        assert_eq!(g.accumulation_count, 0);
        assert!(g.is_finite());
        assert_eq!(store.snapshot(), p);
        assert_eq!(store.rejected_updates(), 1);
    }

    #[test]
    fn concurrent_commits_never_tear() {
        let p = small_params();
        let config = TrainerConfig {
            n_workers: 4,
            ..TrainerConfig::default()
        };
        let store = GlobalStore::new(p.clone(), &config);
        std::thread::scope(|s| {
            for w in 0..4 {
                let store = &store;
                let p = &p;
                s.spawn(move || {
                    for i in 0..200 {
                        let mut g = Gradients::zeros(p);
                        g.actor.iter_mut().for_each(|x| *x = (w + i) as f64 * 1e-3);
                        g.critic.iter_mut().for_each(|x| *x = 1e-3);
                        let fresh = store.sync_update(&mut g, w).unwrap();
                        assert!(fresh.is_consistent());
                        assert!(store.snapshot().is_consistent());
                    }
                });
            }
        });
        assert_eq!(store.update_count(), 800);
        assert_eq!(store.snapshot().version, 800);
        assert_eq!(store.commits_by_worker(), vec![200; 4]);
        let (a, c) = store.rmsprop_state();
        assert!(a.iter().chain(&c).all(|s| *s >= 0.0));
    }

    fn tiny_run(config: &TrainerConfig) -> TrainingReport {
        let cluster = ClusterConfig {
            vm_count: 2,
            queue_slots: 4,
            ..ClusterConfig::default()
        };
        let obs = cluster.clone();
        let seed = config.seed;
        train(
            config,
            move || Environment::new(obs.clone(), RewardWeights::default(), RewardParams::default()),
            move |ep| {
                generate_synthetic(&TraceConfig {
                    job_count: 30,
                    seed: derive(seed, STREAM_TRACE, ep as u64),
                    ..TraceConfig::default()
                })
            },
        )
        .unwrap()
    }

    #[test]
    fn single_worker_is_deterministic() {
        let config = TrainerConfig {
            n_workers: 1,
            episodes: 4,
            sync_interval: None,
            hidden: vec![8],
            seed: 9,
            ..TrainerConfig::default()
        };
        let a = tiny_run(&config);
        let b = tiny_run(&config);
        assert_eq!(a.episodes.len(), 4);
        let bits = |r: &TrainingReport| r.rewards().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.params, b.params);
        assert_eq!(a.params.version, 4);
    }

    #[test]
    fn zero_episodes_is_empty() {
        let r = tiny_run(&TrainerConfig {
            n_workers: 1,
            episodes: 0,
            hidden: vec![4],
            ..TrainerConfig::default()
        });
        assert!(r.episodes.is_empty());
        assert_eq!(r.params.version, 0);
    }

    #[test]
    fn multi_worker_run_commits_from_every_worker() {
        let r = tiny_run(&TrainerConfig {
            n_workers: 3,
            episodes: 6,
            sync_interval: Some(5),
            hidden: vec![8],
            seed: 1,
            ..TrainerConfig::default()
        });
        assert_eq!(r.episodes.len(), 6);
        assert_eq!(r.episodes.iter().map(|e| e.episode).collect::<Vec<_>>(), (0..6).collect::<Vec<_>>());
        let min_steps = r.episodes.iter().map(|e| e.steps).min().unwrap();
        assert!(r.params.version as usize >= 6 * (min_steps / 5));
        assert!(r.final_mean_reward(50).unwrap().is_finite());
    }

    #[test]
    fn validation() {
        assert!(TrainerConfig::default().validate().is_ok());
        for bad in [
            TrainerConfig {
                n_workers: 0,
                ..TrainerConfig::default()
            },
            TrainerConfig {
                sync_interval: Some(0),
                ..TrainerConfig::default()
            },
            TrainerConfig {
                lr_actor: 0.0,
                ..TrainerConfig::default()
            },
        ] {
            assert!(bad.validate().unwrap_err().is_config());
        }
    }
}
