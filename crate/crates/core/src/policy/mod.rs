//! Actor and critic networks, priority-weighted softmax action selection,
//! TD/advantage estimates and policy-gradient computation.
//!
//! Sign conventions for [`Gradients`]: the actor gradient is an *ascent*
//! direction on `sum log pi(a|s) * A`, the critic gradient is a *descent*
//! direction on `sum (R - V(s))^2`. The optimizer adds the former and
//! subtracts the latter.

mod checkpoint;
pub mod mlp;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use mlp::Mlp;

use crate::error::{Error, Result};

/// Default hidden layer widths for both networks.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub actor: Mlp,
    pub critic: Mlp,
    pub version: u64,
    /// Version each layer (actor layers, then critic layers) was last written at.
    pub layer_stamps: Vec<u64>,
}

impl PolicyParams {
    pub fn new(obs_len: usize, action_count: usize, hidden: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let actor_sizes: Vec<usize> = std::iter::once(obs_len)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(action_count))
            .collect();
        let mut critic_sizes = actor_sizes.clone();
        *critic_sizes.last_mut().unwrap() = 1;
        Self::from_networks(Mlp::random(&actor_sizes, rng)?, Mlp::random(&critic_sizes, rng)?, 0)
    }

    pub fn from_networks(actor: Mlp, critic: Mlp, version: u64) -> Result<Self> {
        if actor.input_len() != critic.input_len() {
            return Err(Error::Shape(format!(
                "actor takes {} inputs but critic takes {}",
                actor.input_len(),
                critic.input_len()
            )));
        }
        if actor.output_len() < 2 {
            return Err(Error::Shape("actor needs at least one slot plus the no-op".into()));
        }
        if critic.output_len() != 1 {
            return Err(Error::Shape(format!("critic must output a scalar, got width {}", critic.output_len())));
        }
        let layers = actor.layer_count() + critic.layer_count();
        Ok(PolicyParams {
            actor,
            critic,
            version,
            layer_stamps: vec![version; layers],
        })
    }

    /// Same shapes, all parameters zero.
    pub fn zeros_like(&self) -> Self {
        let actor = Mlp::zeros(self.actor.sizes()).unwrap();
        let critic = Mlp::zeros(self.critic.sizes()).unwrap();
        Self::from_networks(actor, critic, 0).unwrap()
    }

    pub fn obs_len(&self) -> usize {
        self.actor.input_len()
    }

    pub fn action_count(&self) -> usize {
        self.actor.output_len()
    }

    /// True when every layer carries the snapshot's version stamp.
    pub fn is_consistent(&self) -> bool {
        self.layer_stamps.iter().all(|s| *s == self.version)
    }

    pub fn is_finite(&self) -> bool {
        self.actor.params().iter().chain(self.critic.params()).all(|p| p.is_finite())
    }
}

/// Action scores `Q(s, .)` over `K + 1` actions.
pub fn actor_forward(obs: &[f64], params: &PolicyParams) -> Result<Vec<f64>> {
    params.actor.forward(obs)
}

/// State value `V(s)`.
pub fn critic_forward(obs: &[f64], params: &PolicyParams) -> Result<f64> {
    Ok(params.critic.forward(obs)?[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub probabilities: Vec<f64>,
    pub chosen: usize,
    pub log_prob_chosen: f64,
}

/// `softmax(score + beta * priority)` over live actions; masked actions get
/// probability 0. Scores are shifted by their maximum before exponentiating.
pub fn action_probabilities(scores: &[f64], priorities: &[f64], mask: &[bool], beta: f64) -> Result<Vec<f64>> {
    if scores.len() != priorities.len() || scores.len() != mask.len() {
        return Err(Error::Shape(format!(
            "scores ({}), priorities ({}) and mask ({}) must align",
            scores.len(),
            priorities.len(),
            mask.len()
        )));
    }
    let logits: Vec<f64> = scores
        .iter()
        .zip(priorities)
        .zip(mask)
        .map(|((s, p), live)| if *live { s + beta * p } else { f64::NEG_INFINITY })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Shape("no live action".into()));
    }
    let mut probs: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    Ok(probs)
}

/// Samples from the priority-weighted softmax.
pub fn select_action(
    scores: &[f64],
    priorities: &[f64],
    mask: &[bool],
    beta: f64,
    rng: &mut impl Rng,
) -> Result<ActionDistribution> {
    let probabilities = action_probabilities(scores, priorities, mask, beta)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, p) in probabilities.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            chosen = Some(i);
            if u < acc {
                break;
            }
        }
    }
    let chosen = chosen.expect("at least one live action");
    Ok(ActionDistribution {
        log_prob_chosen: probabilities[chosen].ln(),
        probabilities,
        chosen,
    })
}

/// Argmax of `score + beta * priority` over live actions; lowest index on ties.
pub fn greedy_action(scores: &[f64], priorities: &[f64], mask: &[bool], beta: f64) -> usize {
    let mut best = None::<(usize, f64)>;
    for i in 0..scores.len() {
        if !mask[i] {
            continue;
        }
        let v = scores[i] + beta * priorities[i];
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i).unwrap_or(scores.len() - 1)
}

/// `r + gamma * V(s') - V(s)`; pass `v_next = 0` for a terminal successor.
pub fn td_error(reward: f64, v_next: f64, v_now: f64, discount: f64) -> f64 {
    reward + discount * v_next - v_now
}

/// Discounted return of `rewards`, bootstrapped with `gamma^k * v_bootstrap`, minus `v_now`.
pub fn n_step_advantage(rewards: &[f64], v_bootstrap: f64, v_now: f64, discount: f64) -> f64 {
    let mut ret = v_bootstrap;
    for r in rewards.iter().rev() {
        ret = r + discount * ret;
    }
    ret - v_now
}

/// One recorded decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub features: Vec<f64>,
    pub mask: Vec<bool>,
    pub priorities: Vec<f64>,
    pub action: usize,
    pub reward: f64,
}

/// Consecutive transitions since the last sync. `bootstrap` holds the
/// successor state's features, or `None` when the segment ends the episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Segment {
    pub steps: Vec<Transition>,
    pub bootstrap: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Ascent direction for the actor.
    pub actor: Vec<f64>,
    /// Descent direction for the critic.
    pub critic: Vec<f64>,
    pub accumulation_count: usize,
}

impl Gradients {
    pub fn zeros(params: &PolicyParams) -> Self {
        Gradients {
            actor: vec![0.0; params.actor.param_count()],
            critic: vec![0.0; params.critic.param_count()],
            accumulation_count: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.actor.iter().chain(&self.critic).all(|g| g.is_finite())
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        self.actor.iter_mut().zip(&other.actor).for_each(|(a, b)| *a += b);
        self.critic.iter_mut().zip(&other.critic).for_each(|(a, b)| *a += b);
        self.accumulation_count += other.accumulation_count;
    }

    pub fn reset(&mut self) {
        self.actor.iter_mut().for_each(|g| *g = 0.0);
        self.critic.iter_mut().for_each(|g| *g = 0.0);
        self.accumulation_count = 0;
    }

    pub fn is_congruent(&self, params: &PolicyParams) -> bool {
        self.actor.len() == params.actor.param_count() && self.critic.len() == params.critic.param_count()
    }

    /// Rescales each network's gradient so its L2 norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        for g in [&mut self.actor, &mut self.critic] {
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > max_norm && norm > 0.0 {
                let scale = max_norm / norm;
                g.iter_mut().for_each(|x| *x *= scale);
            }
        }
    }
}

/// Per-step returns `R_i = r_i + gamma * R_{i+1}`, seeded with `v_bootstrap`.
pub fn discounted_returns(rewards: &[f64], v_bootstrap: f64, discount: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut ret = v_bootstrap;
    for (i, r) in rewards.iter().enumerate().rev() {
        ret = r + discount * ret;
        out[i] = ret;
    }
    out
}

/// Gradients over one segment.
///
/// Actor: `sum_i grad [log pi(a_i | s_i) * (R_i - V(s_i)) + entropy * H(pi(. | s_i))]`,
/// with the advantage held constant. Critic: `sum_i grad (R_i - V(s_i))^2`
/// with the return `R_i` held constant.
pub fn compute_gradients(
    segment: &Segment,
    params: &PolicyParams,
    discount: f64,
    beta: f64,
    entropy: f64,
) -> Result<Gradients> {
    if segment.steps.is_empty() {
        return Err(Error::Shape("segment has no steps".into()));
    }
    let last = segment.steps.len() - 1;
    let v_bootstrap = match &segment.bootstrap {
        Some(features) => critic_forward(features, params)?,
        None => 0.0,
    };
    if !v_bootstrap.is_finite() {
        return Err(Error::Numerical {
            step: last,
            what: "bootstrap value".into(),
        });
    }
    let rewards: Vec<f64> = segment.steps.iter().map(|t| t.reward).collect();
    let returns = discounted_returns(&rewards, v_bootstrap, discount);

    let mut grads = Gradients::zeros(params);
    for (i, (step, ret)) in segment.steps.iter().zip(&returns).enumerate() {
        let actor_trace = params.actor.forward_trace(&step.features)?;
        let critic_trace = params.critic.forward_trace(&step.features)?;
        let value = critic_trace.output()[0];
        let advantage = ret - value;
        if !advantage.is_finite() || !ret.is_finite() {
            return Err(Error::Numerical {
                step: i,
                what: format!("advantage {advantage} (return {ret}, value {value})"),
            });
        }
        let probs = action_probabilities(actor_trace.output(), &step.priorities, &step.mask, beta)?;
        if !step.mask.get(step.action).copied().unwrap_or(false) {
            return Err(Error::Shape(format!("step {i} chose masked action {}", step.action)));
        }
        // dH/dz_k = -p_k (ln p_k + H); masked actions have p_k = 0 and drop out.
        let h: f64 = -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
        let d_scores: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let indicator = if k == step.action { 1.0 } else { 0.0 };
                let d_entropy = if p > 0.0 { -p * (p.ln() + h) } else { 0.0 };
                (indicator - p) * advantage + entropy * d_entropy
            })
            .collect();
        params.actor.backward(&actor_trace, &d_scores, &mut grads.actor);
        params.critic.backward(&critic_trace, &[-2.0 * advantage], &mut grads.critic);
    }
    grads.accumulation_count = segment.steps.len();
    if !grads.is_finite() {
        return Err(Error::Numerical {
            step: last,
            what: "accumulated gradient".into(),
        });
    }
    Ok(grads)
}
