//! Multi-objective step reward: QoS, energy, priority satisfaction, fairness
//! and dismissal terms combined by a normalised weight vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights for the five reward terms. Must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub qos: f64,
    pub energy: f64,
    pub priority: f64,
    pub fairness: f64,
    pub dismissal: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            qos: 0.25,
            energy: 0.2,
            priority: 0.25,
            fairness: 0.15,
            dismissal: 0.15,
        }
    }
}

impl RewardWeights {
    pub fn new(qos: f64, energy: f64, priority: f64, fairness: f64, dismissal: f64) -> Result<Self> {
        let w = RewardWeights {
            qos,
            energy,
            priority,
            fairness,
            dismissal,
        };
        w.validate()?;
        Ok(w)
    }

    /// QoS and energy only; the ablation without priority/fairness shaping.
    pub fn qos_energy_only() -> Self {
        RewardWeights {
            qos: 0.5,
            energy: 0.5,
            priority: 0.0,
            fairness: 0.0,
            dismissal: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.qos, self.energy, self.priority, self.fairness, self.dismissal]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::config("reward.weights", "each weight must lie in [0, 1]"));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config("reward.weights", format!("must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardParams {
    /// Maximum tolerable latency, ticks.
    pub l_max: f64,
    pub alpha_energy: f64,
    pub lambda_fair: f64,
    pub mu_dismiss: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            l_max: 200.0,
            alpha_energy: 1.0,
            lambda_fair: 1.0,
            mu_dismiss: 0.5,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l_max > 0.0 && self.l_max.is_finite()) {
            return Err(Error::config("reward.l_max", "must be positive"));
        }
        for (name, v) in [
            ("reward.alpha_energy", self.alpha_energy),
            ("reward.lambda_fair", self.lambda_fair),
            ("reward.mu_dismiss", self.mu_dismiss),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// The five per-step reward terms, before weighting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub qos: f64,
    pub energy: f64,
    pub priority: f64,
    pub fairness: f64,
    pub dismissal: f64,
}

impl RewardComponents {
    pub fn as_array(&self) -> [f64; 5] {
        [self.qos, self.energy, self.priority, self.fairness, self.dismissal]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub qos: f64,
    pub energy: f64,
    pub priority: f64,
    pub fairness: f64,
    pub dismissal: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn components(&self) -> RewardComponents {
        RewardComponents {
            qos: self.qos,
            energy: self.energy,
            priority: self.priority,
            fairness: self.fairness,
            dismissal: self.dismissal,
        }
    }

    /// Same components, re-weighted.
    pub fn reweighted(&self, weights: &RewardWeights) -> RewardBreakdown {
        total_reward(&self.components(), weights)
    }
}

/// `1 - L/L_max`, clamped to `[-1, 1]`.
pub fn qos_reward(latency: f64, l_max: f64) -> f64 {
    (1.0 - latency / l_max).clamp(-1.0, 1.0)
}

/// `-alpha * E`, with `E` the normalised energy in `[0, 1]`.
pub fn energy_reward(energy_normalized: f64, alpha_energy: f64) -> f64 {
    -alpha_energy * energy_normalized
}

/// `P * (1 - L_norm)`.
pub fn priority_reward(priority: f64, latency_normalized: f64) -> f64 {
    priority * (1.0 - latency_normalized)
}

/// `-lambda * Var(shares)` with the population variance; zero for fewer than two shares.
pub fn fairness_reward(shares: &[f64], lambda_fair: f64) -> f64 {
    if shares.len() < 2 || shares.iter().all(|s| *s == shares[0]) {
        return 0.0;
    }
    let n = shares.len() as f64;
    let mean = shares.iter().sum::<f64>() / n;
    let var = shares.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    -lambda_fair * var
}

/// `-mu * D`.
pub fn dismissal_reward(dismissed: usize, mu_dismiss: f64) -> f64 {
    -mu_dismiss * dismissed as f64
}

pub fn total_reward(c: &RewardComponents, w: &RewardWeights) -> RewardBreakdown {
    let total = w.qos * c.qos
        + w.energy * c.energy
        + w.priority * c.priority
        + w.fairness * c.fairness
        + w.dismissal * c.dismissal;
    RewardBreakdown {
        qos: c.qos,
        energy: c.energy,
        priority: c.priority,
        fairness: c.fairness,
        dismissal: c.dismissal,
        total,
    }
}

/// Per-job inputs to the completion-driven terms.
#[derive(Debug, Clone, Copy)]
pub struct CompletionInput {
    pub latency: f64,
    pub priority: f64,
    pub energy_normalized: f64,
}

/// Components for one tick: QoS, energy and priority terms are averaged over
/// the jobs completing in the tick (zero when none complete).
pub fn step_components(
    completions: &[CompletionInput],
    active_shares: &[f64],
    dismissed: usize,
    params: &RewardParams,
) -> RewardComponents {
    let mut c = RewardComponents {
        fairness: fairness_reward(active_shares, params.lambda_fair),
        dismissal: dismissal_reward(dismissed, params.mu_dismiss),
        ..RewardComponents::default()
    };
    if !completions.is_empty() {
        let n = completions.len() as f64;
        for job in completions {
            let l_norm = (job.latency / params.l_max).clamp(0.0, 1.0);
            c.qos += qos_reward(job.latency, params.l_max);
            c.energy += energy_reward(job.energy_normalized.clamp(0.0, 1.0), params.alpha_energy);
            c.priority += priority_reward(job.priority, l_norm);
        }
        c.qos /= n;
        c.energy /= n;
        c.priority /= n;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOL: f64 = 1e-9;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= TOL
    }

    #[test]
    fn qos_examples() {
        assert!(close(qos_reward(0.0, 100.0), 1.0));
        assert!(close(qos_reward(100.0, 100.0), 0.0));
        assert!(close(qos_reward(25.0, 100.0), 0.75));
        assert!(close(qos_reward(1000.0, 100.0), -1.0));
    }

    #[test]
    fn energy_examples() {
        assert!(close(energy_reward(0.0, 1.0), 0.0));
        assert!(close(energy_reward(0.5, 1.0), -0.5));
        assert!(close(energy_reward(0.7, 0.0), 0.0));
    }

    #[test]
    fn priority_examples() {
        assert!(close(priority_reward(1.0, 0.0), 1.0));
        assert!(close(priority_reward(0.0, 0.3), 0.0));
        assert!(close(priority_reward(0.8, 0.25), 0.6));
    }

    #[test]
    fn fairness_examples() {
        assert!(close(fairness_reward(&[0.4, 0.4, 0.4], 1.0), 0.0));
        assert!(close(fairness_reward(&[0.0, 1.0], 1.0), -0.25));
        assert!(close(fairness_reward(&[0.0, 1.0, 0.3], 0.0), 0.0));
        assert_eq!(fairness_reward(&[], 1.0), 0.0);
        assert_eq!(fairness_reward(&[0.9], 1.0), 0.0);
    }

    #[test]
    fn dismissal_examples() {
        assert!(close(dismissal_reward(0, 0.5), 0.0));
        assert!(close(dismissal_reward(4, 0.5), -2.0));
        assert!(close(dismissal_reward(1, 0.5), -0.5));
    }

    #[test]
    fn total_examples() {
        let w = RewardWeights::default();
        assert!(close(total_reward(&RewardComponents::default(), &w).total, 0.0));
        let c = RewardComponents {
            qos: 1.0,
            priority: 1.0,
            ..Default::default()
        };
        assert!(close(total_reward(&c, &w).total, 0.5));
        let ones = RewardComponents {
            qos: 1.0,
            energy: 1.0,
            priority: 1.0,
            fairness: 1.0,
            dismissal: 1.0,
        };
        assert!(close(total_reward(&ones, &w).total, 1.0));
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(RewardWeights::default().validate().is_ok());
        assert!(RewardWeights::qos_energy_only().validate().is_ok());
        let err = RewardWeights::new(0.3, 0.2, 0.25, 0.15, 0.15).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn step_components_average_completions() {
        let p = RewardParams {
            l_max: 100.0,
            ..RewardParams::default()
        };
        let jobs = [
            CompletionInput {
                latency: 0.0,
                priority: 1.0,
                energy_normalized: 0.2,
            },
            CompletionInput {
                latency: 50.0,
                priority: 0.5,
                energy_normalized: 0.4,
            },
        ];
        let c = step_components(&jobs, &[], 2, &p);
        assert!(close(c.qos, 0.75));
        assert!(close(c.energy, -0.3));
        assert!(close(c.priority, (1.0 + 0.25) / 2.0));
        assert!(close(c.dismissal, -1.0));
        let idle = step_components(&[], &[], 0, &p);
        assert_eq!(idle, RewardComponents::default());
    }

    fn components() -> impl Strategy<Value = RewardComponents> {
        prop::array::uniform5(-5.0f64..5.0).prop_map(|a| RewardComponents {
            qos: a[0],
            energy: a[1],
            priority: a[2],
            fairness: a[3],
            dismissal: a[4],
        })
    }

    proptest! {
        #[test]
        fn total_is_linear(c in components(), idx in 0usize..5, delta in -3.0f64..3.0) {
            let w = RewardWeights::default();
            let base = total_reward(&c, &w).total;
            let mut arr = c.as_array();
            arr[idx] += delta;
            let shifted = RewardComponents { qos: arr[0], energy: arr[1], priority: arr[2], fairness: arr[3], dismissal: arr[4] };
            let expected = base + w.as_array()[idx] * delta;
            prop_assert!((total_reward(&shifted, &w).total - expected).abs() < 1e-9);
        }

        #[test]
        fn permuting_pairs_preserves_total(c in components(), perm in Just([0usize, 1, 2, 3, 4]).prop_shuffle()) {
            let w = RewardWeights::default().as_array();
            let c = c.as_array();
            let direct: f64 = (0..5).map(|i| w[i] * c[i]).sum();
            let pc: Vec<f64> = perm.iter().map(|&i| c[i]).collect();
            let pw: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
            let weights = RewardWeights { qos: pw[0], energy: pw[1], priority: pw[2], fairness: pw[3], dismissal: pw[4] };
            let comps = RewardComponents { qos: pc[0], energy: pc[1], priority: pc[2], fairness: pc[3], dismissal: pc[4] };
            prop_assert!((total_reward(&comps, &weights).total - direct).abs() < 1e-9);
        }

        #[test]
        fn sign_discipline(latency in 0.0f64..1000.0, prio in 0.0f64..=1.0, e in 0.0f64..=1.0,
                           shares in prop::collection::vec(0.0f64..1.0, 0..12), d in 0usize..20) {
            let p = RewardParams::default();
            let q = qos_reward(latency, p.l_max);
            prop_assert!((-1.0..=1.0).contains(&q));
            let pr = priority_reward(prio, (latency / p.l_max).clamp(0.0, 1.0));
            prop_assert!((0.0..=1.0).contains(&pr));
            prop_assert!(energy_reward(e, p.alpha_energy) <= 0.0);
            prop_assert!(fairness_reward(&shares, p.lambda_fair) <= 0.0);
            prop_assert!(dismissal_reward(d, p.mu_dismiss) <= 0.0);
        }

        #[test]
        fn fairness_zero_iff_equal(shares in prop::collection::vec(0.0f64..1.0, 2..10)) {
            let r = fairness_reward(&shares, 1.0);
            let all_equal = shares.iter().all(|s| *s == shares[0]);
            prop_assert_eq!(r == 0.0, all_equal);
        }
    }
}
