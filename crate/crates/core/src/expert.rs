//! Weighted majority for prediction with expert advice, and a regret harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::npg::{step_base_for, MIN_RANGE_BOUND};

const REGRET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdviceInstance {
    action_count: usize,
    /// `rewards[k][a]` for steps `k = 0..T`.
    rewards: Vec<Vec<f64>>,
    /// Declared bound on the per-step spread of rewards.
    range_bound: f64,
}

impl AdviceInstance {
    pub fn new(rewards: Vec<Vec<f64>>, range_bound: f64) -> Result<Self> {
        let action_count = rewards.first().map_or(0, Vec::len);
        if rewards.is_empty() {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if action_count < 2 {
            return Err(Error::InvalidArgument("need at least two actions".into()));
        }
        if !(range_bound >= 0.0) || !range_bound.is_finite() {
            return Err(Error::InvalidArgument(format!("range bound {range_bound} must be finite and nonnegative")));
        }
        for (k, row) in rewards.iter().enumerate() {
            if row.len() != action_count || row.iter().any(|r| !r.is_finite()) {
                return Err(Error::InvalidArgument(format!("reward row {k} is malformed")));
            }
            let spread = spread(row);
            if spread > range_bound * (1.0 + 1e-12) {
                return Err(Error::InvalidArgument(format!(
                    "step {k} has spread {spread} above the declared bound {range_bound}"
                )));
            }
        }
        Ok(AdviceInstance { action_count, rewards, range_bound })
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn horizon(&self) -> usize {
        self.rewards.len()
    }

    pub fn rewards(&self) -> &[Vec<f64>] {
        &self.rewards
    }

    pub fn range_bound(&self) -> f64 {
        self.range_bound
    }

    /// Step base used by the certificate, with the range floored like the NPG schedule.
    pub fn step_base(&self) -> f64 {
        step_base_for(self.action_count, self.horizon(), self.range_bound.max(MIN_RANGE_BOUND))
    }

    /// `sqrt(T M ln|A|) + log2(|A|) / 2`
    pub fn regret_bound(&self) -> f64 {
        let a = self.action_count as f64;
        (self.horizon() as f64 * self.range_bound * a.ln()).sqrt() + a.log2() / 2.0
    }
}

fn spread(row: &[f64]) -> f64 {
    let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
    hi - lo
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedMajorityRun {
    /// `distributions[k]` is played at step `k`; the last entry follows the final step.
    pub distributions: Vec<Vec<f64>>,
    pub expected_reward: Vec<f64>,
}

/// Plays `pi_{k+1}(a) ∝ pi_k(a) beta^{r_k(a)}`.
///
/// Weights are kept as cumulative log scores `ln pi_0(a) + ln(beta) sum_{j<k} r_j(a)`
/// and normalized after subtracting their maximum.
pub fn weighted_majority_run(instance: &AdviceInstance, beta: f64, pi0: &[f64]) -> Result<WeightedMajorityRun> {
    if pi0.len() != instance.action_count || pi0.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::InvalidArgument("initial distribution must be strictly positive over all actions".into()));
    }
    if !(beta >= 1.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("step base {beta} must be finite and at least 1")));
    }
    let ln_beta = beta.ln();
    let mut scores: Vec<f64> = pi0.iter().map(|p| p.ln()).collect();
    let mut distributions = Vec::with_capacity(instance.horizon() + 1);
    let mut expected_reward = Vec::with_capacity(instance.horizon());
    let normalize = |scores: &[f64]| -> Vec<f64> {
        let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter().map(|x| (x / total).max(f64::MIN_POSITIVE)).collect()
    };
    for row in &instance.rewards {
        let dist = normalize(&scores);
        expected_reward.push(dist.iter().zip(row).map(|(p, r)| p * r).sum());
        distributions.push(dist);
        for (s, r) in scores.iter_mut().zip(row) {
            *s += r * ln_beta;
        }
    }
    distributions.push(normalize(&scores));
    Ok(WeightedMajorityRun { distributions, expected_reward })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretCertificate {
    pub regret: f64,
    pub bound: f64,
    pub beta_used: f64,
    pub best_action: usize,
}

/// Expected regret against the best fixed action from a uniform start.
/// A regret above the bound is an error.
pub fn regret_certificate(instance: &AdviceInstance) -> Result<RegretCertificate> {
    let m = instance.action_count;
    let beta = instance.step_base();
    let run = weighted_majority_run(instance, beta, &vec![1.0 / m as f64; m])?;
    let totals: Vec<f64> = (0..m).map(|a| instance.rewards.iter().map(|r| r[a]).sum()).collect();
    let best_action = (0..m).fold(0, |b, a| if totals[a] > totals[b] { a } else { b });
    let regret = totals[best_action] - run.expected_reward.iter().sum::<f64>();
    let bound = instance.regret_bound();
    if regret > bound + REGRET_TOL {
        return Err(Error::RegretBoundViolated { regret, bound });
    }
    Ok(RegretCertificate { regret, bound, beta_used: beta, best_action })
}

/// Realized regret when actions are drawn from the played distributions.
pub fn sampled_regret(instance: &AdviceInstance, seed: u64) -> Result<f64> {
    let m = instance.action_count;
    let run = weighted_majority_run(instance, instance.step_base(), &vec![1.0 / m as f64; m])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut earned = 0.0;
    for (row, dist) in instance.rewards.iter().zip(&run.distributions) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = m - 1;
        for (a, p) in dist.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = a;
                break;
            }
        }
        earned += row[pick];
    }
    let best = (0..m)
        .map(|a| instance.rewards.iter().map(|r| r[a]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(best - earned)
}

/// Random instance with rewards in `[0, spread]` and declared bound `spread`.
pub fn random_instance(rng: &mut impl Rng, max_horizon: usize, max_actions: usize) -> AdviceInstance {
    let horizon = rng.random_range(1..=max_horizon);
    let actions = rng.random_range(2..=max_actions.max(2));
    let spread: f64 = rng.random_range(0.0..=1.0);
    let binary = rng.random_bool(0.5);
    let rewards = (0..horizon)
        .map(|_| {
            (0..actions)
                .map(|_| if binary { spread * f64::from(rng.random_range(0..2u8)) } else { spread * rng.random::<f64>() })
                .collect()
        })
        .collect();
    AdviceInstance::new(rewards, spread).expect("generated instance is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub trials: usize,
    pub violations: usize,
    /// Largest `regret / bound` seen.
    pub worst_ratio: f64,
    pub first_violation: Option<usize>,
}

/// Runs `trials` random instances in parallel. Trial `i` draws from stream `i`
/// of a generator seeded with `root_seed`, so results do not depend on scheduling.
pub fn regret_sweep(trials: usize, root_seed: u64, max_horizon: usize, max_actions: usize) -> SweepSummary {
    let outcomes: Vec<(f64, bool)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
            rng.set_stream(i as u64);
            let inst = random_instance(&mut rng, max_horizon, max_actions);
            match regret_certificate(&inst) {
                Ok(c) => (c.regret / c.bound, false),
                Err(Error::RegretBoundViolated { regret, bound }) => (regret / bound, true),
                Err(_) => (f64::INFINITY, true),
            }
        })
        .collect();
    SweepSummary {
        trials,
        violations: outcomes.iter().filter(|o| o.1).count(),
        worst_ratio: outcomes.iter().map(|o| o.0).fold(f64::NEG_INFINITY, f64::max),
        first_violation: outcomes.iter().position(|o| o.1),
    }
}
