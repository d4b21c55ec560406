use super::{evaluate_policy, TabularPolicy, TruncatedMdp};
use crate::error::Result;

const MAX_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalPolicy {
    pub average_reward: f64,
    pub policy: TabularPolicy,
    /// Chosen action per state.
    pub actions: Vec<usize>,
    pub iterations: usize,
    /// False when the iteration cap was hit; the best policy seen is returned.
    pub converged: bool,
}

/// Policy iteration from the lowest-index action everywhere.
pub fn optimal_average_reward(mdp: &TruncatedMdp) -> Result<OptimalPolicy> {
    optimal_average_reward_from(mdp, vec![0; mdp.state_count()])
}

/// Policy iteration from a given deterministic policy. An action is replaced
/// only when another one is better by more than a relative `1e-12`; among
/// maximizers the lowest index wins.
pub fn optimal_average_reward_from(mdp: &TruncatedMdp, start: Vec<usize>) -> Result<OptimalPolicy> {
    let m = mdp.action_count();
    let mut actions = start;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for iteration in 1..=MAX_ITERATIONS {
        let pi = TabularPolicy::deterministic(&actions, m);
        let ev = evaluate_policy(mdp, &pi)?;
        if best.as_ref().is_none_or(|(j, _)| ev.average_reward > *j) {
            best = Some((ev.average_reward, actions.clone()));
        }
        let mut changed = false;
        for s in mdp.states() {
            let row = ev.q_row(s);
            let top = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let current = row[actions[s.0]];
            let tol = 1e-12 * (1.0 + top.abs());
            if top - current > tol {
                actions[s.0] = row.iter().position(|&q| q >= top - tol).unwrap();
                changed = true;
            }
        }
        if !changed {
            return Ok(OptimalPolicy {
                average_reward: ev.average_reward,
                policy: pi,
                actions,
                iterations: iteration,
                converged: true,
            });
        }
    }
    let (average_reward, actions) = best.expect("at least one evaluation");
    Ok(OptimalPolicy {
        average_reward,
        policy: TabularPolicy::deterministic(&actions, m),
        actions,
        iterations: MAX_ITERATIONS,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::fixtures::*;

    #[test]
    fn two_action_cycle_picks_cheaper_action() {
        let mdp = two_state_cycle(true);
        let opt = optimal_average_reward(&mdp).unwrap();
        assert!(opt.converged);
        assert!((opt.average_reward + 0.5).abs() < 1e-14);
        assert_eq!(opt.actions, vec![0, 1]);
    }

    #[test]
    fn identical_rewards_any_policy_optimal() {
        let mdp = two_state_cycle(false);
        let opt = optimal_average_reward(&mdp).unwrap();
        let uni = evaluate_policy(&mdp, &TabularPolicy::uniform(2, 1)).unwrap();
        assert_eq!(opt.average_reward, uni.average_reward);
    }
}
