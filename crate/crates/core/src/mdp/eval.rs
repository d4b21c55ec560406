use serde::Serialize;

use super::solve::{AnchoredSystem, PolicyChain};
use super::{StateId, TabularPolicy, TruncatedMdp};
use crate::error::{Error, Result};

/// Largest absolute residuals of the linear systems behind an [`EvalResult`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// `max_s |J + V(s) - r(s, pi) - (P V)(s)|`
    pub poisson: f64,
    /// `max(max_t |(d P)(t) - d(t)|, |sum d - 1|)`
    pub stationarity: f64,
    /// First-step residual of the hitting-time system.
    pub hitting: f64,
}

/// Exact evaluation of one policy on a truncated MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub average_reward: f64,
    pub stationary: Vec<f64>,
    /// Relative value, zero at the distinguished state.
    pub value: Vec<f64>,
    /// Flattened `state * action_count + action`.
    pub q_values: Vec<f64>,
    /// Expected steps to reach the distinguished state.
    pub hitting_time: Vec<f64>,
    pub residuals: Residuals,
    action_count: usize,
}

impl EvalResult {
    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn q(&self, s: StateId, a: usize) -> f64 {
        self.q_values[s.0 * self.action_count + a]
    }

    pub fn q_row(&self, s: StateId) -> &[f64] {
        &self.q_values[s.0 * self.action_count..(s.0 + 1) * self.action_count]
    }

    /// `Q(s, pi') = sum_a pi'(a|s) Q(s, a)`.
    pub fn q_under(&self, s: StateId, pi: &TabularPolicy) -> f64 {
        self.q_row(s).iter().zip(pi.row(s)).map(|(q, p)| q * p).sum()
    }

    /// Stationary mass on truncation-modified states.
    pub fn boundary_mass(&self, mdp: &TruncatedMdp) -> f64 {
        self.stationary
            .iter()
            .zip(mdp.boundary_flags())
            .filter(|(_, &b)| b)
            .map(|(d, _)| *d)
            .sum()
    }
}

fn check_reaches(chain: &PolicyChain, target: StateId, reducible: bool) -> Result<()> {
    match chain.first_not_reaching(target.0) {
        None => Ok(()),
        Some(state) if reducible => Err(Error::Reducible { state }),
        Some(state) => Err(Error::UnreachableTarget { state, target: target.0 }),
    }
}

/// Stationary distribution, gain, relative value, Q table and hitting times of `pi`.
pub fn evaluate_policy(mdp: &TruncatedMdp, pi: &TabularPolicy) -> Result<EvalResult> {
    pi.check_compatible(mdp)?;
    let chain = PolicyChain::new(mdp, pi);
    let zero = mdp.zero_state();
    check_reaches(&chain, zero, true)?;
    let system = AnchoredSystem::new(&chain, zero)?;

    let reward: Vec<f64> = mdp.states().map(|s| mdp.policy_reward(pi, s)).collect();
    let (gain, value) = system.gain_bias(&reward)?;

    let mut stationary = system.stationary()?;
    for d in stationary.iter_mut() {
        // transient states solve to round-off noise around zero
        if *d < 0.0 {
            *d = 0.0;
        }
    }
    let hitting_time = system.hitting_times()?;

    let m = mdp.action_count();
    let mut q_values = Vec::with_capacity(mdp.state_count() * m);
    for s in mdp.states() {
        for a in 0..m {
            q_values.push(mdp.reward(s, a) - gain + mdp.expect(s, a, &value));
        }
    }

    let pv = chain.apply(&value);
    let poisson = (0..value.len())
        .map(|s| (gain + value[s] - reward[s] - pv[s]).abs())
        .fold(0.0, f64::max);
    let dp = chain.apply_left(&stationary);
    let stationarity = dp
        .iter()
        .zip(&stationary)
        .map(|(a, b)| (a - b).abs())
        .fold((stationary.iter().sum::<f64>() - 1.0).abs(), f64::max);
    let ph = chain.apply(&hitting_time);
    let hitting = (0..value.len())
        .filter(|&s| s != zero.0)
        .map(|s| (1.0 + ph[s] - hitting_time[s]).abs())
        .fold(0.0, f64::max);

    Ok(EvalResult {
        average_reward: gain,
        stationary,
        value,
        q_values,
        hitting_time,
        residuals: Residuals { poisson, stationarity, hitting },
        action_count: m,
    })
}

/// Expected steps for the chain induced by `pi` to first reach `target`.
pub fn hitting_time(mdp: &TruncatedMdp, pi: &TabularPolicy, target: StateId) -> Result<Vec<f64>> {
    pi.check_compatible(mdp)?;
    if target.0 >= mdp.state_count() {
        return Err(Error::InvalidArgument(format!("target {} out of range", target.0)));
    }
    let chain = PolicyChain::new(mdp, pi);
    check_reaches(&chain, target, false)?;
    AnchoredSystem::new(&chain, target)?.hitting_times()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::fixtures::*;
    use crate::mdp::MdpBuilder;

    #[test]
    fn two_state_cycle_by_hand() {
        let mdp = two_state_cycle(false);
        let ev = evaluate_policy(&mdp, &TabularPolicy::uniform(2, 1)).unwrap();
        assert!((ev.average_reward + 1.0).abs() < 1e-14);
        assert!((ev.stationary[0] - 0.5).abs() < 1e-14);
        assert!((ev.stationary[1] - 0.5).abs() < 1e-14);
        assert_eq!(ev.value[0], 0.0);
        assert!((ev.value[1] + 1.0).abs() < 1e-14);
        assert_eq!(ev.hitting_time[0], 0.0);
        assert!((ev.hitting_time[1] - 1.0).abs() < 1e-14);
        let pi = TabularPolicy::uniform(2, 1);
        assert_eq!(hitting_time(&mdp, &pi, StateId(0)).unwrap(), ev.hitting_time);
    }

    #[test]
    fn three_cycle_hitting_pattern() {
        let mdp = three_cycle();
        let pi = TabularPolicy::uniform(3, 1);
        for target in 0..3 {
            let h = hitting_time(&mdp, &pi, StateId(target)).unwrap();
            for (i, v) in h.iter().enumerate() {
                // steps along the cycle 0 -> 1 -> 2 -> 0
                let expected = ((target + 3 - i) % 3) as f64;
                assert!((v - expected).abs() < 1e-12, "target {target}: {h:?}");
            }
        }
    }

    #[test]
    fn reducible_chain_rejected() {
        let mut b = MdpBuilder::with_action_count(1);
        let s0 = b.add_state(vec![0], false);
        let s1 = b.add_state(vec![1], false);
        b.set_transition(s0, 0, vec![(s0, 1.0)]);
        b.set_transition(s1, 0, vec![(s1, 1.0)]);
        b.set_reward(s1, 0, -1.0);
        let mdp = b.build(None).unwrap();
        let pi = TabularPolicy::uniform(2, 1);
        assert_eq!(evaluate_policy(&mdp, &pi), Err(Error::Reducible { state: 1 }));
        assert_eq!(
            hitting_time(&mdp, &pi, StateId(1)),
            Err(Error::UnreachableTarget { state: 0, target: 1 })
        );
    }

    #[test]
    fn transient_states_get_values() {
        // state 2 is transient and feeds the 0 <-> 1 cycle
        let mut b = MdpBuilder::with_action_count(1);
        let s0 = b.add_state(vec![0], false);
        let s1 = b.add_state(vec![1], false);
        let s2 = b.add_state(vec![2], false);
        b.set_transition(s0, 0, vec![(s1, 1.0)]);
        b.set_transition(s1, 0, vec![(s0, 1.0)]);
        b.set_transition(s2, 0, vec![(s1, 1.0)]);
        b.set_reward(s1, 0, -2.0);
        b.set_reward(s2, 0, -5.0);
        let mdp = b.build(None).unwrap();
        let ev = evaluate_policy(&mdp, &TabularPolicy::uniform(3, 1)).unwrap();
        assert_eq!(ev.stationary[2], 0.0);
        // V(2) = -5 + 1 + V(1) = -5
        assert!((ev.value[2] + 5.0).abs() < 1e-13);
        assert!((ev.hitting_time[2] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn evaluation_is_bitwise_repeatable() {
        let mdp = three_cycle();
        let pi = TabularPolicy::uniform(3, 1);
        assert_eq!(evaluate_policy(&mdp, &pi).unwrap(), evaluate_policy(&mdp, &pi).unwrap());
    }
}
