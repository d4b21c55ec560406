//! Finite truncations of countable-state average-reward MDPs.
//!
//! A [`TruncatedMdp`] is immutable once built. Kernels are stored row-wise in a
//! compressed layout indexed by `state * action_count + action`.

mod eval;
mod optimal;
mod solve;

pub use eval::{evaluate_policy, hitting_time, EvalResult, Residuals};
pub use optimal::{optimal_average_reward, optimal_average_reward_from, OptimalPolicy};

use crate::error::{Error, Result};

/// Row sums must be within this distance of 1.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

impl StateId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Model-specific state encoding. GSSE models store the queue-length vector.
pub type StateLabel = Vec<u32>;

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMdp {
    labels: Vec<StateLabel>,
    actions: Vec<String>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    probs: Vec<f64>,
    reward: Vec<f64>,
    zero_state: StateId,
    c_max: f64,
    boundary: Vec<bool>,
}

impl TruncatedMdp {
    pub fn state_count(&self) -> usize {
        self.labels.len()
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn label(&self, s: StateId) -> &StateLabel {
        &self.labels[s.0]
    }

    pub fn labels(&self) -> &[StateLabel] {
        &self.labels
    }

    /// Linear scan; callers with large state spaces should keep their own index.
    pub fn find_state(&self, label: &[u32]) -> Option<StateId> {
        self.labels.iter().position(|l| l.as_slice() == label).map(StateId)
    }

    pub fn zero_state(&self) -> StateId {
        self.zero_state
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    pub fn is_boundary(&self, s: StateId) -> bool {
        self.boundary[s.0]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn reward(&self, s: StateId, a: usize) -> f64 {
        self.reward[s.0 * self.actions.len() + a]
    }

    /// Sparse successor distribution of `(s, a)` as parallel slices.
    pub fn transitions(&self, s: StateId, a: usize) -> (&[usize], &[f64]) {
        let row = s.0 * self.actions.len() + a;
        let (lo, hi) = (self.row_ptr[row], self.row_ptr[row + 1]);
        (&self.cols[lo..hi], &self.probs[lo..hi])
    }

    pub fn r_max(&self, s: StateId) -> f64 {
        (0..self.action_count())
            .map(|a| self.reward(s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `r_max(s) - c_max`, always `<= 0`.
    pub fn r_hat_max(&self, s: StateId) -> f64 {
        self.r_max(s) - self.c_max
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.state_count()).map(StateId)
    }

    /// Expected one-step reward `r(s, pi)`.
    pub fn policy_reward(&self, pi: &TabularPolicy, s: StateId) -> f64 {
        pi.row(s)
            .iter()
            .enumerate()
            .map(|(a, p)| p * self.reward(s, a))
            .sum()
    }

    /// `E_{s' ~ P(s, a)}[f(s')]`.
    pub fn expect(&self, s: StateId, a: usize, f: &[f64]) -> f64 {
        let (cols, probs) = self.transitions(s, a);
        cols.iter().zip(probs).map(|(&t, &p)| p * f[t]).sum()
    }
}

/// Incremental constructor for [`TruncatedMdp`]; validates every invariant on `build`.
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    labels: Vec<StateLabel>,
    boundary: Vec<bool>,
    actions: Vec<String>,
    rows: Vec<Vec<(usize, f64)>>,
    reward: Vec<f64>,
}

impl MdpBuilder {
    pub fn new(actions: Vec<String>) -> Self {
        MdpBuilder {
            labels: Vec::new(),
            boundary: Vec::new(),
            actions,
            rows: Vec::new(),
            reward: Vec::new(),
        }
    }

    pub fn with_action_count(count: usize) -> Self {
        Self::new((0..count).map(|a| format!("a{a}")).collect())
    }

    pub fn add_state(&mut self, label: StateLabel, boundary: bool) -> StateId {
        let id = StateId(self.labels.len());
        self.labels.push(label);
        self.boundary.push(boundary);
        for _ in 0..self.actions.len() {
            self.rows.push(Vec::new());
            self.reward.push(0.0);
        }
        id
    }

    pub fn set_transition(&mut self, s: StateId, a: usize, row: Vec<(StateId, f64)>) {
        let m = self.actions.len();
        self.rows[s.0 * m + a] = row.into_iter().map(|(t, p)| (t.0, p)).collect();
    }

    pub fn set_reward(&mut self, s: StateId, a: usize, r: f64) {
        let m = self.actions.len();
        self.reward[s.0 * m + a] = r;
    }

    /// Finalize. `zero` overrides the distinguished state; otherwise the first
    /// maximum-reward state in enumeration order is used.
    pub fn build(self, zero: Option<StateId>) -> Result<TruncatedMdp> {
        let n = self.labels.len();
        let m = self.actions.len();
        if n == 0 || m == 0 {
            return Err(Error::EmptyStateSpace);
        }
        if let Some(r) = self.reward.iter().find(|r| !r.is_finite()) {
            return Err(Error::NonFiniteReward(r.to_string()));
        }

        let mut row_ptr = Vec::with_capacity(n * m + 1);
        let mut cols = Vec::new();
        let mut probs = Vec::new();
        row_ptr.push(0);
        for (row_idx, row) in self.rows.into_iter().enumerate() {
            let (state, action) = (row_idx / m, row_idx % m);
            let mut row = row;
            for &(t, p) in &row {
                if t >= n {
                    return Err(Error::InvalidArgument(format!(
                        "successor {t} out of range in row ({state}, {action})"
                    )));
                }
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::ProbabilityOutOfRange { state, action, value: p });
                }
            }
            row.sort_by_key(|&(t, _)| t);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (t, p) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == t => last.1 += p,
                    _ => merged.push((t, p)),
                }
            }
            merged.retain(|&(_, p)| p > 0.0);
            let sum: f64 = merged.iter().map(|&(_, p)| p).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::RowNotNormalized { state, action, sum });
            }
            for (t, p) in merged {
                cols.push(t);
                probs.push(p);
            }
            row_ptr.push(cols.len());
        }

        let c_max = self.reward.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !c_max.is_finite() {
            return Err(Error::NonFiniteReward(c_max.to_string()));
        }
        let r_max = |s: usize| {
            self.reward[s * m..(s + 1) * m]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let zero_state = match zero {
            Some(z) => {
                if z.0 >= n {
                    return Err(Error::InvalidZeroState {
                        state: z.0,
                        reason: "out of range".into(),
                    });
                }
                if r_max(z.0) != c_max {
                    return Err(Error::InvalidZeroState {
                        state: z.0,
                        reason: format!("r_max = {} but c_max = {}", r_max(z.0), c_max),
                    });
                }
                z
            }
            None => StateId((0..n).find(|&s| r_max(s) == c_max).expect("c_max attained")),
        };

        Ok(TruncatedMdp {
            labels: self.labels,
            actions: self.actions,
            row_ptr,
            cols,
            probs,
            reward: self.reward,
            zero_state,
            c_max,
            boundary: self.boundary,
        })
    }
}

/// A countable-state model that can be enumerated up to a truncation bound.
pub trait Truncatable {
    fn truncate(&self, bound: usize) -> Result<TruncatedMdp>;
}

pub fn build_truncated_mdp<M: Truncatable + ?Sized>(spec: &M, bound: usize) -> Result<TruncatedMdp> {
    spec.truncate(bound)
}

/// Per-state action distributions, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    action_count: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let action_count = rows.first().map(Vec::len).unwrap_or(0);
        if action_count == 0 {
            return Err(Error::InvalidPolicy("no actions".into()));
        }
        let mut probs = Vec::with_capacity(rows.len() * action_count);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != action_count {
                return Err(Error::InvalidPolicy(format!("row {s} has wrong length")));
            }
            check_row(s, row)?;
            probs.extend_from_slice(row);
        }
        Ok(TabularPolicy { action_count, probs })
    }

    pub fn uniform(state_count: usize, action_count: usize) -> Self {
        TabularPolicy {
            action_count,
            probs: vec![1.0 / action_count as f64; state_count * action_count],
        }
    }

    pub fn deterministic(choices: &[usize], action_count: usize) -> Self {
        let mut probs = vec![0.0; choices.len() * action_count];
        for (s, &a) in choices.iter().enumerate() {
            probs[s * action_count + a] = 1.0;
        }
        TabularPolicy { action_count, probs }
    }

    /// `(1 - mix) * self + mix * uniform`; strictly positive whenever `mix > 0`.
    pub fn smoothed(&self, mix: f64) -> Self {
        let u = mix / self.action_count as f64;
        TabularPolicy {
            action_count: self.action_count,
            probs: self.probs.iter().map(|p| (1.0 - mix) * p + u).collect(),
        }
    }

    pub fn state_count(&self) -> usize {
        self.probs.len() / self.action_count
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn row(&self, s: StateId) -> &[f64] {
        &self.probs[s.0 * self.action_count..(s.0 + 1) * self.action_count]
    }

    pub(crate) fn row_mut(&mut self, s: StateId) -> &mut [f64] {
        &mut self.probs[s.0 * self.action_count..(s.0 + 1) * self.action_count]
    }

    pub fn prob(&self, s: StateId, a: usize) -> f64 {
        self.probs[s.0 * self.action_count + a]
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    pub fn check_compatible(&self, mdp: &TruncatedMdp) -> Result<()> {
        if self.action_count != mdp.action_count() || self.state_count() != mdp.state_count() {
            return Err(Error::InvalidPolicy(format!(
                "policy shape {}x{} does not match mdp {}x{}",
                self.state_count(),
                self.action_count,
                mdp.state_count(),
                mdp.action_count()
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for s in 0..self.state_count() {
            check_row(s, self.row(StateId(s)))?;
        }
        Ok(())
    }
}

fn check_row(s: usize, row: &[f64]) -> Result<()> {
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidPolicy(format!("row {s} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidPolicy(format!("row {s} sums to {sum}")));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// 0 -> 1 -> 0 with r(0) = 0, r(1) = -2. With `second_action`, state 1 gets
    /// an extra action that costs only 1 (state 0's second action mirrors its first).
    pub fn two_state_cycle(second_action: bool) -> TruncatedMdp {
        let m = if second_action { 2 } else { 1 };
        let mut b = MdpBuilder::with_action_count(m);
        let s0 = b.add_state(vec![0], false);
        let s1 = b.add_state(vec![1], false);
        for a in 0..m {
            b.set_transition(s0, a, vec![(s1, 1.0)]);
            b.set_reward(s0, a, 0.0);
            b.set_transition(s1, a, vec![(s0, 1.0)]);
        }
        b.set_reward(s1, 0, -2.0);
        if second_action {
            b.set_reward(s1, 1, -1.0);
        }
        b.build(None).unwrap()
    }

    pub fn three_cycle() -> TruncatedMdp {
        let mut b = MdpBuilder::with_action_count(1);
        let s: Vec<_> = (0..3).map(|i| b.add_state(vec![i], false)).collect();
        for i in 0..3 {
            b.set_transition(s[i], 0, vec![(s[(i + 1) % 3], 1.0)]);
            b.set_reward(s[i], 0, if i == 0 { 0.0 } else { -1.0 });
        }
        b.build(None).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn two_state_cycle_shape() {
        let mdp = two_state_cycle(false);
        assert_eq!(mdp.state_count(), 2);
        assert_eq!(mdp.c_max(), 0.0);
        assert_eq!(mdp.zero_state(), StateId(0));
        assert_eq!(mdp.r_hat_max(StateId(1)), -2.0);
    }

    #[test]
    fn rejects_unnormalized_rows() {
        let mut b = MdpBuilder::with_action_count(1);
        let s = b.add_state(vec![0], false);
        b.set_transition(s, 0, vec![(s, 0.5)]);
        assert!(matches!(b.build(None), Err(Error::RowNotNormalized { .. })));
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert_eq!(MdpBuilder::with_action_count(1).build(None), Err(Error::EmptyStateSpace));
        let mut b = MdpBuilder::with_action_count(1);
        let s = b.add_state(vec![0], false);
        b.set_transition(s, 0, vec![(s, 1.0)]);
        b.set_reward(s, 0, f64::INFINITY);
        assert!(matches!(b.build(None), Err(Error::NonFiniteReward(_))));
    }

    #[test]
    fn zero_state_must_be_max_reward() {
        let mut b = MdpBuilder::with_action_count(1);
        let s0 = b.add_state(vec![0], false);
        let s1 = b.add_state(vec![1], false);
        b.set_transition(s0, 0, vec![(s1, 1.0)]);
        b.set_transition(s1, 0, vec![(s0, 1.0)]);
        b.set_reward(s1, 0, -1.0);
        assert!(matches!(b.clone().build(Some(s1)), Err(Error::InvalidZeroState { .. })));
        assert_eq!(b.build(Some(s0)).unwrap().zero_state(), s0);
    }

    #[test]
    fn duplicate_successors_merge() {
        let mut b = MdpBuilder::with_action_count(1);
        let s0 = b.add_state(vec![0], false);
        b.set_transition(s0, 0, vec![(s0, 0.25), (s0, 0.75)]);
        let mdp = b.build(None).unwrap();
        assert_eq!(mdp.transitions(s0, 0), (&[0usize][..], &[1.0][..]));
    }

    #[test]
    fn policy_rows_validated() {
        assert!(TabularPolicy::from_rows(vec![vec![0.5, 0.4]]).is_err());
        assert!(TabularPolicy::from_rows(vec![vec![1.5, -0.5]]).is_err());
        let pi = TabularPolicy::deterministic(&[1, 0], 2).smoothed(0.2);
        assert!(pi.is_strictly_positive());
        assert!((pi.prob(StateId(0), 1) - 0.9).abs() < 1e-15);
        pi.validate().unwrap();
    }
}
