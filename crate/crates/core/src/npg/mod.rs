//! Natural policy gradient with per-state step sizes.

pub mod ledger;

use std::time::Instant;

use serde::Serialize;

pub use ledger::{ConstantsLedger, LedgerEntry, LedgerInputs, Provenance, Tagged};

use crate::error::{Error, Result};
use crate::mdp::{evaluate_policy, EvalResult, TabularPolicy, TruncatedMdp};

/// Smallest per-state range bound; keeps every step base finite.
pub const MIN_RANGE_BOUND: f64 = 1e-6;

/// `1 + 2x + x^2 / ln 2`
pub fn step_base(x: f64) -> f64 {
    1.0 + 2.0 * x + x * x / std::f64::consts::LN_2
}

/// Multiplicative step base for horizon `horizon`, `action_count` actions and range bound `range`.
pub fn step_base_for(action_count: usize, horizon: usize, range: f64) -> f64 {
    step_base(((action_count as f64).ln() / (horizon as f64 * range)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningRateSchedule {
    pub horizon: usize,
    pub action_count: usize,
    /// Per-state bound on the spread of `Q(s, .)`.
    pub range_bound: Vec<f64>,
    /// Per-state multiplicative step base, `>= 1`.
    pub beta: Vec<f64>,
}

impl LearningRateSchedule {
    pub fn from_range_bounds(action_count: usize, horizon: usize, range_bound: Vec<f64>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if action_count == 0 {
            return Err(Error::InvalidArgument("action count must be positive".into()));
        }
        if let Some(m) = range_bound.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidArgument(format!("range bound {m} must be positive and finite")));
        }
        let beta = range_bound.iter().map(|&m| step_base_for(action_count, horizon, m)).collect();
        Ok(LearningRateSchedule { horizon, action_count, range_bound, beta })
    }

    /// Same step base at every state.
    pub fn constant(state_count: usize, action_count: usize, horizon: usize, beta: f64) -> Self {
        LearningRateSchedule {
            horizon,
            action_count,
            range_bound: vec![f64::NAN; state_count],
            beta: vec![beta; state_count],
        }
    }
}

/// `M_s = c_2 r^2 + c_3 |r| + c_4` with `r = r_max(s) - c_max`, floored at [`MIN_RANGE_BOUND`].
pub fn compute_ms(ledger: &ConstantsLedger, r_hat_max: &[f64]) -> Result<Vec<f64>> {
    let (c2, c3, c4) = (ledger.get("c_2"), ledger.get("c_3"), ledger.get("c_4"));
    for (name, v) in [("c_2", c2), ("c_3", c3), ("c_4", c4)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidLedger(format!("{name} = {v} must be finite and nonnegative")));
        }
    }
    r_hat_max
        .iter()
        .map(|&r| {
            if r > 0.0 {
                return Err(Error::InvalidArgument(format!("r_hat_max = {r} is positive")));
            }
            Ok((c2 * r * r + c3 * r.abs() + c4).max(MIN_RANGE_BOUND))
        })
        .collect()
}

pub fn make_schedule(ledger: &ConstantsLedger, mdp: &TruncatedMdp, horizon: usize) -> Result<LearningRateSchedule> {
    let r_hat: Vec<f64> = mdp.states().map(|s| mdp.r_hat_max(s)).collect();
    let ms = compute_ms(ledger, &r_hat)?;
    LearningRateSchedule::from_range_bounds(mdp.action_count(), horizon, ms)
}

/// One multiplicative-weights row update in log space.
/// Returns the new row and `ln Z`, the log normalizer of `pi(a) * beta^q(a)`,
/// or `None` when the exponents are not finite.
pub fn row_update(pi_row: &[f64], q_row: &[f64], beta: f64) -> Option<(Vec<f64>, f64)> {
    let ln_beta = beta.ln();
    let logits: Vec<f64> = pi_row.iter().zip(q_row).map(|(p, q)| p.ln() + q * ln_beta).collect();
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() || logits.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return None;
    }
    let weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    // floor at the smallest normal double so that support is preserved after underflow
    let row = weights.iter().map(|w| (w / total).max(f64::MIN_POSITIVE)).collect();
    Some((row, top + total.ln()))
}

/// `pi'(a|s) = pi(a|s) beta_s^{Q(s,a)} / Z_s` for every state.
pub fn npg_update(
    mdp: &TruncatedMdp,
    pi: &TabularPolicy,
    q_values: &[f64],
    schedule: &LearningRateSchedule,
) -> Result<TabularPolicy> {
    pi.check_compatible(mdp)?;
    let m = mdp.action_count();
    if q_values.len() != mdp.state_count() * m || schedule.beta.len() != mdp.state_count() {
        return Err(Error::InvalidArgument("Q table or schedule has the wrong shape".into()));
    }
    let mut next = pi.clone();
    for s in mdp.states() {
        let q_row = &q_values[s.0 * m..(s.0 + 1) * m];
        let (row, _) =
            row_update(pi.row(s), q_row, schedule.beta[s.0]).ok_or(Error::UpdateOverflow { state: s.0 })?;
        next.row_mut(s).copy_from_slice(&row);
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NpgRecord {
    pub iteration: usize,
    pub average_reward: f64,
    /// `J_star - J_k`; NaN when no optimum was supplied.
    pub gap: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub poisson_residual: f64,
    pub wall_ms: f64,
    pub boundary_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpgTrace {
    /// One record per evaluated iterate: `k = 0..=T` for `T >= 1`, empty for `T = 0`.
    pub records: Vec<NpgRecord>,
    /// Set when an evaluation failed mid-run; records stop before it.
    pub failure: Option<Error>,
}

impl NpgTrace {
    pub fn final_average_reward(&self) -> Option<f64> {
        self.records.last().map(|r| r.average_reward)
    }
}

#[derive(Debug, Clone, Default)]
pub struct NpgOptions {
    /// Optimal average reward used to fill the `gap` column.
    pub optimal_reward: Option<f64>,
    /// Record wall-clock time per iteration; off by default to keep traces reproducible.
    pub timings: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpgRun {
    pub policy: TabularPolicy,
    pub trace: NpgTrace,
}

/// Runs `T` iterations with the schedule derived from `ledger`.
pub fn run_npg(mdp: &TruncatedMdp, pi0: &TabularPolicy, horizon: usize, ledger: &ConstantsLedger) -> Result<NpgRun> {
    if horizon == 0 {
        return Ok(NpgRun { policy: pi0.clone(), trace: NpgTrace { records: Vec::new(), failure: None } });
    }
    let schedule = make_schedule(ledger, mdp, horizon)?;
    let options = NpgOptions { optimal_reward: None, timings: false };
    run_npg_with(mdp, pi0, &schedule, &options, |_, _, _| {})
}

/// Runs `schedule.horizon` iterations; `observe(k, pi_k, eval_k)` sees every
/// evaluated iterate including the final one.
pub fn run_npg_with<F>(
    mdp: &TruncatedMdp,
    pi0: &TabularPolicy,
    schedule: &LearningRateSchedule,
    options: &NpgOptions,
    mut observe: F,
) -> Result<NpgRun>
where
    F: FnMut(usize, &TabularPolicy, &EvalResult),
{
    pi0.check_compatible(mdp)?;
    pi0.validate()?;
    if !pi0.is_strictly_positive() {
        return Err(Error::InvalidPolicy("initial policy must be strictly positive".into()));
    }
    let mut records = Vec::with_capacity(schedule.horizon + 1);
    let mut pi = pi0.clone();
    let mut failure = None;
    if schedule.horizon == 0 {
        return Ok(NpgRun { policy: pi, trace: NpgTrace { records, failure } });
    }
    for k in 0..=schedule.horizon {
        let start = Instant::now();
        let ev = match evaluate_policy(mdp, &pi) {
            Ok(ev) => ev,
            Err(e) if k == 0 => return Err(e),
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        observe(k, &pi, &ev);
        let (min_value, max_value) = interior_range(mdp, &ev.value);
        let record_base = NpgRecord {
            iteration: k,
            average_reward: ev.average_reward,
            gap: options.optimal_reward.map_or(f64::NAN, |j| j - ev.average_reward),
            min_value,
            max_value,
            poisson_residual: ev.residuals.poisson,
            wall_ms: 0.0,
            boundary_mass: ev.boundary_mass(mdp),
        };
        if k < schedule.horizon {
            match npg_update(mdp, &pi, &ev.q_values, schedule) {
                Ok(next) => pi = next,
                Err(e) => {
                    failure = Some(e);
                }
            }
        }
        let wall_ms = if options.timings { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        records.push(NpgRecord { wall_ms, ..record_base });
        if failure.is_some() {
            break;
        }
    }
    Ok(NpgRun { policy: pi, trace: NpgTrace { records, failure } })
}

/// Min and max of `values` over states not flagged as boundary.
pub fn interior_range(mdp: &TruncatedMdp, values: &[f64]) -> (f64, f64) {
    mdp.states()
        .filter(|&s| !mdp.is_boundary(s))
        .map(|s| values[s.0])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// KL divergence `sum_a p(a) ln(p(a)/q(a))`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

/// Expected `Q(s, .)` under a row distribution.
pub fn row_expectation(row: &[f64], q_row: &[f64]) -> f64 {
    row.iter().zip(q_row).map(|(p, q)| p * q).sum()
}
