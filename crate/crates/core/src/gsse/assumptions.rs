//! Checkers and constant fitters for the reward-growth and connectivity
//! assumptions, and for the initial-policy value bound.

use serde::Serialize;

use super::model::{GsseModel, RewardKind};
use crate::error::{Error, Result};
use crate::mdp::{EvalResult, StateId, TruncatedMdp};

/// Upper end of the one-dimensional sweep for the alpha-moment growth inequality.
pub const ALPHA_SWEEP_MAX: u32 = 10_000;

/// Reward thresholds reported for the finiteness of high-reward sets.
pub const Z_GRID: [f64; 5] = [-1.0, -2.0, -5.0, -10.0, -20.0];

/// Relative tolerance for inequality checks: `lhs <= rhs + 1e-9 (1 + |rhs|)`.
fn holds(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + 1e-9 * (1.0 + rhs.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HighRewardSet {
    pub z: f64,
    /// States of the truncation with `r_max(s) >= z`.
    pub size: usize,
    /// Set when the set reaches truncation-modified states, so its size is only a lower bound.
    pub touches_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardGrowth {
    pub r3: f64,
    pub r4: f64,
    /// Smallest `R_4` that works with `r3` over the checked pairs.
    pub r4_fitted: f64,
    pub pairs_checked: usize,
    pub holds: bool,
    /// `(s, s')` labels of the tightest pair.
    pub worst_pair: (Vec<u32>, Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSweep {
    pub alpha: f64,
    pub n_prime: f64,
    pub r4: f64,
    pub max_total: u32,
    pub holds: bool,
    /// Smallest `2 S^alpha + R_4 - (S + n')^alpha` over the sweep.
    pub worst_margin: f64,
    pub worst_total: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Connectivity {
    pub z: f64,
    /// Largest total queue length among states with reward at least `z`.
    pub max_jobs: u32,
    pub x_z: f64,
    /// Per-step probability that some job completes and nothing arrives.
    pub drain_step: f64,
    /// Per-step probability of moving one job up in one class while the rest hold.
    pub fill_step: f64,
    /// `(drain_step * fill_step)^max_jobs`
    pub p_z: f64,
    /// Exact minimum over policies by backward induction, on small truncations.
    pub p_z_exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub c_max: f64,
    pub zero_state: Vec<u32>,
    pub high_reward_sets: Vec<HighRewardSet>,
    pub r1: f64,
    pub r2: f64,
    pub r1_fitted: f64,
    pub r2_fitted: f64,
    pub growth: RewardGrowth,
    pub alpha_sweep: Option<AlphaSweep>,
    pub connectivity: Connectivity,
    /// One entry per violated condition; empty when everything holds.
    pub violations: Vec<String>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `(R_1, R_2, R_3, R_4)` as established for each reward family.
pub fn reward_constants(model: &GsseModel) -> (f64, f64, f64, f64) {
    let n = model.class_count() as f64;
    let ell = model.ell() as f64;
    match model.reward_kind() {
        RewardKind::MeanQueue => (0.0, 0.0, 1.0, ell * n),
        RewardKind::Weighted { weights } => (0.0, 0.0, 1.0, ell * weights.iter().sum::<f64>()),
        RewardKind::AlphaMoment { alpha } => (0.0, 0.0, 2.0, alpha_r4(*alpha, ell * n)),
    }
}

/// `n' alpha (2 alpha n' + n')^(alpha - 1)`
pub fn alpha_r4(alpha: f64, n_prime: f64) -> f64 {
    n_prime * alpha * (2.0 * alpha * n_prime + n_prime).powf(alpha - 1.0)
}

/// Checks `(S + n')^alpha <= 2 S^alpha + R_4` for every integer `S` in `[0, max_total]`.
pub fn alpha_sweep(alpha: f64, n_prime: f64, max_total: u32) -> AlphaSweep {
    let r4 = alpha_r4(alpha, n_prime);
    let mut worst = (f64::INFINITY, 0);
    for s in 0..=max_total {
        let sf = s as f64;
        let margin = 2.0 * sf.powf(alpha) + r4 - (sf + n_prime).powf(alpha);
        if margin < worst.0 {
            worst = (margin, s);
        }
    }
    AlphaSweep {
        alpha,
        n_prime,
        r4,
        max_total,
        holds: worst.0 >= -1e-9 * (1.0 + r4),
        worst_margin: worst.0,
        worst_total: worst.1,
    }
}

/// Largest total queue length with reward at least `z`.
pub fn max_jobs_above(model: &GsseModel, z: f64) -> u32 {
    let budget = (-z).max(0.0);
    let k = match model.reward_kind() {
        RewardKind::MeanQueue => budget,
        RewardKind::Weighted { weights } => budget / weights.iter().cloned().fold(f64::INFINITY, f64::min),
        RewardKind::AlphaMoment { alpha } => budget.powf(1.0 / alpha),
    };
    // guard against 2.9999999 style round-off
    (k + 1e-9).floor() as u32
}

/// Constructive lower bound on uniform connectivity of the high-reward set.
///
/// Any pair of states in the set is joined through the empty state: draining
/// takes at most `K` steps, each succeeding with probability at least
/// `drain_step`, and filling takes at most `K` single-job steps, each with
/// probability at least `fill_step`.
pub fn constructive_connectivity(model: &GsseModel, z: f64) -> Connectivity {
    let k = max_jobs_above(model, z);
    let n = model.class_count();
    let m = model.option_count();
    let x_z = match model.reward_kind() {
        RewardKind::MeanQueue => 2.0 * z.abs(),
        _ => 2.0 * k as f64,
    };
    let no_arrivals: f64 = (0..n).map(|i| model.arrivals(i).prob(0)).product();
    let min_completion = (0..m)
        .flat_map(|j| (0..n).map(move |i| (i, j)))
        .map(|(i, j)| model.service(j, i).prob_at_least(1))
        .filter(|&p| p > 0.0)
        .fold(f64::INFINITY, f64::min);
    let drain_step = if min_completion.is_finite() { no_arrivals * min_completion } else { 0.0 };
    let fill_step: f64 = (0..n)
        .map(|i| {
            let mut worst = f64::INFINITY;
            for j in 0..m {
                for q in 0..=k {
                    let next = model.service(j, i).next_queue(model.arrivals(i), q, None);
                    let up = next.iter().find(|(x, _)| *x == q + 1).map_or(0.0, |e| e.1);
                    let hold = next.iter().find(|(x, _)| *x == q).map_or(0.0, |e| e.1);
                    worst = worst.min(up.min(hold));
                }
            }
            worst
        })
        .product();
    let p_z = if k == 0 { 1.0 } else { (drain_step * fill_step).powi(k as i32) };
    Connectivity { z, max_jobs: k, x_z, drain_step, fill_step, p_z, p_z_exact: None }
}

/// Options allowed at `q` under the non-idling requirement.
fn non_idling_options(model: &GsseModel, q: &[u32]) -> Vec<usize> {
    let serving: Vec<usize> = (0..model.option_count()).filter(|&j| model.serves(q, j)).collect();
    if q.iter().all(|&x| x == 0) || serving.is_empty() {
        (0..model.option_count()).collect()
    } else {
        serving
    }
}

/// Minimum over all non-idling policies of the probability of reaching each
/// high-reward state from each other within `floor(x_z)` steps, by backward
/// induction. Returns `None` when the truncation has more than 500 states or
/// is too small for the horizon to avoid clipping.
pub fn exact_connectivity(mdp: &TruncatedMdp, model: &GsseModel, conn: &Connectivity) -> Option<f64> {
    if mdp.state_count() > 500 {
        return None;
    }
    let horizon = (conn.x_z + 1e-9).floor() as u32;
    let needed = conn.max_jobs + horizon * model.ell();
    let buffer = mdp.labels().iter().flat_map(|l| l.iter().copied()).max().unwrap_or(0);
    if buffer < needed {
        return None;
    }
    let high: Vec<StateId> = mdp.states().filter(|&s| mdp.r_max(s) >= conn.z).collect();
    let allowed: Vec<Vec<usize>> = mdp.states().map(|s| non_idling_options(model, mdp.label(s))).collect();
    let mut best = 1.0f64;
    for &target in &high {
        let mut w: Vec<f64> = mdp.states().map(|s| if s == target { 1.0 } else { 0.0 }).collect();
        for _ in 0..horizon {
            w = mdp
                .states()
                .map(|s| {
                    if s == target {
                        return 1.0;
                    }
                    allowed[s.0].iter().map(|&a| mdp.expect(s, a, &w)).fold(f64::INFINITY, f64::min)
                })
                .collect();
        }
        for &s in &high {
            best = best.min(w[s.0]);
        }
    }
    Some(best)
}

pub fn verify_assumptions(mdp: &TruncatedMdp, model: &GsseModel, z: f64) -> AssumptionReport {
    let mut violations = Vec::new();

    let c_max = mdp.c_max();
    let zero = mdp.zero_state();
    if !c_max.is_finite() || mdp.r_max(zero) != c_max {
        violations.push("maximum reward is not finite or not attained at the zero state".to_string());
    }

    let mut zs: Vec<f64> = Z_GRID.to_vec();
    if !zs.contains(&z) {
        zs.push(z);
    }
    let high_reward_sets = zs
        .iter()
        .map(|&zz| {
            let members: Vec<StateId> = mdp.states().filter(|&s| mdp.r_max(s) >= zz).collect();
            HighRewardSet {
                z: zz,
                size: members.len(),
                touches_boundary: members.iter().any(|&s| mdp.is_boundary(s)),
            }
        })
        .collect();

    let (r1, r2, r3, r4) = reward_constants(model);
    let (mut r1_fit, mut r2_fit) = (0.0f64, 0.0f64);
    for s in mdp.states() {
        let r_hat = mdp.r_hat_max(s);
        for a in 0..mdp.action_count() {
            let gap = mdp.r_max(s) - mdp.reward(s, a);
            if r_hat == 0.0 {
                r2_fit = r2_fit.max(gap);
            } else {
                r1_fit = r1_fit.max(gap / (r_hat * r_hat));
            }
            if !holds(gap, r1 * r_hat * r_hat + r2) {
                violations.push(format!("reward gap at {:?}, action {a}: {gap}", mdp.label(s)));
            }
        }
    }

    let mut worst = (f64::NEG_INFINITY, (Vec::new(), Vec::new()));
    let mut pairs = 0usize;
    for s in mdp.states() {
        let lhs_base = r3 * mdp.r_hat_max(s);
        for a in 0..mdp.action_count() {
            let (succ, probs) = mdp.transitions(s, a);
            for (&t, &p) in succ.iter().zip(probs) {
                if p <= 0.0 {
                    continue;
                }
                pairs += 1;
                let need = lhs_base - mdp.r_hat_max(StateId(t));
                if need > worst.0 {
                    worst = (need, (mdp.label(s).clone(), mdp.label(StateId(t)).clone()));
                }
            }
        }
    }
    let growth_holds = holds(worst.0, r4);
    if !growth_holds {
        violations.push(format!(
            "reward growth: R_4 = {r4} too small, need {} at {:?} -> {:?}",
            worst.0, worst.1 .0, worst.1 .1
        ));
    }
    let growth = RewardGrowth {
        r3,
        r4,
        r4_fitted: worst.0.max(0.0),
        pairs_checked: pairs,
        holds: growth_holds,
        worst_pair: worst.1,
    };

    let alpha_sweep = match model.reward_kind() {
        RewardKind::AlphaMoment { alpha } => {
            let sweep = alpha_sweep(*alpha, model.ell() as f64 * model.class_count() as f64, ALPHA_SWEEP_MAX);
            if !sweep.holds {
                violations.push(format!("alpha growth inequality fails at total {}", sweep.worst_total));
            }
            Some(sweep)
        }
        _ => None,
    };

    let mut connectivity = constructive_connectivity(model, z);
    connectivity.p_z_exact = exact_connectivity(mdp, model, &connectivity);
    if !(connectivity.p_z > 0.0) {
        violations.push(format!("connectivity bound is degenerate at z = {z}"));
    }

    AssumptionReport {
        c_max,
        zero_state: mdp.label(zero).clone(),
        high_reward_sets,
        r1,
        r2,
        r1_fitted: r1_fit,
        r2_fitted: r2_fit,
        growth,
        alpha_sweep,
        connectivity,
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialFit {
    pub c0: f64,
    pub c1: f64,
}

/// Coarse grid for `c_0`: powers of two from `2^-20` to `2^40`.
fn coarse_grid() -> impl Iterator<Item = f64> {
    (-20..=40).map(|e| 2f64.powi(e))
}

const FINE_STEPS: usize = 64;

/// Smallest `c_0` on a two-stage sweep with `V_0(s) >= -c_0 r^2` at every interior
/// state with `r = r_max(s) - c_max != 0`; then `c_1` is the exact slack needed
/// elsewhere, so that `V_0(s) >= -c_0 r^2 - c_1` holds at every interior state.
pub fn fit_initial_policy_constants(mdp: &TruncatedMdp, eval0: &EvalResult) -> Result<InitialFit> {
    let interior: Vec<(f64, f64)> = mdp
        .states()
        .filter(|&s| !mdp.is_boundary(s))
        .map(|s| (mdp.r_hat_max(s), eval0.value[s.0]))
        .collect();
    let covers = |c0: f64| interior.iter().filter(|(r, _)| *r != 0.0).all(|&(r, v)| v >= -c0 * r * r);
    let mut prev = 0.0;
    let mut found = None;
    for c in coarse_grid() {
        if covers(c) {
            found = Some(c);
            break;
        }
        prev = c;
    }
    let coarse = found.ok_or_else(|| Error::InvalidArgument("no finite c_0 on the sweep".into()))?;
    let mut c0 = coarse;
    if prev > 0.0 {
        for k in 1..=FINE_STEPS {
            let c = prev + (coarse - prev) * k as f64 / FINE_STEPS as f64;
            if covers(c) {
                c0 = c;
                break;
            }
        }
    }
    let c1 = interior.iter().map(|&(r, v)| -v - c0 * r * r).fold(0.0, f64::max);
    Ok(InitialFit { c0, c1 })
}
