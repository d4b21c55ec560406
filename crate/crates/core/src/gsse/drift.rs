//! Lyapunov drift certificates for MaxWeight-type policies and the value-function
//! lower bound they imply.

use serde::Serialize;

use super::capacity::capacity_margin;
use super::model::{gsse_transition, states_within, GsseModel};
use crate::error::{Error, Result};
use crate::mdp::{EvalResult, TabularPolicy, TruncatedMdp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialKind {
    /// `f(q) = sum_i q_i^2`, reward `-sum_i q_i`
    SumOfSquares,
    /// `f(q) = sum_i q_i^(alpha+1)`, reward `-(sum_i q_i)^alpha`
    Alpha { alpha: f64 },
}

impl PotentialKind {
    pub fn potential(&self, q: &[u32]) -> f64 {
        match self {
            PotentialKind::SumOfSquares => q.iter().map(|&x| (x as f64) * (x as f64)).sum(),
            PotentialKind::Alpha { alpha } => q.iter().map(|&x| (x as f64).powf(alpha + 1.0)).sum(),
        }
    }

    /// The reward the certificate is stated against.
    pub fn reward(&self, q: &[u32]) -> f64 {
        let total: f64 = q.iter().map(|&x| x as f64).sum();
        match self {
            PotentialKind::SumOfSquares => -total,
            PotentialKind::Alpha { alpha } => -total.powf(*alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftCertificate {
    pub c1: f64,
    pub c2: f64,
    pub kind: PotentialKind,
    /// `max_q E[f(q') - f(q) | q] - c1 r(q) - c2` over the checked states.
    pub max_violation: f64,
    pub worst_state: Vec<u32>,
    pub states_checked: usize,
}

/// `(c1, c2)` for the potential.
///
/// For `alpha`, a second-order expansion gives
/// `drift <= -(alpha+1) eps min(lambda) n^(1-alpha) S^alpha
///           + n (alpha+1) alpha / 2 * ell^2 (S + ell)^(alpha-1) + (alpha+1) n ell^(alpha+1)`
/// with `S = sum_i q_i`; `c1` takes half of the negative term and `c2` the
/// supremum over integer `S` of what is left.
pub fn certificate_constants(model: &GsseModel, kind: PotentialKind) -> Result<(f64, f64)> {
    let eps = capacity_margin(model)?.epsilon;
    let min_lambda = model.lambda().iter().cloned().fold(f64::INFINITY, f64::min);
    let n = model.class_count() as f64;
    let ell = model.ell() as f64;
    match kind {
        PotentialKind::SumOfSquares => Ok((2.0 * eps * min_lambda, ell * ell * n)),
        PotentialKind::Alpha { alpha } => {
            let lead = (alpha + 1.0) * eps * min_lambda * n.powf(1.0 - alpha);
            let c1 = lead / 2.0;
            let second = n * (alpha + 1.0) * alpha / 2.0 * ell * ell;
            let constant = (alpha + 1.0) * n * ell.powf(alpha + 1.0);
            let h = |s: f64| -c1 * s.powf(alpha) + second * (s + ell).powf(alpha - 1.0) + constant;
            let slope = |s: f64| -c1 * alpha * s.powf(alpha - 1.0) + second * (alpha - 1.0) * (s + ell).powf(alpha - 2.0);
            let mut c2 = h(0.0);
            let mut s = 1.0;
            // h is eventually decreasing and stays so once its slope turns negative
            while slope(s) >= 0.0 || s < 2.0 {
                c2 = c2.max(h(s));
                s += 1.0;
                if s > 1e9 {
                    return Err(Error::InvalidModel("drift constant search did not terminate".into()));
                }
            }
            c2 = c2.max(h(s));
            Ok((c1, c2.max(0.0)))
        }
    }
}

/// Checks the drift inequality exactly at every state with `sum_i q_i <= radius`.
pub fn drift_certificate<P>(model: &GsseModel, policy: P, kind: PotentialKind, radius: u32) -> Result<DriftCertificate>
where
    P: Fn(&[u32]) -> usize,
{
    let (c1, c2) = certificate_constants(model, kind)?;
    let states = states_within(model.class_count(), radius);
    let mut worst = (f64::NEG_INFINITY, Vec::new());
    for q in &states {
        let option = policy(q);
        let f0 = kind.potential(q);
        let drift: f64 = gsse_transition(model, q, option)?
            .iter()
            .map(|(next, p)| p * (kind.potential(next) - f0))
            .sum();
        let margin = drift - c1 * kind.reward(q) - c2;
        if margin > worst.0 {
            worst = (margin, q.clone());
        }
    }
    Ok(DriftCertificate {
        c1,
        c2,
        kind,
        max_violation: worst.0,
        worst_state: worst.1,
        states_checked: states.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovBound {
    pub c3: f64,
    pub c4: f64,
    /// Reward threshold of the finite set the minimum is taken over.
    pub threshold: f64,
    /// Smallest `V(s) + c3 f(s) + c4` over interior states.
    pub worst_margin: f64,
    pub worst_state: Vec<u32>,
}

/// `V(s) >= -c3 f(s) - c4` with `c3 = 2 / c1` and `c4` the negative part of the
/// smallest value over states whose reward is at least `-2 c2 / c1 - J`.
pub fn lyapunov_value_bound(
    mdp: &TruncatedMdp,
    _pi: &TabularPolicy,
    cert: &DriftCertificate,
    eval: &EvalResult,
) -> Result<LyapunovBound> {
    if cert.max_violation > 0.0 {
        return Err(Error::InvalidArgument(format!(
            "drift certificate is violated (margin {})",
            cert.max_violation
        )));
    }
    let c3 = 2.0 / cert.c1;
    let threshold = -2.0 * cert.c2 / cert.c1 - eval.average_reward;
    let v_min = mdp
        .states()
        .filter(|&s| !mdp.is_boundary(s) && cert.kind.reward(mdp.label(s)) >= threshold)
        .map(|s| eval.value[s.0])
        .fold(f64::INFINITY, f64::min);
    let c4 = if v_min.is_finite() { (-v_min).max(0.0) } else { 0.0 };
    let mut worst = (f64::INFINITY, Vec::new());
    for s in mdp.states().filter(|&s| !mdp.is_boundary(s)) {
        let bound = -c3 * cert.kind.potential(mdp.label(s)) - c4;
        let margin = eval.value[s.0] - bound;
        let scaled = margin + 1e-8 * (1.0 + bound.abs());
        if scaled < 0.0 {
            return Err(Error::LyapunovViolated { state: s.0, margin });
        }
        if margin < worst.0 {
            worst = (margin, mdp.label(s).clone());
        }
    }
    Ok(LyapunovBound { c3, c4, threshold, worst_margin: worst.0, worst_state: worst.1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsse::maxweight::{maxweight_action, MaxWeightVariant};
    use crate::gsse::model::{Distribution, GsseParams, RewardKind};

    fn single() -> GsseModel {
        GsseModel::new(GsseParams {
            arrivals: vec![Distribution::bernoulli(0.3).unwrap()],
            services: vec![vec![Distribution::bernoulli(0.6).unwrap()]],
            option_names: vec![],
            reward: RewardKind::MeanQueue,
        })
        .unwrap()
    }

    #[test]
    fn single_queue_sum_of_squares() {
        let m = single();
        let cert = drift_certificate(&m, |_| 0, PotentialKind::SumOfSquares, 50).unwrap();
        assert!((cert.c1 - 0.6).abs() < 1e-12);
        assert_eq!(cert.c2, 1.0);
        assert!(cert.max_violation <= 0.0, "{cert:?}");
        assert_eq!(cert.states_checked, 51);
    }

    #[test]
    fn empty_state_drift_is_arrival_second_moment() {
        let m = single();
        let t = gsse_transition(&m, &[0], 0).unwrap();
        let drift: f64 = t.iter().map(|(q, p)| p * PotentialKind::SumOfSquares.potential(q)).sum();
        assert!((drift - 0.3).abs() < 1e-15);
        assert!(drift <= 1.0);
    }

    #[test]
    fn alpha_certificate_holds() {
        let m = single();
        let v = MaxWeightVariant::Alpha { alpha: 2.0 };
        let cert =
            drift_certificate(&m, |q| maxweight_action(&m, q, &v), PotentialKind::Alpha { alpha: 2.0 }, 60).unwrap();
        assert!(cert.max_violation <= 0.0, "{cert:?}");
    }

    #[test]
    fn lyapunov_bound_on_single_queue() {
        let m = single();
        let mdp = m.truncate_to(60).unwrap();
        let pi = TabularPolicy::deterministic(&vec![0; mdp.state_count()], 1);
        let ev = crate::mdp::evaluate_policy(&mdp, &pi).unwrap();
        let cert = drift_certificate(&m, |_| 0, PotentialKind::SumOfSquares, 50).unwrap();
        let b = lyapunov_value_bound(&mdp, &pi, &cert, &ev).unwrap();
        assert!((b.c3 - 10.0 / 3.0).abs() < 1e-12);
        assert!(b.worst_margin >= 0.0);
    }
}
