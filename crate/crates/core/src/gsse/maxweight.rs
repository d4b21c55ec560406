use serde::{Deserialize, Serialize};

use super::model::GsseModel;
use crate::mdp::{TabularPolicy, TruncatedMdp};

/// Scores within this relative distance of the best are treated as ties.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MaxWeightVariant {
    /// weight `q_i`
    Standard,
    /// weight `c_i q_i`
    Weighted { weights: Vec<f64> },
    /// weight `q_i^alpha`
    Alpha { alpha: f64 },
}

impl MaxWeightVariant {
    fn weight(&self, class: usize, q: u32) -> f64 {
        let q = q as f64;
        match self {
            MaxWeightVariant::Standard => q,
            MaxWeightVariant::Weighted { weights } => weights[class] * q,
            MaxWeightVariant::Alpha { alpha } => q.powf(*alpha),
        }
    }
}

/// `sum_i weight_i(q) mu_i^j` for every option `j`.
pub fn maxweight_scores(model: &GsseModel, q: &[u32], variant: &MaxWeightVariant) -> Vec<f64> {
    (0..model.option_count())
        .map(|j| {
            q.iter()
                .enumerate()
                .map(|(i, &qi)| variant.weight(i, qi) * model.mu(j)[i])
                .sum()
        })
        .collect()
}

/// The option maximizing the weighted service rate; lowest index among ties.
pub fn maxweight_action(model: &GsseModel, q: &[u32], variant: &MaxWeightVariant) -> usize {
    let scores = maxweight_scores(model, q, variant);
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOL * best.abs();
    scores.iter().position(|&s| s >= best - tol).unwrap_or(0)
}

/// Deterministic MaxWeight policy on a truncation of `model`, made non-idling.
pub fn maxweight_policy(model: &GsseModel, mdp: &TruncatedMdp, variant: &MaxWeightVariant) -> TabularPolicy {
    let choices: Vec<usize> = mdp
        .states()
        .map(|s| {
            let q = mdp.label(s);
            model.non_idling(q, maxweight_action(model, q, variant))
        })
        .collect();
    TabularPolicy::deterministic(&choices, mdp.action_count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsse::model::{Distribution, GsseParams, RewardKind};

    fn two_by_two() -> GsseModel {
        let b = |p| Distribution::bernoulli(p).unwrap();
        GsseModel::new(GsseParams {
            arrivals: vec![b(0.3), b(0.3)],
            services: vec![vec![b(1.0 - 1e-9), b(1e-9)], vec![b(1e-9), b(1.0 - 1e-9)]],
            option_names: vec![],
            reward: RewardKind::MeanQueue,
        })
        .unwrap()
    }

    #[test]
    fn argmax_and_ties() {
        let m = two_by_two();
        let v = MaxWeightVariant::Standard;
        assert_eq!(maxweight_action(&m, &[2, 1], &v), 0);
        assert_eq!(maxweight_action(&m, &[1, 2], &v), 1);
        assert_eq!(maxweight_action(&m, &[1, 1], &v), 0);
        assert_eq!(maxweight_action(&m, &[0, 0], &v), 0);
    }

    #[test]
    fn variants_change_the_choice() {
        let m = two_by_two();
        let w = MaxWeightVariant::Weighted { weights: vec![1.0, 3.0] };
        assert_eq!(maxweight_action(&m, &[2, 1], &w), 1);
        let a = MaxWeightVariant::Alpha { alpha: 2.0 };
        assert_eq!(maxweight_action(&m, &[3, 2], &a), 0);
    }
}
