//! Building the objects a run needs from a model: truncation, initial policy
//! and the constants ledger.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsse::assumptions::reward_constants;
use crate::gsse::{
    fit_initial_policy_constants, maxweight_policy, verify_assumptions, AssumptionReport, GsseModel, InitialFit,
    MaxWeightVariant, RewardKind,
};
use crate::mdp::{EvalResult, TabularPolicy, TruncatedMdp};
use crate::npg::{ConstantsLedger, LedgerInputs, Tagged};

/// Default weight of the uniform policy mixed into a deterministic start.
pub const DEFAULT_INIT_MIX: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Maxweight,
    WeightedMaxweight,
    AlphaMaxweight,
    Uniform,
    /// JSON list of `{"state": [...], "probs": [...]}` rows.
    File(PathBuf),
}

impl InitKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "maxweight" => InitKind::Maxweight,
            "weighted-maxweight" => InitKind::WeightedMaxweight,
            "alpha-maxweight" => InitKind::AlphaMaxweight,
            "uniform" => InitKind::Uniform,
            other => match other.strip_prefix("file:") {
                Some(path) => InitKind::File(PathBuf::from(path)),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown initial policy '{other}' (expected maxweight, weighted-maxweight, alpha-maxweight, uniform or file:PATH)"
                    )))
                }
            },
        })
    }

    pub fn name(&self) -> String {
        match self {
            InitKind::Maxweight => "maxweight".into(),
            InitKind::WeightedMaxweight => "weighted-maxweight".into(),
            InitKind::AlphaMaxweight => "alpha-maxweight".into(),
            InitKind::Uniform => "uniform".into(),
            InitKind::File(p) => format!("file:{}", p.display()),
        }
    }
}

/// The MaxWeight variant matched to the model's reward.
pub fn matched_variant(model: &GsseModel) -> MaxWeightVariant {
    match model.reward_kind() {
        RewardKind::MeanQueue => MaxWeightVariant::Standard,
        RewardKind::Weighted { weights } => MaxWeightVariant::Weighted { weights: weights.clone() },
        RewardKind::AlphaMoment { alpha } => MaxWeightVariant::Alpha { alpha: *alpha },
    }
}

#[derive(Deserialize)]
struct PolicyRow {
    state: Vec<u32>,
    probs: Vec<f64>,
}

/// Strictly positive starting policy: deterministic kinds are mixed with the
/// uniform policy at weight `mix`.
pub fn initial_policy(model: &GsseModel, mdp: &TruncatedMdp, kind: &InitKind, mix: f64) -> Result<TabularPolicy> {
    if !(mix > 0.0 && mix <= 1.0) {
        return Err(Error::InvalidArgument(format!("initial mixing weight {mix} outside (0, 1]")));
    }
    let variant = match kind {
        InitKind::Uniform => return Ok(TabularPolicy::uniform(mdp.state_count(), mdp.action_count())),
        InitKind::File(path) => return policy_from_file(mdp, path),
        InitKind::Maxweight => MaxWeightVariant::Standard,
        InitKind::WeightedMaxweight => match model.reward_kind() {
            RewardKind::Weighted { weights } => MaxWeightVariant::Weighted { weights: weights.clone() },
            _ => return Err(Error::InvalidArgument("weighted-maxweight needs a weighted reward".into())),
        },
        InitKind::AlphaMaxweight => match model.reward_kind() {
            RewardKind::AlphaMoment { alpha } => MaxWeightVariant::Alpha { alpha: *alpha },
            _ => return Err(Error::InvalidArgument("alpha-maxweight needs an alpha-moment reward".into())),
        },
    };
    Ok(maxweight_policy(model, mdp, &variant).smoothed(mix))
}

fn policy_from_file(mdp: &TruncatedMdp, path: &std::path::Path) -> Result<TabularPolicy> {
    let text = std::fs::read_to_string(path)?;
    let rows: Vec<PolicyRow> =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut table: Vec<Option<Vec<f64>>> = vec![None; mdp.state_count()];
    for row in rows {
        let s = mdp
            .find_state(&row.state)
            .ok_or_else(|| Error::Config(format!("{}: state {:?} is not in the truncation", path.display(), row.state)))?;
        table[s.0] = Some(row.probs);
    }
    let rows = table
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| Error::Config(format!("{}: no row for state {:?}", path.display(), mdp.labels()[i]))))
        .collect::<Result<Vec<_>>>()?;
    let pi = TabularPolicy::from_rows(rows)?;
    pi.check_compatible(mdp)?;
    Ok(pi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedLedger {
    pub ledger: ConstantsLedger,
    pub assumptions: AssumptionReport,
    pub initial_fit: InitialFit,
}

/// Threshold used when none is supplied: one reward unit below `J_0`.
pub fn default_threshold(j0: f64) -> f64 {
    j0 - 1.0
}

/// Fits and derives every ledger entry for a GSSE truncation started from the
/// policy evaluated in `eval0`.
pub fn fit_ledger(
    model: &GsseModel,
    mdp: &TruncatedMdp,
    eval0: &EvalResult,
    z: Option<f64>,
    j_star: Option<f64>,
    overrides: &BTreeMap<String, f64>,
) -> Result<FittedLedger> {
    let j0 = eval0.average_reward;
    let (z, z_tag) = match z {
        Some(z) => (z, Tagged::supplied(z)),
        None => {
            let z = default_threshold(j0);
            (z, Tagged::derived(z, "J_0 - 1"))
        }
    };
    let assumptions = verify_assumptions(mdp, model, z);
    let initial_fit = fit_initial_policy_constants(mdp, eval0)?;
    let (r1, r2, r3, r4) = reward_constants(model);
    let family = "reward family constant";
    let conn = &assumptions.connectivity;
    let inputs = LedgerInputs {
        action_count: mdp.action_count(),
        c_max: Tagged::fitted(mdp.c_max(), "largest reward on the truncation"),
        r1: Tagged::derived(r1, family),
        r2: Tagged::derived(r2, family),
        r3: Tagged::derived(r3, family),
        r4: Tagged::derived(r4, family),
        c0: Tagged::fitted(initial_fit.c0, "two-stage sweep over interior states"),
        c1: Tagged::fitted(initial_fit.c1, "remaining slack at the fitted c_0"),
        z: z_tag,
        j0: Tagged::fitted(j0, "evaluation of the initial policy"),
        x_z: Tagged::derived(conn.x_z, "constructive path length"),
        p_z: Tagged::derived(conn.p_z, "product-form path probability"),
        j_star,
    };
    let ledger = ConstantsLedger::derive_with_overrides(&inputs, overrides)?;
    Ok(FittedLedger { ledger, assumptions, initial_fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsse::Preset;
    use crate::mdp::evaluate_policy;

    #[test]
    fn parse_init_kinds() {
        assert_eq!(InitKind::parse("maxweight").unwrap(), InitKind::Maxweight);
        assert_eq!(InitKind::parse("file:a.json").unwrap(), InitKind::File("a.json".into()));
        assert!(InitKind::parse("greedy").is_err());
        for k in ["maxweight", "weighted-maxweight", "alpha-maxweight", "uniform", "file:x"] {
            assert_eq!(InitKind::parse(k).unwrap().name(), k);
        }
    }

    #[test]
    fn ledger_for_single_queue() {
        let model = Preset::SingleQueue.build(RewardKind::MeanQueue).unwrap();
        let mdp = model.truncate_to(30).unwrap();
        let pi = initial_policy(&model, &mdp, &InitKind::Maxweight, DEFAULT_INIT_MIX).unwrap();
        assert!(pi.is_strictly_positive());
        let ev = evaluate_policy(&mdp, &pi).unwrap();
        let fit = fit_ledger(&model, &mdp, &ev, None, None, &BTreeMap::new()).unwrap();
        let l = &fit.ledger;
        assert_eq!(l.get("z"), ev.average_reward - 1.0);
        assert_eq!(l.get("J_star_upper"), 0.0);
        assert!(l.c_star() > 0.0);
        assert!(fit.assumptions.passed());
    }

    #[test]
    fn mismatched_variant_rejected() {
        let model = Preset::SingleQueue.build(RewardKind::MeanQueue).unwrap();
        let mdp = model.truncate_to(5).unwrap();
        assert!(initial_policy(&model, &mdp, &InitKind::AlphaMaxweight, 0.1).is_err());
        assert!(initial_policy(&model, &mdp, &InitKind::Maxweight, 0.0).is_err());
    }
}
