//! End-to-end verification: build a truncation, fit the ledger, run NPG over a
//! horizon grid and check every inequality of the bound chain.

pub mod checks;
pub mod setup;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

pub use checks::{
    check_convergence_rate, check_tau_bound, fit_rate, CheckRecord, CheckStatus, Inequality, IterateChecks, RateFit,
    RatePoint, Slack, Witness,
};
pub use setup::{fit_ledger, initial_policy, matched_variant, FittedLedger, InitKind, DEFAULT_INIT_MIX};

use crate::error::{Error, Result};
use crate::expert::{regret_sweep, SweepSummary};
use crate::gsse::{
    capacity_margin, drift_certificate, lyapunov_value_bound, maxweight_action, AssumptionReport, GsseModel,
    InitialFit, MaxWeightVariant, PotentialKind, RewardKind,
};
use crate::mdp::{evaluate_policy, optimal_average_reward_from, EvalResult, TabularPolicy, TruncatedMdp};
use crate::npg::{make_schedule, run_npg_with, ConstantsLedger, NpgOptions, NpgTrace};

/// Largest stationary mass allowed on truncation-modified states.
pub const ADEQUACY_THRESHOLD: f64 = 1e-8;

pub const INCONCLUSIVE_TRUNCATION: &str = "inconclusive: truncation";

/// Everything a verification or experiment run needs, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationConfig {
    pub model_name: String,
    pub model: GsseModel,
    pub truncation: u32,
    /// Largest truncation tried when the first one is inadequate.
    pub truncation_cap: u32,
    /// Strictly increasing horizons.
    pub t_grid: Vec<usize>,
    pub init: InitKind,
    pub init_mix: f64,
    pub z: Option<f64>,
    /// Put the exact optimum from policy iteration in the ledger instead of surrogates.
    pub exact_optimum_in_ledger: bool,
    pub overrides: BTreeMap<String, f64>,
    pub seed: u64,
    pub drift_radius: u32,
    pub regret_trials: usize,
}

impl VerificationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_grid.is_empty() {
            return Err(Error::Config("the horizon grid is empty".into()));
        }
        if self.t_grid.windows(2).any(|w| w[0] >= w[1]) || self.t_grid[0] == 0 {
            return Err(Error::Config("horizons must be positive and strictly increasing".into()));
        }
        if self.truncation == 0 {
            return Err(Error::Config("truncation must be at least 1".into()));
        }
        if self.truncation_cap < self.truncation {
            return Err(Error::Config(format!(
                "truncation cap {} is below the truncation {}",
                self.truncation_cap, self.truncation
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Adequacy {
    pub threshold: f64,
    pub requested_truncation: u32,
    pub truncation: u32,
    pub truncation_cap: u32,
    pub doublings: u32,
    pub initial_boundary_mass: f64,
    /// Largest boundary mass over the iterates of the longest run, once known.
    pub max_iterate_boundary_mass: Option<f64>,
    pub adequate: bool,
}

/// Truncation, initial policy, ledger and optimum for one configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub mdp: TruncatedMdp,
    pub pi0: TabularPolicy,
    pub eval0: EvalResult,
    pub adequacy: Adequacy,
    pub optimal_reward: f64,
    pub fitted: FittedLedger,
}

/// MaxWeight actions for the model's reward, made non-idling.
pub fn maxweight_actions(model: &GsseModel, mdp: &TruncatedMdp, variant: &MaxWeightVariant) -> Vec<usize> {
    mdp.states()
        .map(|s| {
            let q = mdp.label(s);
            model.non_idling(q, maxweight_action(model, q, variant))
        })
        .collect()
}

/// Builds the truncation, doubling it up to the cap while the initial policy
/// puts more than [`ADEQUACY_THRESHOLD`] mass on boundary states.
pub fn prepare(cfg: &VerificationConfig) -> Result<Prepared> {
    let mut truncation = cfg.truncation;
    let mut doublings = 0;
    let (mdp, pi0, eval0, mass) = loop {
        let mdp = cfg.model.truncate_to(truncation)?;
        let pi0 = initial_policy(&cfg.model, &mdp, &cfg.init, cfg.init_mix)?;
        let eval0 = evaluate_policy(&mdp, &pi0)?;
        let mass = eval0.boundary_mass(&mdp);
        if mass < ADEQUACY_THRESHOLD || truncation >= cfg.truncation_cap {
            break (mdp, pi0, eval0, mass);
        }
        truncation = truncation.saturating_mul(2).min(cfg.truncation_cap);
        doublings += 1;
    };
    let adequacy = Adequacy {
        threshold: ADEQUACY_THRESHOLD,
        requested_truncation: cfg.truncation,
        truncation,
        truncation_cap: cfg.truncation_cap,
        doublings,
        initial_boundary_mass: mass,
        max_iterate_boundary_mass: None,
        adequate: mass < ADEQUACY_THRESHOLD,
    };
    let start = maxweight_actions(&cfg.model, &mdp, &matched_variant(&cfg.model));
    let optimum = optimal_average_reward_from(&mdp, start)?;
    let j_star = cfg.exact_optimum_in_ledger.then_some(optimum.average_reward);
    let fitted = fit_ledger(&cfg.model, &mdp, &eval0, cfg.z, j_star, &cfg.overrides)?;
    Ok(Prepared { mdp, pi0, eval0, adequacy, optimal_reward: optimum.average_reward, fitted })
}

#[derive(Debug, Clone)]
pub struct GridRun {
    pub horizon: usize,
    pub trace: NpgTrace,
    /// Per-iteration check records; present only for the run they were requested on.
    pub checks: Option<Vec<CheckRecord>>,
}

/// Runs NPG at every horizon of the grid concurrently; the per-iteration
/// inequalities are checked on the run at `checked_horizon`.
pub fn run_grid(prep: &Prepared, t_grid: &[usize], checked_horizon: Option<usize>, timings: bool) -> Result<Vec<GridRun>> {
    let ledger = &prep.fitted.ledger;
    t_grid
        .par_iter()
        .map(|&t| {
            let schedule = make_schedule(ledger, &prep.mdp, t)?;
            let options = NpgOptions { optimal_reward: Some(prep.optimal_reward), timings };
            if checked_horizon == Some(t) {
                let mut checks = IterateChecks::new(&prep.mdp, ledger, &schedule);
                let run = run_npg_with(&prep.mdp, &prep.pi0, &schedule, &options, |k, pi, ev| checks.observe(k, pi, ev))?;
                Ok(GridRun { horizon: t, trace: run.trace, checks: Some(checks.finish()) })
            } else {
                let run = run_npg_with(&prep.mdp, &prep.pi0, &schedule, &options, |_, _, _| {})?;
                Ok(GridRun { horizon: t, trace: run.trace, checks: None })
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub model: String,
    pub reward: RewardKind,
    pub init: String,
    pub seed: u64,
    pub t_grid: Vec<usize>,
    pub state_count: usize,
    pub action_count: usize,
    pub adequacy: Option<Adequacy>,
    pub optimal_reward: Option<f64>,
    pub checks: Vec<CheckRecord>,
    pub ledger: Option<ConstantsLedger>,
    pub assumptions: Option<AssumptionReport>,
    pub initial_fit: Option<InitialFit>,
    pub rate: Option<RateFit>,
    pub regret_sweep: Option<SweepSummary>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| c.failed()).map(|c| c.name).collect()
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }
}

const NPG_CHECKS: [(&str, &str); 12] = [
    ("npg-run", "NPG completes every planned iteration"),
    ("average-reward-monotone", "J_{k+1} >= J_k"),
    ("q-improvement", "Q_k(s, pi_{k+1}) >= V_k(s) at every interior state"),
    ("performance-difference", "J_{k+1} - J_k = sum_s d_{k+1}(s) (Q_k(s, pi_{k+1}) - V_k(s))"),
    ("relative-value-drop", "V_{k+1}(s) >= V_k(s) - tau_{k+1}(s) (J_{k+1} - J_k) at every interior state"),
    ("hitting-time-bound", checks::TAU_PROPERTY),
    ("value-lower-bound", "V_k(s) >= c_5_lemma V_0(s) - c_6_lemma at every interior state"),
    ("value-upper-bound", "V_k(s) <= c_7_lemma at every interior state"),
    ("q-range-bound", "max_a Q_k(s, a) - min_a Q_k(s, a) <= M_s at every interior state"),
    ("kl-identity", "KL(pi_{k+1}(.|s) || pi_k(.|s)) + ln Z_{s,k} = ln(beta_s) Q_k(s, pi_{k+1})"),
    (
        "per-state-regret",
        "max_a sum_k Q_k(s, a) - sum_k Q_k(s, pi_k) <= sqrt(T M_s ln|A|) + log2(|A|)/2 at every interior state",
    ),
    ("gap-non-increasing", "J_star - J_T does not increase along the horizon grid"),
];

const LATE_CHECKS: [(&str, &str); 4] = [
    ("lyapunov-value-bound", "V(s) >= -c_3 f(s) - c_4 for the MaxWeight policy at every interior state"),
    ("initial-value-fit", "V_0(s) >= -c_0 (r_max(s) - c_max)^2 - c_1 at every interior state"),
    ("truncation-adequacy", "stationary mass on boundary states below the threshold"),
    ("weighted-majority-regret", "expected regret <= sqrt(T M ln|A|) + log2(|A|)/2 on random instances"),
];

const CAPACITY: (&str, &str) = ("capacity-margin", "arrival rates scaled by 1 + eps lie in the service-rate hull, eps > 0");
const DRIFT: (&str, &str) = ("drift-certificate", "E[f(q') - f(q)] <= c1 r(q) + c2 under MaxWeight for sum(q) <= radius");
const RATE: (&str, &str) = ("convergence-rate", checks::RATE_PROPERTY);

fn skip_all(list: &[(&'static str, &'static str)], reason: &str, inconclusive: bool) -> Vec<CheckRecord> {
    list.iter()
        .map(|&(n, p)| {
            if inconclusive {
                CheckRecord::inconclusive(n, p, reason)
            } else {
                CheckRecord::skipped(n, p, reason)
            }
        })
        .collect()
}

/// Drift potential matched to the reward, if a certificate exists for it.
fn potential_for(reward: &RewardKind) -> Option<PotentialKind> {
    match reward {
        RewardKind::MeanQueue => Some(PotentialKind::SumOfSquares),
        RewardKind::AlphaMoment { alpha } => Some(PotentialKind::Alpha { alpha: *alpha }),
        RewardKind::Weighted { .. } => None,
    }
}

fn assumption_records(rep: &AssumptionReport) -> Vec<CheckRecord> {
    let has = |prefix: &str| rep.violations.iter().any(|v| v.starts_with(prefix));
    let gap_margin = (rep.r1 - rep.r1_fitted).min(rep.r2 - rep.r2_fitted);
    let mut out = vec![
        CheckRecord::outcome(
            "max-reward-at-zero",
            "the largest reward is finite and attained at the zero state",
            !has("maximum reward"),
            None,
            format!("c_max = {}, zero state {:?}", rep.c_max, rep.zero_state),
        ),
        CheckRecord::outcome(
            "reward-gap",
            "r_max(s) - r(s, a) <= R_1 (r_max(s) - c_max)^2 + R_2",
            !has("reward gap"),
            Some(gap_margin),
            format!("fitted R_1 = {}, R_2 = {}", rep.r1_fitted, rep.r2_fitted),
        ),
        CheckRecord::outcome(
            "reward-growth",
            "R_3 (r_max(s) - c_max) - (r_max(s') - c_max) <= R_4 for every possible transition",
            rep.growth.holds,
            Some(rep.growth.r4 - rep.growth.r4_fitted),
            format!(
                "R_3 = {}, R_4 = {}, tightest R_4 = {}, pairs = {}",
                rep.growth.r3, rep.growth.r4, rep.growth.r4_fitted, rep.growth.pairs_checked
            ),
        )
        .with_witness(Witness::state(&rep.growth.worst_pair.0)),
    ];
    out.push(match &rep.alpha_sweep {
        Some(sw) => CheckRecord::outcome(
            "alpha-growth-sweep",
            "(S + n')^alpha <= 2 S^alpha + R_4 for every integer S up to the sweep limit",
            sw.holds,
            Some(sw.worst_margin),
            format!("alpha = {}, n' = {}, R_4 = {}, worst at S = {}, S <= {}", sw.alpha, sw.n_prime, sw.r4, sw.worst_total, sw.max_total),
        ),
        None => CheckRecord::skipped(
            "alpha-growth-sweep",
            "(S + n')^alpha <= 2 S^alpha + R_4 for every integer S up to the sweep limit",
            "reward is not an alpha moment",
        ),
    });
    let c = &rep.connectivity;
    let exact_ok = c.p_z_exact.is_none_or(|e| c.p_z <= e * (1.0 + 1e-12));
    out.push(CheckRecord::outcome(
        "connectivity",
        "every high-reward pair is joined within x_z steps with probability at least p_z > 0",
        c.p_z > 0.0 && exact_ok && !has("connectivity"),
        c.p_z_exact.map(|e| e - c.p_z),
        format!(
            "z = {}, K = {}, x_z = {}, p_z = {}, exact minimum = {}",
            c.z,
            c.max_jobs,
            c.x_z,
            c.p_z,
            c.p_z_exact.map_or("not computed".to_string(), |e| e.to_string())
        ),
    ));
    out
}

fn drift_record(model: &GsseModel, radius: u32) -> (CheckRecord, Option<crate::gsse::DriftCertificate>) {
    let Some(kind) = potential_for(model.reward_kind()) else {
        return (CheckRecord::skipped(DRIFT.0, DRIFT.1, "no drift certificate for weighted rewards"), None);
    };
    let variant = matched_variant(model);
    let policy = |q: &[u32]| model.non_idling(q, maxweight_action(model, q, &variant));
    match drift_certificate(model, policy, kind, radius) {
        Ok(cert) => {
            let mut rec = CheckRecord::outcome(
                DRIFT.0,
                DRIFT.1,
                cert.max_violation <= 0.0,
                Some(-cert.max_violation),
                format!("c1 = {}, c2 = {}, states = {}, radius = {radius}", cert.c1, cert.c2, cert.states_checked),
            )
            .with_witness(Witness::state(&cert.worst_state));
            rec.evaluated = cert.states_checked;
            (rec, Some(cert))
        }
        Err(e) => (CheckRecord::outcome(DRIFT.0, DRIFT.1, false, None, e.to_string()), None),
    }
}

fn lyapunov_record(
    model: &GsseModel,
    mdp: &TruncatedMdp,
    cert: Option<&crate::gsse::DriftCertificate>,
) -> CheckRecord {
    let (name, property) = LATE_CHECKS[0];
    let Some(cert) = cert else {
        return CheckRecord::skipped(name, property, "no valid drift certificate");
    };
    if cert.max_violation > 0.0 {
        return CheckRecord::skipped(name, property, "drift certificate failed");
    }
    let actions = maxweight_actions(model, mdp, &matched_variant(model));
    let pi = TabularPolicy::deterministic(&actions, mdp.action_count());
    let ev = match evaluate_policy(mdp, &pi) {
        Ok(ev) => ev,
        Err(e) => return CheckRecord::outcome(name, property, false, None, e.to_string()),
    };
    match lyapunov_value_bound(mdp, &pi, cert, &ev) {
        Ok(b) => CheckRecord::outcome(
            name,
            property,
            true,
            Some(b.worst_margin),
            format!("c3 = {}, c4 = {}, threshold = {}", b.c3, b.c4, b.threshold),
        )
        .with_witness(Witness::state(&b.worst_state)),
        Err(Error::LyapunovViolated { state, margin }) => {
            CheckRecord::outcome(name, property, false, Some(margin), "").with_witness(Witness::state(mdp.label(crate::mdp::StateId(state))))
        }
        Err(e) => CheckRecord::outcome(name, property, false, None, e.to_string()),
    }
}

fn initial_fit_record(mdp: &TruncatedMdp, eval0: &EvalResult, ledger: &ConstantsLedger) -> CheckRecord {
    let (name, property) = LATE_CHECKS[1];
    let (c0, c1) = (ledger.get("c_0"), ledger.get("c_1"));
    let mut acc = Inequality::new(name, property, Slack::Relative(checks::REL_SLACK));
    for s in mdp.states().filter(|&s| !mdp.is_boundary(s)) {
        let r = mdp.r_hat_max(s);
        acc.at_least(eval0.value[s.0], -c0 * r * r - c1, || Witness::state(mdp.label(s)));
    }
    acc.finish(format!("c_0 = {c0}, c_1 = {c1}"))
}

fn regret_record(seed: u64, trials: usize) -> (CheckRecord, Option<SweepSummary>) {
    let (name, property) = LATE_CHECKS[3];
    if trials == 0 {
        return (CheckRecord::skipped(name, property, "no trials requested"), None);
    }
    let sweep = regret_sweep(trials, seed, 256, 5);
    let mut rec = CheckRecord::outcome(
        name,
        property,
        sweep.violations == 0,
        Some(1.0 - sweep.worst_ratio),
        format!("{} trials, {} violations, worst regret/bound = {}", sweep.trials, sweep.violations, sweep.worst_ratio),
    );
    rec.evaluated = trials;
    if let Some(i) = sweep.first_violation {
        rec.witness = Some(Witness::iteration(i));
    }
    (rec, Some(sweep))
}

/// Runs every check in a fixed order. Model construction errors propagate;
/// failures of individual checks are recorded in the report.
pub fn run_full_verification(cfg: &VerificationConfig) -> Result<VerificationReport> {
    cfg.validate()?;
    let model = &cfg.model;
    let mut report = VerificationReport {
        model: cfg.model_name.clone(),
        reward: model.reward_kind().clone(),
        init: cfg.init.name(),
        seed: cfg.seed,
        t_grid: cfg.t_grid.clone(),
        state_count: 0,
        action_count: model.option_count(),
        adequacy: None,
        optimal_reward: None,
        checks: Vec::new(),
        ledger: None,
        assumptions: None,
        initial_fit: None,
        rate: None,
        regret_sweep: None,
        passed: false,
    };

    let capacity = match capacity_margin(model) {
        Ok(c) => CheckRecord::outcome(
            CAPACITY.0,
            CAPACITY.1,
            true,
            Some(c.epsilon),
            format!("eps = {}, mixing weights {:?}", c.epsilon, c.gamma),
        ),
        Err(Error::Infeasible { epsilon }) => {
            CheckRecord::outcome(CAPACITY.0, CAPACITY.1, false, Some(epsilon), format!("eps = {epsilon}"))
        }
        Err(e) => return Err(e),
    };
    let feasible = !capacity.failed();
    report.checks.push(capacity);

    if !feasible {
        let reason = "capacity margin is not positive";
        let mut skipped = vec![
            ("max-reward-at-zero", ""),
            ("reward-gap", ""),
            ("reward-growth", ""),
            ("alpha-growth-sweep", ""),
            ("connectivity", ""),
            DRIFT,
        ];
        skipped.extend_from_slice(&LATE_CHECKS);
        skipped.extend_from_slice(&NPG_CHECKS);
        skipped.push(RATE);
        report.checks.extend(skip_all(&skipped, reason, false));
        report.passed = false;
        return Ok(report);
    }

    let prep = prepare(cfg)?;
    report.state_count = prep.mdp.state_count();
    report.optimal_reward = Some(prep.optimal_reward);
    report.checks.extend(assumption_records(&prep.fitted.assumptions));

    let (drift, cert) = drift_record(model, cfg.drift_radius);
    report.checks.push(drift);

    let adequate = prep.adequacy.adequate;
    let trunc_reason = format!(
        "{INCONCLUSIVE_TRUNCATION} (boundary mass {:e} at truncation {})",
        prep.adequacy.initial_boundary_mass, prep.adequacy.truncation
    );
    if adequate {
        report.checks.push(lyapunov_record(model, &prep.mdp, cert.as_ref()));
        report.checks.push(initial_fit_record(&prep.mdp, &prep.eval0, &prep.fitted.ledger));
    } else {
        report.checks.extend(skip_all(&LATE_CHECKS[..2], &trunc_reason, true));
    }

    let checked = *cfg.t_grid.last().expect("validated nonempty");
    let runs = if adequate { Some(run_grid(&prep, &cfg.t_grid, Some(checked), false)?) } else { None };
    let mut adequacy = prep.adequacy.clone();
    if let Some(runs) = &runs {
        let longest = runs.iter().find(|r| r.horizon == checked).expect("checked run present");
        let max_mass = longest.trace.records.iter().map(|r| r.boundary_mass).fold(0.0, f64::max);
        adequacy.max_iterate_boundary_mass = Some(max_mass);
        adequacy.adequate = max_mass < ADEQUACY_THRESHOLD;
    }
    let (name, property) = LATE_CHECKS[2];
    report.checks.push(if adequacy.adequate {
        CheckRecord::outcome(
            name,
            property,
            true,
            Some(ADEQUACY_THRESHOLD - adequacy.max_iterate_boundary_mass.unwrap_or(adequacy.initial_boundary_mass)),
            format!("truncation {} after {} doublings", adequacy.truncation, adequacy.doublings),
        )
    } else {
        CheckRecord::inconclusive(
            name,
            property,
            format!(
                "{INCONCLUSIVE_TRUNCATION}: boundary mass {:e} (initial) / {:?} (iterates) at truncation {}, cap {}",
                adequacy.initial_boundary_mass, adequacy.max_iterate_boundary_mass, adequacy.truncation, adequacy.truncation_cap
            ),
        )
    });
    let (regret, sweep) = regret_record(cfg.seed, cfg.regret_trials);
    report.checks.push(regret);
    report.regret_sweep = sweep;

    match runs {
        Some(runs) if adequacy.adequate => {
            let longest = runs.iter().find(|r| r.horizon == checked).expect("checked run present");
            let failure = runs.iter().find_map(|r| r.trace.failure.as_ref().map(|e| (r.horizon, e.to_string())));
            report.checks.push(match failure {
                None => CheckRecord::outcome(NPG_CHECKS[0].0, NPG_CHECKS[0].1, true, None, format!("horizons {:?}", cfg.t_grid)),
                Some((t, e)) => CheckRecord::outcome(NPG_CHECKS[0].0, NPG_CHECKS[0].1, false, None, format!("T = {t}: {e}")),
            });
            report.checks.extend(longest.checks.clone().expect("checks requested"));

            let traces: Vec<(usize, &NpgTrace)> = runs.iter().map(|r| (r.horizon, &r.trace)).collect();
            let (rate, fit) = check_convergence_rate(&traces, prep.optimal_reward, &prep.fitted.ledger);
            let mut mono = Inequality::new(NPG_CHECKS[11].0, NPG_CHECKS[11].1, Slack::Absolute(1e-10));
            for w in fit.points.windows(2) {
                mono.at_most(w[1].gap, w[0].gap, || Witness::iteration(w[1].horizon));
            }
            report.checks.push(mono.finish(""));
            report.checks.push(rate);
            report.rate = Some(fit);
        }
        _ => {
            let mut list = NPG_CHECKS.to_vec();
            list.push(RATE);
            report.checks.extend(skip_all(&list, &trunc_reason, true));
        }
    }

    report.adequacy = Some(adequacy);
    report.ledger = Some(prep.fitted.ledger.clone());
    report.assumptions = Some(prep.fitted.assumptions.clone());
    report.initial_fit = Some(prep.fitted.initial_fit);
    report.passed = !report.checks.iter().any(|c| c.failed());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsse::Preset;

    pub(crate) fn single_queue_config() -> VerificationConfig {
        VerificationConfig {
            model_name: "single-queue".into(),
            model: Preset::SingleQueue.build(RewardKind::MeanQueue).unwrap(),
            truncation: 30,
            truncation_cap: 30,
            t_grid: vec![4, 16],
            init: InitKind::Maxweight,
            init_mix: DEFAULT_INIT_MIX,
            z: None,
            exact_optimum_in_ledger: false,
            overrides: BTreeMap::new(),
            seed: 1,
            drift_radius: 30,
            regret_trials: 20,
        }
    }

    #[test]
    fn single_queue_passes() {
        let rep = run_full_verification(&single_queue_config()).unwrap();
        assert!(rep.passed, "{:#?}", rep.checks.iter().filter(|c| c.failed()).collect::<Vec<_>>());
        let mut names: Vec<&str> = rep.checks.iter().map(|c| c.name).collect();
        let total = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), total, "every check appears once");
    }

    #[test]
    fn infeasible_model_skips_downstream() {
        let mut cfg = single_queue_config();
        cfg.model = crate::gsse::presets::single_queue(0.7, 0.6, 0.2, RewardKind::MeanQueue).unwrap();
        let rep = run_full_verification(&cfg).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.checks[0].status, CheckStatus::Fail);
        assert!(rep.checks[1..].iter().all(|c| c.status == CheckStatus::Skipped && !c.detail.is_empty()));
    }

    #[test]
    fn collapsed_range_bound_is_caught() {
        let mut cfg = single_queue_config();
        for k in ["c_2", "c_3", "c_4"] {
            cfg.overrides.insert(k.into(), 0.0);
        }
        let rep = run_full_verification(&cfg).unwrap();
        let rec = rep.check("q-range-bound").unwrap();
        assert_eq!(rec.status, CheckStatus::Fail);
        assert!(rec.witness.as_ref().unwrap().state.is_some());
        assert!(rep.failed_checks().contains(&"q-range-bound"));
    }

    #[test]
    fn bad_grid_rejected() {
        let mut cfg = single_queue_config();
        cfg.t_grid = vec![16, 4];
        assert!(run_full_verification(&cfg).is_err());
    }
}
