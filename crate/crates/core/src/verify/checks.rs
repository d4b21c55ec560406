//! Check records and the inequality accumulator behind them.

use serde::Serialize;

use crate::mdp::{EvalResult, StateId, TabularPolicy, TruncatedMdp};
use crate::npg::{kl_divergence, row_expectation, ConstantsLedger, LearningRateSchedule, NpgTrace};

/// Default relative slack of inequality checks.
pub const REL_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Witness {
    pub state: Option<Vec<u32>>,
    pub iteration: Option<usize>,
}

impl Witness {
    pub fn state(label: &[u32]) -> Self {
        Witness { state: Some(label.to_vec()), iteration: None }
    }

    pub fn at(label: &[u32], iteration: usize) -> Self {
        Witness { state: Some(label.to_vec()), iteration: Some(iteration) }
    }

    pub fn iteration(iteration: usize) -> Self {
        Witness { state: None, iteration: Some(iteration) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: &'static str,
    /// The inequality or property checked, in words.
    pub property: &'static str,
    pub status: CheckStatus,
    /// Worst `bound - value` (or `value - bound` for lower bounds); negative means violated.
    pub margin: Option<f64>,
    /// Where the worst margin occurred.
    pub witness: Option<Witness>,
    /// Number of individual inequalities evaluated.
    pub evaluated: usize,
    pub detail: String,
}

impl CheckRecord {
    pub fn skipped(name: &'static str, property: &'static str, reason: impl Into<String>) -> Self {
        CheckRecord {
            name,
            property,
            status: CheckStatus::Skipped,
            margin: None,
            witness: None,
            evaluated: 0,
            detail: reason.into(),
        }
    }

    pub fn inconclusive(name: &'static str, property: &'static str, reason: impl Into<String>) -> Self {
        CheckRecord { status: CheckStatus::Inconclusive, ..CheckRecord::skipped(name, property, reason) }
    }

    pub fn outcome(name: &'static str, property: &'static str, ok: bool, margin: Option<f64>, detail: impl Into<String>) -> Self {
        CheckRecord {
            name,
            property,
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            margin,
            witness: None,
            evaluated: 1,
            detail: detail.into(),
        }
    }

    pub fn with_witness(mut self, witness: Witness) -> Self {
        self.witness = Some(witness);
        self
    }

    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slack {
    /// `tol * (1 + |bound|)`
    Relative(f64),
    Absolute(f64),
}

impl Slack {
    fn allowed(self, bound: f64) -> f64 {
        match self {
            Slack::Relative(t) => t * (1.0 + bound.abs()),
            Slack::Absolute(t) => t,
        }
    }

    fn scaled(self, margin: f64, bound: f64) -> f64 {
        match self {
            Slack::Relative(_) => margin / (1.0 + bound.abs()),
            Slack::Absolute(_) => margin,
        }
    }
}

/// Accumulates one family of inequalities and keeps the worst instance.
#[derive(Debug, Clone)]
pub struct Inequality {
    name: &'static str,
    property: &'static str,
    slack: Slack,
    count: usize,
    failed: bool,
    worst: Option<(f64, f64, Witness)>,
}

impl Inequality {
    pub fn new(name: &'static str, property: &'static str, slack: Slack) -> Self {
        Inequality { name, property, slack, count: 0, failed: false, worst: None }
    }

    /// Records `value <= bound`.
    pub fn at_most(&mut self, value: f64, bound: f64, witness: impl FnOnce() -> Witness) {
        self.record(bound - value, bound, witness);
    }

    /// Records `value >= bound`.
    pub fn at_least(&mut self, value: f64, bound: f64, witness: impl FnOnce() -> Witness) {
        self.record(value - bound, bound, witness);
    }

    /// Records `|value - target| <= slack`.
    pub fn equal(&mut self, value: f64, target: f64, witness: impl FnOnce() -> Witness) {
        self.record(-(value - target).abs(), target, witness);
    }

    /// Records `|value - target| <= slack` with the slack scaled by `scale` instead of `target`.
    pub fn equal_scaled(&mut self, value: f64, target: f64, scale: f64, witness: impl FnOnce() -> Witness) {
        self.record(-(value - target).abs(), scale, witness);
    }

    fn record(&mut self, margin: f64, bound: f64, witness: impl FnOnce() -> Witness) {
        self.count += 1;
        // NaN margins count as violations
        let bad = !(margin >= -self.slack.allowed(bound));
        self.failed |= bad;
        let scaled = if margin.is_nan() { f64::NEG_INFINITY } else { self.slack.scaled(margin, bound) };
        if self.worst.as_ref().is_none_or(|w| scaled < w.0) {
            self.worst = Some((scaled, margin, witness()));
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self, detail: impl Into<String>) -> CheckRecord {
        if self.count == 0 {
            return CheckRecord::skipped(self.name, self.property, "no instances in scope");
        }
        let (margin, witness) = match self.worst {
            Some((_, m, w)) => (Some(m), Some(w)),
            None => (None, None),
        };
        CheckRecord {
            name: self.name,
            property: self.property,
            status: if self.failed { CheckStatus::Fail } else { CheckStatus::Pass },
            margin,
            witness,
            evaluated: self.count,
            detail: detail.into(),
        }
    }
}

pub const TAU_PROPERTY: &str = "expected hitting time of the zero state is at most tau_bound at every interior state with r_max >= z";

/// Adds the hitting-time inequalities of one evaluated policy. Returns `false`
/// and records nothing when `J < J_0`, the threshold the bound is stated for.
pub fn tau_bound_into(acc: &mut Inequality, mdp: &TruncatedMdp, eval: &EvalResult, ledger: &ConstantsLedger, iteration: usize) -> bool {
    let (y, z) = (ledger.get("J_0"), ledger.get("z"));
    if eval.average_reward < y - 1e-10 * (1.0 + y.abs()) {
        return false;
    }
    let bound = ledger.get("tau_bound");
    for s in mdp.states().filter(|&s| !mdp.is_boundary(s) && mdp.r_max(s) >= z) {
        acc.at_most(eval.hitting_time[s.0], bound, || Witness::at(mdp.label(s), iteration));
    }
    true
}

/// Hitting-time bound for a single evaluated policy.
pub fn check_tau_bound(mdp: &TruncatedMdp, _pi: &TabularPolicy, eval: &EvalResult, ledger: &ConstantsLedger) -> CheckRecord {
    let mut acc = Inequality::new("hitting-time-bound", TAU_PROPERTY, Slack::Relative(REL_SLACK));
    if ledger.get("J_0") - ledger.get("z") < 1e-6 {
        return CheckRecord::skipped(acc.name, acc.property, "J_0 - z below 1e-6; the bound is singular");
    }
    if !tau_bound_into(&mut acc, mdp, eval, ledger, 0) {
        return CheckRecord::skipped(
            acc.name,
            acc.property,
            format!("average reward {} is below J_0 = {}", eval.average_reward, ledger.get("J_0")),
        );
    }
    acc.finish(format!("tau_bound = {}", ledger.get("tau_bound")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub horizon: usize,
    pub gap: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub points: Vec<RatePoint>,
    /// `max_T gap * sqrt(T)`
    pub c_hat: f64,
    /// Least-squares slope of `ln gap` against `ln T` over positive gaps.
    pub exponent: Option<f64>,
}

pub fn fit_rate(points: &[(usize, f64)], c_star: f64) -> RateFit {
    let pts: Vec<RatePoint> = points
        .iter()
        .map(|&(t, gap)| RatePoint { horizon: t, gap, bound: c_star / (t as f64).sqrt() })
        .collect();
    let c_hat = pts.iter().map(|p| p.gap * (p.horizon as f64).sqrt()).fold(f64::NEG_INFINITY, f64::max);
    let logs: Vec<(f64, f64)> =
        pts.iter().filter(|p| p.gap > 0.0).map(|p| ((p.horizon as f64).ln(), p.gap.ln())).collect();
    let exponent = if logs.len() >= 2 {
        let n = logs.len() as f64;
        let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };
    RateFit { points: pts, c_hat, exponent }
}

pub const RATE_PROPERTY: &str = "J_star - J_T <= c_star / sqrt(T) at every horizon of the grid";

/// Final gaps of runs over a horizon grid against `c_star / sqrt(T)`.
pub fn check_convergence_rate(runs: &[(usize, &NpgTrace)], j_star: f64, ledger: &ConstantsLedger) -> (CheckRecord, RateFit) {
    let mut acc = Inequality::new("convergence-rate", RATE_PROPERTY, Slack::Relative(REL_SLACK));
    let mut points = Vec::new();
    let mut incomplete = Vec::new();
    for &(t, trace) in runs {
        match trace.final_average_reward() {
            Some(j) if trace.failure.is_none() && trace.records.len() == t + 1 => {
                let gap = j_star - j;
                acc.at_most(gap, ledger.c_star() / (t as f64).sqrt(), || Witness::iteration(t));
                points.push((t, gap));
            }
            _ if t == 0 => {}
            _ => incomplete.push(t),
        }
    }
    let fit = fit_rate(&points, ledger.c_star());
    let mut detail = format!("c_star = {}, fitted c_hat = {}", ledger.c_star(), fit.c_hat);
    if !incomplete.is_empty() {
        detail.push_str(&format!(", incomplete runs at T = {incomplete:?}"));
    }
    let mut rec = acc.finish(detail);
    if !incomplete.is_empty() {
        rec.status = CheckStatus::Fail;
    }
    (rec, fit)
}

/// Per-iteration inequalities of an NPG run, fed through the run's observer.
pub struct IterateChecks<'a> {
    mdp: &'a TruncatedMdp,
    ledger: &'a ConstantsLedger,
    schedule: &'a LearningRateSchedule,
    prev: Option<(TabularPolicy, EvalResult)>,
    first_value: Vec<f64>,
    /// Running `sum_k Q_k(s, a)` and `sum_k Q_k(s, pi_k)`.
    cumulative_q: Vec<f64>,
    cumulative_played: Vec<f64>,
    pub monotone: Inequality,
    pub q_improvement: Inequality,
    pub perf_diff: Inequality,
    pub rel_policy: Inequality,
    pub tau: Inequality,
    tau_skipped: Vec<usize>,
    pub lower: Inequality,
    pub upper: Inequality,
    pub range: Inequality,
    pub kl: Inequality,
}

impl<'a> IterateChecks<'a> {
    pub fn new(mdp: &'a TruncatedMdp, ledger: &'a ConstantsLedger, schedule: &'a LearningRateSchedule) -> Self {
        let n = mdp.state_count();
        let cells = n * mdp.action_count();
        IterateChecks {
            mdp,
            ledger,
            schedule,
            prev: None,
            first_value: Vec::new(),
            cumulative_q: vec![0.0; cells],
            cumulative_played: vec![0.0; n],
            monotone: Inequality::new("average-reward-monotone", "J_{k+1} >= J_k", Slack::Absolute(1e-10)),
            q_improvement: Inequality::new(
                "q-improvement",
                "Q_k(s, pi_{k+1}) >= V_k(s) at every interior state",
                Slack::Absolute(1e-9),
            ),
            perf_diff: Inequality::new(
                "performance-difference",
                "J_{k+1} - J_k = sum_s d_{k+1}(s) (Q_k(s, pi_{k+1}) - V_k(s))",
                Slack::Relative(REL_SLACK),
            ),
            rel_policy: Inequality::new(
                "relative-value-drop",
                "V_{k+1}(s) >= V_k(s) - tau_{k+1}(s) (J_{k+1} - J_k) at every interior state",
                Slack::Relative(REL_SLACK),
            ),
            tau: Inequality::new("hitting-time-bound", TAU_PROPERTY, Slack::Relative(REL_SLACK)),
            tau_skipped: Vec::new(),
            lower: Inequality::new(
                "value-lower-bound",
                "V_k(s) >= c_5_lemma V_0(s) - c_6_lemma at every interior state",
                Slack::Relative(1e-6),
            ),
            upper: Inequality::new(
                "value-upper-bound",
                "V_k(s) <= c_7_lemma at every interior state",
                Slack::Relative(1e-6),
            ),
            range: Inequality::new(
                "q-range-bound",
                "max_a Q_k(s, a) - min_a Q_k(s, a) <= M_s at every interior state",
                Slack::Relative(REL_SLACK),
            ),
            kl: Inequality::new(
                "kl-identity",
                "KL(pi_{k+1}(.|s) || pi_k(.|s)) + ln Z_{s,k} = ln(beta_s) Q_k(s, pi_{k+1})",
                Slack::Relative(1e-10),
            ),
        }
    }

    fn interior(&self) -> impl Iterator<Item = StateId> + 'a {
        let mdp = self.mdp;
        mdp.states().filter(move |&s| !mdp.is_boundary(s))
    }

    pub fn observe(&mut self, k: usize, pi: &TabularPolicy, ev: &EvalResult) {
        let mdp = self.mdp;
        let m = mdp.action_count();
        if k == 0 {
            self.first_value = ev.value.clone();
        }
        let (c5, c6, c7) = (self.ledger.get("c_5_lemma"), self.ledger.get("c_6_lemma"), self.ledger.get("c_7_lemma"));
        for s in self.interior() {
            let v = ev.value[s.0];
            let lower = c5 * self.first_value[s.0] - c6;
            self.lower.at_least(v, lower, || Witness::at(mdp.label(s), k));
            self.upper.at_most(v, c7, || Witness::at(mdp.label(s), k));
            let row = ev.q_row(s);
            let spread = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - row.iter().cloned().fold(f64::INFINITY, f64::min);
            self.range.at_most(spread, self.schedule.range_bound[s.0], || Witness::at(mdp.label(s), k));
        }
        if !tau_bound_into(&mut self.tau, mdp, ev, self.ledger, k) {
            self.tau_skipped.push(k);
        }
        if k < self.schedule.horizon {
            for s in mdp.states() {
                let row = ev.q_row(s);
                for a in 0..m {
                    self.cumulative_q[s.0 * m + a] += row[a];
                }
                self.cumulative_played[s.0] += row_expectation(pi.row(s), row);
            }
        }

        if let Some((prev_pi, prev)) = &self.prev {
            let dj = ev.average_reward - prev.average_reward;
            self.monotone.at_least(ev.average_reward, prev.average_reward, || Witness::iteration(k));
            let mut predicted = 0.0;
            for s in mdp.states() {
                let advantage = row_expectation(pi.row(s), prev.q_row(s)) - prev.value[s.0];
                predicted += ev.stationary[s.0] * advantage;
            }
            self.perf_diff.equal(dj, predicted, || Witness::iteration(k));
            for s in self.interior() {
                let improved = row_expectation(pi.row(s), prev.q_row(s));
                self.q_improvement.at_least(improved, prev.value[s.0], || Witness::at(mdp.label(s), k - 1));
                let floor = prev.value[s.0] - ev.hitting_time[s.0] * dj;
                self.rel_policy.at_least(ev.value[s.0], floor, || Witness::at(mdp.label(s), k));
                let ln_beta = self.schedule.beta[s.0].ln();
                let q_row = prev.q_row(s);
                let logits: Vec<f64> = prev_pi.row(s).iter().zip(q_row).map(|(p, q)| p.ln() + q * ln_beta).collect();
                let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ln_z = top + logits.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
                let kl = kl_divergence(pi.row(s), prev_pi.row(s));
                // both sides are assembled from terms of size |ln pi|, so that is the rounding scale
                let scale = logits.iter().fold(ln_z.abs(), |m, l| m.max(l.abs()));
                self.kl.equal_scaled(kl + ln_z, ln_beta * improved, scale, || Witness::at(mdp.label(s), k - 1));
            }
        }
        self.prev = Some((pi.clone(), ev.clone()));
    }

    /// All records in report order.
    pub fn finish(self) -> Vec<CheckRecord> {
        let mdp = self.mdp;
        let m = mdp.action_count();
        let horizon = self.schedule.horizon as f64;
        let a = m as f64;
        let mut regret = Inequality::new(
            "per-state-regret",
            "max_a sum_k Q_k(s, a) - sum_k Q_k(s, pi_k) <= sqrt(T M_s ln|A|) + log2(|A|)/2 at every interior state",
            Slack::Relative(REL_SLACK),
        );
        for s in mdp.states().filter(|&s| !mdp.is_boundary(s)) {
            let best = self.cumulative_q[s.0 * m..(s.0 + 1) * m].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let r = best - self.cumulative_played[s.0];
            let bound = (horizon * self.schedule.range_bound[s.0] * a.ln()).sqrt() + a.log2() / 2.0;
            regret.at_most(r, bound, || Witness::state(mdp.label(s)));
        }
        let tau_detail = if self.tau_skipped.is_empty() {
            format!("tau_bound = {}", self.ledger.get("tau_bound"))
        } else {
            format!(
                "tau_bound = {}; skipped iterations with J below J_0: {:?}",
                self.ledger.get("tau_bound"),
                self.tau_skipped
            )
        };
        let ledger = self.ledger;
        vec![
            self.monotone.finish(""),
            self.q_improvement.finish(""),
            self.perf_diff.finish(""),
            self.rel_policy.finish(""),
            self.tau.finish(tau_detail),
            self.lower.finish(format!("c_5_lemma = {}, c_6_lemma = {}", ledger.get("c_5_lemma"), ledger.get("c_6_lemma"))),
            self.upper.finish(format!("c_7_lemma = {}", ledger.get("c_7_lemma"))),
            self.range.finish(""),
            self.kl.finish(""),
            regret.finish(""),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inequality_tracks_worst() {
        let mut acc = Inequality::new("x", "x", Slack::Relative(1e-8));
        acc.at_most(1.0, 2.0, || Witness::iteration(0));
        acc.at_most(1.9, 2.0, || Witness::iteration(1));
        let r = acc.finish("");
        assert_eq!(r.status, CheckStatus::Pass);
        assert_eq!(r.witness.unwrap().iteration, Some(1));
        assert!((r.margin.unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn relative_slack_scales_with_bound() {
        let mut acc = Inequality::new("x", "x", Slack::Relative(1e-8));
        acc.at_most(1e6 + 1e-3, 1e6, Witness::default);
        assert_eq!(acc.clone().finish("").status, CheckStatus::Pass);
        acc.at_most(1.0 + 1e-6, 1.0, || Witness::iteration(3));
        let r = acc.finish("");
        assert_eq!(r.status, CheckStatus::Fail);
        assert_eq!(r.witness.unwrap().iteration, Some(3));
    }

    #[test]
    fn nan_is_a_violation() {
        let mut acc = Inequality::new("x", "x", Slack::Absolute(1.0));
        acc.at_least(f64::NAN, 0.0, Witness::default);
        assert_eq!(acc.finish("").status, CheckStatus::Fail);
    }

    #[test]
    fn empty_family_is_skipped() {
        let acc = Inequality::new("x", "x", Slack::Absolute(1.0));
        assert_eq!(acc.finish("").status, CheckStatus::Skipped);
    }

    #[test]
    fn rate_fit_slope() {
        let pts: Vec<(usize, f64)> = [16usize, 64, 256].iter().map(|&t| (t, 2.0 / (t as f64).sqrt())).collect();
        let fit = fit_rate(&pts, 3.0);
        assert!((fit.exponent.unwrap() + 0.5).abs() < 1e-12);
        assert!((fit.c_hat - 2.0).abs() < 1e-12);
        let fit = fit_rate(&[(16, 0.0), (64, 0.0)], 1.0);
        assert_eq!(fit.exponent, None);
    }
}
