use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{MdpBuilder, StateId, Truncatable, TruncatedMdp};

/// Distributions given as `(value, probability)` pairs must sum to 1 within this.
pub const DISTRIBUTION_SUM_TOL: f64 = 1e-9;

/// Finitely supported distribution over nonnegative integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u32, f64)>", into = "Vec<(u32, f64)>")]
pub struct Distribution {
    /// Sorted by value, merged, positive probabilities only.
    support: Vec<(u32, f64)>,
}

impl TryFrom<Vec<(u32, f64)>> for Distribution {
    type Error = Error;
    fn try_from(pairs: Vec<(u32, f64)>) -> Result<Self> {
        Distribution::new(pairs)
    }
}

impl From<Distribution> for Vec<(u32, f64)> {
    fn from(d: Distribution) -> Self {
        d.support
    }
}

impl Distribution {
    pub fn new(mut pairs: Vec<(u32, f64)>) -> Result<Self> {
        if let Some(&(v, p)) = pairs.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidModel(format!("probability {p} for value {v} outside [0, 1]")));
        }
        pairs.sort_by_key(|&(v, _)| v);
        let mut support: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (v, p) in pairs {
            match support.last_mut() {
                Some(last) if last.0 == v => last.1 += p,
                _ => support.push((v, p)),
            }
        }
        support.retain(|&(_, p)| p > 0.0);
        let sum: f64 = support.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > DISTRIBUTION_SUM_TOL {
            return Err(Error::InvalidModel(format!("distribution sums to {sum}")));
        }
        Ok(Distribution { support })
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::new(vec![(0, 1.0 - p), (1, p)])
    }

    pub fn point(v: u32) -> Self {
        Distribution { support: vec![(v, 1.0)] }
    }

    pub fn support(&self) -> &[(u32, f64)] {
        &self.support
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().map(|&(v, p)| v as f64 * p).sum()
    }

    pub fn prob(&self, v: u32) -> f64 {
        self.support.iter().find(|&&(x, _)| x == v).map_or(0.0, |&(_, p)| p)
    }

    pub fn prob_at_least(&self, v: u32) -> f64 {
        self.support.iter().filter(|&&(x, _)| x >= v).map(|&(_, p)| p).sum()
    }

    pub fn max_value(&self) -> u32 {
        self.support.last().map_or(0, |&(v, _)| v)
    }

    /// Distribution of `max(q - w, 0) + v` with `w ~ self`, `v ~ arrivals`, optionally clipped at `cap`.
    pub fn next_queue(&self, arrivals: &Distribution, q: u32, cap: Option<u32>) -> Vec<(u32, f64)> {
        let mut out: Vec<(u32, f64)> = Vec::new();
        for &(w, pw) in &self.support {
            for &(v, pv) in &arrivals.support {
                let mut next = q.saturating_sub(w) + v;
                if let Some(c) = cap {
                    next = next.min(c);
                }
                match out.iter_mut().find(|(x, _)| *x == next) {
                    Some(e) => e.1 += pw * pv,
                    None => out.push((next, pw * pv)),
                }
            }
        }
        out.sort_by_key(|&(x, _)| x);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RewardKind {
    /// `-sum_i q_i`
    MeanQueue,
    /// `-sum_i c_i q_i`
    Weighted { weights: Vec<f64> },
    /// `-(sum_i q_i)^alpha`
    AlphaMoment { alpha: f64 },
}

impl RewardKind {
    pub fn reward(&self, q: &[u32]) -> f64 {
        match self {
            RewardKind::MeanQueue => 0.0 - q.iter().map(|&x| x as f64).sum::<f64>(),
            RewardKind::Weighted { weights } => 0.0 - q.iter().zip(weights).map(|(&x, c)| c * x as f64).sum::<f64>(),
            RewardKind::AlphaMoment { alpha } => 0.0 - q.iter().map(|&x| x as f64).sum::<f64>().powf(*alpha),
        }
    }
}

/// Generalized switch with a static environment: `n` job classes, `m` service options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GsseParams", into = "GsseParams")]
pub struct GsseModel {
    params: GsseParams,
    ell: u32,
    lambda: Vec<f64>,
    /// `mu[j][i]`: mean completions of class `i` under option `j`.
    mu: Vec<Vec<f64>>,
}

/// Raw, unvalidated model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsseParams {
    pub arrivals: Vec<Distribution>,
    /// `services[j][i]`: completions of class `i` under option `j`.
    pub services: Vec<Vec<Distribution>>,
    #[serde(default)]
    pub option_names: Vec<String>,
    pub reward: RewardKind,
}

impl TryFrom<GsseParams> for GsseModel {
    type Error = Error;
    fn try_from(p: GsseParams) -> Result<Self> {
        GsseModel::new(p)
    }
}

impl From<GsseModel> for GsseParams {
    fn from(m: GsseModel) -> Self {
        m.params
    }
}

impl GsseModel {
    pub fn new(mut params: GsseParams) -> Result<Self> {
        let n = params.arrivals.len();
        let m = params.services.len();
        if n == 0 || m == 0 {
            return Err(Error::InvalidModel("need at least one class and one option".into()));
        }
        for (j, row) in params.services.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidModel(format!("option {j} lists {} classes, expected {n}", row.len())));
            }
        }
        match &params.reward {
            RewardKind::Weighted { weights } => {
                if weights.len() != n || weights.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
                    return Err(Error::InvalidModel("weights must be positive, one per class".into()));
                }
            }
            RewardKind::AlphaMoment { alpha } => {
                if !(*alpha >= 1.0) || !alpha.is_finite() {
                    return Err(Error::InvalidModel(format!("alpha = {alpha} must be at least 1")));
                }
            }
            RewardKind::MeanQueue => {}
        }
        for (i, v) in params.arrivals.iter().enumerate() {
            if !(v.prob(0) > 0.0) {
                return Err(Error::InvalidModel(format!("class {i}: arrivals are never zero")));
            }
            if !(v.prob_at_least(1) > 0.0) {
                return Err(Error::InvalidModel(format!("class {i}: zero-probability arrival class")));
            }
            for (j, opt) in params.services.iter().enumerate() {
                let w = &opt[i];
                let exceeds: f64 = v.support().iter().map(|&(a, pa)| pa * w.prob_at_least(a + 1)).sum();
                let equals: f64 = v.support().iter().map(|&(a, pa)| pa * w.prob(a)).sum();
                if !(exceeds > 0.0) || !(equals > 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "class {i}, option {j}: completions must exceed and equal arrivals with positive probability"
                    )));
                }
            }
        }
        if params.option_names.is_empty() {
            params.option_names = (0..m).map(|j| format!("option-{j}")).collect();
        } else if params.option_names.len() != m {
            return Err(Error::InvalidModel("option_names length differs from option count".into()));
        }
        let ell = params
            .arrivals
            .iter()
            .chain(params.services.iter().flatten())
            .map(Distribution::max_value)
            .max()
            .unwrap_or(1)
            .max(1);
        let lambda = params.arrivals.iter().map(Distribution::mean).collect();
        let mu = params.services.iter().map(|row| row.iter().map(Distribution::mean).collect()).collect();
        Ok(GsseModel { params, ell, lambda, mu })
    }

    pub fn params(&self) -> &GsseParams {
        &self.params
    }

    pub fn class_count(&self) -> usize {
        self.params.arrivals.len()
    }

    pub fn option_count(&self) -> usize {
        self.params.services.len()
    }

    pub fn ell(&self) -> u32 {
        self.ell
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self, option: usize) -> &[f64] {
        &self.mu[option]
    }

    pub fn arrivals(&self, class: usize) -> &Distribution {
        &self.params.arrivals[class]
    }

    pub fn service(&self, option: usize, class: usize) -> &Distribution {
        &self.params.services[option][class]
    }

    pub fn reward_kind(&self) -> &RewardKind {
        &self.params.reward
    }

    pub fn reward(&self, q: &[u32]) -> f64 {
        self.params.reward.reward(q)
    }

    pub fn with_reward(&self, reward: RewardKind) -> Result<Self> {
        GsseModel::new(GsseParams { reward, ..self.params.clone() })
    }

    /// Whether `option` completes a job with positive probability at `q`.
    pub fn serves(&self, q: &[u32], option: usize) -> bool {
        q.iter().enumerate().any(|(i, &qi)| qi > 0 && self.service(option, i).prob_at_least(1) > 0.0)
    }

    /// Replaces an option that cannot complete any job at a nonempty state by the
    /// lowest-index option that can.
    pub fn non_idling(&self, q: &[u32], option: usize) -> usize {
        if q.iter().all(|&x| x == 0) || self.serves(q, option) {
            return option;
        }
        (0..self.option_count()).find(|&j| self.serves(q, j)).unwrap_or(option)
    }

    /// Per-class next-queue marginals, clipped at `cap` if given.
    fn marginals(&self, q: &[u32], option: usize, cap: Option<u32>) -> Vec<Vec<(u32, f64)>> {
        q.iter()
            .enumerate()
            .map(|(i, &qi)| self.service(option, i).next_queue(self.arrivals(i), qi, cap))
            .collect()
    }

    /// Truncates to per-class buffers of size `buffer`; arrivals beyond it are lost.
    pub fn truncate_to(&self, buffer: u32) -> Result<TruncatedMdp> {
        if buffer == 0 {
            return Err(Error::InvalidArgument("truncation bound must be at least 1".into()));
        }
        let n = self.class_count();
        let radix = buffer as usize + 1;
        let count = radix
            .checked_pow(n as u32)
            .filter(|&c| c <= 50_000_000)
            .ok_or_else(|| Error::InvalidArgument("truncated state space too large".into()))?;
        let mut builder = MdpBuilder::new(self.params.option_names.clone());
        let labels: Vec<Vec<u32>> = (0..count).map(|idx| decode(idx, n, buffer)).collect();
        for q in &labels {
            let boundary = (0..self.option_count()).any(|j| {
                q.iter().enumerate().any(|(i, &qi)| {
                    let w_min = self.service(j, i).support()[0].0;
                    qi.saturating_sub(w_min) + self.arrivals(i).max_value() > buffer
                })
            });
            builder.add_state(q.clone(), boundary);
        }
        for (idx, q) in labels.iter().enumerate() {
            let s = StateId(idx);
            let r = self.reward(q);
            for j in 0..self.option_count() {
                let row = product(&self.marginals(q, j, Some(buffer)))
                    .into_iter()
                    .map(|(next, p)| (StateId(encode(&next, buffer)), p))
                    .collect();
                builder.set_transition(s, j, row);
                builder.set_reward(s, j, r);
            }
        }
        builder.build(Some(StateId(0)))
    }
}

impl Truncatable for GsseModel {
    fn truncate(&self, bound: usize) -> Result<TruncatedMdp> {
        let b = u32::try_from(bound).map_err(|_| Error::InvalidArgument("truncation bound too large".into()))?;
        self.truncate_to(b)
    }
}

/// Mixed-radix index with class 0 least significant.
pub fn encode(q: &[u32], buffer: u32) -> usize {
    let radix = buffer as usize + 1;
    q.iter().rev().fold(0, |acc, &x| acc * radix + x as usize)
}

pub fn decode(mut idx: usize, n: usize, buffer: u32) -> Vec<u32> {
    let radix = buffer as usize + 1;
    (0..n)
        .map(|_| {
            let x = (idx % radix) as u32;
            idx /= radix;
            x
        })
        .collect()
}

/// Product of independent per-class marginals, in lexicographic order of class 0 fastest.
fn product(marginals: &[Vec<(u32, f64)>]) -> Vec<(Vec<u32>, f64)> {
    let mut out: Vec<(Vec<u32>, f64)> = vec![(Vec::with_capacity(marginals.len()), 1.0)];
    for m in marginals {
        let mut next = Vec::with_capacity(out.len() * m.len());
        for (v, pv) in &m[..] {
            for (prefix, p) in &out {
                let mut q = prefix.clone();
                q.push(*v);
                next.push((q, p * pv));
            }
        }
        out = next;
    }
    out
}

/// Exact distribution of the next state from `q` under `option`, without truncation.
pub fn gsse_transition(model: &GsseModel, q: &[u32], option: usize) -> Result<Vec<(Vec<u32>, f64)>> {
    if option >= model.option_count() {
        return Err(Error::InvalidArgument(format!("option {option} out of range")));
    }
    if q.len() != model.class_count() {
        return Err(Error::InvalidArgument(format!("state has {} classes, expected {}", q.len(), model.class_count())));
    }
    Ok(product(&model.marginals(q, option, None)))
}

/// All states with `sum_i q_i <= radius`, in graded lexicographic order.
pub fn states_within(n: usize, radius: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut q = vec![0u32; n];
    fn rec(i: usize, left: u32, q: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == q.len() {
            out.push(q.clone());
            return;
        }
        for x in 0..=left {
            q[i] = x;
            rec(i + 1, left - x, q, out);
        }
        q[i] = 0;
    }
    rec(0, radius, &mut q, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn single(p_arrival: f64, p_service: f64) -> GsseModel {
        GsseModel::new(GsseParams {
            arrivals: vec![Distribution::bernoulli(p_arrival).unwrap()],
            services: vec![vec![Distribution::bernoulli(p_service).unwrap()]],
            option_names: vec![],
            reward: RewardKind::MeanQueue,
        })
        .unwrap()
    }

    #[test]
    fn deterministic_step() {
        // deterministic distributions violate non-triviality, so check the kernel directly
        let w = Distribution::point(2);
        let v = Distribution::point(1);
        assert_eq!(w.next_queue(&v, 3, None), vec![(2, 1.0)]);
    }

    #[test]
    fn empty_queue_cannot_go_negative() {
        let m = single(0.3, 0.6);
        let t = gsse_transition(&m, &[0], 0).unwrap();
        let mut t = t;
        t.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].0, vec![0]);
        assert!((t[0].1 - 0.7).abs() < 1e-15);
        assert!((t[1].1 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn two_class_matches_joint_enumeration() {
        let m = GsseModel::new(GsseParams {
            arrivals: vec![Distribution::bernoulli(0.2).unwrap(), Distribution::bernoulli(0.4).unwrap()],
            services: vec![vec![Distribution::bernoulli(0.7).unwrap(), Distribution::bernoulli(0.1).unwrap()]],
            option_names: vec![],
            reward: RewardKind::MeanQueue,
        })
        .unwrap();
        let q = [2u32, 1];
        let t = gsse_transition(&m, &q, 0).unwrap();
        // brute force over the 2^4 joint outcomes (v1, v2, w1, w2)
        let (pv, pw) = ([0.2, 0.4], [0.7, 0.1]);
        let mut oracle: std::collections::BTreeMap<Vec<u32>, f64> = Default::default();
        for bits in 0..16u32 {
            let v = [bits & 1, (bits >> 1) & 1];
            let w = [(bits >> 2) & 1, (bits >> 3) & 1];
            let mut p = 1.0;
            let mut next = vec![0; 2];
            for i in 0..2 {
                p *= if v[i] == 1 { pv[i] } else { 1.0 - pv[i] };
                p *= if w[i] == 1 { pw[i] } else { 1.0 - pw[i] };
                next[i] = q[i].saturating_sub(w[i]) + v[i];
            }
            *oracle.entry(next).or_default() += p;
        }
        assert_eq!(t.len(), oracle.len());
        for (next, p) in t {
            assert!((oracle[&next] - p).abs() < 1e-15);
        }
    }

    #[test]
    fn single_queue_truncation_shape() {
        let mdp = single(0.3, 0.6).truncate_to(10).unwrap();
        assert_eq!(mdp.state_count(), 11);
        let flagged: Vec<usize> = mdp.states().filter(|&s| mdp.is_boundary(s)).map(|s| s.0).collect();
        assert_eq!(flagged, vec![10]);
        assert_eq!(mdp.zero_state(), StateId(0));
        assert_eq!(mdp.c_max(), 0.0);
    }

    #[test]
    fn non_triviality_enforced() {
        let bad = GsseParams {
            arrivals: vec![Distribution::point(0)],
            services: vec![vec![Distribution::bernoulli(0.5).unwrap()]],
            option_names: vec![],
            reward: RewardKind::MeanQueue,
        };
        assert!(GsseModel::new(bad).is_err());
        let bad = GsseParams {
            arrivals: vec![Distribution::bernoulli(0.5).unwrap()],
            services: vec![vec![Distribution::point(0)]],
            option_names: vec![],
            reward: RewardKind::MeanQueue,
        };
        assert!(GsseModel::new(bad).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(Distribution::new(vec![(0, 0.5), (1, 0.4)]).is_err());
        assert!(Distribution::new(vec![(0, 1.5), (1, -0.5)]).is_err());
        let d = Distribution::new(vec![(1, 0.25), (0, 0.5), (1, 0.25)]).unwrap();
        assert_eq!(d.support(), &[(0, 0.5), (1, 0.5)]);
    }

    #[test]
    fn index_round_trip() {
        for idx in 0..125 {
            assert_eq!(encode(&decode(idx, 3, 4), 4), idx);
        }
        assert_eq!(states_within(2, 2).len(), 6);
    }
}
