//! Dense reference computations shared by the integration tests. Everything here
//! is deliberately naive: dense matrices and Gaussian elimination.

#![allow(dead_code)]

use npg_core::mdp::{MdpBuilder, StateId, TabularPolicy, TruncatedMdp};
use rand::Rng;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        assert!(d.abs() > 1e-300, "singular system");
        for row in col + 1..n {
            let f = a[row][col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Dense `P_pi` and `r_pi`.
pub fn policy_matrix(mdp: &TruncatedMdp, pi: &TabularPolicy) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = mdp.state_count();
    let mut p = vec![vec![0.0; n]; n];
    let mut r = vec![0.0; n];
    for s in mdp.states() {
        for a in 0..mdp.action_count() {
            let w = pi.prob(s, a);
            r[s.0] += w * mdp.reward(s, a);
            let (cols, probs) = mdp.transitions(s, a);
            for (&c, &q) in cols.iter().zip(probs) {
                p[s.0][c] += w * q;
            }
        }
    }
    (p, r)
}

pub struct DenseEval {
    pub gain: f64,
    pub stationary: Vec<f64>,
    /// Relative value pinned to zero at `anchor`.
    pub value: Vec<f64>,
    /// Expected steps to reach `anchor`.
    pub hitting: Vec<f64>,
}

pub fn dense_eval(mdp: &TruncatedMdp, pi: &TabularPolicy, anchor: usize) -> DenseEval {
    let n = mdp.state_count();
    let (p, r) = policy_matrix(mdp, pi);
    // d (I - P) = 0 with the anchor column replaced by normalisation
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[j][i] = if i == j { 1.0 } else { 0.0 } - p[i][j];
        }
    }
    a[anchor] = vec![1.0; n];
    let mut b = vec![0.0; n];
    b[anchor] = 1.0;
    let stationary = dense_solve(a, b);
    let gain: f64 = stationary.iter().zip(&r).map(|(d, x)| d * x).sum();

    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j { 1.0 } else { 0.0 } - p[i][j];
        }
    }
    let mut rhs: Vec<f64> = r.iter().map(|x| x - gain).collect();
    a[anchor] = vec![0.0; n];
    a[anchor][anchor] = 1.0;
    rhs[anchor] = 0.0;
    let value = dense_solve(a, rhs);

    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j { 1.0 } else { 0.0 } - if j == anchor { 0.0 } else { p[i][j] };
        }
    }
    let mut rhs = vec![1.0; n];
    a[anchor] = vec![0.0; n];
    a[anchor][anchor] = 1.0;
    rhs[anchor] = 0.0;
    let hitting = dense_solve(a, rhs);
    DenseEval { gain, stationary, value, hitting }
}

/// `r(s, a) + sum_s' P(s'|s, a) v(s') - gain`
pub fn q_from_values(mdp: &TruncatedMdp, value: &[f64], gain: f64, s: StateId, a: usize) -> f64 {
    let (cols, probs) = mdp.transitions(s, a);
    mdp.reward(s, a) - gain + cols.iter().zip(probs).map(|(&c, &q)| q * value[c]).sum::<f64>()
}

/// Random unichain MDP: every action keeps a positive chance of jumping to
/// state 0, which carries the largest reward.
pub fn random_mdp(rng: &mut impl Rng, states: usize, actions: usize) -> TruncatedMdp {
    let mut b = MdpBuilder::with_action_count(actions);
    let ids: Vec<StateId> = (0..states).map(|i| b.add_state(vec![i as u32], false)).collect();
    for &s in &ids {
        for a in 0..actions {
            let k = rng.random_range(1..=states.min(4));
            let mut row: Vec<(StateId, f64)> = vec![(ids[0], rng.random_range(0.05..1.0))];
            for _ in 0..k {
                row.push((ids[rng.random_range(0..states)], rng.random_range(0.0..1.0)));
            }
            let total: f64 = row.iter().map(|x| x.1).sum();
            let mut merged: Vec<(StateId, f64)> = Vec::new();
            for (t, w) in row {
                match merged.iter_mut().find(|(u, _)| *u == t) {
                    Some(e) => e.1 += w / total,
                    None => merged.push((t, w / total)),
                }
            }
            for e in &mut merged {
                e.1 = e.1.min(1.0);
            }
            b.set_transition(s, a, merged);
            let r = if s.0 == 0 { 0.0 } else { -rng.random_range(0.01..5.0) };
            b.set_reward(s, a, r);
        }
    }
    b.build(Some(ids[0])).expect("valid random MDP")
}

/// Random policy whose probabilities are bounded away from zero through `floor`.
pub fn random_policy(rng: &mut impl Rng, states: usize, actions: usize, floor: f64) -> TabularPolicy {
    let rows = (0..states)
        .map(|_| {
            let raw: Vec<f64> = (0..actions).map(|_| floor + rng.random_range(0.0..1.0)).collect();
            let t: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / t).collect()
        })
        .collect();
    TabularPolicy::from_rows(rows).unwrap()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

pub fn workspace_root() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}
