//! Largest slack `eps` with `(1 + eps) lambda` inside the convex hull of the
//! service-rate vectors.
//!
//! The program is: maximize `t` subject to `t lambda_i <= sum_j gamma_j mu_i^j`,
//! `sum_j gamma_j = 1`, `gamma >= 0`. It is solved by enumerating vertices when
//! the number of candidate bases is small, and by a dense simplex otherwise.

use serde::Serialize;

use super::model::GsseModel;
use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-12;
const MAX_BASES: u128 = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityMargin {
    pub epsilon: f64,
    /// Mixing weights over service options.
    pub gamma: Vec<f64>,
}

pub fn capacity_margin(model: &GsseModel) -> Result<CapacityMargin> {
    let lambda = model.lambda().to_vec();
    let mu: Vec<Vec<f64>> = (0..model.option_count()).map(|j| model.mu(j).to_vec()).collect();
    margin_from_rates(&lambda, &mu)
}

/// `mu[j][i]` is the rate of class `i` under option `j`.
pub fn margin_from_rates(lambda: &[f64], mu: &[Vec<f64>]) -> Result<CapacityMargin> {
    if lambda.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidModel("arrival rates must be positive".into()));
    }
    let n = lambda.len();
    let m = mu.len();
    let (t, gamma) = if binomial(n + m, m) <= MAX_BASES {
        vertex_enumeration(lambda, mu)
    } else {
        simplex(lambda, mu)
    };
    let epsilon = t - 1.0;
    if !(epsilon > 0.0) {
        return Err(Error::Infeasible { epsilon });
    }
    Ok(CapacityMargin { epsilon, gamma })
}

/// `min_i (sum_j gamma_j mu_i^j) / lambda_i`
pub fn coverage(lambda: &[f64], mu: &[Vec<f64>], gamma: &[f64]) -> f64 {
    (0..lambda.len())
        .map(|i| gamma.iter().zip(mu).map(|(g, row)| g * row[i]).sum::<f64>() / lambda[i])
        .fold(f64::INFINITY, f64::min)
}

fn binomial(n: usize, k: usize) -> u128 {
    let mut r: u128 = 1;
    for i in 0..k.min(n - k) {
        r = r * (n - i) as u128 / (i + 1) as u128;
        if r > MAX_BASES * 1000 {
            return r;
        }
    }
    r
}

/// Every vertex of the feasible polytope in `(gamma, t)` space has `m` tight
/// inequalities among the `n + m` available (plus the equality).
fn vertex_enumeration(lambda: &[f64], mu: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let n = lambda.len();
    let m = mu.len();
    let dim = m + 1;
    let mut best_t = f64::NEG_INFINITY;
    let mut best_gamma = vec![1.0 / m as f64; m];
    let mut chosen: Vec<usize> = (0..m).collect();
    loop {
        // rows: tight constraints, then sum(gamma) = 1
        let mut a = vec![vec![0.0; dim + 1]; dim];
        for (r, &c) in chosen.iter().enumerate() {
            if c < n {
                for j in 0..m {
                    a[r][j] = mu[j][c];
                }
                a[r][m] = -lambda[c];
            } else {
                a[r][c - n] = 1.0;
            }
        }
        for j in 0..m {
            a[m][j] = 1.0;
        }
        a[m][dim] = 1.0;
        if let Some(x) = solve_dense(a) {
            let (gamma, t) = (&x[..m], x[m]);
            let feasible = gamma.iter().all(|&g| g >= -FEAS_TOL)
                && (0..n).all(|i| {
                    let served: f64 = gamma.iter().zip(mu).map(|(g, row)| g * row[i]).sum();
                    t * lambda[i] <= served + FEAS_TOL
                });
            if feasible && t > best_t + FEAS_TOL {
                best_t = t;
                best_gamma = gamma.iter().map(|g| g.max(0.0)).collect();
                let s: f64 = best_gamma.iter().sum();
                best_gamma.iter_mut().for_each(|g| *g /= s);
            }
        }
        if !next_combination(&mut chosen, n + m) {
            break;
        }
    }
    // report the slack actually achieved by the normalized weights
    let t = coverage(lambda, mu, &best_gamma);
    (t, best_gamma)
}

fn next_combination(c: &mut [usize], total: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < total - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve_dense(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (a[r][n] - s) / a[r][r];
    }
    Some(x)
}

/// Dense tableau simplex with Bland's rule on the relaxed program
/// `max t` s.t. `t lambda_i - sum_j gamma_j mu_i^j <= 0`, `sum_j gamma_j <= 1`,
/// `gamma, t >= 0`. The origin is feasible, so no phase one is needed.
fn simplex(lambda: &[f64], mu: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let n = lambda.len();
    let m = mu.len();
    let vars = m + 1;
    let rows = n + 1;
    let width = vars + rows + 1;
    let mut tab = vec![vec![0.0; width]; rows];
    for i in 0..n {
        for j in 0..m {
            tab[i][j] = -mu[j][i];
        }
        tab[i][m] = lambda[i];
        tab[i][vars + i] = 1.0;
    }
    for j in 0..m {
        tab[n][j] = 1.0;
    }
    tab[n][vars + n] = 1.0;
    tab[n][width - 1] = 1.0;
    let mut cost = vec![0.0; width - 1];
    cost[m] = 1.0;
    let mut basis: Vec<usize> = (vars..vars + rows).collect();
    const EPS: f64 = 1e-13;
    loop {
        let Some(enter) = (0..width - 1).find(|&c| cost[c] > EPS) else { break };
        let mut leave: Option<usize> = None;
        for r in 0..rows {
            if tab[r][enter] > EPS {
                let ratio = tab[r][width - 1] / tab[r][enter];
                let better = match leave {
                    None => true,
                    Some(l) => {
                        let best = tab[l][width - 1] / tab[l][enter];
                        ratio < best - EPS || (ratio <= best + EPS && basis[r] < basis[l])
                    }
                };
                if better {
                    leave = Some(r);
                }
            }
        }
        // bounded because sum(gamma) <= 1 caps every service rate
        let Some(l) = leave else { break };
        let piv = tab[l][enter];
        tab[l].iter_mut().for_each(|x| *x /= piv);
        for r in 0..rows {
            if r != l && tab[r][enter] != 0.0 {
                let f = tab[r][enter];
                for c in 0..width {
                    tab[r][c] -= f * tab[l][c];
                }
            }
        }
        let f = cost[enter];
        for c in 0..width - 1 {
            cost[c] -= f * tab[l][c];
        }
        basis[l] = enter;
    }
    let mut gamma = vec![0.0; m];
    for (r, &b) in basis.iter().enumerate() {
        if b < m {
            gamma[b] = tab[r][width - 1].max(0.0);
        }
    }
    let total: f64 = gamma.iter().sum();
    if total > 0.0 {
        gamma.iter_mut().for_each(|g| *g /= total);
    } else {
        gamma = vec![1.0 / m as f64; m];
    }
    (coverage(lambda, mu, &gamma), gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_oracle(lambda: &[f64], mu: &[Vec<f64>]) -> f64 {
        (0..=10_000)
            .map(|k| {
                let g = k as f64 / 10_000.0;
                coverage(lambda, mu, &[g, 1.0 - g])
            })
            .fold(f64::NEG_INFINITY, f64::max)
            - 1.0
    }

    #[test]
    fn symmetric_two_class() {
        let mu = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let c = margin_from_rates(&[0.3, 0.3], &mu).unwrap();
        assert!((c.epsilon - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.gamma[0] - 0.5).abs() < 1e-12);
        assert!((c.epsilon - grid_oracle(&[0.3, 0.3], &mu)).abs() < 1e-4);
    }

    #[test]
    fn boundary_is_infeasible() {
        let mu = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(margin_from_rates(&[0.5, 0.5], &mu), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn single_option() {
        let c = margin_from_rates(&[0.3], &[vec![0.6]]).unwrap();
        assert!((c.epsilon - 1.0).abs() < 1e-12);
        assert_eq!(c.gamma, vec![1.0]);
    }

    #[test]
    fn simplex_agrees_with_vertices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(1..5);
            let m = rng.random_range(1..7);
            let mu: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
            let lambda: Vec<f64> = (0..n).map(|_| 0.01 + 0.2 * rng.random::<f64>()).collect();
            let (t1, _) = vertex_enumeration(&lambda, &mu);
            let (t2, _) = simplex(&lambda, &mu);
            assert!((t1 - t2).abs() < 1e-9 * (1.0 + t1.abs()), "{t1} vs {t2}");
        }
    }
}
