//! Anchored linear systems for a fixed policy.
//!
//! With `P` the policy's transition matrix and `k` the anchor state, the matrix
//! `A` equals `I - P` except that column `k` is all ones. Then
//!
//! * `A x = r` gives the gain in `x[k]` and the relative value (with value 0 at
//!   `k`) in the remaining entries;
//! * `A^T d = e_k` gives the stationary distribution.
//!
//! `A` is nonsingular exactly when every state reaches `k`.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use super::{StateId, TabularPolicy, TruncatedMdp};
use crate::error::{Error, Result};

/// Row-major sparse matrix of the policy-induced chain.
#[derive(Debug, Clone)]
pub(crate) struct PolicyChain {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl PolicyChain {
    pub fn new(mdp: &TruncatedMdp, pi: &TabularPolicy) -> Self {
        let n = mdp.state_count();
        let mut acc = vec![0.0; n];
        let mut seen = vec![false; n];
        let mut touched = Vec::new();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for s in mdp.states() {
            for (a, &w) in pi.row(s).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let (succ, probs) = mdp.transitions(s, a);
                for (&t, &p) in succ.iter().zip(probs) {
                    if !seen[t] {
                        seen[t] = true;
                        touched.push(t);
                    }
                    acc[t] += w * p;
                }
            }
            touched.sort_unstable();
            for &t in &touched {
                cols.push(t);
                vals.push(acc[t]);
                acc[t] = 0.0;
                seen[t] = false;
            }
            touched.clear();
            row_ptr.push(cols.len());
        }
        PolicyChain { row_ptr, cols, vals }
    }

    pub fn state_count(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, s: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_ptr[s], self.row_ptr[s + 1]);
        (&self.cols[lo..hi], &self.vals[lo..hi])
    }

    /// `(P f)(s)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.state_count())
            .map(|s| {
                let (c, v) = self.row(s);
                c.iter().zip(v).map(|(&t, &p)| p * f[t]).sum()
            })
            .collect()
    }

    /// `(d P)(t)`.
    pub fn apply_left(&self, d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_count()];
        for (s, &ds) in d.iter().enumerate() {
            let (c, v) = self.row(s);
            for (&t, &p) in c.iter().zip(v) {
                out[t] += ds * p;
            }
        }
        out
    }

    /// First state (in index order) that cannot reach `target` along positive-probability edges.
    pub fn first_not_reaching(&self, target: usize) -> Option<usize> {
        let n = self.state_count();
        let mut rev_ptr = vec![0usize; n + 1];
        for &t in &self.cols {
            rev_ptr[t + 1] += 1;
        }
        for i in 0..n {
            rev_ptr[i + 1] += rev_ptr[i];
        }
        let mut fill = rev_ptr.clone();
        let mut rev = vec![0usize; self.cols.len()];
        for s in 0..n {
            let (c, v) = self.row(s);
            for (&t, &p) in c.iter().zip(v) {
                if p > 0.0 {
                    rev[fill[t]] = s;
                    fill[t] += 1;
                }
            }
        }
        let mut reached = vec![false; n];
        let mut stack = vec![target];
        reached[target] = true;
        while let Some(t) = stack.pop() {
            for &s in &rev[rev_ptr[t]..fill[t]] {
                if !reached[s] {
                    reached[s] = true;
                    stack.push(s);
                }
            }
        }
        reached.iter().position(|&r| !r)
    }
}

/// LU factorization of the anchored matrix, with residual-based refinement.
pub(crate) struct AnchoredSystem<'a> {
    chain: &'a PolicyChain,
    anchor: usize,
    lu: Lu<usize, f64>,
}

impl<'a> AnchoredSystem<'a> {
    pub fn new(chain: &'a PolicyChain, anchor: StateId) -> Result<Self> {
        let n = chain.state_count();
        let k = anchor.index();
        let mut triplets = Vec::with_capacity(chain.cols.len() + 2 * n);
        for s in 0..n {
            let (c, v) = chain.row(s);
            let mut diag = if s == k { 0.0 } else { 1.0 };
            for (&t, &p) in c.iter().zip(v) {
                if t == k {
                    continue;
                }
                if t == s {
                    diag -= p;
                } else {
                    triplets.push(Triplet::new(s, t, -p));
                }
            }
            if s != k {
                triplets.push(Triplet::new(s, s, diag));
            }
            triplets.push(Triplet::new(s, k, 1.0));
        }
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        let lu = a.sp_lu().map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        Ok(AnchoredSystem { chain, anchor: k, lu })
    }

    /// `A x`.
    fn multiply(&self, x: &[f64]) -> Vec<f64> {
        let k = self.anchor;
        let mut y: Vec<f64> = x.to_vec();
        y[k] = 0.0;
        let px = {
            let mut xs = x.to_vec();
            xs[k] = 0.0;
            self.chain.apply(&xs)
        };
        for s in 0..y.len() {
            y[s] = y[s] - px[s] + x[k];
        }
        y
    }

    /// `A^T y`.
    fn multiply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let k = self.anchor;
        let yp = self.chain.apply_left(y);
        let mut out: Vec<f64> = y.iter().zip(&yp).map(|(a, b)| a - b).collect();
        out[k] = y.iter().sum();
        out
    }

    fn raw_solve(&self, rhs: &[f64], transpose: bool) -> Vec<f64> {
        let mut m = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        if transpose {
            self.lu.solve_transpose_in_place(m.as_mut());
        } else {
            self.lu.solve_in_place(m.as_mut());
        }
        (0..rhs.len()).map(|i| m[(i, 0)]).collect()
    }

    fn refined(&self, rhs: &[f64], transpose: bool) -> Result<Vec<f64>> {
        let mut x = self.raw_solve(rhs, transpose);
        let ax = if transpose {
            self.multiply_transpose(&x)
        } else {
            self.multiply(&x)
        };
        let resid: Vec<f64> = rhs.iter().zip(&ax).map(|(b, y)| b - y).collect();
        let dx = self.raw_solve(&resid, transpose);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("non-finite solution".into()));
        }
        Ok(x)
    }

    /// Solves `A x = rhs` with one refinement step.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.refined(rhs, false)
    }

    /// Solves `A^T x = rhs` with one refinement step.
    pub fn solve_transpose(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.refined(rhs, true)
    }

    /// Stationary distribution of the chain.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let mut e = vec![0.0; self.chain.state_count()];
        e[self.anchor] = 1.0;
        self.solve_transpose(&e)
    }

    /// Gain and bias: returns `(gain, bias)` with `bias[anchor] = 0`.
    pub fn gain_bias(&self, reward: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut x = self.solve(reward)?;
        let gain = x[self.anchor];
        x[self.anchor] = 0.0;
        Ok((gain, x))
    }

    /// Expected steps to reach the anchor: zero at the anchor, and
    /// `h(s) = 1 + sum_{t != anchor} P(s,t) h(t)` elsewhere.
    pub fn hitting_times(&self) -> Result<Vec<f64>> {
        let n = self.chain.state_count();
        let k = self.anchor;
        let mut ones = vec![1.0; n];
        ones[k] = 0.0;
        let u = self.solve(&ones)?;
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        let w = self.solve(&e)?;
        // w[k] is the stationary mass of the anchor
        if !(w[k] > 0.0) {
            return Err(Error::LinearSolve("anchor has zero stationary mass".into()));
        }
        let scale = u[k] / w[k];
        let mut h: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a - scale * b).collect();
        h[k] = 0.0;
        // one refinement pass on the first-step system restricted to non-anchor states
        let ph = self.chain.apply(&h);
        let mut resid: Vec<f64> = (0..n).map(|s| 1.0 + ph[s] - h[s]).collect();
        resid[k] = 0.0;
        let du = self.solve(&resid)?;
        let dscale = du[k] / w[k];
        for s in 0..n {
            if s != k {
                h[s] += du[s] - dscale * w[s];
            }
        }
        Ok(h)
    }
}
