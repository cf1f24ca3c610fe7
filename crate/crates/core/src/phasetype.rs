//! Discrete phase-type distributions and reward transformations.
//!
//! A distribution is given by an initial row vector `pi` over `p` transient
//! states and a sub-stochastic matrix `T`; the absorption time `tau` has
//! `P(tau = m) = pi T^{m-1} t` with exit vector `t = (I - T)e`. Rewards
//! `r >= 0` attached to states give `Y = sum_t r(X_t)`, whose moments are
//! expressed through the fundamental matrix `U = (I - T)^{-1}`.
//!
//! `T` is kept sparse. When it is strictly upper triangular (true for every
//! tier-ordered feed-forward chain) products with `U` are computed by
//! substitution instead of inversion.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kingman::TieredKernel;
use crate::linalg::{dot, CsrMatrix, Matrix};
use crate::scalar::Scalar;
use crate::statespace::StateSpace;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePhaseType<S> {
    pi: Vec<S>,
    t: CsrMatrix<S>,
    exit: Vec<S>,
    upper: bool,
}

impl<S: Scalar> DiscretePhaseType<S> {
    /// Validates `pi >= 0`, `sum(pi) <= 1`, `T >= 0` and row sums `<= 1`.
    pub fn new(pi: Vec<S>, t: CsrMatrix<S>) -> Result<Self> {
        let p = pi.len();
        if t.rows() != p || t.cols() != p {
            return Err(Error::invalid(format!("T must be {p}x{p}, got {}x{}", t.rows(), t.cols())));
        }
        let zero = S::zero();
        let tol = if S::EXACT { S::zero() } else { S::from_f64_lossy(1e-12) };
        let one_tol = S::one() + tol.clone();
        if pi.iter().any(|v| *v < zero.clone() - tol.clone()) {
            return Err(Error::invalid("initial vector has a negative entry"));
        }
        if pi.iter().cloned().fold(S::zero(), |a, b| a + b) > one_tol {
            return Err(Error::invalid("initial vector sums to more than one"));
        }
        let mut upper = true;
        for i in 0..p {
            for (j, v) in t.row(i) {
                if *v < zero {
                    return Err(Error::invalid(format!("T[{},{}] is negative", i + 1, j + 1)));
                }
                upper &= j > i;
            }
        }
        let sums = t.row_sums();
        if let Some(i) = sums.iter().position(|s| *s > one_tol) {
            return Err(Error::invalid(format!("row {} of T sums to more than one", i + 1)));
        }
        let exit = sums.into_iter().map(|s| S::one() - s).collect();
        Ok(DiscretePhaseType { pi, t, exit, upper })
    }

    pub fn from_dense(pi: Vec<S>, t: &Matrix<S>) -> Result<Self> {
        Self::new(pi, CsrMatrix::from_dense(t))
    }

    /// The absorption-time distribution of a tiered chain started in tier 0.
    pub fn from_kernel(kernel: &TieredKernel<S>) -> Self {
        let p = kernel.len();
        let mut rows: Vec<Vec<(usize, S)>> = Vec::with_capacity(p);
        for (k, b) in kernel.blocks().iter().enumerate() {
            let off = kernel.tier_offset(k + 1);
            for i in 0..b.probs.rows() {
                rows.push(b.probs.row(i).map(|(c, v)| (off + c, v.clone())).collect());
            }
        }
        rows.resize_with(p, Vec::new);
        Self::new(kernel.initial(), CsrMatrix::from_row_entries(p, rows)).expect("kernel rows are stochastic")
    }

    pub fn order(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &[S] {
        &self.pi
    }

    pub fn sub_transition(&self) -> &CsrMatrix<S> {
        &self.t
    }

    pub fn exit(&self) -> &[S] {
        &self.exit
    }

    /// Probability of starting directly in the absorbing state.
    pub fn atom_at_zero(&self) -> S {
        S::one() - self.pi.iter().cloned().fold(S::zero(), |a, b| a + b)
    }

    /// `P(tau = m)` for `m >= 1`.
    pub fn pmf(&self, m: usize) -> Result<S> {
        if m < 1 {
            return Err(Error::invalid("the absorption time is at least 1"));
        }
        let mut v = self.pi.clone();
        for _ in 1..m {
            v = self.t.left_mul(&v);
        }
        Ok(dot(&v, &self.exit))
    }

    /// `P(tau = m)` for `m = 1..=max_m`, sharing the vector iteration.
    pub fn pmf_table(&self, max_m: usize) -> Vec<S> {
        let mut v = self.pi.clone();
        let mut out = Vec::with_capacity(max_m);
        for m in 1..=max_m {
            out.push(dot(&v, &self.exit));
            if m < max_m {
                v = self.t.left_mul(&v);
            }
        }
        out
    }

    /// The whole law of `tau` as `(m, P(tau = m))` pairs with nonzero mass,
    /// iterating until the remaining mass vanishes (exactly for nilpotent
    /// `T`, or below `1e-15` in floating point). At most `cap` steps.
    pub fn distribution(&self, cap: usize) -> Vec<(usize, S)> {
        let mut v = self.pi.clone();
        let mut out = Vec::new();
        for m in 1..=cap {
            let p = dot(&v, &self.exit);
            if !p.is_zero() {
                out.push((m, p));
            }
            v = self.t.left_mul(&v);
            let rest = v.iter().fold(0.0, |a, b| a + b.magnitude());
            if v.iter().all(|x| x.is_zero()) || (!S::EXACT && rest < 1e-15) {
                break;
            }
        }
        out
    }

    /// `U = (I - T)^{-1}` by dense Gauss-Jordan elimination.
    pub fn fundamental_matrix(&self) -> Result<Matrix<S>> {
        let p = self.order();
        Matrix::identity(p).sub(&self.t.to_dense()).inverse()
    }

    /// `U` as the finite sum `I + T + ... + T^{k}` for nilpotent `T`; fails
    /// if `T^{p} != 0`.
    pub fn fundamental_matrix_nilpotent(&self) -> Result<Matrix<S>> {
        let p = self.order();
        let t = self.t.to_dense();
        let mut power = Matrix::identity(p);
        let mut sum = Matrix::identity(p);
        for _ in 0..p {
            power = power.mul(&t);
            if power.to_rows().iter().flatten().all(|v| v.is_zero()) {
                return Ok(sum);
            }
            sum = sum.add(&power);
        }
        Err(Error::Singular("T is not nilpotent".into()))
    }

    /// `U v`, the expected accumulated `v` before absorption from each state.
    pub fn apply_fundamental(&self, v: &[S]) -> Result<Vec<S>> {
        if self.upper {
            // a = v + T a, solved from the last state backwards.
            let mut a = v.to_vec();
            for i in (0..self.order()).rev() {
                let acc = self.t.row(i).fold(S::zero(), |acc, (j, p)| acc + p.clone() * a[j].clone());
                a[i] = a[i].clone() + acc;
            }
            Ok(a)
        } else {
            Ok(self.fundamental_matrix()?.right_mul(v))
        }
    }

    /// `w U` for a row vector `w`.
    pub fn apply_fundamental_left(&self, w: &[S]) -> Result<Vec<S>> {
        if self.upper {
            let mut out = w.to_vec();
            for i in 0..self.order() {
                if out[i].is_zero() {
                    continue;
                }
                let wi = out[i].clone();
                for (j, p) in self.t.row(i) {
                    out[j] = out[j].clone() + wi.clone() * p.clone();
                }
            }
            Ok(out)
        } else {
            Ok(self.fundamental_matrix()?.left_mul(w))
        }
    }

    /// Expected number of visits to each state, `pi U`.
    pub fn occupancy(&self) -> Result<Vec<S>> {
        self.apply_fundamental_left(&self.pi)
    }

    /// `E[tau (tau-1) ... (tau-k+1)] = k! pi T^{k-1} U^k e`.
    pub fn factorial_moment(&self, k: usize) -> Result<S> {
        if k < 1 {
            return Err(Error::invalid("factorial moments start at order 1"));
        }
        let mut v = vec![S::one(); self.order()];
        for _ in 0..k {
            v = self.apply_fundamental(&v)?;
        }
        for _ in 1..k {
            v = self.t.right_mul(&v);
        }
        let fact = (1..=k as u64).fold(S::one(), |a, b| a * S::from_u64(b));
        Ok(fact * dot(&self.pi, &v))
    }

    pub fn mean(&self) -> Result<S> {
        self.factorial_moment(1)
    }

    pub fn variance(&self) -> Result<S> {
        let m1 = self.factorial_moment(1)?;
        let m2 = self.factorial_moment(2)?;
        Ok(m2 + m1.clone() - m1.clone() * m1)
    }

    /// Mean and variance of `Y = sum_t r(X_t)`.
    pub fn reward_moments(&self, r: &[u32]) -> Result<(S, S)> {
        let (e, e2) = {
            let rs = self.lift(r)?;
            let w = self.occupancy()?;
            let a = self.apply_fundamental(&rs)?;
            let mean = dot(&w, &rs);
            let ra: Vec<S> = rs.iter().zip(&a).map(|(x, y)| x.clone() * y.clone()).collect();
            let rr: Vec<S> = rs.iter().map(|x| x.clone() * x.clone()).collect();
            let second = S::from_u64(2) * dot(&w, &ra) - dot(&w, &rr);
            (mean, second)
        };
        Ok((e.clone(), e2 - e.clone() * e))
    }

    /// `E[Y_j Y_k]` and `Cov(Y_j, Y_k)` for two reward vectors.
    pub fn cross_moment(&self, rj: &[u32], rk: &[u32]) -> Result<(S, S)> {
        let (means, second) = self.moment_matrices(&[rj.to_vec(), rk.to_vec()])?;
        let e = second[(0, 1)].clone();
        let cov = e.clone() - means[0].clone() * means[1].clone();
        Ok((e, cov))
    }

    /// Means and the covariance matrix of a family of rewards.
    pub fn covariance(&self, rewards: &[Vec<u32>]) -> Result<(Vec<S>, Matrix<S>)> {
        let (means, second) = self.moment_matrices(rewards)?;
        let m = rewards.len();
        let mut cov = Matrix::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                cov[(a, b)] = second[(a, b)].clone() - means[a].clone() * means[b].clone();
            }
        }
        Ok((means, cov))
    }

    /// Means and raw second moments `E[Y_a Y_b]`, using
    /// `E[Y_a Y_b] = w.(r_a * U r_b) + w.(r_b * U r_a) - w.(r_a * r_b)` with `w = pi U`.
    fn moment_matrices(&self, rewards: &[Vec<u32>]) -> Result<(Vec<S>, Matrix<S>)> {
        let w = self.occupancy()?;
        let lifted: Vec<Vec<S>> = rewards.iter().map(|r| self.lift(r)).collect::<Result<_>>()?;
        let applied: Vec<Vec<S>> = lifted.iter().map(|r| self.apply_fundamental(r)).collect::<Result<_>>()?;
        let means: Vec<S> = lifted.iter().map(|r| dot(&w, r)).collect();
        let m = rewards.len();
        let weighted_dot = |x: &[S], y: &[S]| {
            w.iter()
                .zip(x.iter().zip(y))
                .filter(|(wi, (a, b))| !wi.is_zero() && !a.is_zero() && !b.is_zero())
                .fold(S::zero(), |acc, (wi, (a, b))| acc + wi.clone() * a.clone() * b.clone())
        };
        let mut second = Matrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let v = weighted_dot(&lifted[a], &applied[b]) + weighted_dot(&lifted[b], &applied[a])
                    - weighted_dot(&lifted[a], &lifted[b]);
                second[(a, b)] = v.clone();
                second[(b, a)] = v;
            }
        }
        Ok((means, second))
    }

    /// The same distribution in floating point.
    pub fn map_f64(&self) -> DiscretePhaseType<f64> {
        DiscretePhaseType {
            pi: self.pi.iter().map(S::to_f64).collect(),
            t: self.t.map(S::to_f64),
            exit: self.exit.iter().map(S::to_f64).collect(),
            upper: self.upper,
        }
    }

    fn lift(&self, r: &[u32]) -> Result<Vec<S>> {
        if r.len() != self.order() {
            return Err(Error::invalid(format!("reward has length {}, expected {}", r.len(), self.order())));
        }
        Ok(r.iter().map(|&v| S::from_u64(v as u64)).collect())
    }

    /// Representation of `Y = sum_t r(X_t)` as the absorption time of a new
    /// chain: a state with reward `r(j) > 0` becomes `r(j)` sub-states in
    /// series, and zero-reward states are censored by routing their mass to
    /// the first positive-reward state hit. Mass that reaches absorption
    /// without earning reward is left as an atom at zero (initial vector
    /// summing to less than one).
    pub fn reward_transform(&self, r: &[u32]) -> Result<Self> {
        let p = self.order();
        if r.len() != p {
            return Err(Error::invalid(format!("reward has length {}, expected {p}", r.len())));
        }
        let positive: Vec<usize> = (0..p).filter(|&i| r[i] > 0).collect();
        let mut pos_index = vec![usize::MAX; p];
        for (k, &i) in positive.iter().enumerate() {
            pos_index[i] = k;
        }
        // h[z]: distribution of the first positive-reward state reached from zero state z.
        let h = self.first_positive_hits(r, &pos_index)?;
        let route = |row: &mut BTreeMap<usize, S>, j: usize, w: &S| {
            if r[j] > 0 {
                let e = row.entry(pos_index[j]).or_insert_with(S::zero);
                *e = e.clone() + w.clone();
            } else {
                for (k, v) in &h[j] {
                    let e = row.entry(*k).or_insert_with(S::zero);
                    *e = e.clone() + w.clone() * v.clone();
                }
            }
        };

        let mut start = vec![0usize; positive.len() + 1];
        for (k, &i) in positive.iter().enumerate() {
            start[k + 1] = start[k] + r[i] as usize;
        }
        let order = start[positive.len()];
        let mut pi_row: BTreeMap<usize, S> = BTreeMap::new();
        for (j, w) in self.pi.iter().enumerate() {
            if !w.is_zero() {
                route(&mut pi_row, j, w);
            }
        }
        let mut pi = vec![S::zero(); order];
        for (k, v) in pi_row {
            pi[start[k]] = v;
        }
        if pi.iter().all(|v| v.is_zero()) {
            return Err(Error::DegenerateReward);
        }
        let mut rows: Vec<Vec<(usize, S)>> = Vec::with_capacity(order);
        for (k, &i) in positive.iter().enumerate() {
            for _ in 1..r[i] {
                rows.push(vec![(rows.len() + 1, S::one())]);
            }
            let mut row: BTreeMap<usize, S> = BTreeMap::new();
            for (j, w) in self.t.row(i) {
                route(&mut row, j, w);
            }
            debug_assert_eq!(rows.len(), start[k + 1] - 1);
            rows.push(row.into_iter().map(|(kk, v)| (start[kk], v)).collect());
        }
        Self::new(pi, CsrMatrix::from_row_entries(order, rows))
    }

    fn first_positive_hits(&self, r: &[u32], pos_index: &[usize]) -> Result<Vec<BTreeMap<usize, S>>> {
        let p = self.order();
        let mut h: Vec<BTreeMap<usize, S>> = vec![BTreeMap::new(); p];
        let zeros: Vec<usize> = (0..p).filter(|&i| r[i] == 0).collect();
        if self.upper {
            for &z in zeros.iter().rev() {
                let mut acc: BTreeMap<usize, S> = BTreeMap::new();
                for (j, w) in self.t.row(z) {
                    if r[j] > 0 {
                        let e = acc.entry(pos_index[j]).or_insert_with(S::zero);
                        *e = e.clone() + w.clone();
                    } else {
                        for (k, v) in &h[j] {
                            let e = acc.entry(*k).or_insert_with(S::zero);
                            *e = e.clone() + w.clone() * v.clone();
                        }
                    }
                }
                h[z] = acc;
            }
        } else if !zeros.is_empty() {
            let nz = zeros.len();
            let mut zpos = vec![usize::MAX; p];
            for (a, &z) in zeros.iter().enumerate() {
                zpos[z] = a;
            }
            let mut a_mat = Matrix::<S>::identity(nz);
            for (a, &z) in zeros.iter().enumerate() {
                for (j, w) in self.t.row(z) {
                    if r[j] == 0 {
                        a_mat[(a, zpos[j])] = a_mat[(a, zpos[j])].clone() - w.clone();
                    }
                }
            }
            let inv = a_mat.inverse()?;
            for (a, &z) in zeros.iter().enumerate() {
                let mut acc: BTreeMap<usize, S> = BTreeMap::new();
                for (b, &z2) in zeros.iter().enumerate() {
                    let g = &inv[(a, b)];
                    if g.is_zero() {
                        continue;
                    }
                    for (j, w) in self.t.row(z2) {
                        if r[j] > 0 {
                            let e = acc.entry(pos_index[j]).or_insert_with(S::zero);
                            *e = e.clone() + g.clone() * w.clone();
                        }
                    }
                }
                h[z] = acc;
            }
        }
        Ok(h)
    }
}

/// Named reward vectors over the states of a ranked-coalescent space.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardMatrix {
    pub names: Vec<String>,
    /// One vector per name, each of length `|X_n| - 1`.
    pub columns: Vec<Vec<u32>>,
}

/// `r_S(x) = sum_{j = n+1-t}^{n-1} x_j`: the part of column `n-1-t` lying in
/// non-fixed rows.
pub fn reward_s(space: &StateSpace) -> Vec<u32> {
    let n = space.n();
    space
        .states()
        .map(|s| {
            let from = (n + 1).saturating_sub(s.tier).max(1);
            (from..n).map(|j| s.x[j - 1] as u32).sum()
        })
        .collect()
}

/// `r_E(x) = x_{n-1}`, the external lineages.
pub fn reward_e(space: &StateSpace) -> Vec<u32> {
    space.states().map(|s| s.external() as u32).collect()
}

/// Reward for the non-fixed entry `F_ij`: `x_i` on the tier filling column
/// `j` (tier `n-1-j`), zero elsewhere.
pub fn reward_f(space: &StateSpace, i: usize, j: usize) -> Vec<u32> {
    let tier = space.n() - 1 - j;
    space.states().map(|s| if s.tier == tier { s.x[i - 1] as u32 } else { 0 }).collect()
}

/// `r_S`, `r_E` and every non-fixed `r_ij` in row-wise order. Memory is
/// `O(n^2 Fib(n))`; use [`crate::feedforward`] for large `n`.
pub fn build_rewards(space: &StateSpace) -> Result<RewardMatrix> {
    let n = space.n();
    if n < 4 {
        return Err(Error::invalid("non-fixed entries exist only for n >= 4"));
    }
    let mut names = vec!["S".to_string(), "E".to_string()];
    let mut columns = vec![reward_s(space), reward_e(space)];
    for (i, j) in crate::fmatrix::nonfixed_positions(n) {
        names.push(format!("F{i},{j}"));
        columns.push(reward_f(space, i, j));
    }
    Ok(RewardMatrix { names, columns })
}
