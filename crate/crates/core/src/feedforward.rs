//! Tier-by-tier moment computations for feed-forward chains.
//!
//! Because the chain moves from tier `k` to tier `k+1` at every step,
//! `pi T^k` lives on tier `k` and `T^k v` for `v` supported on tier `s`
//! lives on tier `s-k`. The non-fixed entry `F_ij` is the reward `x_i`
//! collected on the single tier `s = n-1-j`, so for `s_a <= s_b`
//!
//! `E[F_a F_b] = (pi T^{s_a}) . (r_a * T^{s_b - s_a} r_b)`,
//!
//! which needs only one left chain and one right chain per column `j`,
//! never the fundamental matrix.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmatrix::nonfixed_positions;
use crate::kingman::TieredKernel;
use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;
use crate::statespace::StateSpace;

/// A vector supported on a single tier.
#[derive(Clone, Debug, PartialEq)]
pub struct TieredVector<S> {
    pub tier: usize,
    pub values: Vec<S>,
}

/// `pi T^k` for `k = 0..` number of tiers.
pub fn left_products<S: Scalar>(kernel: &TieredKernel<S>) -> Vec<TieredVector<S>> {
    let mut out = Vec::with_capacity(kernel.num_tiers());
    let mut cur = vec![S::one()];
    for k in 0..kernel.num_tiers() {
        let next = (k + 1 < kernel.num_tiers()).then(|| kernel.block(k).left_mul(&cur));
        out.push(TieredVector { tier: k, values: cur });
        match next {
            Some(v) => cur = v,
            None => break,
        }
    }
    out
}

/// `T^k v` for `k = 0..=tier`, where `v` lives on `tier`.
pub fn right_products<S: Scalar>(kernel: &TieredKernel<S>, v: TieredVector<S>) -> Result<Vec<TieredVector<S>>> {
    if v.tier >= kernel.num_tiers() || v.values.len() != kernel.tier_size(v.tier) {
        return Err(Error::invalid("vector does not match the size of its tier"));
    }
    let mut out = vec![v];
    while let Some(last) = out.last() {
        if last.tier == 0 {
            break;
        }
        let values = kernel.block(last.tier - 1).right_mul(&last.values);
        out.push(TieredVector { tier: last.tier - 1, values });
    }
    Ok(out)
}

/// Restricts a full-length reward to its tier, rejecting rewards spread
/// over several tiers.
pub fn single_tier_support<S: Scalar>(kernel: &TieredKernel<S>, r: &[S]) -> Result<TieredVector<S>> {
    if r.len() != kernel.len() {
        return Err(Error::invalid(format!("reward has length {}, expected {}", r.len(), kernel.len())));
    }
    let tiers: Vec<usize> = (0..kernel.num_tiers())
        .filter(|&t| {
            let off = kernel.tier_offset(t);
            r[off..off + kernel.tier_size(t)].iter().any(|v| !v.is_zero())
        })
        .collect();
    let tier = match tiers.as_slice() {
        [] => kernel.num_tiers() - 1,
        [t] => *t,
        _ => return Err(Error::invalid("reward is supported on several tiers; use the general phase-type routines")),
    };
    let off = kernel.tier_offset(tier);
    Ok(TieredVector { tier, values: r[off..off + kernel.tier_size(tier)].to_vec() })
}

/// Sums tiered pieces into one full-length vector.
pub fn assemble<S: Scalar>(kernel: &TieredKernel<S>, pieces: &[TieredVector<S>]) -> Vec<S> {
    let mut out = vec![S::zero(); kernel.len()];
    for p in pieces {
        let off = kernel.tier_offset(p.tier);
        for (o, v) in out[off..off + p.values.len()].iter_mut().zip(&p.values) {
            *o = o.clone() + v.clone();
        }
    }
    out
}

/// Mean vector and covariance matrix of the non-fixed F-matrix entries in
/// row-wise order `(3,1), (4,1), (4,2), (5,1), ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSummary<S> {
    pub n: usize,
    pub positions: Vec<(usize, usize)>,
    pub mean: Vec<S>,
    pub cov: Matrix<S>,
    /// Multiply-add operations spent.
    pub work: u64,
}

impl<S: Scalar> MomentSummary<S> {
    pub fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        self.positions.iter().position(|&p| p == (i, j))
    }

    fn linear(&self, weights: &[S], offset: S) -> (S, S) {
        let mean = offset + dot(weights, &self.mean);
        let cv = self.cov.right_mul(weights);
        (mean, dot(weights, &cv))
    }

    fn s_weights(&self) -> Vec<S> {
        vec![S::one(); self.positions.len()]
    }

    fn e_weights(&self) -> Vec<S> {
        self.positions.iter().map(|&(i, _)| if i == self.n - 1 { S::one() } else { S::zero() }).collect()
    }

    /// Mean and variance of `S`, the sum of the non-fixed entries.
    pub fn s_moments(&self) -> (S, S) {
        self.linear(&self.s_weights(), S::zero())
    }

    /// Mean and variance of `E`: the fixed entries `n` and `n-2` of the last
    /// row plus its non-fixed entries.
    pub fn e_moments(&self) -> (S, S) {
        self.linear(&self.e_weights(), S::from_u64(2 * self.n as u64 - 2))
    }

    pub fn cov_s_e(&self) -> S {
        dot(&self.s_weights(), &self.cov.right_mul(&self.e_weights()))
    }

    /// `(S, E)` mean vector and 2x2 covariance.
    pub fn s_e_summary(&self) -> ([S; 2], [[S; 2]; 2]) {
        let (ms, vs) = self.s_moments();
        let (me, ve) = self.e_moments();
        let c = self.cov_s_e();
        ([ms, me], [[vs, c.clone()], [c, ve]])
    }

    pub fn to_f64(&self) -> MomentSummary<f64> {
        MomentSummary {
            n: self.n,
            positions: self.positions.clone(),
            mean: self.mean.iter().map(S::to_f64).collect(),
            cov: self.cov.to_f64(),
            work: self.work,
        }
    }
}

/// Entry values `x_i` of every state of `tier` for the rows `rows`, laid
/// out state-major.
fn reward_segment<S: Scalar>(space: &StateSpace, tier: usize, rows: &[usize]) -> Vec<S> {
    let mut out = Vec::with_capacity(space.tier_size(tier) * rows.len());
    for s in space.tier(tier) {
        out.extend(rows.iter().map(|&i| S::from_u64(s.x[i - 1] as u64)));
    }
    out
}

/// Means and covariances of all non-fixed entries.
pub fn nonfixed_moments<S: Scalar>(space: &StateSpace, kernel: &TieredKernel<S>) -> Result<MomentSummary<S>> {
    let n = space.n();
    if n < 4 {
        return Err(Error::invalid("non-fixed entries exist only for n >= 4"));
    }
    if kernel.tier_sizes() != space.tier_sizes() {
        return Err(Error::invalid("kernel does not belong to this state space"));
    }
    let positions = nonfixed_positions(n);
    let index = |i: usize, j: usize| positions.iter().position(|&p| p == (i, j)).unwrap();
    // Column j holds the tier n-1-j; its non-fixed rows are j+2..n-1.
    let columns: Vec<usize> = (1..=n - 3).collect();
    let rows_of = |j: usize| -> Vec<usize> { (j + 2..n).collect() };
    let tier_of = |j: usize| n - 1 - j;

    let left = left_products(kernel);
    let segments: Vec<Vec<S>> = columns.iter().map(|&j| reward_segment(space, tier_of(j), &rows_of(j))).collect();

    let mut mean = vec![S::zero(); positions.len()];
    let mut work = 0u64;
    for (c, &j) in columns.iter().enumerate() {
        let rows = rows_of(j);
        let l = &left[tier_of(j)].values;
        for (a, &i) in rows.iter().enumerate() {
            let v = l
                .iter()
                .enumerate()
                .fold(S::zero(), |acc, (x, lx)| acc + lx.clone() * segments[c][x * rows.len() + a].clone());
            mean[index(i, j)] = v;
            work += l.len() as u64;
        }
    }

    // For each column jb, push its reward block down through lower tiers and
    // pair it with every column ja whose tier is at most that of jb.
    let partials: Vec<(Vec<(usize, usize, S)>, u64)> = columns
        .par_iter()
        .enumerate()
        .map(|(cb, &jb)| {
            let rows_b = rows_of(jb);
            let gb = rows_b.len();
            let mut block = segments[cb].clone();
            let mut tier = tier_of(jb);
            let mut entries = Vec::new();
            let mut work = 0u64;
            loop {
                // Column ja sitting on this tier, if it has non-fixed rows.
                let ja = n - 1 - tier;
                if (1..=n - 3).contains(&ja) {
                    let rows_a = rows_of(ja);
                    let ga = rows_a.len();
                    let ca = ja - 1;
                    let l = &left[tier].values;
                    for (a, &ia) in rows_a.iter().enumerate() {
                        for (b, &ib) in rows_b.iter().enumerate() {
                            let mut acc = S::zero();
                            for (x, lx) in l.iter().enumerate() {
                                let ra = &segments[ca][x * ga + a];
                                if lx.is_zero() || ra.is_zero() {
                                    continue;
                                }
                                acc = acc + lx.clone() * ra.clone() * block[x * gb + b].clone();
                            }
                            work += l.len() as u64;
                            entries.push((index(ia, ja), index(ib, jb), acc));
                        }
                    }
                }
                if tier == 0 {
                    break;
                }
                let t = kernel.block(tier - 1);
                let mut next = vec![S::zero(); t.rows() * gb];
                for r in 0..t.rows() {
                    for (c, p) in t.row(r) {
                        for b in 0..gb {
                            let v = &block[c * gb + b];
                            if !v.is_zero() {
                                next[r * gb + b] = next[r * gb + b].clone() + p.clone() * v.clone();
                            }
                        }
                        work += gb as u64;
                    }
                }
                block = next;
                tier -= 1;
            }
            (entries, work)
        })
        .collect();

    let m = positions.len();
    let mut cov = Matrix::zeros(m, m);
    for (entries, w) in partials {
        work += w;
        for (a, b, second) in entries {
            let c = second - mean[a].clone() * mean[b].clone();
            cov[(a, b)] = c.clone();
            cov[(b, a)] = c;
        }
    }
    Ok(MomentSummary { n, positions, mean, cov, work })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kingman::kernel;
    use crate::phasetype::{build_rewards, reward_e, reward_f, reward_s, DiscretePhaseType};
    use crate::scalar::Rational;
    use crate::statespace::enumerate_states;

    fn q(a: u64, b: u64) -> Rational {
        Rational::from_ratio(a, b)
    }

    fn lift(r: &[u32]) -> Vec<Rational> {
        r.iter().map(|&v| Rational::from_u64(v as u64)).collect()
    }

    #[test]
    fn n6_left_products() {
        let space = enumerate_states(6).unwrap();
        let k = kernel::<Rational>(&space);
        let left = left_products(&k);
        assert_eq!(left[3].values, vec![q(3, 10), q(2, 10), q(4, 10), q(1, 10)]);
        let d = DiscretePhaseType::from_kernel(&k);
        assert_eq!(assemble(&k, &left), d.occupancy().unwrap());
        let k5 = kernel::<Rational>(&enumerate_states(5).unwrap());
        assert_eq!(left_products(&k5)[2].values, vec![q(1, 2), q(1, 2)]);
    }

    #[test]
    fn n6_right_products() {
        let space = enumerate_states(6).unwrap();
        let k = kernel::<Rational>(&space);
        let r42 = single_tier_support(&k, &lift(&reward_f(&space, 4, 2))).unwrap();
        let got = assemble(&k, &right_products(&k, r42).unwrap());
        let want: Vec<Rational> =
            [(3, 2), (3, 2), (3, 2), (3, 2), (2, 1), (2, 1), (1, 1), (1, 1), (0, 1), (0, 1), (0, 1), (0, 1)]
                .iter()
                .map(|&(a, b)| q(a, b))
                .collect();
        assert_eq!(got, want);
        let r51 = single_tier_support(&k, &lift(&reward_f(&space, 5, 1))).unwrap();
        let got = assemble(&k, &right_products(&k, r51).unwrap());
        let want: Vec<Rational> =
            [(4, 10), (4, 10), (1, 2), (1, 3), (2, 3), (1, 3), (1, 3), (0, 1), (1, 1), (0, 1), (0, 1), (0, 1)]
                .iter()
                .map(|&(a, b)| q(a, b))
                .collect();
        assert_eq!(got, want);
        assert!(single_tier_support(&k, &lift(&reward_s(&space))).is_err());
        let zero = single_tier_support(&k, &vec![q(0, 1); 12]).unwrap();
        assert!(assemble(&k, &right_products(&k, zero).unwrap()).iter().all(|v| *v == q(0, 1)));
    }

    #[test]
    fn n6_covariance_example() {
        let space = enumerate_states(6).unwrap();
        let m = nonfixed_moments(&space, &kernel::<Rational>(&space)).unwrap();
        let a = m.index_of(4, 2).unwrap();
        let b = m.index_of(5, 1).unwrap();
        assert_eq!(m.mean[a], q(3, 2));
        assert_eq!(m.mean[b], q(2, 5));
        assert_eq!(m.cov[(a, b)].clone() + m.mean[a].clone() * m.mean[b].clone(), q(2, 3));
        assert_eq!(m.cov[(a, b)], q(1, 15));
    }

    #[test]
    fn n5_summary() {
        let space = enumerate_states(5).unwrap();
        let m = nonfixed_moments(&space, &kernel::<Rational>(&space)).unwrap();
        assert_eq!(m.mean, vec![q(2, 3), q(1, 2), q(3, 2)]);
        let z = q(0, 1);
        assert_eq!(
            m.cov.to_rows(),
            vec![vec![q(2, 9), q(1, 6), z.clone()], vec![q(1, 6), q(1, 4), q(1, 12)], vec![z, q(1, 12), q(1, 4)]]
        );
        assert_eq!(m.s_moments(), (q(8, 3), q(11, 9)));
        assert_eq!(m.e_moments(), (q(10, 1), q(2, 3)));
        assert_eq!(m.cov_s_e(), q(5, 6));
    }

    #[test]
    fn agrees_with_dense_engine_exactly() {
        for n in 4..=8 {
            let space = enumerate_states(n).unwrap();
            let k = kernel::<Rational>(&space);
            let ff = nonfixed_moments(&space, &k).unwrap();
            let d = DiscretePhaseType::from_kernel(&k);
            let rewards = build_rewards(&space).unwrap();
            let (means, cov) = d.covariance(&rewards.columns[2..]).unwrap();
            assert_eq!(ff.mean, means, "n={n}");
            assert_eq!(ff.cov, cov, "n={n}");
            assert_eq!(ff.s_moments(), d.reward_moments(&reward_s(&space)).unwrap());
            assert_eq!(ff.e_moments(), d.reward_moments(&reward_e(&space)).unwrap());
        }
    }

    #[test]
    fn float_engine_is_close_to_exact() {
        let space = enumerate_states(10).unwrap();
        let exact = nonfixed_moments(&space, &kernel::<Rational>(&space)).unwrap().to_f64();
        let float = nonfixed_moments(&space, &kernel::<f64>(&space)).unwrap();
        for (a, b) in exact.mean.iter().zip(&float.mean) {
            assert!((a - b).abs() < 1e-12);
        }
        for i in 0..exact.positions.len() {
            for j in 0..exact.positions.len() {
                assert!((exact.cov[(i, j)] - float.cov[(i, j)]).abs() < 1e-12);
            }
        }
        assert!(float.work > 0);
    }
}
