//! The Kingman transition kernel on `X_n`, stored as sparse tier blocks.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};
use crate::scalar::{choose2, Scalar};
use crate::statespace::{for_each_coalescence, DCode, RankedState, StateSpace};

/// Transition probabilities from tier `from_tier` into tier `from_tier + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TierBlock<S> {
    pub from_tier: usize,
    pub probs: CsrMatrix<S>,
}

/// A feed-forward absorbing chain: states grouped into tiers, every
/// transition goes from tier `k` to tier `k+1`, and the last tier exits to
/// the absorbing state with probability one.
///
/// Both the ranked coalescent and the block-counting process are of this
/// form; the chain starts in the single state of tier 0.
#[derive(Clone, Debug, PartialEq)]
pub struct TieredKernel<S> {
    tier_start: Vec<usize>,
    blocks: Vec<TierBlock<S>>,
}

impl<S: Scalar> TieredKernel<S> {
    pub fn new(tier_sizes: &[usize], blocks: Vec<TierBlock<S>>) -> Result<Self> {
        if tier_sizes.first() != Some(&1) {
            return Err(Error::invalid("tier 0 must hold exactly one state"));
        }
        if blocks.len() + 1 != tier_sizes.len() {
            return Err(Error::invalid("need one block per pair of consecutive tiers"));
        }
        for (k, b) in blocks.iter().enumerate() {
            if b.from_tier != k || b.probs.rows() != tier_sizes[k] || b.probs.cols() != tier_sizes[k + 1] {
                return Err(Error::invalid(format!("block {k} has the wrong shape or tier")));
            }
        }
        let mut tier_start = vec![0];
        for s in tier_sizes {
            tier_start.push(tier_start.last().unwrap() + s);
        }
        Ok(TieredKernel { tier_start, blocks })
    }

    pub fn num_tiers(&self) -> usize {
        self.tier_start.len() - 1
    }

    /// Number of transient states.
    pub fn len(&self) -> usize {
        *self.tier_start.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tier_size(&self, t: usize) -> usize {
        self.tier_start[t + 1] - self.tier_start[t]
    }

    pub fn tier_sizes(&self) -> Vec<usize> {
        (0..self.num_tiers()).map(|t| self.tier_size(t)).collect()
    }

    /// Global 0-based offset of tier `t`.
    pub fn tier_offset(&self, t: usize) -> usize {
        self.tier_start[t]
    }

    /// Tier and in-tier position of a 0-based global index.
    pub fn locate(&self, global: usize) -> (usize, usize) {
        let t = self.tier_start.partition_point(|&s| s <= global) - 1;
        (t, global - self.tier_start[t])
    }

    pub fn blocks(&self) -> &[TierBlock<S>] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &CsrMatrix<S> {
        &self.blocks[k].probs
    }

    pub fn nnz(&self) -> usize {
        self.blocks.iter().map(|b| b.probs.nnz()).sum()
    }

    /// Exit probabilities `t = (I - T)e`, nonzero only on the last tier for
    /// a stochastic kernel.
    pub fn exit_vector(&self) -> Vec<S> {
        let mut exit = Vec::with_capacity(self.len());
        for b in &self.blocks {
            exit.extend(b.probs.row_sums().into_iter().map(|s| S::one() - s));
        }
        exit.extend(std::iter::repeat_n(S::one(), self.tier_size(self.num_tiers() - 1)));
        exit
    }

    /// Assembled sub-transition matrix `T` over all transient states.
    pub fn dense(&self) -> Matrix<S> {
        let mut m = Matrix::zeros(self.len(), self.len());
        for (k, b) in self.blocks.iter().enumerate() {
            let (r0, c0) = (self.tier_start[k], self.tier_start[k + 1]);
            for i in 0..b.probs.rows() {
                for (j, v) in b.probs.row(i) {
                    m[(r0 + i, c0 + j)] = v.clone();
                }
            }
        }
        m
    }

    /// The initial distribution, a point mass on the tier-0 state.
    pub fn initial(&self) -> Vec<S> {
        let mut pi = vec![S::zero(); self.len()];
        pi[0] = S::one();
        pi
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T + Copy) -> TieredKernel<T> {
        TieredKernel {
            tier_start: self.tier_start.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| TierBlock { from_tier: b.from_tier, probs: b.probs.map(f) })
                .collect(),
        }
    }
}

/// A path of the chain as 1-based state indices, one per tier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChainPath {
    pub indices: Vec<usize>,
}

/// The lineage pair `(i, k)` merged by a transition; position `n-1` stands
/// for the external lineages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Coalescence {
    pub i: usize,
    pub k: usize,
}

/// Finds the unique lineage pair turning `x` into `y`, if any.
///
/// Works on the encodings: `d(x) - d(y) + e_{n-2-t}` must equal `e_i + e_k`
/// for lineages `i`, `k` present in `x`, with the external count taking the
/// role of position `n-1`.
pub fn feasible(x: &RankedState, y: &RankedState) -> Result<Option<Coalescence>> {
    let n = x.n();
    if y.n() != n {
        return Err(Error::invalid(format!("states of different sample sizes ({n} and {})", y.n())));
    }
    if y.tier != x.tier + 1 {
        return Err(Error::TierMismatch { expected: x.tier + 1, found: y.tier });
    }
    let t = x.tier;
    let new_pos = n - 2 - t;
    let mut hits: Vec<usize> = Vec::with_capacity(2);
    for pos in 1..n - 1 {
        let dx = ((x.dcode.mask >> (pos - 1)) & 1) as i32;
        let dy = ((y.dcode.mask >> (pos - 1)) & 1) as i32;
        let v = dx - dy + i32::from(pos == new_pos);
        match v {
            0 => {}
            1 if pos > new_pos => hits.push(pos),
            _ => return Ok(None),
        }
    }
    let ext_drop = x.dcode.external as i32 - y.dcode.external as i32;
    let pair = match (hits.as_slice(), ext_drop) {
        ([i, k], 0) => Coalescence { i: *i, k: *k },
        ([i], 1) => Coalescence { i: *i, k: n - 1 },
        ([], 2) => Coalescence { i: n - 1, k: n - 1 },
        _ => return Ok(None),
    };
    Ok(Some(pair))
}

/// Kingman probability of moving from `x` to `y`; zero when infeasible.
pub fn transition_prob<S: Scalar>(x: &RankedState, y: &RankedState) -> Result<S> {
    let Some(pair) = feasible(x, y)? else {
        return Ok(S::zero());
    };
    let n = x.n();
    let ext = x.external() as u64;
    let ways = match (pair.i == n - 1, pair.k == n - 1) {
        (false, false) => 1,
        (false, true) => ext,
        _ => choose2(ext),
    };
    Ok(S::from_ratio(ways, choose2(x.lineages() as u64)))
}

/// The blocks `T_{k,k+1}` of the Kingman kernel for `k = 0..n-3`.
pub fn tier_blocks<S: Scalar>(space: &StateSpace) -> Vec<TierBlock<S>> {
    let n = space.n();
    (0..n - 2)
        .map(|t| {
            let denom = choose2((n - t) as u64);
            let rows: Vec<Vec<(usize, S)>> = space
                .tier_masks(t)
                .par_iter()
                .map(|&mask| {
                    let code = DCode { mask, external: (n - t - mask.count_ones() as usize) as u8 };
                    let mut row = Vec::new();
                    for_each_coalescence(n, t, code, |child, w, _| {
                        let col = space.position_in_tier(t + 1, child.mask).expect("successor is enumerated");
                        row.push((col, S::from_ratio(w, denom)));
                    });
                    row
                })
                .collect();
            TierBlock { from_tier: t, probs: CsrMatrix::from_row_entries(space.tier_size(t + 1), rows) }
        })
        .collect()
}

/// The Kingman kernel on `space` as a [`TieredKernel`].
pub fn kernel<S: Scalar>(space: &StateSpace) -> TieredKernel<S> {
    TieredKernel::new(&space.tier_sizes(), tier_blocks(space)).expect("blocks are consistent with the space")
}

/// Draws a path of the chain described by `kernel`.
pub fn sample_path<R: Rng + ?Sized>(kernel: &TieredKernel<f64>, rng: &mut R) -> ChainPath {
    let mut indices = Vec::with_capacity(kernel.num_tiers());
    let mut pos = 0usize;
    indices.push(1);
    for (k, b) in kernel.blocks().iter().enumerate() {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = None;
        for (c, p) in b.probs.row(pos) {
            acc += p;
            chosen = Some(c);
            if u < acc {
                break;
            }
        }
        pos = chosen.expect("every transient row has a successor");
        indices.push(kernel.tier_offset(k + 1) + pos + 1);
    }
    ChainPath { indices }
}

/// Simulates the ranked coalescent directly by merging a uniformly chosen
/// lineage pair at every step, without a state space. Returns the
/// decremental codes visited at tiers `0..n-2`.
pub fn simulate_codes<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<DCode> {
    let mut code = DCode { mask: 0, external: n as u8 };
    let mut out = Vec::with_capacity(n - 1);
    out.push(code);
    for t in 0..n - 2 {
        let m = n - t;
        let a = rng.random_range(0..m);
        let mut b = rng.random_range(0..m - 1);
        if b >= a {
            b += 1;
        }
        // Lineages 0..popcount are the internal ones, in bit order; the
        // rest are external.
        let internal = code.mask.count_ones() as usize;
        let new_bit = 1u32 << (n - 3 - t);
        let nth_bit = |mask: u32, idx: usize| {
            let mut m = mask;
            for _ in 0..idx {
                m &= m - 1;
            }
            m & m.wrapping_neg()
        };
        let mut mask = code.mask;
        let mut ext = code.external;
        for lineage in [a, b] {
            if lineage < internal {
                mask &= !nth_bit(code.mask, lineage);
            } else {
                ext -= 1;
            }
        }
        code = DCode { mask: mask | new_bit, external: ext };
        out.push(code);
    }
    out
}

/// Product of the kernel entries along `path`.
pub fn path_probability<S: Scalar>(kernel: &TieredKernel<S>, path: &ChainPath) -> Result<S> {
    if path.indices.len() != kernel.num_tiers() {
        return Err(Error::invalid(format!(
            "path has {} states, expected {}",
            path.indices.len(),
            kernel.num_tiers()
        )));
    }
    let mut positions = Vec::with_capacity(path.indices.len());
    for (t, &idx) in path.indices.iter().enumerate() {
        let global = idx.checked_sub(1).ok_or_else(|| Error::invalid("state indices are 1-based"))?;
        let range = kernel.tier_offset(t)..kernel.tier_offset(t) + kernel.tier_size(t);
        if !range.contains(&global) {
            return Err(Error::TierMismatch { expected: t, found: kernel.locate(global.min(kernel.len() - 1)).0 });
        }
        positions.push(global - range.start);
    }
    let mut prob = S::one();
    for (k, w) in positions.windows(2).enumerate() {
        let p = kernel.block(k).get(w[0], w[1]);
        if p.is_zero() {
            return Err(Error::Infeasible { from: path.indices[k], to: path.indices[k + 1] });
        }
        prob = prob * p;
    }
    Ok(prob)
}

/// Largest `n` for which [`enumerate_paths`] runs.
pub const ENUMERATION_MAX_N: usize = 12;

/// Every path of the chain with its probability, in lexicographic order of
/// index sequences.
pub fn enumerate_paths<S: Scalar>(kernel: &TieredKernel<S>) -> Result<Vec<(ChainPath, S)>> {
    let n = kernel.num_tiers() + 1;
    if n > ENUMERATION_MAX_N {
        return Err(Error::Capacity {
            what: "path enumeration",
            n,
            max: ENUMERATION_MAX_N,
            detail: "the number of paths grows like the Euler zigzag numbers".into(),
        });
    }
    let mut out = Vec::new();
    let mut stack = vec![0usize];
    walk(kernel, &mut stack, S::one(), &mut out);
    Ok(out)
}

fn walk<S: Scalar>(kernel: &TieredKernel<S>, stack: &mut Vec<usize>, prob: S, out: &mut Vec<(ChainPath, S)>) {
    let k = stack.len() - 1;
    if k + 1 == kernel.num_tiers() {
        let indices = stack.iter().enumerate().map(|(t, &p)| kernel.tier_offset(t) + p + 1).collect();
        out.push((ChainPath { indices }, prob));
        return;
    }
    let row: Vec<(usize, S)> = kernel.block(k).row(stack[k]).map(|(c, v)| (c, v.clone())).collect();
    for (c, p) in row {
        stack.push(c);
        walk(kernel, stack, prob.clone() * p, out);
        stack.pop();
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::scalar::Rational;
    use crate::statespace::enumerate_states;

    fn q(a: u64, b: u64) -> Rational {
        Rational::from_ratio(a, b)
    }

    fn dense_rows(k: &TieredKernel<Rational>) -> Vec<Vec<Rational>> {
        k.dense().to_rows()
    }

    #[test]
    fn n5_kernel_matches_displayed_matrix() {
        let space = enumerate_states(5).unwrap();
        let t = dense_rows(&kernel(&space));
        let z = Rational::from_u64(0);
        let mut want = vec![vec![z.clone(); 7]; 7];
        want[0][1] = q(1, 1);
        want[1][2] = q(1, 2);
        want[1][3] = q(1, 2);
        want[2][4] = q(2, 3);
        want[2][6] = q(1, 3);
        want[3][4] = q(1, 3);
        want[3][5] = q(1, 3);
        want[3][6] = q(1, 3);
        assert_eq!(t, want);
    }

    #[test]
    fn n6_blocks_match_worked_example() {
        let space = enumerate_states(6).unwrap();
        let k = kernel::<Rational>(&space);
        assert_eq!(k.block(0).to_dense().to_rows(), vec![vec![q(1, 1)]]);
        assert_eq!(k.block(1).to_dense().to_rows(), vec![vec![q(4, 10), q(6, 10)]]);
        let z = q(0, 1);
        assert_eq!(
            k.block(2).to_dense().to_rows(),
            vec![
                vec![q(3, 6), z.clone(), q(3, 6), z.clone()],
                vec![q(1, 6), q(2, 6), q(2, 6), q(1, 6)]
            ]
        );
        let third = q(1, 3);
        assert_eq!(
            k.block(3).to_dense().to_rows(),
            vec![
                vec![q(2, 3), z.clone(), z.clone(), third.clone()],
                vec![third.clone(), third.clone(), z.clone(), third.clone()],
                vec![third.clone(), z.clone(), third.clone(), third.clone()],
                vec![z.clone(), third.clone(), third.clone(), third.clone()],
            ]
        );
    }

    #[test]
    fn feasibility_examples() {
        let space = enumerate_states(5).unwrap();
        let s2 = space.state(2);
        assert_eq!(feasible(&s2, &space.state(3)).unwrap(), Some(Coalescence { i: 3, k: 4 }));
        assert_eq!(feasible(&s2, &space.state(4)).unwrap(), Some(Coalescence { i: 4, k: 4 }));
        assert!(matches!(feasible(&s2, &space.state(5)), Err(Error::TierMismatch { .. })));
        assert_eq!(transition_prob::<Rational>(&s2, &space.state(3)).unwrap(), q(1, 2));
        assert_eq!(transition_prob::<Rational>(&space.state(3), &space.state(5)).unwrap(), q(2, 3));
        assert_eq!(transition_prob::<Rational>(&space.state(3), &space.state(6)).unwrap(), q(0, 1));
    }

    #[test]
    fn pairwise_formula_agrees_with_blocks() {
        for n in 3..=9 {
            let space = enumerate_states(n).unwrap();
            let k = kernel::<Rational>(&space);
            for t in 0..n - 2 {
                for x in space.tier(t) {
                    for y in space.tier(t + 1) {
                        let p: Rational = transition_prob(&x, &y).unwrap();
                        let (_, px) = k.locate(x.index - 1);
                        let (_, py) = k.locate(y.index - 1);
                        assert_eq!(p, k.block(t).get(px, py), "n={n} {:?}->{:?}", x.x, y.x);
                    }
                }
            }
        }
    }

    #[test]
    fn rows_are_stochastic() {
        for n in 3..=11 {
            let k = kernel::<Rational>(&enumerate_states(n).unwrap());
            for b in k.blocks() {
                assert!(b.probs.row_sums().iter().all(|s| *s == q(1, 1)));
            }
        }
        let k = kernel::<f64>(&enumerate_states(20).unwrap());
        for b in k.blocks() {
            assert!(b.probs.row_sums().iter().all(|s| (s - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn path_counts_are_euler_zigzag_numbers() {
        let euler = [1u64, 1, 1, 2, 5, 16, 61, 272, 1385, 7936, 50521];
        for n in 3..=11 {
            let k = kernel::<Rational>(&enumerate_states(n).unwrap());
            let paths = enumerate_paths(&k).unwrap();
            assert_eq!(paths.len() as u64, euler[n - 1], "n={n}");
            let total = paths.iter().fold(q(0, 1), |a, (_, p)| a + p.clone());
            assert_eq!(total, q(1, 1));
        }
        let k = kernel::<f64>(&enumerate_states(13).unwrap());
        assert!(matches!(enumerate_paths(&k), Err(Error::Capacity { .. })));
    }

    #[test]
    fn caterpillar_probability() {
        let k = kernel::<Rational>(&enumerate_states(5).unwrap());
        let p = path_probability(&k, &ChainPath { indices: vec![1, 2, 3, 5] }).unwrap();
        assert_eq!(p, q(1, 3));
        let bad = path_probability(&k, &ChainPath { indices: vec![1, 2, 3, 6] });
        assert!(matches!(bad, Err(Error::Infeasible { from: 3, to: 6 })));
    }

    #[test]
    fn sampler_and_direct_simulation_match_exact_probabilities() {
        let space = enumerate_states(5).unwrap();
        let exact: HashMap<ChainPath, f64> = enumerate_paths(&kernel::<Rational>(&space))
            .unwrap()
            .into_iter()
            .map(|(p, w)| (p, w.to_f64()))
            .collect();
        let fk = kernel::<f64>(&space);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let mut by_kernel: HashMap<ChainPath, usize> = HashMap::new();
        let mut direct: HashMap<ChainPath, usize> = HashMap::new();
        for _ in 0..draws {
            *by_kernel.entry(sample_path(&fk, &mut rng)).or_default() += 1;
            let indices = simulate_codes(5, &mut rng).iter().map(|c| space.index_of_mask(c.mask).unwrap()).collect();
            *direct.entry(ChainPath { indices }).or_default() += 1;
        }
        for counts in [by_kernel, direct] {
            for (path, p) in &exact {
                let freq = *counts.get(path).unwrap_or(&0) as f64 / draws as f64;
                let se = (p * (1.0 - p) / draws as f64).sqrt();
                assert!((freq - p).abs() < 3.0 * se + 1e-12, "{path:?}: {freq} vs {p}");
            }
        }
    }

    #[test]
    fn n4_caterpillar_frequency() {
        let space = enumerate_states(4).unwrap();
        let fk = kernel::<f64>(&space);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let hits = (0..20_000).filter(|_| sample_path(&fk, &mut rng).indices[2] == 3).count();
        assert!((hits as f64 / 20_000.0 - 2.0 / 3.0).abs() < 0.01);
    }
}
