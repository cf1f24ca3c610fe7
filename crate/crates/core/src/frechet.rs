//! Fréchet mean trees under the F-matrix distance.
//!
//! For a distribution on ranked trees with mean matrix `M`, the mean trees
//! minimise `||F - M||^2`. The squared distance splits into per-column
//! costs, so it is a sum of state costs `c(x)` along the path of `F`, and
//! the minimising paths come out of a Viterbi-style pass over the tiers
//! followed by backtracking through every optimal antecedent.

use crate::error::{Error, Result};
use crate::feedforward::left_products;
use crate::fmatrix::{nonfixed_positions, FMatrix};
use crate::kingman::{ChainPath, TieredKernel};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::statespace::StateSpace;

/// Default cap on the number of mean paths returned.
pub const DEFAULT_PATH_CAP: usize = 1_000_000;

/// Expected F-matrix: fixed entries forced, non-fixed entries averaged.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanMatrix<S> {
    n: usize,
    m: Matrix<S>,
}

impl<S: Scalar> MeanMatrix<S> {
    /// Builds from the non-fixed values in row-wise order.
    pub fn from_nonfixed(n: usize, values: &[S]) -> Result<Self> {
        let positions = nonfixed_positions(n);
        if values.len() != positions.len() {
            return Err(Error::invalid(format!("expected {} non-fixed values, got {}", positions.len(), values.len())));
        }
        let mut m = Matrix::zeros(n - 1, n - 1);
        for j in 1..n {
            m[(j - 1, j - 1)] = S::from_u64(j as u64 + 1);
            if j + 1 < n {
                m[(j, j - 1)] = S::from_u64(j as u64);
            }
        }
        for (&(i, j), v) in positions.iter().zip(values) {
            m[(i - 1, j - 1)] = v.clone();
        }
        Ok(MeanMatrix { n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry `M_ij`, 1-based.
    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.m[(i - 1, j - 1)]
    }

    pub fn nonfixed(&self) -> Vec<S> {
        nonfixed_positions(self.n).iter().map(|&(i, j)| self.get(i, j).clone()).collect()
    }

    pub fn lower_rows(&self) -> Vec<Vec<S>> {
        (1..self.n).map(|i| (1..=i).map(|j| self.get(i, j).clone()).collect()).collect()
    }

    pub fn to_f64(&self) -> MeanMatrix<f64> {
        MeanMatrix { n: self.n, m: self.m.to_f64() }
    }

    /// `||F - M||^2`.
    pub fn squared_distance(&self, f: &FMatrix) -> Result<S> {
        if f.n() != self.n {
            return Err(Error::invalid(format!("F-matrix has n = {}, mean has n = {}", f.n(), self.n)));
        }
        let mut acc = S::zero();
        for j in 1..self.n {
            for i in j..self.n {
                let d = S::from_u64(f.get(i, j) as u64) - self.get(i, j).clone();
                acc = acc + d.clone() * d;
            }
        }
        Ok(acc)
    }
}

/// Expected F-matrix under a tiered chain: `E[F_ij] = (pi T^{n-1-j}) . x_i`.
pub fn mean_matrix_exact<S: Scalar>(space: &StateSpace, kernel: &TieredKernel<S>) -> Result<MeanMatrix<S>> {
    let n = space.n();
    let left = left_products(kernel);
    let values: Vec<S> = nonfixed_positions(n)
        .iter()
        .map(|&(i, j)| {
            let tier = n - 1 - j;
            space
                .tier(tier)
                .zip(&left[tier].values)
                .fold(S::zero(), |acc, (s, p)| acc + p.clone() * S::from_u64(s.x[i - 1] as u64))
        })
        .collect();
    MeanMatrix::from_nonfixed(n, &values)
}

/// Entrywise average of a sample of F-matrices.
pub fn mean_matrix_sample(matrices: &[FMatrix]) -> Result<MeanMatrix<f64>> {
    let weighted: Vec<(&FMatrix, f64)> = matrices.iter().map(|f| (f, 1.0)).collect();
    mean_matrix_weighted(&weighted)
}

/// Weighted average `sum_k w_k F_k / sum_k w_k`.
pub fn mean_matrix_weighted<S: Scalar>(items: &[(&FMatrix, S)]) -> Result<MeanMatrix<S>> {
    let Some((first, _)) = items.first() else {
        return Err(Error::invalid("cannot average an empty sample"));
    };
    let n = first.n();
    if let Some((f, _)) = items.iter().find(|(f, _)| f.n() != n) {
        return Err(Error::invalid(format!("mixed sample sizes: n = {n} and n = {}", f.n())));
    }
    let positions = nonfixed_positions(n);
    let mut sums = vec![S::zero(); positions.len()];
    let mut total = S::zero();
    for (f, w) in items {
        for (s, &(i, j)) in sums.iter_mut().zip(&positions) {
            *s = s.clone() + w.clone() * S::from_u64(f.get(i, j) as u64);
        }
        total = total + w.clone();
    }
    if total.is_zero() {
        return Err(Error::invalid("weights sum to zero"));
    }
    let values: Vec<S> = sums.into_iter().map(|s| s / total.clone()).collect();
    MeanMatrix::from_nonfixed(n, &values)
}

/// Output of [`vitreebi`].
#[derive(Clone, Debug, PartialEq)]
pub struct FrechetMeans<S> {
    pub min_cost: S,
    /// All minimising paths, sorted by index sequence.
    pub paths: Vec<ChainPath>,
    /// `c(x)` for every state, by 0-based global index.
    pub state_costs: Vec<S>,
    /// Cheapest cost of reaching each state, including its own cost.
    pub cumulative: Vec<S>,
}

/// Cost of putting state `x` (tier `t`) in column `n-1-t` against `M`.
pub fn state_cost<S: Scalar>(mean: &MeanMatrix<S>, x: &[u8], tier: usize) -> S {
    let n = mean.n();
    let j = n - 1 - tier;
    (j..n).fold(S::zero(), |acc, i| {
        let d = S::from_u64(x[i - 1] as u64) - mean.get(i, j).clone();
        acc + d.clone() * d
    })
}

/// Finds every path minimising `||F - M||^2`, with antecedents taken from
/// the nonzero pattern of `kernel`. Ties are exact for rationals and within
/// a relative `1e-9` for floats.
pub fn vitreebi<S: Scalar>(space: &StateSpace, kernel: &TieredKernel<S>, mean: &MeanMatrix<S>) -> Result<FrechetMeans<S>> {
    vitreebi_with_cap(space, kernel, mean, DEFAULT_PATH_CAP)
}

pub fn vitreebi_with_cap<S: Scalar>(
    space: &StateSpace,
    kernel: &TieredKernel<S>,
    mean: &MeanMatrix<S>,
    cap: usize,
) -> Result<FrechetMeans<S>> {
    let n = space.n();
    if mean.n() != n || kernel.tier_sizes() != space.tier_sizes() {
        return Err(Error::invalid("state space, kernel and mean matrix disagree on n"));
    }
    let state_costs: Vec<S> = space.states().map(|s| state_cost(mean, s.x, s.tier)).collect();
    vitreebi_from_costs(kernel, state_costs, cap)
}

/// The dynamic program on arbitrary per-state costs (0-based global order).
pub fn vitreebi_from_costs<S: Scalar>(kernel: &TieredKernel<S>, state_costs: Vec<S>, cap: usize) -> Result<FrechetMeans<S>> {
    if state_costs.len() != kernel.len() {
        return Err(Error::invalid("one cost per state is required"));
    }
    let n = kernel.num_tiers() + 1;
    let mut cumulative: Vec<Option<S>> = vec![None; kernel.len()];
    let mut argmin: Vec<Vec<u32>> = vec![Vec::new(); kernel.len()];
    cumulative[0] = Some(state_costs[0].clone());
    for t in 0..n - 2 {
        let from = kernel.tier_offset(t);
        let to = kernel.tier_offset(t + 1);
        let block = kernel.block(t);
        for r in 0..block.rows() {
            let cr = cumulative[from + r].clone().expect("earlier tier is complete");
            for (c, _) in block.row(r) {
                let y = to + c;
                match &cumulative[y] {
                    Some(best) if cr.near(best) => {
                        argmin[y].push((from + r) as u32);
                        if cr < *best {
                            cumulative[y] = Some(cr.clone());
                        }
                    }
                    Some(best) if cr > *best => {}
                    _ => {
                        // Drop earlier candidates no longer within tolerance of the new best.
                        let keep: Vec<u32> = argmin[y]
                            .iter()
                            .copied()
                            .filter(|&p| cumulative[p as usize].as_ref().is_some_and(|v| v.near(&cr)))
                            .collect();
                        argmin[y] = keep;
                        argmin[y].push((from + r) as u32);
                        cumulative[y] = Some(cr.clone());
                    }
                }
            }
        }
        for y in to..to + kernel.tier_size(t + 1) {
            let best = cumulative[y].clone().expect("every state has an antecedent");
            cumulative[y] = Some(best + state_costs[y].clone());
        }
    }
    let cumulative: Vec<S> = cumulative.into_iter().map(|c| c.expect("all states reached")).collect();

    let last = n - 2;
    let range = kernel.tier_offset(last)..kernel.tier_offset(last) + kernel.tier_size(last);
    let min_cost = cumulative[range.clone()]
        .iter()
        .cloned()
        .reduce(|a, b| if b < a { b } else { a })
        .expect("last tier is nonempty");
    let ends: Vec<usize> = range.filter(|&i| cumulative[i].near(&min_cost)).collect();

    let mut paths = Vec::new();
    let mut stack = Vec::with_capacity(n - 1);
    for end in ends {
        stack.push(end);
        backtrack(&argmin, &mut stack, &mut paths, cap)?;
        stack.pop();
    }
    paths.sort();
    Ok(FrechetMeans { min_cost, paths, state_costs, cumulative })
}

fn backtrack(argmin: &[Vec<u32>], stack: &mut Vec<usize>, out: &mut Vec<ChainPath>, cap: usize) -> Result<()> {
    let head = *stack.last().unwrap();
    if head == 0 {
        if out.len() == cap {
            return Err(Error::PathOverflow { cap });
        }
        out.push(ChainPath { indices: stack.iter().rev().map(|&i| i + 1).collect() });
        return Ok(());
    }
    for &p in &argmin[head] {
        stack.push(p as usize);
        backtrack(argmin, stack, out, cap)?;
        stack.pop();
    }
    Ok(())
}

/// `E||F - M||^2` with `M` the mean matrix, i.e. the trace of the
/// covariance of the non-fixed entries.
pub fn frechet_variance<S: Scalar>(space: &StateSpace, kernel: &TieredKernel<S>) -> Result<S> {
    let n = space.n();
    let left = left_products(kernel);
    let mut total = S::zero();
    for (i, j) in nonfixed_positions(n) {
        let tier = n - 1 - j;
        let (m1, m2) = space.tier(tier).zip(&left[tier].values).fold((S::zero(), S::zero()), |(a, b), (s, p)| {
            let v = S::from_u64(s.x[i - 1] as u64);
            (a + p.clone() * v.clone(), b + p.clone() * v.clone() * v)
        });
        total = total + m2 - m1.clone() * m1;
    }
    Ok(total)
}

/// The Fréchet objective `E||F - G||^2` at a mean tree `G`: the variance
/// about `M` plus `||G - M||^2`.
pub fn frechet_objective<S: Scalar>(space: &StateSpace, kernel: &TieredKernel<S>, means: &FrechetMeans<S>) -> Result<S> {
    Ok(frechet_variance(space, kernel)? + means.min_cost.clone())
}
