//! Jump chain of the ranked block-counting process.
//!
//! A state records `a_i`, the number of branches subtending `i` leaves,
//! with `sum_i i a_i = n`. Two blocks of sizes `i != j` merge at rate
//! `a_i a_j` and two of equal size at rate `C(a_i, 2)`; the total rate out
//! of a state with `b` blocks is `C(b, 2)`. Only the jump chain is kept,
//! so states fall into tiers `n - b` exactly like the ranked coalescent.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::kingman::{TierBlock, TieredKernel};
use crate::linalg::CsrMatrix;
use crate::phasetype::DiscretePhaseType;
use crate::scalar::{choose2, Scalar};

/// All transient block-count vectors for one `n`, tier-major and
/// lexicographically descending within a tier.
#[derive(Clone, Debug)]
pub struct BcpSpace {
    n: usize,
    states: Vec<Vec<u8>>,
    tier_start: Vec<usize>,
}

/// Partitions of `n` into exactly `parts` parts, as block-count vectors.
fn partitions_into(n: usize, parts: usize) -> Vec<Vec<u8>> {
    fn go(rest: usize, parts: usize, max_part: usize, a: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if parts == 0 {
            if rest == 0 {
                out.push(a.clone());
            }
            return;
        }
        // Each remaining part is at least 1 and at most max_part.
        let hi = max_part.min(rest + 1 - parts);
        let lo = rest.div_ceil(parts);
        for size in (lo..=hi).rev() {
            a[size - 1] += 1;
            go(rest - size, parts - 1, size, a, out);
            a[size - 1] -= 1;
        }
    }
    let mut out = Vec::new();
    let mut a = vec![0u8; n - 1];
    go(n, parts, n - 1, &mut a, &mut out);
    out
}

pub fn bcp_states(n: usize) -> Result<BcpSpace> {
    if n < 3 {
        return Err(Error::invalid(format!("n must be at least 3, got {n}")));
    }
    if n > u8::MAX as usize {
        return Err(Error::invalid("n is too large for 8-bit block counts"));
    }
    let mut states = Vec::new();
    let mut tier_start = vec![0];
    for blocks in (2..=n).rev() {
        let mut tier = partitions_into(n, blocks);
        tier.sort_unstable_by(|a, b| b.cmp(a));
        states.extend(tier);
        tier_start.push(states.len());
    }
    Ok(BcpSpace { n, states, tier_start })
}

impl BcpSpace {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Transient states, `p(n) - 1`.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Transient states plus the absorbing single block.
    pub fn total_with_absorbing(&self) -> usize {
        self.len() + 1
    }

    pub fn num_tiers(&self) -> usize {
        self.tier_start.len() - 1
    }

    pub fn tier_size(&self, t: usize) -> usize {
        self.tier_start[t + 1] - self.tier_start[t]
    }

    pub fn tier_sizes(&self) -> Vec<usize> {
        (0..self.num_tiers()).map(|t| self.tier_size(t)).collect()
    }

    pub fn tier(&self, t: usize) -> &[Vec<u8>] {
        &self.states[self.tier_start[t]..self.tier_start[t + 1]]
    }

    /// State with 1-based index.
    pub fn state(&self, index: usize) -> &[u8] {
        &self.states[index - 1]
    }

    pub fn states(&self) -> &[Vec<u8>] {
        &self.states
    }

    /// Number of singleton blocks per state, the external-branch reward.
    pub fn singleton_reward(&self) -> Vec<u32> {
        self.states.iter().map(|a| a[0] as u32).collect()
    }
}

/// Jump-chain probabilities between consecutive tiers.
pub fn bcp_kernel<S: Scalar>(space: &BcpSpace) -> TieredKernel<S> {
    let n = space.n;
    let mut blocks = Vec::with_capacity(space.num_tiers() - 1);
    for t in 0..space.num_tiers() - 1 {
        let next: HashMap<&[u8], usize> =
            space.tier(t + 1).iter().enumerate().map(|(k, a)| (a.as_slice(), k)).collect();
        let b = (n - t) as u64;
        let denom = choose2(b);
        let rows = space
            .tier(t)
            .iter()
            .map(|a| {
                let mut row = Vec::new();
                for i in 1..n {
                    if a[i - 1] == 0 {
                        continue;
                    }
                    for j in i..n {
                        let rate = if i == j {
                            choose2(a[i - 1] as u64)
                        } else {
                            a[i - 1] as u64 * a[j - 1] as u64
                        };
                        if rate == 0 {
                            continue;
                        }
                        let mut child = a.clone();
                        child[i - 1] -= 1;
                        child[j - 1] -= 1;
                        child[i + j - 1] += 1;
                        row.push((next[child.as_slice()], S::from_ratio(rate, denom)));
                    }
                }
                row
            })
            .collect();
        blocks.push(TierBlock { from_tier: t, probs: CsrMatrix::from_row_entries(space.tier_size(t + 1), rows) });
    }
    TieredKernel::new(&space.tier_sizes(), blocks).expect("blocks match the tiers")
}

/// Phase-type representation of the external branch length `E`, obtained
/// by rewarding each jump-chain state with its number of singletons.
pub fn bcp_e_distribution<S: Scalar>(n: usize) -> Result<DiscretePhaseType<S>> {
    let space = bcp_states(n)?;
    let chain = DiscretePhaseType::from_kernel(&bcp_kernel::<S>(&space));
    chain.reward_transform(&space.singleton_reward())
}

/// `(m, P(E = m))` over the support of `E`.
pub fn e_pmf<S: Scalar>(n: usize) -> Result<Vec<(usize, S)>> {
    let d = bcp_e_distribution::<S>(n)?;
    Ok(d.distribution(n * n))
}

/// Partition numbers `p(0..=n)` by Euler's pentagonal recurrence.
pub fn partition_numbers(n: usize) -> Vec<u128> {
    let mut p = vec![0u128; n + 1];
    p[0] = 1;
    for m in 1..=n {
        let mut acc: i128 = 0;
        for k in 1.. {
            let g1 = k * (3 * k - 1) / 2;
            if g1 > m {
                break;
            }
            let sign = if k % 2 == 1 { 1 } else { -1 };
            acc += sign * p[m - g1] as i128;
            let g2 = k * (3 * k + 1) / 2;
            if g2 <= m {
                acc += sign * p[m - g2] as i128;
            }
        }
        p[m] = acc as u128;
    }
    p
}
