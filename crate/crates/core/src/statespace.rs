//! The state space `X_n` of the ranked coalescent.
//!
//! A state is a column of an F-matrix: a vector `x` of length `n-1` whose
//! entry `x_k` counts the lineages alive between coalescent events. Rather
//! than vectors, states are stored through their decremental encoding
//! `d(x)_k = (x_k - x_{k+1})^+`, a bitmask over positions `1..=n-2`, together
//! with the external-lineage count `x_{n-1}`. The mask alone already
//! determines the state: its lowest set bit fixes the tier and the popcount
//! fixes the external count.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest `n` accepted by [`enumerate_states`] unless overridden.
pub const DEFAULT_MAX_N: usize = 30;

/// Hard ceiling imposed by the 32-bit decremental mask.
pub const MASK_LIMIT_N: usize = 33;

/// Binary decremental encoding of a state plus its external-lineage count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DCode {
    /// Bit `k-1` is set when position `k` is a decremental index.
    pub mask: u32,
    pub external: u8,
}

impl DCode {
    /// The 0/1 prefix `(d_1, ..., d_{n-2})`.
    pub fn prefix(&self, n: usize) -> Vec<u8> {
        (0..n - 2).map(|b| ((self.mask >> b) & 1) as u8).collect()
    }

    pub fn lineages(&self) -> usize {
        self.mask.count_ones() as usize + self.external as usize
    }
}

/// Borrowed view of one state of an enumerated [`StateSpace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankedState<'a> {
    pub x: &'a [u8],
    pub tier: usize,
    /// 1-based global index.
    pub index: usize,
    pub dcode: DCode,
}

impl RankedState<'_> {
    pub fn n(&self) -> usize {
        self.x.len() + 1
    }

    pub fn external(&self) -> usize {
        self.dcode.external as usize
    }

    /// Number of lineages, `max_k x_k = n - tier`.
    pub fn lineages(&self) -> usize {
        self.n() - self.tier
    }
}

/// Computes `d(x)`.
///
/// Fails when some consecutive drop exceeds one, which no state of `X_n`
/// can have.
pub fn diff_encoding(x: &[u8]) -> Result<DCode> {
    let len = x.len();
    if len < 2 {
        return Err(Error::invalid("state vector must have length n-1 >= 2"));
    }
    if len + 1 > MASK_LIMIT_N {
        return Err(Error::invalid(format!("state vectors longer than {} are not supported", MASK_LIMIT_N - 1)));
    }
    let mut mask = 0u32;
    for k in 0..len - 1 {
        match x[k].saturating_sub(x[k + 1]) {
            0 => {}
            1 => mask |= 1 << k,
            d => {
                return Err(Error::invalid(format!(
                    "entry {} drops by {d} to the next position; a valid state drops by at most 1",
                    k + 1
                )))
            }
        }
    }
    Ok(DCode { mask, external: x[len - 1] })
}

/// Tier of the state whose mask is `mask` (the initial state has mask 0).
pub fn tier_of_mask(n: usize, mask: u32) -> usize {
    if mask == 0 {
        0
    } else {
        n - 1 - (mask.trailing_zeros() as usize + 1)
    }
}

/// Inverse of [`diff_encoding`] on valid codes: cumulative suffix sums of the
/// decrement bits on top of the external count, zero before the first
/// lineage.
pub fn reconstruct(n: usize, code: DCode) -> Vec<u8> {
    let tier = tier_of_mask(n, code.mask);
    let first = n - 1 - tier; // 1-based position of the first nonzero entry
    let mut x = vec![0u8; n - 1];
    x[n - 2] = code.external;
    for k in (first..n - 1).rev() {
        x[k - 1] = x[k] + ((code.mask >> (k - 1)) & 1) as u8;
    }
    x
}

/// Checks that `x` is a state of `X_n` for `n = x.len() + 1` and returns its
/// tier and code.
pub fn validate_state(x: &[u8]) -> Result<(usize, DCode)> {
    let n = x.len() + 1;
    let code = diff_encoding(x)?;
    let tier = tier_of_mask(n, code.mask);
    if tier > n - 2 {
        return Err(Error::invalid("state has too many coalescences"));
    }
    let first = n - 1 - tier;
    if x[first - 1] as usize != n - tier {
        return Err(Error::invalid(format!(
            "first lineage entry at position {first} is {}, expected {}",
            x[first - 1],
            n - tier
        )));
    }
    if code.lineages() != n - tier || reconstruct(n, code) != x {
        return Err(Error::invalid(format!("{x:?} is not a state of X_{n}")));
    }
    Ok((tier, code))
}

/// Calls `f(child, weight, (i, k))` for every coalescence out of a state at
/// `tier`. Weights are the numbers of lineage pairs producing the move; they
/// sum to `C(n - tier, 2)`. Position `n-1` in the pair stands for the
/// external lineages. Nothing is emitted from the last tier, whose only
/// move is into the MRCA.
pub(crate) fn for_each_coalescence(n: usize, tier: usize, code: DCode, mut f: impl FnMut(DCode, u64, (usize, usize))) {
    if tier + 2 >= n {
        return;
    }
    let new_bit = 1u32 << (n - 3 - tier);
    let ext = code.external as u64;
    let mut outer = code.mask;
    while outer != 0 {
        let bi = outer & outer.wrapping_neg();
        outer ^= bi;
        let i = bi.trailing_zeros() as usize + 1;
        let mut inner = outer;
        while inner != 0 {
            let bk = inner & inner.wrapping_neg();
            inner ^= bk;
            let k = bk.trailing_zeros() as usize + 1;
            f(DCode { mask: (code.mask & !bi & !bk) | new_bit, external: code.external }, 1, (i, k));
        }
        if ext >= 1 {
            f(DCode { mask: (code.mask & !bi) | new_bit, external: code.external - 1 }, ext, (i, n - 1));
        }
    }
    if ext >= 2 {
        f(DCode { mask: code.mask | new_bit, external: code.external - 2 }, ext * (ext - 1) / 2, (n - 1, n - 1));
    }
}

/// All transient states of `X_n`, tier-major and lexicographically
/// descending on `x` within a tier, indexed from 1.
#[derive(Clone, Debug)]
pub struct StateSpace {
    n: usize,
    masks: Vec<u32>,
    xs: Vec<u8>,
    tier_start: Vec<usize>,
}

/// Ordering key within a tier: ascending bit-reversed mask is descending `x`.
fn order_key(mask: u32) -> u32 {
    mask.reverse_bits()
}

pub fn enumerate_states(n: usize) -> Result<StateSpace> {
    enumerate_states_with_limit(n, DEFAULT_MAX_N)
}

pub fn enumerate_states_with_limit(n: usize, max_n: usize) -> Result<StateSpace> {
    if n < 3 {
        return Err(Error::invalid(format!("n must be at least 3, got {n}")));
    }
    let max_n = max_n.min(MASK_LIMIT_N);
    if n > max_n {
        return Err(Error::Capacity {
            what: "state space",
            n,
            max: max_n,
            detail: format!("|X_n| = Fib({}) = {}", n + 1, fib(n + 1)),
        });
    }

    let mut masks: Vec<u32> = vec![0];
    let mut tier_start = vec![0usize, 1];
    let mut current: Vec<u32> = vec![0];
    for tier in 0..n - 2 {
        let next_tier = tier + 1;
        // Children keep their forced lowest bit at index n-2-next_tier; the
        // remaining next_tier-1 free bits index a dedup bitset.
        let shift = n - 1 - next_tier;
        let slots = 1usize << (next_tier - 1);
        let seen: Vec<AtomicU64> = (0..slots.div_ceil(64)).map(|_| AtomicU64::new(0)).collect();
        current.par_iter().for_each(|&mask| {
            let code = DCode { mask, external: (n - tier - mask.count_ones() as usize) as u8 };
            for_each_coalescence(n, tier, code, |child, _, _| {
                let key = (child.mask >> shift) as usize;
                seen[key / 64].fetch_or(1 << (key % 64), Ordering::Relaxed);
            });
        });
        let forced = 1u32 << (shift - 1);
        let mut next: Vec<u32> = Vec::new();
        for (w, word) in seen.iter().enumerate() {
            let mut bits = word.load(Ordering::Relaxed);
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                next.push((((w * 64 + b) as u32) << shift) | forced);
            }
        }
        next.sort_unstable_by_key(|&m| order_key(m));
        masks.extend_from_slice(&next);
        tier_start.push(masks.len());
        current = next;
    }

    let mut xs = Vec::with_capacity(masks.len() * (n - 1));
    for &mask in &masks {
        let tier = tier_of_mask(n, mask);
        let code = DCode { mask, external: (n - tier - mask.count_ones() as usize) as u8 };
        xs.extend(reconstruct(n, code));
    }
    Ok(StateSpace { n, masks, xs, tier_start })
}

impl StateSpace {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of transient states, `Fib(n+1) - 1`.
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Transient states plus the MRCA.
    pub fn total_with_absorbing(&self) -> usize {
        self.len() + 1
    }

    /// 1-based index of the MRCA pseudo-state.
    pub fn absorbing_index(&self) -> usize {
        self.len() + 1
    }

    pub fn num_tiers(&self) -> usize {
        self.n - 1
    }

    /// 0-based index range of tier `t` within the global order.
    pub fn tier_range(&self, t: usize) -> std::ops::Range<usize> {
        self.tier_start[t]..self.tier_start[t + 1]
    }

    pub fn tier_size(&self, t: usize) -> usize {
        self.tier_start[t + 1] - self.tier_start[t]
    }

    pub fn tier_sizes(&self) -> Vec<usize> {
        (0..self.num_tiers()).map(|t| self.tier_size(t)).collect()
    }

    /// The state with 1-based `index`.
    pub fn state(&self, index: usize) -> RankedState<'_> {
        assert!(index >= 1 && index <= self.len(), "state index {index} out of range");
        let i = index - 1;
        let mask = self.masks[i];
        let tier = tier_of_mask(self.n, mask);
        let x = &self.xs[i * (self.n - 1)..(i + 1) * (self.n - 1)];
        RankedState { x, tier, index, dcode: DCode { mask, external: x[self.n - 2] } }
    }

    pub fn states(&self) -> impl Iterator<Item = RankedState<'_>> {
        (1..=self.len()).map(move |i| self.state(i))
    }

    pub fn tier(&self, t: usize) -> impl Iterator<Item = RankedState<'_>> {
        self.tier_range(t).map(move |i| self.state(i + 1))
    }

    pub fn tier_masks(&self, t: usize) -> &[u32] {
        &self.masks[self.tier_range(t)]
    }

    /// 1-based index of the state with decremental mask `mask`.
    pub fn index_of_mask(&self, mask: u32) -> Option<usize> {
        let tier = tier_of_mask(self.n, mask);
        if tier > self.n - 2 {
            return None;
        }
        let range = self.tier_range(tier);
        let key = order_key(mask);
        self.masks[range.clone()]
            .binary_search_by_key(&key, |&m| order_key(m))
            .ok()
            .map(|pos| range.start + pos + 1)
    }

    /// Position of a mask within its own tier.
    pub(crate) fn position_in_tier(&self, tier: usize, mask: u32) -> Option<usize> {
        let key = order_key(mask);
        self.tier_masks(tier).binary_search_by_key(&key, |&m| order_key(m)).ok()
    }

    /// 1-based index of the state vector `x`.
    pub fn locate(&self, x: &[u8]) -> Option<usize> {
        if x.len() != self.n - 1 {
            return None;
        }
        let (_, code) = validate_state(x).ok()?;
        self.index_of_mask(code.mask)
    }

    /// Counts of states by last entry `j = 0..=n`, the MRCA excluded.
    pub fn last_entry_histogram(&self) -> Vec<u128> {
        let mut counts = vec![0u128; self.n + 1];
        for i in 0..self.len() {
            counts[self.xs[(i + 1) * (self.n - 1) - 1] as usize] += 1;
        }
        counts
    }
}

/// Fibonacci numbers with `Fib(1) = Fib(2) = 1`.
pub fn fib(k: usize) -> u128 {
    let (mut a, mut b) = (0u128, 1u128);
    for _ in 0..k {
        (a, b) = (b, a + b);
    }
    a
}

/// Closed-form sizes of the classes `X_n^j` of states whose last entry is
/// `j`, for `j = 0..=n`; the single class `j = n` is the initial state.
/// Together with the MRCA they add up to `Fib(n+1)`.
pub fn last_entry_counts(n: usize) -> Result<Vec<u128>> {
    if n < 3 {
        return Err(Error::invalid(format!("n must be at least 3, got {n}")));
    }
    let mut counts = vec![0u128; n + 1];
    counts[n] = 1;
    counts[0] = fib(n - 1) - 1;
    for (j, c) in counts.iter_mut().enumerate().take(n - 1).skip(1) {
        *c = fib(n - 1 - j);
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;

    /// Independent construction: a state of `X_n` is the initial state or a
    /// state of `X_{n-1}` with its last entry repeated or decremented.
    fn recursive_oracle(n: usize) -> BTreeSet<Vec<u8>> {
        if n == 3 {
            return [vec![0, 3], vec![2, 1]].into_iter().collect();
        }
        let mut out = BTreeSet::new();
        let mut init = vec![0u8; n - 1];
        init[n - 2] = n as u8;
        out.insert(init);
        for y in recursive_oracle(n - 1) {
            let last = *y.last().unwrap();
            for delta in 0..=1u8 {
                if last < delta {
                    continue;
                }
                let mut x = y.clone();
                x.push(last - delta);
                if (x[n - 2] as usize) <= n - 2 {
                    out.insert(x);
                }
            }
        }
        out
    }

    #[test]
    fn small_spaces_match_known_lists() {
        let s4 = enumerate_states(4).unwrap();
        let got: Vec<Vec<u8>> = s4.states().map(|s| s.x.to_vec()).collect();
        assert_eq!(got, vec![vec![0, 0, 4], vec![0, 3, 2], vec![2, 1, 1], vec![2, 1, 0]]);

        let s5 = enumerate_states(5).unwrap();
        let got: Vec<Vec<u8>> = s5.states().map(|s| s.x.to_vec()).collect();
        assert_eq!(
            got,
            vec![
                vec![0, 0, 0, 5],
                vec![0, 0, 4, 3],
                vec![0, 3, 2, 2],
                vec![0, 3, 2, 1],
                vec![2, 1, 1, 1],
                vec![2, 1, 1, 0],
                vec![2, 1, 0, 0],
            ]
        );
        assert_eq!(s5.tier_sizes(), vec![1, 1, 2, 3]);
    }

    #[test]
    fn n6_ordering_matches_cost_table_indices() {
        let s = enumerate_states(6).unwrap();
        assert_eq!(s.state(7).x, &[0, 3, 2, 1, 1]);
        assert_eq!(s.state(8).x, &[0, 3, 2, 1, 0]);
        assert_eq!(s.state(10).x, &[2, 1, 1, 1, 0]);
        assert_eq!(s.state(12).x, &[2, 1, 0, 0, 0]);
    }

    #[test]
    fn encoding_examples() {
        let c = diff_encoding(&[0, 3, 2, 1, 1]).unwrap();
        assert_eq!((c.prefix(6), c.external), (vec![0, 1, 1, 0], 1));
        let c = diff_encoding(&[0, 0, 0, 5]).unwrap();
        assert_eq!((c.prefix(5), c.external), (vec![0, 0, 0], 5));
        let c = diff_encoding(&[0, 0, 0, 5, 4, 4, 3, 2, 1, 0]).unwrap();
        assert_eq!((c.prefix(11), c.external), (vec![0, 0, 0, 1, 0, 1, 1, 1, 1], 0));
        assert!(diff_encoding(&[0, 3, 1, 1]).is_err());
    }

    #[test]
    fn matches_recursive_oracle() {
        for n in 3..=14 {
            let space = enumerate_states(n).unwrap();
            let ours: BTreeSet<Vec<u8>> = space.states().map(|s| s.x.to_vec()).collect();
            assert_eq!(ours.len(), space.len(), "duplicates at n={n}");
            assert_eq!(ours, recursive_oracle(n), "n={n}");
        }
    }

    #[test]
    fn counts_follow_fibonacci() {
        for n in 3..=22 {
            let space = enumerate_states(n).unwrap();
            assert_eq!(space.total_with_absorbing() as u128, fib(n + 1));
            let counts = last_entry_counts(n).unwrap();
            assert_eq!(space.last_entry_histogram(), counts, "n={n}");
            assert_eq!(counts.iter().sum::<u128>() + 1, fib(n + 1));
        }
        assert_eq!(last_entry_counts(3).unwrap(), vec![0, 1, 0, 1]);
    }

    #[test]
    fn capacity_and_range_errors() {
        assert!(matches!(enumerate_states(2), Err(Error::Invalid(_))));
        let err = enumerate_states(31).unwrap_err();
        assert!(err.to_string().contains("Fib(32) = 2178309"), "{err}");
        assert!(matches!(enumerate_states_with_limit(8, 7), Err(Error::Capacity { .. })));
    }

    #[test]
    fn tiers_are_ordered_descending() {
        let space = enumerate_states(9).unwrap();
        for t in 0..space.num_tiers() {
            let xs: Vec<&[u8]> = space.tier(t).map(|s| s.x).collect();
            assert!(xs.windows(2).all(|w| w[0] > w[1]), "tier {t}");
            assert!(space.tier(t).all(|s| s.tier == t && *s.x.iter().max().unwrap() as usize == 9 - t));
        }
        assert_eq!(space.state(1).x.last(), Some(&9));
        assert_eq!(&space.state(2).x[6..], &[8, 7]);
    }

    proptest! {
        #[test]
        fn round_trip_and_lookup(n in 3usize..16, pick in 0usize..10_000) {
            let space = enumerate_states(n).unwrap();
            let s = space.state(pick % space.len() + 1);
            let code = diff_encoding(s.x).unwrap();
            prop_assert_eq!(code, s.dcode);
            prop_assert_eq!(reconstruct(n, code), s.x.to_vec());
            prop_assert_eq!(space.locate(s.x), Some(s.index));
            prop_assert_eq!(s.external(), *s.x.last().unwrap() as usize);
            let mut weight = 0;
            for_each_coalescence(n, s.tier, code, |child, w, _| {
                weight += w;
                assert!(space.index_of_mask(child.mask).is_some());
            });
            if s.tier + 2 < n {
                let m = (n - s.tier) as u64;
                prop_assert_eq!(weight, m * (m - 1) / 2);
            }
        }
    }
}
