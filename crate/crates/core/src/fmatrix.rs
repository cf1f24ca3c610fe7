//! F-matrices: the lower-triangular integer encoding of ranked tree shapes.
//!
//! Column `j` of `F` is the chain state at tier `n-1-j`; entry `F_ij` counts
//! the branches alive between the `j`-th and `(j+1)`-th branching events
//! (counted from the root) that are still unsplit below event `i`.

use std::fmt;

use crate::error::{Error, Result};
use crate::kingman::{feasible, ChainPath};
use crate::statespace::{diff_encoding, validate_state, DCode, RankedState, StateSpace};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FMatrix {
    n: usize,
    /// Row-major `(n-1) x (n-1)`, zeros above the diagonal.
    entries: Vec<u8>,
}

impl fmt::Debug for FMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FMatrix").field("n", &self.n).field("tri", &self.lower_rows()).finish()
    }
}

/// Non-fixed positions `(i, j)` (1-based), `j <= n-3`, `i >= j+2`, ordered
/// row by row.
pub fn nonfixed_positions(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 3..n {
        for j in 1..=i.saturating_sub(2).min(n.saturating_sub(3)) {
            out.push((i, j));
        }
    }
    out
}

pub fn nonfixed_count(n: usize) -> usize {
    if n < 4 {
        0
    } else {
        (n - 2) * (n - 3) / 2
    }
}

impl FMatrix {
    /// Builds and validates from the lower triangle given row by row
    /// (row `i` has `i` entries).
    pub fn from_lower_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len() + 1;
        if n < 3 {
            return Err(Error::invalid("an F-matrix needs at least 2 rows"));
        }
        let mut entries = vec![0u8; (n - 1) * (n - 1)];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != i + 1 {
                return Err(Error::invalid(format!("row {} has {} entries, expected {}", i + 1, row.len(), i + 1)));
            }
            entries[i * (n - 1)..i * (n - 1) + i + 1].copy_from_slice(row);
        }
        let f = FMatrix { n, entries };
        f.validate()?;
        Ok(f)
    }

    /// Builds and validates from a full square matrix.
    pub fn from_square(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len() + 1;
        if n < 3 || rows.iter().any(|r| r.len() != n - 1) {
            return Err(Error::invalid("expected a square (n-1)x(n-1) matrix with n >= 3"));
        }
        let f = FMatrix { n, entries: rows.concat() };
        f.validate()?;
        Ok(f)
    }

    /// Assembles the matrix whose column `n-1-t` is `codes[t]`.
    pub fn from_codes(n: usize, codes: &[DCode]) -> Self {
        assert_eq!(codes.len(), n - 1);
        let mut entries = vec![0u8; (n - 1) * (n - 1)];
        for (t, code) in codes.iter().enumerate() {
            let col = n - 2 - t;
            let x = crate::statespace::reconstruct(n, *code);
            for (i, v) in x.into_iter().enumerate() {
                entries[i * (n - 1) + col] = v;
            }
        }
        FMatrix { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry `F_ij`, 1-based.
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[(i - 1) * (self.n - 1) + (j - 1)]
    }

    /// Column `j` (1-based) as a state vector.
    pub fn column(&self, j: usize) -> Vec<u8> {
        (1..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn lower_rows(&self) -> Vec<Vec<u8>> {
        (1..self.n).map(|i| (1..=i).map(|j| self.get(i, j)).collect()).collect()
    }

    /// Checks the diagonal, the zero upper triangle, that every column is a
    /// state of the right tier and that consecutive columns are feasible
    /// transitions. Errors name the first failing column.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        let bad = |column: usize, reason: String| Error::InvalidFMatrix { column, reason };
        let mut prev: Option<(Vec<u8>, usize, DCode)> = None;
        for j in (1..n).rev() {
            let x = self.column(j);
            if x[j - 1] as usize != j + 1 {
                return Err(bad(j, format!("diagonal entry F_{j}{j} is {}, expected {}", x[j - 1], j + 1)));
            }
            if let Some(i) = x[..j - 1].iter().position(|&v| v != 0) {
                return Err(bad(j, format!("entry above the diagonal in row {} is nonzero", i + 1)));
            }
            let (tier, code) = validate_state(&x).map_err(|e| bad(j, e.to_string()))?;
            if tier != n - 1 - j {
                return Err(bad(j, format!("column belongs to tier {tier}, expected {}", n - 1 - j)));
            }
            if let Some((px, ptier, pcode)) = &prev {
                let a = RankedState { x: px, tier: *ptier, index: 0, dcode: *pcode };
                let b = RankedState { x: &x, tier, index: 0, dcode: code };
                if feasible(&a, &b)?.is_none() {
                    return Err(bad(j, format!("no single coalescence leads from column {} to column {j}", j + 1)));
                }
            }
            prev = Some((x, tier, code));
        }
        Ok(())
    }

    pub fn from_path(space: &StateSpace, path: &ChainPath) -> Result<Self> {
        let n = space.n();
        if path.indices.len() != n - 1 {
            return Err(Error::invalid(format!("path has {} states, expected {}", path.indices.len(), n - 1)));
        }
        let mut codes = Vec::with_capacity(n - 1);
        for (t, &idx) in path.indices.iter().enumerate() {
            if idx == 0 || idx > space.len() {
                return Err(Error::invalid(format!("state index {idx} out of range")));
            }
            let s = space.state(idx);
            if s.tier != t {
                return Err(Error::TierMismatch { expected: t, found: s.tier });
            }
            if t > 0 {
                let prev = space.state(path.indices[t - 1]);
                if feasible(&prev, &s)?.is_none() {
                    return Err(Error::Infeasible { from: prev.index, to: idx });
                }
            }
            codes.push(s.dcode);
        }
        Ok(Self::from_codes(n, &codes))
    }

    pub fn to_path(&self, space: &StateSpace) -> Result<ChainPath> {
        if space.n() != self.n {
            return Err(Error::invalid(format!("F-matrix has n = {}, space has n = {}", self.n, space.n())));
        }
        self.validate()?;
        let indices = (0..self.n - 1)
            .map(|t| {
                let col = self.n - 1 - t;
                space.locate(&self.column(col)).ok_or_else(|| Error::InvalidFMatrix {
                    column: col,
                    reason: "column is not a state of the space".into(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(ChainPath { indices })
    }

    /// Decremental codes of the columns, tier order.
    pub fn codes(&self) -> Vec<DCode> {
        (0..self.n - 1)
            .map(|t| diff_encoding(&self.column(self.n - 1 - t)).expect("validated matrix"))
            .collect()
    }

    /// Sum of the last row: the total external branch length in units of
    /// inter-event intervals.
    pub fn balance_e(&self) -> u32 {
        (1..self.n).map(|j| self.get(self.n - 1, j) as u32).sum()
    }

    /// Sum of the non-fixed entries.
    pub fn balance_s(&self) -> u32 {
        nonfixed_positions(self.n).iter().map(|&(i, j)| self.get(i, j) as u32).sum()
    }

    pub fn nonfixed_entries(&self) -> Vec<u8> {
        nonfixed_positions(self.n).iter().map(|&(i, j)| self.get(i, j)).collect()
    }

    pub fn squared_distance(&self, other: &Self) -> Result<u64> {
        if self.n != other.n {
            return Err(Error::invalid(format!("dimension mismatch: n = {} vs n = {}", self.n, other.n)));
        }
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| {
                let d = a as i64 - b as i64;
                (d * d) as u64
            })
            .sum())
    }

    /// Frobenius distance between the two matrices.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok((self.squared_distance(other)? as f64).sqrt())
    }

    pub fn to_tree(&self) -> RankedTree {
        RankedTree::from_codes(self.n, &self.codes())
    }

    pub fn sackin(&self) -> u64 {
        self.to_tree().sackin()
    }

    pub fn colless(&self) -> u64 {
        self.to_tree().colless()
    }
}

/// Child of an internal node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Child {
    Leaf,
    /// Internal node, identified by its rank.
    Node(usize),
}

/// An internal node. `rank` is the number of lineages just below it, so
/// the root has rank 2 and the last branching event has rank `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub rank: usize,
    pub children: [Child; 2],
    pub leaves: usize,
}

/// A ranked tree shape. Children are stored larger subtree first, ties
/// broken by the smaller rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedTree {
    n: usize,
    /// `nodes[r - 2]` is the node of rank `r`.
    nodes: Vec<TreeNode>,
}

impl RankedTree {
    /// Replays the coalescences of a path of codes, tips to root.
    pub fn from_codes(n: usize, codes: &[DCode]) -> Self {
        let mut children: Vec<[Child; 2]> = vec![[Child::Leaf; 2]; n - 1];
        // Internal lineage at decremental position p hangs below the node of rank p + 2.
        for t in 0..n - 1 {
            let cur = codes[t];
            let rank = n - t;
            let pair = if t + 1 < n - 1 {
                let next = codes[t + 1];
                let new_bit = 1u32 << (n - 3 - t);
                let removed = cur.mask & !(next.mask & !new_bit);
                let ext_drop = (cur.external - next.external) as usize;
                lineage_pair(removed, ext_drop)
            } else {
                lineage_pair(cur.mask, cur.external as usize)
            };
            children[rank - 2] = pair;
        }
        Self::from_children(n, children)
    }

    /// Builds the tree from the children of each node, `children[r - 2]`
    /// belonging to the node of rank `r`. Every child rank must exceed its
    /// parent's.
    pub(crate) fn from_children(n: usize, children: Vec<[Child; 2]>) -> Self {
        debug_assert_eq!(children.len(), n - 1);
        let mut nodes: Vec<TreeNode> = Vec::with_capacity(n - 1);
        let mut leaves = vec![0usize; n + 1];
        for rank in (2..=n).rev() {
            let mut ch = children[rank - 2];
            let size = |c: Child| match c {
                Child::Leaf => 1,
                Child::Node(r) => leaves[r],
            };
            let key = |c: Child| {
                let r = match c {
                    Child::Leaf => usize::MAX,
                    Child::Node(r) => r,
                };
                (std::cmp::Reverse(size(c)), r)
            };
            if key(ch[1]) < key(ch[0]) {
                ch.swap(0, 1);
            }
            leaves[rank] = size(ch[0]) + size(ch[1]);
            nodes.push(TreeNode { rank, children: ch, leaves: leaves[rank] });
        }
        nodes.reverse();
        RankedTree { n, nodes }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn node(&self, rank: usize) -> &TreeNode {
        &self.nodes[rank - 2]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Sum of root-to-leaf depths, counted in edges.
    pub fn sackin(&self) -> u64 {
        // Every internal node contributes one edge to each leaf below it.
        self.nodes.iter().map(|v| v.leaves as u64).sum()
    }

    /// Sum over internal nodes of the absolute difference of the leaf
    /// counts of the two subtrees.
    pub fn colless(&self) -> u64 {
        self.nodes
            .iter()
            .map(|v| {
                let s = |c: Child| match c {
                    Child::Leaf => 1,
                    Child::Node(r) => self.node(r).leaves,
                };
                s(v.children[0]).abs_diff(s(v.children[1])) as u64
            })
            .sum()
    }

    /// Recomputes the F-matrix from the tree: `F_ij` counts edges whose
    /// parent has rank at most `j+1` and whose child is a leaf or has rank
    /// greater than `i+1`.
    pub fn to_fmatrix(&self) -> FMatrix {
        let n = self.n;
        let mut entries = vec![0u8; (n - 1) * (n - 1)];
        for v in &self.nodes {
            let pe = v.rank - 1;
            for c in v.children {
                let ce = match c {
                    Child::Leaf => n,
                    Child::Node(r) => r - 1,
                };
                for j in pe..n {
                    for i in j..ce.min(n) {
                        entries[(i - 1) * (n - 1) + (j - 1)] += 1;
                    }
                }
            }
        }
        FMatrix { n, entries }
    }

    /// Parenthesised shape, larger subtree first, leaves as `*`.
    pub fn shape_string(&self) -> String {
        fn go(t: &RankedTree, c: Child, out: &mut String) {
            match c {
                Child::Leaf => out.push('*'),
                Child::Node(r) => {
                    out.push('(');
                    go(t, t.node(r).children[0], out);
                    out.push(',');
                    go(t, t.node(r).children[1], out);
                    out.push(')');
                }
            }
        }
        let mut s = String::new();
        go(self, Child::Node(2), &mut s);
        s
    }
}

fn lineage_pair(internal_bits: u32, externals: usize) -> [Child; 2] {
    let mut out = Vec::with_capacity(2);
    let mut bits = internal_bits;
    while bits != 0 {
        let p = bits.trailing_zeros() as usize + 1;
        bits &= bits - 1;
        out.push(Child::Node(p + 2));
    }
    out.extend(std::iter::repeat_n(Child::Leaf, externals));
    assert_eq!(out.len(), 2, "a coalescence merges exactly two lineages");
    [out[0], out[1]]
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::kingman::{enumerate_paths, kernel};
    use crate::scalar::Rational;
    use crate::statespace::enumerate_states;

    pub(crate) fn fig3_caterpillar_like() -> FMatrix {
        FMatrix::from_lower_rows(&[
            vec![2],
            vec![1, 3],
            vec![1, 2, 4],
            vec![1, 2, 3, 5],
            vec![1, 2, 3, 4, 6],
            vec![1, 1, 2, 3, 5, 7],
            vec![1, 1, 2, 3, 4, 6, 8],
            vec![1, 1, 2, 3, 4, 6, 7, 9],
            vec![1, 1, 2, 3, 4, 6, 7, 8, 10],
        ])
        .unwrap()
    }

    /// Read off the drawn balanced n=10 tree. The printed matrix next to it
    /// has 3 at (7,5), which would drop two lineages in one event.
    pub(crate) fn fig3_balanced_like() -> FMatrix {
        FMatrix::from_lower_rows(&[
            vec![2],
            vec![1, 3],
            vec![0, 2, 4],
            vec![0, 1, 3, 5],
            vec![0, 1, 2, 4, 6],
            vec![0, 1, 2, 4, 5, 7],
            vec![0, 0, 1, 3, 4, 6, 8],
            vec![0, 0, 1, 2, 3, 5, 7, 9],
            vec![0, 0, 1, 1, 2, 4, 6, 8, 10],
        ])
        .unwrap()
    }

    pub(crate) fn fig1_matrices() -> Vec<FMatrix> {
        let rows: [[[u8; 4]; 4]; 5] = [
            [[2, 0, 0, 0], [1, 3, 0, 0], [1, 2, 4, 0], [1, 2, 3, 5]],
            [[2, 0, 0, 0], [1, 3, 0, 0], [1, 2, 4, 0], [1, 1, 3, 5]],
            [[2, 0, 0, 0], [1, 3, 0, 0], [1, 2, 4, 0], [0, 1, 3, 5]],
            [[2, 0, 0, 0], [1, 3, 0, 0], [0, 2, 4, 0], [0, 2, 3, 5]],
            [[2, 0, 0, 0], [1, 3, 0, 0], [0, 2, 4, 0], [0, 1, 3, 5]],
        ];
        rows.iter().map(|m| FMatrix::from_square(&m.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()).collect()
    }

    #[test]
    fn balance_indices_of_the_two_n10_examples() {
        let a = fig3_caterpillar_like();
        let b = fig3_balanced_like();
        assert_eq!((a.balance_e(), a.balance_s()), (42, 69));
        assert_eq!((b.balance_e(), b.balance_s()), (32, 44));
    }

    #[test]
    fn n11_path_reproduces_displayed_matrix() {
        let want = FMatrix::from_lower_rows(&[
            vec![2],
            vec![1, 3],
            vec![1, 2, 4],
            vec![1, 1, 3, 5],
            vec![1, 1, 3, 4, 6],
            vec![1, 1, 3, 4, 5, 7],
            vec![1, 1, 2, 3, 4, 6, 8],
            vec![1, 1, 1, 2, 3, 5, 7, 9],
            vec![1, 1, 1, 1, 2, 4, 6, 8, 10],
            vec![0, 0, 0, 0, 1, 3, 5, 7, 9, 11],
        ])
        .unwrap();
        let space = enumerate_states(11).unwrap();
        let path = want.to_path(&space).unwrap();
        assert_eq!(FMatrix::from_path(&space, &path).unwrap(), want);
        assert_eq!(want.column(4), vec![0, 0, 0, 5, 4, 4, 3, 2, 1, 0]);
        assert_eq!(want.column(5), vec![0, 0, 0, 0, 6, 5, 4, 3, 2, 1]);
    }

    #[test]
    fn n6_mean_paths_and_fig1_path() {
        let space = enumerate_states(6).unwrap();
        let f = FMatrix::from_path(&space, &ChainPath { indices: vec![1, 2, 4, 6, 10] }).unwrap();
        assert_eq!(f.lower_rows(), vec![vec![2], vec![1, 3], vec![1, 2, 4], vec![1, 2, 3, 5], vec![0, 1, 2, 4, 6]]);

        let space5 = enumerate_states(5).unwrap();
        let f3 = &fig1_matrices()[2];
        assert_eq!(f3.to_path(&space5).unwrap().indices, vec![1, 2, 4, 6]);
        assert_eq!(FMatrix::from_path(&enumerate_states(3).unwrap(), &ChainPath { indices: vec![1, 2] })
            .unwrap()
            .lower_rows(), vec![vec![2], vec![1, 3]]);
    }

    #[test]
    fn printed_balanced_matrix_is_rejected() {
        let err = FMatrix::from_lower_rows(&[
            vec![2],
            vec![1, 3],
            vec![0, 2, 4],
            vec![0, 1, 3, 5],
            vec![0, 1, 2, 4, 6],
            vec![0, 1, 2, 4, 5, 7],
            vec![0, 0, 1, 3, 3, 6, 8],
            vec![0, 0, 1, 2, 3, 5, 7, 9],
            vec![0, 0, 1, 1, 2, 4, 6, 8, 10],
        ])
        .unwrap_err();
        assert!(matches!(err, Error::InvalidFMatrix { column: 5, .. }), "{err}");
    }

    #[test]
    fn validation_reports_failing_column() {
        let err = FMatrix::from_lower_rows(&[vec![3], vec![1, 3], vec![1, 2, 4], vec![1, 2, 3, 5]]).unwrap_err();
        assert!(matches!(err, Error::InvalidFMatrix { column: 1, .. }), "{err}");
        // Column 2 drops two lineages from column 3 to 2.
        let err = FMatrix::from_lower_rows(&[vec![2], vec![1, 3], vec![1, 2, 4], vec![1, 0, 3, 5]]).unwrap_err();
        assert!(matches!(err, Error::InvalidFMatrix { .. }), "{err}");
        // Each column is a state but column 1 cannot follow column 2.
        let err = FMatrix::from_lower_rows(&[vec![2], vec![0, 3], vec![0, 2, 4], vec![0, 1, 3, 5]]).unwrap_err();
        assert!(matches!(err, Error::InvalidFMatrix { .. }), "{err}");
    }

    #[test]
    fn fig1_distances() {
        let m = fig1_matrices();
        assert_eq!(m[0].distance(&m[0]).unwrap(), 0.0);
        // The first two matrices differ only in F_42 (2 versus 1).
        assert_eq!(m[0].distance(&m[1]).unwrap(), 1.0);
        for a in &m {
            for b in &m {
                assert_eq!(a.distance(b).unwrap(), b.distance(a).unwrap());
                for c in &m {
                    assert!(a.distance(c).unwrap() <= a.distance(b).unwrap() + b.distance(c).unwrap() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn bijection_and_tree_round_trip() {
        for n in 3..=10 {
            let space = enumerate_states(n).unwrap();
            let k = kernel::<f64>(&space);
            let paths = enumerate_paths(&k).unwrap();
            let mut seen = std::collections::HashSet::new();
            for (p, _) in &paths {
                let f = FMatrix::from_path(&space, p).unwrap();
                f.validate().unwrap();
                assert_eq!(&f.to_path(&space).unwrap(), p);
                let tree = f.to_tree();
                assert_eq!(tree.to_fmatrix(), f);
                assert!(seen.insert(f));
            }
        }
    }

    #[test]
    fn tree_indices() {
        let cat = fig3_caterpillar_like();
        let t = cat.to_tree();
        // Not a caterpillar (two cherries), but close.
        assert_eq!(t.node(2).leaves, 10);
        let space = enumerate_states(10).unwrap();
        let mut caterpillar: Vec<DCode> = Vec::new();
        // Caterpillar: always merge the newest internal lineage with a leaf.
        let mut code = DCode { mask: 0, external: 10 };
        caterpillar.push(code);
        for t in 0..8 {
            let new_bit = 1u32 << (10 - 3 - t);
            code = if code.mask == 0 {
                DCode { mask: new_bit, external: code.external - 2 }
            } else {
                DCode { mask: new_bit, external: code.external - 1 }
            };
            caterpillar.push(code);
        }
        let f = FMatrix::from_codes(10, &caterpillar);
        f.validate().unwrap();
        assert!(f.to_path(&space).is_ok());
        assert_eq!((f.sackin(), f.colless()), (54, 36));
        assert_eq!(f.to_tree().shape_string(), "(((((((((*,*),*),*),*),*),*),*),*),*)");
    }

    #[test]
    fn balanced_n8_has_zero_colless() {
        let space = enumerate_states(8).unwrap();
        let k = kernel::<Rational>(&space);
        let found = enumerate_paths(&k)
            .unwrap()
            .into_iter()
            .map(|(p, _)| FMatrix::from_path(&space, &p).unwrap())
            .filter(|f| f.colless() == 0)
            .count();
        // 80 linear extensions of the balanced shape's node order, divided by
        // 2^3 for the three swaps of identical subtrees.
        assert_eq!(found, 10);
    }

    #[test]
    fn n4_balance_s_values() {
        let space = enumerate_states(4).unwrap();
        let k = kernel::<Rational>(&space);
        let mut s: Vec<(u32, u64)> = enumerate_paths(&k)
            .unwrap()
            .into_iter()
            .map(|(p, _)| {
                let f = FMatrix::from_path(&space, &p).unwrap();
                (f.balance_s(), f.sackin())
            })
            .collect();
        s.sort();
        assert_eq!(s, vec![(0, 8), (1, 9)]);
    }

    #[test]
    fn nonfixed_positions_row_order() {
        assert_eq!(nonfixed_positions(5), vec![(3, 1), (4, 1), (4, 2)]);
        assert_eq!(nonfixed_positions(25).len(), 253);
        assert!(nonfixed_positions(3).is_empty());
    }
}
