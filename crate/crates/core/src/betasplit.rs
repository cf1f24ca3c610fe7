//! Ranked tree shapes from the Blum-François beta-splitting model.
//!
//! A block of `k` leaves splits into `(i, k-i)` with probability
//! proportional to `Γ(β+1+i) Γ(β+1+k-i) / (Γ(i+1) Γ(k-i+1))`. The shape
//! alone carries no ranking, so internal nodes are ranked by a uniformly
//! random linear extension of the ancestor order. At `β = 0` this gives the
//! Yule/Kingman law on ranked shapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::fmatrix::{Child, FMatrix, RankedTree};

/// Largest tree size the sampler accepts; F-matrix entries are 8-bit.
pub const MAX_N: usize = 255;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaConfig {
    pub beta: f64,
    pub n: usize,
    pub seed: u64,
}

impl BetaConfig {
    pub fn new(beta: f64, n: usize, seed: u64) -> Result<Self> {
        let c = BetaConfig { beta, n, seed };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.beta, self.n)
    }
}

fn check(beta: f64, n: usize) -> Result<()> {
    if !(beta > -2.0) || !beta.is_finite() {
        return Err(Error::invalid(format!("beta must be a finite number greater than -2, got {beta}")));
    }
    if !(3..=MAX_N).contains(&n) {
        return Err(Error::invalid(format!("n must lie in 3..={MAX_N}, got {n}")));
    }
    Ok(())
}

/// Split distributions for every block size up to `n`, precomputed once.
#[derive(Clone, Debug)]
pub struct BetaSplitter {
    beta: f64,
    n: usize,
    /// `cdf[k]` holds the cumulative probabilities of `i = 1..k-1`.
    cdf: Vec<Vec<f64>>,
}

impl BetaSplitter {
    pub fn new(beta: f64, n: usize) -> Result<Self> {
        check(beta, n)?;
        let mut cdf = vec![Vec::new(); n + 1];
        for (k, slot) in cdf.iter_mut().enumerate().skip(2) {
            let p = split_probabilities(beta, k);
            let mut acc = 0.0;
            *slot = p
                .iter()
                .map(|x| {
                    acc += x;
                    acc
                })
                .collect();
        }
        Ok(BetaSplitter { beta, n, cdf })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn draw_split<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> usize {
        let c = &self.cdf[k];
        let u: f64 = rng.random::<f64>() * c[c.len() - 1];
        (c.partition_point(|&x| x <= u) + 1).min(k - 1)
    }

    /// Grows the subtree of a block of `k` leaves. Returns the arena id of
    /// its root (`None` for a leaf) and a uniform linear extension of its
    /// internal nodes.
    fn grow<R: Rng + ?Sized>(
        &self,
        k: usize,
        rng: &mut R,
        arena: &mut Vec<[Option<usize>; 2]>,
    ) -> (Option<usize>, Vec<usize>) {
        if k == 1 {
            return (None, Vec::new());
        }
        let i = self.draw_split(k, rng);
        let id = arena.len();
        arena.push([None, None]);
        let (left, left_order) = self.grow(i, rng, arena);
        let (right, right_order) = self.grow(k - i, rng, arena);
        arena[id] = [left, right];
        let mut order = Vec::with_capacity(1 + left_order.len() + right_order.len());
        order.push(id);
        interleave(&left_order, &right_order, rng, &mut order);
        (Some(id), order)
    }

    pub fn sample_tree<R: Rng + ?Sized>(&self, rng: &mut R) -> RankedTree {
        let n = self.n;
        let mut arena = Vec::with_capacity(n - 1);
        let (_, order) = self.grow(n, rng, &mut arena);
        let mut rank = vec![0usize; arena.len()];
        for (pos, &id) in order.iter().enumerate() {
            rank[id] = pos + 2;
        }
        let as_child = |c: Option<usize>| c.map_or(Child::Leaf, |id| Child::Node(rank[id]));
        let mut children = vec![[Child::Leaf; 2]; n - 1];
        for (id, ch) in arena.iter().enumerate() {
            children[rank[id] - 2] = [as_child(ch[0]), as_child(ch[1])];
        }
        RankedTree::from_children(n, children)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FMatrix {
        self.sample_tree(rng).to_fmatrix()
    }
}

/// Uniformly random shuffle of two sequences that keeps each one's order.
fn interleave<R: Rng + ?Sized>(a: &[usize], b: &[usize], rng: &mut R, out: &mut Vec<usize>) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let left = a.len() - i;
        let right = b.len() - j;
        if rng.random_range(0..left + right) < left {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

/// Probabilities of splitting a block of `k >= 2` leaves into `(i, k-i)`,
/// for `i = 1..k-1`.
pub fn split_probabilities(beta: f64, k: usize) -> Vec<f64> {
    let logw: Vec<f64> = (1..k)
        .map(|i| {
            let (i, j) = (i as f64, (k - i) as f64);
            ln_gamma(beta + 1.0 + i) + ln_gamma(beta + 1.0 + j) - ln_gamma(i + 1.0) - ln_gamma(j + 1.0)
        })
        .collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// One tree, deterministic in the seed.
pub fn sample_beta_tree(config: &BetaConfig) -> Result<FMatrix> {
    let splitter = BetaSplitter::new(config.beta, config.n)?;
    Ok(splitter.sample(&mut ChaCha8Rng::seed_from_u64(config.seed)))
}

/// `count` trees drawn from a single stream seeded by `config.seed`.
pub fn sample_beta_corpus(config: &BetaConfig, count: usize) -> Result<Vec<FMatrix>> {
    let splitter = BetaSplitter::new(config.beta, config.n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok((0..count).map(|_| splitter.sample(&mut rng)).collect())
}
