//! Tests of the Kingman null for samples of ranked tree shapes, plus the
//! Monte-Carlo harness used to estimate their level and power.
//!
//! * `G_E`: likelihood-ratio goodness of fit of the external branch length
//!   `E` against its exact null law, on boxes of roughly equal probability.
//! * `W_F`: the standardised F-matrix mean projected on the all-ones
//!   direction, compared with a standard normal.
//! * `W_SE`: the same construction for the pair `(S, E)`.
//! * Hotelling: `m (F̄ - M)ᵀ Σ⁻¹ (F̄ - M)` against `χ²` with one degree of
//!   freedom per non-fixed entry. It serves as the baseline.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::bcp::e_pmf;
use crate::betasplit::BetaSplitter;
use crate::error::{Error, Result};
use crate::feedforward::{nonfixed_moments, MomentSummary};
use crate::fmatrix::{nonfixed_count, FMatrix};
use crate::kingman::kernel;
use crate::linalg::Matrix;
use crate::phasetype::DiscretePhaseType;
use crate::scalar::Rational;
use crate::statespace::enumerate_states;

/// Eigenvalues of a covariance below this are treated as zero.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

/// Default number of `G_E` boxes before merging.
pub const DEFAULT_BOXES: usize = 10;

/// Every `G_E` box must expect at least this many observations.
pub const MIN_EXPECTED: f64 = 5.0;

/// Largest `n` for which the null moments are computed in exact arithmetic.
pub const EXACT_NULL_MAX_N: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "GE")]
    GE,
    #[serde(rename = "WF")]
    WF,
    #[serde(rename = "WSE")]
    WSE,
    #[serde(rename = "HT")]
    Hotelling,
}

impl TestKind {
    pub const ALL: [TestKind; 4] = [TestKind::GE, TestKind::WF, TestKind::WSE, TestKind::Hotelling];

    pub fn name(&self) -> &'static str {
        match self {
            TestKind::GE => "GE",
            TestKind::WF => "WF",
            TestKind::WSE => "WSE",
            TestKind::Hotelling => "HT",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "GE" | "G_E" => Ok(TestKind::GE),
            "WF" | "W_F" => Ok(TestKind::WF),
            "WSE" | "W_SE" => Ok(TestKind::WSE),
            "HT" | "HOTELLING" => Ok(TestKind::Hotelling),
            other => Err(Error::Invalid(format!("unknown test '{other}' (expected GE, WF, WSE or HT)"))),
        }
    }
}

/// Reference distribution of a statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NullDistribution {
    ChiSquared { df: usize },
    StandardNormal,
}

/// One `G_E` box: the closed range `lo..=hi` of `E` values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EBox {
    pub lo: usize,
    pub hi: usize,
    pub probability: f64,
    pub expected: f64,
    pub observed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportConfig {
    pub n: usize,
    pub m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<EBox>>,
    pub engine: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestReport {
    pub test: TestKind,
    pub statistic: f64,
    pub null: NullDistribution,
    pub p_value: f64,
    pub config: ReportConfig,
}

/// Contiguous partition of the support of `E`. The first box extends down
/// to 0 and the last one up to `usize::MAX`, so every value has a box.
#[derive(Clone, Debug, PartialEq)]
pub struct Boxing {
    bounds: Vec<(usize, usize)>,
    probs: Vec<f64>,
}

impl Boxing {
    /// Up to `k` boxes cut at the `1/k, 2/k, ...` quantiles of `pmf`
    /// (pairs `(value, probability)`, increasing values). Atoms are never
    /// split, so heavy atoms can yield fewer than `k` boxes.
    pub fn equiprobable(pmf: &[(usize, f64)], k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("G_E needs at least 2 boxes, got K = {k}")));
        }
        if pmf.is_empty() {
            return Err(Error::invalid("empty null distribution"));
        }
        let mut bounds = Vec::new();
        let mut probs = Vec::new();
        let mut lo = 0usize;
        let mut mass = 0.0;
        let mut acc = 0.0;
        let mut next_cut = 1usize;
        for (idx, &(v, p)) in pmf.iter().enumerate() {
            mass += p;
            acc += p;
            let last = idx + 1 == pmf.len();
            if !last && next_cut < k && acc >= next_cut as f64 / k as f64 - 1e-12 {
                bounds.push((lo, v));
                probs.push(mass);
                lo = v + 1;
                mass = 0.0;
                while next_cut < k && acc >= next_cut as f64 / k as f64 - 1e-12 {
                    next_cut += 1;
                }
            }
        }
        bounds.push((lo, usize::MAX));
        probs.push(mass);
        Ok(Boxing { bounds, probs })
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn bounds(&self) -> &[(usize, usize)] {
        &self.bounds
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Joins box `i` with box `i + 1`.
    pub fn merge(&mut self, i: usize) {
        assert!(i + 1 < self.len(), "no box to the right of {i}");
        self.bounds[i].1 = self.bounds[i + 1].1;
        self.probs[i] += self.probs[i + 1];
        self.bounds.remove(i + 1);
        self.probs.remove(i + 1);
    }

    /// Repeatedly merges the least probable box into its lighter neighbour
    /// until every box expects at least `min_expected` of `m` observations.
    pub fn merged_for(mut self, m: usize, min_expected: f64) -> Self {
        while self.len() > 1 {
            let (i, p) = self
                .probs
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, p)| (i, *p))
                .unwrap();
            if p * m as f64 >= min_expected {
                break;
            }
            let left = i.checked_sub(1).map(|l| self.probs[l]);
            let right = self.probs.get(i + 1).copied();
            match (left, right) {
                (Some(l), Some(r)) if l <= r => self.merge(i - 1),
                (Some(_), None) => self.merge(i - 1),
                _ => self.merge(i),
            }
        }
        self
    }

    pub fn index_of(&self, value: usize) -> usize {
        self.bounds.partition_point(|&(_, hi)| hi < value)
    }

    pub fn counts(&self, values: &[u32]) -> Vec<u64> {
        let mut c = vec![0u64; self.len()];
        for &v in values {
            c[self.index_of(v as usize)] += 1;
        }
        c
    }
}

/// `2 Σ O_k ln(O_k / A_k)`, terms with `O_k = 0` contributing nothing.
pub fn g_statistic(observed: &[u64], expected: &[f64]) -> f64 {
    2.0 * observed
        .iter()
        .zip(expected)
        .filter(|(o, _)| **o > 0)
        .map(|(&o, &a)| o as f64 * (o as f64 / a).ln())
        .sum::<f64>()
}

/// Symmetric inverse square root of a covariance matrix, with the pieces
/// the tests need cached.
#[derive(Clone, Debug)]
pub struct Whitener {
    inv_sqrt: DMatrix<f64>,
    inv: DMatrix<f64>,
    /// `Σ^{-1/2} e`, so that `eᵀ Σ^{-1/2} z = weights · z`.
    weights: Vec<f64>,
    min_eigenvalue: f64,
}

impl Whitener {
    pub fn new(sigma: &Matrix<f64>) -> Result<Self> {
        let d = sigma.rows();
        if d == 0 || sigma.cols() != d {
            return Err(Error::invalid("covariance must be a non-empty square matrix"));
        }
        let m = DMatrix::from_fn(d, d, |i, j| sigma[(i, j)]);
        let scale = m.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
        if (&m - m.transpose()).iter().any(|x| x.abs() > 1e-9 * scale) {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        let eig = SymmetricEigen::new(m);
        let min_eigenvalue = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eigenvalue < EIGENVALUE_FLOOR {
            return Err(Error::NotPositiveDefinite { min_eigenvalue });
        }
        let v = &eig.eigenvectors;
        let root = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
        let inv_sqrt = v * root * v.transpose();
        let inv = v * inv_diag * v.transpose();
        let weights = (0..d).map(|j| (0..d).map(|i| inv_sqrt[(i, j)]).sum()).collect();
        Ok(Whitener { inv_sqrt, inv, weights, min_eigenvalue })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn whiten(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|i| (0..self.dim()).map(|j| self.inv_sqrt[(i, j)] * z[j]).sum()).collect()
    }

    /// `eᵀ Σ^{-1/2} z`.
    pub fn projection(&self, z: &[f64]) -> f64 {
        self.weights.iter().zip(z).map(|(w, x)| w * x).sum()
    }

    /// `zᵀ Σ⁻¹ z`.
    pub fn quadratic(&self, z: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            let row: f64 = (0..d).map(|j| self.inv[(i, j)] * z[j]).sum();
            acc += z[i] * row;
        }
        acc
    }
}

/// Sufficient statistics of a sample. Sums are kept as integers so the
/// result does not depend on the order of the trees.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSummary {
    pub n: usize,
    pub m: usize,
    pub nonfixed_sums: Vec<u64>,
    pub s_sum: u64,
    pub e_sum: u64,
    pub e_values: Vec<u32>,
}

impl SampleSummary {
    pub fn new(sample: &[FMatrix]) -> Result<Self> {
        let first = sample.first().ok_or_else(|| Error::invalid("the sample is empty"))?;
        let mut summary = Self::empty(first.n());
        for f in sample {
            summary.push(f)?;
        }
        Ok(summary)
    }

    /// An empty summary to be filled with [`SampleSummary::push`], for
    /// corpora streamed from disk.
    pub fn empty(n: usize) -> Self {
        SampleSummary { n, m: 0, nonfixed_sums: vec![0; nonfixed_count(n)], s_sum: 0, e_sum: 0, e_values: Vec::new() }
    }

    pub fn push(&mut self, f: &FMatrix) -> Result<()> {
        if f.n() != self.n {
            return Err(Error::invalid(format!("mixed tree sizes in sample: {} and {}", self.n, f.n())));
        }
        // Same row-wise order as `fmatrix::nonfixed_positions`.
        let n = self.n;
        let mut k = 0;
        for i in 3..n {
            for j in 1..=(i - 2).min(n - 3) {
                let v = f.get(i, j) as u64;
                self.nonfixed_sums[k] += v;
                self.s_sum += v;
                k += 1;
            }
        }
        let e = f.balance_e();
        self.e_sum += e as u64;
        self.e_values.push(e);
        self.m += 1;
        Ok(())
    }

    pub fn nonfixed_means(&self) -> Vec<f64> {
        self.nonfixed_sums.iter().map(|&s| s as f64 / self.m as f64).collect()
    }

    pub fn se_means(&self) -> [f64; 2] {
        [self.s_sum as f64 / self.m as f64, self.e_sum as f64 / self.m as f64]
    }
}

fn two_sided_normal(z: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * normal.sf(z.abs())).clamp(0.0, 1.0)
}

fn chi_square_sf(x: f64, df: usize) -> f64 {
    ChiSquared::new(df as f64).expect("positive degrees of freedom").sf(x.max(0.0)).clamp(0.0, 1.0)
}

fn ge_report(summary: &SampleSummary, null_pmf: &[(usize, f64)], k: usize, engine: &str) -> Result<TestReport> {
    let boxing = Boxing::equiprobable(null_pmf, k)?.merged_for(summary.m, MIN_EXPECTED);
    if boxing.len() < 2 {
        return Err(Error::invalid(format!(
            "G_E boxing collapsed to a single box (m = {} is too small for expected counts of {MIN_EXPECTED})",
            summary.m
        )));
    }
    let observed = boxing.counts(&summary.e_values);
    let expected: Vec<f64> = boxing.probabilities().iter().map(|p| p * summary.m as f64).collect();
    let statistic = g_statistic(&observed, &expected);
    let df = boxing.len() - 1;
    let boxes = boxing
        .bounds()
        .iter()
        .zip(boxing.probabilities())
        .zip(observed.iter().zip(&expected))
        .map(|((&(lo, hi), &probability), (&observed, &expected))| EBox { lo, hi, probability, expected, observed })
        .collect();
    Ok(TestReport {
        test: TestKind::GE,
        statistic,
        null: NullDistribution::ChiSquared { df },
        p_value: chi_square_sf(statistic, df),
        config: ReportConfig { n: summary.n, m: summary.m, k: Some(boxing.len()), boxes: Some(boxes), engine: engine.into() },
    })
}

fn check_dims(summary: &SampleSummary, dim: usize, what: &str) -> Result<()> {
    if summary.nonfixed_sums.len() != dim {
        return Err(Error::invalid(format!(
            "{what} has dimension {dim}, but trees with n = {} have {} non-fixed entries",
            summary.n,
            summary.nonfixed_sums.len()
        )));
    }
    Ok(())
}

fn centred(summary: &SampleSummary, mean: &[f64]) -> Vec<f64> {
    summary.nonfixed_means().iter().zip(mean).map(|(a, b)| a - b).collect()
}

fn wf_report(summary: &SampleSummary, mean: &[f64], w: &Whitener, engine: &str) -> Result<TestReport> {
    check_dims(summary, mean.len(), "the mean vector")?;
    check_dims(summary, w.dim(), "the covariance")?;
    let d = w.dim() as f64;
    let statistic = (summary.m as f64 / d).sqrt() * w.projection(&centred(summary, mean));
    Ok(TestReport {
        test: TestKind::WF,
        statistic,
        null: NullDistribution::StandardNormal,
        p_value: two_sided_normal(statistic),
        config: ReportConfig { n: summary.n, m: summary.m, k: None, boxes: None, engine: engine.into() },
    })
}

fn wse_report(summary: &SampleSummary, mu: [f64; 2], w: &Whitener, engine: &str) -> Result<TestReport> {
    let means = summary.se_means();
    let z = [means[0] - mu[0], means[1] - mu[1]];
    let statistic = (summary.m as f64 / 2.0).sqrt() * w.projection(&z);
    Ok(TestReport {
        test: TestKind::WSE,
        statistic,
        null: NullDistribution::StandardNormal,
        p_value: two_sided_normal(statistic),
        config: ReportConfig { n: summary.n, m: summary.m, k: None, boxes: None, engine: engine.into() },
    })
}

fn hotelling_report(summary: &SampleSummary, mean: &[f64], w: &Whitener, engine: &str) -> Result<TestReport> {
    check_dims(summary, mean.len(), "the mean vector")?;
    check_dims(summary, w.dim(), "the covariance")?;
    let statistic = summary.m as f64 * w.quadratic(&centred(summary, mean));
    let df = w.dim();
    Ok(TestReport {
        test: TestKind::Hotelling,
        statistic,
        null: NullDistribution::ChiSquared { df },
        p_value: chi_square_sf(statistic, df),
        config: ReportConfig { n: summary.n, m: summary.m, k: None, boxes: None, engine: engine.into() },
    })
}

/// `G_E` against the law of `null_e`, starting from `k` equiprobable boxes.
pub fn test_ge(sample: &[FMatrix], null_e: &DiscretePhaseType<f64>, k: usize) -> Result<TestReport> {
    let summary = SampleSummary::new(sample)?;
    let pmf = null_e.distribution(summary.n * summary.n + 1);
    ge_report(&summary, &pmf, k, "phase-type")
}

/// `W_F` for null mean `mean` and covariance `sigma` of the non-fixed entries.
pub fn test_wf(sample: &[FMatrix], mean: &[f64], sigma: &Matrix<f64>) -> Result<TestReport> {
    let summary = SampleSummary::new(sample)?;
    wf_report(&summary, mean, &Whitener::new(sigma)?, "supplied")
}

pub fn test_wse(sample: &[FMatrix], mu_se: [f64; 2], sigma_se: [[f64; 2]; 2]) -> Result<TestReport> {
    let summary = SampleSummary::new(sample)?;
    let sigma = Matrix::from_rows(sigma_se.iter().map(|r| r.to_vec()).collect())?;
    wse_report(&summary, mu_se, &Whitener::new(&sigma)?, "supplied")
}

pub fn test_hotelling(sample: &[FMatrix], mean: &[f64], sigma: &Matrix<f64>) -> Result<TestReport> {
    let summary = SampleSummary::new(sample)?;
    hotelling_report(&summary, mean, &Whitener::new(sigma)?, "supplied")
}

/// Everything the tests need about the Kingman null at one `n`, computed
/// once and shared across samples.
#[derive(Clone, Debug)]
pub struct NullModel {
    pub n: usize,
    pub mean: Vec<f64>,
    pub sigma: Matrix<f64>,
    pub mu_se: [f64; 2],
    pub sigma_se: [[f64; 2]; 2],
    /// `(m, P(E = m))`.
    pub e_pmf: Vec<(usize, f64)>,
    pub engine: String,
    whiten_f: std::result::Result<Whitener, f64>,
    whiten_se: std::result::Result<Whitener, f64>,
}

fn try_whiten(sigma: &Matrix<f64>) -> Result<std::result::Result<Whitener, f64>> {
    match Whitener::new(sigma) {
        Ok(w) => Ok(Ok(w)),
        Err(Error::NotPositiveDefinite { min_eigenvalue }) => Ok(Err(min_eigenvalue)),
        Err(e) => Err(e),
    }
}

impl NullModel {
    /// Moments from the feed-forward engine (exact up to
    /// [`EXACT_NULL_MAX_N`]) and the law of `E` from the block-counting
    /// chain.
    pub fn kingman(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::invalid(format!("the tests need n >= 4, got {n}")));
        }
        let space = enumerate_states(n)?;
        if n <= EXACT_NULL_MAX_N {
            let summary = nonfixed_moments(&space, &kernel::<Rational>(&space))?.to_f64();
            let pmf = e_pmf::<Rational>(n)?.into_iter().map(|(m, p)| (m, crate::Scalar::to_f64(&p))).collect();
            Self::from_moments(&summary, pmf, "exact")
        } else {
            let summary = nonfixed_moments(&space, &kernel::<f64>(&space))?;
            Self::from_moments(&summary, e_pmf::<f64>(n)?, "float")
        }
    }

    pub fn from_moments(summary: &MomentSummary<f64>, e_pmf: Vec<(usize, f64)>, engine: &str) -> Result<Self> {
        let (mu_se, sigma_se) = summary.s_e_summary();
        let se = Matrix::from_rows(sigma_se.iter().map(|r| r.to_vec()).collect())?;
        Ok(NullModel {
            n: summary.n,
            mean: summary.mean.clone(),
            sigma: summary.cov.clone(),
            mu_se,
            sigma_se,
            e_pmf,
            engine: engine.into(),
            whiten_f: try_whiten(&summary.cov)?,
            whiten_se: try_whiten(&se)?,
        })
    }

    pub fn dim(&self) -> usize {
        nonfixed_count(self.n)
    }

    pub fn run(&self, summary: &SampleSummary, tests: &[TestKind], k: usize) -> Result<Vec<TestReport>> {
        if summary.m == 0 {
            return Err(Error::invalid("the sample is empty"));
        }
        if summary.n != self.n {
            return Err(Error::invalid(format!("sample has n = {}, null model has n = {}", summary.n, self.n)));
        }
        let not_pd = |m: &f64| Error::NotPositiveDefinite { min_eigenvalue: *m };
        tests
            .iter()
            .map(|t| match t {
                TestKind::GE => ge_report(summary, &self.e_pmf, k, &format!("{}+bcp", self.engine)),
                TestKind::WF => wf_report(summary, &self.mean, self.whiten_f.as_ref().map_err(not_pd)?, &self.engine),
                TestKind::WSE => wse_report(summary, self.mu_se, self.whiten_se.as_ref().map_err(not_pd)?, &self.engine),
                TestKind::Hotelling => {
                    hotelling_report(summary, &self.mean, self.whiten_f.as_ref().map_err(not_pd)?, &self.engine)
                }
            })
            .collect()
    }

    pub fn test_sample(&self, sample: &[FMatrix], tests: &[TestKind], k: usize) -> Result<Vec<TestReport>> {
        self.run(&SampleSummary::new(sample)?, tests, k)
    }
}

/// Kolmogorov-Smirnov distance between `values` and `cdf`, with the
/// asymptotic p-value (Stephens' small-sample correction).
pub fn ks_test(values: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    });
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, kolmogorov_sf(lambda))
}

fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerConfig {
    pub betas: Vec<f64>,
    /// Trees per sample.
    pub m: usize,
    pub replicates: usize,
    pub seed: u64,
    pub alpha: f64,
    pub boxes: usize,
    pub tests: Vec<TestKind>,
}

impl PowerConfig {
    pub fn new(betas: Vec<f64>, m: usize, replicates: usize, seed: u64) -> Self {
        PowerConfig { betas, m, replicates, seed, alpha: 0.05, boxes: DEFAULT_BOXES, tests: TestKind::ALL.to_vec() }
    }
}

/// Statistics and p-values of one test over all replicates at one `β`.
#[derive(Clone, Debug, PartialEq)]
pub struct Replicates {
    pub test: TestKind,
    pub beta: f64,
    pub statistics: Vec<f64>,
    pub p_values: Vec<f64>,
}

impl Replicates {
    pub fn rejections(&self, alpha: f64) -> usize {
        self.p_values.iter().filter(|&&p| p < alpha).count()
    }

    pub fn rejection_rate(&self, alpha: f64) -> f64 {
        self.rejections(alpha) as f64 / self.p_values.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerRow {
    pub test: TestKind,
    pub beta: f64,
    pub replicates: usize,
    pub rejections: usize,
    pub rate: f64,
    /// Binomial Monte-Carlo standard error of `rate`.
    pub std_error: f64,
}

/// Runs every replicate at `betas[beta_index]`. Replicate `r` draws its
/// `m` trees from its own ChaCha stream, so results do not depend on the
/// number of threads, and every test sees the same corpora.
pub fn simulate_replicates(null: &NullModel, cfg: &PowerConfig, beta_index: usize) -> Result<Vec<Replicates>> {
    let beta = cfg.betas[beta_index];
    let splitter = BetaSplitter::new(beta, null.n)?;
    let per_rep: Vec<Vec<TestReport>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(((beta_index as u64) << 32) | r as u64);
            let sample: Vec<FMatrix> = (0..cfg.m).map(|_| splitter.sample(&mut rng)).collect();
            null.test_sample(&sample, &cfg.tests, cfg.boxes)
        })
        .collect::<Result<_>>()?;
    Ok(cfg
        .tests
        .iter()
        .enumerate()
        .map(|(t, &test)| Replicates {
            test,
            beta,
            statistics: per_rep.iter().map(|r| r[t].statistic).collect(),
            p_values: per_rep.iter().map(|r| r[t].p_value).collect(),
        })
        .collect())
}

pub fn power_rows(reps: &[Replicates], alpha: f64) -> Vec<PowerRow> {
    reps.iter()
        .map(|r| {
            let count = r.p_values.len();
            let rate = r.rejection_rate(alpha);
            PowerRow {
                test: r.test,
                beta: r.beta,
                replicates: count,
                rejections: r.rejections(alpha),
                rate,
                std_error: (rate * (1.0 - rate) / count as f64).sqrt(),
            }
        })
        .collect()
}

/// Rejection rate of every test at every `β`, grid-major.
pub fn power_curve(null: &NullModel, cfg: &PowerConfig) -> Result<Vec<PowerRow>> {
    if cfg.replicates == 0 || cfg.m == 0 {
        return Err(Error::invalid("replicates and m must be positive"));
    }
    let mut rows = Vec::new();
    for b in 0..cfg.betas.len() {
        rows.extend(power_rows(&simulate_replicates(null, cfg, b)?, cfg.alpha));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::bcp::bcp_e_distribution;
    use crate::kingman::simulate_codes;

    fn kingman_sample(n: usize, m: usize, seed: u64) -> Vec<FMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| FMatrix::from_codes(n, &simulate_codes(n, &mut rng))).collect()
    }

    #[test]
    fn n5_null_inputs_match_known_values() {
        let null = NullModel::kingman(5).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(null.mu_se[0], 8.0 / 3.0) && close(null.mu_se[1], 10.0));
        assert!(close(null.sigma_se[0][0], 11.0 / 9.0));
        assert!(close(null.sigma_se[0][1], 5.0 / 6.0) && close(null.sigma_se[1][0], 5.0 / 6.0));
        assert!(close(null.sigma_se[1][1], 2.0 / 3.0));
        assert_eq!(null.engine, "exact");
    }

    #[test]
    fn g_statistic_edge_cases() {
        assert_eq!(g_statistic(&[10, 20, 30], &[10.0, 20.0, 30.0]), 0.0);
        let g = g_statistic(&[100, 0, 0, 0], &[25.0; 4]);
        assert!((g - 200.0 * 4f64.ln()).abs() < 1e-9);
        assert!(chi_square_sf(g, 3) < 1e-50);
    }

    #[test]
    fn ge_on_exact_expectations_is_zero() {
        // A sample whose E-histogram equals the expected counts exactly.
        let pmf = vec![(6usize, 0.25), (7, 0.75)];
        let summary = SampleSummary { n: 4, m: 40, nonfixed_sums: vec![0], s_sum: 0, e_sum: 0, e_values: [vec![6; 10], vec![7; 30]].concat() };
        let r = ge_report(&summary, &pmf, 10, "test").unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.null, NullDistribution::ChiSquared { df: 1 });
    }

    #[test]
    fn ge_rejects_degenerate_boxing() {
        assert!(Boxing::equiprobable(&[(1, 1.0)], 1).is_err());
        let summary = SampleSummary { n: 4, m: 3, nonfixed_sums: vec![0], s_sum: 0, e_sum: 0, e_values: vec![6, 7, 7] };
        assert!(ge_report(&summary, &[(6, 0.5), (7, 0.5)], 10, "test").is_err());
    }

    #[test]
    fn boxes_are_equiprobable_and_merge() {
        let pmf: Vec<(usize, f64)> = (0..100).map(|v| (v, 0.01)).collect();
        let b = Boxing::equiprobable(&pmf, 10).unwrap();
        assert_eq!(b.len(), 10);
        assert!(b.probabilities().iter().all(|p| (p - 0.1).abs() < 1e-9));
        assert_eq!(b.index_of(0), 0);
        assert_eq!(b.index_of(55), 5);
        assert_eq!(b.index_of(10_000), 9);
        // 30 observations: boxes must reach 5/30 each.
        let merged = b.clone().merged_for(30, 5.0);
        assert!(merged.probabilities().iter().all(|p| p * 30.0 >= 5.0));
        assert!(merged.len() < 10 && merged.len() >= 2);
        let total: f64 = merged.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn merging_two_boxes_drops_one_degree_of_freedom() {
        let null = NullModel::kingman(8).unwrap();
        let sample = kingman_sample(8, 500, 1);
        let summary = SampleSummary::new(&sample).unwrap();
        let boxing = Boxing::equiprobable(&null.e_pmf, 10).unwrap().merged_for(500, 5.0);
        let mut coarser = boxing.clone();
        coarser.merge(0);
        assert_eq!(boxing.len() - 1, coarser.len());
        let df = |b: &Boxing| b.len() - 1;
        assert_eq!(df(&boxing), df(&coarser) + 1);
        let r = ge_report(&summary, &null.e_pmf, 10, "x").unwrap();
        assert_eq!(r.null, NullDistribution::ChiSquared { df: df(&boxing) });
    }

    #[test]
    fn statistics_vanish_at_the_null_mean() {
        // Sample mean equals M exactly: take every tree with its exact
        // probability as a multiplicity (n = 5, probabilities in sixths).
        use crate::kingman::enumerate_paths;
        let space = enumerate_states(5).unwrap();
        let k = kernel::<Rational>(&space);
        let mut sample = Vec::new();
        for (p, w) in enumerate_paths(&k).unwrap() {
            let copies = crate::Scalar::to_f64(&(w * Rational::from_integer(18.into()))).round() as usize;
            sample.extend(std::iter::repeat_n(FMatrix::from_path(&space, &p).unwrap(), copies));
        }
        assert_eq!(sample.len(), 18);
        let null = NullModel::kingman(5).unwrap();
        let reports = null.test_sample(&sample, &[TestKind::WF, TestKind::WSE, TestKind::Hotelling], 10).unwrap();
        for r in reports {
            assert!(r.statistic.abs() < 1e-12, "{:?}", r.test);
            assert!(r.p_value > 1.0 - 1e-9);
        }
        let wse = test_wse(&sample, [8.0 / 3.0, 10.0], [[11.0 / 9.0, 5.0 / 6.0], [5.0 / 6.0, 2.0 / 3.0]]).unwrap();
        assert!(wse.statistic.abs() < 1e-12);
    }

    #[test]
    fn free_functions_agree_with_null_model() {
        let null = NullModel::kingman(7).unwrap();
        let sample = kingman_sample(7, 300, 5);
        let all = null.test_sample(&sample, &TestKind::ALL, 10).unwrap();
        let wf = test_wf(&sample, &null.mean, &null.sigma).unwrap();
        let ht = test_hotelling(&sample, &null.mean, &null.sigma).unwrap();
        let wse = test_wse(&sample, null.mu_se, null.sigma_se).unwrap();
        let ge = test_ge(&sample, &bcp_e_distribution::<f64>(7).unwrap(), 10).unwrap();
        assert_eq!(wf.statistic, all[1].statistic);
        assert_eq!(wse.statistic, all[2].statistic);
        assert_eq!(ht.statistic, all[3].statistic);
        assert!((ge.statistic - all[0].statistic).abs() < 1e-9);
        for r in &all {
            assert!((0.0..=1.0).contains(&r.p_value));
        }
    }

    #[test]
    fn permutation_invariance() {
        let null = NullModel::kingman(9).unwrap();
        let mut sample = kingman_sample(9, 200, 8);
        let a = null.test_sample(&sample, &TestKind::ALL, 10).unwrap();
        sample.reverse();
        sample.swap(3, 150);
        let b = null.test_sample(&sample, &TestKind::ALL, 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn singular_covariance_is_reported() {
        // At n = 4 there is a single non-fixed entry and E = S + 6.
        let null = NullModel::kingman(4).unwrap();
        let sample = kingman_sample(4, 50, 2);
        let err = null.test_sample(&sample, &[TestKind::WSE], 10).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
        assert!(null.test_sample(&sample, &[TestKind::WF], 10).is_ok());
        let bad = Matrix::from_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        match Whitener::new(&bad) {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => assert!(min_eigenvalue.abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn whitener_inverts_the_covariance() {
        let sigma = Matrix::from_rows(vec![vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]]).unwrap();
        let w = Whitener::new(&sigma).unwrap();
        // (Σ^{-1/2} z)·(Σ^{-1/2} z) = zᵀ Σ⁻¹ z.
        let z = [0.3, -1.2, 0.7];
        let y = w.whiten(&z);
        let q: f64 = y.iter().map(|v| v * v).sum();
        assert!((q - w.quadratic(&z)).abs() < 1e-12);
        assert!((w.projection(&z) - y.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn ks_accepts_and_rejects() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        use rand::Rng;
        let draws: Vec<f64> = (0..2000).map(|_| normal.inverse_cdf(rng.random::<f64>())).collect();
        let (_, p) = ks_test(&draws, |x| normal.cdf(x));
        assert!(p > 0.01);
        let shifted: Vec<f64> = draws.iter().map(|x| x + 0.3).collect();
        let (d, p) = ks_test(&shifted, |x| normal.cdf(x));
        assert!(d > 0.05 && p < 1e-6);
    }

    #[test]
    fn power_harness_is_deterministic() {
        let null = NullModel::kingman(8).unwrap();
        let mut cfg = PowerConfig::new(vec![-0.5, 0.0], 100, 8, 11);
        cfg.replicates = 8;
        let a = power_curve(&null, &cfg).unwrap();
        let b = power_curve(&null, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2 * TestKind::ALL.len());
        cfg.replicates = 1;
        for row in power_curve(&null, &cfg).unwrap() {
            assert!(row.rate == 0.0 || row.rate == 1.0);
        }
    }

    #[test]
    fn test_names_round_trip() {
        for t in TestKind::ALL {
            assert_eq!(t.name().parse::<TestKind>().unwrap(), t);
        }
        assert!("XX".parse::<TestKind>().is_err());
    }
}
