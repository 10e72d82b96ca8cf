//! Empirical CDFs, Kolmogorov-Smirnov statistics, moment accumulators and
//! ordered-profile summaries.

use nalgebra::DMatrix;

use crate::attention::AttentionSnapshot;
use crate::error::{Error, Result};

/// Sorted sample with its empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySample { needed: 1, got: 0 });
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Ecdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub n_eff: f64,
    pub p_value_asymptotic: f64,
}

/// Kolmogorov survival function `2 Σ (-1)^{k-1} exp(-2 k² λ²)`, 100 terms.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_result(statistic: f64, n_eff: f64) -> KsResult {
    KsResult { statistic, n_eff, p_value_asymptotic: kolmogorov_survival(n_eff.sqrt() * statistic) }
}

/// One-sample statistic `sup |F_n - F|`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    let ecdf = Ecdf::new(samples)?;
    let n = ecdf.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in ecdf.samples().iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(ks_result(d.clamp(0.0, 1.0), n))
}

/// Two-sample statistic `sup |F_a - F_b|` over the merged support.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let ea = Ecdf::new(a)?;
    let eb = Ecdf::new(b)?;
    let (sa, sb) = (ea.samples(), eb.samples());
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(ks_result(d, na * nb / (na + nb)))
}

/// Mergeable count / mean / co-moment accumulator for vector samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: DMatrix<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        MomentAccumulator { count: 0, mean: vec![0.0; dim], m2: DMatrix::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        self.count += 1;
        let n = self.count as f64;
        let delta: Vec<f64> = v.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / n;
        }
        let d = self.dim();
        for r in 0..d {
            let after = v[r] - self.mean[r];
            for c in 0..d {
                self.m2[(r, c)] += after * delta[c];
            }
        }
        Ok(())
    }

    /// Combines two accumulators (Chan et al. pairwise update).
    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        let d = self.dim();
        for r in 0..d {
            for c in 0..d {
                self.m2[(r, c)] += other.m2[(r, c)] + delta[r] * delta[c] * na * nb / n;
            }
        }
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased covariance; needs at least two samples.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        if self.count < 2 {
            return Err(Error::EmptySample { needed: 2, got: self.count });
        }
        let mut c = &self.m2 / (self.count as f64 - 1.0);
        // symmetrize rounding
        let ct = c.transpose();
        c = (c + ct) * 0.5;
        Ok(c)
    }
}

/// Sample mean and unbiased covariance.
pub fn empirical_mean_cov(vectors: &[Vec<f64>]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if vectors.len() < 2 {
        return Err(Error::EmptySample { needed: 2, got: vectors.len() });
    }
    let mut acc = MomentAccumulator::new(vectors[0].len());
    for v in vectors {
        acc.push(v)?;
    }
    Ok((acc.mean().to_vec(), acc.covariance()?))
}

/// Linear-interpolation quantile (type 7) of an unsorted sample.
pub fn quantile(samples: &[f64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample { needed: 1, got: 0 });
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&s, p))
}

pub(crate) fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let h = (s.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

pub fn mean_and_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    // running mean: exact when every sample is equal
    let mean = samples.iter().enumerate().fold(0.0, |m, (i, x)| m + (x - m) / (i + 1) as f64);
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row of an ordered-profile summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub x: f64,
    pub k: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Rank `k = round(x m_n)` clamped to `[1, n]`; errors when it exceeds `n`.
pub fn profile_rank(x: f64, m_n: f64, n: usize) -> Result<usize> {
    let k = (x * m_n).round().max(1.0) as usize;
    if k > n {
        return Err(Error::GridOutOfRange { x, k, n });
    }
    Ok(k)
}

/// Median and quartiles of `A_(k)/A_(1)` across trials at each grid point.
pub fn summarize_ordered_profile(trials: &[AttentionSnapshot], m_n: f64, grid: &[f64]) -> Result<Vec<ProfileRow>> {
    if trials.is_empty() {
        return Err(Error::EmptySample { needed: 1, got: 0 });
    }
    if !(m_n > 0.0) {
        return Err(Error::Domain(format!("window size must be positive, got {m_n}")));
    }
    let n = trials.iter().map(|t| t.len()).min().unwrap();
    let ranks: Vec<usize> = grid.iter().map(|&x| profile_rank(x, m_n, n)).collect::<Result<_>>()?;
    let ordered: Vec<Vec<f64>> = trials.iter().map(|t| t.ordered_weights()).collect();
    Ok(summarize_ratios(&ordered, grid, &ranks, |w, k| w[k - 1] / w[0]))
}

pub(crate) fn summarize_ratios<F: Fn(&[f64], usize) -> f64>(
    ordered: &[Vec<f64>],
    grid: &[f64],
    ranks: &[usize],
    stat: F,
) -> Vec<ProfileRow> {
    grid.iter()
        .zip(ranks)
        .map(|(&x, &k)| {
            let mut v: Vec<f64> = ordered.iter().map(|w| stat(w, k)).collect();
            v.sort_by(f64::total_cmp);
            ProfileRow {
                x,
                k,
                median: quantile_sorted(&v, 0.5),
                q25: quantile_sorted(&v, 0.25),
                q75: quantile_sorted(&v, 0.75),
            }
        })
        .collect()
}
