//! Closed-form limit predictions: critical scale, regime labels, subcritical
//! profiles, drift and covariance fields, the Weibull law, local moments.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::density::{grad_log_density, local_intensity, DensityModel};
use crate::error::{Error, Result};
use crate::special::{ln_gamma, reg_lower_incomplete_gamma};
use crate::sphere::UnitVector;

pub const DEFAULT_LO: f64 = 0.2;
pub const DEFAULT_HI: f64 = 5.0;

/// `α = 2 / (d - 1)`.
pub fn alpha(d: usize) -> f64 {
    2.0 / (d as f64 - 1.0)
}

/// `γ n^{2/(d-1)}`.
pub fn critical_beta(n: usize, d: usize, gamma: f64) -> f64 {
    gamma * (n as f64).powf(alpha(d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Supercritical,
    Critical,
    SubcriticalFluctuation,
    SubcriticalMixed,
    SubcriticalDrift,
    FrozenBeta,
}

impl Regime {
    pub fn is_subcritical(self) -> bool {
        matches!(
            self,
            Regime::SubcriticalFluctuation | Regime::SubcriticalMixed | Regime::SubcriticalDrift
        )
    }

    /// Short description of how `A_(1)` behaves in this regime.
    pub fn weight_behavior(self) -> &'static str {
        match self {
            Regime::Supercritical => "A(1) -> 1 (nearest key takes all mass)",
            Regime::Critical => "A(1) -> W1, nondegenerate Poisson-Dirichlet-type limit",
            Regime::SubcriticalFluctuation | Regime::SubcriticalMixed | Regime::SubcriticalDrift => {
                "A(1) -> 0, mass spread over about m_n keys"
            }
            Regime::FrozenBeta => "A(1) -> 0 at fixed temperature",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Finite-n diagnostics and the predicted regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeClassification {
    pub alpha: f64,
    pub gamma_n: f64,
    pub tau_n: f64,
    pub window_m_n: f64,
    pub label: Regime,
}

impl RegimeClassification {
    /// `η = 1/α - 1 = (d - 3)/2`.
    pub fn eta(&self) -> f64 {
        1.0 / self.alpha - 1.0
    }
}

fn label_for(gamma_n: f64, tau_n: f64, lo: f64, hi: f64) -> Regime {
    if gamma_n > hi {
        Regime::Supercritical
    } else if gamma_n >= lo {
        Regime::Critical
    } else if tau_n > hi {
        Regime::SubcriticalFluctuation
    } else if tau_n >= lo {
        Regime::SubcriticalMixed
    } else {
        Regime::SubcriticalDrift
    }
}

fn check_thresholds(lo: f64, hi: f64) -> Result<()> {
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::Domain(format!("need 0 < lo < hi, got lo = {lo}, hi = {hi}")));
    }
    Ok(())
}

/// Diagnostics for a single `(n, β)`; the label is read off `γ_n` and `τ_n`.
pub fn classify_regime(n: usize, beta: f64, d: usize, cq: f64, lo: f64, hi: f64) -> Result<RegimeClassification> {
    check_thresholds(lo, hi)?;
    if d < 2 {
        return Err(Error::DimensionTooSmall(d));
    }
    if n == 0 || !(beta >= 0.0) {
        return Err(Error::Domain(format!("need n >= 1 and beta >= 0, got n = {n}, beta = {beta}")));
    }
    let a = alpha(d);
    let nf = n as f64;
    let gamma_n = beta * nf.powf(-a);
    let tau_n = beta.powf(1.0 + a) * nf.powf(-a);
    let window_m_n = if beta > 0.0 { cq * nf * beta.powf(-1.0 / a) } else { f64::INFINITY };
    Ok(RegimeClassification { alpha: a, gamma_n, tau_n, window_m_n, label: label_for(gamma_n, tau_n, lo, hi) })
}

/// As [`classify_regime`] for a schedule `β = γ n^p`; `p = 0` is labelled
/// `FrozenBeta` since β does not diverge.
pub fn classify_schedule(
    n: usize,
    gamma: f64,
    exponent: f64,
    d: usize,
    cq: f64,
    lo: f64,
    hi: f64,
) -> Result<RegimeClassification> {
    let beta = gamma * (n as f64).powf(exponent);
    let mut c = classify_regime(n, beta, d, cq, lo, hi)?;
    if exponent == 0.0 {
        c.label = Regime::FrozenBeta;
    }
    Ok(c)
}

/// Limit of `A_(k)/A_(1)` at `k ≈ x m_n`: `exp(-x^α)`.
pub fn subcritical_profile(x: f64, alpha: f64) -> f64 {
    (-x.powf(alpha)).exp()
}

/// Limit of `m_n A_(k)`: `exp(-x^α) / Γ(1/α + 1)`.
pub fn subcritical_absolute_weight(x: f64, alpha: f64) -> Result<f64> {
    Ok(subcritical_profile(x, alpha) / ln_gamma(1.0 / alpha + 1.0)?.exp())
}

/// Limit of `Σ_{i ≤ x m_n} A_(i)`: `P(1/α, x^α)`.
pub fn subcritical_cumulative_mass(x: f64, alpha: f64) -> Result<f64> {
    reg_lower_incomplete_gamma(1.0 / alpha, x.powf(alpha))
}

/// `c_d = 2^{-d} π^{-(d-1)/2}`.
pub fn c_d(d: usize) -> f64 {
    2f64.powi(-(d as i32)) * PI.powf(-(d as f64 - 1.0) / 2.0)
}

/// Drift field and fluctuation covariance at `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftCov {
    /// `∇_S log ρ(q) - ((d-1)/2) q`.
    pub drift: Vec<f64>,
    /// `(c_d / ρ(q)) P_q`.
    pub covariance: DMatrix<f64>,
    pub c_d: f64,
}

/// `P_q = I - q qᵀ`.
pub fn projector(q: &UnitVector) -> DMatrix<f64> {
    let d = q.dim();
    DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 } - q[i] * q[j])
}

pub fn drift_and_covariance(model: &DensityModel, q: &UnitVector) -> Result<DriftCov> {
    let d = model.dim();
    let rho = model.normalized_density(q.as_slice())?;
    let grad = grad_log_density(model, q)?;
    let half = (d as f64 - 1.0) / 2.0;
    let drift = grad.iter().zip(q.as_slice()).map(|(g, qi)| g - half * qi).collect();
    let cd = c_d(d);
    Ok(DriftCov { drift, covariance: projector(q) * (cd / rho), c_d: cd })
}

/// `P(R ≤ r) = 1 - exp(-r^{1/α})`.
pub fn weibull_cdf(r: f64, alpha: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        -(-r.powf(1.0 / alpha)).exp_m1()
    }
}

/// Leading-order local moments of `(x - q) e^{-βT}` under ρ.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMoments {
    /// `C Γ(1/α+1) β^{-1/α-1} 𝒴(q)`.
    pub first: Vec<f64>,
    /// Scale `C Γ(1/α+1) (2β)^{-1/α-1}` multiplying `P_q`.
    pub second_scale: f64,
}

pub fn local_moment_predictions(beta: f64, model: &DensityModel, q: &UnitVector) -> Result<LocalMoments> {
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    let d = model.dim();
    let inv_alpha = 1.0 / alpha(d);
    let cq = local_intensity(model, q)?;
    let g = ln_gamma(inv_alpha + 1.0)?.exp();
    let dc = drift_and_covariance(model, q)?;
    let first_scale = cq * g * beta.powf(-inv_alpha - 1.0);
    Ok(LocalMoments {
        first: dc.drift.iter().map(|y| first_scale * y).collect(),
        second_scale: cq * g * (2.0 * beta).powf(-inv_alpha - 1.0),
    })
}
