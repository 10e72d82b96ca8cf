//! Rotary position embeddings, query orbits and their phase averages, and
//! m-dependent moving-average token models.

use std::f64::consts::PI;

use rand::Rng;

use crate::attention::{snapshot_from_d2q, AttentionSnapshot};
use crate::density::{local_intensity, Context, DensityModel};
use crate::error::{Error, Result};
use crate::sphere::{dot, norm, UnitVector, MIN_NORM};

/// Orbit-return tolerance for period detection.
pub const PERIOD_TOL: f64 = 1e-12;
/// Longest period searched for.
pub const MAX_PERIOD: usize = 1_000_000;

/// Block-diagonal rotation schedule: pair `(2l, 2l+1)` turns by `p ϑ_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct RopeConfig {
    frequencies: Vec<f64>,
}

impl RopeConfig {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::Domain("RoPE needs at least one frequency".into()));
        }
        if frequencies.iter().any(|f| !f.is_finite()) {
            return Err(Error::Domain("RoPE frequencies must be finite".into()));
        }
        Ok(RopeConfig { frequencies })
    }

    /// `ϑ_l = base^{-2(l-1)/(2L)}` for `l = 1..L`.
    pub fn geometric(base: f64, pairs: usize) -> Result<Self> {
        if !(base > 0.0) || pairs == 0 {
            return Err(Error::Domain(format!("geometric preset needs base > 0 and L >= 1, got {base}, {pairs}")));
        }
        let l = pairs as f64;
        Self::new((0..pairs).map(|i| base.powf(-2.0 * i as f64 / (2.0 * l))).collect())
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn pairs(&self) -> usize {
        self.frequencies.len()
    }

    pub fn rotated_dim(&self) -> usize {
        2 * self.pairs()
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d < self.rotated_dim() {
            return Err(Error::DimensionMismatch { expected: self.rotated_dim(), got: d });
        }
        Ok(())
    }

    fn rotate_into(&self, p: i64, v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(v);
        for (l, &theta) in self.frequencies.iter().enumerate() {
            let (s, c) = (p as f64 * theta).sin_cos();
            let (a, b) = (v[2 * l], v[2 * l + 1]);
            out[2 * l] = c * a - s * b;
            out[2 * l + 1] = s * a + c * b;
        }
    }
}

/// `R_p v`.
pub fn rope_rotate(config: &RopeConfig, p: i64, v: &[f64]) -> Result<Vec<f64>> {
    config.check_dim(v.len())?;
    let mut out = vec![0.0; v.len()];
    config.rotate_into(p, v, &mut out);
    Ok(out)
}

/// `u_i = R_iᵀ q = R_{-i} q`.
pub fn query_orbit(config: &RopeConfig, q: &UnitVector, i: i64) -> Result<UnitVector> {
    let v = rope_rotate(config, -i, q.as_slice())?;
    Ok(UnitVector::from_unit_coords(v))
}

/// Orbit points `u_1..u_n`, stored row-major.
pub fn orbit_points(config: &RopeConfig, q: &UnitVector, n: usize) -> Result<Vec<f64>> {
    let d = q.dim();
    config.check_dim(d)?;
    let mut out = vec![0.0; n * d];
    for (i, chunk) in out.chunks_exact_mut(d).enumerate() {
        config.rotate_into(-(i as i64 + 1), q.as_slice(), chunk);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitStats {
    /// Points averaged over: one exact period when detected, otherwise `u_1..u_N`.
    pub orbit_points: Vec<UnitVector>,
    pub c_bar: f64,
    pub period: Option<usize>,
    /// `(k, |(1/N) Σ_j exp(i j k·ϑ)|)` for each requested integer vector `k`.
    pub fourier_residuals: Vec<(Vec<i64>, f64)>,
}

/// Smallest `P ≤ cap` with `‖u_P - q‖ ≤ PERIOD_TOL`.
pub fn detect_period(config: &RopeConfig, q: &UnitVector, cap: usize) -> Result<Option<usize>> {
    let d = q.dim();
    config.check_dim(d)?;
    let mut buf = vec![0.0; d];
    for p in 1..=cap.min(MAX_PERIOD) {
        config.rotate_into(-(p as i64), q.as_slice(), &mut buf);
        let dist = buf.iter().zip(q.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist <= PERIOD_TOL {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

/// `C̄(q)`: orbit average of the local intensity along `u_1..u_N`, or over
/// one exact period when the orbit closes within `N` steps.
pub fn orbit_phase_average(
    config: &RopeConfig,
    q: &UnitVector,
    model: &DensityModel,
    n: usize,
    fourier_modes: &[Vec<i64>],
) -> Result<OrbitStats> {
    if n < 1000 {
        return Err(Error::EmptySample { needed: 1000, got: n });
    }
    let d = q.dim();
    if model.dim() != d {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: d });
    }
    let period = detect_period(config, q, n)?;
    let count = period.unwrap_or(n);
    let flat = orbit_points(config, q, count)?;
    let points: Vec<UnitVector> = flat.chunks_exact(d).map(|c| UnitVector::from_unit_coords(c.to_vec())).collect();
    let c_bar = match model {
        DensityModel::Uniform { .. } => local_intensity(model, q)?,
        _ => {
            let mut s = 0.0;
            for u in &points {
                s += local_intensity(model, u)?;
            }
            s / count as f64
        }
    };
    let mut fourier_residuals = Vec::with_capacity(fourier_modes.len());
    for k in fourier_modes {
        if k.len() != config.pairs() {
            return Err(Error::DimensionMismatch { expected: config.pairs(), got: k.len() });
        }
        let phase: f64 = k.iter().zip(config.frequencies()).map(|(&ki, f)| ki as f64 * f).sum();
        let (mut re, mut im) = (0.0, 0.0);
        for j in 1..=n {
            let (s, c) = (j as f64 * phase).sin_cos();
            re += c;
            im += s;
        }
        fourier_residuals.push((k.clone(), (re * re + im * im).sqrt() / n as f64));
    }
    Ok(OrbitStats { orbit_points: points, c_bar, period, fourier_residuals })
}

/// Geometric-sum bound `2 / (N |1 - e^{iφ}|)` on a Fourier residual with phase `φ`.
pub fn fourier_residual_bound(phase: f64, n: usize) -> f64 {
    let gap = (2.0 - 2.0 * phase.cos()).sqrt();
    2.0 / (n as f64 * gap)
}

/// Moving average `x_i = normalize(Σ_j w_j z_{i+j})` of i.i.d. latents.
#[derive(Debug, Clone)]
pub struct CorrelatedTokenModel {
    weights: Vec<f64>,
    base: DensityModel,
}

impl CorrelatedTokenModel {
    pub fn new(weights: Vec<f64>, base: DensityModel) -> Result<Self> {
        if weights.is_empty() || weights.iter().all(|w| *w == 0.0) {
            return Err(Error::Domain("mixer weights must not be all zero".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Domain("mixer weights must be finite".into()));
        }
        Ok(CorrelatedTokenModel { weights, base })
    }

    /// Moving average with `m + 1` equal weights.
    pub fn uniform_window(m: usize, base: DensityModel) -> Result<Self> {
        Self::new(vec![1.0; m + 1], base)
    }

    /// Dependence range `m`.
    pub fn range(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn base(&self) -> &DensityModel {
        &self.base
    }

    /// Marginal law of a single token, when it has a closed form.
    pub fn marginal_density(&self) -> Result<DensityModel> {
        if let DensityModel::Uniform { .. } = self.base {
            return Ok(self.base.clone());
        }
        let nonzero: Vec<f64> = self.weights.iter().copied().filter(|w| *w != 0.0).collect();
        if nonzero.len() == 1 {
            if nonzero[0] > 0.0 {
                return Ok(self.base.clone());
            }
            return match &self.base {
                DensityModel::VonMisesFisher(v) => DensityModel::von_mises_fisher(v.mean().neg(), v.kappa()),
                DensityModel::ExpBilinear { .. } => Ok(self.base.clone()),
                other => Err(Error::MarginalUnknown(format!("reflection of {}", other.label()))),
            };
        }
        Err(Error::MarginalUnknown(format!(
            "moving average of {} with {} nonzero weights",
            self.base.label(),
            nonzero.len()
        )))
    }
}

/// Tokens from the moving-average model and the number of windows that had
/// to be redrawn because the mixed vector vanished.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedSample {
    pub context: Context,
    pub resamples: u64,
}

pub fn sample_correlated_context<R: Rng + ?Sized>(
    model: &CorrelatedTokenModel,
    n: usize,
    rng: &mut R,
) -> Result<CorrelatedSample> {
    if n == 0 {
        return Err(Error::EmptySample { needed: 1, got: 0 });
    }
    let d = model.base.dim();
    let m = model.range();
    let mut latents = vec![0.0; (n + m) * d];
    let mut proposals = 0;
    for chunk in latents.chunks_exact_mut(d) {
        proposals += model.base.sample_into(chunk, rng)?;
    }
    if m == 0 && model.weights[0] > 0.0 {
        return Ok(CorrelatedSample { context: Context::from_raw(d, latents, None, proposals), resamples: 0 });
    }
    let mut coords = vec![0.0; n * d];
    let mut resamples = 0;
    for i in 0..n {
        loop {
            let out = &mut coords[i * d..(i + 1) * d];
            out.fill(0.0);
            for (j, w) in model.weights.iter().enumerate() {
                let z = &latents[(i + j) * d..(i + j + 1) * d];
                for (o, zc) in out.iter_mut().zip(z) {
                    *o += w * zc;
                }
            }
            let nrm = norm(out);
            if nrm > MIN_NORM {
                out.iter_mut().for_each(|x| *x /= nrm);
                break;
            }
            resamples += 1;
            for j in 0..=m {
                proposals += model.base.sample_into(&mut latents[(i + j) * d..(i + j + 1) * d], rng)?;
            }
        }
    }
    Ok(CorrelatedSample { context: Context::from_raw(d, coords, None, proposals), resamples })
}

/// Softmax with `U_i = 1 - <u_i, x_i>` in place of the D2Q (positions `1..n`).
pub fn rope_attention_weights(
    q: &UnitVector,
    context: &Context,
    config: &RopeConfig,
    beta: f64,
) -> Result<AttentionSnapshot> {
    if q.dim() != context.dim() {
        return Err(Error::DimensionMismatch { expected: context.dim(), got: q.dim() });
    }
    let orbit = orbit_points(config, q, context.len())?;
    rope_attention_weights_with_orbit(&orbit, context, beta)
}

/// As [`rope_attention_weights`] with precomputed orbit points `u_1..u_n`.
pub fn rope_attention_weights_with_orbit(orbit: &[f64], context: &Context, beta: f64) -> Result<AttentionSnapshot> {
    let d = context.dim();
    if orbit.len() < context.len() * d {
        return Err(Error::DimensionMismatch { expected: context.len() * d, got: orbit.len() });
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be finite and >= 0, got {beta}")));
    }
    let t: Vec<f64> = context
        .tokens()
        .zip(orbit.chunks_exact(d))
        .map(|(x, u)| (1.0 - dot(u, x)).clamp(0.0, 2.0))
        .collect();
    Ok(snapshot_from_d2q(t, beta))
}

/// `2π × golden ratio conjugate`, a badly approximable rotation angle.
pub fn golden_angle() -> f64 {
    PI * (3.0 - 5f64.sqrt())
}
