//! Context densities on the sphere: evaluation, exact i.i.d. sampling, the
//! local intensity of near matches C(q), and spherical log-density gradients.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quad;
use crate::special::sphere_area;
use crate::sphere::{self, dot, fill_uniform, project_raw, tangent_frame, TangentFrame, UnitVector};

/// Finite-difference step in the geodesic chart for custom gradients.
pub const FD_STEP: f64 = 1e-5;

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Density value, flagged when the normalization constant is unknown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityValue {
    pub value: f64,
    pub normalized: bool,
}

/// Probability density on S^{d-1} with respect to surface measure.
#[derive(Debug, Clone)]
pub enum DensityModel {
    Uniform { d: usize },
    VonMisesFisher(VonMisesFisher),
    /// `ρ(x) ∝ exp(x1 x2)` on S^2.
    ExpBilinear { log_norm: f64 },
    Custom(CustomDensity),
}

#[derive(Debug, Clone)]
pub struct VonMisesFisher {
    mean: UnitVector,
    kappa: f64,
    log_norm: f64,
    frame: TangentFrame,
    // inverse-CDF table for the polar angle, d != 3
    table: Option<Arc<PolarTable>>,
}

#[derive(Debug, Clone)]
pub struct CustomDensity {
    source: String,
    expr: Expr,
    d: usize,
    envelope: f64,
    normalization: Option<Estimate>,
}

/// Inverse-CDF table for the angle θ between a vMF draw and its mean.
#[derive(Debug)]
struct PolarTable {
    nodes: Vec<f64>,
    cdf: Vec<f64>,
    dens: Vec<f64>,
}

const TABLE_CELLS: usize = 4096;

impl PolarTable {
    fn polar_density(kappa: f64, d: usize, theta: f64) -> f64 {
        (kappa * (theta.cos() - 1.0)).exp() * theta.sin().powi(d as i32 - 2)
    }

    fn new(kappa: f64, d: usize) -> Self {
        let theta_max = if kappa > 0.0 { PI.min(60.0 / kappa.sqrt()) } else { PI };
        let nodes: Vec<f64> = (0..=TABLE_CELLS)
            .map(|j| {
                let u = j as f64 / TABLE_CELLS as f64;
                theta_max * u * u
            })
            .collect();
        let f = |t: f64| Self::polar_density(kappa, d, t);
        let mut cdf = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in nodes.windows(2) {
            acc += quad::gk15(&f, w[0], w[1]).0;
            cdf.push(acc);
        }
        let dens = nodes.iter().map(|&t| f(t)).collect();
        PolarTable { nodes, cdf, dens }
    }

    fn total(&self) -> f64 {
        *self.cdf.last().unwrap()
    }

    fn sample_theta(&self, u: f64) -> f64 {
        let target = u * self.total();
        let j = match self.cdf.binary_search_by(|c| c.partial_cmp(&target).unwrap()) {
            Ok(j) => return self.nodes[j],
            Err(j) => j.clamp(1, self.nodes.len() - 1) - 1,
        };
        let (a, b) = (self.nodes[j], self.nodes[j + 1]);
        let h = b - a;
        let (fa, fb) = (self.dens[j], self.dens[j + 1]);
        let cell_mass = self.cdf[j + 1] - self.cdf[j];
        if cell_mass <= 0.0 || h <= 0.0 {
            return a;
        }
        // trapezoid-linear density in the cell, rescaled to the exact cell mass
        let trap = 0.5 * (fa + fb) * h;
        let r = (target - self.cdf[j]) / cell_mass * trap;
        let slope = (fb - fa) / h;
        let s = if slope.abs() < 1e-300 * fa.max(1e-300) || fa <= 0.0 && slope <= 0.0 {
            if fa > 0.0 { r / fa } else { h * (r / trap).sqrt() }
        } else {
            // solve fa s + slope s^2 / 2 = r for the root in [0, h]
            let disc = (fa * fa + 2.0 * slope * r).max(0.0);
            2.0 * r / (fa + disc.sqrt())
        };
        (a + s.clamp(0.0, h)).min(PI)
    }
}

fn ln_bessel_i0(x: f64) -> f64 {
    // power series, used only for small arguments here
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum.ln()
}

impl DensityModel {
    pub fn uniform(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        Ok(DensityModel::Uniform { d })
    }

    pub fn von_mises_fisher(mean: UnitVector, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::Domain(format!("vMF concentration must be >= 0, got {kappa}")));
        }
        let d = mean.dim();
        let log_norm = if kappa == 0.0 {
            sphere_area(d - 1).ln()
        } else {
            // Z = σ_{d-2} ∫_0^π e^{κ cos θ} sin^{d-2} θ dθ, with e^{κ} factored out
            let f = |t: f64| PolarTable::polar_density(kappa, d, t);
            let split = PI.min(40.0 / kappa.sqrt());
            let mut integral = quad::integrate(f, 0.0, split, 0.0, 1e-14);
            if split < PI {
                integral += quad::integrate(f, split, PI, 0.0, 1e-14);
            }
            sphere_area(d - 2).ln() + kappa + integral.ln()
        };
        let table = if d != 3 && kappa > 0.0 {
            Some(Arc::new(PolarTable::new(kappa, d)))
        } else {
            None
        };
        let frame = tangent_frame(&mean);
        Ok(DensityModel::VonMisesFisher(VonMisesFisher { mean, kappa, log_norm, frame, table }))
    }

    pub fn exp_bilinear() -> Self {
        // Z = 2π ∫_0^π I0(sin^2 θ / 2) sin θ dθ
        let integral = quad::integrate(
            |t: f64| ln_bessel_i0(0.5 * t.sin().powi(2)).exp() * t.sin(),
            0.0,
            PI,
            0.0,
            1e-15,
        );
        DensityModel::ExpBilinear { log_norm: (2.0 * PI * integral).ln() }
    }

    /// Custom density `ρ ∝ exp(expr(x))` with the given envelope on the
    /// unnormalized value; the normalization starts out unknown.
    pub fn custom(log_density: &str, d: usize, envelope: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        if !(envelope > 0.0) || !envelope.is_finite() {
            return Err(Error::Domain(format!("envelope bound must be positive, got {envelope}")));
        }
        Ok(DensityModel::Custom(CustomDensity {
            source: log_density.to_string(),
            expr: Expr::parse(log_density, d)?,
            d,
            envelope,
            normalization: None,
        }))
    }

    /// Caches a Monte Carlo normalization for a custom density. Other variants
    /// already carry an exact normalization and are returned unchanged.
    pub fn with_estimated_normalization(self, samples: usize, seed: u64) -> Result<Self> {
        match self {
            DensityModel::Custom(mut c) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let probe = DensityModel::Custom(c.clone());
                c.normalization = Some(estimate_normalization(&probe, samples, &mut rng)?);
                Ok(DensityModel::Custom(c))
            }
            other => Ok(other),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DensityModel::Uniform { d } => *d,
            DensityModel::VonMisesFisher(v) => v.mean.dim(),
            DensityModel::ExpBilinear { .. } => 3,
            DensityModel::Custom(c) => c.d,
        }
    }

    pub fn label(&self) -> String {
        match self {
            DensityModel::Uniform { d } => format!("uniform(d={d})"),
            DensityModel::VonMisesFisher(v) => {
                format!("vmf(mean={:?}, kappa={})", v.mean.as_slice(), v.kappa)
            }
            DensityModel::ExpBilinear { .. } => "exp_bilinear".to_string(),
            DensityModel::Custom(c) => format!("custom(log_density=\"{}\")", c.source),
        }
    }

    /// Log of the unnormalized density.
    pub fn log_unnormalized(&self, x: &[f64]) -> f64 {
        match self {
            DensityModel::Uniform { .. } => 0.0,
            DensityModel::VonMisesFisher(v) => v.kappa * dot(v.mean.as_slice(), x),
            DensityModel::ExpBilinear { .. } => x[0] * x[1],
            DensityModel::Custom(c) => c.expr.eval(x),
        }
    }

    pub fn unnormalized(&self, x: &[f64]) -> f64 {
        self.log_unnormalized(x).exp()
    }

    /// `ln ∫ unnormalized dσ`, when known.
    pub fn log_normalizer(&self) -> Option<f64> {
        match self {
            DensityModel::Uniform { d } => Some(sphere_area(d - 1).ln()),
            DensityModel::VonMisesFisher(v) => Some(v.log_norm),
            DensityModel::ExpBilinear { log_norm } => Some(*log_norm),
            DensityModel::Custom(c) => c.normalization.map(|e| e.value.ln()),
        }
    }

    /// Upper bound on the unnormalized density.
    pub fn envelope_bound(&self) -> f64 {
        match self {
            DensityModel::Uniform { .. } => 1.0,
            DensityModel::VonMisesFisher(v) => v.kappa.exp(),
            // x1 x2 <= 1/2 on the sphere
            DensityModel::ExpBilinear { .. } => 0.5f64.exp(),
            DensityModel::Custom(c) => c.envelope,
        }
    }

    /// Normalized density at `x`; errors when the normalization is unknown.
    pub fn normalized_density(&self, x: &[f64]) -> Result<f64> {
        let ln_z = self.log_normalizer().ok_or(Error::UnnormalizedDensity)?;
        Ok((self.log_unnormalized(x) - ln_z).exp())
    }

    /// Draws one token into `out`; returns the number of proposals used.
    pub fn sample_into<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) -> Result<u64> {
        match self {
            DensityModel::Uniform { .. } => {
                fill_uniform(out, rng);
                Ok(1)
            }
            DensityModel::VonMisesFisher(v) => {
                v.sample_into(out, rng);
                Ok(1)
            }
            DensityModel::ExpBilinear { .. } | DensityModel::Custom(_) => {
                let bound = self.envelope_bound();
                let mut proposals = 0u64;
                loop {
                    proposals += 1;
                    fill_uniform(out, rng);
                    let value = self.unnormalized(out);
                    if !(value <= bound) {
                        return Err(Error::EnvelopeViolation { value, bound });
                    }
                    if rng.random::<f64>() * bound < value {
                        return Ok(proposals);
                    }
                }
            }
        }
    }
}

impl VonMisesFisher {
    pub fn mean(&self) -> &UnitVector {
        &self.mean
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn sample_into<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        let d = self.mean.dim();
        if self.kappa == 0.0 {
            fill_uniform(out, rng);
            return;
        }
        // cosine of the angle to the mean
        let w = if d == 3 {
            let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
            let k = self.kappa;
            (1.0 + (u + (1.0 - u) * (-2.0 * k).exp()).ln() / k).clamp(-1.0, 1.0)
        } else {
            let table = self.table.as_ref().expect("table for d != 3");
            table.sample_theta(rng.random::<f64>()).cos()
        };
        let s = (1.0 - w * w).max(0.0).sqrt();
        self.frame.fill_direction(out, rng);
        for (o, m) in out.iter_mut().zip(self.mean.as_slice()) {
            *o = w * m + s * *o;
        }
        let n = sphere::norm(out);
        out.iter_mut().for_each(|x| *x /= n);
    }
}

/// Tokens `x_1..x_n` stored contiguously (row-major, `n × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    dim: usize,
    coords: Vec<f64>,
    /// Seed used to generate the tokens, if generated from a seed.
    pub seed: Option<u64>,
    /// Uniform proposals consumed (equals `n` for direct samplers).
    pub proposals: u64,
}

impl Context {
    /// Builds a context from explicit tokens.
    pub fn from_tokens(tokens: &[UnitVector]) -> Result<Self> {
        let first = tokens.first().ok_or(Error::EmptySample { needed: 1, got: 0 })?;
        let dim = first.dim();
        let mut coords = Vec::with_capacity(dim * tokens.len());
        for t in tokens {
            if t.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: t.dim() });
            }
            coords.extend_from_slice(t.as_slice());
        }
        Ok(Context { dim, coords, seed: None, proposals: tokens.len() as u64 })
    }

    pub(crate) fn from_raw(dim: usize, coords: Vec<f64>, seed: Option<u64>, proposals: u64) -> Self {
        debug_assert!(coords.len() % dim == 0 && !coords.is_empty());
        Context { dim, coords, seed, proposals }
    }

    /// Samples `n` tokens with a fresh generator seeded from `seed`.
    pub fn sampled(model: &DensityModel, n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ctx = sample_context(model, n, &mut rng)?;
        ctx.seed = Some(seed);
        Ok(ctx)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn token(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn tokens(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn token_vector(&self, i: usize) -> UnitVector {
        UnitVector::from_unit_coords(self.token(i).to_vec())
    }
}

/// Density at `x`, flagged as unnormalized when the normalization is unknown.
pub fn density_at(model: &DensityModel, x: &UnitVector) -> DensityValue {
    match model.normalized_density(x.as_slice()) {
        Ok(value) => DensityValue { value, normalized: true },
        Err(_) => DensityValue { value: model.unnormalized(x.as_slice()), normalized: false },
    }
}

/// Monte Carlo estimate of `∫ unnormalized ρ dσ` from uniform points.
pub fn estimate_normalization<R: Rng + ?Sized>(
    model: &DensityModel,
    samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if samples < 1000 {
        return Err(Error::EmptySample { needed: 1000, got: samples });
    }
    let d = model.dim();
    let mut buf = vec![0.0; d];
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..samples {
        fill_uniform(&mut buf, rng);
        let v = model.unnormalized(&buf);
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let area = sphere_area(d - 1);
    let var = m2 / (samples - 1) as f64;
    Ok(Estimate { value: area * mean, stderr: area * (var / samples as f64).sqrt() })
}

/// `n` i.i.d. draws from `model`.
pub fn sample_context<R: Rng + ?Sized>(model: &DensityModel, n: usize, rng: &mut R) -> Result<Context> {
    if n == 0 {
        return Err(Error::EmptySample { needed: 1, got: 0 });
    }
    let d = model.dim();
    let mut coords = vec![0.0; n * d];
    let mut proposals = 0;
    for chunk in coords.chunks_exact_mut(d) {
        proposals += model.sample_into(chunk, rng)?;
    }
    Ok(Context::from_raw(d, coords, None, proposals))
}

/// `α = 2 / (d - 1)`.
pub fn alpha_for_dim(d: usize) -> f64 {
    2.0 / (d as f64 - 1.0)
}

/// Local intensity of near matches `C(q) = 2^{1/α} σ_{d-2} ρ(q) / (d - 1)`.
pub fn local_intensity(model: &DensityModel, q: &UnitVector) -> Result<f64> {
    let d = model.dim();
    if q.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: q.dim() });
    }
    let rho = model.normalized_density(q.as_slice())?;
    Ok(intensity_constant(d) * rho)
}

/// `2^{1/α} σ_{d-2} / (d - 1)`, the factor multiplying ρ(q) in C(q).
pub fn intensity_constant(d: usize) -> f64 {
    let inv_alpha = (d as f64 - 1.0) / 2.0;
    2f64.powf(inv_alpha) * sphere_area(d - 2) / (d as f64 - 1.0)
}

/// Spherical gradient of `log ρ` at `q`.
pub fn grad_log_density(model: &DensityModel, q: &UnitVector) -> Result<Vec<f64>> {
    let d = model.dim();
    if q.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: q.dim() });
    }
    Ok(match model {
        DensityModel::Uniform { d } => vec![0.0; *d],
        DensityModel::VonMisesFisher(v) => project_raw(q.as_slice(), v.mean.as_slice())
            .into_iter()
            .map(|x| v.kappa * x)
            .collect(),
        DensityModel::ExpBilinear { .. } => project_raw(q.as_slice(), &[q[1], q[0], 0.0]),
        DensityModel::Custom(_) => finite_difference_gradient(model, q, FD_STEP),
    })
}

/// Central differences of `log ρ` along the geodesic chart at `q`.
pub fn finite_difference_gradient(model: &DensityModel, q: &UnitVector, h: f64) -> Vec<f64> {
    let frame = tangent_frame(q);
    let m = frame.basis.len();
    let mut grad = vec![0.0; q.dim()];
    let mut coords = vec![0.0; m];
    for j in 0..m {
        coords[j] = h;
        let plus = frame.exp(&coords).expect("chart step");
        coords[j] = -h;
        let minus = frame.exp(&coords).expect("chart step");
        coords[j] = 0.0;
        let slope = (model.log_unnormalized(plus.as_slice()) - model.log_unnormalized(minus.as_slice()))
            / (2.0 * h);
        for (g, b) in grad.iter_mut().zip(&frame.basis[j]) {
            *g += slope * b;
        }
    }
    grad
}

/// Monte Carlo estimate of `F(t) = P(1 - <q, x> <= t)` under `model`.
pub fn empirical_tail<R: Rng + ?Sized>(
    model: &DensityModel,
    q: &UnitVector,
    t: f64,
    samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if !(t > 0.0 && t <= 2.0) {
        return Err(Error::Domain(format!("tail level must lie in (0, 2], got {t}")));
    }
    if samples < 1000 {
        return Err(Error::EmptySample { needed: 1000, got: samples });
    }
    let d = model.dim();
    if q.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: q.dim() });
    }
    let mut buf = vec![0.0; d];
    let mut hits = 0u64;
    for _ in 0..samples {
        model.sample_into(&mut buf, rng)?;
        if sphere::d2q_raw(q.as_slice(), &buf) <= t {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    Ok(Estimate { value: p, stderr: (p * (1.0 - p) / samples as f64).sqrt() })
}

/// Largest ratio `unnormalized / envelope` seen on `points` uniform draws.
/// Values above one mean the envelope is invalid.
pub fn audit_envelope<R: Rng + ?Sized>(model: &DensityModel, points: usize, rng: &mut R) -> f64 {
    let d = model.dim();
    let bound = model.envelope_bound();
    let mut buf = vec![0.0; d];
    let mut worst = 0.0f64;
    for _ in 0..points {
        fill_uniform(&mut buf, rng);
        worst = worst.max(model.unnormalized(&buf) / bound);
    }
    worst
}
