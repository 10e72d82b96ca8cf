//! Samplers for the limiting objects: Poisson atoms from exponential arrivals,
//! limiting ordered weights, marked atoms and the output functionals.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::special::{ln_gamma, ln_reg_upper_incomplete_gamma};
use crate::sphere::{tangent_frame, UnitVector};

pub const DEFAULT_TAIL_EPSILON: f64 = 1e-8;
pub const DEFAULT_K_MIN: usize = 50;
/// Hard cap on the number of atoms generated for one sample.
pub const MAX_ATOMS: usize = 1_000_000;

/// Intensity parameters `(C, γ, α)` with `Λ([0, y]) = C (y/γ)^{1/α}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PppParams {
    pub c: f64,
    pub gamma: f64,
    pub alpha: f64,
}

impl PppParams {
    pub fn new(c: f64, gamma: f64, alpha: f64) -> Result<Self> {
        for (name, v) in [("C", c), ("gamma", gamma), ("alpha", alpha)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(PppParams { c, gamma, alpha })
    }

    /// `Λ([0, y])`.
    pub fn mean_count(&self, y: f64) -> f64 {
        self.c * (y / self.gamma).powf(1.0 / self.alpha)
    }

    /// `Y = γ (Γ / C)^α`.
    pub fn atom(&self, arrival: f64) -> f64 {
        self.gamma * (arrival / self.c).powf(self.alpha)
    }

    /// `ln ∫_y^∞ e^{-u} dΛ(u) = ln(C γ^{-1/α} Γ(1/α+1) Q(1/α, y))`.
    pub fn ln_expected_residual(&self, y: f64) -> f64 {
        let s = 1.0 / self.alpha;
        self.c.ln() - s * self.gamma.ln() + ln_gamma(s + 1.0).expect("s > 0")
            + ln_reg_upper_incomplete_gamma(s, y).expect("valid arguments")
    }
}

/// Truncated increasing atoms `Y_1 < … < Y_K` with a tail certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct PointProcessSample {
    pub atoms: Vec<f64>,
    /// Partial sums `Γ_i` of unit exponentials.
    pub arrivals: Vec<f64>,
    /// Expected residual mass `∫_{Y_K}^∞ e^{-y} dΛ(y)`.
    pub tail_bound: f64,
    /// `ln` of the same residual, finite when `tail_bound` underflows.
    pub ln_tail_bound: f64,
    pub params: PppParams,
}

impl PointProcessSample {
    /// Maps given arrivals to atoms; no truncation rule is applied.
    pub fn from_arrivals(arrivals: Vec<f64>, params: PppParams) -> Result<Self> {
        if arrivals.is_empty() {
            return Err(Error::InsufficientAtoms { needed: 1, available: 0 });
        }
        let atoms: Vec<f64> = arrivals.iter().map(|&g| params.atom(g)).collect();
        let ln_tail = params.ln_expected_residual(*atoms.last().unwrap());
        Ok(PointProcessSample { atoms, arrivals, tail_bound: ln_tail.exp(), ln_tail_bound: ln_tail, params })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `Σ_i exp(-(Y_i - Y_1))`.
    pub fn shifted_mass(&self) -> f64 {
        let y1 = self.atoms[0];
        self.atoms.iter().map(|y| (-(y - y1)).exp()).sum()
    }

    /// Residual relative to the retained mass.
    pub fn relative_tail(&self) -> f64 {
        (self.ln_tail_bound + self.atoms[0] - self.shifted_mass().ln()).exp()
    }
}

/// Draws atoms until the expected residual mass is below
/// `tail_epsilon` times the retained mass, with at least `k_min` atoms.
pub fn sample_ppp_atoms<R: Rng + ?Sized>(
    params: PppParams,
    tail_epsilon: f64,
    k_min: usize,
    rng: &mut R,
) -> Result<PointProcessSample> {
    if !(tail_epsilon > 0.0 && tail_epsilon <= 1e-3) {
        return Err(Error::Domain(format!("tail_epsilon must lie in (0, 1e-3], got {tail_epsilon}")));
    }
    if k_min == 0 {
        return Err(Error::Domain("k_min must be at least 1".into()));
    }
    let ln_eps = tail_epsilon.ln();
    let mut arrivals = Vec::with_capacity(k_min.max(16) * 2);
    let mut atoms = Vec::with_capacity(k_min.max(16) * 2);
    let mut gamma_sum = 0.0;
    let mut shifted = 0.0;
    loop {
        if atoms.len() >= MAX_ATOMS {
            return Err(Error::NonTermination(MAX_ATOMS));
        }
        let e: f64 = rng.sample(Exp1);
        gamma_sum += e;
        let y = params.atom(gamma_sum);
        arrivals.push(gamma_sum);
        atoms.push(y);
        let y1 = atoms[0];
        shifted += (-(y - y1)).exp();
        if atoms.len() >= k_min {
            let ln_tail = params.ln_expected_residual(y);
            // residual ≤ ε Σ e^{-Y_i}, evaluated relative to e^{-Y_1}
            if ln_tail + y1 <= ln_eps + shifted.ln() {
                return Ok(PointProcessSample {
                    atoms,
                    arrivals,
                    tail_bound: ln_tail.exp(),
                    ln_tail_bound: ln_tail,
                    params,
                });
            }
        }
    }
}

/// `W_i = e^{-Y_i} / Σ_{j ≤ K} e^{-Y_j}` for `i = 1..k`.
pub fn limiting_ordered_weights(sample: &PointProcessSample, k: usize) -> Result<Vec<f64>> {
    if k > sample.len() || sample.is_empty() {
        return Err(Error::InsufficientAtoms { needed: k, available: sample.len() });
    }
    let y1 = sample.atoms[0];
    let total = sample.shifted_mass();
    Ok(sample.atoms[..k].iter().map(|y| (-(y - y1)).exp() / total).collect())
}

/// Radial atoms with i.i.d. uniform tangent marks at `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedAtoms {
    pub atoms: PointProcessSample,
    pub marks: Vec<Vec<f64>>,
}

pub fn sample_marked_ppp<R: Rng + ?Sized>(
    params: PppParams,
    q: &UnitVector,
    tail_epsilon: f64,
    k_min: usize,
    rng: &mut R,
) -> Result<MarkedAtoms> {
    let atoms = sample_ppp_atoms(params, tail_epsilon, k_min, rng)?;
    let frame = tangent_frame(q);
    let mut marks = Vec::with_capacity(atoms.len());
    for _ in 0..atoms.len() {
        let mut m = vec![0.0; q.dim()];
        frame.fill_direction(&mut m, rng);
        marks.push(m);
    }
    Ok(MarkedAtoms { atoms, marks })
}

/// `Ξ = Σ e^{-y_i} √(2 y_i) θ_i / Σ e^{-y_i}`.
pub fn sample_critical_output(marked: &MarkedAtoms) -> Result<Vec<f64>> {
    let atoms = &marked.atoms.atoms;
    if atoms.is_empty() || marked.marks.len() != atoms.len() {
        return Err(Error::InsufficientAtoms { needed: 1, available: atoms.len().min(marked.marks.len()) });
    }
    let d = marked.marks[0].len();
    let y1 = atoms[0];
    let mut num = vec![0.0; d];
    let mut den = 0.0;
    for (y, theta) in atoms.iter().zip(&marked.marks) {
        let w = (-(y - y1)).exp();
        den += w;
        let r = (2.0 * y).sqrt();
        for (n, t) in num.iter_mut().zip(theta) {
            *n += w * r * t;
        }
    }
    Ok(num.into_iter().map(|v| v / den).collect())
}

/// `Φ = √(2R) Θ` with `R = (-ln U)^α` and `Θ` uniform on the tangent sphere.
pub fn sample_supercritical_output<R: Rng + ?Sized>(alpha: f64, q: &UnitVector, rng: &mut R) -> Vec<f64> {
    let r = sample_weibull_radius(alpha, rng);
    let mut theta = vec![0.0; q.dim()];
    tangent_frame(q).fill_direction(&mut theta, rng);
    let s = (2.0 * r).sqrt();
    theta.iter_mut().for_each(|t| *t *= s);
    theta
}

/// `R` with `P(R > r) = exp(-r^{1/α})`.
pub fn sample_weibull_radius<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e.powf(alpha)
}
