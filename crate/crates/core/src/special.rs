//! Gamma-family special functions.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const MAX_ITER: usize = 10_000;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// `ln Γ(s)` for `s > 0` (Lanczos, g = 7).
pub fn ln_gamma(s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("ln_gamma requires s > 0, got {s}")));
    }
    Ok(ln_gamma_pos(s))
}

fn ln_gamma_pos(s: f64) -> f64 {
    if s < 0.5 {
        // reflection: Γ(s)Γ(1-s) = π / sin(πs)
        return (PI / (PI * s).sin()).ln() - ln_gamma_pos(1.0 - s);
    }
    let x = s - 1.0;
    let mut a = LANCZOS_COEF[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `Γ(s)` for `s > 0`.
pub fn gamma(s: f64) -> Result<f64> {
    ln_gamma(s).map(f64::exp)
}

fn check_incomplete(s: f64, z: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("incomplete gamma requires s > 0, got {s}")));
    }
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("incomplete gamma requires z >= 0, got {z}")));
    }
    Ok(())
}

/// Series for `P(s, z)` in log form: returns `ln P`.
fn ln_series_p(s: f64, z: f64) -> f64 {
    let mut term = 1.0 / s;
    let mut sum = term;
    let mut a = s;
    for _ in 0..MAX_ITER {
        a += 1.0;
        term *= z / a;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum.ln() - z + s * z.ln() - ln_gamma_pos(s)
}

/// Modified Lentz continued fraction for `Q(s, z)` in log form.
fn ln_cf_q(s: f64, z: f64) -> f64 {
    let mut b = z + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h.ln() - z + s * z.ln() - ln_gamma_pos(s)
}

/// Regularized lower incomplete gamma `P(s, z) = γ(s, z) / Γ(s)`.
///
/// Series below `z = s + 1`, continued fraction for the complement above.
pub fn reg_lower_incomplete_gamma(s: f64, z: f64) -> Result<f64> {
    check_incomplete(s, z)?;
    if z == 0.0 {
        return Ok(0.0);
    }
    if z.is_infinite() {
        return Ok(1.0);
    }
    let p = if z < s + 1.0 {
        ln_series_p(s, z).exp()
    } else {
        1.0 - ln_cf_q(s, z).exp()
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Regularized upper incomplete gamma `Q(s, z) = 1 - P(s, z)`.
pub fn reg_upper_incomplete_gamma(s: f64, z: f64) -> Result<f64> {
    ln_reg_upper_incomplete_gamma(s, z).map(f64::exp)
}

/// `ln Q(s, z)`; finite even where `Q` underflows.
pub fn ln_reg_upper_incomplete_gamma(s: f64, z: f64) -> Result<f64> {
    check_incomplete(s, z)?;
    if z == 0.0 {
        return Ok(0.0);
    }
    if z.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    if z < s + 1.0 {
        let p = ln_series_p(s, z).exp();
        Ok((-p).ln_1p())
    } else {
        Ok(ln_cf_q(s, z))
    }
}

/// Surface area σ_k of the unit sphere S^k ⊂ R^{k+1}; σ_0 = 2.
pub fn sphere_area(k: usize) -> f64 {
    let h = (k as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) / ln_gamma_pos(h).exp()
}
