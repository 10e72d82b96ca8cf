//! Vector geometry on the unit sphere S^{d-1}.
//!
//! Points are carried by [`UnitVector`]; the tangent space at a base point is
//! coordinatized by a deterministic [`TangentFrame`].

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Norms at or below this are treated as zero.
pub const MIN_NORM: f64 = 1e-300;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// A point of S^{d-1}, d >= 2.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Normalizes `v`; see [`normalize`].
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::DimensionTooSmall(v.len()));
        }
        let n = norm(&v);
        if !(n > MIN_NORM) || !n.is_finite() {
            return Err(Error::ZeroVector(n));
        }
        Ok(UnitVector(v.into_iter().map(|x| x / n).collect()))
    }

    /// The standard basis vector e_{index+1} in dimension `d`.
    pub fn basis(d: usize, index: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        if index >= d {
            return Err(Error::DimensionMismatch { expected: d, got: index + 1 });
        }
        let mut v = vec![0.0; d];
        v[index] = 1.0;
        Ok(UnitVector(v))
    }

    /// Wraps coordinates already known to have unit norm (e.g. copied out of a
    /// [`crate::density::Context`]).
    pub(crate) fn from_unit_coords(v: Vec<f64>) -> Self {
        debug_assert!((norm(&v) - 1.0).abs() < 1e-9);
        UnitVector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    /// The antipodal point.
    pub fn neg(&self) -> UnitVector {
        UnitVector(self.0.iter().map(|x| -x).collect())
    }
}

impl std::ops::Index<usize> for UnitVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Returns `v / ‖v‖`.
pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    UnitVector::new(v.to_vec())
}

/// Distance-to-query `1 - <q, x>`, clamped to `[0, 2]`.
pub fn d2q(q: &UnitVector, x: &UnitVector) -> Result<f64> {
    check_dims(q.dim(), x.dim())?;
    Ok(d2q_raw(q.as_slice(), x.as_slice()))
}

#[inline]
pub(crate) fn d2q_raw(q: &[f64], x: &[f64]) -> f64 {
    (1.0 - dot(q, x)).clamp(0.0, 2.0)
}

/// `(Id - q q^T) v`.
pub fn tangent_project(q: &UnitVector, v: &[f64]) -> Result<Vec<f64>> {
    check_dims(q.dim(), v.len())?;
    Ok(project_raw(q.as_slice(), v))
}

pub(crate) fn project_raw(q: &[f64], v: &[f64]) -> Vec<f64> {
    let c = dot(q, v);
    let mut out: Vec<f64> = v.iter().zip(q).map(|(vi, qi)| vi - c * qi).collect();
    // second pass removes the O(eps) residual along q
    let c2 = dot(q, &out);
    for (o, qi) in out.iter_mut().zip(q) {
        *o -= c2 * qi;
    }
    out
}

/// Orthonormal basis of the tangent space T_q S^{d-1}.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFrame {
    pub base: UnitVector,
    pub basis: Vec<Vec<f64>>,
}

/// Gram-Schmidt completion of `q`, seeded with the standard basis vector
/// least aligned with `q` (lowest index on ties). Remaining candidates are
/// taken in the same order.
pub fn tangent_frame(q: &UnitVector) -> TangentFrame {
    let d = q.dim();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        q[a].abs()
            .partial_cmp(&q[b].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
    for &idx in &order {
        if basis.len() == d - 1 {
            break;
        }
        let mut v = vec![0.0; d];
        v[idx] = 1.0;
        // two rounds of modified Gram-Schmidt
        for _ in 0..2 {
            let c = dot(q.as_slice(), &v);
            for (vi, qi) in v.iter_mut().zip(q.as_slice()) {
                *vi -= c * qi;
            }
            for b in &basis {
                let c = dot(b, &v);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= c * bi;
                }
            }
        }
        let n = norm(&v);
        if n < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= n);
        basis.push(v);
    }
    TangentFrame { base: q.clone(), basis }
}

impl TangentFrame {
    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Ambient vector `Σ coords_j e_j` for tangent coordinates `coords`.
    pub fn embed(&self, coords: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.basis.len(), coords.len())?;
        let mut v = vec![0.0; self.dim()];
        for (c, b) in coords.iter().zip(&self.basis) {
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi += c * bi;
            }
        }
        Ok(v)
    }

    /// Frame coordinates of an ambient vector (tangential part only).
    pub fn coordinates(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.dim(), v.len())?;
        Ok(self.basis.iter().map(|b| dot(b, v)).collect())
    }

    /// Logarithmic map at the base point, in frame coordinates.
    pub fn log(&self, x: &UnitVector) -> Result<Vec<f64>> {
        check_dims(self.dim(), x.dim())?;
        let c = self.base.dot(x.as_slice());
        if c <= -1.0 + 1e-12 {
            return Err(Error::AntipodalPoint(c));
        }
        let t = project_raw(self.base.as_slice(), x.as_slice());
        let tn = norm(&t);
        if tn == 0.0 {
            return Ok(vec![0.0; self.basis.len()]);
        }
        // atan2 is exact near both c = 1 and c = -1, unlike acos
        let r = tn.atan2(c.clamp(-1.0, 1.0));
        Ok(self.basis.iter().map(|b| r * dot(b, &t) / tn).collect())
    }

    /// Exponential map at the base point from frame coordinates.
    pub fn exp(&self, coords: &[f64]) -> Result<UnitVector> {
        let v = self.embed(coords)?;
        let r = norm(&v);
        if r == 0.0 {
            return Ok(self.base.clone());
        }
        let (s, c) = r.sin_cos();
        let out: Vec<f64> = self
            .base
            .as_slice()
            .iter()
            .zip(&v)
            .map(|(qi, vi)| c * qi + s * vi / r)
            .collect();
        UnitVector::new(out)
    }

    /// Uniform direction on the unit sphere of the tangent space. For d = 2
    /// this is one of the two tangent units with probability 1/2 each.
    pub fn sample_direction<R: Rng + ?Sized>(&self, rng: &mut R) -> UnitVector {
        if self.basis.len() == 1 {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            return UnitVector(self.basis[0].iter().map(|x| sign * x).collect());
        }
        loop {
            let g: Vec<f64> = (0..self.basis.len())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let n = norm(&g);
            if n > 1e-12 {
                let coords: Vec<f64> = g.iter().map(|x| x / n).collect();
                // embedding an orthonormal-combination of unit norm; renormalize for rounding
                let v = self.embed(&coords).expect("frame dimension");
                let vn = norm(&v);
                return UnitVector(v.into_iter().map(|x| x / vn).collect());
            }
        }
    }
}

impl TangentFrame {
    /// Non-allocating variant of [`TangentFrame::sample_direction`] writing the
    /// ambient direction into `out`.
    pub(crate) fn fill_direction<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        match self.basis.len() {
            1 => {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                for (o, b) in out.iter_mut().zip(&self.basis[0]) {
                    *o = sign * b;
                }
            }
            2 => {
                let phi = std::f64::consts::TAU * rng.random::<f64>();
                let (s, c) = phi.sin_cos();
                for ((o, b0), b1) in out.iter_mut().zip(&self.basis[0]).zip(&self.basis[1]) {
                    *o = c * b0 + s * b1;
                }
            }
            _ => {
                let dir = self.sample_direction(rng);
                out.copy_from_slice(dir.as_slice());
            }
        }
    }
}

/// Log map centered at `center`, in the coordinates of `tangent_frame(center)`.
pub fn geodesic_chart(center: &UnitVector, x: &UnitVector) -> Result<Vec<f64>> {
    tangent_frame(center).log(x)
}

/// Exponential map centered at `center`; inverse of [`geodesic_chart`].
pub fn exponential_map(center: &UnitVector, coords: &[f64]) -> Result<UnitVector> {
    tangent_frame(center).exp(coords)
}

/// Uniform direction in the unit tangent sphere at `q`.
pub fn sample_tangent_direction<R: Rng + ?Sized>(q: &UnitVector, rng: &mut R) -> UnitVector {
    tangent_frame(q).sample_direction(rng)
}

/// Uniform point of S^{d-1} via a normalized Gaussian vector.
pub fn sample_uniform<R: Rng + ?Sized>(d: usize, rng: &mut R) -> UnitVector {
    let mut buf = vec![0.0; d];
    fill_uniform(&mut buf, rng);
    UnitVector(buf)
}

/// Writes a uniform point of the sphere into `out`.
pub(crate) fn fill_uniform<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    loop {
        for x in out.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let n = norm(out);
        if n > 1e-150 {
            out.iter_mut().for_each(|x| *x /= n);
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uv(v: &[f64]) -> UnitVector {
        normalize(v).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(uv(&[3.0, 4.0]).as_slice(), &[0.6, 0.8]);
        assert_eq!(uv(&[1.0, 0.0, 0.0]).as_slice(), &[1.0, 0.0, 0.0]);
        let h = uv(&[2.0, 2.0]);
        let expected = 2.0 / 8f64.sqrt();
        assert!((h[0] - expected).abs() < 1e-15 && (h[1] - expected).abs() < 1e-15);
        assert!(matches!(normalize(&[0.0, 0.0]), Err(Error::ZeroVector(_))));
        assert!(matches!(normalize(&[1.0]), Err(Error::DimensionTooSmall(1))));
    }

    #[test]
    fn d2q_examples() {
        let q = uv(&[1.0, 0.0, 0.0]);
        assert_eq!(d2q(&q, &q).unwrap(), 0.0);
        assert_eq!(d2q(&q, &q.neg()).unwrap(), 2.0);
        assert_eq!(d2q(&q, &uv(&[0.0, 1.0, 0.0])).unwrap(), 1.0);
        assert!(matches!(
            d2q(&q, &uv(&[1.0, 0.0])),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn projection_examples() {
        let q = uv(&[0.0, 0.0, 1.0]);
        let p = tangent_project(&q, q.as_slice()).unwrap();
        assert!(norm(&p) < 1e-15);
        let v = [0.3, -2.0, 0.0];
        assert_eq!(tangent_project(&q, &v).unwrap(), v.to_vec());
        let e1 = uv(&[1.0, 0.0]);
        assert_eq!(tangent_project(&e1, &[1.0, 1.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn frame_canonical_cases() {
        let f = tangent_frame(&uv(&[1.0, 0.0, 0.0]));
        assert_eq!(f.basis, vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let f = tangent_frame(&uv(&[0.0, 1.0]));
        assert_eq!(f.basis.len(), 1);
        assert!((f.basis[0][0].abs() - 1.0).abs() < 1e-15 && f.basis[0][1].abs() < 1e-15);
    }

    #[test]
    fn frame_invariants_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in 2..8 {
            for _ in 0..50 {
                let q = sample_uniform(d, &mut rng);
                let f = tangent_frame(&q);
                assert_eq!(f.basis.len(), d - 1);
                for (i, b) in f.basis.iter().enumerate() {
                    assert!((norm(b) - 1.0).abs() < 1e-10);
                    assert!(q.dot(b).abs() < 1e-10);
                    for c in &f.basis[i + 1..] {
                        assert!(dot(b, c).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn chart_examples() {
        let e3 = uv(&[0.0, 0.0, 1.0]);
        assert_eq!(geodesic_chart(&e3, &e3).unwrap(), vec![0.0, 0.0]);
        let c = geodesic_chart(&e3, &uv(&[1.0, 0.0, 0.0])).unwrap();
        assert!((norm(&c) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(matches!(
            geodesic_chart(&e3, &e3.neg()),
            Err(Error::AntipodalPoint(_))
        ));
    }

    #[test]
    fn chart_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [2usize, 3, 5] {
            let center = sample_uniform(d, &mut rng);
            let frame = tangent_frame(&center);
            for _ in 0..200 {
                let dir = frame.sample_direction(&mut rng);
                let r = rng.random::<f64>() * (std::f64::consts::PI - 0.1);
                let coords = frame.coordinates(&dir.as_slice().iter().map(|x| r * x).collect::<Vec<_>>()).unwrap();
                let x = exponential_map(&center, &coords).unwrap();
                let back = geodesic_chart(&center, &x).unwrap();
                for (a, b) in coords.iter().zip(&back) {
                    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn tangent_direction_d2_two_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = uv(&[0.6, 0.8]);
        let mut plus = 0;
        for _ in 0..2000 {
            let t = sample_tangent_direction(&q, &mut rng);
            assert!(q.dot(t.as_slice()).abs() < 1e-12);
            if t[0] > 0.0 {
                plus += 1;
            }
        }
        assert!((900..1100).contains(&plus));
    }

    #[test]
    fn tangent_direction_d3_mean_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = uv(&[1.0, 2.0, -0.5]);
        let frame = tangent_frame(&q);
        let n = 100_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            let t = frame.sample_direction(&mut rng);
            assert!(q.dot(t.as_slice()).abs() < 1e-12);
            for (m, x) in mean.iter_mut().zip(t.as_slice()) {
                *m += x / n as f64;
            }
        }
        assert!(norm(&mean) <= 0.02);
    }
}
