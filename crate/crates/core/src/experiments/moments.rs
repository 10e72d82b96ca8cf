//! Monte Carlo estimates of the local output moments of `(x - q) e^{-βT}`.

use rayon::prelude::*;

use super::harness::{split_seed, trial_rng};
use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::sphere::{dot, UnitVector};

const CHUNK: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMomentEstimate {
    pub samples: usize,
    /// Mean of `(x - q) e^{-βT}`.
    pub first: Vec<f64>,
    pub first_stderr: Vec<f64>,
    /// Mean of `|P_q (x - q)|² e^{-2βT}`, the trace of the tangential second moment.
    pub tangential_trace: f64,
    pub tangential_trace_stderr: f64,
}

#[derive(Clone)]
struct Sums {
    n: usize,
    s1: Vec<f64>,
    s2: Vec<f64>,
    t1: f64,
    t2: f64,
}

impl Sums {
    fn new(d: usize) -> Self {
        Sums { n: 0, s1: vec![0.0; d], s2: vec![0.0; d], t1: 0.0, t2: 0.0 }
    }

    fn merge(mut self, o: Sums) -> Sums {
        self.n += o.n;
        self.s1.iter_mut().zip(&o.s1).for_each(|(a, b)| *a += b);
        self.s2.iter_mut().zip(&o.s2).for_each(|(a, b)| *a += b);
        self.t1 += o.t1;
        self.t2 += o.t2;
        self
    }
}

/// Draws `samples` points from `model`, in chunks seeded by `split_seed(seed, chunk)`.
pub fn estimate_local_moments(
    model: &DensityModel,
    q: &UnitVector,
    beta: f64,
    samples: usize,
    seed: u64,
) -> Result<LocalMomentEstimate> {
    let d = model.dim();
    if q.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: q.dim() });
    }
    if samples < 2 {
        return Err(Error::EmptySample { needed: 2, got: samples });
    }
    let qs = q.as_slice();
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<Sums> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = trial_rng(split_seed(seed, c as u64));
            let len = CHUNK.min(samples - c * CHUNK);
            let mut s = Sums::new(d);
            let mut x = vec![0.0; d];
            for _ in 0..len {
                model.sample_into(&mut x, &mut rng)?;
                let c = dot(qs, &x);
                let w = (-beta * (1.0 - c)).exp();
                s.n += 1;
                if w == 0.0 {
                    continue;
                }
                let mut tang = 0.0;
                for j in 0..d {
                    let v = (x[j] - qs[j]) * w;
                    s.s1[j] += v;
                    s.s2[j] += v * v;
                    let p = x[j] - c * qs[j];
                    tang += p * p;
                }
                let t = tang * w * w;
                s.t1 += t;
                s.t2 += t * t;
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let s = parts.into_iter().fold(Sums::new(d), Sums::merge);
    let n = s.n as f64;
    let se = |sum: f64, sq: f64| {
        let m = sum / n;
        ((sq / n - m * m).max(0.0) / (n - 1.0)).sqrt()
    };
    Ok(LocalMomentEstimate {
        samples: s.n,
        first: s.s1.iter().map(|v| v / n).collect(),
        first_stderr: s.s1.iter().zip(&s.s2).map(|(a, b)| se(*a, *b)).collect(),
        tangential_trace: s.t1 / n,
        tangential_trace_stderr: se(s.t1, s.t2),
    })
}
