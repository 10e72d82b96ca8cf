//! Stable softmax attention for a single query over a context.

use nalgebra::{DMatrix, DVector};

use crate::density::Context;
use crate::error::{Error, Result};
use crate::special::ln_gamma;
use crate::sphere::{d2q_raw, dot, UnitVector};

/// Weights below this are flushed to zero after normalization.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// A `d × d` value map.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueMatrix(DMatrix<f64>);

impl ValueMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("value matrix has non-finite entries".into()));
        }
        Ok(ValueMatrix(m))
    }

    pub fn identity(d: usize) -> Self {
        ValueMatrix(DMatrix::identity(d, d))
    }

    pub fn zeros(d: usize) -> Self {
        ValueMatrix(DMatrix::zeros(d, d))
    }

    /// Row-major entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::DimensionTooSmall(0));
        }
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: r.len() });
            }
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.0 * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    pub fn is_identity(&self) -> bool {
        self.0 == DMatrix::identity(self.dim(), self.dim())
    }
}

/// Query direction and effective inverse temperature after folding `Q`, `K`
/// into the scores: `q = KᵀQx / ‖KᵀQx‖`, `β_eff = β ‖KᵀQx‖`.
pub fn reduce_postln(
    q_mat: &DMatrix<f64>,
    k_mat: &DMatrix<f64>,
    x: &UnitVector,
    beta: f64,
) -> Result<(UnitVector, f64)> {
    let d = x.dim();
    for m in [q_mat, k_mat] {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: m.nrows().max(m.ncols()) });
        }
    }
    let v = k_mat.transpose() * (q_mat * DVector::from_column_slice(x.as_slice()));
    let norm = v.norm();
    if !(norm > 1e-300) {
        return Err(Error::DegenerateProjection(norm));
    }
    let q = UnitVector::from_unit_coords(v.iter().map(|c| c / norm).collect());
    Ok((q, beta * norm))
}

/// One context's attention record.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionSnapshot {
    pub weights: Vec<f64>,
    /// Indices sorting `weights` descending (ties by lower index).
    pub order: Vec<usize>,
    /// `ln Σ exp(-β (T_i - T_(1)))`.
    pub log_partition_shifted: f64,
    pub d2q_values: Vec<f64>,
    pub beta: f64,
    /// `V Σ A_i x_i`; empty until computed by [`attention_output`].
    pub output: Vec<f64>,
    /// `output - V q`; empty until computed.
    pub displacement: Vec<f64>,
}

impl AttentionSnapshot {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Smallest D2Q, `T_(1)`.
    pub fn min_d2q(&self) -> f64 {
        self.d2q_values[self.order[0]]
    }

    /// `A_(k)` for 1-based rank `k`.
    pub fn ordered_weight(&self, k: usize) -> f64 {
        self.weights[self.order[k - 1]]
    }

    pub fn ordered_weights(&self) -> Vec<f64> {
        self.order.iter().map(|&i| self.weights[i]).collect()
    }

    /// `ln Z_n = ln Σ exp(-β T_i)`.
    pub fn log_partition(&self) -> f64 {
        self.log_partition_shifted - self.beta * self.min_d2q()
    }
}

/// Shared softmax over scores `-β T_i`. Returns `(weights, order, ln Σ shifted)`.
pub(crate) fn softmax_from_d2q(t: &[f64], beta: f64) -> (Vec<f64>, Vec<usize>, f64) {
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| t[a].total_cmp(&t[b]).then(a.cmp(&b)));
    let t_min = t[order[0]];
    let mut weights: Vec<f64> = t.iter().map(|&ti| (-beta * (ti - t_min)).exp()).collect();
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
        if *w < WEIGHT_FLOOR {
            *w = 0.0;
        }
    }
    (weights, order, sum.ln())
}

/// The `k` largest weights in decreasing order, without sorting the whole
/// context. Same ordering and flushing rules as [`attention_weights`].
pub fn top_ordered_weights(t: &[f64], beta: f64, k: usize) -> Vec<f64> {
    let k = k.min(t.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = |a: &usize, b: &usize| t[*a].total_cmp(&t[*b]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..t.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
    }
    let head = &mut idx[..k];
    head.sort_by(cmp);
    let t_min = t[head[0]];
    let sum: f64 = t.iter().map(|&ti| (-beta * (ti - t_min)).exp()).sum();
    head.iter()
        .map(|&i| {
            let w = (-beta * (t[i] - t_min)).exp() / sum;
            if w < WEIGHT_FLOOR { 0.0 } else { w }
        })
        .collect()
}

/// Weights, ordering and shifted log-partition for query `q`.
pub fn attention_weights(q: &UnitVector, context: &Context, beta: f64) -> Result<AttentionSnapshot> {
    check(q, context, beta)?;
    let t: Vec<f64> = context.tokens().map(|x| d2q_raw(q.as_slice(), x)).collect();
    Ok(snapshot_from_d2q(t, beta))
}

pub(crate) fn snapshot_from_d2q(t: Vec<f64>, beta: f64) -> AttentionSnapshot {
    let (weights, order, log_partition_shifted) = softmax_from_d2q(&t, beta);
    AttentionSnapshot {
        weights,
        order,
        log_partition_shifted,
        d2q_values: t,
        beta,
        output: Vec::new(),
        displacement: Vec::new(),
    }
}

fn check(q: &UnitVector, context: &Context, beta: f64) -> Result<()> {
    if q.dim() != context.dim() {
        return Err(Error::DimensionMismatch { expected: context.dim(), got: q.dim() });
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be finite and >= 0, got {beta}")));
    }
    Ok(())
}

/// Full snapshot including `ATT(n) = V Σ A_i x_i` and the displacement.
pub fn attention_output(
    q: &UnitVector,
    context: &Context,
    beta: f64,
    v: &ValueMatrix,
) -> Result<AttentionSnapshot> {
    if v.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: q.dim(), got: v.dim() });
    }
    let mut snap = attention_weights(q, context, beta)?;
    fill_output(&mut snap, q, context, v);
    Ok(snap)
}

pub(crate) fn fill_output(snap: &mut AttentionSnapshot, q: &UnitVector, context: &Context, v: &ValueMatrix) {
    let d = q.dim();
    let mut mean = vec![0.0; d];
    // Σ A_i (x_i - q) is accumulated directly to avoid cancellation
    let mut shift = vec![0.0; d];
    for (w, x) in snap.weights.iter().zip(context.tokens()) {
        if *w == 0.0 {
            continue;
        }
        for j in 0..d {
            mean[j] += w * x[j];
            shift[j] += w * (x[j] - q[j]);
        }
    }
    snap.output = v.apply(&mean);
    snap.displacement = v.apply(&shift);
}

/// Displacement `Σ A_i (x_i - q)` (before applying `V`), without sorting.
/// Returns `(displacement, T_(1), ln Σ shifted)`.
pub fn raw_displacement(q: &UnitVector, context: &Context, beta: f64) -> (Vec<f64>, f64, f64) {
    let d = q.dim();
    let qs = q.as_slice();
    let t_min = context.tokens().map(|x| d2q_raw(qs, x)).fold(f64::INFINITY, f64::min);
    let mut shift = vec![0.0; d];
    let mut sum = 0.0;
    for x in context.tokens() {
        let w = (-beta * (1.0 - dot(qs, x) - t_min)).exp();
        if w == 0.0 {
            continue;
        }
        sum += w;
        for j in 0..d {
            shift[j] += w * (x[j] - qs[j]);
        }
    }
    shift.iter_mut().for_each(|s| *s /= sum);
    (shift, t_min, sum.ln())
}

/// `Z_n / (C n β^{-1/α} Γ(1/α + 1))` with `α = 2/(d-1)`.
pub fn normalized_partition(snapshot: &AttentionSnapshot, dim: usize, cq: f64) -> Result<f64> {
    let beta = snapshot.beta;
    if !(beta > 0.0) || !(cq > 0.0) {
        return Err(Error::Domain(format!("need beta > 0 and C(q) > 0, got {beta}, {cq}")));
    }
    let inv_alpha = (dim as f64 - 1.0) / 2.0;
    let n = snapshot.len() as f64;
    let ln_denominator = cq.ln() + n.ln() - inv_alpha * beta.ln() + ln_gamma(inv_alpha + 1.0)?;
    Ok((snapshot.log_partition() - ln_denominator).exp())
}
