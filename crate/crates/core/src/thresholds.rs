//! Certification tolerances, kept in one place so re-tuning is a single edit.
//! Values marked "pilot" were calibrated from desk-scale pilot runs.

/// Heatmap: mean `A_(1)` must reach this where `β ≥ HEATMAP_HIGH_FACTOR n^α`.
pub const HEATMAP_HIGH_MEAN: f64 = 0.9;
pub const HEATMAP_HIGH_FACTOR: f64 = 25.0;
/// Heatmap: mean `A_(1)` must stay below this where `β ≤ HEATMAP_LOW_FACTOR n^α`, `n ≥ HEATMAP_LOW_MIN_N`.
pub const HEATMAP_LOW_MEAN: f64 = 0.1;
pub const HEATMAP_LOW_FACTOR: f64 = 0.04;
pub const HEATMAP_LOW_MIN_N: f64 = 1e3;

/// Profile: sup over the grid of `|median A_(k)/A_(1) - e^{-x^α}|` (pilot).
pub const PROFILE_RATIO_TOL: f64 = 0.05;
/// Profile: sup over the grid of `|median m_n A_(k) - e^{-x^α}/Γ(1/α+1)|`.
pub const PROFILE_ABS_TOL: f64 = 0.05;
/// Profile: sup over the grid of `|median Σ_{i≤k} A_(i) - P(1/α, x^α)|`.
pub const PROFILE_CUMULATIVE_TOL: f64 = 0.02;

/// Normalized partition function: trial mean must land in this interval.
pub const PARTITION_LO: f64 = 0.95;
pub const PARTITION_HI: f64 = 1.05;

/// Critical ordered weights: two-sample KS per rank (pilot).
pub const CRITICAL_KS: f64 = 0.05;
/// Critical output functional: two-sample KS on norms.
pub const CRITICAL_OUTPUT_KS: f64 = 0.06;

/// Supercritical: one-sample KS of `a_n T_(1)` against the Weibull law.
pub const SUPERCRITICAL_KS: f64 = 0.05;
pub const SUPERCRITICAL_MEAN_A1: f64 = 0.95;
/// Supercritical: norm of the trial-mean tangential output after scaling.
pub const SUPERCRITICAL_TANGENTIAL_MEAN: f64 = 0.05;

/// Output field: grid-averaged absolute deviation of the drift column (pilot).
pub const FIELD_DRIFT_DEVIATION: f64 = 0.15;
/// Output field: antipodal symmetry of the deterministic field.
pub const FIELD_SYMMETRY: f64 = 1e-10;

/// Subcritical outputs: relative error of the trial mean.
pub const SUBOUTPUT_MEAN_REL: f64 = 0.1;
/// Fluctuation regime: relative error of tangential covariance eigenvalues.
pub const SUBOUTPUT_FLUCTUATION_COV_REL: f64 = 0.15;
/// Mixed regime: relative error of tangential covariance eigenvalues.
pub const SUBOUTPUT_MIXED_COV_REL: f64 = 0.2;

/// Local moments: relative error of the normal first moment and tangential second-moment trace.
pub const LOCAL_MOMENT_REL: f64 = 0.1;
/// Local moments: tangential first-moment residual in units of its standard error.
pub const LOCAL_MOMENT_TANGENTIAL_SE: f64 = 4.0;

/// Residual dynamics: relative error of the mean of `β(q' - q)`.
pub const RESIDUAL_MEAN_REL: f64 = 0.15;
/// Residual dynamics with zero gradient: absolute bound on the mean norm.
pub const RESIDUAL_FLAT_ABS: f64 = 0.1;
/// Residual dynamics: fraction of trials moving toward the mode.
pub const RESIDUAL_POSITIVE_FRACTION: f64 = 0.9;

/// RoPE with correlated tokens: two-sample KS on `A_(1)` (pilot).
pub const ROPE_KS: f64 = 0.07;
/// RoPE algebra: score identity and rotation group law.
pub const ROPE_IDENTITY: f64 = 1e-12;

/// Special functions against quadrature oracles (relative).
pub const SPECIAL_REL: f64 = 1e-10;
