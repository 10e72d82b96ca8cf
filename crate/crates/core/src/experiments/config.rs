//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attention::ValueMatrix;
use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::laws::{DEFAULT_HI, DEFAULT_LO};
use crate::rope::{golden_angle, CorrelatedTokenModel, RopeConfig};
use crate::sphere::{normalize, UnitVector};

/// Samples used to normalize a custom density when none is given.
pub const DEFAULT_NORMALIZATION_SAMPLES: usize = 1_000_000;

/// `n`: a single value, an explicit list, or a log10-spaced grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SizeSpec {
    Single(usize),
    List(Vec<usize>),
    LogGrid { log10_min: f64, log10_max: f64, points: usize },
}

/// `β`: a schedule `γ n^p`, an explicit list, or a log10-spaced grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Schedule { gamma: f64, exponent: f64 },
    List(Vec<f64>),
    LogGrid { log10_min: f64, log10_max: f64, points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Uniform,
    Vmf { mean: Vec<f64>, kappa: f64 },
    ExpBilinear,
    Custom {
        log_density: String,
        envelope: f64,
        #[serde(default)]
        normalization_samples: Option<usize>,
    },
}

/// A vector, `"e<k>"`, or `"grid(<resolution>)"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QuerySpec {
    Vector(Vec<f64>),
    Named(String),
}

/// `"identity"`, `"zero"`, or explicit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueSpec {
    Named(String),
    Rows(Vec<Vec<f64>>),
}

/// Explicit frequencies or a preset `"geometric(base, L)"` / `"golden(L)"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RopeSpec {
    Frequencies { frequencies: Vec<f64> },
    Preset { preset: String },
}

/// Moving-average weights, or `m` for `m + 1` equal weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorrelationSpec {
    Weights { weights: Vec<f64> },
    Range { m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { lo: DEFAULT_LO, hi: DEFAULT_HI }
    }
}

fn default_trials() -> usize {
    100
}

fn default_density() -> DensitySpec {
    DensitySpec::Uniform
}

fn default_query() -> QuerySpec {
    QuerySpec::Named("e1".into())
}

fn default_value() -> ValueSpec {
    ValueSpec::Named("identity".into())
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: Option<String>,
    pub d: usize,
    pub n: SizeSpec,
    #[serde(default)]
    pub beta: Option<BetaSpec>,
    #[serde(default = "default_density")]
    pub density: DensitySpec,
    #[serde(default = "default_query")]
    pub query: QuerySpec,
    #[serde(default = "default_value")]
    pub value_matrix: ValueSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub rope: Option<RopeSpec>,
    #[serde(default)]
    pub correlation: Option<CorrelationSpec>,

    /// Ranks compared in the critical and RoPE experiments.
    #[serde(default)]
    pub ranks: Option<usize>,
    /// Draws from the limit sampler (defaults to `trials`).
    #[serde(default)]
    pub limit_samples: Option<usize>,
    #[serde(default)]
    pub tail_epsilon: Option<f64>,
    #[serde(default)]
    pub k_min: Option<usize>,
    /// Profile grid `x = 0, x_step, …, x_max`.
    #[serde(default)]
    pub x_max: Option<f64>,
    #[serde(default)]
    pub x_step: Option<f64>,
    /// Schedule exponents for the output field columns.
    #[serde(default)]
    pub exponents: Option<Vec<f64>>,
    /// Step size γ in the residual update.
    #[serde(default)]
    pub residual_gamma: Option<f64>,
    /// Places the query this many degrees from the density mode.
    #[serde(default)]
    pub mode_offset_deg: Option<f64>,
    /// Orbit length used for the RoPE phase average.
    #[serde(default)]
    pub orbit_length: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&src)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Config(format!("d must be at least 2, got {}", self.d)));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.sizes()?.is_empty() {
            return Err(Error::Config("n grid is empty".into()));
        }
        if !(self.thresholds.lo > 0.0 && self.thresholds.lo < self.thresholds.hi) {
            return Err(Error::Config("thresholds need 0 < lo < hi".into()));
        }
        Ok(())
    }

    /// Context sizes in grid order.
    pub fn sizes(&self) -> Result<Vec<usize>> {
        let v = match &self.n {
            SizeSpec::Single(n) => vec![*n],
            SizeSpec::List(v) => v.clone(),
            SizeSpec::LogGrid { log10_min, log10_max, points } => {
                log_grid(*log10_min, *log10_max, *points)?.into_iter().map(|x| x.round() as usize).collect()
            }
        };
        if v.iter().any(|&n| n == 0) {
            return Err(Error::Config("n must be at least 1".into()));
        }
        Ok(v)
    }

    /// The single context size of experiments that take one `n`.
    pub fn single_size(&self) -> Result<usize> {
        let v = self.sizes()?;
        match v.as_slice() {
            [n] => Ok(*n),
            _ => Err(Error::Config(format!("this experiment takes a single n, got {} values", v.len()))),
        }
    }

    pub fn beta_spec(&self) -> Result<&BetaSpec> {
        self.beta.as_ref().ok_or_else(|| Error::Config("missing beta".into()))
    }

    /// β values for context size `n`.
    pub fn betas_for(&self, n: usize) -> Result<Vec<f64>> {
        let v = match self.beta_spec()? {
            BetaSpec::Schedule { gamma, exponent } => vec![gamma * (n as f64).powf(*exponent)],
            BetaSpec::List(v) => v.clone(),
            BetaSpec::LogGrid { log10_min, log10_max, points } => log_grid(*log10_min, *log10_max, *points)?,
        };
        if v.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return Err(Error::Config("beta values must be finite and >= 0".into()));
        }
        Ok(v)
    }

    /// Single β for experiments that take one schedule point.
    pub fn single_beta(&self, n: usize) -> Result<f64> {
        let v = self.betas_for(n)?;
        match v.as_slice() {
            [b] => Ok(*b),
            _ => Err(Error::Config(format!("this experiment takes a single beta, got {} values", v.len()))),
        }
    }

    /// Schedule exponent, when β is given as a schedule.
    pub fn schedule_exponent(&self) -> Option<f64> {
        match &self.beta {
            Some(BetaSpec::Schedule { exponent, .. }) => Some(*exponent),
            _ => None,
        }
    }

    pub fn density_model(&self) -> Result<DensityModel> {
        build_density(&self.density, self.d, self.seed)
    }

    pub fn query_vector(&self) -> Result<UnitVector> {
        match &self.query {
            QuerySpec::Vector(v) => {
                if v.len() != self.d {
                    return Err(Error::Config(format!("query has length {}, expected {}", v.len(), self.d)));
                }
                normalize(v).map_err(|e| Error::Config(format!("query: {e}")))
            }
            QuerySpec::Named(name) => {
                let idx = name
                    .strip_prefix('e')
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|&i| i >= 1 && i <= self.d)
                    .ok_or_else(|| Error::Config(format!("query '{name}' is not a basis vector e1..e{}", self.d)))?;
                UnitVector::basis(self.d, idx - 1)
            }
        }
    }

    /// Resolution of a `"grid(r)"` query, if any.
    pub fn query_grid(&self) -> Result<Option<usize>> {
        match &self.query {
            QuerySpec::Named(s) if s.starts_with("grid(") => {
                let inner = s.trim_start_matches("grid(").trim_end_matches(')');
                let r = inner
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad query grid '{s}'")))?;
                if r < 2 {
                    return Err(Error::Config("grid resolution must be at least 2".into()));
                }
                Ok(Some(r))
            }
            _ => Ok(None),
        }
    }

    pub fn value(&self) -> Result<ValueMatrix> {
        match &self.value_matrix {
            ValueSpec::Named(s) if s == "identity" => Ok(ValueMatrix::identity(self.d)),
            ValueSpec::Named(s) if s == "zero" => Ok(ValueMatrix::zeros(self.d)),
            ValueSpec::Named(s) => Err(Error::Config(format!("unknown value matrix '{s}'"))),
            ValueSpec::Rows(rows) => {
                let v = ValueMatrix::from_rows(rows).map_err(|e| Error::Config(format!("value_matrix: {e}")))?;
                if v.dim() != self.d {
                    return Err(Error::Config(format!("value_matrix is {}x{}, expected d = {}", v.dim(), v.dim(), self.d)));
                }
                Ok(v)
            }
        }
    }

    pub fn rope_config(&self) -> Result<Option<RopeConfig>> {
        let Some(spec) = &self.rope else { return Ok(None) };
        let cfg = match spec {
            RopeSpec::Frequencies { frequencies } => RopeConfig::new(frequencies.clone()),
            RopeSpec::Preset { preset } => parse_preset(preset),
        }
        .map_err(|e| Error::Config(format!("rope: {e}")))?;
        if cfg.rotated_dim() > self.d {
            return Err(Error::Config(format!("rope rotates {} coordinates but d = {}", cfg.rotated_dim(), self.d)));
        }
        Ok(Some(cfg))
    }

    pub fn correlation_model(&self) -> Result<Option<CorrelatedTokenModel>> {
        let Some(spec) = &self.correlation else { return Ok(None) };
        let base = self.density_model()?;
        let m = match spec {
            CorrelationSpec::Weights { weights } => CorrelatedTokenModel::new(weights.clone(), base),
            CorrelationSpec::Range { m } => CorrelatedTokenModel::uniform_window(*m, base),
        };
        m.map(Some).map_err(|e| Error::Config(format!("correlation: {e}")))
    }
}

fn parse_preset(preset: &str) -> Result<RopeConfig> {
    let s = preset.trim();
    let args = |prefix: &str| -> Option<Vec<f64>> {
        let inner = s.strip_prefix(prefix)?.strip_suffix(')')?;
        inner.split(',').map(|a| a.trim().parse::<f64>().ok()).collect()
    };
    if let Some(a) = args("geometric(") {
        if a.len() == 2 && a[1] >= 1.0 && a[1].fract() == 0.0 {
            return RopeConfig::geometric(a[0], a[1] as usize);
        }
    }
    if let Some(a) = args("golden(") {
        if a.len() == 1 && a[0] >= 1.0 && a[0].fract() == 0.0 {
            // distinct irrational multiples of the golden angle
            let l = a[0] as usize;
            return RopeConfig::new((1..=l).map(|k| golden_angle() / (k as f64).sqrt()).collect());
        }
    }
    Err(Error::Config(format!("unknown rope preset '{preset}'")))
}

/// `points` values with log10 evenly spaced from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Config("log grid needs finite bounds and at least one point".into()));
    }
    if points == 1 {
        return Ok(vec![10f64.powf(lo)]);
    }
    Ok((0..points)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (points - 1) as f64))
        .collect())
}

pub fn build_density(spec: &DensitySpec, d: usize, seed: u64) -> Result<DensityModel> {
    let m = match spec {
        DensitySpec::Uniform => DensityModel::uniform(d),
        DensitySpec::Vmf { mean, kappa } => {
            if mean.len() != d {
                return Err(Error::Config(format!("vmf mean has length {}, expected {d}", mean.len())));
            }
            normalize(mean).and_then(|mu| DensityModel::von_mises_fisher(mu, *kappa))
        }
        DensitySpec::ExpBilinear => {
            if d != 3 {
                return Err(Error::Config(format!("exp_bilinear is defined for d = 3, got {d}")));
            }
            Ok(DensityModel::exp_bilinear())
        }
        DensitySpec::Custom { log_density, envelope, normalization_samples } => {
            DensityModel::custom(log_density, d, *envelope).and_then(|m| {
                m.with_estimated_normalization(normalization_samples.unwrap_or(DEFAULT_NORMALIZATION_SAMPLES), seed)
            })
        }
    };
    m.map_err(|e| Error::Config(format!("density: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            experiment = "rope"
            d = 3
            n = 10000
            beta = { gamma = 1.0, exponent = 1.0 }
            density = { kind = "vmf", mean = [0, 0, 1], kappa = 2.0 }
            query = [1, 0, 0]
            trials = 10
            seed = 7
            rope = { preset = "geometric(10000, 1)" }
            correlation = { m = 2 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.single_size().unwrap(), 10_000);
        assert!((cfg.single_beta(10_000).unwrap() - 1e4).abs() < 1e-9);
        assert_eq!(cfg.rope_config().unwrap().unwrap().frequencies(), &[1.0]);
        assert_eq!(cfg.correlation_model().unwrap().unwrap().range(), 2);
        assert!(cfg.value().unwrap().is_identity());
    }

    #[test]
    fn grids_and_queries() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            d = 3
            n = { log10_min = 2.0, log10_max = 4.0, points = 3 }
            beta = { log10_min = 0.0, log10_max = 2.0, points = 3 }
            query = "grid(8)"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.sizes().unwrap(), vec![100, 1000, 10000]);
        assert_eq!(cfg.betas_for(5).unwrap().len(), 3);
        assert_eq!(cfg.query_grid().unwrap(), Some(8));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml_str("d = 1\nn = 10").is_err());
        assert!(ExperimentConfig::from_toml_str("d = 3\nn = 10\ntrials = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("d = 3\nn = 10\nbogus = 1").is_err());
        let cfg = ExperimentConfig::from_toml_str("d = 3\nn = 10\nquery = \"e4\"").unwrap();
        assert!(cfg.query_vector().is_err());
        let cfg = ExperimentConfig::from_toml_str("d = 3\nn = 10\nrope = { preset = \"spiral(2)\" }").unwrap();
        assert!(cfg.rope_config().is_err());
    }
}
