//! Named experiments, their configuration, seeding and output.

pub mod config;
pub mod harness;
pub mod moments;
pub mod output;

mod outputs;
mod predict;
mod weights;

use std::fmt;
use std::str::FromStr;

use crate::density::{local_intensity, DensityModel};
use crate::error::{Error, Result};
use crate::laws::{alpha, classify_regime, Regime, RegimeClassification};
use crate::sphere::UnitVector;

pub use config::ExperimentConfig;
pub use output::{Check, CsvTable, Report, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Heatmap,
    Profile,
    Critical,
    Supercritical,
    Field,
    Suboutput,
    Residual,
    Rope,
    Predict,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Heatmap,
        Experiment::Profile,
        Experiment::Critical,
        Experiment::Supercritical,
        Experiment::Field,
        Experiment::Suboutput,
        Experiment::Residual,
        Experiment::Rope,
        Experiment::Predict,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Heatmap => "heatmap",
            Experiment::Profile => "profile",
            Experiment::Critical => "critical",
            Experiment::Supercritical => "supercritical",
            Experiment::Field => "field",
            Experiment::Suboutput => "suboutput",
            Experiment::Residual => "residual",
            Experiment::Rope => "rope",
            Experiment::Predict => "predict",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Runs `experiment` on a pool sized by `cfg.workers`.
pub fn run(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    if let Some(name) = &cfg.experiment {
        if name != experiment.name() {
            return Err(Error::Config(format!(
                "config is for experiment '{name}' but '{}' was requested",
                experiment.name()
            )));
        }
    }
    harness::with_workers(cfg.workers, || match experiment {
        Experiment::Heatmap => weights::heatmap(cfg),
        Experiment::Profile => weights::profile(cfg),
        Experiment::Critical => weights::critical(cfg),
        Experiment::Rope => weights::rope(cfg),
        Experiment::Supercritical => outputs::supercritical(cfg),
        Experiment::Field => outputs::field(cfg),
        Experiment::Suboutput => outputs::suboutput(cfg),
        Experiment::Residual => outputs::residual(cfg),
        Experiment::Predict => predict::predict(cfg),
    })?
}

/// Model, query and local constants shared by single-query experiments.
pub(crate) struct Setup {
    pub d: usize,
    pub alpha: f64,
    pub model: DensityModel,
    pub q: UnitVector,
    pub cq: f64,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let model = cfg.density_model()?;
        let q = cfg.query_vector()?;
        Self::with_query(cfg, model, q)
    }

    pub fn with_query(cfg: &ExperimentConfig, model: DensityModel, q: UnitVector) -> Result<Self> {
        let cq = local_intensity(&model, &q)?;
        Ok(Setup { d: cfg.d, alpha: alpha(cfg.d), model, q, cq })
    }

    pub fn classify(&self, cfg: &ExperimentConfig, n: usize, beta: f64) -> Result<RegimeClassification> {
        let mut c = classify_regime(n, beta, self.d, self.cq, cfg.thresholds.lo, cfg.thresholds.hi)?;
        if cfg.schedule_exponent() == Some(0.0) {
            c.label = Regime::FrozenBeta;
        }
        Ok(c)
    }
}

pub(crate) fn config_json(cfg: &ExperimentConfig) -> String {
    serde_json::to_string(cfg).unwrap_or_default()
}

pub(crate) fn regime_warning(expected: &str, c: &RegimeClassification) -> String {
    format!(
        "regime_mismatch expected={expected} got={} gamma_n={} tau_n={} m_n={}",
        c.label, c.gamma_n, c.tau_n, c.window_m_n
    )
}

pub(crate) fn report(experiment: Experiment, cfg: &ExperimentConfig, tables: Vec<CsvTable>, verdict: Option<Verdict>, warnings: Vec<String>) -> Report {
    let verdict = verdict.map(|mut v| {
        v.warnings = warnings.clone();
        v
    });
    Report {
        experiment: experiment.name().into(),
        config_json: config_json(cfg),
        tables,
        verdict,
        json: None,
        warnings,
    }
}
