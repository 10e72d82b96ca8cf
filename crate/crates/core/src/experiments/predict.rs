use serde::Serialize;

use super::output::{fmt, CsvTable};
use super::{report, Experiment, ExperimentConfig, Report, Setup};
use crate::error::Result;
use crate::laws::Regime;

#[derive(Debug, Serialize)]
struct Row {
    n: usize,
    beta: f64,
    alpha: f64,
    gamma_n: f64,
    tau_n: f64,
    window_m_n: f64,
    regime: Regime,
    behavior: &'static str,
}

pub(crate) fn predict(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = Setup::new(cfg)?;
    let mut rows = Vec::new();
    let mut table = CsvTable::new(
        "predict",
        &["n", "beta", "alpha", "gamma_n", "tau_n", "window_m_n", "regime", "behavior"],
    );
    for n in cfg.sizes()? {
        for beta in cfg.betas_for(n)? {
            let c = setup.classify(cfg, n, beta)?;
            let row = Row {
                n,
                beta,
                alpha: c.alpha,
                gamma_n: c.gamma_n,
                tau_n: c.tau_n,
                window_m_n: c.window_m_n,
                regime: c.label,
                behavior: c.label.weight_behavior(),
            };
            table.push(vec![
                n.to_string(),
                fmt(beta),
                fmt(c.alpha),
                fmt(c.gamma_n),
                fmt(c.tau_n),
                fmt(c.window_m_n),
                c.label.to_string(),
                row.behavior.into(),
            ]);
            rows.push(row);
        }
    }
    let mut r = report(Experiment::Predict, cfg, vec![table], None, Vec::new());
    r.json = Some(serde_json::to_value(&rows).map_err(|e| crate::error::Error::Io(e.to_string()))?);
    Ok(r)
}
