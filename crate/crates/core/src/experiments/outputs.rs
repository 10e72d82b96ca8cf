//! Experiments on the attention output and its displacement from `Vq`.

use nalgebra::{DMatrix, SymmetricEigen};

use super::harness::run_trials;
use super::output::{fmt, Check, CsvTable, Seeds, Verdict};
use super::{regime_warning, report, Experiment, ExperimentConfig, Report, Setup};
use crate::attention::{raw_displacement, ValueMatrix};
use crate::density::{grad_log_density, local_intensity, sample_context, DensityModel};
use crate::error::{Error, Result};
use crate::laws::{alpha, classify_regime, drift_and_covariance, weibull_cdf, Regime};
use crate::sphere::{dot, geodesic_chart, normalize, project_raw, tangent_frame, UnitVector};
use crate::stats::{ks_one_sample, MomentAccumulator};
use crate::thresholds as th;

/// Factor applied to `𝒴_n(q)` so that it has a nondegenerate limit in `regime`.
pub(crate) fn output_scale(regime: Regime, n: usize, beta: f64, alpha: f64, cq: f64) -> f64 {
    let nf = n as f64;
    match regime {
        Regime::Supercritical => (cq * nf).powf(alpha).sqrt(),
        Regime::Critical => beta.sqrt(),
        Regime::SubcriticalFluctuation => (nf * beta.powf(1.0 - 1.0 / alpha)).sqrt(),
        Regime::SubcriticalMixed | Regime::SubcriticalDrift => beta,
        Regime::FrozenBeta => 1.0,
    }
}

fn scale_name(regime: Regime) -> &'static str {
    match regime {
        Regime::Supercritical => "sqrt(a_n)",
        Regime::Critical => "sqrt(beta)",
        Regime::SubcriticalFluctuation => "sqrt(n beta^(1-1/alpha))",
        Regime::SubcriticalMixed | Regime::SubcriticalDrift => "beta",
        Regime::FrozenBeta => "1",
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn vector_columns(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("{prefix}_{j}")).collect()
}

fn table_from(name: &str, cols: Vec<String>) -> CsvTable {
    let c: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    CsvTable::new(name, &c)
}

pub(crate) fn supercritical(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = Setup::new(cfg)?;
    let n = cfg.single_size()?;
    let beta = cfg.single_beta(n)?;
    let class = setup.classify(cfg, n, beta)?;
    let mut warnings = Vec::new();
    if class.label != Regime::Supercritical {
        warnings.push(regime_warning("Supercritical", &class));
    }
    let d = setup.d;
    let v = cfg.value()?;
    let a_n = (setup.cq * n as f64).powf(setup.alpha);
    let scale = a_n.sqrt();
    let q = setup.q.as_slice();
    let rows = run_trials(cfg.seed, cfg.trials, |_, seed, rng| {
        let ctx = sample_context(&setup.model, n, rng)?;
        let (disp, t_min, ln_sum) = raw_displacement(&setup.q, &ctx, beta);
        let out: Vec<f64> = v.apply(&disp).into_iter().map(|x| scale * x).collect();
        Ok((seed, a_n * t_min, (-ln_sum).exp(), out))
    })?;

    let mut cols = vec!["trial".to_string(), "seed".into(), "an_T1".into(), "A1".into()];
    cols.extend(vector_columns("scaled_output", d));
    cols.push("tangential_norm".into());
    let mut table = table_from("supercritical", cols);
    table.notes.push(format!("a_n = (C(q) n)^alpha = {a_n}; scaled_output = sqrt(a_n) V Y_n(q)"));
    let mut tang_mean = vec![0.0; d];
    for (i, (seed, r, a1, out)) in rows.iter().enumerate() {
        let tang = project_raw(q, out);
        tang_mean.iter_mut().zip(&tang).for_each(|(m, t)| *m += t / rows.len() as f64);
        let mut row = vec![i.to_string(), seed.to_string(), fmt(*r), fmt(*a1)];
        row.extend(out.iter().map(|x| fmt(*x)));
        row.push(fmt(norm(&tang)));
        table.push(row);
    }
    let radii: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let ks = ks_one_sample(&radii, |r| weibull_cdf(r, setup.alpha))?;
    let mean_a1 = rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64;

    let mut verdict = Verdict::new("supercritical", Seeds::new(cfg.seed, cfg.trials, None));
    verdict.check(Check::at_most("ks_an_T1_weibull", ks.statistic, th::SUPERCRITICAL_KS));
    verdict.check(Check::at_least("mean_A1", mean_a1, th::SUPERCRITICAL_MEAN_A1));
    verdict.check(Check::at_most("tangential_mean_norm", norm(&tang_mean), th::SUPERCRITICAL_TANGENTIAL_MEAN));
    verdict.stat("ks_p_value", ks.p_value_asymptotic);
    verdict.stat("a_n", a_n);
    verdict.stat("regime", class.label);
    Ok(report(Experiment::Supercritical, cfg, vec![table], Some(verdict), warnings))
}

/// Midpoint latitude-longitude grid with `r` polar and `2r` azimuthal cells.
/// The grid is closed under `q ↦ -q`.
pub(crate) fn lat_long_grid(r: usize) -> Vec<UnitVector> {
    let mut out = Vec::with_capacity(2 * r * r);
    for i in 0..r {
        let theta = std::f64::consts::PI * (i as f64 + 0.5) / r as f64;
        for j in 0..2 * r {
            let phi = std::f64::consts::PI * j as f64 / r as f64;
            let v = vec![theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
            out.push(UnitVector::from_unit_coords(v));
        }
    }
    out
}

fn is_even(model: &DensityModel) -> bool {
    match model {
        DensityModel::Uniform { .. } | DensityModel::ExpBilinear { .. } => true,
        DensityModel::VonMisesFisher(v) => v.kappa() == 0.0,
        DensityModel::Custom(_) => false,
    }
}

pub(crate) fn field(cfg: &ExperimentConfig) -> Result<Report> {
    if cfg.d != 3 {
        return Err(Error::UnsupportedDimension { supported: 3, got: cfg.d });
    }
    let res = cfg
        .query_grid()?
        .ok_or_else(|| Error::Config("field experiment needs query = \"grid(r)\"".into()))?;
    let model = cfg.density_model()?;
    let n = cfg.single_size()?;
    let a = alpha(3);
    let exponents = cfg.exponents.clone().unwrap_or_else(|| vec![1.25, 1.0, 0.75, 0.5, 0.25]);
    let grid = lat_long_grid(res);
    let center = normalize(&[1.0, 1.0, 1.0])?;
    let nf = n as f64;
    let mut columns = Vec::new();
    for &p in &exponents {
        let beta = nf.powf(p);
        let c = classify_regime(n, beta, 3, 1.0, cfg.thresholds.lo, cfg.thresholds.hi)?;
        columns.push((p, beta, c.label));
    }
    struct Point {
        field: Vec<f64>,
        cq: f64,
        chart: (f64, f64),
    }
    let points: Vec<Point> = grid
        .iter()
        .map(|q| {
            let dc = drift_and_covariance(&model, q)?;
            let chart = geodesic_chart(&center, q).map(|c| (c[0], c[1])).unwrap_or((f64::NAN, f64::NAN));
            Ok(Point { field: project_raw(q.as_slice(), &dc.drift), cq: local_intensity(&model, q)?, chart })
        })
        .collect::<Result<_>>()?;

    // one context per trial, shared by every grid query and column
    let per_trial = run_trials(cfg.seed, cfg.trials, |_, _, rng| {
        let ctx = sample_context(&model, n, rng)?;
        let mut vals = Vec::with_capacity(grid.len() * columns.len());
        for (q, pt) in grid.iter().zip(&points) {
            for &(_, beta, label) in &columns {
                let (disp, _, _) = raw_displacement(q, &ctx, beta);
                let s = output_scale(label, n, beta, a, pt.cq);
                vals.push(project_raw(q.as_slice(), &disp).into_iter().map(|x| s * x).collect::<Vec<f64>>());
            }
        }
        Ok(vals)
    })?;
    let t = per_trial.len() as f64;

    let mut table = CsvTable::new(
        "field",
        &[
            "grid_index", "q1", "q2", "q3", "chart_u", "chart_v", "exponent", "beta", "regime", "scaling", "emp_t1",
            "emp_t2", "emp_t3", "field_t1", "field_t2", "field_t3",
        ],
    );
    table.notes.push(
        "columns scale P_q Y_n(q) by sqrt(a_n), sqrt(beta), sqrt(n beta^(1-1/alpha)), beta, beta for the \
         Supercritical, Critical, Fluctuation, Mixed and Drift regimes; emp_* are trial means"
            .into(),
    );
    table.notes.push("chart_u, chart_v: geodesic chart centered at (1,1,1)/sqrt(3)".into());
    let mut drift_dev = Vec::new();
    let mut drift_cols = 0;
    for (ci, &(p, beta, label)) in columns.iter().enumerate() {
        let mut dev = 0.0;
        for (gi, (q, pt)) in grid.iter().zip(&points).enumerate() {
            let k = gi * columns.len() + ci;
            let mut emp = [0.0; 3];
            for trial in &per_trial {
                for j in 0..3 {
                    emp[j] += trial[k][j] / t;
                }
            }
            dev += (emp[0] - pt.field[0]).abs();
            table.push(vec![
                gi.to_string(),
                fmt(q[0]),
                fmt(q[1]),
                fmt(q[2]),
                fmt(pt.chart.0),
                fmt(pt.chart.1),
                fmt(p),
                fmt(beta),
                label.to_string(),
                scale_name(label).into(),
                fmt(emp[0]),
                fmt(emp[1]),
                fmt(emp[2]),
                fmt(pt.field[0]),
                fmt(pt.field[1]),
                fmt(pt.field[2]),
            ]);
        }
        if label == Regime::SubcriticalDrift {
            drift_cols += 1;
            drift_dev.push((p, dev / grid.len() as f64));
        }
    }

    let mut verdict = Verdict::new("field", Seeds::new(cfg.seed, cfg.trials, None));
    let worst = drift_dev.iter().map(|x| x.1).fold(if drift_cols == 0 { f64::NAN } else { 0.0 }, f64::max);
    verdict.check(Check::at_most("drift_column_mean_abs_deviation", worst, th::FIELD_DRIFT_DEVIATION));
    if is_even(&model) {
        let mut sym = 0.0f64;
        for (q, pt) in grid.iter().zip(&points) {
            let dc = drift_and_covariance(&model, &q.neg())?;
            let f = project_raw(q.neg().as_slice(), &dc.drift);
            sym = sym.max(f.iter().zip(&pt.field).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max));
        }
        verdict.check(Check::at_most("antipodal_symmetry_error", sym, th::FIELD_SYMMETRY));
    }
    verdict.stat("drift_deviation_by_exponent", drift_dev);
    verdict.stat("grid_points", grid.len());
    let mut warnings = Vec::new();
    if drift_cols == 0 {
        warnings.push("no column classified SubcriticalDrift; drift check has nothing to compare".into());
    }
    Ok(report(Experiment::Field, cfg, vec![table], Some(verdict), warnings))
}

/// Orthonormal basis of the range of `V P_q`, as a `d × (d-1)` matrix.
fn output_tangent_basis(v: &ValueMatrix, q: &UnitVector) -> DMatrix<f64> {
    let frame = tangent_frame(q);
    let d = q.dim();
    let b = DMatrix::from_fn(d, d - 1, |i, j| frame.basis[j][i]);
    if v.is_identity() {
        b
    } else {
        (v.matrix() * b).qr().q()
    }
}

fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

pub(crate) fn suboutput(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = Setup::new(cfg)?;
    let n = cfg.single_size()?;
    let beta = cfg.single_beta(n)?;
    let class = setup.classify(cfg, n, beta)?;
    let mut warnings = Vec::new();
    if !class.label.is_subcritical() {
        warnings.push(regime_warning("subcritical", &class));
    }
    let d = setup.d;
    let v = cfg.value()?;
    let scale = output_scale(class.label, n, beta, setup.alpha, setup.cq);
    let rows = run_trials(cfg.seed, cfg.trials, |_, seed, rng| {
        let ctx = sample_context(&setup.model, n, rng)?;
        let (disp, _, _) = raw_displacement(&setup.q, &ctx, beta);
        Ok((seed, v.apply(&disp).into_iter().map(|x| scale * x).collect::<Vec<f64>>()))
    })?;
    let mut acc = MomentAccumulator::new(d);
    let mut cols = vec!["trial".to_string(), "seed".into()];
    cols.extend(vector_columns("scaled_output", d));
    let mut table = table_from("suboutput", cols);
    table.notes.push(format!("regime {}; scaled_output = {} * V Y_n(q)", class.label, scale_name(class.label)));
    for (i, (seed, out)) in rows.iter().enumerate() {
        acc.push(out)?;
        let mut row = vec![i.to_string(), seed.to_string()];
        row.extend(out.iter().map(|x| fmt(*x)));
        table.push(row);
    }

    let dc = drift_and_covariance(&setup.model, &setup.q)?;
    let mean_pred = v.apply(&dc.drift);
    let vm = v.matrix();
    let tau_factor = if class.label == Regime::SubcriticalMixed { class.tau_n.powf(1.0 / setup.alpha) } else { 1.0 };
    let cov_pred = vm * &dc.covariance * vm.transpose() * tau_factor;
    let cov = acc.covariance()?;
    let basis = output_tangent_basis(&v, &setup.q);
    let emp_eig = sorted_eigenvalues(basis.transpose() * &cov * &basis);
    let pred_eig = sorted_eigenvalues(basis.transpose() * &cov_pred * &basis);
    let eig_err = emp_eig
        .iter()
        .zip(&pred_eig)
        .map(|(e, p)| (e - p).abs() / p.abs())
        .fold(0.0, f64::max);
    let mean_err = norm(&sub(acc.mean(), &mean_pred)) / norm(&mean_pred);

    let mut summary = CsvTable::new("suboutput_summary", &["quantity", "index", "empirical", "predicted"]);
    for j in 0..d {
        summary.push(vec!["mean".into(), j.to_string(), fmt(acc.mean()[j]), fmt(mean_pred[j])]);
    }
    for (j, (e, p)) in emp_eig.iter().zip(&pred_eig).enumerate() {
        summary.push(vec!["tangential_eigenvalue".into(), j.to_string(), fmt(*e), fmt(*p)]);
    }

    let mut verdict = Verdict::new("suboutput", Seeds::new(cfg.seed, cfg.trials, None));
    match class.label {
        Regime::SubcriticalDrift => {
            verdict.check(Check::at_most("mean_relative_error", mean_err, th::SUBOUTPUT_MEAN_REL));
        }
        Regime::SubcriticalMixed => {
            verdict.check(Check::at_most("mean_relative_error", mean_err, th::SUBOUTPUT_MEAN_REL));
            verdict.check(Check::at_most("covariance_eigenvalue_relative_error", eig_err, th::SUBOUTPUT_MIXED_COV_REL));
        }
        Regime::SubcriticalFluctuation => {
            verdict.check(Check::at_most(
                "covariance_eigenvalue_relative_error",
                eig_err,
                th::SUBOUTPUT_FLUCTUATION_COV_REL,
            ));
        }
        _ => {}
    }
    verdict.stat("mean_relative_error", mean_err);
    verdict.stat("covariance_eigenvalue_relative_error", eig_err);
    verdict.stat("empirical_eigenvalues", &emp_eig);
    verdict.stat("predicted_eigenvalues", &pred_eig);
    verdict.stat("tau_n", class.tau_n);
    verdict.stat("regime", class.label);
    Ok(report(Experiment::Suboutput, cfg, vec![table, summary], Some(verdict), warnings))
}

/// Query placed `deg` degrees from `mode` along the first tangent direction.
pub(crate) fn offset_query(mode: &UnitVector, deg: f64) -> UnitVector {
    let t = deg.to_radians();
    let e = &tangent_frame(mode).basis[0];
    let v: Vec<f64> = mode.as_slice().iter().zip(e).map(|(m, e)| t.cos() * m + t.sin() * e).collect();
    UnitVector::from_unit_coords(v)
}

fn residual_step(q: &UnitVector, disp: &[f64], gamma: f64) -> Result<UnitVector> {
    let v: Vec<f64> = q.as_slice().iter().zip(disp).map(|(a, b)| a + gamma * b).collect();
    normalize(&v)
}

pub(crate) fn residual(cfg: &ExperimentConfig) -> Result<Report> {
    let v = cfg.value()?;
    if !v.is_identity() {
        return Err(Error::Config("residual experiment needs value_matrix = \"identity\"".into()));
    }
    let model = cfg.density_model()?;
    let mode = match &model {
        DensityModel::VonMisesFisher(m) if m.kappa() > 0.0 => Some(m.mean().clone()),
        _ => None,
    };
    let q = match (cfg.mode_offset_deg, &mode) {
        (Some(deg), Some(m)) => offset_query(m, deg),
        (Some(_), None) => return Err(Error::Config("mode_offset_deg needs a vmf density with kappa > 0".into())),
        (None, _) => cfg.query_vector()?,
    };
    let setup = Setup::with_query(cfg, model, q)?;
    let n = cfg.single_size()?;
    let beta = cfg.single_beta(n)?;
    let class = setup.classify(cfg, n, beta)?;
    let mut warnings = Vec::new();
    if class.label != Regime::SubcriticalDrift {
        warnings.push(regime_warning("SubcriticalDrift", &class));
    }
    let gamma = cfg.residual_gamma.unwrap_or(1.0);
    let d = setup.d;
    let target: Vec<f64> = grad_log_density(&setup.model, &setup.q)?.into_iter().map(|g| gamma * g).collect();
    let q0 = setup.q.as_slice();

    let rows = run_trials(cfg.seed, cfg.trials, |_, seed, rng| {
        let ctx = sample_context(&setup.model, n, rng)?;
        let (disp, _, _) = raw_displacement(&setup.q, &ctx, beta);
        let q1 = residual_step(&setup.q, &disp, gamma)?;
        let scaled: Vec<f64> = q1.as_slice().iter().zip(q0).map(|(a, b)| beta * (a - b)).collect();
        let increment = match &mode {
            Some(m) => {
                let (dm, _, _) = raw_displacement(m, &ctx, beta);
                let m1 = residual_step(m, &dm, gamma)?;
                q1.dot(m1.as_slice()) - setup.q.dot(m.as_slice())
            }
            None => f64::NAN,
        };
        Ok((seed, scaled, increment))
    })?;

    let mut cols = vec!["trial".to_string(), "seed".into()];
    cols.extend(vector_columns("scaled_step", d));
    cols.extend(vector_columns("target", d));
    cols.push("increment".into());
    let mut table = table_from("residual", cols);
    table.notes.push(format!("scaled_step = beta (q' - q), q' = normalize(q + gamma Y_n(q)), gamma = {gamma}"));
    let mut mean = vec![0.0; d];
    for (i, (seed, s, inc)) in rows.iter().enumerate() {
        mean.iter_mut().zip(s).for_each(|(m, x)| *m += x / rows.len() as f64);
        let mut row = vec![i.to_string(), seed.to_string()];
        row.extend(s.iter().map(|x| fmt(*x)));
        row.extend(target.iter().map(|x| fmt(*x)));
        row.push(fmt(*inc));
        table.push(row);
    }

    let mut verdict = Verdict::new("residual", Seeds::new(cfg.seed, cfg.trials, None));
    let target_norm = norm(&target);
    let err = norm(&sub(&mean, &target));
    if target_norm < 1e-12 {
        verdict.check(Check::at_most("mean_step_norm", err, th::RESIDUAL_FLAT_ABS));
    } else {
        verdict.check(Check::at_most("mean_step_relative_error", err / target_norm, th::RESIDUAL_MEAN_REL));
    }
    if mode.is_some() {
        let pos = rows.iter().filter(|r| r.2 > 0.0).count() as f64 / rows.len() as f64;
        verdict.check(Check::at_least("positive_increment_fraction", pos, th::RESIDUAL_POSITIVE_FRACTION));
    }
    verdict.stat("mean_step", &mean);
    verdict.stat("target", &target);
    verdict.stat("query", setup.q.as_slice());
    verdict.stat("gamma", gamma);
    verdict.stat("regime", class.label);
    Ok(report(Experiment::Residual, cfg, vec![table], Some(verdict), warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_closed_under_antipode() {
        let g = lat_long_grid(6);
        assert_eq!(g.len(), 72);
        for q in &g {
            let a = q.neg();
            assert!(g.iter().any(|p| sub(p.as_slice(), a.as_slice()).iter().all(|x| x.abs() < 1e-12)));
        }
    }

    #[test]
    fn uniform_field_vanishes() {
        let m = DensityModel::uniform(3).unwrap();
        for q in lat_long_grid(4) {
            let dc = drift_and_covariance(&m, &q).unwrap();
            assert!(project_raw(q.as_slice(), &dc.drift).iter().all(|x| x.abs() < 1e-15));
        }
    }

    #[test]
    fn offset_query_angle() {
        let m = UnitVector::basis(3, 2).unwrap();
        let q = offset_query(&m, 20.0);
        assert!((q.dot(m.as_slice()) - 20f64.to_radians().cos()).abs() < 1e-14);
    }

    #[test]
    fn scales_by_regime() {
        assert_eq!(output_scale(Regime::SubcriticalDrift, 100, 3.0, 1.0, 0.5), 3.0);
        assert_eq!(output_scale(Regime::Critical, 100, 4.0, 1.0, 0.5), 2.0);
        assert!((output_scale(Regime::Supercritical, 100, 1.0, 1.0, 0.5) - 50f64.sqrt()).abs() < 1e-12);
        assert!((output_scale(Regime::SubcriticalFluctuation, 100, 1e4, 1.0, 0.5) - 10.0).abs() < 1e-12);
    }
}
