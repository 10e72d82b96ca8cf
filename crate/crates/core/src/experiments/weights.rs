//! Experiments on the ordered attention weights.

use rand::Rng;

use super::harness::{run_trials, split_seed, AUX_STREAM, LIMIT_STREAM};
use super::output::{fmt, Check, CsvTable, Seeds, Verdict};
use super::{regime_warning, report, Experiment, ExperimentConfig, Report, Setup};
use crate::attention::{attention_weights, raw_displacement, top_ordered_weights};
use crate::density::sample_context;
use crate::error::{Error, Result};
use crate::laws::{
    alpha, subcritical_absolute_weight, subcritical_cumulative_mass, subcritical_profile, Regime,
};
use crate::rope::{
    orbit_phase_average, orbit_points, query_orbit, rope_attention_weights_with_orbit, rope_rotate,
    sample_correlated_context, CorrelatedTokenModel,
};
use crate::samplers::{
    limiting_ordered_weights, sample_critical_output, sample_marked_ppp, sample_ppp_atoms, PppParams,
    DEFAULT_K_MIN, DEFAULT_TAIL_EPSILON,
};
use crate::sphere::{d2q_raw, dot, sample_uniform};
use crate::stats::{ks_two_sample, mean_and_std, profile_rank, quantile_sorted, summarize_ordered_profile, KsResult};
use crate::thresholds as th;

pub(crate) fn heatmap(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = Setup::new(cfg)?;
    let sizes = cfg.sizes()?;
    let a = setup.alpha;
    let mut table = CsvTable::new("heatmap", &["n", "beta", "mean_A1", "std_A1", "trials"]);
    let mut curve = CsvTable::new("heatmap_critical_curve", &["n", "beta"]);
    curve.notes.push("reference curve beta = 2 n^alpha".into());
    let (mut high_min, mut low_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut high_cells, mut low_cells) = (0usize, 0usize);
    for (ni, &n) in sizes.iter().enumerate() {
        let betas = cfg.betas_for(n)?;
        let q = setup.q.as_slice();
        // one context per trial, reused across the β column
        let per_trial = run_trials(split_seed(cfg.seed, ni as u64), cfg.trials, |_, _, rng| {
            let ctx = sample_context(&setup.model, n, rng)?;
            let t: Vec<f64> = ctx.tokens().map(|x| d2q_raw(q, x)).collect();
            let t_min = t.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(betas
                .iter()
                .map(|&b| 1.0 / t.iter().map(|&ti| (-b * (ti - t_min)).exp()).sum::<f64>())
                .collect::<Vec<f64>>())
        })?;
        let scale = (n as f64).powf(a);
        for (bi, &beta) in betas.iter().enumerate() {
            let col: Vec<f64> = per_trial.iter().map(|r| r[bi]).collect();
            let (mean, std) = mean_and_std(&col);
            table.push(vec![n.to_string(), fmt(beta), fmt(mean), fmt(std), cfg.trials.to_string()]);
            if beta >= th::HEATMAP_HIGH_FACTOR * scale {
                high_cells += 1;
                high_min = high_min.min(mean);
            }
            if beta <= th::HEATMAP_LOW_FACTOR * scale && n as f64 >= th::HEATMAP_LOW_MIN_N {
                low_cells += 1;
                low_max = low_max.max(mean);
            }
        }
        curve.push(vec![n.to_string(), fmt(2.0 * scale)]);
    }
    let mut v = Verdict::new("heatmap", Seeds::new(cfg.seed, cfg.trials, None));
    let mut warnings = Vec::new();
    if high_cells > 0 {
        v.check(Check::at_least("high_beta_min_mean_A1", high_min, th::HEATMAP_HIGH_MEAN));
    } else {
        warnings.push("no cell with beta >= 25 n^alpha; high-beta check skipped".to_string());
    }
    if low_cells > 0 {
        v.check(Check::at_most("low_beta_max_mean_A1", low_max, th::HEATMAP_LOW_MEAN));
    } else {
        warnings.push("no cell with beta <= 0.04 n^alpha and n >= 1000; low-beta check skipped".to_string());
    }
    v.stat("high_cells", high_cells);
    v.stat("low_cells", low_cells);
    v.stat("alpha", a);
    Ok(report(Experiment::Heatmap, cfg, vec![table, curve], Some(v), warnings))
}

pub(crate) fn profile(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = Setup::new(cfg)?;
    let n = cfg.single_size()?;
    let beta = cfg.single_beta(n)?;
    if !(beta > 0.0) {
        return Err(Error::Config("profile needs beta > 0".into()));
    }
    let class = setup.classify(cfg, n, beta)?;
    let mut warnings = Vec::new();
    if !class.label.is_subcritical() {
        warnings.push(regime_warning("subcritical", &class));
    }
    let a = setup.alpha;
    let m_n = class.window_m_n;
    let x_max = cfg.x_max.unwrap_or(4.0);
    let x_step = cfg.x_step.unwrap_or(0.25);
    if !(x_step > 0.0) || !(x_max >= 0.0) {
        return Err(Error::Config("profile grid needs x_step > 0 and x_max >= 0".into()));
    }
    let points = (x_max / x_step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=points).map(|i| i as f64 * x_step).collect();
    let ranks: Vec<usize> = grid.iter().map(|&x| profile_rank(x, m_n, n)).collect::<Result<_>>()?;

    let snaps = run_trials(cfg.seed, cfg.trials, |_, _, rng| {
        let ctx = sample_context(&setup.model, n, rng)?;
        attention_weights(&setup.q, &ctx, beta)
    })?;
    let ratio_rows = summarize_ordered_profile(&snaps, m_n, &grid)?;
    let ordered: Vec<Vec<f64>> = snaps.iter().map(|s| s.ordered_weights()).collect();
    drop(snaps);
    let median_of = |f: &dyn Fn(&[f64], usize) -> f64, k: usize| {
        let mut v: Vec<f64> = ordered.iter().map(|w| f(w, k)).collect();
        v.sort_by(f64::total_cmp);
        quantile_sorted(&v, 0.5)
    };
    let mut table = CsvTable::new(
        "profile",
        &["x", "k", "median_ratio", "q25", "q75", "theory", "abs_scaled", "abs_theory", "cumulative", "cumulative_theory"],
    );
    table.notes.push(format!("k = round(x * m_n) clamped to [1, n]; m_n = {m_n}"));
    let (mut ratio_err, mut abs_err, mut cum_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut cum_err_last = 0.0;
    for (row, &k) in ratio_rows.iter().zip(&ranks) {
        let theory = subcritical_profile(row.x, a);
        let abs_scaled = median_of(&|w, k| m_n * w[k - 1], k);
        let abs_theory = subcritical_absolute_weight(row.x, a)?;
        let cumulative = median_of(&|w, k| w[..k].iter().sum(), k);
        let cumulative_theory = subcritical_cumulative_mass(row.x, a)?;
        ratio_err = ratio_err.max((row.median - theory).abs());
        abs_err = abs_err.max((abs_scaled - abs_theory).abs());
        cum_err = cum_err.max((cumulative - cumulative_theory).abs());
        cum_err_last = (cumulative - cumulative_theory).abs();
        table.push(vec![
            fmt(row.x),
            k.to_string(),
            fmt(row.median),
            fmt(row.q25),
            fmt(row.q75),
            fmt(theory),
            fmt(abs_scaled),
            fmt(abs_theory),
            fmt(cumulative),
            fmt(cumulative_theory),
        ]);
    }
    let mut v = Verdict::new("profile", Seeds::new(cfg.seed, cfg.trials, None));
    v.check(Check::at_most("ratio_sup_error", ratio_err, th::PROFILE_RATIO_TOL));
    v.check(Check::at_most("abs_scaled_sup_error", abs_err, th::PROFILE_ABS_TOL));
    v.check(Check::at_most("cumulative_sup_error", cum_err, th::PROFILE_CUMULATIVE_TOL));
    v.stat("cumulative_error_at_x_max", cum_err_last);
    v.stat("m_n", m_n);
    v.stat("beta", beta);
    v.stat("regime", class.label);
    Ok(report(Experiment::Profile, cfg, vec![table], Some(v), warnings))
}

struct LimitDraw {
    weights: Vec<f64>,
    output_norm: f64,
}

fn limit_draws(
    cfg: &ExperimentConfig,
    params: PppParams,
    setup: &Setup,
    ranks: usize,
    count: usize,
    with_output: bool,
) -> Result<Vec<LimitDraw>> {
    let eps = cfg.tail_epsilon.unwrap_or(DEFAULT_TAIL_EPSILON);
    let k_min = cfg.k_min.unwrap_or(DEFAULT_K_MIN).max(ranks);
    let v = cfg.value()?;
    run_trials(split_seed(cfg.seed, LIMIT_STREAM), count, |_, _, rng| {
        if with_output {
            let marked = sample_marked_ppp(params, &setup.q, eps, k_min, rng)?;
            let w = limiting_ordered_weights(&marked.atoms, ranks)?;
            let xi = v.apply(&sample_critical_output(&marked)?);
            Ok(LimitDraw { weights: w, output_norm: norm(&xi) })
        } else {
            let s = sample_ppp_atoms(params, eps, k_min, rng)?;
            Ok(LimitDraw { weights: limiting_ordered_weights(&s, ranks)?, output_norm: f64::NAN })
        }
    })
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

struct FiniteDraw {
    seed: u64,
    weights: Vec<f64>,
    output_norm: f64,
}

fn ks_table(name: &str) -> CsvTable {
    CsvTable::new(name, &["quantity", "statistic", "n_eff", "p_value", "threshold", "pass"])
}

fn push_ks(table: &mut CsvTable, v: &mut Verdict, quantity: &str, ks: KsResult, threshold: f64) {
    let c = Check::at_most(&format!("ks_{quantity}"), ks.statistic, threshold);
    table.push(vec![
        quantity.into(),
        fmt(ks.statistic),
        fmt(ks.n_eff),
        fmt(ks.p_value_asymptotic),
        fmt(threshold),
        c.pass.to_string(),
    ]);
    v.stat(&format!("p_value_{quantity}"), ks.p_value_asymptotic);
    v.check(c);
}

fn samples_table(name: &str, ranks: usize, finite: &[FiniteDraw], limit: &[LimitDraw]) -> CsvTable {
    let mut cols = vec!["source".to_string(), "index".into(), "seed".into()];
    cols.extend((1..=ranks).map(|r| format!("rank_{r}")));
    cols.push("scaled_output_norm".into());
    let cols_ref: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let mut t = CsvTable::new(name, &cols_ref);
    for (i, f) in finite.iter().enumerate() {
        let mut row = vec!["finite".into(), i.to_string(), f.seed.to_string()];
        row.extend(f.weights.iter().map(|w| fmt(*w)));
        row.push(fmt(f.output_norm));
        t.push(row);
    }
    for (i, l) in limit.iter().enumerate() {
        let mut row = vec!["limit".into(), i.to_string(), String::new()];
        row.extend(l.weights.iter().map(|w| fmt(*w)));
        row.push(fmt(l.output_norm));
        t.push(row);
    }
    t
}

pub(crate) fn critical(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = Setup::new(cfg)?;
    let n = cfg.single_size()?;
    let beta = cfg.single_beta(n)?;
    let class = setup.classify(cfg, n, beta)?;
    let mut warnings = Vec::new();
    if class.label != Regime::Critical {
        warnings.push(regime_warning("Critical", &class));
    }
    let gamma = class.gamma_n;
    let ranks = cfg.ranks.unwrap_or(3).max(1);
    let limit_count = cfg.limit_samples.unwrap_or(cfg.trials);
    let v = cfg.value()?;
    let sqrt_beta = beta.sqrt();
    let q = setup.q.as_slice();

    let finite = run_trials(cfg.seed, cfg.trials, |_, seed, rng| {
        let ctx = sample_context(&setup.model, n, rng)?;
        let t: Vec<f64> = ctx.tokens().map(|x| d2q_raw(q, x)).collect();
        let weights = top_ordered_weights(&t, beta, ranks);
        let (disp, _, _) = raw_displacement(&setup.q, &ctx, beta);
        let out = v.apply(&disp);
        Ok(FiniteDraw { seed, weights, output_norm: sqrt_beta * norm(&out) })
    })?;
    let params = PppParams::new(setup.cq, gamma, setup.alpha)?;
    let limit = limit_draws(cfg, params, &setup, ranks, limit_count, true)?;

    let mut verdict = Verdict::new("critical", Seeds::new(cfg.seed, cfg.trials, Some(limit_count)));
    let mut ks = ks_table("critical_ks");
    for r in 0..ranks {
        let a: Vec<f64> = finite.iter().map(|f| f.weights[r]).collect();
        let b: Vec<f64> = limit.iter().map(|l| l.weights[r]).collect();
        push_ks(&mut ks, &mut verdict, &format!("rank_{}", r + 1), ks_two_sample(&a, &b)?, th::CRITICAL_KS);
    }
    let a: Vec<f64> = finite.iter().map(|f| f.output_norm).collect();
    let b: Vec<f64> = limit.iter().map(|l| l.output_norm).collect();
    push_ks(&mut ks, &mut verdict, "output_norm", ks_two_sample(&a, &b)?, th::CRITICAL_OUTPUT_KS);
    let inversions = finite.iter().filter(|f| f.weights.windows(2).any(|w| w[1] > w[0])).count();
    verdict.check(Check::at_most("rank_inversion_fraction", inversions as f64 / finite.len() as f64, 0.0));
    let a1: Vec<f64> = finite.iter().map(|f| f.weights[0]).collect();
    let w1: Vec<f64> = limit.iter().map(|l| l.weights[0]).collect();
    verdict.stat("median_A1", median(&a1));
    verdict.stat("median_W1", median(&w1));
    verdict.stat("gamma_n", gamma);
    verdict.stat("C_q", setup.cq);
    verdict.stat("regime", class.label);
    let samples = samples_table("critical_samples", ranks, &finite, &limit);
    Ok(report(Experiment::Critical, cfg, vec![samples, ks], Some(verdict), warnings))
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, 0.5)
}

/// Checks of the rotation group law and the score identity on random draws.
/// Returns `(group_law_error, score_identity_error)`.
fn rope_algebra_errors(cfg: &ExperimentConfig, rope: &crate::rope::RopeConfig, draws: usize) -> Result<(f64, f64)> {
    let mut rng = super::harness::trial_rng(split_seed(cfg.seed, AUX_STREAM));
    let d = cfg.d;
    let (mut group, mut score) = (0.0f64, 0.0f64);
    for _ in 0..draws {
        let p: i64 = rng.random_range(-64..=64);
        let p2: i64 = rng.random_range(-64..=64);
        let i: i64 = rng.random_range(-64..=64);
        let v = sample_uniform(d, &mut rng);
        let x = sample_uniform(d, &mut rng);
        let q = sample_uniform(d, &mut rng);
        let lhs = rope_rotate(rope, p + p2, v.as_slice())?;
        let rhs = rope_rotate(rope, p, &rope_rotate(rope, p2, v.as_slice())?)?;
        group = group.max(lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        let s1 = dot(&rope_rotate(rope, p, q.as_slice())?, &rope_rotate(rope, i, x.as_slice())?);
        let s2 = query_orbit(rope, &q, i - p)?.dot(x.as_slice());
        score = score.max((s1 - s2).abs());
    }
    Ok((group, score))
}

pub(crate) fn rope(cfg: &ExperimentConfig) -> Result<Report> {
    let rope = cfg
        .rope_config()?
        .ok_or_else(|| Error::Config("rope experiment needs a [rope] block".into()))?;
    let tokens = match cfg.correlation_model()? {
        Some(m) => m,
        None => CorrelatedTokenModel::new(vec![1.0], cfg.density_model()?)?,
    };
    let marginal = tokens.marginal_density()?;
    let q = cfg.query_vector()?;
    let setup = Setup::with_query(cfg, marginal.clone(), q)?;
    let n = cfg.single_size()?;
    let beta = cfg.single_beta(n)?;
    let class = setup.classify(cfg, n, beta)?;
    let mut warnings = Vec::new();
    if class.label != Regime::Critical {
        warnings.push(regime_warning("Critical", &class));
    }
    let gamma = beta * (n as f64).powf(-alpha(cfg.d));
    let ranks = cfg.ranks.unwrap_or(1).max(1);
    let limit_count = cfg.limit_samples.unwrap_or(cfg.trials);
    let orbit_len = cfg.orbit_length.unwrap_or(n.max(1000));
    let modes: Vec<Vec<i64>> = (0..rope.pairs())
        .map(|l| (0..rope.pairs()).map(|j| i64::from(j == l)).collect())
        .collect();
    let stats = orbit_phase_average(&rope, &setup.q, &marginal, orbit_len, &modes)?;
    let orbit = orbit_points(&rope, &setup.q, n)?;

    let finite = run_trials(cfg.seed, cfg.trials, |_, seed, rng| {
        let s = sample_correlated_context(&tokens, n, rng)?;
        let snap = rope_attention_weights_with_orbit(&orbit, &s.context, beta)?;
        let weights = top_ordered_weights(&snap.d2q_values, beta, ranks);
        Ok((FiniteDraw { seed, weights, output_norm: f64::NAN }, s.resamples))
    })?;
    let resamples: u64 = finite.iter().map(|f| f.1).sum();
    let finite: Vec<FiniteDraw> = finite.into_iter().map(|f| f.0).collect();
    let params = PppParams::new(stats.c_bar, gamma, setup.alpha)?;
    let limit = limit_draws(cfg, params, &setup, ranks, limit_count, false)?;

    let mut verdict = Verdict::new("rope", Seeds::new(cfg.seed, cfg.trials, Some(limit_count)));
    let mut ks = ks_table("rope_ks");
    for r in 0..ranks {
        let a: Vec<f64> = finite.iter().map(|f| f.weights[r]).collect();
        let b: Vec<f64> = limit.iter().map(|l| l.weights[r]).collect();
        push_ks(&mut ks, &mut verdict, &format!("rank_{}", r + 1), ks_two_sample(&a, &b)?, th::ROPE_KS);
    }
    let (group, score) = rope_algebra_errors(cfg, &rope, 1000)?;
    verdict.check(Check::at_most("rotation_group_law_error", group, th::ROPE_IDENTITY));
    verdict.check(Check::at_most("score_identity_error", score, th::ROPE_IDENTITY));
    verdict.stat("c_bar", stats.c_bar);
    verdict.stat("C_q", setup.cq);
    verdict.stat("period", stats.period);
    verdict.stat("resamples", resamples);
    verdict.stat("gamma_n", gamma);
    verdict.stat(
        "fourier_residuals",
        stats.fourier_residuals.iter().map(|(k, r)| (k.clone(), *r)).collect::<Vec<_>>(),
    );
    let samples = samples_table("rope_samples", ranks, &finite, &limit);
    Ok(report(Experiment::Rope, cfg, vec![samples, ks], Some(verdict), warnings))
}
