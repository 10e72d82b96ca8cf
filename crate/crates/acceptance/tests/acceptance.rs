//! Acceptance gate: criteria 1 to 12, one PASS/FAIL line each.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use attnlab::attention::{attention_weights, normalized_partition};
use attnlab::density::{local_intensity, sample_context, DensityModel};
use attnlab::experiments::harness::run_trials;
use attnlab::experiments::moments::estimate_local_moments;
use attnlab::experiments::{run, Experiment, ExperimentConfig, Verdict};
use attnlab::laws::local_moment_predictions;
use attnlab::special::{ln_gamma, reg_lower_incomplete_gamma};
use attnlab::sphere::UnitVector;
use attnlab::thresholds as th;

struct Outcome {
    pass: bool,
    detail: String,
}

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn summarize(v: &Verdict, names: &[&str]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in names {
        match v.find(n) {
            Some(c) => {
                pass &= c.pass;
                parts.push(format!("{n}={} ({} {})", num(c.value), c.relation, num(c.bound)));
            }
            None => {
                pass = false;
                parts.push(format!("{n}=missing"));
            }
        }
    }
    Outcome { pass, detail: parts.join(", ") }
}

fn num(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.2e}")
    } else {
        format!("{x:.4}")
    }
}

fn verdict(experiment: Experiment, cfg: &ExperimentConfig) -> Verdict {
    run(experiment, cfg).expect("experiment runs").verdict.expect("experiment certifies")
}

fn c1_heatmap() -> Outcome {
    let v = verdict(Experiment::Heatmap, &config("heatmap.toml"));
    let mut o = summarize(&v, &["high_beta_min_mean_A1", "low_beta_max_mean_A1"]);
    let high = v.number("high_cells").unwrap_or(0.0);
    let low = v.number("low_cells").unwrap_or(0.0);
    o.pass &= high > 0.0 && low > 0.0;
    o.detail += &format!(", cells checked high={high} low={low}");
    o
}

fn c2_profile() -> Outcome {
    let v = verdict(Experiment::Profile, &config("profile.toml"));
    summarize(&v, &["ratio_sup_error", "abs_scaled_sup_error", "cumulative_sup_error"])
}

fn c3_partition() -> Outcome {
    let model = DensityModel::uniform(3).unwrap();
    let q = UnitVector::basis(3, 0).unwrap();
    let cq = local_intensity(&model, &q).unwrap();
    let n = 100_000usize;
    let beta = (n as f64).sqrt();
    let z = run_trials(33, 50, |_, _, rng| {
        let ctx = sample_context(&model, n, rng)?;
        normalized_partition(&attention_weights(&q, &ctx, beta)?, 3, cq)
    })
    .unwrap();
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    Outcome {
        pass: (th::PARTITION_LO..=th::PARTITION_HI).contains(&mean),
        detail: format!("mean normalized partition={mean:.4} in [{}, {}]", th::PARTITION_LO, th::PARTITION_HI),
    }
}

fn c4_critical_weights() -> Outcome {
    let v = verdict(Experiment::Critical, &config("critical.toml"));
    summarize(&v, &["ks_rank_1", "ks_rank_2", "ks_rank_3", "rank_inversion_fraction"])
}

fn c5_supercritical() -> Outcome {
    let v = verdict(Experiment::Supercritical, &config("supercritical.toml"));
    summarize(&v, &["ks_an_T1_weibull", "mean_A1"])
}

fn c6_critical_output() -> Outcome {
    let mut cfg = config("critical.toml");
    cfg.trials = 2000;
    cfg.limit_samples = Some(2000);
    cfg.seed = 6;
    let v = verdict(Experiment::Critical, &cfg);
    summarize(&v, &["ks_output_norm"])
}

fn c7_trichotomy() -> Outcome {
    let a = verdict(Experiment::Suboutput, &config("suboutput_drift.toml"));
    let b = verdict(Experiment::Suboutput, &config("suboutput_fluctuation.toml"));
    let c = verdict(Experiment::Suboutput, &config("suboutput_mixed.toml"));
    let oa = summarize(&a, &["mean_relative_error"]);
    let ob = summarize(&b, &["covariance_eigenvalue_relative_error"]);
    let oc = summarize(&c, &["mean_relative_error", "covariance_eigenvalue_relative_error"]);
    let regimes = [&a, &b, &c].map(|v| v.statistics["regime"].as_str().unwrap_or("?").to_string());
    let expected = ["SubcriticalDrift", "SubcriticalFluctuation", "SubcriticalMixed"];
    Outcome {
        pass: oa.pass && ob.pass && oc.pass && regimes == expected,
        detail: format!("(a) {}; (b) {}; (c) {}; regimes {:?}", oa.detail, ob.detail, oc.detail, regimes),
    }
}

fn c8_local_moments() -> Outcome {
    let model = DensityModel::uniform(3).unwrap();
    let q = UnitVector::basis(3, 0).unwrap();
    let beta = 1e4;
    let est = estimate_local_moments(&model, &q, beta, 10_000_000, 88).unwrap();
    let pred = local_moment_predictions(beta, &model, &q).unwrap();
    let normal_err = (est.first[0] - pred.first[0]).abs() / pred.first[0].abs();
    let tangential_z = (1..3)
        .map(|j| (est.first[j] - pred.first[j]).abs() / est.first_stderr[j])
        .fold(0.0, f64::max);
    let trace_pred = 2.0 * pred.second_scale;
    let trace_err = (est.tangential_trace - trace_pred).abs() / trace_pred;
    Outcome {
        pass: normal_err <= th::LOCAL_MOMENT_REL
            && trace_err <= th::LOCAL_MOMENT_REL
            && tangential_z <= th::LOCAL_MOMENT_TANGENTIAL_SE,
        detail: format!(
            "normal first moment rel err={normal_err:.4} (<= {}), tangential first moment max |z|={tangential_z:.2} (<= {}), \
             tangential second-moment trace rel err={trace_err:.4} (<= {})",
            th::LOCAL_MOMENT_REL,
            th::LOCAL_MOMENT_TANGENTIAL_SE,
            th::LOCAL_MOMENT_REL
        ),
    }
}

fn c9_residual() -> Outcome {
    let v = verdict(Experiment::Residual, &config("residual.toml"));
    let mut o = summarize(&v, &["mean_step_relative_error", "positive_increment_fraction"]);
    let regime = v.statistics["regime"].as_str().unwrap_or("?").to_string();
    o.pass &= regime == "SubcriticalDrift";
    o.detail += &format!(", regime {regime}");
    o
}

fn c10_rope() -> Outcome {
    let v = verdict(Experiment::Rope, &config("rope.toml"));
    let mut o = summarize(&v, &["ks_rank_1", "score_identity_error", "rotation_group_law_error"]);
    o.detail += &format!(", c_bar={}", v.number("c_bar").unwrap_or(f64::NAN));
    o
}

fn c11_special_functions() -> Outcome {
    let mut worst_ln = 0.0f64;
    for &s in &common::LN_GAMMA_GRID {
        worst_ln = worst_ln.max(common::rel_err(ln_gamma(s).unwrap().exp(), common::gamma_oracle(s)));
    }
    let (ss, zs) = common::incomplete_gamma_grid();
    let mut worst_inc = 0.0f64;
    for &s in &ss {
        for &z in &zs {
            let got = reg_lower_incomplete_gamma(s, z).unwrap();
            worst_inc = worst_inc.max(common::rel_err(got, common::reg_lower_oracle(s, z)));
        }
    }
    Outcome {
        pass: worst_ln <= th::SPECIAL_REL && worst_inc <= th::SPECIAL_REL,
        detail: format!(
            "Gamma max rel err={worst_ln:.2e} over {} points, P(s,z) max rel err={worst_inc:.2e} over 20x20 (<= {:e})",
            common::LN_GAMMA_GRID.len(),
            th::SPECIAL_REL
        ),
    }
}

fn c12_properties() -> Outcome {
    let mut failures = Vec::new();
    let mut cases = 0;
    for (name, check, seeds) in common::PROPERTIES {
        for seed in 0..*seeds {
            cases += 1;
            if let Err(e) = check(seed) {
                failures.push(format!("{name}[seed {seed}]: {e}"));
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "{} properties, {cases} seeded cases, {} failures{}",
            common::PROPERTIES.len(),
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    }
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 12] = [
        (1, "weight phase transition", c1_heatmap),
        (2, "subcritical profile", c2_profile),
        (3, "partition function", c3_partition),
        (4, "critical ordered weights", c4_critical_weights),
        (5, "supercritical output", c5_supercritical),
        (6, "critical output functional", c6_critical_output),
        (7, "subcritical output trichotomy", c7_trichotomy),
        (8, "local moments", c8_local_moments),
        (9, "residual dynamics", c9_residual),
        (10, "RoPE correlated critical regime", c10_rope),
        (11, "special functions", c11_special_functions),
        (12, "property suites", c12_properties),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} {}: {name}: {} [{secs:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    }
}
