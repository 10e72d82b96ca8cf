use std::path::PathBuf;
use std::process::ExitCode;

use attnlab::experiments::{self, Experiment, ExperimentConfig};
use clap::Parser;

#[derive(Parser, Debug)]
#[command(name = "attnlab", version, about = "Long-context softmax attention limits on the sphere")]
struct Cli {
    /// heatmap | profile | critical | supercritical | field | suboutput | residual | rope | predict
    experiment: Experiment,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> attnlab::Result<bool> {
    let mut cfg = ExperimentConfig::from_file(&cli.config)?;
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    let report = experiments::run(cli.experiment, &cfg)?;
    let written = report.write(&cfg.output_dir)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(j) = &report.json {
        println!("{}", serde_json::to_string_pretty(j).unwrap_or_default());
    }
    if let Some(v) = &report.verdict {
        for c in &v.checks {
            eprintln!(
                "{} {} = {} {} {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.relation,
                c.bound
            );
        }
    }
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
