//! `vrjp`: run identity checks and Monte Carlo experiments from a config file.
//!
//! Exit status: 0 every check passed, 1 a check failed, 2 bad invocation or
//! config, 3 too many degenerate replicates or another numerical breakdown.

mod config;
mod experiments;
mod output;
mod suite;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vrjp_core::toy::WeightSampler;

use config::{ConfigError, Experiment, GraphKind, RunConfig, Weights};
use output::RunOutput;
use suite::{verdict_table, Verdict};

#[derive(Parser, Debug)]
#[command(name = "vrjp", version, about = "Experiments on the vertex-reinforced jump process")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// TOML config; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory for CSV files and the manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated suite members or experiment parts.
    #[arg(long, global = true, value_delimiter = ',')]
    only: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Identity and invariant suite with a pass/fail report.
    Validate,
    /// Decay, moment and tail tables over a conductance grid.
    Scan,
    /// Reinforced jump process trajectories and the exit comparison.
    Simulate,
    /// Toy chain moments, chain identity, uniform bound, convex order.
    Toy,
    /// Renewal identity, overshoot traces and inverse Gaussian tails.
    Renewal,
    /// Side-exit probability, potential against walk, over a conductance grid.
    Exitprob,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Validate => Experiment::Validate,
            Command::Scan => Experiment::Scan,
            Command::Simulate => Experiment::Simulate,
            Command::Toy => Experiment::Toy,
            Command::Renewal => Experiment::Renewal,
            Command::Exitprob => Experiment::Exitprob,
        }
    }
}

const PASS: u8 = 0;
const FAIL: u8 = 1;
const CONFIG: u8 = 2;
const DEGENERATE: u8 = 3;

fn config_error(key: &str, message: String) -> ConfigError {
    ConfigError { key: key.into(), line: None, message }
}

/// Inputs read from other files, checked before anything runs.
fn check_inputs(cfg: &RunConfig, experiment: Experiment) -> Result<(), ConfigError> {
    let wants = |part: &str| cfg.run.only.is_empty() || cfg.run.only.iter().any(|o| o == part);
    if experiment == Experiment::Toy && wants("bound") {
        if let Weights::File { path } = &cfg.toy.bound.weights {
            WeightSampler::from_file(path).map_err(|e| config_error("toy.bound.weights.path", e.to_string()))?;
        }
    }
    if experiment == Experiment::Simulate && cfg.simulate.graph == GraphKind::File {
        let path = cfg.simulate.graph_file.as_ref().expect("checked");
        std::fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|t| vrjp_core::graph::parse_graph(&t).map_err(|e| e.to_string()))
            .map_err(|m| config_error("simulate.graph_file", format!("{}: {m}", path.display())))?;
    }
    for o in &cfg.run.only {
        if !experiment.parts().contains(&o.as_str()) {
            return Err(config_error(
                "run.only",
                format!("unknown name {o:?} for {}; expected one of {}", experiment.name(), experiment.parts().join(", ")),
            ));
        }
    }
    Ok(())
}

fn prepare(cli: &Cli) -> Result<(RunConfig, Experiment), ConfigError> {
    let (mut cfg, source) = match &cli.config {
        Some(p) => {
            let (c, s) = RunConfig::load(p)?;
            (c, Some(s))
        }
        None => (RunConfig::default(), None),
    };
    cfg.check(source.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.run.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.run.out = o.clone();
    }
    if !cli.only.is_empty() {
        cfg.run.only = cli.only.clone();
    }
    let experiment = cli
        .command
        .map(Experiment::from)
        .or(cfg.run.experiment)
        .ok_or_else(|| config_error("run.experiment", "no subcommand given and none set in the config".into()))?;
    check_inputs(&cfg, experiment)?;
    Ok((cfg, experiment))
}

fn execute(cfg: &RunConfig, experiment: Experiment) -> anyhow::Result<bool> {
    let mut out = RunOutput::create(&cfg.run.out)?;
    let verdicts: Vec<Verdict> = match experiment {
        Experiment::Validate => suite::run_suite(cfg, &cfg.run.only)?,
        Experiment::Scan => experiments::scan(cfg, &mut out)?,
        Experiment::Simulate => experiments::simulate(cfg, &mut out)?,
        Experiment::Toy => experiments::toy(cfg, &mut out)?,
        Experiment::Renewal => experiments::renewal(cfg, &mut out)?,
        Experiment::Exitprob => experiments::exitprob(cfg, &mut out)?,
    };
    for v in &verdicts {
        println!("[{}] {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    out.write("checks.csv", &verdict_table(&verdicts))?;
    let passed = verdicts.iter().all(|v| v.passed);
    let manifest = out.finish(experiment.name(), cfg, passed)?;
    println!("wrote {}", manifest.display());
    Ok(passed)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    use vrjp_core::Error as E;
    match e.downcast_ref::<E>() {
        Some(E::AbortBudget { .. } | E::Degenerate { .. } | E::DegenerateSample { .. } | E::Quadrature { .. }) => {
            DEGENERATE
        }
        Some(E::IdentityViolation { .. }) => FAIL,
        _ => CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cfg, experiment) = match prepare(&cli) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(CONFIG);
        }
    };
    match execute(&cfg, experiment) {
        Ok(true) => ExitCode::from(PASS),
        Ok(false) => ExitCode::from(FAIL),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
