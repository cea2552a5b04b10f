use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use scelab::experiments::{emit_report, run, ExperimentConfig, ReportFormat, Scenario};
use scelab::par::with_threads;
use scelab::{Error, Result};

/// Experiments for the stochastic continuity equation with rough drift.
#[derive(Parser, Debug)]
#[command(name = "scelab", version)]
struct Cli {
    /// Scenario config; the built-in default is used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory, overriding the config (default `out`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Characteristics solve: mass, positivity, weak residual.
    Simulate,
    /// Inverse-Jacobian moment oracles and the boundedness sweep.
    LemmaSweep,
    /// Commutator decay in epsilon.
    Commutator,
    /// Noisy versus deterministic epsilon sweeps.
    Selection,
    /// Stability in the initial datum.
    Stability,
    /// Shifted-drift change of variables.
    NegativeExample,
    /// Integrability norms of the drift.
    HypothesisCheck,
}

impl Command {
    fn scenario(self) -> Scenario {
        match self {
            Command::Simulate => Scenario::Simulate,
            Command::LemmaSweep => Scenario::LemmaSweep,
            Command::Commutator => Scenario::Commutator,
            Command::Selection => Scenario::Selection,
            Command::Stability => Scenario::Stability,
            Command::NegativeExample => Scenario::NegativeExample,
            Command::HypothesisCheck => Scenario::HypothesisCheck,
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let scenario = cli.command.scenario();
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => scenario.default_config(),
    };
    if cfg.scenario != scenario {
        return Err(Error::Config(format!(
            "config is for '{}', not '{}'",
            cfg.scenario, scenario
        )));
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let start = Instant::now();
    let report = match with_threads(cli.threads, || run(&cfg)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = emit_report(&report, &dir, &[ReportFormat::Csv, ReportFormat::Text]) {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    for c in &report.checks {
        println!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    for (label, d) in &report.timings {
        eprintln!("time {label}: {:.3} s", d.as_secs_f64());
    }
    eprintln!("time total: {:.3} s", start.elapsed().as_secs_f64());
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
