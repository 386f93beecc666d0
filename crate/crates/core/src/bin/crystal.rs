use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use harmonic_crystal::experiments::{self, ExperimentConfig, RunContext};
use harmonic_crystal::{CrystalError, Result};

#[derive(Parser)]
#[command(name = "crystal", version, about = "Harmonic crystal experiments on the lattice half-space")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output root; each command writes into `<out>/<command>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Check the kernel conditions E0-E6.
    Validate,
    /// Band frequencies and group velocities along the axes.
    Dispersion,
    /// Evolve one initial sample and write snapshots.
    Evolve,
    /// Generate (or resume) an ensemble and compare with exact propagation.
    Sample,
    /// Convergence of the covariance to its limit.
    Converge,
    /// Normality of evolved observables.
    Gaussianity,
    /// Decay of the adjoint evolution.
    Decay,
    /// Aggregate and verify all runs below the output root.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Dispersion => "dispersion",
            Command::Evolve => "evolve",
            Command::Sample => "sample",
            Command::Converge => "converge",
            Command::Gaussianity => "gaussianity",
            Command::Decay => "decay",
            Command::Report => "report",
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CrystalError::InvalidParameter("--config is required".into()))?;
    let mut config = ExperimentConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn out_root(cli: &Cli, config: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| config.and_then(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Runs one study; `Ok(false)` means a scientific check failed.
fn run(cli: &Cli) -> Result<bool> {
    if cli.command == Command::Report {
        let root = out_root(cli, None);
        let report = experiments::run_report(&root)?;
        std::fs::write(root.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        print!("{}", report.text());
        return Ok(report.all_passed && report.all_verified);
    }
    let config = load(cli)?;
    let dir = out_root(cli, Some(&config)).join(cli.command.name());
    let mut ctx = RunContext::new(cli.command.name(), &dir, &config)?;
    let passed = study(cli.command, &config, &mut ctx)?;
    ctx.finish(passed)?;
    println!("{}: {} ({})", cli.command.name(), if passed { "pass" } else { "FAIL" }, dir.display());
    Ok(passed)
}

fn study(command: Command, config: &ExperimentConfig, ctx: &mut RunContext) -> Result<bool> {
    Ok(match command {
        Command::Validate => {
            let r = experiments::run_validate(config, ctx)?;
            print!("{}", r.summary());
            !r.any_violated()
        }
        Command::Dispersion => {
            experiments::run_dispersion(config, ctx)?;
            true
        }
        Command::Evolve => experiments::run_evolve(config, ctx)?.passed,
        Command::Sample => {
            let r = experiments::run_sample(config, ctx)?;
            for (t, z) in r.times.iter().zip(&r.max_z_score) {
                println!("t = {t}: max |z| = {z:.2}");
            }
            r.passed
        }
        Command::Converge => {
            let r = experiments::run_converge(config, ctx)?;
            for (t, e) in r.times.iter().zip(&r.relative) {
                println!("t = {t}: relative error {e:.4e}");
            }
            println!("grid refinement change {:.3e}", r.refinement_change);
            if let Some(s) = &r.stationarity {
                println!("stationarity errors {:?}", s.relative);
            }
            if let Some(u) = &r.uniform_bound {
                println!(
                    "uniform bound: slope {:.3e} +- {:.1e}, weighted norm {:?}",
                    u.fit.slope, u.fit.slope_stderr, u.weighted_norm
                );
            }
            r.passed
        }
        Command::Gaussianity => {
            let r = experiments::run_gaussianity(config, ctx)?;
            for e in &r.entries {
                println!(
                    "psi {} t = {}: skew z {:.2}, kurt z {:.2}, KS p {:.3}, {:?}",
                    e.test_function, e.t, e.report.skewness_z, e.report.kurtosis_z, e.report.ks_p_value, e.report.verdict
                );
            }
            r.passed
        }
        Command::Decay => {
            let r = experiments::run_decay(config, ctx)?;
            for s in &r.series {
                println!(
                    "slope {:.3} (expected {}), max outside-cone mass {:.2e}",
                    s.fit.slope,
                    s.expected_slope,
                    s.outside_cone.iter().cloned().fold(0.0, f64::max)
                );
            }
            r.passed
        }
        Command::Report => unreachable!("handled before loading a config"),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
