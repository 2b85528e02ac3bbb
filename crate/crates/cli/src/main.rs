use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use graphop_cli::{estimate_graphop, preset, run_experiment, Model, RunConfig};

#[derive(Parser)]
#[command(name = "graphop", version, about = "Mean-field dynamics on graphops")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the mean-field equation and write diagnostics.
    Run(Common),
    /// Report spectral facts about the configured graphop.
    Estimate(Common),
    /// Simulate the finite particle system.
    Particles(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment (kuramoto-homogeneous, erdos-renyi,
    /// power-law-subcritical, power-law-supercritical, spherical,
    /// sakaguchi-gaussian, particles-homogeneous).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Diagnostic output cadence override.
    #[arg(long)]
    cadence: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let mut config = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => bail!("either --config or --preset is required"),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(c) = self.cadence {
            config.dynamics.cadence = Some(c);
        }
        let out = self
            .out
            .clone()
            .or_else(|| config.output.clone())
            .unwrap_or_else(|| PathBuf::from("output"));
        Ok((config, out))
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => run(args, false),
        Command::Particles(args) => run(args, true),
        Command::Estimate(args) => {
            let (config, out) = args.load()?;
            config.validate()?;
            let report = estimate_graphop(&config)?;
            report.write(&out)?;
            print!("{}", report.human());
            Ok(true)
        }
    }
}

fn run(args: Common, particles: bool) -> Result<bool> {
    let (config, out) = args.load()?;
    if particles != (config.model == Model::Particles) {
        bail!(if particles {
            "`particles` needs a config with model = \"particles\""
        } else {
            "use the `particles` subcommand for particle configs"
        });
    }
    let outcome = run_experiment(&config, &out)?;
    let s = &outcome.summary;
    println!(
        "kappa {:.6} vs threshold {:.6} ({}), theoretical rate {:.6}, fitted rate {}",
        s.kappa,
        s.kappa_threshold,
        s.regime,
        s.theoretical_rate,
        s.fitted_rate.map_or("n/a".to_string(), |r| format!("{r:.6}"))
    );
    for v in &s.violations {
        eprintln!("invariant violated: {v}");
    }
    println!("wrote {} files to {}", outcome.files.len(), out.display());
    Ok(s.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
