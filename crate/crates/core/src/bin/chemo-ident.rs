use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use chemo_ident::harness::config::FULL_DELTAS;
use chemo_ident::harness::{cmd_check, cmd_invert, cmd_rates, cmd_simulate, commands::format_slope, ExperimentConfig, Fault};
use chemo_ident::par;

/// Forward simulation and identification of the chemotactic sensitivity.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the model and write VTK snapshots at t = 0, 1, ..., T.
    Simulate(Common),
    /// Reconstruct f from noisy data with the discrepancy principle.
    Invert(Common),
    /// Convergence rates of alpha and the H1 error over noise levels.
    Rates {
        #[command(flatten)]
        common: Common,
        /// Comma-separated noise levels, e.g. 5e-1,5e-2.
        #[arg(long, value_delimiter = ',', conflicts_with = "full")]
        deltas: Option<Vec<f64>>,
        /// Use noise levels 5e-1 down to 5e-6.
        #[arg(long)]
        full: bool,
    },
    /// Run the fast invariant battery on a small mesh.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reference-scale mesh (4225 vertices) and time step 0.025.
    #[arg(long)]
    paper: bool,
    /// Noise seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    AdjointSign,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if self.paper {
            cfg = cfg.paper();
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.noise.seed = seed;
        }
        cfg.validate().context("invalid configuration")?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = common.resolve()?;
            let s = cmd_simulate(&cfg)?;
            println!("wrote {} snapshots to {}", s.snapshots.len(), cfg.output_dir.display());
            println!("max mass drift {:.3e}", s.max_mass_drift);
            println!("rho range [{:.6e}, {:.6e}]", s.rho_range.min, s.rho_range.max);
            Ok(true)
        }
        Command::Invert(common) => {
            let cfg = common.resolve()?;
            let inv = cmd_invert(&cfg)?;
            println!("alpha {:.4e}  residual {:.4e}  h1 error {:.4e}", inv.result.alpha, inv.result.residual, inv.h1_error);
            println!("results in {}", cfg.output_dir.display());
            Ok(inv.result.converged)
        }
        Command::Rates { common, deltas, full } => {
            let cfg = common.resolve()?;
            let deltas = match (deltas, full) {
                (Some(d), _) => d,
                (None, true) => FULL_DELTAS.to_vec(),
                (None, false) => cfg.deltas.clone(),
            };
            if deltas.is_empty() {
                bail!("no noise levels given");
            }
            let study = cmd_rates(&cfg, &deltas)?;
            for (delta, row) in deltas.iter().zip(&study.rows) {
                match row {
                    Ok(r) => println!("delta {delta:.1e}  alpha {:.4e}  h1 error {:.4e}", r.alpha, r.h1_error),
                    Err(e) => eprintln!("delta {delta:.1e}  failed: {e}"),
                }
            }
            println!("alpha slope {}", format_slope(study.alpha_slope));
            println!("h1 error slope {}", format_slope(study.error_slope));
            Ok(study.rows.iter().all(|r| r.is_ok()))
        }
        Command::Check { common, inject_fault } => {
            let cfg = common.resolve()?;
            let fault = inject_fault.map(|FaultArg::AdjointSign| Fault::AdjointSign);
            let report = cmd_check(&cfg, fault)?;
            print!("{report}");
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = par::init_thread_pool_from_env() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
