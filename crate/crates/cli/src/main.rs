use std::path::PathBuf;
use std::process::ExitCode;

use bregflow_cli::{run_flow, run_invariance, run_oracle_compare, selftest, CliError, Experiment, LoadedConfig};
use clap::{Args, Parser, Subcommand};
use log::{error, warn};

#[derive(Parser)]
#[command(
    name = "bregflow",
    version,
    about = "Particle gradient flows and target-scale invariance checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a particle flow and write its trajectory.
    Flow(RunArgs),
    /// Tabulate first-variation and divergence shifts over (beta, c).
    Invariance(RunArgs),
    /// Compare a particle flow with the exact Fisher-Rao path.
    OracleCompare(RunArgs),
    /// Run quick built-in checks.
    Selftest {
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only report errors.
    #[arg(long)]
    quiet: bool,
}

fn init_logging(quiet: bool) {
    let default = if quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default))
        .format_timestamp(None)
        .init();
}

fn execute(experiment: Experiment, args: RunArgs) -> Result<(), CliError> {
    let mut loaded = match &args.config {
        Some(path) => LoadedConfig::from_file(path)?,
        None => LoadedConfig::defaults(experiment),
    };
    if args.config.is_some() && loaded.config.experiment != experiment {
        warn!(
            "config declares experiment = \"{}\"; running {}",
            loaded.config.experiment.name(),
            experiment.name()
        );
    }
    loaded.config.experiment = experiment;
    if let Some(seed) = args.seed {
        loaded.config.seed = Some(seed);
    }
    if let Some(out) = args.out {
        loaded.config.output.dir = out;
    }
    loaded.validate()?;
    let cfg = &loaded.config;
    let out = cfg.output.dir.clone();
    match experiment {
        Experiment::Flow => {
            let s = run_flow(cfg, &out)?;
            if !args.quiet {
                println!(
                    "t = {:.4}: mean {:?}, var {:?}, ess {:.1}; wrote {}",
                    s.last.time,
                    s.last.mean,
                    s.last.var,
                    s.last.ess,
                    out.display()
                );
                if let Some(p) = &s.paired {
                    println!(
                        "paired run at scale {}: max |dx| = {:e}, max |dlogw| = {:e}",
                        p.compare_scale, p.max_abs_position_diff, p.max_abs_log_weight_diff
                    );
                }
            }
        }
        Experiment::Invariance => {
            let s = run_invariance(cfg, &out)?;
            if !args.quiet {
                for r in &s.rows {
                    println!(
                        "beta {:>5} c {:>6}: defect {:.3e}, mean shift {:+.6}",
                        r.beta, r.c, r.constancy_defect, r.mean_shift
                    );
                }
            }
        }
        Experiment::OracleCompare => {
            let s = run_oracle_compare(cfg, &out)?;
            if !args.quiet {
                for r in &s.rows {
                    println!(
                        "t = {:<5} mean {:.4} (exact {:.4}), var {:.4} (exact {:.4})",
                        r.time, r.particle_mean, r.oracle_mean, r.particle_var, r.oracle_var
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Flow(a) => (Experiment::Flow, a),
        Command::Invariance(a) => (Experiment::Invariance, a),
        Command::OracleCompare(a) => (Experiment::OracleCompare, a),
        Command::Selftest { quiet } => {
            init_logging(quiet);
            let checks = selftest();
            for c in &checks {
                if !quiet || !c.passed {
                    println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
            }
            return if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            };
        }
    };
    init_logging(args.quiet);
    match execute(experiment, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
