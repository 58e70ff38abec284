use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sectlab_cli::{load_config, resolve_output_dir, run_experiment, validate_config, ConfigIssue, Experiment};

#[derive(Parser)]
#[command(name = "sectlab", version, about = "Run sectional-expansion experiments from a TOML config")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Exit nonzero on any withheld verdict, stopped orbit or failed check.
    #[arg(long, global = true)]
    strict: bool,
    /// Output directory; beats SECTLAB_OUT and the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for orbit fan-out.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Locate and classify the equilibria of a cylinder field.
    Equilibria,
    /// Transition map from the bottom to the top of the cylinder.
    Transition,
    /// Mirror symmetry, axis connection and rotational equivariance.
    Symmetry,
    /// Second compound of the tangent flow against the compound cocycle.
    CompoundCheck,
    /// Birkhoff averages and condition verdicts along suspension orbits.
    Birkhoff,
    /// Slow-recurrence profile and orbit averages.
    Recurrence,
    /// Empirical measures of several orbits and their TV distances.
    Measure,
    /// Sectional averages across slowdown depths.
    SlowdownSweep,
    /// Higher-order sectional averages.
    Psectional,
    /// Check a config and print it with defaults filled in.
    Validate,
}

impl Cmd {
    fn experiment(self) -> Option<Experiment> {
        Some(match self {
            Cmd::Equilibria => Experiment::Equilibria,
            Cmd::Transition => Experiment::Transition,
            Cmd::Symmetry => Experiment::Symmetry,
            Cmd::CompoundCheck => Experiment::CompoundCheck,
            Cmd::Birkhoff => Experiment::Birkhoff,
            Cmd::Recurrence => Experiment::Recurrence,
            Cmd::Measure => Experiment::Measure,
            Cmd::SlowdownSweep => Experiment::SlowdownSweep,
            Cmd::Psectional => Experiment::Psectional,
            Cmd::Validate => return None,
        })
    }
}

fn config_errors(issues: &[ConfigIssue]) -> ExitCode {
    for i in issues {
        eprintln!("error: {i}");
    }
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = cli.config.as_deref() else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }

    let Some(exp) = cli.cmd.experiment() else {
        return match validate_config(path) {
            Ok(mut cfg) => {
                if let Some(s) = cli.seed {
                    cfg.seed = s;
                }
                match toml::to_string_pretty(&cfg) {
                    Ok(text) => {
                        print!("{text}");
                        ExitCode::SUCCESS
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        ExitCode::FAILURE
                    }
                }
            }
            Err(issues) => config_errors(&issues),
        };
    };

    let mut cfg = match load_config(path, Some(exp)) {
        Ok(c) => c,
        Err(issues) => return config_errors(&issues),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let env = std::env::var("SECTLAB_OUT").ok();
    let out = resolve_output_dir(cli.out.as_deref(), env.as_deref(), &cfg);
    let report = match run_experiment(&cfg, &out) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    for c in &report.checks {
        println!("[{}] {}", if c.ok { "ok" } else { "FAIL" }, c.name);
    }
    println!("wrote {} files to {}", report.files.len(), out.display());
    let problems = report.strict_failures();
    for p in &problems {
        eprintln!("warning: {p}");
    }
    if cli.strict && !problems.is_empty() {
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
