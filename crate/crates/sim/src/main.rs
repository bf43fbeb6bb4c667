use std::path::PathBuf;
use std::process::ExitCode;

use bosetracer::checks::run_checks;
use bosetracer::output::{write_artifact, write_json};
use bosetracer::sweep::{refit, run_sweep, MetricFit, SweepSpec};
use bosetracer::{load_config, run_scenario, Overrides, SimError};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bosetracer", about = "Tracer particle in an ideal Bose gas: microscopic vs effective dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    #[value(name = "inhomogeneity-at-X")]
    InhomogeneityAtX,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Steps between recorded samples.
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Number of classical tracers in the effective system.
    #[arg(long)]
    tracers: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides { stride: self.stride, inhomogeneity_at_x: self.variant.is_some(), tracers: self.tracers }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its series and summary.
    Run {
        #[command(flatten)]
        args: RunArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the series as JSON lines.
        #[arg(long)]
        jsonl: bool,
    },
    /// Run a parameter sweep and fit power laws.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Run a scenario and evaluate the invariant suite.
    Check {
        #[command(flatten)]
        args: RunArgs,
    },
    /// Re-fit the results of an existing sweep directory.
    Fit {
        #[arg(long)]
        out: PathBuf,
    },
    Version,
}

fn print_fits(fits: &[MetricFit]) {
    for f in fits {
        match (&f.fit, &f.error) {
            (Some(r), _) => println!(
                "{}: exponent {:.4} intercept {:.4} r2 {:.4}{}",
                f.metric,
                r.exponent,
                r.intercept,
                r.r_squared,
                if r.partial { " (partial)" } else { "" }
            ),
            (None, Some(e)) => println!("{}: no fit ({e})", f.metric),
            (None, None) => println!("{}: no fit", f.metric),
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, SimError> {
    match cli.command {
        Command::Run { args, out, jsonl } => {
            let mut cfg = load_config(&args.config)?;
            args.overrides().apply(&mut cfg)?;
            let art = match run_scenario(&cfg) {
                Ok(a) => a,
                Err(e) => {
                    std::fs::create_dir_all(&out).map_err(|io| SimError::Io(io.to_string()))?;
                    let summary = serde_json::json!({"status": "invalid", "reasons": [e.code()], "message": e.to_string()});
                    write_json(&out.join("summary.json"), &summary)?;
                    return Err(e);
                }
            };
            write_artifact(&out, &art, jsonl)?;
            println!("{} ({} steps, t = {})", art.summary.status, art.summary.steps_completed, art.summary.t_final);
            for r in &art.summary.reasons {
                println!("  {r}");
            }
            Ok(if art.is_aborted() { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Sweep { config, out, parallel } => {
            let text = std::fs::read_to_string(&config).map_err(|e| SimError::Io(format!("{}: {e}", config.display())))?;
            let spec: SweepSpec = serde_json::from_str(&text).map_err(|e| SimError::Config(e.to_string()))?;
            let outcome = run_sweep(&spec, parallel, out.as_deref())?;
            for m in &outcome.members {
                println!("value {}: {}", m.value, m.status);
            }
            print_fits(&outcome.fits);
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { args } => {
            let mut cfg = load_config(&args.config)?;
            args.overrides().apply(&mut cfg)?;
            let art = run_scenario(&cfg)?;
            let checks = run_checks(&art);
            for c in &checks {
                println!("{} {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if checks.iter().all(|c| c.passed) { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Fit { out } => {
            print_fits(&refit(&out)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Version => {
            println!("bosetracer {}", env!("CARGO_PKG_VERSION"));
            Ok(ExitCode::SUCCESS)
        }
    }
}
