use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use coopseek::sim::checks::verify;
use coopseek::sim::compare::compare_to_dir;
use coopseek::sim::config::{load_config, OutputFormat, ScenarioConfig};
use coopseek::sim::run_scenario;
use coopseek::Error;

#[derive(Parser)]
#[command(
    name = "coopseek",
    version,
    about = "Simulate agent formations seeking a moving source"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace and summary.
    Run {
        config: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Run several scenarios on the same field and write a merged series.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run a scenario and check its bounds; exit status 0 iff every check passes.
    Verify {
        config: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn load(path: &PathBuf, steps: Option<usize>, seed: Option<u64>) -> Result<ScenarioConfig, Error> {
    let cfg = load_config(path)?;
    if steps.is_some() || seed.is_some() {
        cfg.with_overrides(steps, seed)
    } else {
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Diverged { .. } => 1,
                _ => 2,
            })
        }
    }
}

fn execute(command: Command) -> Result<bool, Error> {
    match command {
        Command::Run {
            config,
            steps,
            seed,
            out,
            format,
        } => {
            let mut cfg = load(&config, steps, seed)?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            if let Some(f) = format {
                cfg.format = match f {
                    Format::Csv => OutputFormat::Csv,
                    Format::Json => OutputFormat::Json,
                };
            }
            let (_, summary, files) = run_scenario(&cfg)?;
            println!(
                "{}: {} steps, final tracking error {:.6}",
                summary.name, summary.steps, summary.final_tracking_error
            );
            if let Some(v) = summary.max_bound_violation {
                println!("max bound violation {v:e}");
            }
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(summary.max_bound_violation.is_none_or(|v| v <= 0.0))
        }
        Command::Compare { configs, out, steps } => {
            let cfgs = configs
                .iter()
                .map(|p| load(p, steps, None))
                .collect::<Result<Vec<_>, _>>()?;
            let cmp = compare_to_dir(&cfgs, &out)?;
            for s in &cmp.scenarios {
                match (&s.steady_state, s.diverged_at, &s.error) {
                    (Some(ss), _, _) => println!(
                        "{:<24} steady-state tracking {:>12.6}  gradient error {:>10.6}  error bound {:>10.6}",
                        s.name, ss.mean_tracking_error, ss.mean_gradient_error, ss.mean_error_bound
                    ),
                    (None, Some(k), _) => println!("{:<24} diverged at iteration {k}", s.name),
                    (None, None, Some(e)) => println!("{:<24} failed: {e}", s.name),
                    _ => println!("{:<24} no iterations", s.name),
                }
            }
            println!("wrote {}", out.display());
            Ok(cmp.scenarios.iter().all(|s| s.completed))
        }
        Command::Verify { config, steps } => {
            let cfg = load(&config, steps, None)?;
            let report = verify(&cfg);
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(report.passed())
        }
    }
}
