use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use zoconex::experiment::{default_config, run_experiment, ExperimentConfig, PRESETS};

#[derive(Parser)]
#[command(name = "zoconex", version, about = "Zeroth-order constrained optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `output` key.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads, 0 for one per core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Master seed; overrides ZOCONEX_SEED, which overrides the config file.
        #[arg(long, env = "ZOCONEX_SEED")]
        seed: Option<u64>,
    },
    /// Print the configuration of a named experiment.
    Gen {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        name: String,
    },
    /// Run the built-in invariant checks.
    Verify,
}

fn run(config: PathBuf, out: Option<PathBuf>, jobs: usize, seed: Option<u64>) -> Result<ExitCode, String> {
    let mut cfg = ExperimentConfig::load(&config).map_err(|e| format!("{}: {e}", config.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = out
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .ok_or("no output directory: pass --out or set `output` in the config")?;
    let report = run_experiment(&cfg, &out, jobs).map_err(|e| e.to_string())?;
    for sweep in &report.sweeps {
        let last = sweep.summary.last().expect("at least one checkpoint");
        let label = sweep.nu.map(|v| format!("nu={v}: ")).unwrap_or_default();
        println!(
            "{label}{} trials, final mean gap {:.4e} +- {:.1e}, violation {:.4e}, {} diverged -> {}",
            last.n_trials,
            last.mean_gap,
            last.stderr_gap,
            last.mean_violation,
            last.n_diverged,
            sweep.summary_path.display()
        );
    }
    if report.unsolved > 0 {
        eprintln!("{} reference solutions failed their certificate", report.unsolved);
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, jobs, seed } => run(config, out, jobs, seed),
        Command::Gen { name } => default_config(&name)
            .expect("name checked by the parser")
            .to_toml()
            .map(|text| {
                print!("{text}");
                ExitCode::SUCCESS
            })
            .map_err(|e| e.to_string()),
        Command::Verify => {
            let mut failed = 0;
            for c in zoconex::verify::run_all() {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::FAILURE
    })
}
