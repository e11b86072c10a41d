use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use circle_response::scenario::render_report;
use circle_response::{run_scenario, ConfigFile, Error, Scenario};
use clap::{Parser, Subcommand};

/// Stationary densities and their response to perturbations for circle maps.
#[derive(Parser)]
#[command(name = "circresp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory, overriding `[output] dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Seed, overriding `[numerics] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check and write the artifacts.
    Run { config: PathBuf },
    /// Parse and validate a config without computing anything.
    Check { config: PathBuf },
    /// Run with overridden keys, e.g. `--param delta=2e-2,1e-2,5e-3,2.5e-3`
    /// or `--param numerics.order=32`.
    Sweep {
        config: PathBuf,
        #[arg(long = "param", required = true)]
        params: Vec<String>,
    },
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn load(path: &Path, cli: &Cli, params: &[String]) -> Result<Scenario, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ConfigFile::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.set_override(&format!("numerics.seed={seed}"))?;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.set_override(&format!("output.dir={}", dir.display()))?;
    }
    for p in params {
        cfg.set_override(p)?;
    }
    Scenario::from_config(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_FAIL);
        }
    }
    let (path, params, compute) = match &cli.command {
        Command::Run { config } => (config, &[][..], true),
        Command::Check { config } => (config, &[][..], false),
        Command::Sweep { config, params } => (config, &params[..], true),
    };
    let scenario = match load(path, &cli, params) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if !compute {
        println!(
            "{}: scenario `{}` is valid ({} map, {}, order {}, {} deltas)",
            path.display(),
            scenario.name,
            scenario.kind,
            scenario.noise.map_or("no noise".to_string(), |k| format!("xi = {}", k.xi())),
            scenario.numerics.order,
            scenario.numerics.deltas.len()
        );
        return ExitCode::SUCCESS;
    }
    match run_scenario(&scenario, &scenario.output.dir) {
        Ok(outcome) => {
            print!("{}", render_report(&scenario, &outcome));
            println!("artifacts in {}", scenario.output.dir.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAIL)
        }
    }
}
