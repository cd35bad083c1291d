use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcute::cli::{execute, presets, CliError, Command, RawConfig, RunConfig};

#[derive(Parser)]
#[command(name = "dcute", version, about = "Disordered polariton dynamics in the large-N limit")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Linear absorption spectra from a photonic start.
    Spectrum(Common),
    /// Population dynamics, per-bin yields and vibrational energies.
    Dynamics(Common),
    /// Final yields over the sweep grid.
    Sweep(Common),
    /// Bin-count convergence study.
    Converge(Common),
    /// Finite-N ensembles against the effective model.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration, e.g. fig3a or figs1.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for grid points (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// `key=value` or `section.key=value`, applied after the file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let text = match (&common.config, &common.preset) {
        (Some(path), _) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?,
        (None, Some(name)) => presets::preset(name)
            .ok_or_else(|| {
                let known: Vec<&str> = presets::names().collect();
                CliError::Config(format!("unknown preset `{name}` (known: {})", known.join(", ")))
            })?
            .to_string(),
        (None, None) => String::new(),
    };
    let mut raw = RawConfig::parse(&text)?;
    for o in &common.overrides {
        raw.set_override(o)?;
    }
    RunConfig::from_raw(&raw)
}

fn run(command: Command, common: &Common) -> Result<(), CliError> {
    let cfg = load(common)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = common.threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        pool = pool.num_threads(k);
    }
    let pool = pool.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| execute(command, &cfg, &common.out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match &cli.command {
        Cmd::Spectrum(c) => (Command::Spectrum, c),
        Cmd::Dynamics(c) => (Command::Dynamics, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Converge(c) => (Command::Converge, c),
        Cmd::Oracle(c) => (Command::Oracle, c),
    };
    match run(command, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dcute: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
