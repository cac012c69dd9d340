use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sizespec_cli::analyze::analyze;
use sizespec_cli::{execute, parse_config, preset, RunConfig, RunError, PRESET_NAMES};

#[derive(Parser)]
#[command(name = "sim", version, about = "Jump-growth size-spectrum simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configuration or preset and write snapshots and reports.
    Run(RunArgs),
    /// Print closed-form quantities: mstar, powerlaw or gaps.
    Analyze {
        subcommand: String,
        /// key=value pairs
        args: Vec<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; defaults to `[output] dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
}

fn load(args: &RunArgs) -> Result<RunConfig, RunError> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
            parse_config(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => preset(name).ok_or_else(|| {
            RunError::Config(format!("unknown preset `{name}` (expected one of {})", PRESET_NAMES.join(", ")))
        })?,
        (None, None) => return Err(RunError::Config("need --config or --preset".into())),
    };
    if let Some(n) = args.grid_n {
        cfg.grid = sizespec::Grid::uniform(cfg.grid.upper(), n)
            .map_err(|e| RunError::Config(format!("--grid-n: {e}")))?;
    }
    if let Some(r) = args.rtol {
        cfg.control.rel_tol = r;
    }
    if let Some(a) = args.atol {
        cfg.control.abs_tol = a;
    }
    cfg.control
        .validate()
        .map_err(|e| RunError::Config(e.to_string()))?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<(), RunError> {
    let cfg = load(&args)?;
    let out = args
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let outcome = execute(&cfg, &out)?;
    if let Some(err) = outcome.failure() {
        return Err(err);
    }
    println!(
        "wrote {} files to {} (drift {:.3e}, {} gaps at T)",
        outcome.files.len(),
        out.display(),
        outcome.report.drift,
        outcome.report.gaps.last().map_or(0, Vec::len)
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Analyze { subcommand, args } => analyze(&subcommand, &args).map(|table| print!("{table}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
