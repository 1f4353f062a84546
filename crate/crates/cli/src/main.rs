use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stoplab_cli::{run, write_outputs, CliError, Command, Settings};

/// Run one optimal-stopping experiment and write `report.json` and CSV tables.
#[derive(Debug, Parser)]
#[command(name = "stoplab", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated step counts; overrides `n_list`.
    #[arg(long)]
    n: Option<String>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(args: &Args) -> Result<Vec<PathBuf>, CliError> {
    let mut settings = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read {}: {e}", path.display()))
            })?;
            Settings::parse(&text)?
        }
        None => Settings::default(),
    };
    if let Some(n) = &args.n {
        settings.set("n_list", n.as_str());
    }
    if let Some(seed) = args.seed {
        settings.set("seed", seed.to_string());
    }
    if let Some(out) = &args.out {
        settings.set("out", out.display().to_string());
    }
    let out: String = settings.get("out", format!("stoplab-out/{}", args.command.name()))?;
    let outcome = run(args.command, &settings)?;
    write_outputs(&outcome, &PathBuf::from(out))
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("stoplab {}: {e}", args.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
