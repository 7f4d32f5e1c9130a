use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use effdim_cli::{load, run, validate, CliError, Overrides, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "effdim", version, about = "Run effective-dimension experiments from a JSON config")]
struct Args {
    #[arg(value_enum)]
    subcommand: Subcommand,
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `master_seed`).
    #[arg(long, env = "TOOL_SEED")]
    seed: Option<u64>,
    /// Worker threads (overrides `parallelism`).
    #[arg(long, env = "TOOL_JOBS")]
    jobs: Option<usize>,
    /// Check the config and exit without running.
    #[arg(long)]
    validate_only: bool,
}

fn main_inner(args: Args) -> Result<(), CliError> {
    if args.validate_only {
        let diags = validate(&args.config)?;
        if diags.is_empty() {
            println!("{}: ok", args.config.display());
            return Ok(());
        }
        for d in &diags {
            eprintln!("{d}");
        }
        return Err(CliError::ConfigInvalid(format!("{} problem(s) found", diags.len())));
    }
    let overrides = Overrides { subcommand: Some(args.subcommand), output_dir: args.out, seed: args.seed, jobs: args.jobs };
    let (cfg, params) = load(&args.config, &overrides)?;
    let manifest = run(&cfg, &params)?;
    for o in &manifest.outputs {
        println!("{}  {}", o.sha256, cfg.output_dir.join(&o.file).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
