//! Configuration-driven experiment runner: reads a JSON config, runs one experiment, and writes
//! CSV data, `summary.json` and a checksummed `manifest.json` into the output directory.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

pub use config::{parse_str, validate_str, Diagnostic, ExperimentConfig, Params, Subcommand};
pub use error::CliError;
pub use output::RunManifest;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub subcommand: Option<Subcommand>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

fn diagnostics_error(d: &[Diagnostic]) -> CliError {
    CliError::ConfigInvalid(d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; "))
}

/// Schema check of a config file.
pub fn validate(config_path: &Path) -> Result<Vec<Diagnostic>, CliError> {
    Ok(validate_str(&fs::read_to_string(config_path)?))
}

/// Reads, validates and applies overrides.
pub fn load(config_path: &Path, o: &Overrides) -> Result<(ExperimentConfig, Params), CliError> {
    let text = fs::read_to_string(config_path)?;
    let (mut cfg, params) = parse_str(&text).map_err(|d| diagnostics_error(&d))?;
    if let Some(sub) = o.subcommand {
        if sub != cfg.subcommand {
            return Err(CliError::ConfigInvalid(format!(
                "subcommand: command line asks for {} but the config is for {}",
                sub.name(),
                cfg.subcommand.name()
            )));
        }
    }
    if let Some(dir) = &o.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = o.seed {
        cfg.master_seed = seed;
    }
    if let Some(jobs) = o.jobs {
        if jobs == 0 {
            return Err(CliError::ConfigInvalid("parallelism: must be a positive integer".into()));
        }
        cfg.parallelism = Some(jobs);
    }
    Ok((cfg, params))
}

/// Runs the experiment and writes its outputs; data files depend only on the config.
pub fn run(cfg: &ExperimentConfig, params: &Params) -> Result<RunManifest, CliError> {
    let jobs = cfg.parallelism.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Experiment(format!("cannot start worker pool: {e}")))?;
    let started_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
    let out = pool.install(|| experiments::execute(params, cfg.master_seed))?;

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    for t in &out.tables {
        outputs.push(output::write_file(dir, &format!("{}.csv", t.name), &t.to_bytes()?)?);
    }
    let mut summary = serde_json::to_vec_pretty(&out.summary)?;
    summary.push(b'\n');
    outputs.push(output::write_file(dir, "summary.json", &summary)?);

    let canonical = json!({
        "subcommand": cfg.subcommand,
        "master_seed": cfg.master_seed,
        "parameters": cfg.parameters,
    });
    let manifest = RunManifest {
        subcommand: cfg.subcommand.name().into(),
        master_seed: cfg.master_seed,
        config_hash: output::sha256_hex(serde_json::to_string(&canonical)?.as_bytes()),
        code_version: env!("CARGO_PKG_VERSION").into(),
        parallelism: jobs,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        outputs,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::write(dir.join("manifest.json"), bytes)?;
    Ok(manifest)
}
