//! `strata`: batch front-end for fine, effective and comparison runs.

mod config;
mod error;
mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use config::{Format, RunConfig};
use error::CliError;
use manifest::{regime_record, sha256_hex, Manifest};
use run::{dispatch, Command, Outputs};

#[derive(Debug, Parser)]
#[command(name = "strata", version, about = "Layered high-contrast elastodynamics: fine and homogenized runs")]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration (not needed for `selftest`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides `microstructure.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.formats`.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn load(args: &Args, manifest: &mut Manifest) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            manifest.config_path = Some(path.display().to_string());
            let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            manifest.config_sha256 = Some(sha256_hex(&bytes));
            let text = String::from_utf8(bytes).map_err(|_| CliError::Config("config is not UTF-8".into()))?;
            RunConfig::parse(&text)?
        }
        None if args.command == Command::Selftest => RunConfig::default(),
        None => return Err(CliError::Config("--config is required".into())),
    };
    if let Some(s) = args.seed {
        cfg.microstructure.seed = s;
    }
    if let Some(f) = args.format {
        cfg.output.formats = f;
    }
    if let Some(d) = &args.out {
        cfg.output.directory = d.clone();
    }
    manifest.seeds = json!({
        "microstructure": cfg.microstructure.seed,
        "overridden": args.seed.is_some(),
    });
    Ok(cfg)
}

fn execute(args: &Args, manifest: &mut Manifest, out_dir: &mut PathBuf) -> Result<(), CliError> {
    let cfg = load(args, manifest)?;
    *out_dir = cfg.output.directory.clone();
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        manifest.threads = Some(n);
    }
    if args.command != Command::Selftest && args.command != Command::Stochastic {
        let regime = strata_core::effective::classify_regime(&cfg.scaling())?;
        manifest.regime = Some(regime_record(&regime));
    }
    let mut out = Outputs::new(out_dir, cfg.output.formats);
    let res = dispatch(args.command, &cfg, &mut out);
    manifest.artifacts = out.files;
    res
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut manifest = Manifest::new(args.command);
    let mut out_dir = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let res = execute(&args, &mut manifest, &mut out_dir);
    let code = match &res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("strata: {e}");
            manifest.status = "error";
            manifest.exit_code = e.exit_code();
            manifest.error = Some(e.record());
            e.exit_code()
        }
    };
    if let Err(e) = manifest.write(&out_dir) {
        eprintln!("strata: cannot write manifest to {}: {e}", out_dir.display());
    }
    ExitCode::from(code as u8)
}
