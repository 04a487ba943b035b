use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use cokrig::config::{parse_noise_split, validate_config, Command};
use cokrig::run::{run, RunError};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Simulate,
    Fit,
    Predict,
    Validate,
    Diagnose,
}

/// Multivariate spatial simulation, fitting, co-kriging and validation.
#[derive(Debug, Parser)]
#[command(name = "cokrig", version)]
struct Args {
    command: Cmd,
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Measurement-error fraction of each nugget, e.g. `1=0.5,2=0`.
    #[arg(long)]
    noise_split: Option<String>,
}

fn fail(kind: &str, code: u8, messages: &[String]) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "exit": code, "messages": messages });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(v) = std::env::var("COKRIG_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("thread pool: {e}");
                }
            }
            _ => return fail("config", 1, &[format!("COKRIG_THREADS must be a positive integer, got `{v}`")]),
        }
    }
    let args = Args::parse();
    let command = match args.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Fit => Command::Fit,
        Cmd::Predict => Command::Predict,
        Cmd::Validate => Command::Validate,
        Cmd::Diagnose => Command::Diagnose,
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return fail("config", 1, &[format!("cannot read {}: {e}", args.config.display())]),
    };
    let base = args.config.parent().map(PathBuf::from).unwrap_or_default();
    let cfg = match validate_config(&text, Some(command), args.out.as_deref(), &base) {
        Ok(c) => c,
        Err(errs) => {
            if let Some(out) = &args.out {
                let log = format!("config error (exit 1)\n{}\n", errs.join("\n"));
                let _ = std::fs::create_dir_all(out).and_then(|_| std::fs::write(out.join("error.log"), log));
            }
            return fail("config", 1, &errs);
        }
    };
    let split = match &args.noise_split {
        None => None,
        Some(s) => match parse_noise_split(s, cfg.model.as_ref().map_or(1, |m| m.variables)) {
            Ok(v) => Some(v),
            Err(e) => return fail("config", 1, &[e]),
        },
    };
    match run(&cfg, split) {
        Ok(files) => {
            log::info!("wrote {}", files.join(", "));
            ExitCode::SUCCESS
        }
        Err(e @ RunError::Config(_)) | Err(e @ RunError::Core(_)) => fail(e.kind(), e.exit_code() as u8, &e.messages()),
    }
}
