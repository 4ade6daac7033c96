use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lattice_fermi_cli::config::{Config, OUTPUT_DIR_ENV};
use lattice_fermi_cli::{output_path, run, CliError, Command};

/// Fermi-surface geometry, oscillatory decay and resolvent norm scans for the
/// discrete Laplacian on Z^3.
#[derive(Debug, Parser)]
#[command(name = "lfermi", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// band-i, band-iii, umbilic or near-threshold.
    #[arg(long)]
    preset: Option<String>,
    /// auto, umbilic, special-axis, generic, locus:<i> or x1,x2,x3.
    #[arg(long)]
    at: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    budget: Option<String>,
    /// json or csv.
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    /// Exit 1 when a check reported by the command fails.
    #[arg(long)]
    strict: bool,
}

fn build_config(args: &Args) -> Result<Config, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
            Config::parse(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        }
        None => Config::default(),
    };
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        cfg.set("output_dir", &dir)?;
    }
    let mut flags = Config::default();
    for pair in &args.set {
        flags.set_pair(pair)?;
    }
    let named = [
        ("lambda", &args.lambda),
        ("preset", &args.preset),
        ("at", &args.at),
        ("seed", &args.seed),
        ("budget", &args.budget),
        ("output", &args.output),
        ("output_dir", &args.output_dir),
        ("threads", &args.threads),
    ];
    for (key, value) in named {
        if let Some(v) = value {
            flags.set(key, v)?;
        }
    }
    if args.strict {
        flags.set("strict", "true")?;
    }
    cfg.merge(&flags);
    Ok(cfg)
}

fn execute(args: &Args) -> Result<i32, CliError> {
    let cfg = build_config(args)?;
    let threads = cfg.usize("threads");
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::internal(e.to_string()))?;
    }
    let rendered = run(args.command, &cfg)?;
    if let Some(path) = output_path(args.command, &cfg, rendered.extension) {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::internal(format!("{}: {e}", dir.display())))?;
        }
        std::fs::write(&path, &rendered.text).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))?;
    }
    std::io::stdout()
        .write_all(rendered.text.as_bytes())
        .map_err(|e| CliError::internal(e.to_string()))?;
    if let Some(err) = rendered.stderr {
        eprintln!("{err}");
    }
    Ok(rendered.exit_code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
