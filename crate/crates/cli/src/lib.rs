//! Batch front-end for the `lattice-fermi` library: subcommands, layered
//! configuration, and deterministic JSON/CSV reports.

pub mod commands;
pub mod config;

use std::fmt;
use std::path::PathBuf;

use clap::ValueEnum;
use serde_json::{json, Value};

use crate::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    CurvatureScan,
    DegenerateLocus,
    Taylor,
    Newton,
    Decay,
    ResolventScan,
    Thresholds,
    HolderTest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CurvatureScan => "curvature-scan",
            Command::DegenerateLocus => "degenerate-locus",
            Command::Taylor => "taylor",
            Command::Newton => "newton",
            Command::Decay => "decay",
            Command::ResolventScan => "resolvent-scan",
            Command::Thresholds => "thresholds",
            Command::HolderTest => "holder-test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration or arguments outside an operation's domain.
    Validation,
    /// A quadrature, panel or grid cap was hit.
    Budget,
    /// Output could not be produced.
    Internal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Validation, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Internal, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Budget => 2,
            _ => 1,
        }
    }

    /// Machine-readable form written to standard error.
    pub fn to_json(&self) -> String {
        let kind = match self.kind {
            ErrorKind::Validation => "validation",
            ErrorKind::Budget => "budget",
            ErrorKind::Internal => "internal",
        };
        json!({ "error": { "kind": kind, "message": self.message } }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<lattice_fermi::Error> for CliError {
    fn from(e: lattice_fermi::Error) -> Self {
        use lattice_fermi::Error as E;
        let kind = match e {
            E::BudgetExceeded { .. } | E::NoConvergence { .. } => ErrorKind::Budget,
            _ => ErrorKind::Validation,
        };
        CliError { kind, message: e.to_string() }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::validation(e.to_string())
    }
}

/// A rendered report and the exit code it implies.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub text: String,
    pub extension: &'static str,
    pub exit_code: i32,
    /// Error JSON for standard error, if any.
    pub stderr: Option<String>,
}

/// Report text: JSON with the effective config and library version, or CSV
/// preceded by `#` lines carrying the same header data.
pub fn render(cmd: Command, cfg: &Config, out: &commands::Outcome) -> Rendered {
    let effective = cfg.effective();
    let strict_fail = cfg.flag("strict") && !out.failed_checks.is_empty();
    let (exit_code, stderr) = if let Some(msg) = &out.partial {
        (2, Some(CliError { kind: ErrorKind::Budget, message: msg.clone() }.to_json()))
    } else if strict_fail {
        (1, Some(CliError::validation(out.failed_checks.join("; ")).to_json()))
    } else {
        (0, None)
    };
    if cfg.raw("output") == "csv" {
        let mut text = format!("# lattice-fermi {} {}\n", lattice_fermi::VERSION, cmd.name());
        for (k, v) in &effective {
            text.push_str(&format!("# {k} = {v}\n"));
        }
        if out.partial.is_some() {
            text.push_str("# partial = true\n");
        }
        text.push_str(&out.csv);
        return Rendered { text, extension: "csv", exit_code, stderr };
    }
    let doc: Value = json!({
        "program": "lattice-fermi",
        "version": lattice_fermi::VERSION,
        "command": cmd.name(),
        "config": effective,
        "partial": out.partial,
        "failed_checks": out.failed_checks,
        "result": out.result,
    });
    let mut text = serde_json::to_string_pretty(&doc).unwrap_or_else(|_| "{}".into());
    text.push('\n');
    Rendered { text, extension: "json", exit_code, stderr }
}

/// Runs a command and renders its report.
pub fn run(cmd: Command, cfg: &Config) -> Result<Rendered, CliError> {
    let out = commands::run_command(cmd, cfg)?;
    Ok(render(cmd, cfg, &out))
}

/// Where the report file goes, if anywhere.
pub fn output_path(cmd: Command, cfg: &Config, extension: &str) -> Option<PathBuf> {
    let dir = cfg.raw("output_dir");
    (!dir.is_empty()).then(|| PathBuf::from(dir).join(format!("{}.{extension}", cmd.name())))
}
