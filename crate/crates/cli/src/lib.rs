//! Command-line front end for the `diqkd` engine.
//!
//! Every command produces either a [`Dataset`] (sweeps) or a JSON
//! [`Report`]. With `--out`, a [`RunManifest`] sidecar records the argv and
//! the sha256 of each file written; re-running that argv reproduces the
//! files byte for byte.

pub mod args;
pub mod dataset;
pub mod error;
pub mod manifest;
mod point;
mod sweep;

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use diqkd::keyrate::Efficiencies;
use diqkd::optimize::optimal_phi_for_violation;
use diqkd::quantum::NoiseParams;
use serde::{Deserialize, Serialize};

use args::{AngleArgs, Cli, Command, EffArgs, NoiseArgs, OutputArgs};
pub use dataset::{Dataset, Format};
pub use error::CliError;
pub use manifest::RunManifest;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// JSON document written by `optimize`, `simulate` and `thresholds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub params: serde_json::Value,
    pub result: serde_json::Value,
    pub manifest: RunManifest,
}

impl Report {
    pub fn read_path(path: &Path) -> anyhow::Result<Self> {
        let report: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            anyhow::bail!("unsupported report schema version {}", report.schema_version);
        }
        Ok(report)
    }

    /// Numeric leaves of `result` as a one-row table, keys joined by `.`.
    pub fn to_dataset(&self) -> Dataset {
        let mut cols = Vec::new();
        flatten("", &self.result, &mut cols);
        let names: Vec<&str> = cols.iter().map(|(k, _)| k.as_str()).collect();
        let mut ds = Dataset::new(&self.command, &names);
        ds.push(cols.iter().map(|(_, v)| *v).collect());
        ds
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, f64)>) {
    use serde_json::Value;
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(items) => items.iter().enumerate().for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        Value::Number(n) => out.push((prefix.to_string(), n.as_f64().unwrap_or(f64::NAN))),
        Value::Bool(b) => out.push((prefix.to_string(), *b as u8 as f64)),
        Value::Null => out.push((prefix.to_string(), f64::NAN)),
        Value::String(_) => {}
    }
}

/// Parses `argv` (without the program name) and runs the command, writing
/// to `stdout` when no `--out` is given.
pub fn run_args(argv: &[String], stdout: &mut dyn Write) -> Result<(), CliError> {
    let cli = Cli::try_parse_from(std::iter::once("diqkd".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli, argv, stdout)
}

pub fn run(cli: Cli, argv: &[String], stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Sweep(a) => sweep::run(&a, argv, stdout),
        Command::Optimize(a) => point::optimize(&a, argv, stdout),
        Command::Simulate(a) => point::simulate(&a, argv, stdout),
        Command::Thresholds(a) => point::thresholds(&a, argv, stdout),
    }
}

/// Rayon pool size from `DIQKD_THREADS`, if set.
pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("DIQKD_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => error::usage(format!("DIQKD_THREADS must be a positive integer, got {s:?}")),
        },
        Err(_) => Ok(None),
    }
}

// --- parameter resolution ----------------------------------------------

fn invalid(e: diqkd::Error) -> CliError {
    CliError::Usage(e.to_string())
}

pub(crate) fn deg_to_rad(deg: f64) -> f64 {
    // keep 90° exactly on the domain edge
    if (deg - 90.0).abs() < 1e-12 {
        FRAC_PI_2
    } else {
        deg.to_radians()
    }
}

pub(crate) fn resolve_noise(a: &NoiseArgs, default: NoiseParams) -> Result<NoiseParams, CliError> {
    NoiseParams::new(a.pc.unwrap_or(default.colored), a.pw.unwrap_or(default.white)).map_err(invalid)
}

pub(crate) fn resolve_eff(a: &EffArgs) -> Result<Efficiencies, CliError> {
    match a.eta {
        Some(eta) => Efficiencies::symmetric(eta),
        None => Efficiencies::new(a.eta_a.unwrap_or(1.0), a.eta_b.unwrap_or(1.0)),
    }
    .map_err(invalid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PhiRule {
    Fixed,
    EqualsTheta,
    MaxViolation,
}

pub(crate) fn phi_rule(a: &AngleArgs) -> Option<PhiRule> {
    if a.phi.is_some() {
        Some(PhiRule::Fixed)
    } else if a.phi_equals_theta {
        Some(PhiRule::EqualsTheta)
    } else if a.phi_maxviol {
        Some(PhiRule::MaxViolation)
    } else {
        None
    }
}

/// `φ` in radians for state angle `theta` (radians).
pub(crate) fn phi_for(a: &AngleArgs, rule: PhiRule, theta: f64) -> f64 {
    match rule {
        PhiRule::Fixed => deg_to_rad(a.phi.unwrap_or(0.0)),
        PhiRule::EqualsTheta => theta,
        PhiRule::MaxViolation => optimal_phi_for_violation(theta),
    }
}

/// Degrees of `angle` (radians), echoing the flag value when one was given.
pub(crate) fn echo_deg(flag: Option<f64>, angle: f64) -> f64 {
    flag.unwrap_or_else(|| angle.to_degrees())
}

/// `(θ, φ)` in radians for single-point commands, which need both.
pub(crate) fn point_angles(a: &AngleArgs) -> Result<(f64, f64), CliError> {
    let Some(theta_deg) = a.theta else {
        return error::usage("--theta is required");
    };
    let Some(rule) = phi_rule(a) else {
        return error::usage("one of --phi, --phi-equals-theta, --phi-maxviol is required");
    };
    let theta = deg_to_rad(theta_deg);
    let phi = phi_for(a, rule, theta);
    diqkd::ProtocolParams::new(theta, phi, 0.0).map_err(invalid)?;
    Ok((theta, phi))
}

// --- emission ------------------------------------------------------------

pub(crate) fn noise_json(n: NoiseParams) -> serde_json::Value {
    serde_json::json!({ "pc": n.colored, "pw": n.white })
}

pub(crate) enum Body {
    Table(Dataset),
    Report { command: String, params: serde_json::Value, result: serde_json::Value },
}

/// Writes the body to `--out` (plus sidecar manifest) or to stdout.
/// `extra` lists side files already written by the command.
pub(crate) fn emit(
    out: &OutputArgs,
    default_format: Format,
    mut manifest: RunManifest,
    body: Body,
    extra: &[PathBuf],
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let format = out.format.unwrap_or(default_format);
    let mut bytes = Vec::new();
    match body {
        Body::Table(ds) => ds.write(format, &mut bytes)?,
        Body::Report { command, params, result } => {
            let report = Report {
                schema_version: REPORT_SCHEMA_VERSION,
                command,
                params,
                result,
                manifest: manifest.clone(),
            };
            match format {
                Format::Json => {
                    serde_json::to_writer_pretty(&mut bytes, &report)?;
                    bytes.push(b'\n');
                }
                Format::Csv => report.to_dataset().write_csv(&mut bytes)?,
            }
        }
    }
    match &out.out {
        Some(path) => {
            std::fs::write(path, &bytes)?;
            manifest.record_output(path)?;
            for p in extra {
                manifest.record_output(p)?;
            }
            let mut text = serde_json::to_vec_pretty(&manifest)?;
            text.push(b'\n');
            std::fs::write(manifest::sidecar_path(path), text)?;
        }
        None => stdout.write_all(&bytes)?,
    }
    Ok(())
}
