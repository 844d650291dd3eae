use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::Format;

/// Key rates, thresholds and simulations for the generalized ent-B92
/// DI-QKD protocol. Angles are in degrees.
#[derive(Debug, Parser)]
#[command(name = "diqkd", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit the data behind one of the rate/threshold figures.
    Sweep(SweepArgs),
    /// Headline optimizations: threshold efficiencies and optimal angles.
    Optimize(OptimizeArgs),
    /// Event-level Monte Carlo run with estimates and analytic references.
    Simulate(SimulateArgs),
    /// Bell-violation threshold efficiencies at one parameter point.
    Thresholds(ThresholdsArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AngleArgs {
    /// State angle θ in degrees, 0 < θ ≤ 90.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Bob's angle φ in degrees.
    #[arg(long, conflicts_with_all = ["phi_equals_theta", "phi_maxviol"])]
    pub phi: Option<f64>,
    /// Set φ = θ (original ent-B92).
    #[arg(long, conflicts_with = "phi_maxviol")]
    pub phi_equals_theta: bool,
    /// Set φ = arctan(sin θ), the maximal-violation angle.
    #[arg(long)]
    pub phi_maxviol: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EffArgs {
    /// Common detection efficiency of Alice and Bob.
    #[arg(long, conflicts_with_all = ["eta_a", "eta_b"])]
    pub eta: Option<f64>,
    #[arg(long)]
    pub eta_a: Option<f64>,
    #[arg(long)]
    pub eta_b: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NoiseArgs {
    /// Colored-noise weight p_c.
    #[arg(long)]
    pub pc: Option<f64>,
    /// White-noise weight p_w.
    #[arg(long)]
    pub pw: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Output file; stdout when absent. A manifest is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Figure {
    #[value(name = "1")]
    Rates,
    #[value(name = "3")]
    Trusted,
    #[value(name = "4")]
    RateVsEfficiency,
    #[value(name = "5")]
    Thresholds,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub figure: Figure,
    /// Grid step: degrees for θ axes (e.g. `0.1deg`), plain number for η axes.
    #[arg(long)]
    pub grid: Option<String>,
    #[command(flatten)]
    pub angles: AngleArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Pairs for the simulated column of figure 4.
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    DiThreshold,
    SdiThreshold,
    BestTheta,
    Crossover,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimizeArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub angles: AngleArgs,
    #[command(flatten)]
    pub eff: EffArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Number of emitted pairs.
    #[arg(long)]
    pub n: Option<u64>,
    /// RNG seed; 0 when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Probability of Alice's test basis.
    #[arg(long)]
    pub test_prob: Option<f64>,
    /// Also write per-basis-pair counts to this CSV file.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ThresholdsArgs {
    #[command(flatten)]
    pub angles: AngleArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}
