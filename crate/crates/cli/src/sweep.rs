use std::io::Write;

use diqkd::keyrate::{conclusive_prob_from_table, qber_ps_from_table, secure_rate, Efficiencies};
use diqkd::loss::{predict_s_ch, threshold_bob, threshold_symmetric};
use diqkd::optimize::{
    di_threshold_symmetric, optimal_phi_for_rate, optimal_phi_for_violation, rate_vs_eta_curve,
    AngleSearch, RateModel, Scenario, Variant,
};
use diqkd::quantum::{CoincidenceTable, NoiseParams, ProtocolParams};
use diqkd::sim::{simulate, SimConfig, DEFAULT_TEST_PROB};
use rayon::prelude::*;
use serde_json::json;

use crate::args::{Figure, SweepArgs};
use crate::error::{usage, CliError};
use crate::manifest::RunManifest;
use crate::{deg_to_rad, emit, noise_json, phi_for, phi_rule, resolve_noise, Body, Dataset, Format, PhiRule};

const DEFAULT_THETA_STEP_DEG: f64 = 0.5;
const DEFAULT_ETA_STEP: f64 = 0.01;
const ETA_AXIS_START: f64 = 0.5;
const DEFAULT_SIM_PAIRS: u64 = 1_000_000;

/// Number of equal steps of size `step` covering `span`; the step must
/// divide the span.
fn steps(span: f64, step: f64) -> Result<usize, CliError> {
    if !(step > 0.0 && step.is_finite()) {
        return usage(format!("grid step must be positive, got {step}"));
    }
    let n = (span / step).round();
    if n < 1.0 || (n * step - span).abs() > 1e-9 * span.max(1.0) {
        return usage(format!("grid step {step} does not divide {span}"));
    }
    Ok(n as usize)
}

/// `θ` axis in degrees: `step, 2·step, …, 90`.
fn theta_axis(grid: Option<&str>) -> Result<Vec<f64>, CliError> {
    let step = match grid {
        None => DEFAULT_THETA_STEP_DEG,
        Some(g) => {
            let num = g.strip_suffix("deg").unwrap_or(g).trim();
            num.parse::<f64>().map_err(|_| CliError::Usage(format!("bad grid {g:?}")))?
        }
    };
    let n = steps(90.0, step)?;
    Ok((1..=n).map(|i| 90.0 * i as f64 / n as f64).collect())
}

/// `η` axis: `0.5, 0.5 + step, …, 1`.
fn eta_axis(grid: Option<&str>) -> Result<Vec<f64>, CliError> {
    let step = match grid {
        None => DEFAULT_ETA_STEP,
        Some(g) if g.ends_with("deg") => return usage("figure 4 has an efficiency axis; give --grid without a unit"),
        Some(g) => g.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad grid {g:?}")))?,
    };
    let span = 1.0 - ETA_AXIS_START;
    let n = steps(span, step)?;
    Ok((0..=n).map(|i| ETA_AXIS_START + span * i as f64 / n as f64).collect())
}

pub(crate) fn run(a: &SweepArgs, argv: &[String], stdout: &mut dyn Write) -> Result<(), CliError> {
    let (ds, params, seed) = match a.figure {
        Figure::Rates => rates(a)?,
        Figure::Trusted => trusted(a)?,
        Figure::RateVsEfficiency => rate_vs_efficiency(a)?,
        Figure::Thresholds => thresholds(a)?,
    };
    let manifest = RunManifest::new("sweep", argv, params, seed);
    emit(&a.output, Format::Csv, manifest, Body::Table(ds), &[], stdout)
}

type Sweep = (Dataset, serde_json::Value, Option<u64>);

fn per_theta<F>(thetas: &[f64], row: F) -> Vec<Vec<f64>>
where
    F: Fn(f64) -> Vec<f64> + Sync,
{
    thetas.par_iter().map(|&d| row(d)).collect()
}

/// Trusted-device rates for `φ = θ`, `φ = arctan sin θ` and the rate-optimal `φ`.
fn rates(a: &SweepArgs) -> Result<Sweep, CliError> {
    let thetas = theta_axis(a.grid.as_deref())?;
    let noise = resolve_noise(&a.noise, NoiseParams::NONE)?;
    let model = RateModel::new(noise);
    let one = Efficiencies::PERFECT;
    let mut ds = Dataset::new("fig1", &["theta_deg", "r_entB92", "r_maxviol", "r_optimized"]);
    for row in per_theta(&thetas, |deg| {
        let t = deg_to_rad(deg);
        let best = optimal_phi_for_rate(t, one, noise);
        vec![deg, model.rate(t, t, one), model.rate(t, optimal_phi_for_violation(t), one), model.rate(t, best, one)]
    }) {
        ds.push(row);
    }
    let params = json!({ "figure": 1, "theta_step_deg": 90.0 / thetas.len() as f64, "noise": noise_json(noise) });
    Ok((ds, params, None))
}

/// CH value and rate with trusted devices, pure and noisy, for both `φ` rules.
fn trusted(a: &SweepArgs) -> Result<Sweep, CliError> {
    let thetas = theta_axis(a.grid.as_deref())?;
    let noise = resolve_noise(&a.noise, NoiseParams::EXPERIMENTAL)?;
    let models = [RateModel::new(NoiseParams::NONE), RateModel::new(noise)];
    let one = Efficiencies::PERFECT;
    let mut ds = Dataset::new(
        "fig3",
        &[
            "theta_deg",
            "s_entB92_pure",
            "s_entB92_noisy",
            "s_maxviol_pure",
            "s_maxviol_noisy",
            "r_entB92_pure",
            "r_entB92_noisy",
            "r_maxviol_pure",
            "r_maxviol_noisy",
        ],
    );
    for row in per_theta(&thetas, |deg| {
        let t = deg_to_rad(deg);
        let phis = [t, optimal_phi_for_violation(t)];
        let mut row = vec![deg];
        for &phi in &phis {
            for m in &models {
                row.push(m.table(t, phi).map(|tb| predict_s_ch(&tb, one)).unwrap_or(f64::NAN));
            }
        }
        for &phi in &phis {
            for m in &models {
                row.push(m.rate(t, phi, one));
            }
        }
        row
    }) {
        ds.push(row);
    }
    let params = json!({ "figure": 3, "theta_step_deg": 90.0 / thetas.len() as f64, "noise": noise_json(noise) });
    Ok((ds, params, None))
}

fn rate_from_table(table: &CoincidenceTable, eff: Efficiencies) -> f64 {
    qber_ps_from_table(table)
        .and_then(|q| secure_rate(conclusive_prob_from_table(table), eff, predict_s_ch(table, eff), q))
        .unwrap_or(f64::NAN)
}

/// Optimized rate against efficiency, full-DI and one-sided, pure and noisy,
/// plus rates projected from one simulated lossless run of the noisy state.
fn rate_vs_efficiency(a: &SweepArgs) -> Result<Sweep, CliError> {
    let etas = eta_axis(a.grid.as_deref())?;
    let noise = resolve_noise(&a.noise, NoiseParams::EXPERIMENTAL)?;
    let search = AngleSearch::default();

    // angles of the simulated run: given, or those reaching the noisy full-DI threshold
    let (theta, phi) = match (a.angles.theta, phi_rule(&a.angles)) {
        (Some(deg), Some(rule)) => {
            let t = deg_to_rad(deg);
            (t, phi_for(&a.angles, rule, t))
        }
        (None, None) => {
            let th = di_threshold_symmetric(noise)?;
            (th.theta, th.phi)
        }
        _ => return usage("give both --theta and a φ rule for the simulated column, or neither"),
    };
    let n_pairs = a.n.unwrap_or(DEFAULT_SIM_PAIRS);
    if n_pairs == 0 {
        return usage("--n must be at least 1");
    }
    let seed = a.seed.unwrap_or(0);
    let sim = simulate(&SimConfig {
        params: ProtocolParams::new(theta, phi, DEFAULT_TEST_PROB).map_err(|e| CliError::Usage(e.to_string()))?,
        noise,
        eff: Efficiencies::PERFECT,
        n_pairs,
        seed,
    })?;
    let table = sim.coincidence_table()?;

    let mut curves = Vec::new();
    for scenario in [Scenario::FullDi, Scenario::OneSidedDi] {
        for variant in [Variant::Generalized, Variant::EntB92] {
            for n in [NoiseParams::NONE, noise] {
                curves.push(rate_vs_eta_curve(scenario, variant, n, &etas, search));
            }
        }
    }
    let mut ds = Dataset::new(
        "fig4",
        &[
            "eta",
            "r_fulldi_gen_pure",
            "r_fulldi_gen_noisy",
            "r_fulldi_entB92_pure",
            "r_fulldi_entB92_noisy",
            "r_sdi_gen_pure",
            "r_sdi_gen_noisy",
            "r_sdi_entB92_pure",
            "r_sdi_entB92_noisy",
            "r_fulldi_sim",
            "r_sdi_sim",
        ],
    );
    for (i, &eta) in etas.iter().enumerate() {
        let mut row = vec![eta];
        row.extend(curves.iter().map(|c| c[i].rate));
        row.push(rate_from_table(&table, Scenario::FullDi.efficiencies(eta)));
        row.push(rate_from_table(&table, Scenario::OneSidedDi.efficiencies(eta)));
        ds.push(row);
    }
    let params = json!({
        "figure": 4,
        "eta_axis": [etas[0], etas[etas.len() - 1], etas.len()],
        "noise": noise_json(noise),
        "sim": { "theta_deg": theta.to_degrees(), "phi_deg": phi.to_degrees(), "n_pairs": n_pairs, "seed": seed },
    });
    Ok((ds, params, Some(seed)))
}

/// Bell-violation thresholds against `θ`; `φ` follows the flags, by default
/// `arctan sin θ` (so the 90° row is the maximally entangled reference).
fn thresholds(a: &SweepArgs) -> Result<Sweep, CliError> {
    let thetas = theta_axis(a.grid.as_deref())?;
    let noise = resolve_noise(&a.noise, NoiseParams::EXPERIMENTAL)?;
    let rule = phi_rule(&a.angles).unwrap_or(PhiRule::MaxViolation);
    let models = [RateModel::new(NoiseParams::NONE), RateModel::new(noise)];
    let mut ds = Dataset::new(
        "fig5",
        &["theta_deg", "phi_deg", "eta_th_pure", "eta_th_noisy", "eta_b_th_pure", "eta_b_th_noisy"],
    );
    for row in per_theta(&thetas, |deg| {
        let t = deg_to_rad(deg);
        let phi = phi_for(&a.angles, rule, t);
        let mut row = vec![deg, phi.to_degrees()];
        for f in [threshold_symmetric, threshold_bob] {
            for m in &models {
                row.push(m.table(t, phi).and_then(|tb| f(&tb)).unwrap_or(f64::NAN));
            }
        }
        row
    }) {
        ds.push(row);
    }
    let phi_rule_name = match rule {
        PhiRule::Fixed => "fixed",
        PhiRule::EqualsTheta => "equals-theta",
        PhiRule::MaxViolation => "maxviol",
    };
    let params = json!({
        "figure": 5,
        "theta_step_deg": 90.0 / thetas.len() as f64,
        "phi_rule": phi_rule_name,
        "phi_deg": a.angles.phi,
        "noise": noise_json(noise),
    });
    Ok((ds, params, None))
}
