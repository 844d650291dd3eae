use std::io::Write;

use diqkd::loss::{bisect_threshold, predict_s_ch, threshold_bob, threshold_symmetric, ThresholdKind};
use diqkd::optimize::{
    best_theta_entb92_trusted, crossover_theta_trusted, di_threshold_symmetric, sdi_threshold_bob, RateModel,
    ThresholdResult,
};
use diqkd::quantum::{NoiseParams, ProtocolParams};
use diqkd::sim::{
    empirical_rates, empirical_s_ch_direct, empirical_s_ch_predicted, simulate as run_sim, ChEstimator, Estimate,
    SimConfig, SimResult, DEFAULT_TEST_PROB,
};
use serde::Serialize;
use serde_json::json;

use crate::args::{Mode, OptimizeArgs, SimulateArgs, ThresholdsArgs};
use crate::error::{usage, CliError};
use crate::manifest::RunManifest;
use crate::{echo_deg, emit, noise_json, point_angles, resolve_eff, resolve_noise, Body, Dataset, Format};

/// Default pair count: enough to resolve a CH value of ~5e-3 at 4σ with the
/// default test-basis probability.
pub const DEFAULT_PAIRS: u64 = 10_000_000;

fn report(
    a_out: &crate::args::OutputArgs,
    command: &str,
    argv: &[String],
    params: serde_json::Value,
    result: serde_json::Value,
    seed: Option<u64>,
    extra: &[std::path::PathBuf],
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let manifest = RunManifest::new(command, argv, params.clone(), seed);
    emit(a_out, Format::Json, manifest, Body::Report { command: command.into(), params, result }, extra, stdout)
}

fn threshold_json(t: &ThresholdResult) -> serde_json::Value {
    json!({
        "threshold": t.threshold,
        "theta_deg": t.theta.to_degrees(),
        "phi_deg": t.phi.to_degrees(),
        "achieved_rate_above": t.achieved_rate_above,
    })
}

pub(crate) fn optimize(a: &OptimizeArgs, argv: &[String], stdout: &mut dyn Write) -> Result<(), CliError> {
    let noise = resolve_noise(&a.noise, NoiseParams::NONE)?;
    let noisy_flags = a.noise.pc.is_some() || a.noise.pw.is_some();
    let result = match a.mode {
        Mode::DiThreshold => threshold_json(&di_threshold_symmetric(noise)?),
        Mode::SdiThreshold => threshold_json(&sdi_threshold_bob(noise)?),
        Mode::BestTheta | Mode::Crossover if noisy_flags => {
            return usage("best-theta and crossover are defined for the noiseless state; drop --pc/--pw")
        }
        Mode::BestTheta => {
            let r = best_theta_entb92_trusted();
            json!({
                "theta_deg": r.best_theta.to_degrees(),
                "rate": r.best_value,
                "iterations": r.iterations,
                "converged": r.converged,
            })
        }
        Mode::Crossover => json!({ "theta_deg": crossover_theta_trusted()?.to_degrees() }),
    };
    let params = json!({ "mode": a.mode, "noise": noise_json(noise) });
    report(&a.output, "optimize", argv, params, result, None, &[], stdout)
}

pub(crate) fn thresholds(a: &ThresholdsArgs, argv: &[String], stdout: &mut dyn Write) -> Result<(), CliError> {
    let (theta, phi) = point_angles(&a.angles)?;
    let noise = resolve_noise(&a.noise, NoiseParams::NONE)?;
    let table = RateModel::new(noise).table(theta, phi)?;
    let sym = threshold_symmetric(&table)?;
    let bob = threshold_bob(&table)?;
    let result = json!({
        "theta_deg": theta.to_degrees(),
        "phi_deg": phi.to_degrees(),
        "lossless_s_ch": predict_s_ch(&table, diqkd::Efficiencies::PERFECT),
        "eta_th": sym,
        "eta_b_th": bob,
        "eta_th_bisection": bisect_threshold(&table, ThresholdKind::Symmetric, 1e-10)?,
        "eta_b_th_bisection": bisect_threshold(&table, ThresholdKind::Bob, 1e-10)?,
    });
    let params = json!({
        "theta_deg": echo_deg(a.angles.theta, theta),
        "phi_deg": echo_deg(a.angles.phi, phi),
        "noise": noise_json(noise),
    });
    report(&a.output, "thresholds", argv, params, result, None, &[], stdout)
}

#[derive(Debug, Serialize)]
struct Statistic {
    value: f64,
    std_err: f64,
    reference: f64,
    z: f64,
}

impl Statistic {
    /// Binomial proportion scored with the reference's own σ, so that an
    /// exact 0 or 1 still gets a finite z.
    fn proportion(hits: u64, trials: u64, reference: f64) -> Option<Self> {
        if trials == 0 {
            return None;
        }
        let value = hits as f64 / trials as f64;
        let std_err = (reference * (1.0 - reference) / trials as f64).sqrt();
        Some(Self { value, std_err, reference, z: score(value, reference, std_err) })
    }

    fn estimate(e: Estimate, reference: f64) -> Self {
        Self { value: e.value, std_err: e.std_err, reference, z: score(e.value, reference, e.std_err) }
    }
}

fn score(value: f64, reference: f64, sigma: f64) -> f64 {
    let d = value - reference;
    if d == 0.0 {
        0.0
    } else {
        d / sigma
    }
}

fn statistics(result: &SimResult) -> Result<serde_json::Value, CliError> {
    let cfg = &result.config;
    let t = &result.tally;
    let table = cfg.table()?;
    let reference = RateModel::new(cfg.noise).report(cfg.params.theta, cfg.params.phi, cfg.eff)?;
    let key_basis = 1.0 - cfg.params.test_prob;
    let sifted_p = key_basis * reference.p_c * cfg.eff.eta_b;
    let s_ref = predict_s_ch(&table, cfg.eff);
    let stats = json!({
        "p_c": Statistic::proportion(t.conclusive, t.bob_detected, reference.p_c),
        "q_ps": Statistic::proportion(t.post_selected_errors, t.post_selected, reference.q_ps),
        "q_c": Statistic::proportion(t.sifted_errors, t.sifted, reference.q_c),
        "s_ch_direct": empirical_s_ch_direct(result).ok().map(|e| Statistic::estimate(e, s_ref)),
        "s_ch_predicted": empirical_s_ch_predicted(result, cfg.eff).ok().map(|e| Statistic::estimate(e, s_ref)),
        "sifted_fraction": Statistic::proportion(t.sifted, t.n_pairs, sifted_p),
        "post_selected_fraction": Statistic::proportion(t.post_selected, t.n_pairs, sifted_p * cfg.eff.eta_a),
    });
    let rates = json!({
        "analytic": reference,
        "empirical_direct": empirical_rates(result, ChEstimator::Direct).ok(),
        "empirical_predicted": empirical_rates(result, ChEstimator::Predicted).ok(),
    });
    let counts = json!({
        "n_pairs": t.n_pairs,
        "bob_detected": t.bob_detected,
        "conclusive": t.conclusive,
        "sifted": t.sifted,
        "sifted_errors": t.sifted_errors,
        "post_selected": t.post_selected,
        "post_selected_errors": t.post_selected_errors,
    });
    Ok(json!({ "counts": counts, "statistics": stats, "rates": rates }))
}

fn counts_dataset(result: &SimResult) -> Dataset {
    let mut ds = Dataset::new(
        "counts",
        &["alice_basis", "bob_basis", "alice_bar", "bob_bar", "assigned", "coincidences"],
    );
    let t = &result.tally;
    for i in 0..2 {
        for j in 0..2 {
            for x in 0..2 {
                for y in 0..2 {
                    ds.push(vec![
                        i as f64,
                        j as f64,
                        x as f64,
                        y as f64,
                        t.assigned[i][j][x][y] as f64,
                        t.coincidences[i][j][x][y] as f64,
                    ]);
                }
            }
        }
    }
    ds
}

pub(crate) fn simulate(a: &SimulateArgs, argv: &[String], stdout: &mut dyn Write) -> Result<(), CliError> {
    let (theta, phi) = point_angles(&a.angles)?;
    let eff = resolve_eff(&a.eff)?;
    let noise = resolve_noise(&a.noise, NoiseParams::NONE)?;
    let n_pairs = a.n.unwrap_or(DEFAULT_PAIRS);
    if n_pairs == 0 {
        return usage("--n must be at least 1");
    }
    let seed = a.seed.unwrap_or(0);
    let test_prob = a.test_prob.unwrap_or(DEFAULT_TEST_PROB);
    let params = ProtocolParams::new(theta, phi, test_prob).map_err(|e| CliError::Usage(e.to_string()))?;
    let config = SimConfig { params, noise, eff, n_pairs, seed };
    let result = run_sim(&config)?;

    let mut extra = Vec::new();
    if let Some(path) = &a.counts {
        let mut bytes = Vec::new();
        counts_dataset(&result).write_csv(&mut bytes)?;
        std::fs::write(path, bytes)?;
        extra.push(path.clone());
    }
    let params = json!({
        "theta_deg": echo_deg(a.angles.theta, theta),
        "phi_deg": echo_deg(a.angles.phi, phi),
        "test_prob": test_prob,
        "eta_a": eff.eta_a,
        "eta_b": eff.eta_b,
        "noise": noise_json(noise),
        "n_pairs": n_pairs,
        "seed": seed,
    });
    report(&a.output, "simulate", argv, params, statistics(&result)?, Some(seed), &extra, stdout)
}
