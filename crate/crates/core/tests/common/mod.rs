#![allow(dead_code)]

use diqkd::keyrate::{conclusive_prob_from_table, qber_conclusive, qber_ps_from_table, Efficiencies};
use diqkd::loss::predict_s_ch;
use diqkd::quantum::{NoiseParams, ProtocolParams};
use diqkd::sim::{empirical_s_ch_direct, empirical_s_ch_predicted, simulate, Estimate, SimConfig, SimResult};

pub fn sim_config(theta_deg: f64, phi_deg: f64, eff: (f64, f64), noise: NoiseParams, n: u64, seed: u64) -> SimConfig {
    SimConfig {
        params: ProtocolParams::new(theta_deg.to_radians(), phi_deg.to_radians(), 0.05).unwrap(),
        noise,
        eff: Efficiencies::new(eff.0, eff.1).unwrap(),
        n_pairs: n,
        seed,
    }
}

/// `(hat − truth) / σ` with σ taken from the oracle probability, so that an
/// estimate of exactly 0 or 1 still gets a finite score. A degenerate oracle
/// demands exact agreement.
pub fn binomial_z(hat: f64, truth: f64, trials: u64) -> f64 {
    let var = truth * (1.0 - truth) / trials as f64;
    if var == 0.0 {
        return if hat == truth { 0.0 } else { f64::INFINITY };
    }
    (hat - truth) / var.sqrt()
}

pub fn count_z(count: u64, trials: u64, prob: f64) -> f64 {
    binomial_z(count as f64 / trials as f64, prob, trials)
}

/// Every empirical statistic of a run against its analytic value, as named
/// z-scores.
pub fn z_scores(result: &SimResult) -> Vec<(&'static str, f64)> {
    let cfg = &result.config;
    let t = &result.tally;
    let table = cfg.table().unwrap();
    let p_c = conclusive_prob_from_table(&table);
    let q_ps = qber_ps_from_table(&table).unwrap();
    let q_c = qber_conclusive(q_ps, cfg.eff.eta_a);
    let s = predict_s_ch(&table, cfg.eff);
    let key_basis = 1.0 - cfg.params.test_prob;
    let sifted_p = key_basis * p_c * cfg.eff.eta_b;
    let z_est = |e: Estimate, truth: f64| e.z_score(truth);
    vec![
        ("p_c", binomial_z(result.p_c_hat().unwrap().value, p_c, t.bob_detected)),
        ("q_ps", binomial_z(result.q_ps_hat().unwrap().value, q_ps, t.post_selected)),
        ("q_c", binomial_z(result.q_c_hat().unwrap().value, q_c, t.sifted)),
        ("s_ch_direct", z_est(empirical_s_ch_direct(result).unwrap(), s)),
        ("s_ch_predicted", z_est(empirical_s_ch_predicted(result, cfg.eff).unwrap(), s)),
        ("sifted_len", count_z(result.sifted_len(), t.n_pairs, sifted_p)),
        ("post_selected_len", count_z(result.post_selected_len(), t.n_pairs, sifted_p * cfg.eff.eta_a)),
    ]
}

pub fn run(cfg: &SimConfig) -> SimResult {
    simulate(cfg).unwrap()
}
