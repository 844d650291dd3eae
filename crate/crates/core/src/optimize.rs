//! Angle optimization and threshold-efficiency searches.
//!
//! Everything here is derivative-free: a deterministic grid locates the basin
//! and golden-section search refines it. The rate surface has kinks where
//! the radicand of `f` vanishes and where the rate changes sign, so gradients
//! are not trusted.
//!
//! Grid evaluations run in parallel but are collected in index order, and
//! ties always resolve to the smaller angle, so results do not depend on the
//! thread count.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyrate::{
    conclusive_prob_from_table, min_ch_for_positive_rate, qber_ps_from_table, secure_rate,
    Efficiencies, RateReport,
};
use crate::loss::{predict_s_ch, ChCoefficients};
use crate::quantum::{coincidence_probs, make_state, noisy_state, CoincidenceTable, NoiseParams};

/// Smallest admissible θ on search grids.
pub const THETA_NUDGE: f64 = 1e-9;
pub const ANGLE_TOL: f64 = 1e-8;
pub const ETA_TOL: f64 = 1e-5;
/// Offset used to probe both sides of a reported threshold.
pub const THRESHOLD_PROBE: f64 = 1e-4;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_theta: f64,
    pub best_phi: f64,
    pub best_value: f64,
    /// Objective evaluations spent.
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    pub theta: f64,
    pub phi: f64,
    /// Optimized rate at `threshold + THRESHOLD_PROBE`.
    pub achieved_rate_above: f64,
}

/// How Bob's angle is tied to the state angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Original ent-B92: `φ = θ`.
    EntB92,
    /// `φ = arctan(sin θ)`, the maximal-violation choice.
    MaxViolation,
    /// `θ` and `φ` optimized independently.
    Generalized,
}

/// Which parties are untrusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Both devices untrusted, `η_A = η_B = η`.
    FullDi,
    /// Alice trusted, `η_A = 1`, `η_B = η`.
    OneSidedDi,
}

impl Scenario {
    pub fn efficiencies(self, eta: f64) -> Efficiencies {
        match self {
            Self::FullDi => Efficiencies { eta_a: eta, eta_b: eta },
            Self::OneSidedDi => Efficiencies { eta_a: 1.0, eta_b: eta },
        }
    }
}

/// Rates for the protocol state under a fixed noise model. `P_c`, `Q^ps` and
/// the CH value all come from the Born table of the (possibly noisy) state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateModel {
    pub noise: NoiseParams,
}

impl RateModel {
    pub fn new(noise: NoiseParams) -> Self {
        Self { noise }
    }

    pub fn table(&self, theta: f64, phi: f64) -> Result<CoincidenceTable> {
        let state = if self.noise.is_noiseless() {
            make_state(theta)?
        } else {
            noisy_state(theta, self.noise)?
        };
        Ok(coincidence_probs(&state, phi))
    }

    pub fn report(&self, theta: f64, phi: f64, eff: Efficiencies) -> Result<RateReport> {
        let table = self.table(theta, phi)?;
        RateReport::evaluate(
            conclusive_prob_from_table(&table),
            qber_ps_from_table(&table)?,
            predict_s_ch(&table, eff),
            eff,
        )
    }

    /// Post-selected rate; points outside the model's domain score `-inf`.
    pub fn rate(&self, theta: f64, phi: f64, eff: Efficiencies) -> f64 {
        self.table(theta, phi)
            .and_then(|t| {
                secure_rate(
                    conclusive_prob_from_table(&t),
                    eff,
                    predict_s_ch(&t, eff),
                    qber_ps_from_table(&t)?,
                )
            })
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn rate_variant(&self, variant: Variant, theta: f64, phi: f64, eff: Efficiencies) -> f64 {
        match variant {
            Variant::EntB92 => self.rate(theta, theta, eff),
            Variant::MaxViolation => self.rate(theta, optimal_phi_for_violation(theta), eff),
            Variant::Generalized => self.rate(theta, phi, eff),
        }
    }
}

/// Golden-section maximization on `[lo, hi]`. Returns `(x, f(x), evals)`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64, usize) {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let mut evals = 2;
    while hi - lo > tol {
        // ties move right-to-left so flat regions settle on the smaller angle
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        }
        evals += 1;
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x);
    let best = [(x1, f1), (x, fx), (x2, f2)]
        .into_iter()
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
    (best.0, best.1, evals + 1)
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if flo.signum() == fhi.signum() {
        return Err(Error::Bracket(format!("f({lo}) = {flo}, f({hi}) = {fhi}")));
    }
    let rising = fhi > flo;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Grid scan followed by golden refinement around the best grid point.
/// Ties keep the smaller argument.
pub fn maximize_1d<F>(f: F, lo: f64, hi: f64, step: f64, tol: f64) -> OptimizationResult
where
    F: Fn(f64) -> f64 + Sync,
{
    let n = ((hi - lo) / step).ceil() as usize;
    let xs: Vec<f64> = (0..=n).map(|i| (lo + i as f64 * step).min(hi)).collect();
    let values: Vec<f64> = xs.par_iter().map(|&x| f(x)).collect();
    let (best_i, best_v) = argmax(&values);
    let a = (xs[best_i] - step).max(lo);
    let b = (xs[best_i] + step).min(hi);
    let (x, v, evals) = golden_max(&f, a, b, tol);
    let (x, v) = if v > best_v { (x, v) } else { (xs[best_i], best_v) };
    OptimizationResult {
        best_theta: x,
        best_phi: x,
        best_value: v,
        iterations: values.len() + evals,
        converged: true,
    }
}

fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
}

/// `φ = arctan(sin θ)`, the angle of maximal CH violation.
pub fn optimal_phi_for_violation(theta: f64) -> f64 {
    theta.sin().atan()
}

/// Bob's angle maximizing the post-selected rate at fixed `θ`: a 1e-3 rad
/// grid over `[0, π/2]` refined by golden section to 1e-8 rad.
pub fn optimal_phi_for_rate(theta: f64, eff: Efficiencies, noise: NoiseParams) -> f64 {
    let model = RateModel::new(noise);
    maximize_1d(|phi| model.rate(theta, phi, eff), 0.0, FRAC_PI_2, 1e-3, ANGLE_TOL).best_phi
}

/// Settings for the two-dimensional angle search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleSearch {
    pub grid: usize,
    pub starts: usize,
    pub tol: f64,
}

impl Default for AngleSearch {
    fn default() -> Self {
        Self { grid: 60, starts: 4, tol: ANGLE_TOL }
    }
}

impl AngleSearch {
    fn theta_grid(&self) -> Vec<f64> {
        linspace(THETA_NUDGE, FRAC_PI_2, self.grid)
    }

    fn phi_grid(&self) -> Vec<f64> {
        linspace(0.0, FRAC_PI_2, self.grid)
    }

    fn step(&self) -> f64 {
        FRAC_PI_2 / (self.grid - 1) as f64
    }
}

/// `n ≥ 2` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Maximizes `rate(θ, φ)` over the angle square.
///
/// Multi-start: the best grid points (plus any caller-supplied starts) are
/// refined by nested coordinate-wise golden search, the outer search over
/// `θ` in a window of one grid step and the inner one over `φ` in a window
/// of three steps around the start.
pub fn maximize_angles<F>(rate: F, search: AngleSearch, extra_starts: &[(f64, f64)]) -> OptimizationResult
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let thetas = search.theta_grid();
    let phis = search.phi_grid();
    let values: Vec<f64> = (0..thetas.len() * phis.len())
        .into_par_iter()
        .map(|k| rate(thetas[k / phis.len()], phis[k % phis.len()]))
        .collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let mut starts: Vec<(f64, f64, f64)> = order
        .iter()
        .take(search.starts)
        .map(|&k| (thetas[k / phis.len()], phis[k % phis.len()], values[k]))
        .collect();
    starts.extend(extra_starts.iter().map(|&(t, p)| (t, p, rate(t, p))));

    let step = search.step();
    let refined: Vec<(f64, f64, f64, usize)> = starts
        .par_iter()
        .map(|&(t0, p0, v0)| {
            let mut evals = 0;
            let inner = |theta: f64| {
                let (phi, v, n) = golden_max(
                    |phi| rate(theta, phi),
                    (p0 - 3.0 * step).max(0.0),
                    (p0 + 3.0 * step).min(FRAC_PI_2),
                    search.tol,
                );
                (phi, v, n)
            };
            let (theta, _, n_outer) = golden_max(
                |theta| inner(theta).1,
                (t0 - step).max(THETA_NUDGE),
                (t0 + step).min(FRAC_PI_2),
                search.tol,
            );
            let (phi, v, n_inner) = inner(theta);
            evals += n_outer * n_inner + n_inner;
            if v > v0 {
                (theta, phi, v, evals)
            } else {
                (t0, p0, v0, evals)
            }
        })
        .collect();

    let evals: usize = values.len() + refined.iter().map(|r| r.3).sum::<usize>();
    let best = refined.iter().fold(refined[0], |acc, &c| {
        let better = c.2 > acc.2 || (c.2 == acc.2 && (c.0, c.1) < (acc.0, acc.1));
        if better {
            c
        } else {
            acc
        }
    });
    OptimizationResult {
        best_theta: best.0,
        best_phi: best.1,
        best_value: best.2,
        iterations: evals,
        converged: true,
    }
}

/// Best rate for one protocol variant at fixed efficiencies.
pub fn optimize_rate(
    model: &RateModel,
    variant: Variant,
    eff: Efficiencies,
    search: AngleSearch,
) -> OptimizationResult {
    let one_dim = |v: Variant| {
        let mut res = maximize_1d(
            |theta| model.rate_variant(v, theta, 0.0, eff),
            THETA_NUDGE,
            FRAC_PI_2,
            FRAC_PI_2 / (4 * search.grid) as f64,
            search.tol,
        );
        res.best_phi = match v {
            Variant::EntB92 => res.best_theta,
            _ => optimal_phi_for_violation(res.best_theta),
        };
        res
    };
    match variant {
        Variant::EntB92 | Variant::MaxViolation => one_dim(variant),
        Variant::Generalized => {
            let diag = one_dim(Variant::EntB92);
            let viol = one_dim(Variant::MaxViolation);
            let mut res = maximize_angles(
                |t, p| model.rate(t, p, eff),
                search,
                &[(diag.best_theta, diag.best_phi), (viol.best_theta, viol.best_phi)],
            );
            res.iterations += diag.iterations + viol.iterations;
            res
        }
    }
}

/// Trusted devices, noiseless state, `φ = θ`: the `θ` of maximal rate.
pub fn best_theta_entb92_trusted() -> OptimizationResult {
    let model = RateModel::default();
    maximize_1d(
        |theta| model.rate(theta, theta, Efficiencies::PERFECT),
        THETA_NUDGE,
        FRAC_PI_2,
        1e-3,
        ANGLE_TOL,
    )
}

/// `r(θ, arctan sin θ) − r(θ, θ)` at unit efficiency on the noiseless state.
pub fn crossover_gap(theta: f64) -> f64 {
    let model = RateModel::default();
    model.rate(theta, optimal_phi_for_violation(theta), Efficiencies::PERFECT)
        - model.rate(theta, theta, Efficiencies::PERFECT)
}

/// State angle above which the maximal-violation choice of `φ` beats
/// `φ = θ` with trusted devices; bisection on `[60°, 80°]`.
pub fn crossover_theta_trusted() -> Result<f64> {
    bisect_root(crossover_gap, 60f64.to_radians(), 80f64.to_radians(), ANGLE_TOL)
}

/// Lowest efficiency with a positive optimized rate, by outer bisection on
/// `η` over `[eta_lo, 1]`.
pub fn rate_threshold(
    noise: NoiseParams,
    scenario: Scenario,
    variant: Variant,
    search: AngleSearch,
    eta_lo: f64,
) -> Result<ThresholdResult> {
    let model = RateModel::new(noise);
    let best = |eta: f64| optimize_rate(&model, variant, scenario.efficiencies(eta), search);
    let at_hi = best(1.0);
    if at_hi.best_value <= 0.0 {
        return Err(Error::NoViolation(format!(
            "optimized rate at eta = 1 is {} <= 0",
            at_hi.best_value
        )));
    }
    if best(eta_lo).best_value > 0.0 {
        return Err(Error::Bracket(format!("optimized rate already positive at eta = {eta_lo}")));
    }
    let (mut lo, mut hi) = (eta_lo, 1.0);
    let mut at = at_hi;
    while hi - lo > ETA_TOL {
        let mid = 0.5 * (lo + hi);
        let r = best(mid);
        if r.best_value > 0.0 {
            hi = mid;
            at = r;
        } else {
            lo = mid;
        }
    }
    let above = best((hi + THRESHOLD_PROBE).min(1.0));
    Ok(ThresholdResult {
        threshold: hi,
        theta: at.best_theta,
        phi: at.best_phi,
        achieved_rate_above: above.best_value,
    })
}

/// Full-DI threshold of the generalized protocol (both angles optimized).
pub fn di_threshold_symmetric(noise: NoiseParams) -> Result<ThresholdResult> {
    rate_threshold(noise, Scenario::FullDi, Variant::Generalized, AngleSearch::default(), 0.5)
}

/// Bob's efficiency above which the ent-B92 rate is positive with `η_A = 1`
/// at state angle `θ`. Solved exactly: the rate is positive iff the CH value
/// exceeds the minimum allowed by the QBER, and the CH value is affine in
/// `η_B`. `None` when no `η_B ≤ 1` suffices.
pub fn rate_threshold_bob(model: &RateModel, theta: f64) -> Result<Option<f64>> {
    let table = model.table(theta, theta)?;
    let q = qber_ps_from_table(&table)?;
    let Some(s_min) = min_ch_for_positive_rate(1.0, q)? else {
        return Ok(None);
    };
    let c = ChCoefficients::from_table(&table);
    let slope = c.joint - c.bob;
    if slope <= 0.0 {
        return Ok(None);
    }
    let eta = (s_min + c.alice) / slope;
    Ok((eta <= 1.0).then_some(eta))
}

pub const SDI_THETA_MIN: f64 = 0.5 * std::f64::consts::PI / 180.0;

/// One-sided DI threshold of ent-B92: the smallest Bob efficiency with a
/// positive rate, minimized over `θ ∈ [0.5°, 90°]`.
pub fn sdi_threshold_bob(noise: NoiseParams) -> Result<ThresholdResult> {
    let model = RateModel::new(noise);
    let neg = |theta: f64| match rate_threshold_bob(&model, theta) {
        Ok(Some(eta)) => -eta,
        _ => f64::NEG_INFINITY,
    };
    let res = maximize_1d(neg, SDI_THETA_MIN, FRAC_PI_2, 1e-3, ANGLE_TOL);
    if !res.best_value.is_finite() {
        return Err(Error::NoViolation("no state angle admits a positive 1SDI rate".into()));
    }
    let threshold = -res.best_value;
    let eff = Scenario::OneSidedDi.efficiencies((threshold + THRESHOLD_PROBE).min(1.0));
    Ok(ThresholdResult {
        threshold,
        theta: res.best_theta,
        phi: res.best_theta,
        achieved_rate_above: model.rate(res.best_theta, res.best_theta, eff),
    })
}

/// One point of an optimized rate-versus-efficiency curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub eta: f64,
    pub rate: f64,
    pub theta: f64,
    pub phi: f64,
}

/// Optimized rate at every efficiency of `eta_grid`.
pub fn rate_vs_eta_curve(
    scenario: Scenario,
    variant: Variant,
    noise: NoiseParams,
    eta_grid: &[f64],
    search: AngleSearch,
) -> Vec<CurvePoint> {
    let model = RateModel::new(noise);
    eta_grid
        .par_iter()
        .map(|&eta| {
            let r = optimize_rate(&model, variant, scenario.efficiencies(eta), search);
            CurvePoint { eta, rate: r.best_value, theta: r.best_theta, phi: r.best_phi }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};

    #[test]
    fn golden_finds_parabola_max() {
        let (x, v, _) = golden_max(|x| -(x - 0.3).powi(2), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn golden_prefers_left_on_flat_plateau() {
        let (x, _, _) = golden_max(|_| 1.0, 0.0, 1.0, 1e-6);
        assert!(x < 1e-5);
    }

    #[test]
    fn bisect_root_requires_bracket() {
        assert!(bisect_root(|x| x - 2.0, 0.0, 1.0, 1e-9).is_err());
        let r = bisect_root(|x| 0.5 - x, 0.0, 1.0, 1e-12).unwrap();
        assert!((r - 0.5).abs() < 1e-11);
    }

    #[test]
    fn maximize_1d_returns_first_of_equal_grid_maxima() {
        let r = maximize_1d(|x| if x >= 0.5 { 1.0 } else { 0.0 }, 0.0, 1.0, 0.1, 1e-9);
        assert!(r.best_theta <= 0.5 + 1e-12);
    }

    #[test]
    fn violation_angle_examples() {
        assert!((optimal_phi_for_violation(FRAC_PI_2) - FRAC_PI_4).abs() < 1e-15);
        assert!(optimal_phi_for_violation(1e-12) < 1e-11);
        assert!((optimal_phi_for_violation(FRAC_PI_6) - 0.463647609000806116).abs() < 1e-15);
    }

    #[test]
    fn model_rate_matches_closed_forms_for_pure_state() {
        let model = RateModel::default();
        let eff = Efficiencies::new(0.95, 0.9).unwrap();
        let rep = model.report(1.0, 0.8, eff).unwrap();
        let ideal = RateReport::ideal(1.0, 0.8, eff, rep.s_ch).unwrap();
        assert!((rep.r - ideal.r).abs() < 1e-14);
        assert!((rep.q_ps - ideal.q_ps).abs() < 1e-14);
    }
}
