//! CH parameter and threshold efficiencies under detection loss.
//!
//! Lost photons are assigned fixed outputs: `ā₁` for Alice's test basis,
//! `b̄_k` (inconclusive) for Bob, and a fair coin between `a₀` and `ā₀` for
//! Alice's key basis. With those rules every probability in the CH
//! combination is an affine function of the unit-efficiency Born table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyrate::Efficiencies;
use crate::quantum::{AliceOutcome, AliceOutcome::*, BobOutcome, BobOutcome::*, CoincidenceTable};

/// Joint and marginal probabilities over all generated pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedProbabilities {
    pub a1_b1: f64,
    pub a1_b0: f64,
    pub a0_b1: f64,
    pub a0_b0: f64,
    pub a1: f64,
    pub b1: f64,
}

impl PredictedProbabilities {
    /// `S_CH = P(a₁,b₁) + P(a₀,b₁) + P(a₁,b₀) − P(a₀,b₀) − P(a₁) − P(b₁)`.
    pub fn s_ch(&self) -> f64 {
        self.a1_b1 + self.a0_b1 + self.a1_b0 - self.a0_b0 - self.a1 - self.b1
    }
}

pub fn predict_probabilities(table: &CoincidenceTable, eff: Efficiencies) -> PredictedProbabilities {
    let p = |a, b| table.p(a, b);
    let (ea, eb) = (eff.eta_a, eff.eta_b);
    let a0_bj = |bj| ea * eb * p(A0, bj) + (1.0 - ea) * eb * 0.5 * (p(A0, bj) + p(A0Bar, bj));
    PredictedProbabilities {
        a1_b1: ea * eb * p(A1, B1),
        a1_b0: ea * eb * p(A1, B0),
        a0_b1: a0_bj(B1),
        a0_b0: a0_bj(B0),
        a1: ea * (p(A1, B0) + p(A1, B0Bar)),
        b1: eb * (p(A0, B1) + p(A0Bar, B1)),
    }
}

/// The three table combinations the predicted CH value is built from:
/// `S = η_A η_B · joint − η_A · alice − η_B · bob`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChCoefficients {
    pub joint: f64,
    pub alice: f64,
    pub bob: f64,
}

impl ChCoefficients {
    pub fn from_table(table: &CoincidenceTable) -> Self {
        let p = |a, b| table.p(a, b);
        Self {
            joint: p(A1, B1) + 0.5 * p(A0, B1) + p(A1, B0) - 0.5 * p(A0, B0) + 0.5 * p(A0Bar, B0)
                - 0.5 * p(A0Bar, B1),
            alice: p(A1, B0) + p(A1, B0Bar),
            bob: 0.5 * (p(A0, B1) + p(A0Bar, B1) + p(A0, B0) + p(A0Bar, B0)),
        }
    }

    pub fn s_ch(&self, eff: Efficiencies) -> f64 {
        eff.eta_a * eff.eta_b * self.joint - eff.eta_a * self.alice - eff.eta_b * self.bob
    }
}

/// Weight of every table entry in the predicted CH value, indexed like
/// [`CoincidenceTable::raw`]: `predict_s_ch = Σ w · p`.
pub fn ch_entry_weights(eff: Efficiencies) -> [[[[f64; 2]; 2]; 2]; 2] {
    let (ea, eb) = (eff.eta_a, eff.eta_b);
    let j = ea * eb;
    let mut w = [[[[0.0; 2]; 2]; 2]; 2];
    let mut add = |a: AliceOutcome, b: BobOutcome, v: f64| {
        w[a.basis()][b.basis()][a.is_bar() as usize][b.is_bar() as usize] += v;
    };
    add(A1, B1, j);
    add(A0, B1, 0.5 * j);
    add(A1, B0, j);
    add(A0, B0, -0.5 * j);
    add(A0Bar, B0, 0.5 * j);
    add(A0Bar, B1, -0.5 * j);
    add(A1, B0, -ea);
    add(A1, B0Bar, -ea);
    for (a, b) in [(A0, B1), (A0Bar, B1), (A0, B0), (A0Bar, B0)] {
        add(a, b, -0.5 * eb);
    }
    w
}

pub fn predict_s_ch(table: &CoincidenceTable, eff: Efficiencies) -> f64 {
    ChCoefficients::from_table(table).s_ch(eff)
}

/// Lossless CH values at or below this count as no violation; the formulas
/// would otherwise return an efficiency of 1 ± rounding.
const LOSSLESS_CH_FLOOR: f64 = 1e-14;

fn check_threshold(c: &ChCoefficients, numer: f64, denom: f64, what: &str) -> Result<f64> {
    let lossless = c.joint - c.alice - c.bob;
    if lossless <= LOSSLESS_CH_FLOOR {
        return Err(Error::NoViolation(format!("{what}: lossless S_CH = {lossless}")));
    }
    if denom <= 0.0 {
        return Err(Error::NoViolation(format!("{what}: denominator {denom} <= 0")));
    }
    let eta = numer / denom;
    if eta > 1.0 {
        return Err(Error::NoViolation(format!("{what}: required efficiency {eta} > 1")));
    }
    Ok(eta)
}

/// Common efficiency `η_A = η_B` at which the predicted CH value crosses zero.
pub fn threshold_symmetric(table: &CoincidenceTable) -> Result<f64> {
    let c = ChCoefficients::from_table(table);
    check_threshold(&c, c.alice + c.bob, c.joint, "symmetric threshold")
}

/// Bob's efficiency at which the CH value crosses zero when `η_A = 1`.
pub fn threshold_bob(table: &CoincidenceTable) -> Result<f64> {
    let c = ChCoefficients::from_table(table);
    check_threshold(&c, c.alice, c.joint - c.bob, "Bob threshold")
}

/// Which efficiency is scanned by [`bisect_threshold`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdKind {
    Symmetric,
    /// `η_A = 1`, scan `η_B`.
    Bob,
}

impl ThresholdKind {
    pub fn efficiencies(self, eta: f64) -> Efficiencies {
        match self {
            Self::Symmetric => Efficiencies { eta_a: eta, eta_b: eta },
            Self::Bob => Efficiencies { eta_a: 1.0, eta_b: eta },
        }
    }
}

const PRESCAN_POINTS: usize = 1000;

/// Root of `η ↦ predict_s_ch(table, η)` on `(0, 1]` by bisection.
///
/// A pre-scan on 1000 points must find exactly one sign change (from
/// `S ≤ 0` to `S > 0`); otherwise the bracket is rejected. The symmetric
/// curve always vanishes at `η = 0`, so the scan starts at the first grid
/// point.
pub fn bisect_threshold(table: &CoincidenceTable, kind: ThresholdKind, tol: f64) -> Result<f64> {
    let coeffs = ChCoefficients::from_table(table);
    let s = |eta: f64| coeffs.s_ch(kind.efficiencies(eta));
    let grid: Vec<f64> = (1..=PRESCAN_POINTS).map(|i| i as f64 / PRESCAN_POINTS as f64).collect();
    if s(1.0) <= 0.0 {
        return Err(Error::NoViolation(format!("S_CH(1) = {} <= 0", s(1.0))));
    }
    let changes: Vec<usize> = grid
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (s(w[0]) > 0.0) != (s(w[1]) > 0.0))
        .map(|(i, _)| i)
        .collect();
    let (mut lo, mut hi) = match changes.as_slice() {
        [i] => (grid[*i], grid[*i + 1]),
        [] if s(grid[0]) > 0.0 => (0.0, grid[0]),
        _ => {
            return Err(Error::Bracket(format!(
                "{} sign changes of S_CH on (0, 1]",
                changes.len()
            )))
        }
    };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if s(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyrate::s_ch_ideal;
    use crate::quantum::{coincidence_probs, make_state};
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, SQRT_2};

    fn table(theta: f64, phi: f64) -> CoincidenceTable {
        coincidence_probs(&make_state(theta).unwrap(), phi)
    }

    fn eff(a: f64, b: f64) -> Efficiencies {
        Efficiencies::new(a, b).unwrap()
    }

    #[test]
    fn lossless_probabilities_equal_table() {
        let t = table(1.0, 0.7);
        let p = predict_probabilities(&t, Efficiencies::PERFECT);
        assert!((p.a1_b1 - t.p(A1, B1)).abs() < 1e-15);
        assert!((p.a1_b0 - t.p(A1, B0)).abs() < 1e-15);
        assert!((p.a0_b1 - t.p(A0, B1)).abs() < 1e-15);
        assert!((p.a0_b0 - t.p(A0, B0)).abs() < 1e-15);
    }

    #[test]
    fn alice_blind_limit_is_random_assignment() {
        let t = table(1.2, 0.9);
        let p = predict_probabilities(&t, eff(0.0, 0.8));
        assert!((p.a0_b0 - 0.8 * 0.5 * (t.p(A0, B0) + t.p(A0Bar, B0))).abs() < 1e-15);
        assert!((p.a0_b1 - 0.8 * 0.5 * (t.p(A0, B1) + t.p(A0Bar, B1))).abs() < 1e-15);
    }

    #[test]
    fn lossy_joint_probability_example() {
        let p = predict_probabilities(&table(FRAC_PI_2, FRAC_PI_4), eff(0.9, 0.9));
        // mpmath: 0.81·cos²(π/8)/2
        assert!((p.a1_b1 - 0.345689123190275874).abs() < 1e-12);
    }

    #[test]
    fn predicted_ch_examples() {
        for i in 1..=30 {
            for j in 0..30 {
                let theta = FRAC_PI_2 * i as f64 / 30.0;
                let phi = FRAC_PI_2 * j as f64 / 29.0;
                let s = predict_s_ch(&table(theta, phi), Efficiencies::PERFECT);
                assert!((s - s_ch_ideal(theta, phi)).abs() < 1e-12);
            }
        }
        let eberhard = 2.0 * (SQRT_2 - 1.0);
        let s = predict_s_ch(&table(FRAC_PI_2, FRAC_PI_4), eff(eberhard, eberhard));
        assert!(s.abs() < 1e-10);
        assert_eq!(predict_s_ch(&table(0.4, 0.3), eff(0.0, 0.0)), 0.0);
    }

    #[test]
    fn decomposition_identity() {
        for (theta, phi, ea, eb) in [(0.3, 0.2, 0.9, 0.7), (1.5, 0.8, 0.5, 1.0), (1.0, 1.0, 0.0, 0.3)] {
            let t = table(theta, phi);
            let e = eff(ea, eb);
            assert!((predict_s_ch(&t, e) - predict_probabilities(&t, e).s_ch()).abs() < 1e-12);
        }
    }

    #[test]
    fn entry_weights_reproduce_prediction() {
        for (theta, phi, ea, eb) in [(0.3, 0.2, 0.9, 0.7), (1.5, 0.8, 0.5, 1.0), (0.9, 1.2, 1.0, 1.0)] {
            let t = table(theta, phi);
            let e = eff(ea, eb);
            let w = ch_entry_weights(e);
            let sum: f64 = w
                .iter()
                .flatten()
                .flatten()
                .flatten()
                .zip(t.raw().iter().flatten().flatten().flatten())
                .map(|(w, p)| w * p)
                .sum();
            assert!((sum - predict_s_ch(&t, e)).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_threshold_examples() {
        let eta = threshold_symmetric(&table(FRAC_PI_2, FRAC_PI_4)).unwrap();
        assert!((eta - 2.0 * (SQRT_2 - 1.0)).abs() < 1e-12);

        for i in 1..=17 {
            let theta = (5.0 * i as f64).to_radians();
            let c2 = (theta / 2.0).cos().powi(2);
            let eta = threshold_symmetric(&table(theta, theta)).unwrap();
            assert!((eta - (1.0 + 2.0 * c2) / (4.0 * c2)).abs() < 1e-10);
        }
    }

    #[test]
    fn bob_threshold_examples() {
        let eta = threshold_bob(&table(FRAC_PI_2, FRAC_PI_4)).unwrap();
        assert!((eta - FRAC_1_SQRT_2).abs() < 1e-12);
        let eta = threshold_bob(&table(FRAC_PI_3, FRAC_PI_3)).unwrap();
        assert!((eta - 2.0 / 3.0).abs() < 1e-12);
        let eta = threshold_bob(&table(1e-3, 1e-3)).unwrap();
        assert!((eta - 0.5).abs() < 1e-6);
    }

    #[test]
    fn thresholds_are_roots() {
        let t = table(1.1, 0.8);
        let eta = threshold_symmetric(&t).unwrap();
        assert!(predict_s_ch(&t, eff(eta, eta)).abs() < 1e-10);
        let eta_b = threshold_bob(&t).unwrap();
        assert!(predict_s_ch(&t, eff(1.0, eta_b)).abs() < 1e-10);
    }

    #[test]
    fn no_violation_is_reported() {
        // φ = 0 never violates
        let t = table(1.0, 0.0);
        assert!(matches!(threshold_symmetric(&t), Err(Error::NoViolation(_))));
        assert!(matches!(threshold_bob(&t), Err(Error::NoViolation(_))));
        assert!(bisect_threshold(&t, ThresholdKind::Symmetric, 1e-12).is_err());
    }

    #[test]
    fn bisection_agrees_with_formula() {
        let t = table(FRAC_PI_2, FRAC_PI_4);
        let b = bisect_threshold(&t, ThresholdKind::Symmetric, 1e-13).unwrap();
        assert!((b - threshold_symmetric(&t).unwrap()).abs() < 1e-10);
        let b = bisect_threshold(&t, ThresholdKind::Bob, 1e-13).unwrap();
        assert!((b - threshold_bob(&t).unwrap()).abs() < 1e-10);
    }
}
