//! Closed-form protocol quantities: conclusive probability, QBERs, the CH
//! parameter, and the asymptotic secure-key rates per emitted pair.
//!
//! Rates are returned raw. A negative value means no key can be distilled;
//! callers that need a yes/no answer use [`is_positive`].

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quantum::{AliceOutcome, BobOutcome, CoincidenceTable};

/// Radicand slack tolerated by [`f_ch`] before a CH value counts as super-quantum.
pub const F_CH_RADICAND_TOL: f64 = 1e-12;

/// Overall Alice/Bob efficiencies, transmission and detection included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiencies {
    pub eta_a: f64,
    pub eta_b: f64,
}

impl Efficiencies {
    pub const PERFECT: Efficiencies = Efficiencies { eta_a: 1.0, eta_b: 1.0 };

    pub fn new(eta_a: f64, eta_b: f64) -> Result<Self> {
        for (name, eta) in [("eta_A", eta_a), ("eta_B", eta_b)] {
            if !(0.0..=1.0).contains(&eta) {
                return domain(format!("{name} = {eta} outside [0, 1]"));
            }
        }
        Ok(Self { eta_a, eta_b })
    }

    pub fn symmetric(eta: f64) -> Result<Self> {
        Self::new(eta, eta)
    }
}

pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("binary entropy argument {x} outside [0, 1]"));
    }
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok(term(x) + term(1.0 - x))
}

/// `P_c = ½(1 − cosθ cosφ)`.
pub fn conclusive_prob(theta: f64, phi: f64) -> f64 {
    0.5 * (1.0 - theta.cos() * phi.cos())
}

/// Theoretical QBER of the post-selected key for the pure state.
pub fn qber_ps(theta: f64, phi: f64) -> Result<f64> {
    let denom = 2.0 - 2.0 * theta.cos() * phi.cos();
    if denom <= 0.0 {
        return Err(Error::UndefinedQber);
    }
    Ok(((1.0 - (theta - phi).cos()) / denom).clamp(0.0, 1.0))
}

/// QBER over all conclusive events when Alice randomizes her lost bits.
pub fn qber_conclusive(q_ps: f64, eta_a: f64) -> f64 {
    eta_a * q_ps + (1.0 - eta_a) / 2.0
}

/// `f(S) = 1 + √(1 − 4S − 4S²)`; `log₂ f` is the privacy-amplification cost.
pub fn f_ch(s: f64) -> Result<f64> {
    // 1 − 4S − 4S² = (√2 − t)(√2 + t) with t = 1 + 2S; the factored form is
    // exact at the quantum maximum where the radicand vanishes.
    let t = 1.0 + 2.0 * s;
    let radicand = (SQRT_2 - t) * (SQRT_2 + t);
    if radicand < -F_CH_RADICAND_TOL || radicand.is_nan() {
        return domain(format!("CH value {s} exceeds the quantum bound (radicand {radicand})"));
    }
    // A CH value a few ulps from the maximum is indistinguishable from it,
    // but √ would turn that rounding into a 1e-8 offset in f.
    if radicand <= RADICAND_RESOLUTION {
        return Ok(1.0);
    }
    Ok(1.0 + radicand.sqrt())
}

/// Radicand produced by an error of ~16 ulps in `t` next to `√2`.
const RADICAND_RESOLUTION: f64 = 1e-14;

/// CH parameter of the pure state at unit efficiency.
pub fn s_ch_ideal(theta: f64, phi: f64) -> f64 {
    0.5 * (phi.cos() + theta.sin() * phi.sin() - 1.0)
}

/// Largest `s_ch_ideal(theta, ·)`, reached at `φ = arctan(sin θ)`.
pub fn s_ch_max(theta: f64) -> f64 {
    0.5 * ((theta.sin().powi(2) + 1.0).sqrt() - 1.0)
}

/// `r = η_B P_c [η_A(1 − h₂(Q^ps)) − log₂ f(S)]`, with `P_c` supplied directly.
pub fn secure_rate(p_c: f64, eff: Efficiencies, s_ch: f64, q_ps: f64) -> Result<f64> {
    let h = binary_entropy(q_ps)?;
    Ok(eff.eta_b * p_c * (eff.eta_a * (1.0 - h) - f_ch(s_ch)?.log2()))
}

/// Post-selected rate with the pure-state conclusive probability.
pub fn rate_post_selected(
    theta: f64,
    phi: f64,
    eff: Efficiencies,
    s_ch: f64,
    q_ps: f64,
) -> Result<f64> {
    secure_rate(conclusive_prob(theta, phi), eff, s_ch, q_ps)
}

/// `r̃ = η_A η_B P_c [1 − h₂(Q^c) − log₂ f(S)]`, with `P_c` supplied directly.
pub fn secure_rate_no_postselection(
    p_c: f64,
    eff: Efficiencies,
    s_ch: f64,
    q_c: f64,
) -> Result<f64> {
    let h = binary_entropy(q_c)?;
    Ok(eff.eta_a * eff.eta_b * p_c * (1.0 - h - f_ch(s_ch)?.log2()))
}

pub fn rate_no_postselection(
    theta: f64,
    phi: f64,
    eff: Efficiencies,
    s_ch: f64,
    q_c: f64,
) -> Result<f64> {
    secure_rate_no_postselection(conclusive_prob(theta, phi), eff, s_ch, q_c)
}

/// Rate of the single-basis (entangled BB84) DI protocol with post-selection.
pub fn rate_bb84_style(eff: Efficiencies, s_ch: f64, q_ps: f64) -> Result<f64> {
    let h = binary_entropy(q_ps)?;
    Ok(eff.eta_a * eff.eta_b * (1.0 - h) - f_ch(s_ch)?.log2())
}

/// Trusted-device BB84 rate `1 − 2h₂(Q)`.
pub fn rate_bb84_trusted(q: f64) -> Result<f64> {
    Ok(1.0 - 2.0 * binary_entropy(q)?)
}

/// Smallest CH value for which `η_A(1 − h₂(q)) > log₂ f(S)`, i.e. the
/// post-selected rate is positive. `None` when no admissible CH value works.
pub fn min_ch_for_positive_rate(eta_a: f64, q_ps: f64) -> Result<Option<f64>> {
    let budget = (eta_a * (1.0 - binary_entropy(q_ps)?)).exp2() - 1.0;
    if budget <= 0.0 {
        return Ok(None);
    }
    // f(S) < 1 + c  ⇔  4S² + 4S + c² − 1 > 0  ⇔  S > (√(2 − c²) − 1)/2
    Ok(Some(0.5 * ((2.0 - budget * budget).sqrt() - 1.0)))
}

pub fn is_positive(rate: f64) -> bool {
    rate > 0.0
}

/// Probability that Bob's outcome is conclusive, averaged over his two bases.
pub fn conclusive_prob_from_table(table: &CoincidenceTable) -> f64 {
    let p_b = |b: BobOutcome| table.p(AliceOutcome::A0, b) + table.p(AliceOutcome::A0Bar, b);
    0.5 * (p_b(BobOutcome::B0) + p_b(BobOutcome::B1))
}

/// Error fraction among conclusive `𝒜₀` events. Bob's `b_k` decodes to bit
/// `k⊕1` and Alice's `a₀`/`ā₀` are bits 0/1, so the error pairs are
/// `(a₀, b₀)` and `(ā₀, b₁)`.
pub fn qber_ps_from_table(table: &CoincidenceTable) -> Result<f64> {
    let p_c = conclusive_prob_from_table(table);
    if p_c <= 0.0 {
        return Err(Error::UndefinedQber);
    }
    let errors = 0.5 * table.p(AliceOutcome::A0, BobOutcome::B0)
        + 0.5 * table.p(AliceOutcome::A0Bar, BobOutcome::B1);
    Ok((errors / p_c).clamp(0.0, 1.0))
}

/// Every closed-form quantity at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub s_ch: f64,
    pub q_ps: f64,
    pub q_c: f64,
    pub p_c: f64,
    pub r: f64,
    pub r_old: f64,
    pub r_bb84_style: f64,
}

impl RateReport {
    pub fn evaluate(p_c: f64, q_ps: f64, s_ch: f64, eff: Efficiencies) -> Result<Self> {
        let q_c = qber_conclusive(q_ps, eff.eta_a);
        Ok(Self {
            s_ch,
            q_ps,
            q_c,
            p_c,
            r: secure_rate(p_c, eff, s_ch, q_ps)?,
            r_old: secure_rate_no_postselection(p_c, eff, s_ch, q_c)?,
            r_bb84_style: rate_bb84_style(eff, s_ch, q_ps)?,
        })
    }

    /// Pure state, closed forms throughout.
    pub fn ideal(theta: f64, phi: f64, eff: Efficiencies, s_ch: f64) -> Result<Self> {
        Self::evaluate(conclusive_prob(theta, phi), qber_ps(theta, phi)?, s_ch, eff)
    }

    pub fn is_positive(&self) -> bool {
        is_positive(self.r)
    }

    /// Charges the key rates for the pairs Alice spends on the test basis.
    pub fn with_test_basis_cost(mut self, test_prob: f64) -> Self {
        let keep = 1.0 - test_prob;
        self.r *= keep;
        self.r_old *= keep;
        self.r_bb84_style *= keep;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};

    const EPS: f64 = 1e-12;

    // Values below were evaluated with mpmath at 30 digits.
    const H2_011: f64 = 0.499915958164527996;

    #[test]
    fn binary_entropy_examples() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.5).unwrap() - 1.0).abs() < EPS);
        assert!((binary_entropy(0.11).unwrap() - H2_011).abs() < EPS);
        assert!(binary_entropy(-0.01).is_err());
        assert!(binary_entropy(1.01).is_err());
    }

    #[test]
    fn binary_entropy_matches_series_oracle() {
        // h₂(½ − d) = 1 − (1/ln2) Σ_{n≥1} (2d)^{2n} / (2n(2n−1))
        for x in [0.11, 0.2, 0.3, 0.45] {
            let t: f64 = 1.0 - 2.0 * x;
            let series: f64 = (1..2000)
                .map(|n| {
                    let m = 2.0 * n as f64;
                    t.powf(m) / (m * (m - 1.0))
                })
                .sum();
            let oracle = 1.0 - series / std::f64::consts::LN_2;
            assert!((binary_entropy(x).unwrap() - oracle).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn conclusive_prob_examples() {
        assert!((conclusive_prob(FRAC_PI_2, FRAC_PI_2) - 0.5).abs() < EPS);
        assert!(conclusive_prob(1e-9, 1e-9) < 1e-15);
        assert!((conclusive_prob(FRAC_PI_2, FRAC_PI_4) - 0.5).abs() < EPS);
    }

    #[test]
    fn qber_ps_examples() {
        for theta in [0.2, 0.7, 1.1, FRAC_PI_2] {
            assert!(qber_ps(theta, theta).unwrap().abs() < EPS);
        }
        let q = qber_ps(FRAC_PI_2, FRAC_PI_4).unwrap();
        assert!((q - (1.0 - FRAC_PI_4.cos()) / 2.0).abs() < EPS);
        assert!((q - 0.146446609406726238).abs() < EPS);
        assert!((qber_ps(FRAC_PI_2, 0.0).unwrap() - 0.5).abs() < EPS);
        assert_eq!(qber_ps(0.0, 0.0), Err(Error::UndefinedQber));
    }

    #[test]
    fn qber_conclusive_examples() {
        assert_eq!(qber_conclusive(0.13, 1.0), 0.13);
        assert_eq!(qber_conclusive(0.13, 0.0), 0.5);
        assert!((qber_conclusive(0.0, 0.9) - 0.05).abs() < EPS);
    }

    #[test]
    fn f_ch_examples() {
        assert!((f_ch(0.0).unwrap() - 2.0).abs() < EPS);
        assert!((f_ch((SQRT_2 - 1.0) / 2.0).unwrap() - 1.0).abs() < EPS);
        assert!((f_ch(-0.25).unwrap() - 2.322875655532295295).abs() < EPS);
        assert!(f_ch(0.3).is_err());
    }

    #[test]
    fn f_ch_clamps_tiny_negative_radicand() {
        // radicand 1 − 4s − 4s² = −5e-13 just beyond the quantum maximum
        let s_max = (SQRT_2 - 1.0) / 2.0;
        let s = s_max + 5e-13 / (4.0 + 8.0 * s_max);
        assert_eq!(f_ch(s).unwrap(), 1.0);
    }

    #[test]
    fn f_ch_is_one_at_computed_maximum() {
        // cos(π/4) and sin(π/4) differ by one ulp in f64
        let s = s_ch_ideal(FRAC_PI_2, FRAC_PI_4);
        assert_eq!(f_ch(s).unwrap(), 1.0);
        let just_inside = (SQRT_2 - 1.0) / 2.0 - 1e-12;
        assert!(f_ch(just_inside).unwrap() > 1.0 + 1e-6);
    }

    #[test]
    fn s_ch_examples() {
        assert!(s_ch_ideal(0.8, 0.0).abs() < EPS);
        assert!((s_ch_ideal(FRAC_PI_2, FRAC_PI_4) - (SQRT_2 - 1.0) / 2.0).abs() < EPS);
        let phi = FRAC_PI_3.sin().atan();
        assert!((s_ch_ideal(FRAC_PI_3, phi) - 0.161437827766147648).abs() < EPS);
        assert!((s_ch_max(FRAC_PI_3) - 0.161437827766147648).abs() < EPS);
        assert!((s_ch_max(FRAC_PI_2) - (SQRT_2 - 1.0) / 2.0).abs() < EPS);
        assert!(s_ch_max(1e-9).abs() < 1e-15);
    }

    #[test]
    fn s_ch_max_matches_dense_grid() {
        let theta = FRAC_PI_4;
        let n = 2_000_000;
        let grid_max = (0..=n)
            .map(|i| s_ch_ideal(theta, FRAC_PI_2 * i as f64 / n as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((grid_max - s_ch_max(theta)).abs() < 1e-9);
    }

    #[test]
    fn rate_post_selected_examples() {
        let s = s_ch_ideal(FRAC_PI_2, FRAC_PI_2);
        assert!(s.abs() < EPS);
        let r = rate_post_selected(FRAC_PI_2, FRAC_PI_2, Efficiencies::PERFECT, s, 0.0).unwrap();
        assert!(r.abs() < EPS);

        let eff = Efficiencies::new(0.7, 0.9).unwrap();
        for s in [-0.3, -0.1, 0.0] {
            assert!(rate_post_selected(1.0, 0.8, eff, s, 0.0).unwrap() <= 0.0);
        }
    }

    #[test]
    fn rate_equality_at_unit_alice_efficiency() {
        let eff = Efficiencies::new(1.0, 0.8).unwrap();
        let (theta, phi) = (1.2, 0.9);
        let q = qber_ps(theta, phi).unwrap();
        let s = s_ch_ideal(theta, phi);
        let r = rate_post_selected(theta, phi, eff, s, q).unwrap();
        let r_old = rate_no_postselection(theta, phi, eff, s, qber_conclusive(q, 1.0)).unwrap();
        assert!((r - r_old).abs() < EPS);
    }

    #[test]
    fn rate_no_postselection_examples() {
        let eff = Efficiencies::new(0.0, 0.7).unwrap();
        let r = rate_no_postselection(1.0, 1.0, eff, 0.1, 0.5).unwrap();
        assert_eq!(r, 0.0);

        let eff = Efficiencies::new(0.9, 1.0).unwrap();
        let theta = 1.1;
        let s = s_ch_ideal(theta, theta);
        let q = qber_ps(theta, theta).unwrap();
        let r = rate_post_selected(theta, theta, eff, s, q).unwrap();
        let r_old = rate_no_postselection(theta, theta, eff, s, qber_conclusive(q, 0.9)).unwrap();
        assert!(r_old < r);
    }

    #[test]
    fn rate_bb84_style_examples() {
        let s_max = (SQRT_2 - 1.0) / 2.0;
        let e = Efficiencies::PERFECT;
        assert!((rate_bb84_style(e, s_max, 0.0).unwrap() - 1.0).abs() < EPS);
        assert!((rate_bb84_style(e, s_max, 0.11).unwrap() - (1.0 - H2_011)).abs() < EPS);
        let e = Efficiencies::new(0.8, 0.6).unwrap();
        let r = rate_bb84_style(e, 0.0, 0.05).unwrap();
        assert!((r - (0.48 * (1.0 - binary_entropy(0.05).unwrap()) - 1.0)).abs() < EPS);
        assert!(r <= 0.0);
    }

    #[test]
    fn rate_bb84_trusted_examples() {
        assert!((rate_bb84_trusted(0.0).unwrap() - 1.0).abs() < EPS);
        assert!((rate_bb84_trusted(0.5).unwrap() + 1.0).abs() < EPS);
        assert!((rate_bb84_trusted(0.11).unwrap() - 1.68083670944008719e-4).abs() < EPS);
    }

    #[test]
    fn min_ch_for_positive_rate_is_the_rate_root() {
        assert_eq!(min_ch_for_positive_rate(1.0, 0.0).unwrap(), Some(0.0));
        assert_eq!(min_ch_for_positive_rate(0.0, 0.0).unwrap(), None);
        assert_eq!(min_ch_for_positive_rate(1.0, 0.5).unwrap(), None);
        for (eta_a, q) in [(1.0, 0.02), (0.9, 0.0), (0.95, 0.01)] {
            let s = min_ch_for_positive_rate(eta_a, q).unwrap().unwrap();
            let eff = Efficiencies::new(eta_a, 1.0).unwrap();
            assert!(secure_rate(0.3, eff, s, q).unwrap().abs() < 1e-12);
            assert!(secure_rate(0.3, eff, s + 1e-6, q).unwrap() > 0.0);
            assert!(secure_rate(0.3, eff, s - 1e-6, q).unwrap() < 0.0);
        }
    }

    #[test]
    fn efficiencies_validation() {
        assert!(Efficiencies::new(1.1, 0.5).is_err());
        assert!(Efficiencies::new(0.5, -0.1).is_err());
        assert!(Efficiencies::symmetric(0.3).is_ok());
    }

    #[test]
    fn report_consistency() {
        let eff = Efficiencies::new(0.85, 0.95).unwrap();
        let rep = RateReport::ideal(FRAC_PI_6 * 2.5, 0.9, eff, 0.05).unwrap();
        assert!(rep.p_c <= 0.5 && rep.p_c >= 0.0);
        assert!(rep.q_ps <= rep.q_c);
        assert!(rep.r_old <= rep.r);
        let charged = rep.with_test_basis_cost(0.05);
        assert!((charged.r - 0.95 * rep.r).abs() < EPS);
    }
}
