use std::f64::consts::FRAC_PI_2;

use diqkd::keyrate::*;
use diqkd::quantum::{coincidence_probs, make_state, AliceOutcome, BobOutcome};

fn grid(n: usize) -> impl Iterator<Item = (f64, f64)> {
    (1..=n).flat_map(move |i| {
        (0..n).map(move |j| (FRAC_PI_2 * i as f64 / n as f64, FRAC_PI_2 * j as f64 / (n - 1) as f64))
    })
}

#[test]
fn post_selection_never_hurts() {
    for (theta, phi) in grid(50) {
        let s = s_ch_ideal(theta, phi);
        let q = qber_ps(theta, phi).unwrap();
        for eta_b in [0.5, 1.0] {
            for k in 1..=10 {
                let eta_a = k as f64 / 10.0;
                let eff = Efficiencies::new(eta_a, eta_b).unwrap();
                let r = rate_post_selected(theta, phi, eff, s, q).unwrap();
                let r_old =
                    rate_no_postselection(theta, phi, eff, s, qber_conclusive(q, eta_a)).unwrap();
                if k == 10 {
                    assert!((r - r_old).abs() < 1e-12);
                } else {
                    // Below zero both formulas only say "no key"; there the
                    // raw values are not ordered.
                    assert!(r_old.max(0.0) <= r.max(0.0), "θ={theta} φ={phi} η_A={eta_a}");
                    if r_old > 0.0 {
                        assert!(r_old < r);
                    }
                }
            }
        }
    }
}

// Compared at the same post-selected QBER. Only points that yield key are
// meaningful; this ordering does not hold across the whole grid (e.g. θ=90°,
// φ≈36.7° gives r≈0.0046 while 1−2h₂(Q)≈−0.45), so this test is expected to fail.
#[test]
fn trusted_rate_below_bb84() {
    let violations: Vec<(f64, f64, f64, f64)> = grid(50)
        .filter_map(|(theta, phi)| {
            let q = qber_ps(theta, phi).unwrap();
            let r = rate_post_selected(theta, phi, Efficiencies::PERFECT, s_ch_ideal(theta, phi), q)
                .unwrap();
            let bb84 = rate_bb84_trusted(q).unwrap();
            (r.max(0.0) > bb84.max(0.0)).then(|| (theta.to_degrees(), phi.to_degrees(), r, bb84))
        })
        .collect();
    assert!(
        violations.is_empty(),
        "{} grid points with r > max(1−2h₂(Q^ps), 0); first: {:?}",
        violations.len(),
        violations[0]
    );
}

#[test]
fn violation_maximizer_is_arctan_sin_theta() {
    for i in 1..=30 {
        let theta = FRAC_PI_2 * i as f64 / 30.0;
        // ternary search on the concave profile as an independent maximizer
        let (mut lo, mut hi) = (0.0, FRAC_PI_2);
        while hi - lo > 1e-10 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if s_ch_ideal(theta, m1) < s_ch_ideal(theta, m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        assert!((0.5 * (lo + hi) - theta.sin().atan()).abs() < 1e-6);
        assert!((s_ch_ideal(theta, theta.sin().atan()) - s_ch_max(theta)).abs() < 1e-12);
    }
}

#[test]
fn no_violation_means_no_key() {
    for s in [-0.5, -0.2, -1e-9, 0.0] {
        for q in [0.0, 0.05, 0.3] {
            for (ea, eb) in [(1.0, 1.0), (0.3, 0.9), (0.9, 0.2)] {
                let eff = Efficiencies::new(ea, eb).unwrap();
                assert!(rate_post_selected(1.0, 0.7, eff, s, q).unwrap() <= 0.0);
            }
        }
    }
}

#[test]
fn qber_matches_error_counting_on_born_table() {
    for (theta, phi) in grid(30) {
        let t = coincidence_probs(&make_state(theta).unwrap(), phi);
        let p_c = conclusive_prob(theta, phi);
        let errors = 0.5 * t.p(AliceOutcome::A0, BobOutcome::B0)
            + 0.5 * t.p(AliceOutcome::A0Bar, BobOutcome::B1);
        assert!((errors / p_c - qber_ps(theta, phi).unwrap()).abs() < 1e-12);
        assert!((qber_ps_from_table(&t).unwrap() - qber_ps(theta, phi).unwrap()).abs() < 1e-12);
        assert!((conclusive_prob_from_table(&t) - p_c).abs() < 1e-12);
    }
}

#[test]
fn conclusive_probability_example_via_table() {
    let t = coincidence_probs(&make_state(FRAC_PI_2).unwrap(), FRAC_PI_2 / 2.0);
    let p = t.p(AliceOutcome::A0, BobOutcome::B0) + t.p(AliceOutcome::A0Bar, BobOutcome::B0);
    assert!((p - conclusive_prob(FRAC_PI_2, FRAC_PI_2 / 2.0)).abs() < 1e-12);
}
