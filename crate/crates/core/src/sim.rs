//! Event-level Monte Carlo of the generalized ent-B92 protocol.
//!
//! Per pair: Alice picks `𝒜₁` with probability `p` (else `𝒜₀`), Bob picks
//! `ℬ₀`/`ℬ₁` evenly, a joint projective outcome is drawn from the Born table
//! of the (noisy) state, each photon survives with its party's efficiency,
//! and lost photons get the fixed assignments (`ā₁`, `b̄_k`, or a fair coin
//! on `𝒜₀`). Bob's `b_k` is conclusive and decodes to bit `k⊕1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::keyrate::{Efficiencies, RateReport};
use crate::loss::{ch_entry_weights, predict_s_ch};
use crate::quantum::{
    coincidence_probs, make_state, noisy_state, AliceOutcome, BobOutcome, CoincidenceTable,
    NoiseParams, ProtocolParams,
};
use crate::rng::{EventRng, BLOCK_EVENTS};

/// Test-basis probability used when none is given.
pub const DEFAULT_TEST_PROB: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ProtocolParams,
    pub noise: NoiseParams,
    pub eff: Efficiencies,
    pub n_pairs: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        ProtocolParams::new(self.params.theta, self.params.phi, self.params.test_prob)?;
        NoiseParams::new(self.noise.colored, self.noise.white)?;
        Efficiencies::new(self.eff.eta_a, self.eff.eta_b)?;
        if self.n_pairs == 0 {
            return domain("n_pairs must be at least 1");
        }
        Ok(())
    }

    /// Unit-efficiency Born table of the simulated state.
    pub fn table(&self) -> Result<CoincidenceTable> {
        let state = if self.noise.is_noiseless() {
            make_state(self.params.theta)?
        } else {
            noisy_state(self.params.theta, self.noise)?
        };
        Ok(coincidence_probs(&state, self.params.phi))
    }
}

/// One emitted pair after detection and assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub alice_basis: usize,
    pub bob_basis: usize,
    /// Physical outcome, `None` if the photon was not detected.
    pub alice_raw: Option<AliceOutcome>,
    pub bob_raw: Option<BobOutcome>,
    pub alice_assigned: AliceOutcome,
    pub bob_assigned: BobOutcome,
}

impl EventRecord {
    pub fn bob_conclusive(&self) -> bool {
        !self.bob_assigned.is_bar()
    }

    /// Bob's decoded bit `k⊕1`, if conclusive.
    pub fn bob_key_bit(&self) -> Option<u8> {
        self.bob_conclusive().then_some(self.bob_basis as u8 ^ 1)
    }

    /// Alice's key bit: `a₀ → 0`, `ā₀ → 1`; `None` in the test basis.
    pub fn alice_key_bit(&self) -> Option<u8> {
        (self.alice_basis == 0).then_some(self.alice_assigned.is_bar() as u8)
    }

    pub fn sifted(&self) -> bool {
        self.alice_basis == 0 && self.bob_conclusive()
    }

    pub fn post_selected(&self) -> bool {
        self.sifted() && self.alice_raw.is_some()
    }

    pub fn is_error(&self) -> bool {
        self.sifted() && self.alice_key_bit() != self.bob_key_bit()
    }
}

/// Cumulative Born distributions per basis pair, in `[x][y]` row-major order.
#[derive(Debug, Clone, Copy)]
struct Sampler {
    cdf: [[[f64; 4]; 2]; 2],
    test_prob: f64,
    eff: Efficiencies,
}

impl Sampler {
    fn new(config: &SimConfig) -> Result<Self> {
        let table = config.table()?;
        let mut cdf = [[[0.0; 4]; 2]; 2];
        for (i, row) in cdf.iter_mut().enumerate() {
            for (j, c) in row.iter_mut().enumerate() {
                let pair = table.pair(i, j);
                let mut acc = 0.0;
                for (k, p) in pair.iter().flatten().enumerate() {
                    acc += p;
                    c[k] = acc;
                }
                c[3] = f64::INFINITY;
            }
        }
        Ok(Self { cdf, test_prob: config.params.test_prob, eff: config.eff })
    }

    fn event(&self, u: [f64; 6]) -> EventRecord {
        let alice_basis = (u[0] < self.test_prob) as usize;
        let bob_basis = (u[1] < 0.5) as usize;
        let k = self.cdf[alice_basis][bob_basis].iter().position(|&c| u[2] < c).unwrap_or(3);
        let alice_phys = AliceOutcome::new(alice_basis, k / 2 == 1);
        let bob_phys = BobOutcome::new(bob_basis, k % 2 == 1);
        let alice_raw = (u[3] < self.eff.eta_a).then_some(alice_phys);
        let bob_raw = (u[4] < self.eff.eta_b).then_some(bob_phys);
        let alice_assigned = alice_raw.unwrap_or(match alice_basis {
            0 => AliceOutcome::new(0, u[5] < 0.5),
            _ => AliceOutcome::A1Bar,
        });
        let bob_assigned = bob_raw.unwrap_or(BobOutcome::new(bob_basis, true));
        let ev = EventRecord { alice_basis, bob_basis, alice_raw, bob_raw, alice_assigned, bob_assigned };
        debug_assert!(
            ev.alice_raw.is_some() || ev.alice_assigned != AliceOutcome::A1,
            "lost test-basis photon assigned a1"
        );
        debug_assert!(ev.bob_raw.is_some() || !ev.bob_conclusive(), "lost photon made conclusive");
        ev
    }
}

/// Per-event record stream, generated serially. Matches what [`simulate`]
/// tallies.
pub fn events(config: &SimConfig) -> Result<impl Iterator<Item = EventRecord>> {
    config.validate()?;
    let sampler = Sampler::new(config)?;
    let seed = config.seed;
    let mut rng = EventRng::for_block(seed, 0);
    Ok((0..config.n_pairs).map(move |i| {
        if i % BLOCK_EVENTS == 0 {
            rng = EventRng::for_block(seed, i / BLOCK_EVENTS);
        }
        sampler.event(rng.event_draws())
    }))
}

type Counts = [[[[u64; 2]; 2]; 2]; 2];

/// Event counts of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub n_pairs: u64,
    /// Events per basis pair `[alice][bob]`.
    pub pair_totals: [[u64; 2]; 2],
    /// Assigned outcomes `[alice basis][bob basis][alice bar][bob bar or lost]`.
    pub assigned: Counts,
    /// Physical outcomes of events where both photons were detected.
    pub coincidences: Counts,
    pub bob_detected: u64,
    pub conclusive: u64,
    pub sifted: u64,
    pub sifted_errors: u64,
    pub post_selected: u64,
    pub post_selected_errors: u64,
}

impl Tally {
    fn record(&mut self, ev: &EventRecord) {
        let (i, j) = (ev.alice_basis, ev.bob_basis);
        self.n_pairs += 1;
        self.pair_totals[i][j] += 1;
        self.assigned[i][j][ev.alice_assigned.is_bar() as usize][ev.bob_assigned.is_bar() as usize] += 1;
        if let (Some(a), Some(b)) = (ev.alice_raw, ev.bob_raw) {
            self.coincidences[i][j][a.is_bar() as usize][b.is_bar() as usize] += 1;
        }
        self.bob_detected += ev.bob_raw.is_some() as u64;
        self.conclusive += ev.bob_conclusive() as u64;
        if ev.sifted() {
            self.sifted += 1;
            self.sifted_errors += ev.is_error() as u64;
            if ev.post_selected() {
                self.post_selected += 1;
                self.post_selected_errors += ev.is_error() as u64;
            }
        }
    }

    fn merge(mut self, other: &Tally) -> Tally {
        self.n_pairs += other.n_pairs;
        for i in 0..2 {
            for j in 0..2 {
                self.pair_totals[i][j] += other.pair_totals[i][j];
                for x in 0..2 {
                    for y in 0..2 {
                        self.assigned[i][j][x][y] += other.assigned[i][j][x][y];
                        self.coincidences[i][j][x][y] += other.coincidences[i][j][x][y];
                    }
                }
            }
        }
        self.bob_detected += other.bob_detected;
        self.conclusive += other.conclusive;
        self.sifted += other.sifted;
        self.sifted_errors += other.sifted_errors;
        self.post_selected += other.post_selected;
        self.post_selected_errors += other.post_selected_errors;
        self
    }
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    /// Wald estimate of a binomial proportion.
    pub fn proportion(hits: u64, trials: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::InsufficientData("proportion over zero trials".into()));
        }
        let p = hits as f64 / trials as f64;
        Ok(Self { value: p, std_err: (p * (1.0 - p) / trials as f64).sqrt() })
    }

    /// `(value − reference) / std_err`; zero when both coincide exactly.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = self.value - reference;
        if d == 0.0 {
            0.0
        } else {
            d / self.std_err
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub tally: Tally,
}

impl SimResult {
    /// Conclusive fraction of Bob's physical detections.
    pub fn p_c_hat(&self) -> Result<Estimate> {
        Estimate::proportion(self.tally.conclusive, self.tally.bob_detected)
    }

    pub fn q_c_hat(&self) -> Result<Estimate> {
        Estimate::proportion(self.tally.sifted_errors, self.tally.sifted)
    }

    pub fn q_ps_hat(&self) -> Result<Estimate> {
        Estimate::proportion(self.tally.post_selected_errors, self.tally.post_selected)
    }

    pub fn sifted_len(&self) -> u64 {
        self.tally.sifted
    }

    pub fn post_selected_len(&self) -> u64 {
        self.tally.post_selected
    }

    /// Coincidence-conditioned table estimated from double detections.
    pub fn coincidence_table(&self) -> Result<CoincidenceTable> {
        CoincidenceTable::from_counts(self.tally.coincidences)
    }
}

/// Runs the protocol for `config.n_pairs` pairs. Blocks of events are
/// simulated in parallel and merged in block order.
pub fn simulate(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let sampler = Sampler::new(config)?;
    let n_blocks = config.n_pairs.div_ceil(BLOCK_EVENTS);
    let partial: Vec<Tally> = (0..n_blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = EventRng::for_block(config.seed, block);
            let start = block * BLOCK_EVENTS;
            let end = (start + BLOCK_EVENTS).min(config.n_pairs);
            let mut tally = Tally::default();
            for _ in start..end {
                tally.record(&sampler.event(rng.event_draws()));
            }
            tally
        })
        .collect();
    let tally = partial.iter().fold(Tally::default(), |acc, t| acc.merge(t));
    Ok(SimResult { config: *config, tally })
}

/// CH value assembled directly from assigned-outcome frequencies.
///
/// Within each basis pair the CH combination reduces to one frequency:
/// `S = f(a₁b₁|𝒜₁ℬ₁) − f(ā₀b₁|𝒜₀ℬ₁) − f(a₁,¬b₀|𝒜₁ℬ₀) − f(a₀b₀|𝒜₀ℬ₀)`, where
/// `P(b₁)` is taken from `𝒜₀ℬ₁` and `P(a₁)` from `𝒜₁ℬ₀`. The four pairs are
/// sampled independently, so their variances add.
pub fn empirical_s_ch_direct(result: &SimResult) -> Result<Estimate> {
    let t = &result.tally;
    let terms = [
        (1.0, t.assigned[1][1][0][0], t.pair_totals[1][1]),
        (-1.0, t.assigned[0][1][1][0], t.pair_totals[0][1]),
        (-1.0, t.assigned[1][0][0][1], t.pair_totals[1][0]),
        (-1.0, t.assigned[0][0][0][0], t.pair_totals[0][0]),
    ];
    let mut value = 0.0;
    let mut var = 0.0;
    for (sign, hits, n) in terms {
        let e = Estimate::proportion(hits, n)
            .map_err(|_| Error::InsufficientData("a basis pair has no events".into()))?;
        value += sign * e.value;
        var += e.std_err * e.std_err;
    }
    Ok(Estimate { value, std_err: var.sqrt() })
}

/// CH value predicted at efficiencies `eff` from the coincidence-conditioned
/// table, with the multinomial delta-method error of each basis pair.
pub fn empirical_s_ch_predicted(result: &SimResult, eff: Efficiencies) -> Result<Estimate> {
    let table = result.coincidence_table()?;
    let value = predict_s_ch(&table, eff);
    let w = ch_entry_weights(eff);
    let mut var = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let n: u64 = result.tally.coincidences[i][j].iter().flatten().sum();
            let pair = table.pair(i, j);
            let (mut m1, mut m2) = (0.0, 0.0);
            for x in 0..2 {
                for y in 0..2 {
                    m1 += w[i][j][x][y] * pair[x][y];
                    m2 += w[i][j][x][y].powi(2) * pair[x][y];
                }
            }
            var += (m2 - m1 * m1).max(0.0) / n as f64;
        }
    }
    Ok(Estimate { value, std_err: var.sqrt() })
}

/// Which CH estimate feeds the privacy-amplification term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChEstimator {
    Direct,
    /// Coincidence table projected to the configured efficiencies.
    Predicted,
}

/// Key-rate formulas evaluated on the empirical estimates, with the
/// configured efficiencies.
pub fn empirical_rates(result: &SimResult, estimator: ChEstimator) -> Result<RateReport> {
    let eff = result.config.eff;
    let s = match estimator {
        ChEstimator::Direct => empirical_s_ch_direct(result)?,
        ChEstimator::Predicted => empirical_s_ch_predicted(result, eff)?,
    };
    RateReport::evaluate(result.p_c_hat()?.value, result.q_ps_hat()?.value, s.value, eff)
}
