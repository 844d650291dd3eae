//! Two-qubit polarization states, the colored/white noise channel, the
//! single-photon measurement bases of both parties, and Born-rule
//! coincidence tables.
//!
//! All operators live in the product basis `{HH, HV, VH, VV}` with the
//! single-qubit ordering `{H, V}`. Amplitudes are stored as complex numbers
//! but every protocol state and measurement here is real.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector2, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub type Ket2 = Vector2<Complex64>;
pub type Ket4 = Vector4<Complex64>;
pub type Op2 = Matrix2<Complex64>;
pub type Op4 = Matrix4<Complex64>;

pub const NORM_TOL: f64 = 1e-12;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const EIGEN_FLOOR: f64 = -1e-10;

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Angles of one protocol run together with Alice's test-basis probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub theta: f64,
    pub phi: f64,
    pub test_prob: f64,
}

impl ProtocolParams {
    pub fn new(theta: f64, phi: f64, test_prob: f64) -> Result<Self> {
        check_theta(theta)?;
        check_phi(phi)?;
        if !(0.0..1.0).contains(&test_prob) {
            return domain(format!("test-basis probability {test_prob} outside [0, 1)"));
        }
        Ok(Self { theta, phi, test_prob })
    }
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta <= FRAC_PI_2 {
        Ok(())
    } else {
        domain(format!("theta {theta} outside (0, pi/2]"))
    }
}

pub(crate) fn check_phi(phi: f64) -> Result<()> {
    if (0.0..=FRAC_PI_2).contains(&phi) {
        Ok(())
    } else {
        domain(format!("phi {phi} outside [0, pi/2]"))
    }
}

/// Weights of the colored (phase-damping) and white (depolarizing) noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseParams {
    pub colored: f64,
    pub white: f64,
}

impl NoiseParams {
    pub const NONE: NoiseParams = NoiseParams { colored: 0.0, white: 0.0 };

    /// The noise level fitted to the two-crystal SPDC source.
    pub const EXPERIMENTAL: NoiseParams = NoiseParams { colored: 0.015, white: 0.007 };

    pub fn new(colored: f64, white: f64) -> Result<Self> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(colored) || !in_unit(white) || colored + white > 1.0 + 1e-15 {
            return domain(format!(
                "noise weights p_c={colored}, p_w={white} must lie in [0,1] with p_c + p_w <= 1"
            ));
        }
        Ok(Self { colored, white })
    }

    pub fn is_noiseless(&self) -> bool {
        self.colored == 0.0 && self.white == 0.0
    }
}

/// A shared photon pair, either as an amplitude vector or a density operator.
#[derive(Debug, Clone, PartialEq)]
pub enum TwoQubitState {
    Pure(Ket4),
    Mixed(Op4),
}

impl TwoQubitState {
    pub fn pure(amplitudes: Ket4) -> Result<Self> {
        let norm = amplitudes.norm_squared();
        if (norm - 1.0).abs() > NORM_TOL {
            return domain(format!("pure state squared norm {norm} != 1"));
        }
        Ok(Self::Pure(amplitudes))
    }

    pub fn mixed(rho: Op4) -> Result<Self> {
        let herm_err = (rho - rho.adjoint()).camax();
        if herm_err > HERMITIAN_TOL {
            return domain(format!("density operator not Hermitian (max deviation {herm_err})"));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return domain(format!("density operator trace {tr} != 1"));
        }
        let min_eig = min_eigenvalue(&rho);
        if min_eig < EIGEN_FLOOR {
            return domain(format!("density operator has negative eigenvalue {min_eig}"));
        }
        Ok(Self::Mixed(rho))
    }

    pub fn is_pure(&self) -> bool {
        matches!(self, Self::Pure(_))
    }

    pub fn density(&self) -> Op4 {
        match self {
            Self::Pure(psi) => psi * psi.adjoint(),
            Self::Mixed(rho) => *rho,
        }
    }

    pub fn purity(&self) -> f64 {
        match self {
            Self::Pure(_) => 1.0,
            Self::Mixed(rho) => (rho * rho).trace().re,
        }
    }

    /// Eigenvalues of the density operator in ascending order.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let eig = SymmetricEigen::new(self.density()).eigenvalues;
        let mut out = [eig[0], eig[1], eig[2], eig[3]];
        out.sort_by(f64::total_cmp);
        out
    }

    /// Wootters concurrence of a pure state, `2 |a_HH a_VV - a_HV a_VH|`.
    pub fn concurrence(&self) -> Result<f64> {
        match self {
            Self::Pure(psi) => Ok(2.0 * (psi[0] * psi[3] - psi[1] * psi[2]).norm()),
            Self::Mixed(_) => domain("concurrence is only implemented for pure states"),
        }
    }

    /// Largest imaginary magnitude over all stored entries.
    pub fn max_imaginary(&self) -> f64 {
        match self {
            Self::Pure(psi) => psi.iter().map(|z| z.im.abs()).fold(0.0, f64::max),
            Self::Mixed(rho) => rho.iter().map(|z| z.im.abs()).fold(0.0, f64::max),
        }
    }

    /// `<v| rho |v>` for a product vector.
    fn expectation(&self, v: &Ket4) -> f64 {
        match self {
            Self::Pure(psi) => v.dotc(psi).norm_sqr(),
            Self::Mixed(rho) => v.dotc(&(rho * v)).re,
        }
    }
}

fn min_eigenvalue(rho: &Op4) -> f64 {
    SymmetricEigen::new(*rho).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `cos(θ/2)|HH> + sin(θ/2)|VV>`.
pub fn make_state(theta: f64) -> Result<TwoQubitState> {
    check_theta(theta)?;
    let (s, c) = (theta / 2.0).sin_cos();
    TwoQubitState::pure(Ket4::new(re(c), re(0.0), re(0.0), re(s)))
}

/// Mixes a pure state with its dephased copy and with the maximally mixed
/// state: `(1-p_c-p_w)|Φ><Φ| + p_c ρ_c + p_w 𝟙/4`, where `ρ_c` keeps only the
/// `HH` and `VV` populations of `|Φ>`.
pub fn apply_noise(state: &TwoQubitState, noise: NoiseParams) -> Result<TwoQubitState> {
    let TwoQubitState::Pure(psi) = state else {
        return domain("noise channel expects a pure input state");
    };
    let noise = NoiseParams::new(noise.colored, noise.white)?;
    TwoQubitState::mixed(mix(psi, noise))
}

/// `apply_noise(make_state(theta), noise)` without the eigenvalue check; the
/// channel output is a convex mixture of states and needs none.
pub fn noisy_state(theta: f64, noise: NoiseParams) -> Result<TwoQubitState> {
    let TwoQubitState::Pure(psi) = make_state(theta)? else { unreachable!() };
    let noise = NoiseParams::new(noise.colored, noise.white)?;
    Ok(TwoQubitState::Mixed(mix(&psi, noise)))
}

fn mix(psi: &Ket4, noise: NoiseParams) -> Op4 {
    let pure = psi * psi.adjoint();
    let mut colored = Op4::zeros();
    colored[(0, 0)] = re(psi[0].norm_sqr());
    colored[(3, 3)] = re(psi[3].norm_sqr());
    pure * re(1.0 - noise.colored - noise.white)
        + colored * re(noise.colored)
        + Op4::identity() * re(noise.white / 4.0)
}

/// Which side of the link an outcome belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

/// Alice's outcomes: `a₁ = V`, `ā₁ = H`, `a₀ = (H+V)/√2`, `ā₀ = (H−V)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AliceOutcome {
    A0,
    A0Bar,
    A1,
    A1Bar,
}

/// Bob's outcomes in the bases `ℬ₀` and `ℬ₁`; only `b_k` is conclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BobOutcome {
    B0,
    B0Bar,
    B1,
    B1Bar,
}

impl AliceOutcome {
    pub const ALL: [AliceOutcome; 4] = [Self::A0, Self::A0Bar, Self::A1, Self::A1Bar];

    pub fn new(basis: usize, bar: bool) -> Self {
        match (basis, bar) {
            (0, false) => Self::A0,
            (0, true) => Self::A0Bar,
            (1, false) => Self::A1,
            (1, true) => Self::A1Bar,
            _ => panic!("Alice basis index {basis} out of range"),
        }
    }

    pub fn basis(self) -> usize {
        match self {
            Self::A0 | Self::A0Bar => 0,
            Self::A1 | Self::A1Bar => 1,
        }
    }

    pub fn is_bar(self) -> bool {
        matches!(self, Self::A0Bar | Self::A1Bar)
    }

    pub fn ket(self) -> Ket2 {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Self::A1 => Ket2::new(re(0.0), re(1.0)),
            Self::A1Bar => Ket2::new(re(1.0), re(0.0)),
            Self::A0 => Ket2::new(re(r), re(r)),
            Self::A0Bar => Ket2::new(re(r), re(-r)),
        }
    }
}

impl BobOutcome {
    pub const ALL: [BobOutcome; 4] = [Self::B0, Self::B0Bar, Self::B1, Self::B1Bar];

    pub fn new(basis: usize, bar: bool) -> Self {
        match (basis, bar) {
            (0, false) => Self::B0,
            (0, true) => Self::B0Bar,
            (1, false) => Self::B1,
            (1, true) => Self::B1Bar,
            _ => panic!("Bob basis index {basis} out of range"),
        }
    }

    pub fn basis(self) -> usize {
        match self {
            Self::B0 | Self::B0Bar => 0,
            Self::B1 | Self::B1Bar => 1,
        }
    }

    pub fn is_bar(self) -> bool {
        matches!(self, Self::B0Bar | Self::B1Bar)
    }

    /// `b_k = sin(φ/2)H − (−1)^k cos(φ/2)V`, `b̄_k = cos(φ/2)H + (−1)^k sin(φ/2)V`.
    pub fn ket(self, phi: f64) -> Ket2 {
        let (s, c) = (phi / 2.0).sin_cos();
        let sign = if self.basis() == 0 { 1.0 } else { -1.0 };
        if self.is_bar() {
            Ket2::new(re(c), re(sign * s))
        } else {
            Ket2::new(re(s), re(-sign * c))
        }
    }
}

/// A labelled single-party outcome; the label always matches its party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasurementOutcome {
    Alice(AliceOutcome),
    Bob(BobOutcome),
}

impl MeasurementOutcome {
    pub fn party(self) -> Party {
        match self {
            Self::Alice(_) => Party::Alice,
            Self::Bob(_) => Party::Bob,
        }
    }

    pub fn basis(self) -> usize {
        match self {
            Self::Alice(a) => a.basis(),
            Self::Bob(b) => b.basis(),
        }
    }

    pub fn is_bar(self) -> bool {
        match self {
            Self::Alice(a) => a.is_bar(),
            Self::Bob(b) => b.is_bar(),
        }
    }

    /// Alice's outcomes do not depend on `phi`.
    pub fn ket(self, phi: f64) -> Ket2 {
        match self {
            Self::Alice(a) => a.ket(),
            Self::Bob(b) => b.ket(phi),
        }
    }
}

/// Rank-1 projector `|x><x|` onto the named single-photon state.
pub fn projector(outcome: MeasurementOutcome, phi: f64) -> Op2 {
    let k = outcome.ket(phi);
    k * k.adjoint()
}

/// Bob's three-outcome POVM: `Π_k = ½|b_k><b_k|` and `Π_inconc = 𝟙 − Π₀ − Π₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct BobPovm {
    pub conclusive: [Op2; 2],
    pub inconclusive: Op2,
}

impl BobPovm {
    pub fn elements(&self) -> [Op2; 3] {
        [self.conclusive[0], self.conclusive[1], self.inconclusive]
    }
}

pub fn bob_povm(phi: f64) -> BobPovm {
    let half = re(0.5);
    let p0 = projector(MeasurementOutcome::Bob(BobOutcome::B0), phi) * half;
    let p1 = projector(MeasurementOutcome::Bob(BobOutcome::B1), phi) * half;
    BobPovm { conclusive: [p0, p1], inconclusive: Op2::identity() - p0 - p1 }
}

/// Joint outcome probabilities for every basis pair, each conditioned on its
/// basis choice (unit efficiency). Indexed `[alice basis][bob basis][alice
/// bar][bob bar]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceTable {
    probs: [[[[f64; 2]; 2]; 2]; 2],
}

pub const TABLE_TOL: f64 = 1e-12;

impl CoincidenceTable {
    pub fn from_probs(probs: [[[[f64; 2]; 2]; 2]; 2]) -> Result<Self> {
        for (i, row) in probs.iter().enumerate() {
            for (j, pair) in row.iter().enumerate() {
                let mut sum = 0.0;
                for &p in pair.iter().flatten() {
                    if !(-TABLE_TOL..=1.0 + TABLE_TOL).contains(&p) {
                        return domain(format!("table entry {p} outside [0,1] for pair ({i},{j})"));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > TABLE_TOL {
                    return domain(format!("basis pair ({i},{j}) sums to {sum}"));
                }
            }
        }
        Ok(Self { probs })
    }

    /// Normalizes raw counts per basis pair.
    pub fn from_counts(counts: [[[[u64; 2]; 2]; 2]; 2]) -> Result<Self> {
        let mut probs = [[[[0.0; 2]; 2]; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let total: u64 = counts[i][j].iter().flatten().sum();
                if total == 0 {
                    return Err(crate::Error::InsufficientData(format!(
                        "no coincidences in basis pair (A{i}, B{j})"
                    )));
                }
                for x in 0..2 {
                    for y in 0..2 {
                        probs[i][j][x][y] = counts[i][j][x][y] as f64 / total as f64;
                    }
                }
            }
        }
        Self::from_probs(probs)
    }

    pub fn p(&self, a: AliceOutcome, b: BobOutcome) -> f64 {
        self.probs[a.basis()][b.basis()][a.is_bar() as usize][b.is_bar() as usize]
    }

    /// The four probabilities of one basis pair, ordered `[x][y]` with index 1
    /// meaning the barred outcome.
    pub fn pair(&self, alice_basis: usize, bob_basis: usize) -> [[f64; 2]; 2] {
        self.probs[alice_basis][bob_basis]
    }

    pub fn raw(&self) -> &[[[[f64; 2]; 2]; 2]; 2] {
        &self.probs
    }
}

/// `p(x,y) = <x,y| ρ |x,y>` for every outcome pair of every basis pair.
pub fn coincidence_probs(state: &TwoQubitState, phi: f64) -> CoincidenceTable {
    let mut probs = [[[[0.0; 2]; 2]; 2]; 2];
    for a in AliceOutcome::ALL {
        for b in BobOutcome::ALL {
            let v = a.ket().kronecker(&b.ket(phi));
            let v = Ket4::new(v[0], v[1], v[2], v[3]);
            probs[a.basis()][b.basis()][a.is_bar() as usize][b.is_bar() as usize] =
                state.expectation(&v).clamp(0.0, 1.0);
        }
    }
    CoincidenceTable { probs }
}
