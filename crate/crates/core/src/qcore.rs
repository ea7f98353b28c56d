//! Dense complex algebra for four two-state particles.
//!
//! Amplitudes of the four-particle state are stored in a fixed 16-entry
//! array. Basis index `8·b₁ + 4·b₂ + 2·b₃ + b₄` puts particle 1 in the
//! most significant bit, so index 5 = `0b0101` is the ket `|0₁1₂0₃1₄⟩`.
//! Two-particle kets use `2·bᵢ + bⱼ` for their declared pair `(i, j)`, and
//! the single-particle column vectors are `|0⟩ = (1, 0)ᵀ`, `|1⟩ = (0, 1)ᵀ`.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

/// Scalar coefficient of a ket.
pub type Amplitude = Complex64;

/// The 16 raw amplitudes of a four-particle vector, not necessarily normalized.
pub type RawAmplitudes = [Amplitude; 16];

/// Absolute tolerance for every exact-algebra check.
pub const TOLERANCE: f64 = 1e-12;

/// Number of particles in the swapping setup.
pub const PARTICLES: usize = 4;

const ZERO: Amplitude = Complex64::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("particle {0} is outside 1..=4")]
    InvalidParticle(u8),
    #[error("particle {0} named more than once")]
    DuplicateParticle(u8),
    #[error("pair kets on {first:?} and {second:?} do not cover particles 1-4 exactly once")]
    IncompleteCover { first: (u8, u8), second: (u8, u8) },
    #[error("basis is not orthonormal (Gram residual {residual:e})")]
    NotOrthonormal { residual: f64 },
    #[error("squared norm {0} differs from 1")]
    NotNormalized(f64),
    #[error("amplitude is not finite")]
    NonFinite,
    #[error("keep-set must be a non-empty proper subset of the system's particles")]
    InvalidKeepSet,
    #[error("cannot renormalize a vector of zero norm")]
    ZeroNorm,
}

fn check_particle(p: u8) -> Result<(), AlgebraError> {
    if (1..=PARTICLES as u8).contains(&p) {
        Ok(())
    } else {
        Err(AlgebraError::InvalidParticle(p))
    }
}

/// Quantum number (0 or 1) of `particle` in the 16-dimensional basis index.
pub fn bit_of(index: usize, particle: u8) -> usize {
    (index >> (PARTICLES - particle as usize)) & 1
}

/// Basis index of `|b₁ b₂ b₃ b₄⟩`.
pub fn basis_index(bits: [u8; 4]) -> usize {
    bits.iter()
        .fold(0, |acc, &b| (acc << 1) | usize::from(b & 1))
}

fn norm_sqr(amps: &[Amplitude]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

fn inner(bra: &[Amplitude], ket: &[Amplitude]) -> Amplitude {
    bra.iter().zip(ket).map(|(b, k)| b.conj() * k).sum()
}

fn validate(amps: &[Amplitude]) -> Result<(), AlgebraError> {
    if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(AlgebraError::NonFinite);
    }
    let n = norm_sqr(amps);
    if (n - 1.0).abs() > TOLERANCE {
        return Err(AlgebraError::NotNormalized(n));
    }
    Ok(())
}

/// Normalized pure state of particles 1-4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    amplitudes: RawAmplitudes,
}

impl StateVector {
    pub fn from_amplitudes(amplitudes: RawAmplitudes) -> Result<Self, AlgebraError> {
        validate(&amplitudes)?;
        Ok(Self { amplitudes })
    }

    /// Rescales a nonzero raw vector to unit norm.
    pub fn renormalized(raw: RawAmplitudes) -> Result<Self, AlgebraError> {
        let n = norm_sqr(&raw);
        if !(n > 0.0) || !n.is_finite() {
            return Err(AlgebraError::ZeroNorm);
        }
        let scale = 1.0 / n.sqrt();
        let mut amplitudes = raw;
        for a in &mut amplitudes {
            *a *= scale;
        }
        Ok(Self { amplitudes })
    }

    /// `|Ψ⁻₁,₂⟩|Ψ⁻₃,₄⟩`, the two independent singlets the swapping starts from.
    pub fn two_singlets() -> Self {
        let singlet = bell_state(BellKind::PsiMinus);
        tensor_to_four(&singlet, &singlet)
    }

    pub fn amplitudes(&self) -> &RawAmplitudes {
        &self.amplitudes
    }

    pub fn amplitude(&self, bits: [u8; 4]) -> Amplitude {
        self.amplitudes[basis_index(bits)]
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Amplitude {
        inner(&self.amplitudes, &other.amplitudes)
    }

    /// Applies `|ket⟩⟨ket| ⊗ 𝕀` where `ket` lives on `particles` (first named
    /// particle most significant) and the identity acts on the rest.
    pub fn project(&self, particles: &[u8], ket: &[Amplitude]) -> Result<RawAmplitudes, AlgebraError> {
        project_raw(&self.amplitudes, particles, ket)
    }
}

/// Raw form of [`StateVector::project`]; accepts unnormalized input so
/// projectors can be composed.
pub fn project_raw(
    amps: &RawAmplitudes,
    particles: &[u8],
    ket: &[Amplitude],
) -> Result<RawAmplitudes, AlgebraError> {
    check_distinct(particles)?;
    assert_eq!(ket.len(), 1 << particles.len(), "ket dimension must match particle count");

    let mask: usize = particles
        .iter()
        .map(|&p| 1usize << (PARTICLES - p as usize))
        .sum();
    let sub_index = |idx: usize| {
        particles
            .iter()
            .fold(0, |acc, &p| (acc << 1) | bit_of(idx, p))
    };

    // overlap with the ket, one entry per configuration of the other particles
    let mut overlap = [ZERO; 16];
    for (idx, a) in amps.iter().enumerate() {
        overlap[idx & !mask] += ket[sub_index(idx)].conj() * a;
    }
    let mut out = [ZERO; 16];
    for (idx, slot) in out.iter_mut().enumerate() {
        *slot = ket[sub_index(idx)] * overlap[idx & !mask];
    }
    Ok(out)
}

pub fn raw_norm_sqr(amps: &RawAmplitudes) -> f64 {
    norm_sqr(amps)
}

fn check_distinct(particles: &[u8]) -> Result<(), AlgebraError> {
    for (k, &p) in particles.iter().enumerate() {
        check_particle(p)?;
        if particles[..k].contains(&p) {
            return Err(AlgebraError::DuplicateParticle(p));
        }
    }
    Ok(())
}

/// The four maximally entangled two-particle states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BellKind {
    PsiMinus,
    PsiPlus,
    PhiMinus,
    PhiPlus,
}

impl BellKind {
    pub const ALL: [BellKind; 4] = [
        BellKind::PsiMinus,
        BellKind::PsiPlus,
        BellKind::PhiMinus,
        BellKind::PhiPlus,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BellKind::PsiMinus => "Ψ⁻",
            BellKind::PsiPlus => "Ψ⁺",
            BellKind::PhiMinus => "Φ⁻",
            BellKind::PhiPlus => "Φ⁺",
        }
    }
}

impl fmt::Display for BellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Normalized pure state of a particle pair, index `2·bᵢ + bⱼ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitState {
    amplitudes: [Amplitude; 4],
}

impl TwoQubitState {
    pub fn from_amplitudes(amplitudes: [Amplitude; 4]) -> Result<Self, AlgebraError> {
        validate(&amplitudes)?;
        Ok(Self { amplitudes })
    }

    pub(crate) fn from_real(re: [f64; 4]) -> Self {
        Self {
            amplitudes: re.map(|r| Complex64::new(r, 0.0)),
        }
    }

    pub fn amplitudes(&self) -> &[Amplitude; 4] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }

    pub fn inner(&self, other: &TwoQubitState) -> Amplitude {
        inner(&self.amplitudes, &other.amplitudes)
    }

    /// Reduced density matrix of the pair's first (`keep_first`) or second particle.
    pub fn reduce(&self, keep_first: bool) -> DensityMatrix {
        let (keep, labels) = if keep_first { ([1u8], [1u8, 2]) } else { ([2u8], [1, 2]) };
        reduce_pure(&self.amplitudes, &labels, &keep)
    }
}

pub fn bell_state(kind: BellKind) -> TwoQubitState {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    TwoQubitState::from_real(match kind {
        BellKind::PsiMinus => [0.0, h, -h, 0.0],
        BellKind::PsiPlus => [0.0, h, h, 0.0],
        BellKind::PhiMinus => [h, 0.0, 0.0, -h],
        BellKind::PhiPlus => [h, 0.0, 0.0, h],
    })
}

/// `|bᵢ bⱼ⟩`. Panics if either bit is not 0 or 1.
pub fn product_state(b_i: u8, b_j: u8) -> TwoQubitState {
    assert!(b_i <= 1 && b_j <= 1, "product_state takes bits, got ({b_i}, {b_j})");
    let mut re = [0.0; 4];
    re[usize::from(2 * b_i + b_j)] = 1.0;
    TwoQubitState::from_real(re)
}

/// `pair_a` on particles (1,2) tensored with `pair_b` on (3,4).
pub fn tensor_to_four(pair_a: &TwoQubitState, pair_b: &TwoQubitState) -> StateVector {
    let mut amplitudes = [ZERO; 16];
    for (idx, slot) in amplitudes.iter_mut().enumerate() {
        *slot = pair_a.amplitudes[idx >> 2] * pair_b.amplitudes[idx & 3];
    }
    StateVector { amplitudes }
}

/// A two-particle ket attached to a concrete ordered pair of particles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairKet {
    state: TwoQubitState,
    particles: (u8, u8),
}

pub fn embed_pair_basis(state: &TwoQubitState, particles: (u8, u8)) -> Result<PairKet, AlgebraError> {
    check_distinct(&[particles.0, particles.1])?;
    Ok(PairKet {
        state: *state,
        particles,
    })
}

impl PairKet {
    pub fn particles(&self) -> (u8, u8) {
        self.particles
    }

    pub fn state(&self) -> &TwoQubitState {
        &self.state
    }

    /// Amplitude this ket assigns to the pair's bits within a 16-dim index.
    pub fn amplitude_at(&self, index: usize) -> Amplitude {
        let (i, j) = self.particles;
        self.state.amplitudes[2 * bit_of(index, i) + bit_of(index, j)]
    }

    /// The four-particle product of two kets on complementary pairs.
    pub fn combine(&self, other: &PairKet) -> Result<StateVector, AlgebraError> {
        let all = [
            self.particles.0,
            self.particles.1,
            other.particles.0,
            other.particles.1,
        ];
        if check_distinct(&all).is_err() {
            return Err(AlgebraError::IncompleteCover {
                first: self.particles,
                second: other.particles,
            });
        }
        let mut amplitudes = [ZERO; 16];
        for (idx, slot) in amplitudes.iter_mut().enumerate() {
            *slot = self.amplitude_at(idx) * other.amplitude_at(idx);
        }
        Ok(StateVector { amplitudes })
    }

    /// `⟨self ⊗ other | state⟩`.
    pub fn overlap(&self, other: &PairKet, state: &StateVector) -> Result<Amplitude, AlgebraError> {
        Ok(self.combine(other)?.inner(state))
    }
}

/// Largest entry of `|G − 𝕀|` for the Gram matrix of `basis`.
pub fn gram_residual(basis: &[TwoQubitState]) -> f64 {
    let mut worst = 0.0f64;
    for (m, a) in basis.iter().enumerate() {
        for (n, b) in basis.iter().enumerate() {
            let target = if m == n { 1.0 } else { 0.0 };
            worst = worst.max((a.inner(b) - target).norm());
        }
    }
    worst
}

/// Coefficients `c[m][n] = ⟨basis14[m] ⊗ basis23[n] | state⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expansion {
    pub coefficients: [[Amplitude; 4]; 4],
    basis14: [TwoQubitState; 4],
    basis23: [TwoQubitState; 4],
}

impl Expansion {
    pub fn get(&self, m: usize, n: usize) -> Amplitude {
        self.coefficients[m][n]
    }

    /// `Σ |c|²`.
    pub fn weight(&self) -> f64 {
        self.coefficients.iter().flatten().map(|c| c.norm_sqr()).sum()
    }

    /// Rebuilds the expanded vector `Σ c[m][n] |basis14[m]⟩|basis23[n]⟩`.
    pub fn reconstruct(&self) -> RawAmplitudes {
        let mut out = [ZERO; 16];
        for (m, b14) in self.basis14.iter().enumerate() {
            let outer = PairKet { state: *b14, particles: (1, 4) };
            for (n, b23) in self.basis23.iter().enumerate() {
                let inner_ket = PairKet { state: *b23, particles: (2, 3) };
                let c = self.coefficients[m][n];
                for (idx, slot) in out.iter_mut().enumerate() {
                    *slot += c * outer.amplitude_at(idx) * inner_ket.amplitude_at(idx);
                }
            }
        }
        out
    }

    /// Nonzero coefficients (above tolerance) as `(m, n, c)`.
    pub fn support(&self) -> Vec<(usize, usize, Amplitude)> {
        let mut out = Vec::new();
        for m in 0..4 {
            for n in 0..4 {
                let c = self.coefficients[m][n];
                if c.norm() > TOLERANCE {
                    out.push((m, n, c));
                }
            }
        }
        out
    }
}

/// Re-expresses `state` over the pairs (1,4) and (2,3).
pub fn expand_in_pair_bases(
    state: &StateVector,
    basis14: &[TwoQubitState; 4],
    basis23: &[TwoQubitState; 4],
) -> Result<Expansion, AlgebraError> {
    for basis in [basis14, basis23] {
        let residual = gram_residual(basis);
        if residual > TOLERANCE {
            return Err(AlgebraError::NotOrthonormal { residual });
        }
    }
    let mut coefficients = [[ZERO; 4]; 4];
    for (m, b14) in basis14.iter().enumerate() {
        let outer = embed_pair_basis(b14, (1, 4))?;
        for (n, b23) in basis23.iter().enumerate() {
            let inner_ket = embed_pair_basis(b23, (2, 3))?;
            coefficients[m][n] = outer.overlap(&inner_ket, state)?;
        }
    }
    Ok(Expansion {
        coefficients,
        basis14: *basis14,
        basis23: *basis23,
    })
}

/// Density matrix over an ordered set of particles; the first listed
/// particle is the most significant bit of the row/column index.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    particles: Vec<u8>,
    entries: DMatrix<Amplitude>,
}

impl DensityMatrix {
    /// `(1/2)𝕀₂` on a single particle.
    pub fn maximally_mixed(particle: u8) -> Self {
        Self {
            particles: vec![particle],
            entries: DMatrix::from_diagonal_element(2, 2, Complex64::new(0.5, 0.0)),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn particles(&self) -> &[u8] {
        &self.particles
    }

    pub fn entry(&self, row: usize, col: usize) -> Amplitude {
        self.entries[(row, col)]
    }

    pub fn matrix(&self) -> &DMatrix<Amplitude> {
        &self.entries
    }

    pub fn trace(&self) -> Amplitude {
        self.entries.trace()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        (&self.entries - self.entries.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.entries.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Checks Hermiticity, unit trace and positivity at [`TOLERANCE`].
    pub fn is_valid_state(&self) -> bool {
        self.hermiticity_residual() <= TOLERANCE
            && (self.trace() - Complex64::new(1.0, 0.0)).norm() <= TOLERANCE
            && self.eigenvalues().first().map_or(false, |&e| e >= -TOLERANCE)
    }

    /// Largest elementwise distance; `None` if the particle sets differ.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> Option<f64> {
        if self.particles != other.particles {
            return None;
        }
        Some((&self.entries - &other.entries).iter().map(|z| z.norm()).fold(0.0, f64::max))
    }

    /// Sums out one particle.
    pub fn trace_out(&self, particle: u8) -> Result<DensityMatrix, AlgebraError> {
        let pos = self
            .particles
            .iter()
            .position(|&p| p == particle)
            .ok_or(AlgebraError::InvalidKeepSet)?;
        let n = self.particles.len();
        if n < 2 {
            return Err(AlgebraError::InvalidKeepSet);
        }
        let shift = n - 1 - pos;
        let kept: Vec<u8> = self.particles.iter().copied().filter(|&p| p != particle).collect();
        let dim = 1 << (n - 1);
        // reinsert the traced bit at its position
        let widen = |k: usize, bit: usize| {
            let high = (k >> shift) << (shift + 1);
            let low = k & ((1 << shift) - 1);
            high | (bit << shift) | low
        };
        let mut out = DMatrix::from_element(dim, dim, ZERO);
        for r in 0..dim {
            for c in 0..dim {
                out[(r, c)] = (0..2).map(|b| self.entries[(widen(r, b), widen(c, b))]).sum();
            }
        }
        Ok(DensityMatrix {
            particles: kept,
            entries: out,
        })
    }
}

impl fmt::Display for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.dim() {
            let row: Vec<String> = (0..self.dim())
                .map(|c| {
                    let z = self.entry(r, c);
                    if z.im.abs() <= TOLERANCE {
                        format!("{:+.6}", z.re)
                    } else {
                        format!("{:+.6}{:+.6}i", z.re, z.im)
                    }
                })
                .collect();
            writeln!(f, "[{}]", row.join(" "))?;
        }
        Ok(())
    }
}

/// `ρ_keep[r][c] = Σₑ ψ[r,e] ψ*[c,e]` for a pure state on `labels`.
fn reduce_pure(amps: &[Amplitude], labels: &[u8], keep: &[u8]) -> DensityMatrix {
    let n = labels.len();
    let mut keep_sorted: Vec<u8> = keep.to_vec();
    keep_sorted.sort_unstable();
    let positions: Vec<usize> = keep_sorted
        .iter()
        .map(|k| labels.iter().position(|l| l == k).expect("kept particle belongs to the system"))
        .collect();
    let split = |idx: usize| {
        let mut kept = 0usize;
        let mut rest = 0usize;
        for pos in 0..n {
            let bit = (idx >> (n - 1 - pos)) & 1;
            if positions.contains(&pos) {
                kept = (kept << 1) | bit;
            } else {
                rest = (rest << 1) | bit;
            }
        }
        (kept, rest)
    };
    let dim = 1 << keep_sorted.len();
    let rest_dim = 1 << (n - keep_sorted.len());
    let mut grid = vec![vec![ZERO; rest_dim]; dim];
    for (idx, a) in amps.iter().enumerate() {
        let (k, r) = split(idx);
        grid[k][r] = *a;
    }
    let entries = DMatrix::from_fn(dim, dim, |r, c| inner(&grid[c], &grid[r]));
    DensityMatrix {
        particles: keep_sorted,
        entries,
    }
}

/// Reduced density matrix of `state` on the particles in `keep`.
pub fn partial_trace(state: &StateVector, keep: &[u8]) -> Result<DensityMatrix, AlgebraError> {
    check_distinct(keep)?;
    if keep.is_empty() || keep.len() >= PARTICLES {
        return Err(AlgebraError::InvalidKeepSet);
    }
    Ok(reduce_pure(&state.amplitudes, &[1, 2, 3, 4], keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn re(v: &[Amplitude]) -> Vec<f64> {
        v.iter().map(|a| a.re).collect()
    }

    /// Brute-force sum over the 16 ket labels, independent of `project_raw`
    /// and `PairKet` bookkeeping.
    fn oracle_expansion(
        state: &StateVector,
        b14: &TwoQubitState,
        b23: &TwoQubitState,
    ) -> Amplitude {
        let mut acc = ZERO;
        for b1 in 0..2u8 {
            for b2 in 0..2u8 {
                for b3 in 0..2u8 {
                    for b4 in 0..2u8 {
                        let bra = b14.amplitudes()[usize::from(2 * b1 + b4)]
                            * b23.amplitudes()[usize::from(2 * b2 + b3)];
                        acc += bra.conj() * state.amplitude([b1, b2, b3, b4]);
                    }
                }
            }
        }
        acc
    }

    #[test]
    fn bell_states_have_textbook_amplitudes() {
        assert_eq!(re(bell_state(BellKind::PsiMinus).amplitudes()), vec![0.0, H, -H, 0.0]);
        assert_eq!(re(bell_state(BellKind::PhiPlus).amplitudes()), vec![H, 0.0, 0.0, H]);
        for kind in BellKind::ALL {
            assert_abs_diff_eq!(bell_state(kind).norm_sqr(), 1.0, epsilon = TOLERANCE);
        }
    }

    #[test]
    fn product_states_are_basis_vectors() {
        assert_eq!(re(product_state(0, 0).amplitudes()), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(re(product_state(1, 0).amplitudes()), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(re(product_state(1, 1).amplitudes()), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    #[should_panic]
    fn product_state_rejects_non_bits() {
        product_state(2, 0);
    }

    #[test]
    fn bases_are_orthonormal() {
        let bell = BellKind::ALL.map(bell_state);
        let prod = [(0, 0), (0, 1), (1, 0), (1, 1)].map(|(a, b)| product_state(a, b));
        assert!(gram_residual(&bell) <= TOLERANCE);
        assert!(gram_residual(&prod) <= TOLERANCE);
    }

    #[test]
    fn two_singlets_support() {
        let psi = StateVector::two_singlets();
        for (idx, a) in psi.amplitudes().iter().enumerate() {
            let expected = match idx {
                5 | 10 => 0.5,
                6 | 9 => -0.5,
                _ => 0.0,
            };
            assert_abs_diff_eq!(a.re, expected, epsilon = TOLERANCE);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = TOLERANCE);
        }
        let basis = tensor_to_four(&product_state(0, 0), &product_state(0, 0));
        assert_eq!(basis.amplitudes()[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn pair_overlaps_with_two_singlets() {
        let psi = StateVector::two_singlets();
        let singlet = bell_state(BellKind::PsiMinus);
        let a = embed_pair_basis(&singlet, (2, 3)).unwrap();
        let b = embed_pair_basis(&singlet, (1, 4)).unwrap();
        assert_abs_diff_eq!(a.overlap(&b, &psi).unwrap().re, -0.5, epsilon = TOLERANCE);
        assert_abs_diff_eq!(
            oracle_expansion(&psi, &singlet, &singlet).re,
            -0.5,
            epsilon = TOLERANCE
        );

        let a = embed_pair_basis(&product_state(1, 0), (2, 3)).unwrap();
        let b = embed_pair_basis(&product_state(0, 1), (1, 4)).unwrap();
        assert_abs_diff_eq!(a.overlap(&b, &psi).unwrap().re, 0.5, epsilon = TOLERANCE);
    }

    #[test]
    fn embed_rejects_duplicates_and_overlapping_pairs() {
        let singlet = bell_state(BellKind::PsiMinus);
        assert_eq!(
            embed_pair_basis(&singlet, (2, 2)),
            Err(AlgebraError::DuplicateParticle(2))
        );
        assert_eq!(
            embed_pair_basis(&singlet, (0, 2)),
            Err(AlgebraError::InvalidParticle(0))
        );
        let a = embed_pair_basis(&singlet, (1, 2)).unwrap();
        let b = embed_pair_basis(&singlet, (2, 3)).unwrap();
        assert!(matches!(a.combine(&b), Err(AlgebraError::IncompleteCover { .. })));
    }

    #[test]
    fn bell_expansion_matches_oracle() {
        let psi = StateVector::two_singlets();
        let bell = BellKind::ALL.map(bell_state);
        let exp = expand_in_pair_bases(&psi, &bell, &bell).unwrap();
        for m in 0..4 {
            for n in 0..4 {
                let want = oracle_expansion(&psi, &bell[m], &bell[n]);
                assert_abs_diff_eq!((exp.get(m, n) - want).norm(), 0.0, epsilon = TOLERANCE);
            }
        }
        // frozen from the oracle: diagonal only, Ψ⁻ -, Ψ⁺ +, Φ⁻ +, Φ⁺ -
        let frozen = [-0.5, 0.5, 0.5, -0.5];
        for m in 0..4 {
            for n in 0..4 {
                let want = if m == n { frozen[m] } else { 0.0 };
                assert_abs_diff_eq!(exp.get(m, n).re, want, epsilon = TOLERANCE);
            }
        }
    }

    #[test]
    fn product_expansion_matches_oracle() {
        let psi = StateVector::two_singlets();
        let prod = [(0, 0), (0, 1), (1, 0), (1, 1)].map(|(a, b)| product_state(a, b));
        let exp = expand_in_pair_bases(&psi, &prod, &prod).unwrap();
        let support: Vec<(usize, usize, f64)> =
            exp.support().into_iter().map(|(m, n, c)| (m, n, c.re)).collect();
        // (01,10):+, (00,11):-, (11,00):-, (10,01):+
        let mut want = vec![(1, 2, 0.5), (0, 3, -0.5), (3, 0, -0.5), (2, 1, 0.5)];
        want.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        assert_eq!(support.len(), 4);
        for (got, want) in support.iter().zip(&want) {
            assert_eq!((got.0, got.1), (want.0, want.1));
            assert_abs_diff_eq!(got.2, want.2, epsilon = TOLERANCE);
        }
        for m in 0..4 {
            for n in 0..4 {
                let o = oracle_expansion(&psi, &prod[m], &prod[n]);
                assert_abs_diff_eq!((exp.get(m, n) - o).norm(), 0.0, epsilon = TOLERANCE);
            }
        }
    }

    #[test]
    fn expansion_rejects_non_orthonormal_basis() {
        let psi = StateVector::two_singlets();
        let bell = BellKind::ALL.map(bell_state);
        let mut bad = bell;
        bad[1] = bad[0];
        assert!(matches!(
            expand_in_pair_bases(&psi, &bad, &bell),
            Err(AlgebraError::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn singlet_reduces_to_maximally_mixed() {
        let singlet = bell_state(BellKind::PsiMinus);
        for keep_first in [true, false] {
            let rho = singlet.reduce(keep_first);
            let mixed = DensityMatrix {
                particles: rho.particles().to_vec(),
                entries: DensityMatrix::maximally_mixed(1).entries,
            };
            assert!(rho.max_abs_diff(&mixed).unwrap() <= TOLERANCE);
        }
        let rho = product_state(0, 0).reduce(false);
        assert_abs_diff_eq!(rho.entry(0, 0).re, 1.0, epsilon = TOLERANCE);
        assert_abs_diff_eq!(rho.entry(1, 1).norm(), 0.0, epsilon = TOLERANCE);
    }

    /// Full 16×16 outer product summed over the discarded indices.
    fn oracle_single_reduction(state: &StateVector, keep: u8) -> [[Amplitude; 2]; 2] {
        let mut out = [[ZERO; 2]; 2];
        for r in 0..16 {
            for c in 0..16 {
                let same_rest = (0..4u8)
                    .filter(|&p| p + 1 != keep)
                    .all(|p| bit_of(r, p + 1) == bit_of(c, p + 1));
                if same_rest {
                    out[bit_of(r, keep)][bit_of(c, keep)] +=
                        state.amplitudes()[r] * state.amplitudes()[c].conj();
                }
            }
        }
        out
    }

    #[test]
    fn every_single_particle_of_two_singlets_is_maximally_mixed() {
        let psi = StateVector::two_singlets();
        for k in 1..=4u8 {
            let rho = partial_trace(&psi, &[k]).unwrap();
            let oracle = oracle_single_reduction(&psi, k);
            for r in 0..2 {
                for c in 0..2 {
                    let want = if r == c { 0.5 } else { 0.0 };
                    assert_abs_diff_eq!((rho.entry(r, c) - want).norm(), 0.0, epsilon = TOLERANCE);
                    assert_abs_diff_eq!((oracle[r][c] - want).norm(), 0.0, epsilon = TOLERANCE);
                }
            }
            assert!(rho.is_valid_state());
        }
    }

    #[test]
    fn partial_trace_rejects_bad_keep_sets() {
        let psi = StateVector::two_singlets();
        assert_eq!(partial_trace(&psi, &[]), Err(AlgebraError::InvalidKeepSet));
        assert_eq!(partial_trace(&psi, &[1, 2, 3, 4]), Err(AlgebraError::InvalidKeepSet));
        assert_eq!(partial_trace(&psi, &[1, 1]), Err(AlgebraError::DuplicateParticle(1)));
    }

    #[test]
    fn renormalize_zero_vector_fails() {
        assert_eq!(StateVector::renormalized([ZERO; 16]), Err(AlgebraError::ZeroNorm));
        let mut nan = [ZERO; 16];
        nan[0] = Complex64::new(f64::NAN, 0.0);
        assert_eq!(StateVector::from_amplitudes(nan), Err(AlgebraError::NonFinite));
    }

    fn arb_state() -> impl Strategy<Value = StateVector> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16)
            .prop_filter("nonzero", |v| v.iter().map(|(a, b)| a * a + b * b).sum::<f64>() > 1e-3)
            .prop_map(|v| {
                let mut raw = [ZERO; 16];
                for (slot, (a, b)) in raw.iter_mut().zip(v) {
                    *slot = Complex64::new(a, b);
                }
                StateVector::renormalized(raw).unwrap()
            })
    }

    proptest! {
        #[test]
        fn expansion_round_trips(state in arb_state()) {
            let bell = BellKind::ALL.map(bell_state);
            let prod = [(0, 0), (0, 1), (1, 0), (1, 1)].map(|(a, b)| product_state(a, b));
            for (b14, b23) in [(&bell, &bell), (&prod, &prod), (&bell, &prod)] {
                let exp = expand_in_pair_bases(&state, b14, b23).unwrap();
                prop_assert!((exp.weight() - 1.0).abs() <= TOLERANCE);
                let back = exp.reconstruct();
                for (x, y) in back.iter().zip(state.amplitudes()) {
                    prop_assert!((x - y).norm() <= TOLERANCE);
                }
            }
        }

        #[test]
        fn sequential_trace_equals_direct(state in arb_state(), i in 1u8..=4, j in 1u8..=4) {
            prop_assume!(i != j);
            let keep_after_i: Vec<u8> = (1..=4).filter(|&p| p != i).collect();
            let step = partial_trace(&state, &keep_after_i).unwrap().trace_out(j).unwrap();
            let keep_both: Vec<u8> = (1..=4).filter(|&p| p != i && p != j).collect();
            let direct = partial_trace(&state, &keep_both).unwrap();
            prop_assert!(step.max_abs_diff(&direct).unwrap() <= TOLERANCE);
            prop_assert!(direct.is_valid_state());
            prop_assert!(step.is_valid_state());
        }
    }
}
