//! Eve's two measurement contexts on the inner pair and the angle
//! measurements Alice and Bob apply to the outer particles.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qcore::{
    bell_state, gram_residual, product_state, project_raw, AlgebraError, Amplitude, BellKind,
    RawAmplitudes, TwoQubitState,
};

/// The pair Eve records.
pub const EVE_PAIR: (u8, u8) = (2, 3);
pub const ALICE_PARTICLE: u8 = 1;
pub const BOB_PARTICLE: u8 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContextError {
    #[error("outcome index {0} is outside 0..=3")]
    InvalidOutcome(usize),
    #[error("unknown outcome label `{0}`")]
    UnknownLabel(String),
    #[error("unknown context `{0}`")]
    UnknownContext(String),
    #[error("unknown sign `{0}`")]
    UnknownSign(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContextName {
    #[serde(rename = "BELL")]
    Bell,
    #[serde(rename = "PRODUCT")]
    Product,
}

impl ContextName {
    pub const ALL: [ContextName; 2] = [ContextName::Bell, ContextName::Product];

    pub fn as_str(self) -> &'static str {
        match self {
            ContextName::Bell => "BELL",
            ContextName::Product => "PRODUCT",
        }
    }
}

impl fmt::Display for ContextName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContextName {
    type Err = ContextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "BELL" | "B1" => Ok(ContextName::Bell),
            "PRODUCT" | "B2" => Ok(ContextName::Product),
            _ => Err(ContextError::UnknownContext(s.to_string())),
        }
    }
}

/// One of Eve's eight possible outcomes. The label fixes its context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OutcomeLabel {
    Bell(BellKind),
    /// `|b₂ b₃⟩`
    Product(u8, u8),
}

impl OutcomeLabel {
    pub const ALL: [OutcomeLabel; 8] = [
        OutcomeLabel::Bell(BellKind::PsiMinus),
        OutcomeLabel::Bell(BellKind::PsiPlus),
        OutcomeLabel::Bell(BellKind::PhiMinus),
        OutcomeLabel::Bell(BellKind::PhiPlus),
        OutcomeLabel::Product(0, 0),
        OutcomeLabel::Product(0, 1),
        OutcomeLabel::Product(1, 0),
        OutcomeLabel::Product(1, 1),
    ];

    pub fn from_index(context: ContextName, index: usize) -> Result<Self, ContextError> {
        if index > 3 {
            return Err(ContextError::InvalidOutcome(index));
        }
        Ok(match context {
            ContextName::Bell => OutcomeLabel::Bell(BellKind::ALL[index]),
            ContextName::Product => OutcomeLabel::Product((index >> 1) as u8, (index & 1) as u8),
        })
    }

    pub fn context(self) -> ContextName {
        match self {
            OutcomeLabel::Bell(_) => ContextName::Bell,
            OutcomeLabel::Product(..) => ContextName::Product,
        }
    }

    /// Position within the context's fixed outcome order.
    pub fn index(self) -> usize {
        match self {
            OutcomeLabel::Bell(kind) => BellKind::ALL.iter().position(|&k| k == kind).unwrap(),
            OutcomeLabel::Product(a, b) => usize::from(2 * a + b),
        }
    }

    pub fn state(self) -> TwoQubitState {
        match self {
            OutcomeLabel::Bell(kind) => bell_state(kind),
            OutcomeLabel::Product(a, b) => product_state(a, b),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeLabel::Bell(BellKind::PsiMinus) => "psi-",
            OutcomeLabel::Bell(BellKind::PsiPlus) => "psi+",
            OutcomeLabel::Bell(BellKind::PhiMinus) => "phi-",
            OutcomeLabel::Bell(BellKind::PhiPlus) => "phi+",
            OutcomeLabel::Product(0, 0) => "00",
            OutcomeLabel::Product(0, 1) => "01",
            OutcomeLabel::Product(1, 0) => "10",
            OutcomeLabel::Product(..) => "11",
        }
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutcomeLabel {
    type Err = ContextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let label = match lower.as_str() {
            "psi-" | "Ψ⁻" => OutcomeLabel::Bell(BellKind::PsiMinus),
            "psi+" | "Ψ⁺" => OutcomeLabel::Bell(BellKind::PsiPlus),
            "phi-" | "Φ⁻" => OutcomeLabel::Bell(BellKind::PhiMinus),
            "phi+" | "Φ⁺" => OutcomeLabel::Bell(BellKind::PhiPlus),
            "00" => OutcomeLabel::Product(0, 0),
            "01" => OutcomeLabel::Product(0, 1),
            "10" => OutcomeLabel::Product(1, 0),
            "11" => OutcomeLabel::Product(1, 1),
            _ => return Err(ContextError::UnknownLabel(s.to_string())),
        };
        Ok(label)
    }
}

impl TryFrom<String> for OutcomeLabel {
    type Error = ContextError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<OutcomeLabel> for String {
    fn from(label: OutcomeLabel) -> Self {
        label.as_str().to_string()
    }
}

/// An orthonormal four-outcome basis on Eve's pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub name: ContextName,
    pub outcomes: [(OutcomeLabel, TwoQubitState); 4],
}

impl Context {
    pub fn states(&self) -> [TwoQubitState; 4] {
        self.outcomes.map(|(_, s)| s)
    }

    pub fn gram_residual(&self) -> f64 {
        gram_residual(&self.states())
    }
}

/// Outcomes in the fixed order (Ψ⁻, Ψ⁺, Φ⁻, Φ⁺) or (00, 01, 10, 11).
pub fn context_outcomes(name: ContextName) -> Context {
    let outcomes = [0, 1, 2, 3].map(|i| {
        let label = OutcomeLabel::from_index(name, i).expect("index in range");
        (label, label.state())
    });
    Context { name, outcomes }
}

/// Outcome of a single-particle angle measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const ALL: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn value(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    /// Bit 0 ↦ +1, bit 1 ↦ −1.
    pub fn from_bit(bit: u8) -> Self {
        if bit == 0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }

    pub fn index(self) -> usize {
        usize::from(self.bit())
    }
}

impl FromStr for Sign {
    type Err = ContextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "1" | "+1" => Ok(Sign::Plus),
            "-1" => Ok(Sign::Minus),
            other => Err(ContextError::UnknownSign(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn particle(self) -> u8 {
        match self {
            Party::Alice => ALICE_PARTICLE,
            Party::Bob => BOB_PARTICLE,
        }
    }
}

/// Measurement direction of Alice (particle 1) or Bob (particle 4).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleSetting {
    theta: f64,
    owner: Party,
}

impl AngleSetting {
    /// Reduces `theta` into `[0, 2π)`. Panics on non-finite input.
    pub fn new(theta: f64, owner: Party) -> Self {
        assert!(theta.is_finite(), "measurement angle must be finite");
        let mut reduced = theta.rem_euclid(TAU);
        // rem_euclid can round up to exactly 2π for tiny negative input
        if reduced >= TAU {
            reduced = 0.0;
        }
        Self { theta: reduced, owner }
    }

    pub fn alice(theta: f64) -> Self {
        Self::new(theta, Party::Alice)
    }

    pub fn bob(theta: f64) -> Self {
        Self::new(theta, Party::Bob)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn owner(&self) -> Party {
        self.owner
    }

    pub fn basis(&self) -> AngleBasis {
        angle_basis(self.theta)
    }
}

/// Orthonormal single-particle basis for direction `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleBasis {
    pub plus: [Amplitude; 2],
    pub minus: [Amplitude; 2],
}

impl AngleBasis {
    pub fn ket(&self, sign: Sign) -> &[Amplitude; 2] {
        match sign {
            Sign::Plus => &self.plus,
            Sign::Minus => &self.minus,
        }
    }
}

/// plus = cos(θ/2)|0⟩ + sin(θ/2)|1⟩, minus = −sin(θ/2)|0⟩ + cos(θ/2)|1⟩.
pub fn angle_basis(theta: f64) -> AngleBasis {
    let (s, c) = (theta / 2.0).sin_cos();
    AngleBasis {
        plus: [Complex64::new(c, 0.0), Complex64::new(s, 0.0)],
        minus: [Complex64::new(-s, 0.0), Complex64::new(c, 0.0)],
    }
}

/// `E^ψ ⊗ 𝕀` for one outcome of a context, applied by contraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairProjector {
    ket: TwoQubitState,
    particles: (u8, u8),
}

impl PairProjector {
    pub fn apply(&self, amps: &RawAmplitudes) -> RawAmplitudes {
        project_raw(amps, &[self.particles.0, self.particles.1], self.ket.amplitudes())
            .expect("particles validated at construction")
    }
}

pub fn pair_projector(
    context: &Context,
    outcome_index: usize,
    particles: (u8, u8),
) -> Result<PairProjector, ContextError> {
    let (_, ket) = context
        .outcomes
        .get(outcome_index)
        .ok_or(ContextError::InvalidOutcome(outcome_index))?;
    // validates the pair
    crate::qcore::embed_pair_basis(ket, particles)?;
    Ok(PairProjector {
        ket: *ket,
        particles,
    })
}

/// `|±θ⟩⟨±θ|` on a single particle.
pub fn angle_projector(amps: &RawAmplitudes, setting: &AngleSetting, sign: Sign) -> RawAmplitudes {
    project_raw(amps, &[setting.owner().particle()], setting.basis().ket(sign))
        .expect("owner particle is valid")
}
