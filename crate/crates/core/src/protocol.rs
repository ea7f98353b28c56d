//! Delayed-choice swapping trials.
//!
//! Alice records particle 1, Bob particle 4 and Eve the inner pair (2,3).
//! Each trial collapses the two-singlet state one measurement at a time in
//! the order fixed by [`Ordering`]. Eve's report then partitions the
//! resulting records.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contexts::{
    angle_projector, context_outcomes, pair_projector, AngleSetting, ContextError, ContextName,
    OutcomeLabel, Sign, EVE_PAIR,
};
use crate::qcore::{
    raw_norm_sqr, AlgebraError, Amplitude, RawAmplitudes, StateVector, TwoQubitState, TOLERANCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("measurement branch of zero probability selected")]
    ZeroProbability,
    #[error("outcome `{label}` does not belong to the {context} context")]
    LabelContextMismatch { context: ContextName, label: OutcomeLabel },
    #[error("bernoulli probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("unknown ordering `{0}`")]
    UnknownOrdering(String),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Whether Eve measures before or after Alice and Bob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ordering {
    #[serde(rename = "EVE_FIRST")]
    EveFirst,
    #[serde(rename = "EVE_LAST")]
    EveLast,
}

impl Ordering {
    pub fn as_str(self) -> &'static str {
        match self {
            Ordering::EveFirst => "EVE_FIRST",
            Ordering::EveLast => "EVE_LAST",
        }
    }

    fn steps(self) -> [Step; 3] {
        match self {
            Ordering::EveFirst => [Step::Eve, Step::Alice, Step::Bob],
            Ordering::EveLast => [Step::Alice, Step::Bob, Step::Eve],
        }
    }
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ordering {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "EVE_FIRST" => Ok(Ordering::EveFirst),
            "EVE_LAST" => Ok(Ordering::EveLast),
            _ => Err(ProtocolError::UnknownOrdering(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Alice,
    Bob,
    Eve,
}

/// Logical event times within one trial. Eve's context choice and her
/// measurement share one timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Timestamps {
    pub alice: u32,
    pub bob: u32,
    pub eve: u32,
}

impl Timestamps {
    fn for_ordering(ordering: Ordering) -> Self {
        let mut ts = Timestamps { alice: 0, bob: 0, eve: 0 };
        for (t, step) in ordering.steps().into_iter().enumerate() {
            let slot = match step {
                Step::Alice => &mut ts.alice,
                Step::Bob => &mut ts.bob,
                Step::Eve => &mut ts.eve,
            };
            *slot = t as u32;
        }
        ts
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub alice_setting: AngleSetting,
    pub bob_setting: AngleSetting,
    pub alice_outcome: Sign,
    pub bob_outcome: Sign,
    pub eve_context: ContextName,
    pub eve_outcome: OutcomeLabel,
    pub ordering: Ordering,
    pub timestamps: Timestamps,
}

impl TrialRecord {
    pub fn report(&self) -> EveReport {
        EveReport {
            context: self.eve_context,
            outcome: self.eve_outcome,
        }
    }

    pub fn key(&self) -> PartitionKey {
        PartitionKey(self.eve_outcome)
    }

    pub fn product(&self) -> i8 {
        self.alice_outcome.value() * self.bob_outcome.value()
    }

    /// `EVE_LAST` records must show both outer recordings before Eve's choice.
    pub fn is_consistent(&self) -> bool {
        let ts = self.timestamps;
        let ordered = match self.ordering {
            Ordering::EveLast => ts.alice < ts.eve && ts.bob < ts.eve,
            Ordering::EveFirst => ts.eve < ts.alice && ts.eve < ts.bob,
        };
        ordered && self.eve_outcome.context() == self.eve_context
    }
}

/// One of the eight (context, outcome) classes a trial can fall into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartitionKey(pub OutcomeLabel);

impl PartitionKey {
    pub const ALL: [PartitionKey; 8] = [
        PartitionKey(OutcomeLabel::ALL[0]),
        PartitionKey(OutcomeLabel::ALL[1]),
        PartitionKey(OutcomeLabel::ALL[2]),
        PartitionKey(OutcomeLabel::ALL[3]),
        PartitionKey(OutcomeLabel::ALL[4]),
        PartitionKey(OutcomeLabel::ALL[5]),
        PartitionKey(OutcomeLabel::ALL[6]),
        PartitionKey(OutcomeLabel::ALL[7]),
    ];

    pub fn context(self) -> ContextName {
        self.0.context()
    }

    pub fn label(self) -> OutcomeLabel {
        self.0
    }
}

impl fmt::Display for PartitionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.context(), self.0)
    }
}

impl FromStr for PartitionKey {
    type Err = ContextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // accepts "psi-" as well as "BELL:psi-"
        let label = s.rsplit(':').next().unwrap_or(s);
        Ok(PartitionKey(label.parse()?))
    }
}

/// What Eve tells Alice and Bob after a trial: her context and outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EveReport {
    context: ContextName,
    outcome: OutcomeLabel,
}

impl EveReport {
    pub fn new(context: ContextName, outcome: OutcomeLabel) -> Result<Self, ProtocolError> {
        if outcome.context() != context {
            return Err(ProtocolError::LabelContextMismatch { context, label: outcome });
        }
        Ok(Self { context, outcome })
    }

    pub fn context(&self) -> ContextName {
        self.context
    }

    pub fn outcome(&self) -> OutcomeLabel {
        self.outcome
    }

    pub fn key(&self) -> PartitionKey {
        PartitionKey(self.outcome)
    }

    /// State of particles (1,4) left behind by Eve's outcome on the
    /// two-singlet source, index `2·b₁ + b₄`.
    pub fn partner_state(&self) -> Result<TwoQubitState, ProtocolError> {
        let ket = self.outcome.state();
        let projected = StateVector::two_singlets().project(&[EVE_PAIR.0, EVE_PAIR.1], ket.amplitudes())?;
        let mut outer = [Amplitude::new(0.0, 0.0); 4];
        for (idx, a) in projected.iter().enumerate() {
            let b = |p: u8| crate::qcore::bit_of(idx, p);
            outer[2 * b(1) + b(4)] += ket.amplitudes()[2 * b(2) + b(3)].conj() * a;
        }
        let norm = outer.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm <= TOLERANCE {
            return Err(ProtocolError::ZeroProbability);
        }
        Ok(TwoQubitState::from_amplitudes(outer.map(|a| a / norm))?)
    }

    /// Eve's rule for a product outcome: the outer bits are the inverse of
    /// hers, `b ↦ (b + 1) mod 2`. `None` for Bell outcomes.
    pub fn inverted_bits(&self) -> Option<(u8, u8)> {
        match self.outcome {
            OutcomeLabel::Product(b2, b3) => Some(((b2 + 1) % 2, (b3 + 1) % 2)),
            OutcomeLabel::Bell(_) => None,
        }
    }
}

/// Born-rule choice among unnormalized branches of a normalized state.
fn sample_branch<R: Rng + ?Sized>(
    branches: &[RawAmplitudes],
    rng: &mut R,
) -> Result<(usize, StateVector), ProtocolError> {
    let weights: Vec<f64> = branches.iter().map(raw_norm_sqr).collect();
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut pick = None;
    for (i, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        acc += w;
        pick = Some(i);
        if u < acc {
            break;
        }
    }
    let i = pick.ok_or(ProtocolError::ZeroProbability)?;
    let state = StateVector::renormalized(branches[i]).map_err(|_| ProtocolError::ZeroProbability)?;
    Ok((i, state))
}

fn eve_branches(state: &StateVector, context: ContextName) -> Result<Vec<RawAmplitudes>, ProtocolError> {
    let ctx = context_outcomes(context);
    (0..4)
        .map(|i| Ok(pair_projector(&ctx, i, EVE_PAIR)?.apply(state.amplitudes())))
        .collect()
}

fn outer_branches(state: &StateVector, setting: &AngleSetting) -> Vec<RawAmplitudes> {
    Sign::ALL
        .iter()
        .map(|&s| angle_projector(state.amplitudes(), setting, s))
        .collect()
}

/// Runs one trial on a fresh two-singlet state. All randomness is drawn
/// from `rng`, one uniform per measurement in event order.
pub fn run_trial<R: Rng + ?Sized>(
    trial_id: u64,
    alice_theta: f64,
    bob_theta: f64,
    eve_context: ContextName,
    ordering: Ordering,
    rng: &mut R,
) -> Result<TrialRecord, ProtocolError> {
    let alice_setting = AngleSetting::alice(alice_theta);
    let bob_setting = AngleSetting::bob(bob_theta);
    let mut state = StateVector::two_singlets();
    let mut alice_outcome = Sign::Plus;
    let mut bob_outcome = Sign::Plus;
    let mut eve_index = 0;

    for step in ordering.steps() {
        match step {
            Step::Alice => {
                let (i, next) = sample_branch(&outer_branches(&state, &alice_setting), rng)?;
                alice_outcome = Sign::ALL[i];
                state = next;
            }
            Step::Bob => {
                let (i, next) = sample_branch(&outer_branches(&state, &bob_setting), rng)?;
                bob_outcome = Sign::ALL[i];
                state = next;
            }
            Step::Eve => {
                let (i, next) = sample_branch(&eve_branches(&state, eve_context)?, rng)?;
                eve_index = i;
                state = next;
            }
        }
    }

    Ok(TrialRecord {
        trial_id,
        alice_setting,
        bob_setting,
        alice_outcome,
        bob_outcome,
        eve_context,
        eve_outcome: OutcomeLabel::from_index(eve_context, eve_index)?,
        ordering,
        timestamps: Timestamps::for_ordering(ordering),
    })
}

/// Records matching `key`, in input order.
pub fn post_select(records: &[TrialRecord], key: PartitionKey) -> Vec<TrialRecord> {
    records.iter().filter(|r| r.key() == key).copied().collect()
}

/// Exact probabilities `p[alice][bob][eve]` for one context, with sign
/// index 0 = +1, 1 = −1 and Eve's index in the context's outcome order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointDistribution {
    pub context: ContextName,
    pub probabilities: [[[f64; 4]; 2]; 2],
}

impl JointDistribution {
    pub fn get(&self, alice: Sign, bob: Sign, eve_index: usize) -> f64 {
        self.probabilities[alice.index()][bob.index()][eve_index]
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().flatten().flatten().sum()
    }

    pub fn eve_marginal(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for ab in self.probabilities.iter().flatten() {
            for (o, p) in out.iter_mut().zip(ab) {
                *o += p;
            }
        }
        out
    }

    /// `p[alice][bob]` summed over Eve's outcomes.
    pub fn outer_marginal(&self) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                out[a][b] = self.probabilities[a][b].iter().sum();
            }
        }
        out
    }

    /// Probability mass of `key`; zero if it belongs to the other context.
    pub fn mass(&self, key: Option<PartitionKey>) -> f64 {
        match key {
            None => self.total(),
            Some(k) if k.context() != self.context => 0.0,
            Some(k) => self.eve_marginal()[k.label().index()],
        }
    }

    /// Exact `E[a·b]` given `key`; `None` when the key has no mass.
    pub fn correlator(&self, key: Option<PartitionKey>) -> Option<f64> {
        let mass = self.mass(key);
        if mass <= TOLERANCE {
            return None;
        }
        let mut sum = 0.0;
        for a in Sign::ALL {
            for b in Sign::ALL {
                let w = match key {
                    None => self.probabilities[a.index()][b.index()].iter().sum(),
                    Some(k) => self.get(a, b, k.label().index()),
                };
                sum += f64::from(a.value() * b.value()) * w;
            }
        }
        Some(sum / mass)
    }

    pub fn max_abs_diff(&self, other: &JointDistribution) -> f64 {
        self.probabilities
            .iter()
            .flatten()
            .flatten()
            .zip(other.probabilities.iter().flatten().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Enumerates every measurement branch in the order `ordering` prescribes,
/// multiplying conditional Born probabilities along each path.
pub fn joint_distribution(
    alice_theta: f64,
    bob_theta: f64,
    eve_context: ContextName,
    ordering: Ordering,
) -> Result<JointDistribution, ProtocolError> {
    let alice_setting = AngleSetting::alice(alice_theta);
    let bob_setting = AngleSetting::bob(bob_theta);
    let mut probabilities = [[[0.0; 4]; 2]; 2];

    // (probability so far, state, alice, bob, eve)
    let mut frontier = vec![(1.0, StateVector::two_singlets(), 0usize, 0usize, 0usize)];
    for step in ordering.steps() {
        let mut next = Vec::with_capacity(frontier.len() * 4);
        for (p, state, a, b, e) in frontier {
            let branches = match step {
                Step::Alice => outer_branches(&state, &alice_setting),
                Step::Bob => outer_branches(&state, &bob_setting),
                Step::Eve => eve_branches(&state, eve_context)?,
            };
            for (i, raw) in branches.iter().enumerate() {
                let w = raw_norm_sqr(raw);
                if w <= 0.0 {
                    continue;
                }
                let child = StateVector::renormalized(*raw)?;
                let (a, b, e) = match step {
                    Step::Alice => (i, b, e),
                    Step::Bob => (a, i, e),
                    Step::Eve => (a, b, i),
                };
                next.push((p * w, child, a, b, e));
            }
        }
        frontier = next;
    }
    for (p, _, a, b, e) in frontier {
        probabilities[a][b][e] += p;
    }
    Ok(JointDistribution {
        context: eve_context,
        probabilities,
    })
}

/// How Eve picks her context for each trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvePolicy {
    Fixed(ContextName),
    /// BELL on even trial ids, PRODUCT on odd.
    Alternating,
    /// BELL with probability `q`, else PRODUCT.
    Bernoulli(f64),
}

impl EvePolicy {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        match *self {
            EvePolicy::Bernoulli(q) if !(0.0..=1.0).contains(&q) => {
                Err(ProtocolError::InvalidProbability(q))
            }
            _ => Ok(()),
        }
    }

    fn choose(&self, master_seed: u64, trial_id: u64) -> ContextName {
        match *self {
            EvePolicy::Fixed(c) => c,
            EvePolicy::Alternating => {
                if trial_id % 2 == 0 {
                    ContextName::Bell
                } else {
                    ContextName::Product
                }
            }
            EvePolicy::Bernoulli(q) => {
                let mut rng = policy_rng(master_seed, trial_id);
                if rng.gen::<f64>() < q {
                    ContextName::Bell
                } else {
                    ContextName::Product
                }
            }
        }
    }
}

impl fmt::Display for EvePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvePolicy::Fixed(c) => write!(f, "fixed:{c}"),
            EvePolicy::Alternating => f.write_str("alternating"),
            EvePolicy::Bernoulli(q) => write!(f, "bernoulli:{q}"),
        }
    }
}

impl FromStr for EvePolicy {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let lower = s.to_ascii_lowercase();
        let policy = if let Some(ctx) = lower.strip_prefix("fixed:") {
            EvePolicy::Fixed(ctx.parse()?)
        } else if lower == "alternating" {
            EvePolicy::Alternating
        } else if let Some(q) = lower.strip_prefix("bernoulli:") {
            let q: f64 = q
                .trim()
                .parse()
                .map_err(|_| ProtocolError::InvalidProbability(f64::NAN))?;
            EvePolicy::Bernoulli(q)
        } else {
            EvePolicy::Fixed(s.parse()?)
        };
        policy.validate()?;
        Ok(policy)
    }
}

const POLICY_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Measurement stream of one trial: ChaCha8 keyed by the master seed,
/// stream number = trial id.
pub fn trial_rng(master_seed: u64, trial_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_id);
    rng
}

/// Context-choice stream of one trial, disjoint from [`trial_rng`].
pub fn policy_rng(master_seed: u64, trial_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ POLICY_SALT);
    rng.set_stream(trial_id);
    rng
}

/// A batch of trials: `trials_per_setting` runs for each (alice, bob)
/// angle pair, with consecutive trial ids in setting order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPlan {
    pub master_seed: u64,
    pub trials_per_setting: u64,
    pub settings: Vec<(f64, f64)>,
    pub ordering: Ordering,
    pub policy: EvePolicy,
}

impl SimulationPlan {
    pub fn total_trials(&self) -> u64 {
        self.trials_per_setting * self.settings.len() as u64
    }

    /// Settings pairs of the four CHSH cells `(a,b), (a,b′), (a′,b), (a′,b′)`.
    pub fn chsh_settings(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Vec<(f64, f64)> {
        vec![(a, b), (a, b_prime), (a_prime, b), (a_prime, b_prime)]
    }

    fn trial(&self, trial_id: u64) -> Result<TrialRecord, ProtocolError> {
        let (alice, bob) = self.settings[(trial_id / self.trials_per_setting) as usize];
        let context = self.policy.choose(self.master_seed, trial_id);
        let mut rng = trial_rng(self.master_seed, trial_id);
        run_trial(trial_id, alice, bob, context, self.ordering, &mut rng)
    }

    /// Runs every trial in parallel; output is in trial-id order and
    /// identical to a sequential run.
    pub fn run(&self) -> Result<Vec<TrialRecord>, ProtocolError> {
        self.policy.validate()?;
        (0..self.total_trials())
            .into_par_iter()
            .map(|id| self.trial(id))
            .collect()
    }

    pub fn run_sequential(&self) -> Result<Vec<TrialRecord>, ProtocolError> {
        self.policy.validate()?;
        (0..self.total_trials()).map(|id| self.trial(id)).collect()
    }
}
