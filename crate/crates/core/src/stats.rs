//! Correlators, CHSH and uniformity tests over trial logs and classical rows.

use std::fmt;

use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::classical::{LabeledRow, PartitionLabel};
use crate::contexts::ContextName;
use crate::protocol::{PartitionKey, TrialRecord};

/// Two angles are the same setting if they agree to this many radians.
pub const SETTING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no samples left after conditioning on {0}")]
    EmptySample(Conditioning),
    #[error("records mix setting pairs ({0:.6}, {1:.6}) and ({2:.6}, {3:.6})")]
    MixedSettings(f64, f64, f64, f64),
    #[error("CHSH cell (alice {alice:.6}, bob {bob:.6}) is empty under {conditioning}")]
    EmptyCell { alice: f64, bob: f64, conditioning: Conditioning },
    #[error("record {trial_id} was measured in {found}, expected {expected}")]
    ContextMismatch { trial_id: u64, expected: ContextName, found: ContextName },
}

/// Which subset an estimate was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    Unconditioned,
    Eve(PartitionKey),
    Classical(PartitionLabel),
}

impl From<Option<PartitionKey>> for Conditioning {
    fn from(key: Option<PartitionKey>) -> Self {
        key.map_or(Conditioning::Unconditioned, Conditioning::Eve)
    }
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Conditioning::Unconditioned => f.write_str("unconditioned"),
            Conditioning::Eve(key) => write!(f, "{key}"),
            Conditioning::Classical(label) => write!(f, "{label}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub value: f64,
    pub n: u64,
    pub std_error: f64,
    pub conditioning: Conditioning,
    /// `(alice_theta, bob_theta)`; `None` for classical rows.
    pub settings: Option<(f64, f64)>,
}

impl CorrelationEstimate {
    /// Mean of ±1 products with binomial standard error `√((1 − E²)/n)`.
    pub fn from_products<I>(products: I, conditioning: Conditioning, settings: Option<(f64, f64)>) -> Result<Self, StatsError>
    where
        I: IntoIterator<Item = i8>,
    {
        let (sum, n) = products
            .into_iter()
            .fold((0i64, 0u64), |(s, n), p| (s + i64::from(p), n + 1));
        if n == 0 {
            return Err(StatsError::EmptySample(conditioning));
        }
        let value = sum as f64 / n as f64;
        let std_error = ((1.0 - value * value).max(0.0) / n as f64).sqrt();
        Ok(Self {
            value,
            n,
            std_error,
            conditioning,
            settings,
        })
    }
}

fn same_angle(a: f64, b: f64) -> bool {
    (a - b).abs() <= SETTING_TOLERANCE
}

/// `E[a·b]` over the records matching `conditioning`. All records must
/// share one setting pair.
pub fn correlator(records: &[TrialRecord], conditioning: Option<PartitionKey>) -> Result<CorrelationEstimate, StatsError> {
    let settings = records
        .first()
        .map(|r| (r.alice_setting.theta(), r.bob_setting.theta()));
    if let Some((a, b)) = settings {
        if let Some(r) = records
            .iter()
            .find(|r| !same_angle(r.alice_setting.theta(), a) || !same_angle(r.bob_setting.theta(), b))
        {
            return Err(StatsError::MixedSettings(a, b, r.alice_setting.theta(), r.bob_setting.theta()));
        }
    }
    let products = records
        .iter()
        .filter(|r| conditioning.map_or(true, |k| r.key() == k))
        .map(TrialRecord::product);
    CorrelationEstimate::from_products(products, conditioning.into(), settings)
}

/// Angles `(a, a′)` for Alice and `(b, b′)` for Bob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshSettings {
    pub fn new(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Self {
        Self { a, a_prime, b, b_prime }
    }

    /// `(a,b), (a,b′), (a′,b), (a′,b′)`, the order of the four terms.
    pub fn cells(&self) -> [(f64, f64); 4] {
        [
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshResult {
    pub s_value: f64,
    pub correlators: [CorrelationEstimate; 4],
    pub settings: ChshSettings,
    pub std_error: f64,
}

impl ChshResult {
    /// `S = E(a,b) + E(a,b′) + E(a′,b) − E(a′,b′)`, errors added in quadrature.
    pub fn from_estimates(correlators: [CorrelationEstimate; 4], settings: ChshSettings) -> Self {
        let [ab, abp, apb, apbp] = correlators.map(|c| c.value);
        let s_value = ab + abp + apb - apbp;
        let std_error = correlators.iter().map(|c| c.std_error * c.std_error).sum::<f64>().sqrt();
        Self {
            s_value,
            correlators,
            settings,
            std_error,
        }
    }

    /// `(|S| − 2)/σ`; infinite when σ = 0 and |S| ≠ 2.
    pub fn violation_sigmas(&self) -> f64 {
        let excess = self.s_value.abs() - 2.0;
        if self.std_error > 0.0 {
            excess / self.std_error
        } else if excess == 0.0 {
            0.0
        } else {
            excess.signum() * f64::INFINITY
        }
    }

    /// Violation verdict at `sigmas` standard errors.
    pub fn violated(&self, sigmas: f64) -> bool {
        self.violation_sigmas() > sigmas
    }
}

fn reduce_angle(theta: f64) -> f64 {
    crate::contexts::AngleSetting::alice(theta).theta()
}

/// Assembles the four conditioned correlators from a mixed log.
pub fn chsh(records: &[TrialRecord], key: Option<PartitionKey>, settings: ChshSettings) -> Result<ChshResult, StatsError> {
    let mut estimates = Vec::with_capacity(4);
    for (alice, bob) in settings.cells() {
        let (ra, rb) = (reduce_angle(alice), reduce_angle(bob));
        let cell: Vec<TrialRecord> = records
            .iter()
            .filter(|r| same_angle(r.alice_setting.theta(), ra) && same_angle(r.bob_setting.theta(), rb))
            .copied()
            .collect();
        let estimate = correlator(&cell, key).map_err(|e| match e {
            StatsError::EmptySample(conditioning) => StatsError::EmptyCell { alice, bob, conditioning },
            other => other,
        })?;
        estimates.push(estimate);
    }
    let correlators: [CorrelationEstimate; 4] = estimates.try_into().expect("four cells");
    Ok(ChshResult::from_estimates(correlators, settings))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub p_value: f64,
    pub counts: [u64; 4],
    pub degrees_of_freedom: u32,
}

impl ChiSquareResult {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value > significance
    }
}

/// Pearson χ² of four counts against the uniform law, 3 degrees of freedom.
pub fn chi_square_uniform(counts: [u64; 4]) -> Result<ChiSquareResult, StatsError> {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(StatsError::EmptySample(Conditioning::Unconditioned));
    }
    let expected = n as f64 / 4.0;
    let statistic = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum::<f64>();
    let dist = ChiSquared::new(3.0).expect("3 degrees of freedom is valid");
    Ok(ChiSquareResult {
        statistic,
        p_value: dist.sf(statistic),
        counts,
        degrees_of_freedom: 3,
    })
}

/// Uniformity of Eve's outcomes over records taken in `context`.
pub fn uniformity_chi_square(records: &[TrialRecord], context: ContextName) -> Result<ChiSquareResult, StatsError> {
    let mut counts = [0u64; 4];
    for r in records {
        if r.eve_context != context {
            return Err(StatsError::ContextMismatch {
                trial_id: r.trial_id,
                expected: context,
                found: r.eve_context,
            });
        }
        counts[r.eve_outcome.index()] += 1;
    }
    chi_square_uniform(counts)
}

/// Correlator of `(2·a1 − 1)(2·b4 − 1)` over rows carrying `conditioning`.
pub fn classical_cross_correlation(
    rows: &[LabeledRow],
    conditioning: Option<PartitionLabel>,
) -> Result<CorrelationEstimate, StatsError> {
    let products = rows
        .iter()
        .filter(|lr| conditioning.map_or(true, |l| lr.label == l))
        .map(|lr| (2 * lr.row.a1() as i8 - 1) * (2 * lr.row.b4() as i8 - 1));
    let tag = conditioning.map_or(Conditioning::Unconditioned, Conditioning::Classical);
    CorrelationEstimate::from_products(products, tag, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{generate_rows, label_rows, ClassicalRow, Interpretation};
    use crate::contexts::{AngleSetting, OutcomeLabel, Sign};
    use crate::protocol::{Ordering, Timestamps};
    use crate::qcore::BellKind;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(id: u64, a: Sign, b: Sign, alice: f64, bob: f64) -> TrialRecord {
        TrialRecord {
            trial_id: id,
            alice_setting: AngleSetting::alice(alice),
            bob_setting: AngleSetting::bob(bob),
            alice_outcome: a,
            bob_outcome: b,
            eve_context: ContextName::Bell,
            eve_outcome: OutcomeLabel::Bell(BellKind::PsiMinus),
            ordering: Ordering::EveLast,
            timestamps: Timestamps { alice: 0, bob: 1, eve: 2 },
        }
    }

    #[test]
    fn constant_products_have_zero_error() {
        let recs: Vec<_> = (0..10).map(|i| record(i, Sign::Plus, Sign::Plus, 0.0, 0.0)).collect();
        let e = correlator(&recs, None).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.n, 10);
    }

    #[test]
    fn empty_and_mixed_inputs_are_errors() {
        assert!(matches!(correlator(&[], None), Err(StatsError::EmptySample(_))));
        let recs = vec![
            record(0, Sign::Plus, Sign::Plus, 0.0, 0.0),
            record(1, Sign::Plus, Sign::Plus, 0.5, 0.0),
        ];
        assert!(matches!(correlator(&recs, None), Err(StatsError::MixedSettings(..))));
        let key = PartitionKey(OutcomeLabel::Product(0, 0));
        assert!(matches!(correlator(&recs[..1], Some(key)), Err(StatsError::EmptySample(_))));
    }

    #[test]
    fn chsh_functional_arithmetic() {
        let s = ChshSettings::new(0.0, 1.0, 2.0, 3.0);
        let mk = |v: f64| CorrelationEstimate {
            value: v,
            n: 1,
            std_error: 0.0,
            conditioning: Conditioning::Unconditioned,
            settings: None,
        };
        let r = ChshResult::from_estimates([mk(-1.0), mk(-1.0), mk(-1.0), mk(1.0)], s);
        assert_eq!(r.s_value, -4.0);
        assert!(r.violated(3.0));
    }

    #[test]
    fn chsh_finds_cells_after_angle_reduction() {
        let s = ChshSettings::new(0.0, 1.0, 2.0, -0.5);
        let mut recs = Vec::new();
        for (i, (a, b)) in s.cells().into_iter().enumerate() {
            recs.push(record(i as u64, Sign::Plus, Sign::Minus, a, b));
        }
        let r = chsh(&recs, None, s).unwrap();
        assert_eq!(r.s_value, -2.0);
        let missing = chsh(&recs[..3], None, s);
        assert!(matches!(missing, Err(StatsError::EmptyCell { .. })));
    }

    #[test]
    fn chi_square_cases() {
        let r = chi_square_uniform([25000; 4]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-12);
        let r = chi_square_uniform([100, 0, 0, 0]).unwrap();
        assert_abs_diff_eq!(r.statistic, 300.0, epsilon = 1e-9);
        assert!(r.p_value < 1e-60);
        assert!(chi_square_uniform([0; 4]).is_err());
    }

    #[test]
    fn chi_square_survival_matches_closed_form() {
        // 3 dof: sf(x) = erfc(√(x/2)) + √(2x/π)·e^(−x/2)
        for x in [0.5, 2.0, 7.815, 16.27] {
            let closed = statrs::function::erf::erfc((x / 2.0f64).sqrt())
                + (2.0 * x / std::f64::consts::PI).sqrt() * (-x / 2.0f64).exp();
            let dist = ChiSquared::new(3.0).unwrap();
            assert_abs_diff_eq!(dist.sf(x), closed, epsilon = 1e-10);
        }
    }

    #[test]
    fn uniformity_rejects_foreign_context() {
        let mut r = record(0, Sign::Plus, Sign::Plus, 0.0, 0.0);
        assert!(uniformity_chi_square(&[r], ContextName::Product).is_err());
        r.eve_context = ContextName::Product;
        r.eve_outcome = OutcomeLabel::Product(0, 0);
        assert!(uniformity_chi_square(&[r], ContextName::Product).is_ok());
        assert!(uniformity_chi_square(&[], ContextName::Bell).is_err());
    }

    #[test]
    fn classical_labels_fix_cross_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rows = generate_rows(4000, &mut rng);
        let view = crate::classical::random_interpretations(rows.len(), 0.5, &mut rng);
        let labeled = label_rows(&rows, &view).unwrap();
        for label in PartitionLabel::ALL {
            let e = classical_cross_correlation(&labeled, Some(label)).unwrap();
            let (a, b) = label.outer_bits();
            let want = if a == b { 1.0 } else { -1.0 };
            assert_eq!(e.value, want);
            assert_eq!(e.std_error, 0.0);
        }
        let single = [ClassicalRow::new(1, 0, 1, 0, 1).unwrap()];
        let lr = label_rows(&single, &[Interpretation::Coincidence]).unwrap();
        assert!(classical_cross_correlation(&lr, Some(PartitionLabel::E1)).is_err());
    }

    #[test]
    fn single_direction_pseudo_chsh_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = generate_rows(500, &mut rng);
        let view = crate::classical::random_interpretations(rows.len(), 0.3, &mut rng);
        let labeled = label_rows(&rows, &view).unwrap();
        let settings = ChshSettings::new(0.0, 0.0, 0.0, 0.0);
        let mut conds: Vec<Option<PartitionLabel>> = PartitionLabel::ALL.iter().copied().map(Some).collect();
        conds.push(None);
        for cond in conds {
            let Ok(e) = classical_cross_correlation(&labeled, cond) else { continue };
            let r = ChshResult::from_estimates([e; 4], settings);
            assert!(r.s_value.abs() <= 2.0 + 1e-12);
        }
    }
}
