use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swapsim_core::classical::{generate_rows, label_rows, random_interpretations};
use swapsim_core::contexts::{ContextName, OutcomeLabel};
use swapsim_core::protocol::{joint_distribution, EvePolicy, Ordering, PartitionKey, SimulationPlan};
use swapsim_core::qcore::BellKind;
use swapsim_core::stats::{chsh, classical_cross_correlation, correlator, uniformity_chi_square, ChshSettings};

fn grid() -> Vec<f64> {
    (0..8).map(|k| k as f64 * PI / 4.0 + 0.1).collect()
}

#[test]
fn order_invariance_on_angle_grid() {
    for ctx in ContextName::ALL {
        for &a in &grid() {
            for &b in &grid() {
                let first = joint_distribution(a, b, ctx, Ordering::EveFirst).unwrap();
                let last = joint_distribution(a, b, ctx, Ordering::EveLast).unwrap();
                assert!((first.total() - 1.0).abs() <= 1e-12);
                assert!(first.max_abs_diff(&last) <= 1e-12, "ctx {ctx} a {a} b {b}");
            }
        }
    }
}

#[test]
fn outer_marginals_do_not_see_eves_context() {
    for &a in &grid() {
        for &b in &grid() {
            let bell = joint_distribution(a, b, ContextName::Bell, Ordering::EveLast).unwrap();
            let prod = joint_distribution(a, b, ContextName::Product, Ordering::EveLast).unwrap();
            let (mb, mp) = (bell.outer_marginal(), prod.outer_marginal());
            for i in 0..2 {
                for j in 0..2 {
                    assert!((mb[i][j] - mp[i][j]).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn bell_outcomes_uniform_across_seeds() {
    let mut passes = 0;
    for seed in 0..100u64 {
        let plan = SimulationPlan {
            master_seed: seed,
            trials_per_setting: 100_000,
            settings: vec![(0.3, 1.1)],
            ordering: Ordering::EveLast,
            policy: EvePolicy::Fixed(ContextName::Bell),
        };
        let records = plan.run().unwrap();
        if uniformity_chi_square(&records, ContextName::Bell).unwrap().passes(1e-3) {
            passes += 1;
        }
    }
    assert!(passes >= 99, "only {passes}/100 seeds passed");
}

#[test]
fn estimates_converge_to_exact_correlators() {
    // every key below carries mass 1/4 ≥ 1/8 in its context
    let (alpha, beta) = (0.2, 1.3);
    let mut outliers = 0;
    let mut runs = 0;
    for ctx in ContextName::ALL {
        let exact = joint_distribution(alpha, beta, ctx, Ordering::EveFirst).unwrap();
        let keys: Vec<PartitionKey> = PartitionKey::ALL.into_iter().filter(|k| k.context() == ctx).collect();
        for key in keys {
            let want = exact.correlator(Some(key)).unwrap();
            for seed in 0..100u64 {
                let plan = SimulationPlan {
                    master_seed: 1000 + seed,
                    trials_per_setting: 4000,
                    settings: vec![(alpha, beta)],
                    ordering: Ordering::EveFirst,
                    policy: EvePolicy::Fixed(ctx),
                };
                let est = correlator(&plan.run().unwrap(), Some(key)).unwrap();
                if (est.value - want).abs() > 4.0 * est.std_error.max(1e-12) {
                    outliers += 1;
                }
                runs += 1;
            }
        }
    }
    assert!((outliers as f64) < 0.01 * runs as f64, "{outliers} of {runs} runs beyond 4σ");
}

#[test]
fn swapped_singlet_violates_chsh() {
    let settings = ChshSettings::new(0.0, PI / 2.0, PI / 4.0, -PI / 4.0);
    let plan = SimulationPlan {
        master_seed: 42,
        trials_per_setting: 40_000,
        settings: SimulationPlan::chsh_settings(settings.a, settings.a_prime, settings.b, settings.b_prime),
        ordering: Ordering::EveLast,
        policy: EvePolicy::Alternating,
    };
    let records = plan.run().unwrap();
    let key = PartitionKey(OutcomeLabel::Bell(BellKind::PsiMinus));
    let r = chsh(&records, Some(key), settings).unwrap();
    assert!((r.s_value + 2.0 * 2f64.sqrt()).abs() < 0.1, "S = {}", r.s_value);
    assert!(r.violated(5.0));

    let unconditioned = chsh(&records, None, settings).unwrap();
    assert!(unconditioned.s_value.abs() < 4.0 * unconditioned.std_error + 0.02);

    for b2 in 0..2 {
        for b3 in 0..2 {
            let key = PartitionKey(OutcomeLabel::Product(b2, b3));
            let r = chsh(&records, Some(key), settings).unwrap();
            assert!(r.s_value.abs() <= 2.0 + 3.0 * r.std_error);
        }
    }
}

#[test]
fn classical_sources_are_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let rows = generate_rows(100_000, &mut rng);
    assert!(rows.iter().all(|r| r.a1() != r.e2() && r.e3() != r.b4()));
    let view = random_interpretations(rows.len(), 0.5, &mut rng);
    let labeled = label_rows(&rows, &view).unwrap();
    let e = classical_cross_correlation(&labeled, None).unwrap();
    assert!(e.value.abs() <= 3.0 * e.std_error, "{e:?}");
}
