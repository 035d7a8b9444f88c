mod common;

use faer::Mat;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use subord_core::linalg;
use subord_core::oracle::{self, EnsembleKind, EnsembleSpec, Identity};
use subord_core::spectral::CircleMeasure;
use subord_core::Complex64;

proptest! {
    #![proptest_config(common::cases(64))]

    #[test]
    fn normalized_trace_survives_partial_trace(seed in any::<u64>(), n in 1usize..=4, big_n in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = n * big_n;
        let z = Mat::from_fn(m, m, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let reduced = oracle::partial_trace(&z, n, big_n).unwrap();
        let lhs = linalg::trace(&reduced) / n as f64;
        let rhs = linalg::trace(&z) / m as f64;
        prop_assert!((lhs - rhs).norm() <= 1e-14 * (1.0 + rhs.norm()));
    }

    #[test]
    fn samples_are_deterministic(seed in any::<u64>(), n in 2usize..=16, which in 0usize..4) {
        let kind = || match which {
            0 => EnsembleKind::Gue,
            1 => EnsembleKind::HaarUnitary,
            2 => EnsembleKind::RotatedDeterministic((0..n).map(|k| k as f64).collect()),
            _ => EnsembleKind::PhaseUnitary(CircleMeasure::new(vec![(0.3, 0.5), (2.0, 0.5)], None).unwrap()),
        };
        let a = oracle::sample(&EnsembleSpec { kind: kind(), n, seed }).unwrap();
        let b = oracle::sample(&EnsembleSpec { kind: kind(), n, seed }).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(a[(i, j)].re.to_bits(), b[(i, j)].re.to_bits());
                prop_assert_eq!(a[(i, j)].im.to_bits(), b[(i, j)].im.to_bits());
            }
        }
    }
}

fn small_config(identity: Identity, n: usize, seed: u64) -> serde_json::Value {
    let mut cfg = oracle::default_config(identity);
    let trials = match identity {
        Identity::BlockAdditiveSubordination => 4,
        _ => 8,
    };
    cfg["N"] = json!(n);
    cfg["trials"] = json!(trials);
    cfg["seed"] = json!(seed);
    cfg
}

#[test]
fn reports_are_reproducible() {
    for identity in Identity::ALL {
        let cfg = match identity {
            Identity::ContractionCriterion => json!({ "samples": 500, "seed": 3 }),
            _ => small_config(identity, 24, 3),
        };
        let a = oracle::run_experiment(identity, cfg.clone()).unwrap();
        let b = oracle::run_experiment(identity, cfg).unwrap();
        assert_eq!(a, b, "{identity}");
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}

fn primary(identity: Identity, n: usize, seed: u64) -> f64 {
    oracle::run_experiment(identity, small_config(identity, n, seed))
        .unwrap()
        .primary_residual()
        .unwrap()
}

/// Number of seeds in `1..=5` whose primary residual drops when `N` doubles.
fn decreases(identity: Identity, n: usize) -> usize {
    let seen: Vec<(f64, f64)> = (1..=5).map(|s| (primary(identity, n, s), primary(identity, 2 * n, s))).collect();
    println!("{identity}: {seen:?}");
    seen.iter().filter(|(small, large)| large < small).count()
}

#[test]
fn residuals_shrink_as_matrices_grow() {
    // the contraction criterion has no matrix size to grow; its residual is a
    // violation count and stays at zero
    for (identity, n) in [
        (Identity::ConditionalResolvent, 64),
        (Identity::MarkovianResolvent, 64),
        (Identity::BlockAdditiveSubordination, 16),
    ] {
        assert!(decreases(identity, n) >= 4, "{identity}");
    }
}

/// With i.i.d. phases the Haar-case mean is close to a centred complex
/// Gaussian whose variance halves when `N` doubles, so a single seed shows a
/// decrease with probability 2/3 and four seeds of five only about half the
/// time. Run with `--ignored` to see the count.
#[test]
#[ignore = "holds with probability about 0.46 for the Haar-case mean"]
fn haar_mean_shrinks_in_four_of_five_seeds() {
    assert!(decreases(Identity::UnitarySubordination, 64) >= 4);
}

#[test]
fn haar_mean_shrinks_in_mean_square() {
    let rms = |n: usize| ((1..=20).map(|s| primary(Identity::UnitarySubordination, n, s).powi(2)).sum::<f64>() / 20.0).sqrt();
    let (small, large) = (rms(64), rms(128));
    assert!(large < small, "{small:e} -> {large:e}");
}
