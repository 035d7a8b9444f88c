mod common;

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use faer::Mat;
use proptest::prelude::*;
use subord_core::operator_valued::CovarianceMap;
use subord_core::oracle::{Estimate, ExperimentReport, Identity, Verdict};
use subord_core::spectral::{CircleMeasure, LineMeasure, Measure, UniformGrid};
use subord_core::Complex64;

fn bits(v: &[(f64, f64)]) -> Vec<(u64, u64)> {
    v.iter().map(|(a, b)| (a.to_bits(), b.to_bits())).collect()
}

fn line_measure() -> impl Strategy<Value = LineMeasure> {
    let atoms = prop::collection::vec((-1e3f64..1e3, 1e-6f64..1.0), 0..4);
    let density = prop::option::of((-50.0f64..0.0, 0.1f64..50.0, prop::collection::vec(0.0f64..5.0, 2..40)));
    (atoms, density)
        .prop_filter("need some mass", |(a, d)| !a.is_empty() || d.as_ref().is_some_and(|d| d.2.iter().any(|v| *v > 0.0)))
        .prop_map(|(atoms, density)| {
            let density = density.map(|(lo, width, samples)| (UniformGrid::new(lo, lo + width, samples.len()).unwrap(), samples));
            LineMeasure::normalized(atoms, density).unwrap()
        })
}

fn circle_measure() -> impl Strategy<Value = CircleMeasure> {
    let atoms = prop::collection::vec((0.0f64..TAU, 1e-6f64..1.0), 0..4);
    let density = prop::option::of(prop::collection::vec(0.0f64..5.0, 2..40));
    (atoms, density)
        .prop_filter("need some mass", |(a, d)| !a.is_empty() || d.as_ref().is_some_and(|d| d.iter().any(|v| *v > 0.0)))
        .prop_map(|(atoms, density)| CircleMeasure::normalized(atoms, density).unwrap())
}

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

proptest! {
    #![proptest_config(common::cases(256))]

    #[test]
    fn line_measures_round_trip(m in line_measure()) {
        let json = Measure::Line(m.clone()).to_json().unwrap();
        let back = Measure::from_json(&json).unwrap();
        let back = back.as_line().unwrap();
        prop_assert_eq!(bits(m.atoms()), bits(back.atoms()));
        match (m.density(), back.density()) {
            (None, None) => {}
            (Some((g1, d1)), Some((g2, d2))) => {
                prop_assert_eq!(g1, g2);
                prop_assert_eq!(d1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), d2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            }
            _ => prop_assert!(false, "density lost"),
        }
        prop_assert_eq!(Measure::Line(back.clone()).to_json().unwrap(), json);
    }

    #[test]
    fn circle_measures_round_trip(m in circle_measure()) {
        let json = Measure::Circle(m.clone()).to_json().unwrap();
        let back = Measure::from_json(&json).unwrap();
        let back = back.as_circle().unwrap();
        prop_assert_eq!(bits(m.atoms()), bits(back.atoms()));
        let dens = |c: &CircleMeasure| c.density().map(|d| d.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(dens(&m), dens(back));
        prop_assert_eq!(Measure::Circle(back.clone()).to_json().unwrap(), json);
    }

    #[test]
    fn covariance_maps_round_trip(n in 1usize..=4, entries in prop::collection::vec((finite(), finite()), 0..=48)) {
        let terms = entries.len() / (n * n);
        let kraus: Vec<_> = (0..terms)
            .map(|t| Mat::from_fn(n, n, |i, j| {
                let (re, im) = entries[t * n * n + i * n + j];
                Complex64::new(re, im)
            }))
            .collect();
        let map = CovarianceMap::new(n, kraus).unwrap();
        let json = map.to_json().unwrap();
        let back = CovarianceMap::from_json(&json).unwrap();
        prop_assert_eq!(back.dim(), n);
        prop_assert_eq!(back.kraus().len(), map.kraus().len());
        for (a, b) in map.kraus().iter().zip(back.kraus()) {
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(a[(i, j)].re.to_bits(), b[(i, j)].re.to_bits());
                    prop_assert_eq!(a[(i, j)].im.to_bits(), b[(i, j)].im.to_bits());
                }
            }
        }
        prop_assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn reports_round_trip(
        which in 0usize..5,
        n in 2usize..5000,
        trials in 1usize..1000,
        seed in any::<u64>(),
        residuals in prop::collection::btree_map("[a-z_]{1,12}", finite(), 0..5),
        real in finite(),
        (re, im) in (finite(), finite()),
    ) {
        let mut estimates = BTreeMap::new();
        estimates.insert("real".to_string(), Estimate::Real(real));
        estimates.insert("complex".to_string(), Estimate::from(Complex64::new(re, im)));
        let tolerances: BTreeMap<String, f64> = residuals.keys().map(|k| (k.clone(), 0.05)).collect();
        let report = ExperimentReport {
            identity: Identity::ALL[which],
            n,
            trials,
            seed,
            estimates,
            verdict: Verdict::evaluate(&residuals, &tolerances),
            residuals,
            tolerances,
            diagnostics: BTreeMap::from([("margin".to_string(), real)]),
        };
        let json = report.to_json().unwrap();
        let back = ExperimentReport::from_json(&json).unwrap();
        prop_assert_eq!(&back, &report);
        prop_assert_eq!(back.to_json().unwrap(), json);
    }
}
