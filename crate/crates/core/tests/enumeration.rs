mod common;

use cone_walker::exact::{self, ExactOptions, WindowPolicy};
use cone_walker::walk_model::{catalog, reverse, StepDistribution};
use cone_walker::ConeSpec;
use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;

#[test]
fn half_line_layers_match_enumeration() {
    let m = catalog::simple_1d();
    let k = ConeSpec::orthant(1);
    for x in common::start_box(1, 6) {
        assert_eq!(common::engine_layers(&m, &k, &x, 8), common::enumerate(&m, &k, &x, 8));
    }
}

#[test]
fn lazy_quadrant_layers_match_enumeration() {
    let m = catalog::lazy();
    let k = ConeSpec::orthant(2);
    for x in common::start_box(2, 2) {
        assert_eq!(common::engine_layers(&m, &k, &x, 6), common::enumerate(&m, &k, &x, 6));
    }
}

#[test]
fn wedge_layers_match_enumeration() {
    // 3π/4 wedge: lattice membership goes through rotated normals.
    let m = catalog::nsew();
    let k = ConeSpec::wedge(3.0 * std::f64::consts::FRAC_PI_4, 0.0).unwrap();
    for x in [vec![1, 1], vec![-1, 2], vec![3, 1]] {
        assert_eq!(common::engine_layers(&m, &k, &x, 7), common::enumerate(&m, &k, &x, 7));
    }
}

#[test]
fn reversal_duality() {
    // P(x → y) for X equals P(y → x) for −X.
    let m = StepDistribution::new(
        2,
        vec![
            step(&[1, 0], 1, 3),
            step(&[0, 1], 1, 3),
            step(&[-1, -1], 1, 3),
        ],
    )
    .unwrap();
    let r = reverse(&m);
    let k = ConeSpec::orthant(2);
    let x = [2, 1];
    for n in [3u64, 6, 9] {
        let layer = exact::layer_rational(&m, &k, &x, n).unwrap();
        for (y, p) in layer.iter() {
            if p.is_zero() {
                continue;
            }
            let back = exact::local_probability_rational(&r, &k, &y, &x, n).unwrap();
            assert_eq!(&back, p, "n = {n}, y = {y:?}");
        }
    }
}

fn step(v: &[i64], a: i64, b: i64) -> cone_walker::walk_model::Step {
    cone_walker::walk_model::Step {
        v: v.to_vec(),
        p: cone_walker::walk_model::Prob::ratio(a, b),
    }
}

#[test]
fn float_survival_tracks_rational() {
    let m = catalog::lazy();
    let k = ConeSpec::orthant(2);
    let r = exact::survival(&m, &k, &[1, 2], 40, &ExactOptions::rational()).unwrap();
    let f = exact::survival(&m, &k, &[1, 2], 40, &ExactOptions::float(WindowPolicy::Full)).unwrap();
    for (a, b) in r.values.iter().zip(&f.values) {
        assert!((a - b).abs() <= 1e-14 * a.max(1e-300), "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_laws_match_enumeration(
        weights in proptest::collection::vec(1i64..5, 4),
        x in (1i64..4, 1i64..4),
        n in 0usize..6,
    ) {
        // Zero drift forces equal weight on opposite steps per axis.
        let (a, b) = (weights[0], weights[1]);
        let total = 2 * (a + b);
        let m = StepDistribution::new(
            2,
            vec![
                step(&[1, 0], a, total),
                step(&[-1, 0], a, total),
                step(&[0, 1], b, total),
                step(&[0, -1], b, total),
            ],
        )
        .unwrap();
        let k = ConeSpec::orthant(2);
        let x = vec![x.0, x.1];
        prop_assert_eq!(common::engine_layers(&m, &k, &x, n), common::enumerate(&m, &k, &x, n));
    }

    #[test]
    fn survival_is_layer_mass(x in 1i64..6, n in 0u64..12) {
        let m = catalog::simple_1d();
        let k = ConeSpec::orthant(1);
        let s = exact::survival(&m, &k, &[x], n, &ExactOptions::rational()).unwrap();
        let layer = exact::layer_rational(&m, &k, &[x], n).unwrap();
        let mass: BigRational = layer.iter().map(|(_, p)| p.clone()).sum();
        prop_assert_eq!(s.exact.unwrap().last().unwrap().clone(), mass.to_string());
    }
}
