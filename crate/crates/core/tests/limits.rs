use cone_walker::exact::{self, ExactOptions, WindowPolicy};
use cone_walker::verify::{self, PeriodSpec};
use cone_walker::walk_model::catalog;
use cone_walker::{mc, ConeSpec, Error, Frame};

fn lazy_quadrant() -> Frame {
    Frame::new(catalog::lazy(), ConeSpec::orthant(2)).unwrap()
}

#[test]
fn free_return_probability_of_diagonal_walk() {
    let f = Frame::new(catalog::diagonal(), ConeSpec::full_space(2)).unwrap();
    let c = verify::verify_free_llt(&f, 1000, WindowPolicy::default()).unwrap();
    assert!(c.relative_error < 0.02, "{c:?}");
}

#[test]
fn periodic_walk_needs_a_residue_class() {
    let m = catalog::nsew();
    let k = ConeSpec::orthant(2);
    let (values, _) = exact::local_series(&m, &k, &[1, 1], &[1, 1], 200, WindowPolicy::default()).unwrap();
    let series: Vec<(u64, f64)> = values.iter().enumerate().map(|(n, v)| (n as u64, *v)).collect();
    assert_eq!(
        verify::fit_exponent(&series, (50, 200), PeriodSpec { period: 2, residue: None }),
        Err(Error::MixedResidueClasses(2))
    );
    let fit = verify::fit_exponent(&series, (50, 200), PeriodSpec::class(2, 0)).unwrap();
    assert!((fit.slope + 3.0).abs() < 0.3, "{fit:?}");
}

#[test]
fn boundary_ratio_near_one_with_interior_calibration() {
    let f = lazy_quadrant();
    let interior = verify::verify_interior_llt(
        &f,
        &[1, 1],
        200,
        2.0,
        0.1,
        verify::InteriorGrid::Shrunken,
        WindowPolicy::default(),
    )
    .unwrap();
    let r = verify::verify_boundary_llt(
        &f,
        &[1, 1],
        &[200],
        0.1,
        interior.kappa_estimate,
        20_000,
        5,
        (0.8, 1.25),
        WindowPolicy::default(),
    )
    .unwrap();
    let row = &r.rows[0];
    assert!(row.ratio > 0.8 && row.ratio < 1.25, "{row:?}");
}

#[test]
fn mc_matches_exact_survival_and_local() {
    let m = catalog::lazy();
    let k = ConeSpec::orthant(2);
    let x = [1, 2];
    let ys = vec![vec![1, 1], vec![2, 3], vec![3, 2]];
    let est = mc::mc_local(&m, &k, &x, &ys, 8, 200_000, 17).unwrap();
    let surv = exact::survival(&m, &k, &x, 8, &ExactOptions::rational()).unwrap();
    assert!(est[0].z_score(surv.values[8]).abs() < 4.0);
    for (y, e) in ys.iter().zip(&est[1..]) {
        let p = exact::local_probability(&m, &k, &x, y, 8, &ExactOptions::rational()).unwrap();
        assert!(e.z_score(p.value).abs() < 4.0, "{y:?}: {e:?} vs {}", p.value);
    }
}

#[test]
fn truncated_moment_decreases_with_n() {
    let f = lazy_quadrant();
    let means: Vec<f64> = [100u64, 200, 400]
        .iter()
        .map(|&n| mc::mc_max_displacement_moment(&f, &[1, 1], n, 0.1, 1.0, 50_000, 3).unwrap().mean)
        .collect();
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
}

#[test]
fn fuk_nagaev_holds_on_small_grid() {
    let f = Frame::new(catalog::nsew(), ConeSpec::orthant(2)).unwrap();
    for n in [16u64, 100] {
        for xm in [1.0, 3.0, 6.0] {
            let x = xm * (n as f64).sqrt();
            let r = mc::mc_fuk_nagaev(&f, x, x / 3.0, n, 20_000, 9).unwrap();
            assert!(r.holds, "{r:?}");
        }
    }
}

#[test]
fn stopping_tail_decays() {
    let f = lazy_quadrant();
    let a = mc::mc_stopping_time_tail(&f, &[1, 1], 25, 0.2, 100_000, 1).unwrap();
    let b = mc::mc_stopping_time_tail(&f, &[1, 1], 400, 0.2, 100_000, 1).unwrap();
    assert!(b.frequency < a.frequency || b.upper < 1e-4, "{a:?} {b:?}");
}

#[test]
fn uniform_lower_bound_is_positive() {
    let f = lazy_quadrant();
    let r = verify::verify_uniform_lower_bound(&f, &[vec![1, 1], vec![1, 4]], &[50, 100, 200], 50_000, 2, 0.01)
        .unwrap();
    assert!(r.pass, "{r:?}");
}
