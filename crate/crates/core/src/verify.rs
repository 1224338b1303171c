//! Numerical checks of the limit theorems: power-law fits, interior and
//! boundary local limit regimes, harmonicity of `V`, and the uniform
//! survival lower bound.
//!
//! Every formula is evaluated in decorrelated coordinates: `u(y)` means
//! `u(My)` and `|y|²` means `|My|² = ⟨y, Q⁻¹y⟩`.

use serde::Serialize;

use crate::cone::ShrunkenConeQuery;
use crate::error::{Error, Result};
use crate::exact::{self, ExactOptions, WindowPolicy};
use crate::frame::Frame;
use crate::mc::{self, MCEstimate};

/// Ordinary least squares `y = a x + b`; returns `(a, b, r²)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 && sxx > 0.0 {
        (sxy * sxy / (sxx * syy)).min(1.0)
    } else {
        1.0
    };
    (a, my - a * mx, r2)
}

/// Which residue class mod the period a fit uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PeriodSpec {
    pub period: u64,
    /// `None` accepts the series only if its window holds a single class.
    pub residue: Option<u64>,
}

impl PeriodSpec {
    pub fn aperiodic() -> Self {
        PeriodSpec {
            period: 1,
            residue: None,
        }
    }

    pub fn class(period: u64, residue: u64) -> Self {
        PeriodSpec {
            period: period.max(1),
            residue: Some(residue % period.max(1)),
        }
    }
}

/// Log-log regression result.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (u64, u64),
    /// Largest absolute residual in log space.
    pub residual_max: f64,
    pub points: usize,
}

/// Least-squares slope of `log value` against `log n` over `window`.
pub fn fit_exponent(series: &[(u64, f64)], window: (u64, u64), period: PeriodSpec) -> Result<FitResult> {
    let (lo, hi) = window;
    let q = period.period.max(1);
    let picked: Vec<(u64, f64)> = series
        .iter()
        .copied()
        .filter(|(n, _)| *n >= lo && *n <= hi && *n > 0)
        .filter(|(n, _)| period.residue.is_none_or(|r| n % q == r))
        .collect();
    if period.residue.is_none() && q > 1 {
        let first = picked.first().map(|(n, _)| n % q);
        if picked.iter().any(|(n, _)| Some(n % q) != first) {
            return Err(Error::MixedResidueClasses(q));
        }
    }
    if picked.len() < 2 {
        return Err(Error::EmptyWindow(lo, hi));
    }
    if let Some(&(n, value)) = picked.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::NonPositiveValue { n, value });
    }
    let xs: Vec<f64> = picked.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = picked.iter().map(|(_, v)| v.ln()).collect();
    let (slope, intercept, r_squared) = least_squares(&xs, &ys);
    let residual_max = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        window,
        residual_max,
        points: picked.len(),
    })
}

/// A fitted exponent against its predicted value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentCheck {
    pub fit: FitResult,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Largest truncation loss over the series.
    pub truncation_loss: f64,
}

impl ExponentCheck {
    fn new(fit: FitResult, expected: f64, tolerance: f64, truncation_loss: f64) -> Self {
        ExponentCheck {
            pass: (fit.slope - expected).abs() <= tolerance,
            fit,
            expected,
            tolerance,
            truncation_loss,
        }
    }
}

/// Exponent `p` of the frame cone; 0 for the whole space.
pub fn cone_exponent(frame: &Frame) -> Result<f64> {
    match (&frame.reduite, frame.frame_cone.facet_normals().is_empty()) {
        (Some(u), _) => Ok(u.p),
        (None, true) => Ok(0.0),
        (None, false) => Err(Error::NoClosedForm),
    }
}

/// Fit `P(τ_x > n)` against `n^{−p/2}` on the residue class `0 mod period`.
pub fn verify_survival_exponent(
    frame: &Frame,
    x: &[i64],
    window: (u64, u64),
    tolerance: f64,
    policy: WindowPolicy,
) -> Result<ExponentCheck> {
    let p = cone_exponent(frame)?;
    let s = exact::survival(&frame.model, &frame.cone, x, window.1, &ExactOptions::float(policy))?;
    let series: Vec<(u64, f64)> = s.values.iter().enumerate().map(|(n, v)| (n as u64, *v)).collect();
    let fit = fit_exponent(&series, window, PeriodSpec::class(frame.report.period, 0))?;
    let loss = s.truncation_loss.iter().cloned().fold(0.0, f64::max);
    Ok(ExponentCheck::new(fit, -p / 2.0, tolerance, loss))
}

/// Fit the return probability `P(x + S(n) = x, τ_x > n)` against
/// `n^{−p−d/2}` (`p = 0` for the whole space).
pub fn verify_llt_exponent(
    frame: &Frame,
    x: &[i64],
    window: (u64, u64),
    tolerance: f64,
    policy: WindowPolicy,
) -> Result<ExponentCheck> {
    let p = cone_exponent(frame)?;
    let d = frame.dim() as f64;
    let (values, loss) = exact::local_series(&frame.model, &frame.cone, x, x, window.1, policy)?;
    let series: Vec<(u64, f64)> = values.iter().enumerate().map(|(n, v)| (n as u64, *v)).collect();
    let fit = fit_exponent(&series, window, PeriodSpec::class(frame.report.period, 0))?;
    let loss = loss.iter().cloned().fold(0.0, f64::max);
    Ok(ExponentCheck::new(fit, -(p + d / 2.0), tolerance, loss))
}

/// Flatness of the exact-to-Gaussian ratio over a grid of end points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeReport {
    /// `κ₀·V(x)`: the trimmed mean ratio times `n^{p+d/2}`.
    pub kappa_estimate: f64,
    /// Trimmed mean of the raw ratios, `≈ κ₀·V(x)·n^{−p−d/2}`.
    pub scaled_estimate: f64,
    /// `max/min − 1` over the grid.
    pub ratio_spread: f64,
    pub grid_size: usize,
    /// `n mod period`.
    pub period_class: u64,
    pub n: u64,
    pub truncation_loss: f64,
}

/// End points used by [`verify_interior_llt`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InteriorGrid {
    /// `y ∈ K_{n,ε}`, `|y| ≤ A√n`.
    Shrunken,
    /// Every `y ∈ K` with `|y| ≤ A√n`, boundary layer included (control).
    All,
}

/// Mean after dropping the lowest and highest `fraction` of the values.
pub fn trimmed_mean(values: &[f64], fraction: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((v.len() as f64) * fraction).floor() as usize;
    let kept = &v[k..v.len() - k];
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// Ratios `P(x + S(n) = y, τ_x > n) / [u(y) e^{−|y|²/(2n)}]` over lattice
/// `y` reachable at time `n`.
pub fn verify_interior_llt(
    frame: &Frame,
    x: &[i64],
    n: u64,
    a: f64,
    epsilon: f64,
    grid: InteriorGrid,
    policy: WindowPolicy,
) -> Result<RegimeReport> {
    let u = frame.reduite.as_ref().ok_or(Error::NoClosedForm)?;
    let threshold = ShrunkenConeQuery::new(n, epsilon)?.threshold();
    let layer = exact::layer_float(&frame.model, &frame.cone, x, n, policy)?;
    let nf = n as f64;
    let radius = a * nf.sqrt();
    let mut ratios = Vec::new();
    for (y, &mass) in layer.iter() {
        let my = frame.to_frame(&y);
        let r2: f64 = my.iter().map(|c| c * c).sum();
        if r2.sqrt() > radius {
            continue;
        }
        if grid == InteriorGrid::Shrunken && frame.frame_cone.facet_margin(&my) < threshold {
            continue;
        }
        ratios.push(mass / (u.eval(&my) * (-r2 / (2.0 * nf)).exp()));
    }
    if ratios.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let scaled = trimmed_mean(&ratios, 0.1);
    let d = frame.dim() as f64;
    Ok(RegimeReport {
        kappa_estimate: scaled * nf.powf(u.p + d / 2.0),
        scaled_estimate: scaled,
        ratio_spread: max / min - 1.0,
        grid_size: ratios.len(),
        period_class: n % frame.report.period.max(1),
        n,
        truncation_loss: layer.truncation_loss,
    })
}

/// One row of the boundary comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryRow {
    pub n: u64,
    pub y: Vec<i64>,
    pub exact: f64,
    pub functional: MCEstimate,
    pub predicted: f64,
    pub ratio: f64,
    /// Ratio of the boundary prediction to the interior (Gaussian) form
    /// `κV(x) n^{−p−d/2} u(y) e^{−|y|²/(2n)}` at the same `y`.
    pub interior_agreement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryReport {
    pub kappa_v: f64,
    pub epsilon: f64,
    pub rows: Vec<BoundaryRow>,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub tolerance: (f64, f64),
    pub pass: bool,
}

/// Planar end point `(1, m)` with `m` the integer nearest `√n` for which
/// `y` is reachable from `x` at time `n` inside the cone.
pub fn boundary_point(layer: &exact::LayerTable<f64>, n: u64) -> Option<Vec<i64>> {
    let m0 = (n as f64).sqrt().round() as i64;
    (0..8)
        .flat_map(|k| [m0 + k, m0 - k])
        .map(|m| vec![1, m])
        .find(|y| layer.get(y) > 0.0)
}

/// Compare the exact local probability at `y = (1, ≈√n)` with
/// `κV(x)·n^{−p/2−d/2}·E[u(y'_ε(n)/√n); t' ≤ τ']·e^{−|y|²/(2n)}`, the
/// functional estimated by Monte Carlo on the reversed walk.
#[allow(clippy::too_many_arguments)]
pub fn verify_boundary_llt(
    frame: &Frame,
    x: &[i64],
    n_list: &[u64],
    epsilon: f64,
    kappa_v: f64,
    mc_samples: u64,
    seed: u64,
    tolerance: (f64, f64),
    policy: WindowPolicy,
) -> Result<BoundaryReport> {
    if frame.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: frame.dim(),
        });
    }
    let u = frame.reduite.as_ref().ok_or(Error::NoClosedForm)?;
    let reversed = frame.reversed();
    let d = frame.dim() as f64;
    let mut rows = Vec::new();
    for (i, &n) in n_list.iter().enumerate() {
        let layer = exact::layer_float(&frame.model, &frame.cone, x, n, policy)?;
        let y = boundary_point(&layer, n).ok_or(Error::EmptyGrid)?;
        let exact_value = layer.get(&y);
        let functional =
            mc::mc_boundary_functional(&reversed, &y, n, epsilon, mc_samples, seed.wrapping_add(i as u64))?;
        let nf = n as f64;
        let gauss = (-frame.norm_sq(&y) / (2.0 * nf)).exp();
        let predicted = kappa_v * nf.powf(-(u.p + d) / 2.0) * functional.mean * gauss;
        let interior = kappa_v * nf.powf(-(u.p + d / 2.0)) * frame.u(&y).unwrap_or(f64::NAN) * gauss;
        rows.push(BoundaryRow {
            n,
            ratio: exact_value / predicted,
            interior_agreement: predicted / interior,
            y,
            exact: exact_value,
            functional,
            predicted,
        });
    }
    let ratio_min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let ratio_max = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(BoundaryReport {
        kappa_v,
        epsilon,
        pass: ratio_min >= tolerance.0 && ratio_max <= tolerance.1,
        rows,
        ratio_min,
        ratio_max,
        tolerance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HarmonicityRow {
    pub x: Vec<i64>,
    pub v: f64,
    pub neighbour_sum: f64,
    pub defect: f64,
    pub cauchy_diagnostic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HarmonicityReport {
    pub horizon: u64,
    pub rows: Vec<HarmonicityRow>,
    pub max_defect: f64,
}

/// Approximate `V` by `E[u(· + S(N)); τ > N]` and measure the one-step
/// defect `|V(x) − Σ_s p_s V(x+s) 1{x+s ∈ K}| / V(x)`.
pub fn verify_harmonicity_v(
    frame: &Frame,
    points: &[Vec<i64>],
    horizon: u64,
    policy: WindowPolicy,
) -> Result<HarmonicityReport> {
    let v = |z: &[i64]| -> Result<(f64, f64)> {
        let h = exact::harmonic_v(frame, z, horizon, policy)?;
        Ok((h.limit(), h.cauchy_diagnostic))
    };
    let mut rows = Vec::new();
    for x in points {
        let (vx, cauchy) = v(x)?;
        let mut sum = 0.0;
        for s in frame.model.steps() {
            let z: Vec<i64> = x.iter().zip(&s.v).map(|(a, b)| a + b).collect();
            if frame.contains(&z) {
                sum += s.p.value * v(&z)?.0;
            }
        }
        rows.push(HarmonicityRow {
            x: x.clone(),
            v: vx,
            neighbour_sum: sum,
            defect: (vx - sum).abs() / vx.abs(),
            cauchy_diagnostic: cauchy,
        });
    }
    let max_defect = rows.iter().map(|r| r.defect).fold(0.0, f64::max);
    Ok(HarmonicityReport {
        horizon,
        rows,
        max_defect,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowerBoundRow {
    pub z: Vec<i64>,
    pub n: u64,
    pub survival: MCEstimate,
    /// `n^{p/2}·P̂(τ_z > n)`.
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub rows: Vec<LowerBoundRow>,
    pub min_normalized: f64,
    /// Range of the ratio between consecutive `n` at each point.
    pub consecutive_ratio: (f64, f64),
    pub floor: f64,
    pub pass: bool,
}

/// Minimum over points and horizons of `n^{p/2}·P̂(τ_z > n)`.
pub fn verify_uniform_lower_bound(
    frame: &Frame,
    points: &[Vec<i64>],
    n_list: &[u64],
    samples: u64,
    seed: u64,
    floor: f64,
) -> Result<LowerBoundReport> {
    let p = cone_exponent(frame)?;
    let mut rows = Vec::new();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, z) in points.iter().enumerate() {
        let mut prev: Option<f64> = None;
        for (j, &n) in n_list.iter().enumerate() {
            let s = seed.wrapping_add((i * n_list.len() + j) as u64);
            let est = mc::mc_survival(&frame.model, &frame.cone, z, n, samples, s)?;
            let normalized = (n as f64).powf(p / 2.0) * est.mean;
            if let Some(q) = prev {
                let r = normalized / q;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            prev = Some(normalized);
            rows.push(LowerBoundRow {
                z: z.clone(),
                n,
                survival: est,
                normalized,
            });
        }
    }
    let min_normalized = rows.iter().map(|r| r.normalized).fold(f64::INFINITY, f64::min);
    if !lo.is_finite() {
        lo = 1.0;
        hi = 1.0;
    }
    Ok(LowerBoundReport {
        pass: min_normalized >= floor,
        rows,
        min_normalized,
        consecutive_ratio: (lo, hi),
        floor,
    })
}

/// Exact `P(S(n) = 0)` without killing against
/// `(2πn)^{−d/2} |det Q|^{−1/2}` times the time-lattice index.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FreeLltCheck {
    pub n: u64,
    pub exact: f64,
    pub predicted: f64,
    pub relative_error: f64,
}

pub fn verify_free_llt(frame: &Frame, n: u64, policy: WindowPolicy) -> Result<FreeLltCheck> {
    let d = frame.dim();
    let origin = vec![0i64; d];
    let full = crate::cone::ConeSpec::full_space(d);
    let layer = exact::layer_float(&frame.model, &full, &origin, n, policy)?;
    let value = layer.get(&origin);
    let det = frame.model.covariance().determinant();
    let predicted = (2.0 * std::f64::consts::PI * n as f64).powf(-(d as f64) / 2.0) / det.sqrt()
        * frame.report.time_lattice_index as f64;
    Ok(FreeLltCheck {
        n,
        exact: value,
        predicted,
        relative_error: (value / predicted - 1.0).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::ConeSpec;
    use crate::walk_model::catalog;

    #[test]
    fn least_squares_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let (a, b, r2) = least_squares(&xs, &ys);
        assert!((a - 2.0).abs() < 1e-15 && (b + 1.0).abs() < 1e-15 && (r2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn synthetic_power_laws() {
        let s: Vec<(u64, f64)> = (1..5000).map(|n| (n, 1.0 / n as f64)).collect();
        let f = fit_exponent(&s, (10, 4000), PeriodSpec::aperiodic()).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        let s: Vec<(u64, f64)> = (1..5000)
            .map(|n| (n, (1.0 + 5.0 / n as f64) / n as f64))
            .collect();
        let f = fit_exponent(&s, (256, 4096), PeriodSpec::aperiodic()).unwrap();
        assert!(f.slope > -1.02 && f.slope < -1.0, "{}", f.slope);
        let c: Vec<(u64, f64)> = (1..100).map(|n| (n, 0.3)).collect();
        assert!(fit_exponent(&c, (1, 99), PeriodSpec::aperiodic()).unwrap().slope.abs() < 1e-15);
        let s: Vec<(u64, f64)> = (1..3000).map(|n| (n, 7.0 * (n as f64).powf(-2.5))).collect();
        assert!((fit_exponent(&s, (50, 2000), PeriodSpec::aperiodic()).unwrap().slope + 2.5).abs() < 1e-10);
    }

    #[test]
    fn fit_errors() {
        let s: Vec<(u64, f64)> = (1..10).map(|n| (n, if n == 5 { 0.0 } else { 1.0 })).collect();
        assert!(matches!(
            fit_exponent(&s, (1, 9), PeriodSpec::aperiodic()),
            Err(Error::NonPositiveValue { n: 5, .. })
        ));
        assert!(matches!(
            fit_exponent(&s, (1, 9), PeriodSpec { period: 2, residue: None }),
            Err(Error::MixedResidueClasses(2))
        ));
        assert!(fit_exponent(&s, (20, 30), PeriodSpec::aperiodic()).is_err());
    }

    #[test]
    fn nsew_parity_handling() {
        let f = Frame::new(catalog::nsew(), ConeSpec::orthant(2)).unwrap();
        assert_eq!(f.report.period, 2);
        let (values, _) =
            exact::local_series(&f.model, &f.cone, &[1, 1], &[1, 1], 200, WindowPolicy::Full).unwrap();
        let series: Vec<(u64, f64)> = values.iter().enumerate().map(|(n, v)| (n as u64, *v)).collect();
        assert!(matches!(
            fit_exponent(&series, (20, 200), PeriodSpec { period: 2, residue: None }),
            Err(Error::MixedResidueClasses(2))
        ));
        let fit = fit_exponent(&series, (20, 200), PeriodSpec::class(2, 0)).unwrap();
        assert!((fit.slope + 3.0).abs() < 0.3, "{}", fit.slope);
    }

    #[test]
    fn half_plane_survival_exponent() {
        let cone = ConeSpec::wedge(std::f64::consts::PI, 0.0).unwrap();
        let f = Frame::new(catalog::lazy(), cone).unwrap();
        let c = verify_survival_exponent(&f, &[0, 1], (64, 512), 0.05, WindowPolicy::default()).unwrap();
        assert!(c.pass, "{c:?}");
    }

    #[test]
    fn full_space_llt_control() {
        let f = Frame::new(catalog::lazy(), ConeSpec::full_space(2)).unwrap();
        let c = verify_llt_exponent(&f, &[0, 0], (32, 256), 0.05, WindowPolicy::default()).unwrap();
        assert!(c.pass, "{c:?}");
        assert_eq!(c.expected, -1.0);
    }

    #[test]
    fn harmonicity_exact_cases() {
        let f = Frame::new(catalog::simple_1d(), ConeSpec::orthant(1)).unwrap();
        let r = verify_harmonicity_v(&f, &[vec![1], vec![2], vec![7]], 64, WindowPolicy::Full).unwrap();
        assert!(r.max_defect < 1e-12);
        assert!((r.rows[2].v - 7.0).abs() < 1e-12);
        let f = Frame::new(catalog::nsew(), ConeSpec::orthant(2)).unwrap();
        let r = verify_harmonicity_v(&f, &[vec![1, 1], vec![2, 5]], 32, WindowPolicy::Full).unwrap();
        assert!(r.max_defect < 1e-12);
        assert!((r.rows[1].v - 2.0 * 10.0).abs() < 1e-9);
    }

    #[test]
    fn interior_grid_and_control() {
        let f = Frame::new(catalog::lazy(), ConeSpec::orthant(2)).unwrap();
        let a = verify_interior_llt(&f, &[1, 1], 100, 2.0, 0.1, InteriorGrid::Shrunken, WindowPolicy::default())
            .unwrap();
        let b = verify_interior_llt(&f, &[1, 1], 100, 2.0, 0.1, InteriorGrid::All, WindowPolicy::default())
            .unwrap();
        assert!(a.grid_size > 10 && b.grid_size > a.grid_size);
        assert!(b.ratio_spread > a.ratio_spread);
        assert!(a.kappa_estimate > 0.0);
        assert!(matches!(
            verify_interior_llt(&f, &[1, 1], 4, 0.1, 0.1, InteriorGrid::Shrunken, WindowPolicy::Full),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn trimmed_mean_drops_tails() {
        let v: Vec<f64> = (0..10).map(|i| i as f64).chain([1000.0]).collect();
        assert!((trimmed_mean(&v, 0.1) - 5.0).abs() < 1e-12);
    }
}
