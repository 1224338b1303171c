//! Dirichlet heat kernel `K_t(x, y)` and survival `k_t(x) = P(τ^bm_x > t)`
//! of standard Brownian motion killed on leaving a catalog cone.
//!
//! Half-spaces use the method of images, orthants the product of half-line
//! factors, Weyl chambers the Karlin–McGregor determinant, and wedges the
//! Bessel eigenfunction series
//!
//! ```text
//! K_t = (2/(βt)) e^{−(r²+ρ²)/(2t)} Σ_j I_{ν_j}(rρ/t) sin(ν_j θ) sin(ν_j φ),   ν_j = jπ/β
//! k_t = Σ_{j odd} (2/(j√π)) (r/√(2t)) e^{−z} [I_{(ν_j−1)/2}(z) + I_{(ν_j+1)/2}(z)] sin(ν_j θ),   z = r²/(4t)
//! ```
//!
//! with angles measured from the wedge's first ray.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cone::{ball_volume, dot, norm, ConeSpec};
use crate::error::{Error, Result};
use crate::reduite::{polar_rel, ReduiteFn};
use crate::special::{bessel_i_scaled, composite_gauss_legendre, erf};
use crate::verify::least_squares;

/// Wedge series prefactor `c` in `c/(βt)`; checked against the half-plane
/// image formula by [`calibrate_wedge_normalization`].
pub const WEDGE_NORMALIZATION: f64 = 2.0;

pub const DEFAULT_SERIES_TERMS: usize = 200;
pub const DEFAULT_TOLERANCE: f64 = 1e-14;

/// A truncated series value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub terms: usize,
    /// Size of the last retained term relative to the first.
    pub last_term_ratio: f64,
}

fn gauss(d: usize, t: f64, sq: f64) -> f64 {
    (2.0 * PI * t).powf(-(d as f64) / 2.0) * (-sq / (2.0 * t)).exp()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Half-space kernel `g_t(y − x) − g_t(y − x̄)`, `x̄` the mirror image of `x`.
pub fn halfspace_kernel(normal: &[f64], x: &[f64], y: &[f64], t: f64) -> f64 {
    // g(y−x) − g(y−x̄) = g(y−x)(1 − e^{−2⟨x,n⟩⟨y,n⟩/t}); no cancellation.
    let h = dot(normal, x);
    let direct = gauss(x.len(), t, sq_dist(x, y));
    direct * -(-2.0 * h * dot(normal, y) / t).exp_m1()
}

/// `erf(⟨x, n⟩/√(2t))`.
pub fn halfspace_survival(normal: &[f64], x: &[f64], t: f64) -> f64 {
    erf(dot(normal, x) / (2.0 * t).sqrt())
}

/// Product of half-line kernels.
pub fn orthant_kernel(x: &[f64], y: &[f64], t: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| halfspace_kernel(&[1.0], &[a], &[b], t))
        .product()
}

/// `Π erf(x_i/√(2t))`.
pub fn orthant_survival(x: &[f64], t: f64) -> f64 {
    x.iter().map(|&a| erf(a / (2.0 * t).sqrt())).product()
}

/// Karlin–McGregor kernel `det[g_t(y_j − x_i)]` on `x_1 < … < x_d`.
pub fn weyl_kernel(x: &[f64], y: &[f64], t: f64) -> f64 {
    let d = x.len();
    let m = DMatrix::from_fn(d, d, |i, j| gauss(1, t, (y[j] - x[i]).powi(2)));
    m.determinant()
}

/// Wedge kernel from polar points `(r, θ)`, `(ρ, φ)` with angles in `[0, β]`.
pub fn wedge_kernel(
    beta: f64,
    x_polar: (f64, f64),
    y_polar: (f64, f64),
    t: f64,
    terms: usize,
    tolerance: f64,
) -> Result<SeriesValue> {
    let (r, th) = x_polar;
    let (rho, ph) = y_polar;
    let z = r * rho / t;
    let pre = WEDGE_NORMALIZATION / (beta * t) * (-(r - rho).powi(2) / (2.0 * t)).exp();
    if z == 0.0 {
        return Ok(SeriesValue {
            value: 0.0,
            terms: 0,
            last_term_ratio: 0.0,
        });
    }
    let mut sum = 0.0;
    let mut first = 0.0;
    for j in 1..=terms {
        let nu = j as f64 * PI / beta;
        let b = bessel_i_scaled(nu, z);
        if j == 1 {
            first = b;
        }
        sum += b * (nu * th).sin() * (nu * ph).sin();
        let ratio = if first > 0.0 { b / first } else { 0.0 };
        if nu * nu > z && ratio <= tolerance {
            return Ok(SeriesValue {
                value: pre * sum,
                terms: j,
                last_term_ratio: ratio,
            });
        }
        if j == terms {
            return Err(Error::SeriesNotConverged { terms, ratio });
        }
    }
    Err(Error::SeriesNotConverged { terms, ratio: 1.0 })
}

/// Wedge survival from a polar point `(r, θ)`, `θ ∈ [0, β]`.
pub fn wedge_survival(
    beta: f64,
    x_polar: (f64, f64),
    t: f64,
    terms: usize,
    tolerance: f64,
) -> Result<SeriesValue> {
    let (r, th) = x_polar;
    if r == 0.0 {
        return Ok(SeriesValue {
            value: 0.0,
            terms: 0,
            last_term_ratio: 0.0,
        });
    }
    let z = r * r / (4.0 * t);
    let a = r / (2.0 * t).sqrt();
    let mut sum = 0.0;
    let mut first = 0.0;
    for k in 0..terms {
        let j = 2 * k + 1;
        let nu = j as f64 * PI / beta;
        let b = 2.0 / (j as f64 * PI.sqrt())
            * a
            * (bessel_i_scaled(0.5 * (nu - 1.0), z) + bessel_i_scaled(0.5 * (nu + 1.0), z));
        if k == 0 {
            first = b.abs();
        }
        sum += b * (nu * th).sin();
        let ratio = if first > 0.0 { b.abs() / first } else { 0.0 };
        if 0.25 * (nu - 1.0).powi(2) > z && ratio <= tolerance {
            return Ok(SeriesValue {
                value: sum,
                terms: k + 1,
                last_term_ratio: ratio,
            });
        }
        if k + 1 == terms {
            return Err(Error::SeriesNotConverged { terms, ratio });
        }
    }
    Err(Error::SeriesNotConverged { terms, ratio: 1.0 })
}

/// Which closed form an evaluator uses.
#[derive(Clone, Debug, PartialEq)]
enum Form {
    HalfSpace(Vec<f64>),
    Orthant,
    Wedge { beta: f64, base: f64 },
    Weyl,
}

/// Kernel and survival evaluator for a catalog cone (points in decorrelated
/// coordinates).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelEvaluator {
    pub cone: ConeSpec,
    pub series_terms: usize,
    pub tolerance: f64,
    #[serde(skip)]
    form: Option<Form>,
}

impl KernelEvaluator {
    pub fn new(cone: &ConeSpec) -> Result<Self> {
        let cone = cone.canonicalize();
        let form = match &cone {
            ConeSpec::HalfSpace { normal } => Form::HalfSpace(normal.clone()),
            ConeSpec::Orthant { .. } => Form::Orthant,
            ConeSpec::Wedge2D { beta, base } => Form::Wedge {
                beta: *beta,
                base: *base,
            },
            ConeSpec::WeylChamberA { .. } => Form::Weyl,
            ConeSpec::Polyhedral { .. } => return Err(Error::NoClosedForm),
        };
        Ok(KernelEvaluator {
            cone,
            series_terms: DEFAULT_SERIES_TERMS,
            tolerance: DEFAULT_TOLERANCE,
            form: Some(form),
        })
    }

    pub fn with_series(mut self, terms: usize, tolerance: f64) -> Self {
        self.series_terms = terms;
        self.tolerance = tolerance;
        self
    }

    pub fn dim(&self) -> usize {
        self.cone.dim()
    }

    fn form(&self) -> &Form {
        self.form.as_ref().expect("constructed through new")
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !self.cone.contains_closed(x)? {
            return Err(Error::PointOutsideCone(x.to_vec()));
        }
        Ok(())
    }

    fn polar(base: f64, beta: f64, x: &[f64]) -> (f64, f64) {
        let (r, th) = polar_rel(x, base);
        (r, th.clamp(0.0, beta))
    }

    /// `K_t(x, y)`; zero when either point is on ∂K.
    pub fn kernel(&self, x: &[f64], y: &[f64], t: f64) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(match self.form() {
            Form::HalfSpace(n) => halfspace_kernel(n, x, y, t),
            Form::Orthant => orthant_kernel(x, y, t),
            Form::Weyl => weyl_kernel(x, y, t).max(0.0),
            Form::Wedge { beta, base } => {
                wedge_kernel(
                    *beta,
                    Self::polar(*base, *beta, x),
                    Self::polar(*base, *beta, y),
                    t,
                    self.series_terms,
                    self.tolerance,
                )?
                .value
            }
        })
    }

    /// `k_t(x) = P(τ^bm_x > t)`.
    pub fn survival(&self, x: &[f64], t: f64) -> Result<f64> {
        self.check(x)?;
        match self.form() {
            Form::HalfSpace(n) => Ok(halfspace_survival(n, x, t)),
            Form::Orthant => Ok(orthant_survival(x, t)),
            Form::Wedge { beta, base } => Ok(wedge_survival(
                *beta,
                Self::polar(*base, *beta, x),
                t,
                self.series_terms,
                self.tolerance,
            )?
            .value),
            Form::Weyl if x.len() == 2 => Ok(erf((x[1] - x[0]) / (2.0 * t.sqrt()))),
            Form::Weyl => Err(Error::NoClosedForm),
        }
    }

    /// `∫_K f(y) dy` over the part of the cone within `radius` of `center`,
    /// by composite Gauss–Legendre (polar about the apex in 2D).
    pub fn integrate(
        &self,
        center: &[f64],
        radius: f64,
        panels: usize,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<f64> {
        match self.dim() {
            1 => {
                let sign = self.cone.center_direction()[0];
                let c = center[0] * sign;
                let lo = (c - radius).max(0.0);
                let rule = composite_gauss_legendre(16, panels, lo, c + radius);
                Ok(rule.iter().map(|(s, w)| w * f(&[s * sign])).sum())
            }
            2 => {
                let (beta, base) = match self.form() {
                    Form::Wedge { beta, base } => (*beta, *base),
                    Form::Orthant => (PI / 2.0, 0.0),
                    Form::HalfSpace(n) => (PI, n[1].atan2(n[0]) - PI / 2.0),
                    Form::Weyl => (PI, PI / 4.0),
                };
                let r0 = norm(center);
                let radial = composite_gauss_legendre(16, panels, (r0 - radius).max(0.0), r0 + radius);
                let angular = composite_gauss_legendre(16, panels, 0.0, beta);
                let mut total = 0.0;
                for (r, wr) in &radial {
                    for (a, wa) in &angular {
                        let phi = base + a;
                        let y = [r * phi.cos(), r * phi.sin()];
                        total += wr * wa * r * f(&y);
                    }
                }
                Ok(total)
            }
            d => Err(Error::DimensionMismatch { expected: 2, got: d }),
        }
    }

    /// `∫_K K_t(x, y) dy`, which should equal `k_t(x)`.
    pub fn integrate_kernel(&self, x: &[f64], t: f64, panels: usize) -> Result<f64> {
        self.check(x)?;
        let radius = 8.0 * t.sqrt();
        self.integrate(x, radius, panels, |y| {
            if self.cone.contains_closed(y).unwrap_or(false) {
                self.kernel(x, y, t).unwrap_or(f64::NAN)
            } else {
                0.0
            }
        })
    }

    /// `|∫ K_s(x,z) K_t(z,y) dz − K_{s+t}(x,y)|`.
    pub fn chapman_kolmogorov_defect(
        &self,
        x: &[f64],
        y: &[f64],
        s: f64,
        t: f64,
        panels: usize,
    ) -> Result<f64> {
        let direct = self.kernel(x, y, s + t)?;
        let mid: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
        let radius = 0.5 * sq_dist(x, y).sqrt() + 10.0 * (s + t).sqrt();
        let conv = self.integrate(&mid, radius, panels, |z| {
            if self.cone.contains_closed(z).unwrap_or(false) {
                self.kernel(x, z, s).unwrap_or(f64::NAN) * self.kernel(z, y, t).unwrap_or(f64::NAN)
            } else {
                0.0
            }
        })?;
        Ok((conv - direct).abs())
    }
}

/// Prefactor `c` of the wedge series fitted against the half-plane image
/// formula at the given polar points (`t = 1`): the ratio
/// `K^{half-plane} / (K^{series}/c)`. Returns the mean and the largest
/// deviation from it.
pub fn calibrate_wedge_normalization(points: &[((f64, f64), (f64, f64))]) -> Result<(f64, f64)> {
    let mut ratios = Vec::new();
    for &(xp, yp) in points {
        let series = wedge_kernel(PI, xp, yp, 1.0, 2000, 1e-15)?.value / WEDGE_NORMALIZATION;
        let to = |(r, th): (f64, f64)| [r * th.cos(), r * th.sin()];
        let exact = halfspace_kernel(&[0.0, 1.0], &to(xp), &to(yp), 1.0);
        if series.abs() > 1e-300 {
            ratios.push(exact / series);
        }
    }
    if ratios.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let dev = ratios.iter().map(|r| (r - mean).abs()).fold(0.0, f64::max);
    Ok((mean, dev))
}

/// Fitted `χ` and `χ₀`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticConstants {
    pub chi: f64,
    pub chi0: f64,
    pub fit_window: (f64, f64),
    /// Largest relative deviation of the normalized values from the fitted
    /// `χ + a/t` over the upper half of the t grid.
    pub fit_residual: f64,
    pub x: Vec<f64>,
}

/// Largest residual accepted by [`fit_asymptotic_constants`].
pub const FIT_RESIDUAL_LIMIT: f64 = 0.05;

/// Fit `χ = lim k_t(x) t^{p/2}/u(x)` and `χ₀ = lim K_t(x,x) t^{d/2+p}/u(x)²`
/// on a log-spaced grid over `[t_lo, t_hi]` with `x` the unit central point.
/// Each normalized series is extrapolated linearly in `1/t`.
pub fn fit_asymptotic_constants_on(
    ev: &KernelEvaluator,
    u: &ReduiteFn,
    t_lo: f64,
    t_hi: f64,
    points: usize,
) -> Result<AsymptoticConstants> {
    let x = ev.cone.center_direction();
    let ux = u.eval(&x);
    let p = u.p;
    let d = ev.dim() as f64;
    let points = points.max(4);
    let ts: Vec<f64> = (0..points)
        .map(|i| t_lo * (t_hi / t_lo).powf(i as f64 / (points - 1) as f64))
        .collect();
    let mut a = Vec::with_capacity(points);
    let mut b = Vec::with_capacity(points);
    for &t in &ts {
        a.push(ev.survival(&x, t)? * t.powf(p / 2.0) / ux);
        b.push(ev.kernel(&x, &x, t)? * t.powf(d / 2.0 + p) / (ux * ux));
    }
    let upper = points / 2;
    let inv: Vec<f64> = ts[upper..].iter().map(|t| 1.0 / t).collect();
    let extrapolate = |v: &[f64]| -> (f64, f64) {
        let (slope, c, _) = least_squares(&inv, &v[upper..]);
        let res = inv
            .iter()
            .zip(&v[upper..])
            .map(|(s, y)| ((y - c - slope * s) / c).abs())
            .fold(0.0, f64::max);
        (c, res)
    };
    let (chi, r1) = extrapolate(&a);
    let (chi0, r2) = extrapolate(&b);
    let fit_residual = r1.max(r2);
    if !(fit_residual <= FIT_RESIDUAL_LIMIT) || !(chi > 0.0 && chi0 > 0.0) {
        return Err(Error::FitDiverged(fit_residual));
    }
    Ok(AsymptoticConstants {
        chi,
        chi0,
        fit_window: (t_lo, t_hi),
        fit_residual,
        x,
    })
}

/// [`fit_asymptotic_constants_on`] over `t ∈ [10², 10⁶]`.
pub fn fit_asymptotic_constants(ev: &KernelEvaluator, u: &ReduiteFn) -> Result<AsymptoticConstants> {
    fit_asymptotic_constants_on(ev, u, 1e2, 1e6, 33)
}

/// `x_s`: `x` itself when `dist(x, ∂K) ≥ c₀ s`, else `x + s·w` with `w` the
/// unit central direction.
pub fn shifted_point(cone: &ConeSpec, x: &[f64], s: f64) -> Vec<f64> {
    if cone.facet_margin(x) >= cone.c0() * s {
        x.to_vec()
    } else {
        let w = cone.center_direction();
        x.iter().zip(&w).map(|(a, b)| a + s * b).collect()
    }
}

/// Min and max of a ratio statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioStat {
    pub min: f64,
    pub max: f64,
}

impl RatioStat {
    fn new() -> Self {
        RatioStat {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn push(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    pub fn spread(&self) -> f64 {
        self.max / self.min
    }

    pub fn finite(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min > 0.0
    }
}

/// Ratio statistics for the two-sided Gaussian bounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheckReport {
    pub samples: usize,
    pub t_range: (f64, f64),
    /// `k_t(x)·u(x_{√t})/u(x)`, bounded above and below.
    pub survival_ratio: RatioStat,
    /// `K_t(x,y)` over the lower form with `exp(−|x−y|²/(C₃t))`.
    pub kernel_lower_ratio: RatioStat,
    /// `K_t(x,y)` over the upper form with `exp(−|x−y|²/(c₃t))`.
    pub kernel_upper_ratio: RatioStat,
    pub c3_lower: f64,
    pub c3_upper: f64,
    /// Largest ratio between decades of t of the decade-wise extremes
    /// (survival min and max, lower-ratio min, upper-ratio max).
    pub decade_stability: f64,
    /// `inf_z V(z, √t)/t^{d/2}` over the sample.
    pub ball_volume_min: f64,
    /// `V(0, 1)`.
    pub ball_volume_origin: f64,
    pub finite: bool,
}

/// Random point of the cone with `|x| ∈ [lo, hi]` (rejection from a ball
/// around the central ray).
fn random_point(cone: &ConeSpec, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec<f64> {
    let d = cone.dim();
    let c = cone.center_direction();
    loop {
        let v: Vec<f64> = (0..d).map(|i| c[i] + rng.random_range(-1.0..1.0)).collect();
        let n = norm(&v);
        if n == 0.0 {
            continue;
        }
        let r = lo * (hi / lo).powf(rng.random::<f64>());
        let x: Vec<f64> = v.iter().map(|a| r * a / n).collect();
        if cone.facet_margin(&x) > 0.0 {
            return x;
        }
    }
}

/// Sample the ratio statistics of the Gaussian kernel bounds with
/// `t` log-uniform over `[t_lo, t_hi]` and points at scale `√t`.
pub fn check_gaussian_bounds(
    ev: &KernelEvaluator,
    u: &ReduiteFn,
    samples: usize,
    t_range: (f64, f64),
    seed: u64,
) -> Result<BoundCheckReport> {
    const C3_LOWER: f64 = 1.0;
    const C3_UPPER: f64 = 4.0;
    let cone = &ev.cone;
    let d = ev.dim() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t_lo, t_hi) = t_range;
    let decades = ((t_hi / t_lo).log10().ceil() as usize).max(1);
    let mut survival = RatioStat::new();
    let mut lower = RatioStat::new();
    let mut upper = RatioStat::new();
    let mut per_decade = vec![(RatioStat::new(), RatioStat::new(), RatioStat::new()); decades];
    let mut vol_min = f64::INFINITY;
    for _ in 0..samples {
        let t = t_lo * (t_hi / t_lo).powf(rng.random::<f64>());
        let s = t.sqrt();
        let dec = (((t / t_lo).log10()).floor() as usize).min(decades - 1);
        let x = random_point(cone, &mut rng, 0.02 * s, 3.0 * s);
        let y = random_point(cone, &mut rng, 0.02 * s, 3.0 * s);
        let kx = ev.survival(&x, t)?;
        let ky = ev.survival(&y, t)?;
        let ux = u.eval(&x);
        let uxs = u.eval(&shifted_point(cone, &x, s));
        let r1 = kx * uxs / ux;
        let vx = ball_volume(cone, &x, s)?;
        let vy = ball_volume(cone, &y, s)?;
        vol_min = vol_min.min(vx / t.powf(d / 2.0));
        let k = ev.kernel(&x, &y, t)?;
        let base = kx * ky / (vx * vy).sqrt();
        let dxy = sq_dist(&x, &y);
        let rl = k / (base * (-dxy / (C3_LOWER * t)).exp());
        let ru = k / (base * (-dxy / (C3_UPPER * t)).exp());
        survival.push(r1);
        lower.push(rl);
        upper.push(ru);
        per_decade[dec].0.push(r1);
        per_decade[dec].1.push(rl);
        per_decade[dec].2.push(ru);
    }
    let filled: Vec<_> = per_decade.iter().filter(|p| p.0.min.is_finite()).collect();
    let stab = |f: &dyn Fn(&(RatioStat, RatioStat, RatioStat)) -> f64| {
        let v: Vec<f64> = filled.iter().map(|p| f(p)).collect();
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        hi / lo
    };
    let decade_stability = [
        stab(&|p| p.0.min),
        stab(&|p| p.0.max),
        stab(&|p| p.1.min),
        stab(&|p| p.2.max),
    ]
    .into_iter()
    .fold(1.0, f64::max);
    let origin = vec![0.0; ev.dim()];
    let v01 = ball_volume(cone, &origin, 1.0)?;
    let finite = survival.finite() && lower.finite() && upper.finite() && decade_stability.is_finite();
    Ok(BoundCheckReport {
        samples,
        t_range,
        survival_ratio: survival,
        kernel_lower_ratio: lower,
        kernel_upper_ratio: upper,
        c3_lower: C3_LOWER,
        c3_upper: C3_UPPER,
        decade_stability,
        ball_volume_min: vol_min,
        ball_volume_origin: v01,
        finite,
    })
}

/// `k̄(sx)/k̄(x)` with `k̄ = k_1`, for `s` uniform in `[s_min, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    pub samples: usize,
    pub s_min: f64,
    pub ratio: RatioStat,
}

pub fn check_kernel_scaling(
    ev: &KernelEvaluator,
    samples: usize,
    s_min: f64,
    seed: u64,
) -> Result<ScalingReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratio = RatioStat::new();
    for _ in 0..samples {
        let x = random_point(&ev.cone, &mut rng, 0.05, 4.0);
        let s = rng.random_range(s_min..=1.0);
        let sx: Vec<f64> = x.iter().map(|a| s * a).collect();
        ratio.push(ev.survival(&sx, 1.0)? / ev.survival(&x, 1.0)?);
    }
    Ok(ScalingReport {
        samples,
        s_min,
        ratio,
    })
}

/// Empirical Hölder regularity of `k̄ = k_1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolderReport {
    /// Slope of `log max|Δk̄|` against `log |Δx|` over the separations used.
    pub alpha: f64,
    /// `sup |k̄(x) − k̄(x')| / (|x − x'|^α (1 + |x'|^{p−1}))` at the fitted α.
    pub quotient_max: f64,
    pub pairs: usize,
}

pub fn check_holder(ev: &KernelEvaluator, p: f64, pairs: usize, seed: u64) -> Result<HolderReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seps = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut samples = Vec::new();
    for &h in &seps {
        for _ in 0..pairs {
            let x = random_point(&ev.cone, &mut rng, 0.01, 4.0);
            let dir: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let nd = norm(&dir).max(1e-12);
            let xp: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + h * b / nd).collect();
            if ev.cone.facet_margin(&xp) <= 0.0 {
                continue;
            }
            let dk = (ev.survival(&x, 1.0)? - ev.survival(&xp, 1.0)?).abs();
            samples.push((h, dk, norm(&xp)));
        }
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &h in &seps {
        let m = samples
            .iter()
            .filter(|s| s.0 == h)
            .map(|s| s.1)
            .fold(0.0, f64::max);
        if m > 0.0 {
            xs.push(h.ln());
            ys.push(m.ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::EmptyGrid);
    }
    let (alpha, _, _) = least_squares(&xs, &ys);
    let quotient_max = samples
        .iter()
        .map(|(h, dk, r)| dk / (h.powf(alpha) * (1.0 + r.powf(p - 1.0))))
        .fold(0.0, f64::max);
    Ok(HolderReport {
        alpha,
        quotient_max,
        pairs: samples.len(),
    })
}
