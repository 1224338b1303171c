//! Closed-form réduite (positive harmonic function vanishing on ∂K) for the
//! catalog cones, with its homogeneity exponent and analytic gradient.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cone::{norm, ConeSpec};
use crate::error::{Error, Result};

/// Réduite of a catalog cone. All closed forms carry scalar 1:
///
/// * half-space: `⟨x, n⟩`, p = 1
/// * wedge of opening β: `r^{π/β} sin(π(θ − base)/β)`, p = π/β
/// * orthant: `Π x_i`, p = d
/// * Weyl chamber A: `Π_{i<j} (x_j − x_i)`, p = d(d−1)/2
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReduiteFn {
    pub cone: ConeSpec,
    pub p: f64,
    pub normalization: f64,
}

pub fn reduite_for(cone: &ConeSpec) -> Result<ReduiteFn> {
    let p = match cone {
        ConeSpec::HalfSpace { .. } => 1.0,
        ConeSpec::Wedge2D { beta, .. } => PI / beta,
        ConeSpec::Orthant { dim } => *dim as f64,
        ConeSpec::WeylChamberA { dim } => (dim * (dim - 1)) as f64 / 2.0,
        ConeSpec::Polyhedral { .. } => return Err(Error::NoClosedForm),
    };
    Ok(ReduiteFn {
        cone: cone.clone(),
        p,
        normalization: 1.0,
    })
}

impl ReduiteFn {
    pub fn dim(&self) -> usize {
        self.cone.dim()
    }

    /// Value of the closed form. Zero on ∂K; may be negative outside K.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.normalization * self.raw(x)
    }

    fn raw(&self, x: &[f64]) -> f64 {
        match &self.cone {
            ConeSpec::HalfSpace { normal } => normal.iter().zip(x).map(|(a, b)| a * b).sum(),
            ConeSpec::Wedge2D { base, .. } => {
                let (r, phi) = polar_rel(x, *base);
                r.powf(self.p) * (self.p * phi).sin()
            }
            ConeSpec::Orthant { .. } => x.iter().product(),
            ConeSpec::WeylChamberA { .. } => {
                let mut v = 1.0;
                for i in 0..x.len() {
                    for j in i + 1..x.len() {
                        v *= x[j] - x[i];
                    }
                }
                v
            }
            ConeSpec::Polyhedral { .. } => unreachable!("no closed form"),
        }
    }

    /// Analytic gradient at an interior point.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.cone.contains(x)? {
            return Err(Error::PointOutsideCone(x.to_vec()));
        }
        let g = match &self.cone {
            ConeSpec::HalfSpace { normal } => normal.clone(),
            ConeSpec::Wedge2D { base, .. } => {
                let (r, phi) = polar_rel(x, *base);
                let th = base + phi;
                let c = self.p * r.powf(self.p - 1.0);
                let (s, k) = ((self.p * phi).sin(), (self.p * phi).cos());
                vec![
                    c * (s * th.cos() - k * th.sin()),
                    c * (s * th.sin() + k * th.cos()),
                ]
            }
            ConeSpec::Orthant { .. } => (0..x.len())
                .map(|i| {
                    x.iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, v)| v)
                        .product()
                })
                .collect(),
            ConeSpec::WeylChamberA { .. } => {
                let u = self.raw(x);
                (0..x.len())
                    .map(|k| {
                        u * (0..x.len())
                            .filter(|&j| j != k)
                            .map(|j| 1.0 / (x[k] - x[j]))
                            .sum::<f64>()
                    })
                    .collect()
            }
            ConeSpec::Polyhedral { .. } => return Err(Error::NoClosedForm),
        };
        Ok(g.into_iter().map(|v| v * self.normalization).collect())
    }

    /// Largest scaled finite-difference Laplacian `|Δ_h u| / (1 + |u|)` over
    /// `samples` interior points with `|x| ∈ [0.5, 2]`, keeping at least
    /// `10h` from ∂K.
    ///
    /// `h` is rounded to the nearest power of two and sample points are
    /// snapped to a dyadic grid, so stencil points are exact in floating
    /// point and polynomial forms of low degree show zero residual.
    pub fn check_harmonic(&self, samples: usize, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::Config("stencil step must be positive".into()));
        }
        let h = 2f64.powi(h.log2().round() as i32);
        let points = self.sample_interior(samples, 10.0 * h, 0x5eed_0f_4a3c)?;
        let d = self.dim();
        let mut worst = 0.0f64;
        for x in points {
            let u0 = self.eval(&x);
            let mut lap = 0.0;
            for i in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                lap += (self.eval(&xp) - u0) - (u0 - self.eval(&xm));
            }
            lap /= h * h;
            worst = worst.max(lap.abs() / (1.0 + u0.abs()));
        }
        Ok(worst)
    }

    /// Deterministic interior sample with radius in `[0.5, 2]` and boundary
    /// distance at least `margin`, snapped to multiples of 2^-20.
    pub fn sample_interior(&self, count: usize, margin: f64, seed: u64) -> Result<Vec<Vec<f64>>>
    where
        Self: Sized,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        let center = self.cone.center_direction();
        let snap = |v: f64| (v * 1048576.0).round() / 1048576.0;
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while out.len() < count {
            attempts += 1;
            if attempts > 1000 * count + 1000 {
                return Err(Error::EmptyGrid);
            }
            let r = rng.random_range(0.5..2.0);
            let x: Vec<f64> = match &self.cone {
                ConeSpec::Wedge2D { beta, base } => {
                    let th = base + rng.random_range(0.0..*beta);
                    vec![r * th.cos(), r * th.sin()]
                }
                _ => {
                    let v: Vec<f64> = (0..d)
                        .map(|i| center[i] + rng.random_range(-1.0..1.0))
                        .collect();
                    let n = norm(&v);
                    v.iter().map(|c| r * c / n).collect()
                }
            };
            let x: Vec<f64> = x.into_iter().map(snap).collect();
            if self.cone.contains_unchecked(&x) && self.cone.facet_margin(&x) >= margin {
                out.push(x);
            }
        }
        Ok(out)
    }
}

/// Polar radius and angle measured from `base`, angle in (−π, π].
pub(crate) fn polar_rel(x: &[f64], base: f64) -> (f64, f64) {
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let (s, c) = base.sin_cos();
    let xr = c * x[0] + s * x[1];
    let yr = -s * x[0] + c * x[1];
    (r, yr.atan2(xr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn catalog() -> Vec<ReduiteFn> {
        vec![
            reduite_for(&ConeSpec::half_space(vec![0.0, 0.0, 1.0]).unwrap()).unwrap(),
            reduite_for(&ConeSpec::half_space(vec![1.0, -2.0]).unwrap()).unwrap(),
            reduite_for(&ConeSpec::wedge(FRAC_PI_2, 0.0).unwrap()).unwrap(),
            reduite_for(&ConeSpec::wedge(2.0 * PI / 3.0, 0.4).unwrap()).unwrap(),
            reduite_for(&ConeSpec::wedge(PI / 5.0, -1.0).unwrap()).unwrap(),
            reduite_for(&ConeSpec::orthant(2)).unwrap(),
            reduite_for(&ConeSpec::orthant(3)).unwrap(),
            reduite_for(&ConeSpec::weyl_a(3)).unwrap(),
            reduite_for(&ConeSpec::weyl_a(4)).unwrap(),
        ]
    }

    #[test]
    fn exponents_and_values() {
        let w = reduite_for(&ConeSpec::wedge(FRAC_PI_2, 0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(w.p, 2.0, epsilon = 1e-15);
        let h = reduite_for(&ConeSpec::half_space(vec![0.0, 0.0, 1.0]).unwrap()).unwrap();
        assert_eq!(h.p, 1.0);
        assert_eq!(h.eval(&[0.0, 0.0, 5.0]), 5.0);
        let o = reduite_for(&ConeSpec::orthant(2)).unwrap();
        assert_eq!(o.eval(&[2.0, 3.0]), 6.0);
        assert_eq!(reduite_for(&ConeSpec::orthant(3)).unwrap().eval(&[1.0, 1.0, 1.0]), 1.0);
        let half = reduite_for(&ConeSpec::wedge(PI, 0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(half.eval(&[0.0, 4.0]), 4.0, epsilon = 1e-14);
        let weyl = reduite_for(&ConeSpec::weyl_a(3)).unwrap();
        assert_eq!(weyl.p, 3.0);
        assert_eq!(weyl.eval(&[0.0, 1.0, 3.0]), 6.0);
        assert_eq!(
            reduite_for(&ConeSpec::polyhedral(2, vec![vec![1.0, 0.0]]).unwrap()),
            Err(Error::NoClosedForm)
        );
    }

    #[test]
    fn half_plane_wedge_is_the_height() {
        let half = reduite_for(&ConeSpec::wedge(PI, 0.0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = [rng.random_range(-5.0..5.0), rng.random_range(0.01..5.0)];
            assert_abs_diff_eq!(half.eval(&x), x[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn orthant_equals_quarter_wedge_up_to_scalar() {
        let o = reduite_for(&ConeSpec::orthant(2)).unwrap();
        let w = reduite_for(&ConeSpec::wedge(FRAC_PI_2, 0.0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = [rng.random_range(0.01..10.0), rng.random_range(0.01..10.0)];
            // r² sin 2θ = 2xy
            let rel = (w.eval(&x) - 2.0 * o.eval(&x)).abs() / (2.0 * o.eval(&x));
            assert!(rel < 1e-10, "rel {rel}");
        }
    }

    #[test]
    fn gradients() {
        let o = reduite_for(&ConeSpec::orthant(2)).unwrap();
        assert_eq!(o.grad(&[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
        let h = reduite_for(&ConeSpec::half_space(vec![0.0, 0.0, 1.0]).unwrap()).unwrap();
        assert_eq!(h.grad(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0, 1.0]);
        let w = reduite_for(&ConeSpec::wedge(FRAC_PI_2, 0.0).unwrap()).unwrap();
        let g = w.grad(&[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 2.0, epsilon = 1e-12);
        assert!(matches!(o.grad(&[-1.0, 1.0]), Err(Error::PointOutsideCone(_))));
    }

    #[test]
    fn gradients_match_central_differences() {
        for u in catalog() {
            for x in u.sample_interior(20, 0.05, 11).unwrap() {
                let g = u.grad(&x).unwrap();
                for i in 0..x.len() {
                    let h = 1e-6;
                    let mut a = x.clone();
                    let mut b = x.clone();
                    a[i] += h;
                    b[i] -= h;
                    let fd = (u.eval(&a) - u.eval(&b)) / (2.0 * h);
                    assert_abs_diff_eq!(g[i], fd, epsilon = 1e-6 * (1.0 + g[i].abs()));
                }
            }
        }
    }

    #[test]
    fn harmonic_residuals() {
        let o = reduite_for(&ConeSpec::orthant(2)).unwrap();
        assert!(o.check_harmonic(100, 1e-3).unwrap() < 1e-12);
        let h = reduite_for(&ConeSpec::half_space(vec![0.0, 1.0]).unwrap()).unwrap();
        assert!(h.check_harmonic(100, 1e-3).unwrap() < 1e-12);
        let w = reduite_for(&ConeSpec::wedge(2.0 * PI / 3.0, 0.0).unwrap()).unwrap();
        let r = w.check_harmonic(100, 1e-3).unwrap();
        assert!(r < 1e-5, "wedge residual {r}");
        for u in catalog() {
            let r = u.check_harmonic(50, 1e-3).unwrap();
            assert!(r < 1e-4, "{:?}: {r}", u.cone);
        }
    }

    #[test]
    fn homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for u in catalog() {
            for x in u.sample_interior(1000 / 9 + 1, 0.0, 5).unwrap() {
                let t: f64 = rng.random_range(0.01..100.0);
                let tx: Vec<f64> = x.iter().map(|c| t * c).collect();
                let lhs = u.eval(&tx);
                let rhs = t.powf(u.p) * u.eval(&x);
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * t.powf(u.p) * (1.0 + u.eval(&x).abs()),
                    "{:?}",
                    u.cone
                );
            }
        }
    }

    #[test]
    fn vanishes_on_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for u in catalog() {
            let normals = u.cone.facet_normals();
            for _ in 0..50 {
                // Random interior point projected onto one facet hyperplane.
                let x = &u.sample_interior(1, 0.0, rng.random()).unwrap()[0];
                for n in &normals {
                    let t: f64 = x.iter().zip(n).map(|(a, b)| a * b).sum();
                    let y: Vec<f64> = x.iter().zip(n).map(|(a, b)| a - t * b).collect();
                    if u.cone.contains_closed(&y).unwrap() {
                        assert!(u.eval(&y).abs() < 1e-10, "{:?} at {y:?}", u.cone);
                    }
                }
            }
        }
    }

    #[test]
    fn gradient_growth_has_no_trend() {
        // |∇u(z)| / |z|^{p-1} along fixed directions over |z| ∈ [1, 10³].
        for u in catalog() {
            let dirs = u.sample_interior(10, 0.0, 29).unwrap();
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for d in &dirs {
                let dn = norm(d);
                for k in 0..=12 {
                    let s = 10f64.powf(3.0 * k as f64 / 12.0);
                    let z: Vec<f64> = d.iter().map(|c| s * c / dn).collect();
                    let g = norm(&u.grad(&z).unwrap());
                    let ratio = g / s.powf(u.p - 1.0);
                    assert!(ratio.is_finite());
                    xs.push(s.ln());
                    ys.push(ratio.ln());
                }
            }
            let slope = crate::verify::least_squares(&xs, &ys).0;
            assert!(slope.abs() <= 0.05, "{:?}: slope {slope}", u.cone);
        }
    }

    #[test]
    fn local_lipschitz_constant_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for u in catalog() {
            let mut worst = 0.0f64;
            for z in u.sample_interior(40, 0.0, 37).unwrap() {
                for s in [1.0, 10.0, 100.0] {
                    let zs: Vec<f64> = z.iter().map(|c| c * s).collect();
                    for _ in 0..20 {
                        let a: Vec<f64> = zs.iter().map(|c| c + rng.random_range(-0.5..0.5)).collect();
                        let b: Vec<f64> = zs.iter().map(|c| c + rng.random_range(-0.5..0.5)).collect();
                        if !(u.cone.contains(&a).unwrap() && u.cone.contains(&b).unwrap()) {
                            continue;
                        }
                        let dist = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
                        if dist == 0.0 || dist > 1.0 {
                            continue;
                        }
                        let c = (u.eval(&a) - u.eval(&b)).abs()
                            / ((1.0 + norm(&zs)).powf(u.p - 1.0) * dist);
                        worst = worst.max(c);
                    }
                }
            }
            assert!(worst.is_finite() && worst < 1e3, "{:?}: fitted C = {worst}", u.cone);
        }
    }
}
