//! Convex cones: a small catalog plus general polyhedral cones.
//!
//! Cones are open. A point exactly on the boundary is outside, so a walk
//! landing there is killed.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::walk_model::LinearTransform;

/// Relative slack when testing `⟨x, n⟩ > 0`; absorbs rounding in the
/// trigonometric normals of rotated wedges.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum ConeSpec {
    /// `{x : ⟨x, normal⟩ > 0}`.
    #[serde(rename = "halfspace")]
    HalfSpace { normal: Vec<f64> },
    /// Planar wedge `{(r, θ) : base < θ < base + beta}` with `beta ≤ π`.
    #[serde(rename = "wedge2d")]
    Wedge2D { beta: f64, base: f64 },
    /// `{x : x_i > 0 for all i}`.
    Orthant { dim: usize },
    /// `{x : x_1 < x_2 < ... < x_d}`.
    #[serde(rename = "weyl_a")]
    WeylChamberA { dim: usize },
    /// `{x : ⟨x, n_i⟩ > 0 for all i}`. An empty normal list is the whole space.
    Polyhedral { dim: usize, normals: Vec<Vec<f64>> },
}

impl ConeSpec {
    pub fn orthant(dim: usize) -> Self {
        ConeSpec::Orthant { dim }
    }

    pub fn half_space(normal: Vec<f64>) -> Result<Self> {
        let normal = unit(&normal)?;
        Ok(ConeSpec::HalfSpace { normal })
    }

    pub fn wedge(beta: f64, base: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= PI * (1.0 + 1e-15)) {
            return Err(Error::InvalidCone(format!(
                "wedge opening {beta} must lie in (0, π]; larger wedges are not convex"
            )));
        }
        Ok(ConeSpec::Wedge2D {
            beta: beta.min(PI),
            base,
        })
    }

    pub fn weyl_a(dim: usize) -> Self {
        ConeSpec::WeylChamberA { dim }
    }

    /// Polyhedral cone; fails when the normals leave no interior.
    pub fn polyhedral(dim: usize, normals: Vec<Vec<f64>>) -> Result<Self> {
        let normals = normals.iter().map(|n| unit(n)).collect::<Result<Vec<_>>>()?;
        if normals.iter().any(|n| n.len() != dim) {
            return Err(Error::InvalidCone("normal dimension mismatch".into()));
        }
        let cone = ConeSpec::Polyhedral { dim, normals };
        cone.interior_point()?;
        Ok(cone)
    }

    /// The whole space R^d, for unconstrained control runs.
    pub fn full_space(dim: usize) -> Self {
        ConeSpec::Polyhedral {
            dim,
            normals: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cone: ConeSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidCone(e.to_string()))?;
        cone.validated()
    }

    /// Re-run constructor checks on a deserialized value.
    pub fn validated(self) -> Result<Self> {
        match self {
            ConeSpec::HalfSpace { normal } => Self::half_space(normal),
            ConeSpec::Wedge2D { beta, base } => Self::wedge(beta, base),
            ConeSpec::Orthant { dim } | ConeSpec::WeylChamberA { dim } if dim == 0 => {
                Err(Error::InvalidCone("dimension must be positive".into()))
            }
            ConeSpec::WeylChamberA { dim } if dim < 2 => {
                Err(Error::InvalidCone("Weyl chamber needs d ≥ 2".into()))
            }
            ConeSpec::Polyhedral { dim, normals } if normals.is_empty() => {
                Ok(Self::full_space(dim))
            }
            ConeSpec::Polyhedral { dim, normals } => Self::polyhedral(dim, normals),
            other => Ok(other),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConeSpec::HalfSpace { normal } => normal.len(),
            ConeSpec::Wedge2D { .. } => 2,
            ConeSpec::Orthant { dim }
            | ConeSpec::WeylChamberA { dim }
            | ConeSpec::Polyhedral { dim, .. } => *dim,
        }
    }

    /// Unit inward normals of the bounding hyperplanes. The cone is the set
    /// where every inner product is positive.
    pub fn facet_normals(&self) -> Vec<Vec<f64>> {
        match self {
            ConeSpec::HalfSpace { normal } => vec![normal.clone()],
            ConeSpec::Wedge2D { beta, base } => {
                let b = base + beta;
                vec![vec![-base.sin(), base.cos()], vec![b.sin(), -b.cos()]]
            }
            ConeSpec::Orthant { dim } => (0..*dim).map(|i| basis(*dim, i)).collect(),
            ConeSpec::WeylChamberA { dim } => (0..dim - 1)
                .map(|i| {
                    let mut n = vec![0.0; *dim];
                    n[i] = -std::f64::consts::FRAC_1_SQRT_2;
                    n[i + 1] = std::f64::consts::FRAC_1_SQRT_2;
                    n
                })
                .collect(),
            ConeSpec::Polyhedral { normals, .. } => normals.clone(),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Smallest facet inner product `min_i ⟨x, n_i⟩` (+∞ for the whole space).
    pub fn facet_margin(&self, x: &[f64]) -> f64 {
        match self {
            ConeSpec::Orthant { .. } => x.iter().copied().fold(f64::INFINITY, f64::min),
            ConeSpec::WeylChamberA { .. } => x
                .windows(2)
                .map(|w| (w[1] - w[0]) * std::f64::consts::FRAC_1_SQRT_2)
                .fold(f64::INFINITY, f64::min),
            _ => self
                .facet_normals()
                .iter()
                .map(|n| dot(x, n))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Membership in the open cone.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        Ok(self.contains_unchecked(x))
    }

    pub(crate) fn contains_unchecked(&self, x: &[f64]) -> bool {
        let scale = x.iter().map(|c| c.abs()).fold(0.0, f64::max);
        self.facet_margin(x) > MEMBERSHIP_TOL * scale
    }

    /// Membership in the closed cone.
    pub fn contains_closed(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        let scale = x.iter().map(|c| c.abs()).fold(0.0, f64::max);
        Ok(self.facet_margin(x) >= -MEMBERSHIP_TOL * scale)
    }

    /// Lattice-point membership in the open cone.
    pub fn contains_lattice(&self, x: &[i64]) -> bool {
        match self {
            ConeSpec::Orthant { .. } => x.iter().all(|&c| c > 0),
            ConeSpec::WeylChamberA { .. } => x.windows(2).all(|w| w[0] < w[1]),
            _ => {
                let xf: Vec<f64> = x.iter().map(|&c| c as f64).collect();
                self.contains_unchecked(&xf)
            }
        }
    }

    /// Lattice-point membership in the closed cone.
    pub fn contains_lattice_closed(&self, x: &[i64]) -> bool {
        match self {
            ConeSpec::Orthant { .. } => x.iter().all(|&c| c >= 0),
            ConeSpec::WeylChamberA { .. } => x.windows(2).all(|w| w[0] <= w[1]),
            _ => {
                let xf: Vec<f64> = x.iter().map(|&c| c as f64).collect();
                let scale = xf.iter().map(|c| c.abs()).fold(0.0, f64::max);
                self.facet_margin(&xf) >= -MEMBERSHIP_TOL * scale
            }
        }
    }

    /// Euclidean distance from an interior point to ∂K.
    ///
    /// For an intersection of half-spaces this is the smallest facet
    /// distance; for a wedge it equals `r·sin(min angular gap)`.
    pub fn dist_boundary(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        if !self.contains_unchecked(x) {
            return Err(Error::PointOutsideCone(x.to_vec()));
        }
        Ok(self.facet_margin(x))
    }

    /// Membership in `K_{n,ε} = {x ∈ K : dist(x, ∂K) ≥ n^{1/2−ε}}`.
    pub fn in_shrunken(&self, x: &[f64], q: &ShrunkenConeQuery) -> bool {
        x.len() == self.dim() && self.contains_unchecked(x) && self.facet_margin(x) >= q.threshold()
    }

    /// A strictly interior point, found by perceptron iterations on the
    /// normals (finite exactly when the interior is nonempty).
    pub fn interior_point(&self) -> Result<Vec<f64>> {
        let normals = self.facet_normals();
        let d = self.dim();
        if normals.is_empty() {
            return Ok(basis(d, 0));
        }
        let mut x: Vec<f64> = (0..d).map(|i| normals.iter().map(|n| n[i]).sum()).collect();
        for _ in 0..100_000 {
            let norm = dot(&x, &x).sqrt().max(1e-300);
            match normals.iter().find(|n| dot(&x, n) <= 1e-9 * norm) {
                None => return Ok(x.iter().map(|c| c / norm).collect()),
                Some(n) => x.iter_mut().zip(n).for_each(|(a, b)| *a += b),
            }
        }
        Err(Error::InvalidCone("normals admit no interior point".into()))
    }

    /// Unit direction of the cone's central ray: the bisector of a wedge,
    /// `(1,…,1)/√d` for the orthant, the normal of a half-space.
    pub fn center_direction(&self) -> Vec<f64> {
        match self {
            ConeSpec::HalfSpace { normal } => normal.clone(),
            ConeSpec::Wedge2D { beta, base } => {
                let m = base + beta / 2.0;
                vec![m.cos(), m.sin()]
            }
            ConeSpec::Orthant { dim } => vec![1.0 / (*dim as f64).sqrt(); *dim],
            ConeSpec::WeylChamberA { dim } => {
                let c = (*dim as f64 - 1.0) / 2.0;
                let v: Vec<f64> = (0..*dim).map(|i| i as f64 - c).collect();
                let n = dot(&v, &v).sqrt();
                v.iter().map(|a| a / n).collect()
            }
            ConeSpec::Polyhedral { .. } => self.interior_point().unwrap_or_else(|_| basis(self.dim(), 0)),
        }
    }

    /// `c₀`: half the boundary distance of the unit central point; equals
    /// `sin(β/2)/2` for wedges and `1/(2√d)` for orthants.
    pub fn c0(&self) -> f64 {
        let c = self.center_direction();
        let m = self.facet_margin(&c);
        if m.is_finite() {
            m / 2.0
        } else {
            0.5
        }
    }

    /// Fraction of the unit ball inside the cone, `V(0,1)/vol(B(0,1))`,
    /// for catalog variants.
    pub fn unit_ball_fraction(&self) -> Option<f64> {
        match self {
            ConeSpec::HalfSpace { .. } => Some(0.5),
            ConeSpec::Wedge2D { beta, .. } => Some(beta / (2.0 * PI)),
            ConeSpec::Orthant { dim } => Some(0.5f64.powi(*dim as i32)),
            ConeSpec::WeylChamberA { dim } => Some(1.0 / gamma(*dim as f64 + 1.0)),
            ConeSpec::Polyhedral { normals, .. } if normals.is_empty() => Some(1.0),
            ConeSpec::Polyhedral { .. } => None,
        }
    }

    /// Recognise a planar polyhedral cone with at most two facets as a
    /// half-plane or wedge; other cones are returned unchanged.
    pub fn canonicalize(&self) -> ConeSpec {
        let ConeSpec::Polyhedral { dim: 2, normals } = self else {
            return self.clone();
        };
        match normals.as_slice() {
            [n] => ConeSpec::HalfSpace { normal: n.clone() },
            [n1, n2] => {
                if (dot(n1, n2) - 1.0).abs() < 1e-14 {
                    return ConeSpec::HalfSpace { normal: n1.clone() };
                }
                let ray = |n: &[f64], other: &[f64]| {
                    let a = [n[1], -n[0]];
                    if dot(&a, other) > 0.0 {
                        a
                    } else {
                        [-n[1], n[0]]
                    }
                };
                let r1 = ray(n1, n2);
                let r2 = ray(n2, n1);
                let beta = dot(&r1, &r2).clamp(-1.0, 1.0).acos();
                let cross = r1[0] * r2[1] - r1[1] * r2[0];
                let start = if cross > 0.0 { r1 } else { r2 };
                ConeSpec::Wedge2D {
                    beta,
                    base: start[1].atan2(start[0]),
                }
            }
            _ => self.clone(),
        }
    }
}

/// `K_{n,ε}` query parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShrunkenConeQuery {
    pub n: u64,
    pub epsilon: f64,
}

impl ShrunkenConeQuery {
    pub fn new(n: u64, epsilon: f64) -> Result<Self> {
        if n == 0 || !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::Config(format!(
                "shrunken cone needs n ≥ 1 and ε in (0, 1/2); got n = {n}, ε = {epsilon}"
            )));
        }
        Ok(ShrunkenConeQuery { n, epsilon })
    }

    /// `n^{1/2−ε}`.
    pub fn threshold(&self) -> f64 {
        (self.n as f64).powf(0.5 - self.epsilon)
    }
}

/// Image of `cone` under `x ↦ M x`.
///
/// Normals transform by the inverse transpose. Positive scalar maps fix
/// every variant; other maps send orthants and wedges to polyhedral cones
/// and keep half-spaces as half-spaces. A Weyl chamber survives only maps
/// that permute its walls.
pub fn transform_cone(cone: &ConeSpec, t: &LinearTransform) -> Result<ConeSpec> {
    if t.dim() != cone.dim() {
        return Err(Error::DimensionMismatch {
            expected: cone.dim(),
            got: t.dim(),
        });
    }
    if t.as_scalar().is_some_and(|c| c > 0.0) {
        return Ok(cone.clone());
    }
    let inv_t: DMatrix<f64> = t.inverse_matrix().transpose();
    let map = |n: &[f64]| -> Result<Vec<f64>> {
        let v: Vec<f64> = (0..n.len())
            .map(|i| (0..n.len()).map(|j| inv_t[(i, j)] * n[j]).sum())
            .collect();
        unit(&v)
    };
    match cone {
        ConeSpec::HalfSpace { normal } => Ok(ConeSpec::HalfSpace {
            normal: map(normal)?,
        }),
        ConeSpec::WeylChamberA { .. } => {
            let old = cone.facet_normals();
            let new: Vec<Vec<f64>> = old.iter().map(|n| map(n)).collect::<Result<_>>()?;
            let preserved = new
                .iter()
                .all(|n| old.iter().any(|o| o.iter().zip(n).all(|(a, b)| (a - b).abs() < 1e-12)));
            if preserved {
                Ok(cone.clone())
            } else {
                Err(Error::UnsupportedTransform(
                    "map does not preserve the Weyl chamber".into(),
                ))
            }
        }
        _ => {
            let normals = cone
                .facet_normals()
                .iter()
                .map(|n| map(n))
                .collect::<Result<Vec<_>>>()?;
            Ok(ConeSpec::Polyhedral {
                dim: cone.dim(),
                normals,
            })
        }
    }
}

/// Distance from `z` along unit direction `v` until leaving the cone.
fn exit_distance(normals: &[Vec<f64>], z: &[f64], v: &[f64]) -> f64 {
    normals
        .iter()
        .filter_map(|n| {
            let dv = dot(v, n);
            (dv < 0.0).then(|| (dot(z, n) / -dv).max(0.0))
        })
        .fold(f64::INFINITY, f64::min)
}

/// `V(z, r) = vol(B(z, r) ∩ K)` by quadrature over directions from `z`
/// (exact in d = 1; relative error below 1e-7 in d = 2, 3).
pub fn ball_volume(cone: &ConeSpec, z: &[f64], r: f64) -> Result<f64> {
    cone.check_dim(z)?;
    let normals = cone.facet_normals();
    match cone.dim() {
        1 => {
            let l = |v: f64| exit_distance(&normals, z, &[v]).min(r);
            Ok(l(1.0) + l(-1.0))
        }
        2 => {
            let m = 4096;
            let h = 2.0 * PI / m as f64;
            let total: f64 = (0..m)
                .map(|k| {
                    let th = (k as f64 + 0.5) * h;
                    let l = exit_distance(&normals, z, &[th.cos(), th.sin()]).min(r);
                    0.5 * l * l
                })
                .sum();
            Ok(total * h)
        }
        3 => {
            let (nodes, weights) = crate::special::gauss_legendre(96);
            let m = 192;
            let h = 2.0 * PI / m as f64;
            let mut total = 0.0;
            for (c, w) in nodes.iter().zip(&weights) {
                let s = (1.0 - c * c).sqrt();
                for k in 0..m {
                    let ph = (k as f64 + 0.5) * h;
                    let v = [s * ph.cos(), s * ph.sin(), *c];
                    let l = exit_distance(&normals, z, &v).min(r);
                    total += w * h * l * l * l / 3.0;
                }
            }
            Ok(total)
        }
        d => Err(Error::DimensionMismatch {
            expected: 3,
            got: d,
        }),
    }
}

/// Volume of the Euclidean unit ball in R^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0 + 1.0)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn basis(d: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[i] = 1.0;
    e
}

fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidCone(format!("normal {v:?} has no direction")));
    }
    Ok(v.iter().map(|c| c / n).collect())
}
