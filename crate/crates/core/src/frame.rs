//! A walk together with its cone, seen in decorrelated coordinates.
//!
//! The lattice engine runs on integer points in the original coordinates.
//! Distances, the réduite and Gaussian factors are evaluated after mapping
//! points through `M = Q^{-1/2}`, where the walk has identity covariance.

use crate::cone::{transform_cone, ConeSpec};
use crate::error::Result;
use crate::reduite::{reduite_for, ReduiteFn};
use crate::walk_model::{
    decorrelate, reverse, validate_model_for_cone, LinearTransform, ModelReport, StepDistribution,
};

#[derive(Clone, Debug)]
pub struct Frame {
    pub model: StepDistribution,
    /// Cone in lattice coordinates.
    pub cone: ConeSpec,
    pub transform: LinearTransform,
    /// Image cone in decorrelated coordinates.
    pub frame_cone: ConeSpec,
    /// Réduite of `frame_cone`, when it has a closed form.
    pub reduite: Option<ReduiteFn>,
    pub report: ModelReport,
}

impl Frame {
    pub fn new(model: StepDistribution, cone: ConeSpec) -> Result<Self> {
        let report = validate_model_for_cone(&model, &cone)?;
        let (_, transform) = decorrelate(&model)?;
        let frame_cone = transform_cone(&cone, &transform)?.canonicalize();
        let reduite = reduite_for(&frame_cone).ok();
        Ok(Frame {
            model,
            cone,
            transform,
            frame_cone,
            reduite,
            report,
        })
    }

    /// Same cone, reversed increments. The covariance, and hence the
    /// transform, is unchanged.
    pub fn reversed(&self) -> Frame {
        Frame {
            model: reverse(&self.model),
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn to_frame(&self, x: &[i64]) -> Vec<f64> {
        self.transform.apply_lattice(x)
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        self.cone.contains_lattice(x)
    }

    /// Réduite at a lattice point, in decorrelated coordinates.
    pub fn u(&self, x: &[i64]) -> Option<f64> {
        self.reduite.as_ref().map(|u| u.eval(&self.to_frame(x)))
    }

    /// `dist(Mx, ∂(MK))`, or `None` outside the cone.
    pub fn dist(&self, x: &[i64]) -> Option<f64> {
        self.contains(x)
            .then(|| self.frame_cone.facet_margin(&self.to_frame(x)))
    }

    /// `|Mx|²`, equivalently `⟨x, Q⁻¹x⟩`.
    pub fn norm_sq(&self, x: &[i64]) -> f64 {
        self.to_frame(x).iter().map(|c| c * c).sum()
    }

    pub fn p(&self) -> Option<f64> {
        self.reduite.as_ref().map(|u| u.p)
    }
}
