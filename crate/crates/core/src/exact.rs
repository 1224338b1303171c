//! Exact layer-by-layer propagation of the killed walk.
//!
//! Layer `n` holds `P(x + S(n) = y, τ_x > n)` for every lattice point `y`.
//! Layers live on a dense box over the reachable region intersected with a
//! truncation window; each advance pulls mass from the previous layer in a
//! fixed step order, so the result does not depend on how targets are split
//! across threads.

use std::fmt::Debug;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::cone::ConeSpec;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::par;
use crate::walk_model::{rational_to_f64, StepDistribution};

/// Target cells per parallel work unit.
const CHUNK: usize = 4096;

/// Probability mass (or path count) carried by a layer.
pub trait Mass: Clone + Send + Sync + PartialEq + Debug + 'static {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn add_assign(&mut self, other: &Self);
    fn mul(&self, other: &Self) -> Self;
    fn to_f64(&self) -> f64;
    /// Sum partial results listed in chunk order.
    fn sum_ordered(parts: &[Self]) -> Self {
        let mut acc = Self::zero();
        for p in parts {
            acc.add_assign(p);
        }
        acc
    }
}

impl Mass for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    #[inline]
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    #[inline]
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn sum_ordered(parts: &[Self]) -> Self {
        par::pairwise_sum(parts)
    }
}

impl Mass for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }
}

impl Mass for BigUint {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::INFINITY)
    }
}

/// Arithmetic used by the engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Float,
    Rational,
}

/// Which lattice points count as inside the cone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Points on ∂K are killed (the default everywhere).
    #[default]
    Open,
    /// Points on ∂K survive; used for classical path counting in `N^d`.
    Closed,
}

/// Truncation window around the start point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum WindowPolicy {
    /// Everything reachable; no truncation.
    Full,
    /// L∞ ball of the given radius around the start point.
    Radius(i64),
    /// Radius from a maximal Bernstein (Freedman) bound so that the chance
    /// of ever leaving the window before the horizon is below `delta`.
    Auto { delta: f64 },
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy::Auto { delta: 1e-13 }
    }
}

impl WindowPolicy {
    /// L∞ radius for a run of `horizon` steps, `None` when unbounded.
    pub fn radius(&self, model: &StepDistribution, horizon: u64) -> Option<i64> {
        match *self {
            WindowPolicy::Full => None,
            WindowPolicy::Radius(r) => Some(r.max(0)),
            WindowPolicy::Auto { delta } => {
                let m = model.max_step() as f64;
                let q = model.covariance();
                let var = (0..model.dim()).map(|i| q[(i, i)]).fold(0.0, f64::max);
                let n = horizon.max(1) as f64;
                let l = (2.0 * model.dim() as f64 * n / delta).ln();
                let b = 2.0 * l * m / 3.0;
                let r = 0.5 * (b + (b * b + 8.0 * l * n * var).sqrt());
                let full = m * n;
                Some(r.min(full).ceil() as i64)
            }
        }
    }

    /// Parse `auto`, `full` or `radius:R`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(WindowPolicy::default()),
            "full" => Ok(WindowPolicy::Full),
            _ => s
                .strip_prefix("radius:")
                .and_then(|r| r.parse().ok())
                .map(WindowPolicy::Radius)
                .ok_or_else(|| Error::Config(format!("bad window {s:?}; use auto|full|radius:R"))),
        }
    }
}

/// Engine options.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Default)]
pub struct ExactOptions {
    pub mode: Mode,
    pub window: WindowPolicy,
}

impl ExactOptions {
    pub fn rational() -> Self {
        ExactOptions {
            mode: Mode::Rational,
            window: WindowPolicy::Full,
        }
    }

    pub fn float(window: WindowPolicy) -> Self {
        ExactOptions {
            mode: Mode::Float,
            window,
        }
    }
}

/// Axis-aligned integer box with row-major layout.
#[derive(Clone, Debug, PartialEq)]
struct GridBox {
    lo: Vec<i64>,
    shape: Vec<usize>,
    strides: Vec<usize>,
}

impl GridBox {
    fn new(lo: Vec<i64>, hi: &[i64]) -> Self {
        let shape: Vec<usize> = lo
            .iter()
            .zip(hi)
            .map(|(&l, &h)| if h >= l { (h - l + 1) as usize } else { 0 })
            .collect();
        let mut strides = vec![1usize; shape.len()];
        for i in (0..shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * shape[i + 1];
        }
        GridBox { lo, shape, strides }
    }

    fn len(&self) -> usize {
        self.shape.iter().product()
    }

    fn hi(&self) -> Vec<i64> {
        self.lo
            .iter()
            .zip(&self.shape)
            .map(|(&l, &s)| l + s as i64 - 1)
            .collect()
    }

    fn point(&self, mut idx: usize) -> Vec<i64> {
        let mut p = vec![0i64; self.lo.len()];
        for i in 0..p.len() {
            p[i] = self.lo[i] + (idx / self.strides[i]) as i64;
            idx %= self.strides[i];
        }
        p
    }

    /// Flat index of `p − offset`, if inside.
    #[inline]
    fn index_shifted(&self, p: &[i64], offset: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for i in 0..p.len() {
            let c = p[i] - offset[i] - self.lo[i];
            if c < 0 || c as usize >= self.shape[i] {
                return None;
            }
            idx += c as usize * self.strides[i];
        }
        Some(idx)
    }

    fn index(&self, p: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for i in 0..p.len() {
            let c = p[i] - self.lo[i];
            if c < 0 || c as usize >= self.shape[i] {
                return None;
            }
            idx += c as usize * self.strides[i];
        }
        Some(idx)
    }

    /// Advance `p` to the next point in row-major order.
    #[inline]
    fn increment(&self, p: &mut [i64]) {
        for i in (0..p.len()).rev() {
            p[i] += 1;
            if p[i] < self.lo[i] + self.shape[i] as i64 {
                return;
            }
            p[i] = self.lo[i];
        }
    }
}

/// Survival-constrained mass at step `n`, with the conservation ledger.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTable<M: Mass> {
    pub n: u64,
    grid: GridBox,
    data: Vec<M>,
    /// Mass killed on leaving the cone, cumulative.
    pub absorbed: M,
    /// Mass discarded by the truncation window, cumulative. An upper bound
    /// on the error of every probability read from this or later layers.
    pub truncation_loss: M,
    /// Start point.
    pub origin: Vec<i64>,
}

impl<M: Mass> LayerTable<M> {
    /// Point mass at `x`.
    pub fn initial(x: &[i64]) -> Self {
        LayerTable {
            n: 0,
            grid: GridBox::new(x.to_vec(), x),
            data: vec![M::one()],
            absorbed: M::zero(),
            truncation_loss: M::zero(),
            origin: x.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    /// Mass at `y` (zero off the stored region).
    pub fn get(&self, y: &[i64]) -> M {
        if y.len() != self.dim() {
            return M::zero();
        }
        self.grid
            .index(y)
            .map(|i| self.data[i].clone())
            .unwrap_or_else(M::zero)
    }

    /// Nonzero entries in lexicographic order of their points.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<i64>, &M)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.is_zero())
            .map(|(i, m)| (self.grid.point(i), m))
    }

    pub fn support_len(&self) -> usize {
        self.data.iter().filter(|m| !m.is_zero()).count()
    }

    /// Total surviving mass.
    pub fn live(&self) -> M {
        let parts = par::map_chunks(self.data.len(), CHUNK, |r| {
            let mut acc = M::zero();
            for m in &self.data[r] {
                acc.add_assign(m);
            }
            acc
        });
        M::sum_ordered(&parts)
    }

    /// Stored region, as inclusive corners.
    pub fn bounds(&self) -> (Vec<i64>, Vec<i64>) {
        (self.grid.lo.clone(), self.grid.hi())
    }
}

/// Step law converted to the engine's arithmetic.
#[derive(Clone, Debug)]
pub struct Kernel<M: Mass> {
    steps: Vec<(Vec<i64>, M)>,
    dim: usize,
}

impl Kernel<f64> {
    pub fn float(model: &StepDistribution) -> Self {
        Kernel {
            dim: model.dim(),
            steps: model
                .steps()
                .iter()
                .map(|s| (s.v.clone(), s.p.value))
                .collect(),
        }
    }
}

impl Kernel<BigRational> {
    pub fn rational(model: &StepDistribution) -> Result<Self> {
        let steps = model
            .steps()
            .iter()
            .map(|s| {
                let p = s.p.exact.clone().ok_or_else(|| {
                    Error::NotExact("model has floating-point probabilities".into())
                })?;
                Ok((s.v.clone(), p))
            })
            .collect::<Result<_>>()?;
        Ok(Kernel {
            steps,
            dim: model.dim(),
        })
    }
}

impl Kernel<BigUint> {
    /// Unit weight on each listed step, for path counting.
    pub fn counting(stepset: &[Vec<i64>]) -> Self {
        Kernel {
            dim: stepset.first().map_or(0, Vec::len),
            steps: stepset.iter().map(|v| (v.clone(), <BigUint as One>::one())).collect(),
        }
    }
}

impl<M: Mass> Kernel<M> {
    fn step_range(&self) -> (Vec<i64>, Vec<i64>) {
        let mut lo = vec![0i64; self.dim];
        let mut hi = vec![0i64; self.dim];
        for (v, _) in &self.steps {
            for i in 0..self.dim {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        (lo, hi)
    }
}

/// Cone membership for lattice points under a boundary convention.
#[derive(Clone, Copy, Debug)]
pub struct Domain<'a> {
    pub cone: &'a ConeSpec,
    pub boundary: Boundary,
}

impl Domain<'_> {
    #[inline]
    fn contains(&self, p: &[i64]) -> bool {
        match self.boundary {
            Boundary::Open => self.cone.contains_lattice(p),
            Boundary::Closed => self.cone.contains_lattice_closed(p),
        }
    }

    /// Per-coordinate lower bound implied by the cone, when it is an
    /// orthant or an axis half-space.
    fn floor(&self) -> Vec<Option<i64>> {
        let d = self.cone.dim();
        let min = match self.boundary {
            Boundary::Open => 1,
            Boundary::Closed => 0,
        };
        match self.cone {
            ConeSpec::Orthant { .. } => vec![Some(min); d],
            ConeSpec::HalfSpace { normal } => normal
                .iter()
                .map(|&c| (c == 1.0).then_some(min))
                .collect(),
            _ => vec![None; d],
        }
    }
}

/// One Chapman–Kolmogorov step with killing outside the cone and
/// truncation outside the window `[origin − R, origin + R]`.
pub fn advance<M: Mass>(
    table: &LayerTable<M>,
    kernel: &Kernel<M>,
    domain: Domain<'_>,
    radius: Option<i64>,
) -> LayerTable<M> {
    let d = table.dim();
    let (slo, shi) = kernel.step_range();
    let old_hi = table.grid.hi();
    let floor = domain.floor();
    let mut lo = vec![0i64; d];
    let mut hi = vec![0i64; d];
    for i in 0..d {
        lo[i] = table.grid.lo[i] + slo[i];
        hi[i] = old_hi[i] + shi[i];
        if let Some(r) = radius {
            lo[i] = lo[i].max(table.origin[i] - r);
            hi[i] = hi[i].min(table.origin[i] + r);
        }
        if let Some(f) = floor[i] {
            lo[i] = lo[i].max(f);
        }
    }
    let grid = GridBox::new(lo, &hi);
    let in_window = |p: &[i64]| match radius {
        None => true,
        Some(r) => p
            .iter()
            .zip(&table.origin)
            .all(|(&a, &o)| (a - o).abs() <= r),
    };

    // Pull: new(z) = Σ_s old(z − s) p_s for z in K ∩ window.
    let mut data = vec![M::zero(); grid.len()];
    par::for_each_chunk_mut(&mut data, CHUNK, |c, out| {
        let start = c * CHUNK;
        let mut z = grid.point(start);
        for cell in out.iter_mut() {
            if domain.contains(&z) {
                let mut acc = M::zero();
                for (s, p) in &kernel.steps {
                    if let Some(j) = table.grid.index_shifted(&z, s) {
                        let m = &table.data[j];
                        if !m.is_zero() {
                            acc.add_assign(&m.mul(p));
                        }
                    }
                }
                *cell = acc;
            }
            grid.increment(&mut z);
        }
    });

    // Ledger: mass leaving the cone or the window, per source cell.
    let parts = par::map_chunks(table.data.len(), CHUNK, |r| {
        let mut killed = M::zero();
        let mut dropped = M::zero();
        if r.is_empty() {
            return (killed, dropped);
        }
        let mut w = table.grid.point(r.start);
        let mut t = vec![0i64; d];
        for j in r {
            let m = &table.data[j];
            if !m.is_zero() {
                for (s, p) in &kernel.steps {
                    for i in 0..d {
                        t[i] = w[i] + s[i];
                    }
                    if !domain.contains(&t) {
                        killed.add_assign(&m.mul(p));
                    } else if !in_window(&t) {
                        dropped.add_assign(&m.mul(p));
                    }
                }
            }
            table.grid.increment(&mut w);
        }
        (killed, dropped)
    });
    let (k, t): (Vec<M>, Vec<M>) = parts.into_iter().unzip();
    let mut absorbed = table.absorbed.clone();
    absorbed.add_assign(&M::sum_ordered(&k));
    let mut truncation_loss = table.truncation_loss.clone();
    truncation_loss.add_assign(&M::sum_ordered(&t));

    LayerTable {
        n: table.n + 1,
        grid,
        data,
        absorbed,
        truncation_loss,
        origin: table.origin.clone(),
    }
}

/// Advance one layer of probability mass under `model` in `cone` (open
/// convention).
pub fn advance_layer(
    table: &LayerTable<f64>,
    model: &StepDistribution,
    cone: &ConeSpec,
    window: WindowPolicy,
    horizon: u64,
) -> LayerTable<f64> {
    advance(
        table,
        &Kernel::float(model),
        Domain {
            cone,
            boundary: Boundary::Open,
        },
        window.radius(model, horizon),
    )
}

/// Run layers `0..=n_max`, calling `visit` on each.
pub fn propagate<M: Mass>(
    kernel: &Kernel<M>,
    domain: Domain<'_>,
    x: &[i64],
    n_max: u64,
    radius: Option<i64>,
    mut visit: impl FnMut(&LayerTable<M>),
) -> Result<LayerTable<M>> {
    if x.len() != domain.cone.dim() || kernel.dim != x.len() {
        return Err(Error::DimensionMismatch {
            expected: domain.cone.dim(),
            got: x.len(),
        });
    }
    if !domain.contains(x) {
        return Err(Error::StartOutsideCone(x.to_vec()));
    }
    let mut layer = LayerTable::initial(x);
    visit(&layer);
    for _ in 0..n_max {
        layer = advance(&layer, kernel, domain, radius);
        visit(&layer);
    }
    Ok(layer)
}

fn open(cone: &ConeSpec) -> Domain<'_> {
    Domain {
        cone,
        boundary: Boundary::Open,
    }
}

/// `P(x + S(n) = y, τ_x > n)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalProbability {
    pub value: f64,
    /// Exact value in rational mode, as `a/b`.
    pub exact: Option<String>,
    pub truncation_loss: f64,
}

pub fn local_probability(
    model: &StepDistribution,
    cone: &ConeSpec,
    x: &[i64],
    y: &[i64],
    n: u64,
    opts: &ExactOptions,
) -> Result<LocalProbability> {
    match opts.mode {
        Mode::Float => {
            let radius = opts.window.radius(model, n);
            let last = propagate(&Kernel::float(model), open(cone), x, n, radius, |_| {})?;
            Ok(LocalProbability {
                value: last.get(y),
                exact: None,
                truncation_loss: last.truncation_loss,
            })
        }
        Mode::Rational => {
            let v = local_probability_rational(model, cone, x, y, n)?;
            Ok(LocalProbability {
                value: rational_to_f64(&v),
                exact: Some(v.to_string()),
                truncation_loss: 0.0,
            })
        }
    }
}

/// Exact rational `P(x + S(n) = y, τ_x > n)` (no truncation).
pub fn local_probability_rational(
    model: &StepDistribution,
    cone: &ConeSpec,
    x: &[i64],
    y: &[i64],
    n: u64,
) -> Result<BigRational> {
    let last = propagate(&Kernel::rational(model)?, open(cone), x, n, None, |_| {})?;
    Ok(last.get(y))
}

/// All local probabilities at step `n` from `x`, exact.
pub fn layer_rational(
    model: &StepDistribution,
    cone: &ConeSpec,
    x: &[i64],
    n: u64,
) -> Result<LayerTable<BigRational>> {
    propagate(&Kernel::rational(model)?, open(cone), x, n, None, |_| {})
}

/// All local probabilities at step `n` from `x`, in floating point.
pub fn layer_float(
    model: &StepDistribution,
    cone: &ConeSpec,
    x: &[i64],
    n: u64,
    window: WindowPolicy,
) -> Result<LayerTable<f64>> {
    let radius = window.radius(model, n);
    propagate(&Kernel::float(model), open(cone), x, n, radius, |_| {})
}

/// `P(τ_x > n)` for `n = 0..=N`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalSeries {
    pub x: Vec<i64>,
    pub values: Vec<f64>,
    pub truncation_loss: Vec<f64>,
    /// Exact values in rational mode.
    pub exact: Option<Vec<String>>,
}

pub fn survival(
    model: &StepDistribution,
    cone: &ConeSpec,
    x: &[i64],
    n_max: u64,
    opts: &ExactOptions,
) -> Result<SurvivalSeries> {
    let mut values = Vec::with_capacity(n_max as usize + 1);
    let mut loss = Vec::with_capacity(n_max as usize + 1);
    match opts.mode {
        Mode::Float => {
            let radius = opts.window.radius(model, n_max);
            propagate(&Kernel::float(model), open(cone), x, n_max, radius, |l| {
                values.push(l.live());
                loss.push(l.truncation_loss);
            })?;
            Ok(SurvivalSeries {
                x: x.to_vec(),
                values,
                truncation_loss: loss,
                exact: None,
            })
        }
        Mode::Rational => {
            let mut exact = Vec::new();
            propagate(&Kernel::rational(model)?, open(cone), x, n_max, None, |l| {
                let v = l.live();
                values.push(rational_to_f64(&v));
                loss.push(0.0);
                exact.push(v.to_string());
            })?;
            Ok(SurvivalSeries {
                x: x.to_vec(),
                values,
                truncation_loss: loss,
                exact: Some(exact),
            })
        }
    }
}

/// Local probabilities `P(x + S(n) = y, τ_x > n)` for `n = 0..=N`.
pub fn local_series(
    model: &StepDistribution,
    cone: &ConeSpec,
    x: &[i64],
    y: &[i64],
    n_max: u64,
    window: WindowPolicy,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let radius = window.radius(model, n_max);
    let mut values = Vec::with_capacity(n_max as usize + 1);
    let mut loss = Vec::with_capacity(n_max as usize + 1);
    propagate(&Kernel::float(model), open(cone), x, n_max, radius, |l| {
        values.push(l.get(y));
        loss.push(l.truncation_loss);
    })?;
    Ok((values, loss))
}

/// Green function partial sum `Σ_{n ≤ N} P(x + S(n) = y, τ_x > n)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GreenPartial {
    pub value: f64,
    /// Partial sums for `N' = 0..=N`.
    pub partial_sums: Vec<f64>,
    /// Estimated remainder `Σ_{n > N}` from `c·n^{−γ}` decay with
    /// `γ = p + d/2`, anchored at the last nonzero term; `None` when `γ ≤ 1`
    /// or no anchor exists.
    pub tail_estimate: Option<f64>,
    pub truncation_loss: f64,
}

/// `decay_exponent` is `p + d/2` when the cone's exponent is known.
pub fn green_partial(
    model: &StepDistribution,
    cone: &ConeSpec,
    x: &[i64],
    y: &[i64],
    n_max: u64,
    decay_exponent: Option<f64>,
    window: WindowPolicy,
) -> Result<GreenPartial> {
    let (values, loss) = local_series(model, cone, x, y, n_max, window)?;
    let mut partial = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for v in &values {
        acc += v;
        partial.push(acc);
    }
    let tail_estimate = decay_exponent.filter(|&g| g > 1.0).and_then(|g| {
        let (n, v) = values
            .iter()
            .enumerate()
            .rev()
            .find(|(n, v)| *n > 0 && **v > 0.0)?;
        // Average over the residue classes the walk visits.
        let gaps = values
            .iter()
            .enumerate()
            .filter(|(k, v)| *k > 0 && **v > 0.0)
            .map(|(k, _)| k)
            .collect::<Vec<_>>();
        let period = gaps
            .windows(2)
            .map(|w| w[1] - w[0])
            .min()
            .unwrap_or(1)
            .max(1) as f64;
        let nf = n as f64;
        Some(v * nf.powf(g) * (nf + 0.5).powf(1.0 - g) / ((g - 1.0) * period))
    });
    Ok(GreenPartial {
        value: acc,
        partial_sums: partial,
        tail_estimate,
        truncation_loss: *loss.last().unwrap_or(&0.0),
    })
}

/// `v_n = E[u(x + S(n)); τ_x > n]` for `n = 0..=N`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HarmonicSeries {
    pub x: Vec<i64>,
    pub values: Vec<f64>,
    pub truncation_loss: Vec<f64>,
    /// `|v_N − v_{N/2}| / v_N`.
    pub cauchy_diagnostic: f64,
}

impl HarmonicSeries {
    pub fn limit(&self) -> f64 {
        *self.values.last().unwrap_or(&f64::NAN)
    }
}

/// Expectation of `u` over each layer, `u` given on lattice points.
pub fn harmonic_v_with(
    model: &StepDistribution,
    cone: &ConeSpec,
    u: impl Fn(&[i64]) -> f64 + Sync,
    x: &[i64],
    n_max: u64,
    window: WindowPolicy,
) -> Result<HarmonicSeries> {
    let radius = window.radius(model, n_max);
    let mut values = Vec::with_capacity(n_max as usize + 1);
    let mut loss = Vec::with_capacity(n_max as usize + 1);
    propagate(&Kernel::float(model), open(cone), x, n_max, radius, |l| {
        let parts = par::map_chunks(l.data.len(), CHUNK, |r| {
            let mut acc = 0.0;
            if r.is_empty() {
                return acc;
            }
            let mut p = l.grid.point(r.start);
            for j in r {
                let m = l.data[j];
                if m != 0.0 {
                    acc += m * u(&p);
                }
                l.grid.increment(&mut p);
            }
            acc
        });
        values.push(par::pairwise_sum(&parts));
        loss.push(l.truncation_loss);
    })?;
    let last = *values.last().expect("layer 0");
    let half = values[values.len() / 2];
    Ok(HarmonicSeries {
        x: x.to_vec(),
        cauchy_diagnostic: if last != 0.0 {
            (last - half).abs() / last.abs()
        } else {
            f64::NAN
        },
        values,
        truncation_loss: loss,
    })
}

/// `E[u(x + S(n)); τ_x > n]` with the réduite evaluated in decorrelated
/// coordinates.
pub fn harmonic_v(frame: &Frame, x: &[i64], n_max: u64, window: WindowPolicy) -> Result<HarmonicSeries> {
    let u = frame.reduite.as_ref().ok_or(Error::NoClosedForm)?;
    let t = &frame.transform;
    harmonic_v_with(
        &frame.model,
        &frame.cone,
        |p| u.eval(&t.apply_lattice(p)),
        x,
        n_max,
        window,
    )
}

/// Number of length-`n` paths with steps from `stepset` going from `x` to
/// `y` inside the cone, under the chosen boundary convention.
pub fn excursion_count(
    stepset: &[Vec<i64>],
    cone: &ConeSpec,
    x: &[i64],
    y: &[i64],
    n: u64,
    boundary: Boundary,
) -> Result<BigUint> {
    let domain = Domain { cone, boundary };
    if !domain.contains(x) {
        return Ok(<BigUint as Zero>::zero());
    }
    let last = propagate(&Kernel::counting(stepset), domain, x, n, None, |_| {})?;
    Ok(last.get(y))
}

/// Exact rational conversion helper for tests and reports.
pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk_model::catalog;

    fn half_line() -> ConeSpec {
        ConeSpec::orthant(1)
    }

    #[test]
    fn half_line_first_layers() {
        let k = Kernel::rational(&catalog::simple_1d()).unwrap();
        let l0 = LayerTable::<BigRational>::initial(&[1]);
        assert_eq!(l0.get(&[1]), rational(1, 1));
        assert_eq!(l0.absorbed, rational(0, 1));
        let l1 = advance(&l0, &k, open(&half_line()), None);
        assert_eq!(l1.get(&[2]), rational(1, 2));
        assert_eq!(l1.support_len(), 1);
        assert_eq!(l1.absorbed, rational(1, 2));
        let l2 = advance(&l1, &k, open(&half_line()), None);
        assert_eq!(l2.get(&[1]), rational(1, 4));
        assert_eq!(l2.get(&[3]), rational(1, 4));
        assert_eq!(l2.live(), rational(1, 2));
    }

    #[test]
    fn quadrant_return_probability() {
        let v = local_probability_rational(
            &catalog::nsew(),
            &ConeSpec::orthant(2),
            &[1, 1],
            &[1, 1],
            2,
        )
        .unwrap();
        assert_eq!(v, rational(1, 8));
        let q = ConeSpec::orthant(2);
        let m = catalog::nsew();
        assert_eq!(
            local_probability_rational(&m, &q, &[1, 1], &[1, 1], 0).unwrap(),
            rational(1, 1)
        );
        assert_eq!(
            local_probability_rational(&m, &q, &[1, 1], &[5, 5], 1).unwrap(),
            rational(0, 1)
        );
        assert!(matches!(
            local_probability_rational(&m, &q, &[0, 1], &[1, 1], 1),
            Err(Error::StartOutsideCone(_))
        ));
    }

    #[test]
    fn half_line_survival() {
        let s = survival(
            &catalog::simple_1d(),
            &half_line(),
            &[1],
            3,
            &ExactOptions::rational(),
        )
        .unwrap();
        assert_eq!(
            s.exact.unwrap(),
            vec!["1".to_string(), "1/2".into(), "1/2".into(), "3/8".into()]
        );
    }

    /// One-step enumeration oracle for the lazy walk from (1,1).
    #[test]
    fn lazy_one_step_survival() {
        let m = catalog::lazy();
        let q = ConeSpec::orthant(2);
        let mut alive = rational(0, 1);
        for s in m.steps() {
            let t = [1 + s.v[0], 1 + s.v[1]];
            if t[0] > 0 && t[1] > 0 {
                alive += s.p.exact.clone().unwrap();
            }
        }
        assert_eq!(alive, rational(3, 5));
        let s = survival(&m, &q, &[1, 1], 1, &ExactOptions::rational()).unwrap();
        assert_eq!(s.exact.unwrap()[1], alive.to_string());
    }

    #[test]
    fn green_partial_examples() {
        let m = catalog::simple_1d();
        let g = green_partial(&m, &half_line(), &[1], &[1], 2, Some(1.5), WindowPolicy::Full)
            .unwrap();
        assert!((g.value - 1.25).abs() < 1e-15);
        let g0 = green_partial(&m, &half_line(), &[1], &[1], 0, None, WindowPolicy::Full).unwrap();
        assert_eq!(g0.value, 1.0);
        // Wrong parity: never reachable.
        let g = green_partial(&m, &half_line(), &[1], &[2], 40, None, WindowPolicy::Full).unwrap();
        assert!(g.value > 0.0);
        let g = green_partial(
            &catalog::diagonal(),
            &ConeSpec::orthant(2),
            &[1, 1],
            &[1, 2],
            40,
            Some(3.0),
            WindowPolicy::Full,
        )
        .unwrap();
        assert_eq!(g.value, 0.0);
    }

    #[test]
    fn harmonic_half_line_is_constant() {
        let h = harmonic_v_with(
            &catalog::simple_1d(),
            &half_line(),
            |p| p[0] as f64,
            &[3],
            50,
            WindowPolicy::Full,
        )
        .unwrap();
        for v in &h.values {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nsew_first_harmonic_step() {
        let h = harmonic_v_with(
            &catalog::nsew(),
            &ConeSpec::orthant(2),
            |p| (p[0] * p[1]) as f64,
            &[1, 1],
            1,
            WindowPolicy::Full,
        )
        .unwrap();
        assert_eq!(h.values, vec![1.0, 1.0]);
    }

    #[test]
    fn closed_quadrant_counts() {
        let steps = vec![vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1]];
        let q = ConeSpec::orthant(2);
        let c = |n| excursion_count(&steps, &q, &[0, 0], &[0, 0], n, Boundary::Closed).unwrap();
        assert_eq!(c(0), BigUint::from(1u32));
        assert_eq!(c(2), BigUint::from(2u32));
        assert_eq!(c(4), BigUint::from(10u32));
        // Closed-form: Catalan(k)·Catalan(k+1) for excursions of length 2k.
        assert_eq!(c(6), BigUint::from(5u32 * 14));
        assert_eq!(c(20), BigUint::from(16796u64 * 58786));
    }

    #[test]
    fn mass_ledger_balances() {
        let m = catalog::lazy();
        let q = ConeSpec::orthant(2);
        let radius = Some(6);
        propagate(&Kernel::float(&m), open(&q), &[2, 3], 60, radius, |l| {
            let total = l.live() + l.absorbed + l.truncation_loss;
            assert!((total - 1.0).abs() < 1e-12, "n = {}: {total}", l.n);
        })
        .unwrap();
        let k = Kernel::rational(&m).unwrap();
        propagate(&k, open(&q), &[1, 1], 8, None, |l| {
            let mut total = l.live();
            total += &l.absorbed;
            assert_eq!(total, rational(1, 1));
            assert_eq!(l.truncation_loss, rational(0, 1));
        })
        .unwrap();
    }

    #[test]
    fn truncation_loss_bounds_the_error() {
        let m = catalog::lazy();
        let q = ConeSpec::orthant(2);
        for r in [4i64, 8, 12] {
            let small = layer_float(&m, &q, &[3, 3], 40, WindowPolicy::Radius(r)).unwrap();
            let big = layer_float(&m, &q, &[3, 3], 40, WindowPolicy::Radius(2 * r)).unwrap();
            for (y, v) in big.iter() {
                assert!(
                    (v - small.get(&y)).abs() <= small.truncation_loss + 1e-15,
                    "r = {r} at {y:?}"
                );
            }
            assert!((big.live() - small.live()).abs() <= small.truncation_loss + 1e-15);
        }
    }

    #[test]
    fn auto_window_keeps_loss_small() {
        let m = catalog::lazy();
        let s = survival(&m, &ConeSpec::orthant(2), &[1, 1], 400, &ExactOptions::default()).unwrap();
        assert!(*s.truncation_loss.last().unwrap() < 1e-12);
        let full = survival(
            &m,
            &ConeSpec::orthant(2),
            &[1, 1],
            400,
            &ExactOptions::float(WindowPolicy::Full),
        )
        .unwrap();
        for (a, b) in s.values.iter().zip(&full.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn window_parsing() {
        assert_eq!(WindowPolicy::parse("full").unwrap(), WindowPolicy::Full);
        assert_eq!(WindowPolicy::parse("radius:7").unwrap(), WindowPolicy::Radius(7));
        assert!(matches!(WindowPolicy::parse("auto").unwrap(), WindowPolicy::Auto { .. }));
        assert!(WindowPolicy::parse("wide").is_err());
    }

    #[test]
    fn float_and_rational_agree() {
        let m = catalog::lazy();
        let q = ConeSpec::orthant(2);
        let f = layer_float(&m, &q, &[1, 2], 12, WindowPolicy::Full).unwrap();
        let r = layer_rational(&m, &q, &[1, 2], 12).unwrap();
        for (y, v) in r.iter() {
            assert!((f.get(&y) - rational_to_f64(v)).abs() < 1e-15);
        }
    }

    #[test]
    fn rational_mode_needs_exact_model() {
        let m = StepDistribution::from_json(
            r#"{"dim": 1, "steps": [{"v": [1], "p": 0.5}, {"v": [-1], "p": 0.5}]}"#,
        )
        .unwrap();
        assert!(matches!(
            survival(&m, &half_line(), &[1], 3, &ExactOptions::rational()),
            Err(Error::NotExact(_))
        ));
    }
}
