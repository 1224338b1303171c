//! Finite-support lattice step laws: parsing, validation, decorrelation and
//! reversal.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::cone::ConeSpec;
use crate::error::{Error, Result};

/// Tolerance for float probability sums and float drift.
pub const FLOAT_TOL: f64 = 1e-12;

/// A step probability: always carries a double, and an exact rational when
/// the input was given exactly (`"1/5"`, `"0.2"`).
#[derive(Clone, Debug, PartialEq)]
pub struct Prob {
    pub value: f64,
    pub exact: Option<BigRational>,
}

impl Prob {
    pub fn ratio(num: i64, den: i64) -> Self {
        let r = BigRational::new(BigInt::from(num), BigInt::from(den));
        Self::from_rational(r)
    }

    pub fn from_rational(r: BigRational) -> Self {
        Prob {
            value: rational_to_f64(&r),
            exact: Some(r),
        }
    }

    pub fn float(value: f64) -> Self {
        Prob { value, exact: None }
    }
}

impl FromStr for Prob {
    type Err = Error;

    /// Accepts `a/b` or a plain decimal such as `0.25` or `1e-1`; both are
    /// read exactly.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidModel(format!("cannot parse probability {s:?}"));
        if let Some((a, b)) = s.split_once('/') {
            let a: BigInt = a.trim().parse().map_err(|_| bad())?;
            let b: BigInt = b.trim().parse().map_err(|_| bad())?;
            if b.is_zero() {
                return Err(bad());
            }
            return Ok(Prob::from_rational(BigRational::new(a, b)));
        }
        parse_decimal(s).map(Prob::from_rational).ok_or_else(bad)
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.exact {
            Some(r) => write!(f, "{r}"),
            None => write!(f, "{}", self.value),
        }
    }
}

fn parse_decimal(s: &str) -> Option<BigRational> {
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut r = BigRational::from_integer(digits);
    if scale >= 0 {
        r *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -r } else { r })
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// One lattice increment with its probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub v: Vec<i64>,
    pub p: Prob,
}

/// Finite zero-mean lattice step law.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDistribution {
    dim: usize,
    steps: Vec<Step>,
}

impl StepDistribution {
    /// Checks well-formedness: nonempty support, matching dimensions,
    /// positive probabilities summing to one. Drift and rank are checked by
    /// [`validate_model`].
    pub fn new(dim: usize, steps: Vec<Step>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        if steps.is_empty() {
            return Err(Error::InvalidModel("empty support".into()));
        }
        for s in &steps {
            if s.v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.v.len(),
                });
            }
            if s.p.value.is_nan() || s.p.value <= 0.0 {
                return Err(Error::InvalidModel(format!(
                    "probability of step {:?} must be positive",
                    s.v
                )));
            }
        }
        let model = StepDistribution { dim, steps };
        if let Some(total) = model.exact_total() {
            if !total.is_one() {
                return Err(Error::InvalidModel(format!(
                    "probabilities sum to {total}, not 1"
                )));
            }
        } else {
            let total: f64 = model.steps.iter().map(|s| s.p.value).sum();
            if (total - 1.0).abs() > FLOAT_TOL {
                return Err(Error::InvalidModel(format!(
                    "probabilities sum to {total}, not 1"
                )));
            }
        }
        Ok(model)
    }

    /// Uniform law over `vectors` with exact probabilities `1/len`.
    pub fn uniform(vectors: &[Vec<i64>]) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        let k = vectors.len() as i64;
        Self::new(
            dim,
            vectors
                .iter()
                .map(|v| Step {
                    v: v.clone(),
                    p: Prob::ratio(1, k.max(1)),
                })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// True when every probability is an exact rational.
    pub fn is_exact(&self) -> bool {
        self.steps.iter().all(|s| s.p.exact.is_some())
    }

    fn exact_total(&self) -> Option<BigRational> {
        self.steps
            .iter()
            .map(|s| s.p.exact.clone())
            .sum::<Option<BigRational>>()
    }

    /// Largest L∞ norm over the support.
    pub fn max_step(&self) -> i64 {
        self.steps
            .iter()
            .flat_map(|s| s.v.iter().map(|c| c.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Smallest Euclidean norm over the support.
    pub fn min_step_norm(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| norm_i(&s.v))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim;
        let mean = self.mean_f64();
        let mut q = DMatrix::zeros(d, d);
        for s in &self.steps {
            for i in 0..d {
                for j in 0..d {
                    q[(i, j)] += s.p.value * (s.v[i] as f64 - mean[i]) * (s.v[j] as f64 - mean[j]);
                }
            }
        }
        q
    }

    fn mean_f64(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for s in &self.steps {
            for (mi, &c) in m.iter_mut().zip(&s.v) {
                *mi += s.p.value * c as f64;
            }
        }
        m
    }

    /// Parse the JSON model format
    /// `{"dim": 2, "steps": [{"v": [1,0], "p": "1/5"}, ...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidModel(e.to_string()))?;
        let steps = file
            .steps
            .into_iter()
            .map(|s| {
                let p = match s.p {
                    ProbField::Text(t) => t.parse()?,
                    ProbField::Number(x) => Prob::float(x),
                };
                Ok(Step { v: s.v, p })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.dim, steps)
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            dim: self.dim,
            steps: self
                .steps
                .iter()
                .map(|s| StepEntry {
                    v: s.v.clone(),
                    p: match &s.p.exact {
                        Some(r) => ProbField::Text(r.to_string()),
                        None => ProbField::Number(s.p.value),
                    },
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    dim: usize,
    steps: Vec<StepEntry>,
}

#[derive(Serialize, Deserialize)]
struct StepEntry {
    v: Vec<i64>,
    p: ProbField,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ProbField {
    Text(String),
    Number(f64),
}

pub(crate) fn norm_i(v: &[i64]) -> f64 {
    v.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt()
}

/// Real-valued step law, the image of a lattice law under a linear map.
#[derive(Clone, Debug, PartialEq)]
pub struct RealStepDistribution {
    pub dim: usize,
    pub steps: Vec<(Vec<f64>, f64)>,
}

impl RealStepDistribution {
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim;
        let mut q = DMatrix::zeros(d, d);
        for (v, p) in &self.steps {
            for i in 0..d {
                for j in 0..d {
                    q[(i, j)] += p * v[i] * v[j];
                }
            }
        }
        q
    }
}

/// Invertible linear map together with its inverse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearTransform {
    pub matrix: Vec<Vec<f64>>,
    pub inverse: Vec<Vec<f64>>,
}

impl LinearTransform {
    pub fn identity(d: usize) -> Self {
        let m = DMatrix::<f64>::identity(d, d);
        Self::from_matrix(&m).expect("identity is invertible")
    }

    pub fn scalar(d: usize, c: f64) -> Result<Self> {
        Self::from_matrix(&(DMatrix::<f64>::identity(d, d) * c))
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let inv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::UnsupportedTransform("matrix is singular".into()))?;
        Ok(LinearTransform {
            matrix: to_rows(m),
            inverse: to_rows(&inv),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        from_rows(&self.matrix)
    }

    pub fn inverse_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.inverse)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn apply_lattice(&self, x: &[i64]) -> Vec<f64> {
        self.matrix
            .iter()
            .map(|row| row.iter().zip(x).map(|(a, &b)| a * b as f64).sum())
            .collect()
    }

    pub fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        self.inverse
            .iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// If the map is `c·I`, returns `c`.
    pub fn as_scalar(&self) -> Option<f64> {
        let c = self.matrix[0][0];
        let scalar = self.matrix.iter().enumerate().all(|(i, row)| {
            row.iter()
                .enumerate()
                .all(|(j, &a)| if i == j { a == c } else { a == 0.0 })
        });
        scalar.then_some(c)
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |i, j| rows[i][j])
}

/// Summary of the structural hypotheses checked on a step law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelReport {
    pub mean: Vec<f64>,
    /// `true` when the drift was verified in exact arithmetic.
    pub mean_exact: bool,
    pub covariance: Vec<Vec<f64>>,
    pub period: u64,
    /// Upper-triangular basis (rows) of the lattice spanned by the support.
    pub sublattice_basis: Vec<Vec<i64>>,
    /// Index of the support lattice in Z^d.
    pub sublattice_index: u64,
    /// Index in Z^d of the lattice spanned by differences of steps; this is
    /// the density factor of the local limit at any fixed time.
    pub time_lattice_index: u64,
    pub aperiodic: bool,
    pub moments_finite: bool,
    /// Sufficient condition for reverse reachability: `P(X ∈ −K) > 0`.
    /// Only meaningful when a cone was supplied.
    pub reverse_reachability_hint: bool,
    /// Longest word length used by the return search.
    pub return_search_length: usize,
}

/// Default longest return word: `2·(d+2)`.
pub fn default_return_search_length(dim: usize) -> usize {
    2 * (dim + 2)
}

/// Check drift, rank, covariance and period of a step law.
pub fn validate_model(steps: &StepDistribution) -> Result<ModelReport> {
    validate_model_with(steps, None, default_return_search_length(steps.dim()))
}

/// As [`validate_model`], also evaluating the reverse-reachability hint
/// for `cone`.
pub fn validate_model_for_cone(steps: &StepDistribution, cone: &ConeSpec) -> Result<ModelReport> {
    validate_model_with(steps, Some(cone), default_return_search_length(steps.dim()))
}

pub fn validate_model_with(
    steps: &StepDistribution,
    cone: Option<&ConeSpec>,
    max_word: usize,
) -> Result<ModelReport> {
    let d = steps.dim();
    let mean_exact = steps.is_exact();
    let mean = if mean_exact {
        let mut m = vec![BigRational::zero(); d];
        for s in steps.steps() {
            let p = s.p.exact.as_ref().expect("exact model");
            for (mi, &c) in m.iter_mut().zip(&s.v) {
                *mi += p * BigRational::from_integer(BigInt::from(c));
            }
        }
        if m.iter().any(|x| !x.is_zero()) {
            return Err(Error::NonZeroDrift(m.iter().map(rational_to_f64).collect()));
        }
        vec![0.0; d]
    } else {
        let m = steps.mean_f64();
        if m.iter().any(|x| x.abs() > FLOAT_TOL) {
            return Err(Error::NonZeroDrift(m));
        }
        m
    };

    let vectors: Vec<Vec<i64>> = steps.steps().iter().map(|s| s.v.clone()).collect();
    let basis = lattice_basis(&vectors, d);
    if basis.len() < d {
        return Err(Error::DegenerateSupport {
            rank: basis.len(),
            dim: d,
        });
    }
    let sublattice_index = diag_product(&basis);
    let diffs: Vec<Vec<i64>> = vectors
        .iter()
        .flat_map(|a| {
            vectors
                .iter()
                .map(move |b| a.iter().zip(b).map(|(x, y)| x - y).collect())
        })
        .collect();
    let diff_basis = lattice_basis(&diffs, d);
    let time_lattice_index = if diff_basis.len() == d {
        diag_product(&diff_basis)
    } else {
        0
    };

    let q = steps.covariance();
    if SymmetricEigen::new(q.clone())
        .eigenvalues
        .iter()
        .any(|&l| l <= 0.0)
    {
        return Err(Error::SingularCovariance);
    }

    let period = return_period(&vectors, max_word);
    let hint = cone.is_some_and(|c| {
        steps.steps().iter().any(|s| {
            let neg: Vec<f64> = s.v.iter().map(|&c| -(c as f64)).collect();
            c.contains(&neg).unwrap_or(false)
        })
    });

    Ok(ModelReport {
        mean,
        mean_exact,
        covariance: to_rows(&q),
        period,
        aperiodic: period == 1 && sublattice_index == 1,
        sublattice_basis: basis,
        sublattice_index,
        time_lattice_index,
        moments_finite: true,
        reverse_reachability_hint: hint,
        return_search_length: max_word,
    })
}

/// gcd of the lengths of words over the support that return to the origin,
/// searched up to `max_word` letters. The bound is doubled (up to 64) until
/// at least one return is found.
pub fn return_period(vectors: &[Vec<i64>], max_word: usize) -> u64 {
    let lengths = return_lengths(vectors, max_word.max(1));
    let mut g = lengths.iter().fold(0u64, |g, &l| g.gcd(&(l as u64)));
    let mut bound = max_word.max(1);
    while g == 0 && bound < 64 {
        bound *= 2;
        g = return_lengths(vectors, bound)
            .iter()
            .fold(0u64, |g, &l| g.gcd(&(l as u64)));
    }
    g.max(1)
}

/// All word lengths `1..=max_word` with a return to the origin.
pub fn return_lengths(vectors: &[Vec<i64>], max_word: usize) -> Vec<usize> {
    let d = vectors.first().map_or(0, Vec::len);
    let origin = vec![0i64; d];
    let mut frontier: HashSet<Vec<i64>> = HashSet::from([origin.clone()]);
    let mut out = Vec::new();
    for len in 1..=max_word {
        let mut next = HashSet::with_capacity(frontier.len() * vectors.len());
        for p in &frontier {
            for v in vectors {
                next.insert(p.iter().zip(v).map(|(a, b)| a + b).collect::<Vec<_>>());
            }
        }
        if next.contains(&origin) {
            out.push(len);
        }
        frontier = next;
    }
    out
}

fn diag_product(basis: &[Vec<i64>]) -> u64 {
    basis
        .iter()
        .enumerate()
        .map(|(i, row)| row[i].unsigned_abs())
        .product()
}

/// Hermite-style row basis of the integer span of `vectors` in Z^d.
/// Returns `rank` rows in echelon form with positive pivots.
pub fn lattice_basis(vectors: &[Vec<i64>], d: usize) -> Vec<Vec<i64>> {
    let mut rows: Vec<Vec<i128>> = vectors
        .iter()
        .map(|v| v.iter().map(|&c| c as i128).collect())
        .filter(|v: &Vec<i128>| v.iter().any(|&c| c != 0))
        .collect();
    let mut basis: Vec<Vec<i128>> = Vec::new();
    for col in 0..d {
        // Euclid on column `col` among remaining rows.
        loop {
            let nonzero: Vec<usize> = (0..rows.len()).filter(|&r| rows[r][col] != 0).collect();
            if nonzero.len() <= 1 {
                break;
            }
            let piv = *nonzero
                .iter()
                .min_by_key(|&&r| rows[r][col].abs())
                .expect("nonempty");
            for &r in &nonzero {
                if r != piv {
                    let q = rows[r][col].div_euclid(rows[piv][col]);
                    let pivot_row = rows[piv].clone();
                    for (a, b) in rows[r].iter_mut().zip(&pivot_row) {
                        *a -= q * b;
                    }
                }
            }
        }
        if let Some(r) = (0..rows.len()).find(|&r| rows[r][col] != 0) {
            let mut row = rows.swap_remove(r);
            if row[col] < 0 {
                row.iter_mut().for_each(|c| *c = -*c);
            }
            basis.push(row);
        }
        rows.retain(|v| v.iter().any(|&c| c != 0));
    }
    // Reduce entries above each pivot.
    for i in 0..basis.len() {
        let col = basis[i].iter().position(|&c| c != 0).expect("pivot");
        for k in 0..i {
            let q = basis[k][col].div_euclid(basis[i][col]);
            let row = basis[i].clone();
            for (a, b) in basis[k].iter_mut().zip(&row) {
                *a -= q * b;
            }
        }
    }
    basis
        .into_iter()
        .map(|r| r.into_iter().map(|c| c as i64).collect())
        .collect()
}

/// Symmetric inverse square root `M = Q^{-1/2}` of the covariance, and the
/// image law `M·X` with identity covariance.
pub fn decorrelate(steps: &StepDistribution) -> Result<(RealStepDistribution, LinearTransform)> {
    let q = steps.covariance();
    let eig = SymmetricEigen::new(q);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::SingularCovariance);
    }
    let transform = if eig
        .eigenvalues
        .iter()
        .all(|&l| (l - eig.eigenvalues[0]).abs() <= 1e-15 * l.abs())
        && is_diagonal(&steps.covariance())
    {
        // Scalar covariance: keep the map exactly scalar.
        LinearTransform::scalar(steps.dim(), 1.0 / eig.eigenvalues[0].sqrt())?
    } else {
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let m = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
        LinearTransform::from_matrix(&m)?
    };
    let image = RealStepDistribution {
        dim: steps.dim(),
        steps: steps
            .steps()
            .iter()
            .map(|s| (transform.apply_lattice(&s.v), s.p.value))
            .collect(),
    };
    Ok((image, transform))
}

fn is_diagonal(q: &DMatrix<f64>) -> bool {
    (0..q.nrows()).all(|i| (0..q.ncols()).all(|j| i == j || q[(i, j)] == 0.0))
}

/// Law of `−X`.
pub fn reverse(steps: &StepDistribution) -> StepDistribution {
    StepDistribution {
        dim: steps.dim,
        steps: steps
            .steps
            .iter()
            .map(|s| Step {
                v: s.v.iter().map(|c| -c).collect(),
                p: s.p.clone(),
            })
            .collect(),
    }
}

/// Canonical sorted support, used for multiset comparisons.
pub fn support_multiset(steps: &StepDistribution) -> Vec<(Vec<i64>, String)> {
    let mut out: Vec<(Vec<i64>, String)> = steps
        .steps()
        .iter()
        .map(|s| (s.v.clone(), s.p.to_string()))
        .collect();
    out.sort();
    out
}

/// Builders for the reference models used throughout tests and the CLI.
pub mod catalog {
    use super::*;

    /// ±1 walk on Z.
    pub fn simple_1d() -> StepDistribution {
        StepDistribution::uniform(&[vec![1], vec![-1]]).expect("valid")
    }

    /// Nearest-neighbour walk on Z², steps E, W, N, S.
    pub fn nsew() -> StepDistribution {
        StepDistribution::uniform(&[vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1]])
            .expect("valid")
    }

    /// NSEW plus a holding step, each with probability 1/5.
    pub fn lazy() -> StepDistribution {
        StepDistribution::uniform(&[
            vec![1, 0],
            vec![-1, 0],
            vec![0, 1],
            vec![0, -1],
            vec![0, 0],
        ])
        .expect("valid")
    }

    /// Steps (±1, ±1).
    pub fn diagonal() -> StepDistribution {
        StepDistribution::uniform(&[vec![1, 1], vec![1, -1], vec![-1, 1], vec![-1, -1]])
            .expect("valid")
    }
}
