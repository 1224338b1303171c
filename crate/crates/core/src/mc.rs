//! Seeded Monte Carlo for the killed walk and its reversal.
//!
//! Sample `i` draws from its own ChaCha8 stream (key from `seed`, stream
//! number `i`). Samples are grouped in fixed chunks whose partial sums are
//! combined pairwise in chunk order, so estimates are bit-identical for any
//! thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::cone::{norm, ConeSpec, ShrunkenConeQuery};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::par;
use crate::walk_model::StepDistribution;

/// Samples per reduction chunk. Part of the reproducibility contract.
pub const SAMPLE_CHUNK: u64 = 1024;

/// Mean with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√samples`.
    pub std_error: f64,
    pub samples: u64,
    pub seed: u64,
    /// Independent RNG streams used (one per sample).
    pub substream_count: u64,
    /// Fraction of paths stopped at the horizon before resolving.
    pub censored_fraction: f64,
}

impl MCEstimate {
    /// Deterministic value with zero error.
    pub fn exact(value: f64, samples: u64, seed: u64) -> Self {
        MCEstimate {
            mean: value,
            std_error: 0.0,
            samples,
            seed,
            substream_count: 0,
            censored_fraction: 0.0,
        }
    }

    /// `|mean − value|` in standard errors (0/0 counts as 0).
    pub fn z_score(&self, value: f64) -> f64 {
        let d = (self.mean - value).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

fn key_for(seed: u64) -> [u8; 32] {
    ChaCha8Rng::seed_from_u64(seed).get_seed()
}

/// RNG for sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key_for(seed));
    rng.set_stream(index);
    rng
}

/// Run `samples` independent draws of a `k`-vector. `draw` fills the
/// vector and returns whether the sample was censored.
pub fn estimate_many<F>(samples: u64, seed: u64, k: usize, draw: F) -> Vec<MCEstimate>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> bool + Sync + Send,
{
    let key = key_for(seed);
    let chunks = samples.div_ceil(SAMPLE_CHUNK) as usize;
    // Per chunk: sums, sums of squares, censored count.
    let parts = par::map_chunks(chunks, 1, |r| {
        let c = r.start as u64;
        let mut acc = vec![0.0; 2 * k + 1];
        let mut out = vec![0.0; k];
        let end = ((c + 1) * SAMPLE_CHUNK).min(samples);
        for i in c * SAMPLE_CHUNK..end {
            let mut rng = ChaCha8Rng::from_seed(key);
            rng.set_stream(i);
            out.iter_mut().for_each(|v| *v = 0.0);
            if draw(&mut rng, &mut out) {
                acc[2 * k] += 1.0;
            }
            for j in 0..k {
                acc[j] += out[j];
                acc[k + j] += out[j] * out[j];
            }
        }
        acc
    });
    let column = |j: usize| par::pairwise_sum(&parts.iter().map(|p| p[j]).collect::<Vec<_>>());
    let n = samples as f64;
    let censored = if samples > 0 { column(2 * k) / n } else { 0.0 };
    (0..k)
        .map(|j| {
            let s = column(j);
            let ss = column(k + j);
            let mean = if samples > 0 { s / n } else { f64::NAN };
            let var = if samples > 1 {
                ((ss - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            MCEstimate {
                mean,
                std_error: (var / n).sqrt(),
                samples,
                seed,
                substream_count: samples,
                censored_fraction: censored,
            }
        })
        .collect()
}

/// Single-valued version of [`estimate_many`].
pub fn estimate<F>(samples: u64, seed: u64, draw: F) -> MCEstimate
where
    F: Fn(&mut ChaCha8Rng) -> (f64, bool) + Sync + Send,
{
    estimate_many(samples, seed, 1, |rng, out| {
        let (v, c) = draw(rng);
        out[0] = v;
        c
    })
    .pop()
    .expect("one component")
}

/// O(1) step draws through an alias table.
#[derive(Clone, Debug)]
pub struct WalkSampler {
    steps: Vec<Vec<i64>>,
    alias: WeightedAliasIndex<f64>,
}

impl WalkSampler {
    pub fn new(model: &StepDistribution) -> Result<Self> {
        let weights: Vec<f64> = model.steps().iter().map(|s| s.p.value).collect();
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::InvalidModel(format!("alias table: {e}")))?;
        Ok(WalkSampler {
            steps: model.steps().iter().map(|s| s.v.clone()).collect(),
            alias,
        })
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R) -> &[i64] {
        &self.steps[self.alias.sample(rng)]
    }

    /// Add one step to `pos` in place.
    #[inline]
    pub fn advance<R: Rng + ?Sized>(&self, rng: &mut R, pos: &mut [i64]) {
        let s = self.step(rng);
        for (p, v) in pos.iter_mut().zip(s) {
            *p += v;
        }
    }
}

fn check_start(cone: &ConeSpec, x: &[i64]) -> Result<()> {
    if x.len() != cone.dim() {
        return Err(Error::DimensionMismatch {
            expected: cone.dim(),
            got: x.len(),
        });
    }
    if !cone.contains_lattice(x) {
        return Err(Error::StartOutsideCone(x.to_vec()));
    }
    Ok(())
}

/// Estimate of `P(τ_x > n)`.
pub fn mc_survival(
    model: &StepDistribution,
    cone: &ConeSpec,
    x: &[i64],
    n: u64,
    samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    check_start(cone, x)?;
    if n == 0 {
        return Ok(MCEstimate::exact(1.0, samples, seed));
    }
    let walk = WalkSampler::new(model)?;
    Ok(estimate(samples, seed, |rng| {
        let mut pos = x.to_vec();
        for _ in 0..n {
            walk.advance(rng, &mut pos);
            if !cone.contains_lattice(&pos) {
                return (0.0, false);
            }
        }
        (1.0, false)
    }))
}

/// Survival together with `P(x + S(n) = y, τ_x > n)` for each `y`, from
/// the same paths. The survival estimate comes first.
pub fn mc_local(
    model: &StepDistribution,
    cone: &ConeSpec,
    x: &[i64],
    ys: &[Vec<i64>],
    n: u64,
    samples: u64,
    seed: u64,
) -> Result<Vec<MCEstimate>> {
    check_start(cone, x)?;
    let walk = WalkSampler::new(model)?;
    Ok(estimate_many(samples, seed, ys.len() + 1, |rng, out| {
        let mut pos = x.to_vec();
        for _ in 0..n {
            walk.advance(rng, &mut pos);
            if !cone.contains_lattice(&pos) {
                return false;
            }
        }
        out[0] = 1.0;
        for (j, y) in ys.iter().enumerate() {
            if *y == pos {
                out[j + 1] = 1.0;
            }
        }
        false
    }))
}

/// Estimate of `E[u(y'_ε(n)/√n); t'_{y,ε}(n) ≤ τ'_y]`.
///
/// `frame` must carry the reversed walk. Paths run until they leave the
/// cone (value 0) or first enter `K_{n,ε}` (value `u(My'/√n)`); paths still
/// undecided after `n` steps are censored and contribute 0.
pub fn mc_boundary_functional(
    frame: &Frame,
    y: &[i64],
    n: u64,
    epsilon: f64,
    samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    check_start(&frame.cone, y)?;
    let u = frame.reduite.as_ref().ok_or(Error::NoClosedForm)?;
    let threshold = ShrunkenConeQuery::new(n, epsilon)?.threshold();
    let scale = (n as f64).sqrt().powf(u.p);
    let value = |pos: &[i64]| u.eval(&frame.to_frame(pos)) / scale;
    let inside = |pos: &[i64]| frame.dist(pos).is_some_and(|d| d >= threshold);
    if inside(y) {
        return Ok(MCEstimate::exact(value(y), samples, seed));
    }
    let walk = WalkSampler::new(&frame.model)?;
    Ok(estimate(samples, seed, |rng| {
        let mut pos = y.to_vec();
        for _ in 0..n {
            walk.advance(rng, &mut pos);
            if !frame.contains(&pos) {
                return (0.0, false);
            }
            if inside(&pos) {
                return (value(&pos), false);
            }
        }
        (0.0, true)
    }))
}

/// Frequency of a rare event with an exact binomial interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailEstimate {
    pub frequency: f64,
    pub hits: u64,
    pub samples: u64,
    /// Clopper–Pearson 95% interval.
    pub lower: f64,
    pub upper: f64,
    pub seed: u64,
    /// `⌈n^{1−ε}⌉`.
    pub horizon: u64,
}

/// Clopper–Pearson interval at level `1 − alpha`.
pub fn clopper_pearson(hits: u64, samples: u64, alpha: f64) -> (f64, f64) {
    if samples == 0 {
        return (0.0, 1.0);
    }
    let k = hits as f64;
    let n = samples as f64;
    let lower = if hits == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0)
            .map(|b| b.inverse_cdf(alpha / 2.0))
            .unwrap_or(0.0)
    };
    let upper = if hits == samples {
        1.0
    } else {
        Beta::new(k + 1.0, n - k)
            .map(|b| b.inverse_cdf(1.0 - alpha / 2.0))
            .unwrap_or(1.0)
    };
    (lower, upper)
}

/// Empirical `P(t_{x,ε}(n) ≥ m, τ_x ≥ m)` with `m = ⌈n^{1−ε}⌉`.
pub fn mc_stopping_time_tail(
    frame: &Frame,
    x: &[i64],
    n: u64,
    epsilon: f64,
    samples: u64,
    seed: u64,
) -> Result<TailEstimate> {
    check_start(&frame.cone, x)?;
    let threshold = ShrunkenConeQuery::new(n, epsilon)?.threshold();
    let m = ((n as f64).powf(1.0 - epsilon) - 1e-9).ceil().max(0.0) as u64;
    let inside = |pos: &[i64]| frame.dist(pos).is_some_and(|d| d >= threshold);
    let walk = WalkSampler::new(&frame.model)?;
    let hit = |rng: &mut ChaCha8Rng| -> bool {
        let mut pos = x.to_vec();
        // Positions 0..m−1 must avoid K_{n,ε}; positions 1..m−1 must stay in K.
        for k in 0..m {
            if k > 0 {
                walk.advance(rng, &mut pos);
                if !frame.contains(&pos) {
                    return false;
                }
            }
            if inside(&pos) {
                return false;
            }
        }
        true
    };
    let est = if m == 0 {
        MCEstimate::exact(1.0, samples, seed)
    } else if inside(x) {
        MCEstimate::exact(0.0, samples, seed)
    } else {
        estimate(samples, seed, |rng| (if hit(rng) { 1.0 } else { 0.0 }, false))
    };
    let hits = (est.mean * samples as f64).round() as u64;
    let (lower, upper) = clopper_pearson(hits, samples, 0.05);
    Ok(TailEstimate {
        frequency: est.mean,
        hits,
        samples,
        lower,
        upper,
        seed,
        horizon: m,
    })
}

/// Empirical and analytic sides of the Fuk–Nagaev inequality.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FukNagaev {
    pub x_thresh: f64,
    pub y_thresh: f64,
    pub n: u64,
    /// `P(|S(n)| > x, max_{k ≤ n} |X(k)| ≤ y)`.
    pub lhs: MCEstimate,
    pub rhs: f64,
    pub holds: bool,
}

/// `2d·e^{x/(√d y)}·(√d n/(xy))^{x/(√d y)}`.
pub fn fuk_nagaev_bound(d: usize, x: f64, y: f64, n: u64) -> f64 {
    let sd = (d as f64).sqrt();
    let a = x / (sd * y);
    if a == 0.0 {
        return 2.0 * d as f64;
    }
    let log = a + a * (sd * n as f64 / (x * y)).ln();
    2.0 * d as f64 * log.exp()
}

/// Both sides of the Fuk–Nagaev inequality. Norms are taken after
/// decorrelation, where the walk has identity covariance.
pub fn mc_fuk_nagaev(
    frame: &Frame,
    x_thresh: f64,
    y_thresh: f64,
    n: u64,
    samples: u64,
    seed: u64,
) -> Result<FukNagaev> {
    if !(x_thresh >= 0.0 && y_thresh > 0.0) {
        return Err(Error::Config("thresholds must satisfy x ≥ 0, y > 0".into()));
    }
    let d = frame.dim();
    let norms: Vec<f64> = frame
        .model
        .steps()
        .iter()
        .map(|s| norm(&frame.to_frame(&s.v)))
        .collect();
    let weights: Vec<f64> = frame.model.steps().iter().map(|s| s.p.value).collect();
    let alias = WeightedAliasIndex::new(weights)
        .map_err(|e| Error::InvalidModel(format!("alias table: {e}")))?;
    let steps: Vec<Vec<i64>> = frame.model.steps().iter().map(|s| s.v.clone()).collect();
    let rhs = fuk_nagaev_bound(d, x_thresh, y_thresh, n);
    let lhs = estimate(samples, seed, |rng| {
        let mut pos = vec![0i64; d];
        for _ in 0..n {
            let j = alias.sample(rng);
            if norms[j] > y_thresh {
                return (0.0, false);
            }
            for (p, v) in pos.iter_mut().zip(&steps[j]) {
                *p += v;
            }
        }
        (if frame.norm_sq(&pos).sqrt() > x_thresh { 1.0 } else { 0.0 }, false)
    });
    Ok(FukNagaev {
        x_thresh,
        y_thresh,
        n,
        holds: lhs.mean <= rhs,
        lhs,
        rhs,
    })
}

/// Estimate of `E[(S⁺)^α; S⁺ ≥ n^{1/2−ε/8}]` where `S⁺` is the largest
/// decorrelated displacement `|S(ℓ)|` over `1 ≤ ℓ ≤ n^{1−ε}` with `τ_x > ℓ`.
pub fn mc_max_displacement_moment(
    frame: &Frame,
    x: &[i64],
    n: u64,
    epsilon: f64,
    alpha: f64,
    samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    check_start(&frame.cone, x)?;
    if !(alpha >= 0.0) {
        return Err(Error::Config("alpha must be nonnegative".into()));
    }
    let nf = n as f64;
    let horizon = (nf.powf(1.0 - epsilon) + 1e-9).floor() as u64;
    let level = nf.powf(0.5 - epsilon / 8.0);
    let walk = WalkSampler::new(&frame.model)?;
    Ok(estimate(samples, seed, |rng| {
        let mut pos = x.to_vec();
        let mut disp = vec![0i64; x.len()];
        let mut best = 0.0f64;
        for _ in 0..horizon {
            let s = walk.step(rng);
            for i in 0..pos.len() {
                pos[i] += s[i];
                disp[i] += s[i];
            }
            if !frame.contains(&pos) {
                break;
            }
            best = best.max(frame.norm_sq(&disp).sqrt());
        }
        let v = if best >= level && best > 0.0 {
            best.powf(alpha)
        } else {
            0.0
        };
        (v, false)
    }))
}

/// Brownian survival `P(τ^bm_x > t)` by Euler steps with a Brownian-bridge
/// correction per facet: between grid points at facet margins `a, b` the
/// path crosses that facet with probability `exp(−2ab/Δt)`. The correction
/// is exact for a half-space and for the orthant (independent coordinates).
pub fn mc_brownian_survival(
    cone: &ConeSpec,
    x: &[f64],
    t: f64,
    steps: u64,
    samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    if !cone.contains(x)? {
        return Err(Error::PointOutsideCone(x.to_vec()));
    }
    let normals = cone.facet_normals();
    let dt = t / steps.max(1) as f64;
    let sd = dt.sqrt();
    let d = x.len();
    Ok(estimate(samples, seed, |rng| {
        let mut pos = x.to_vec();
        let mut margins: Vec<f64> = normals.iter().map(|nrm| crate::cone::dot(nrm, &pos)).collect();
        let mut weight = 1.0;
        for _ in 0..steps.max(1) {
            for p in pos.iter_mut().take(d) {
                let z: f64 = StandardNormal.sample(rng);
                *p += sd * z;
            }
            for (m, nrm) in margins.iter_mut().zip(&normals) {
                let next = crate::cone::dot(nrm, &pos);
                if next <= 0.0 {
                    return (0.0, false);
                }
                weight *= 1.0 - (-2.0 * *m * next / dt).exp();
                *m = next;
            }
        }
        (weight, false)
    }))
}
