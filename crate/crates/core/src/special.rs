//! Special functions: exponentially scaled modified Bessel functions of
//! real order, Gauss–Legendre rules, and error functions.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

pub use statrs::function::erf::{erf, erfc};

/// Argument above which the large-argument expansion is tried first.
pub const BESSEL_ASYMPTOTIC_SWITCH: f64 = 30.0;

/// `e^{-z} I_ν(z)` for `ν ≥ 0`, `z ≥ 0`.
///
/// Uses the ascending series (all terms positive, summed in log space so it
/// neither overflows nor cancels) for `z ≤ 30`, and the Hankel expansion
/// beyond, falling back to the series when the expansion cannot reach full
/// precision (order large relative to the argument).
pub fn bessel_i_scaled(nu: f64, z: f64) -> f64 {
    debug_assert!(nu >= 0.0 && z >= 0.0);
    if z == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    if z > BESSEL_ASYMPTOTIC_SWITCH {
        if let Some(v) = hankel_scaled(nu, z) {
            return v;
        }
    }
    series_scaled(nu, z)
}

/// Unscaled `I_ν(z)`; overflows for large `z`.
pub fn bessel_i(nu: f64, z: f64) -> f64 {
    bessel_i_scaled(nu, z) * z.exp()
}

fn series_scaled(nu: f64, z: f64) -> f64 {
    let half = 0.5 * z;
    let l2 = 2.0 * half.ln();
    let mut log_term = nu * half.ln() - ln_gamma(nu + 1.0);
    let mut sum = 0.0;
    let peak = half.max(1.0) as usize;
    let mut k = 0usize;
    loop {
        let t = (log_term - z).exp();
        sum += t;
        if k > peak && t <= 1e-17 * sum {
            break;
        }
        if k > 100_000 + 4 * peak {
            break;
        }
        k += 1;
        log_term += l2 - (k as f64).ln() - (k as f64 + nu).ln();
    }
    sum
}

fn hankel_scaled(nu: f64, z: f64) -> Option<f64> {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..200 {
        let kf = k as f64;
        let next = -term * (mu - (2.0 * kf - 1.0).powi(2)) / (8.0 * kf * z);
        if next.abs() > term.abs() {
            return None;
        }
        term = next;
        sum += term;
        if term.abs() <= 1e-16 * sum.abs() {
            return Some(sum / (2.0 * PI * z).sqrt());
        }
    }
    None
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (b - a);
    let m = 0.5 * (b + a);
    x.iter().zip(&w).map(|(xi, wi)| (m + c * xi, c * wi)).collect()
}

/// Composite Gauss–Legendre rule: `panels` equal panels of `n` points each.
pub fn composite_gauss_legendre(n: usize, panels: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let h = (b - a) / panels as f64;
    (0..panels)
        .flat_map(|k| gauss_legendre_on(n, a + k as f64 * h, a + (k + 1) as f64 * h))
        .collect()
}
