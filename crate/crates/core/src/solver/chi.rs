//! Density of `‖μ + σW‖` for standard normal `W ∈ ℝⁿ`, and Gauss–Legendre
//! rules used to integrate it.

use statrs::function::gamma::ln_gamma;
use std::f64::consts::{LN_2, PI};

/// Above this `z = rρ/σ²` the Bessel factor switches from its power series
/// to the large-argument expansion.
const SERIES_LIMIT: f64 = 30.0;

/// Density at `r ≥ 0` of the norm of an `n`-dimensional Gaussian with mean
/// of length `rho` and covariance `σ² I`.
pub fn noncentral_chi_pdf(r: f64, dim: usize, rho: f64, sigma: f64) -> f64 {
    if r < 0.0 || dim == 0 {
        return 0.0;
    }
    if r == 0.0 {
        // only the n = 1 density is nonzero at the origin
        return if dim == 1 { 2.0 * normal_pdf(rho, sigma) } else { 0.0 };
    }
    ln_noncentral_chi_pdf(r, dim, rho, sigma).exp()
}

fn normal_pdf(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
}

fn ln_noncentral_chi_pdf(r: f64, dim: usize, rho: f64, sigma: f64) -> f64 {
    let n = dim as f64;
    let nu = n / 2.0 - 1.0;
    let s2 = sigma * sigma;
    let z = r * rho / s2;
    if z < SERIES_LIMIT {
        // r^{n-1} e^{-(r²+ρ²)/2σ²} Σ_k (z²/4)^k / (k! Γ(k+ν+1)) / (σⁿ 2^ν)
        (n - 1.0) * r.ln() - n * sigma.ln() - nu * LN_2 - (r * r + rho * rho) / (2.0 * s2) + ln_bessel_series(z, nu)
    } else {
        // (r/σ²) (r/ρ)^ν e^{-(r-ρ)²/2σ²} I_ν(z) e^{-z}
        r.ln() - s2.ln() + nu * (r / rho).ln() - (r - rho).powi(2) / (2.0 * s2) + ln_scaled_bessel_asymptotic(z, nu)
    }
}

/// `ln Σ_k (z²/4)^k / (k! Γ(k+ν+1))`, i.e. `ln(I_ν(z) / (z/2)^ν)`.
fn ln_bessel_series(z: f64, nu: f64) -> f64 {
    let lead = -ln_gamma(nu + 1.0);
    let q = z * z / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + nu));
        sum += term;
        if term < 1e-17 * sum && k > q.sqrt() {
            break;
        }
        k += 1.0;
    }
    lead + sum.ln()
}

/// `ln(I_ν(z) e^{-z})` from `(2πz)^{-1/2} Σ_k (-1)^k a_k(ν) / z^k`.
fn ln_scaled_bessel_asymptotic(z: f64, nu: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0_f64;
    let mut sum = 1.0;
    for k in 1..40 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (8.0 * k as f64 * z);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 {
            break;
        }
    }
    sum.ln() - 0.5 * (2.0 * PI * z).ln()
}

/// Nodes and weights of the `q`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(q: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(q);
    let qf = q as f64;
    for i in 0..q {
        let mut x = (PI * (i as f64 + 0.75) / (qf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(q, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(q, x);
        if d != 0.0 {
            dp = d;
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.reverse();
    out
}

/// `(P_q(x), P_q'(x))`.
fn legendre(q: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if q == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=q {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let qf = q as f64;
    (p1, qf * (x * p1 - p0) / (x * x - 1.0))
}
