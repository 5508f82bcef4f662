#![allow(dead_code)]

use rand::Rng;
use remest::dist::props::random_asu_even;
use remest::dist::Pmf;
use remest::model::{Distortion, GaussianSpec, ProblemSpec, SourceSpec};
use statrs::function::erf::erfc;

pub fn pmf(lo: i64, w: &[f64]) -> Pmf {
    Pmf::new(lo, w.to_vec()).unwrap()
}

/// `{-1: 1/4, 0: 1/2, 1: 1/4}`.
pub fn tri() -> Pmf {
    pmf(-1, &[0.25, 0.5, 0.25])
}

pub struct Energy {
    pub cap: usize,
    pub initial: Pmf,
    pub harvest: Pmf,
}

pub fn energy(cap: usize, initial: Pmf, harvest: Pmf) -> Energy {
    Energy { cap, initial, harvest }
}

pub fn walk(t: usize, c: f64, en: Energy, init: Pmf, noise: Pmf, d: Distortion) -> ProblemSpec {
    ProblemSpec::new(t, c, en.cap, en.initial, en.harvest, SourceSpec::random_walk(init, noise), d).unwrap()
}

pub fn iid(t: usize, c: f64, en: Energy, p: Pmf, d: Distortion) -> ProblemSpec {
    ProblemSpec::new(t, c, en.cap, en.initial, en.harvest, SourceSpec::iid(p.clone(), p), d).unwrap()
}

pub fn gaussian(t: usize, c: f64, en: Energy, g: GaussianSpec) -> ProblemSpec {
    ProblemSpec::new(t, c, en.cap, en.initial, en.harvest, SourceSpec::gaussian(g), Distortion::Power { k: 2.0 })
        .unwrap()
}

/// Small T = 2 instances with a.s.u. and even initial state and noise,
/// supports of at most three points and B ≤ 2.
pub fn oracle_instances() -> Vec<(&'static str, ProblemSpec)> {
    let third = Pmf::uniform(-1, 3);
    let sq = Distortion::Power { k: 2.0 };
    let abs = Distortion::Power { k: 1.0 };
    vec![
        (
            "uniform-start/indicator/B1",
            walk(2, 0.8, energy(1, Pmf::point(1), Pmf::point(0)), third.clone(), tri(), Distortion::Indicator),
        ),
        (
            "uniform-start/squared/B1/bernoulli-harvest",
            walk(2, 1.5, energy(1, Pmf::point(1), pmf(0, &[0.5, 0.5])), third.clone(), tri(), sq),
        ),
        (
            "peaked-start/abs/B2/full",
            walk(2, 0.5, energy(2, Pmf::point(2), Pmf::point(0)), tri(), Pmf::uniform(-1, 3), abs),
        ),
        (
            "point-start/indicator/B2/mixed-energy",
            walk(
                2,
                0.3,
                energy(2, pmf(1, &[0.5, 0.5]), pmf(0, &[0.7, 0.3])),
                Pmf::point(0),
                pmf(-1, &[0.2, 0.6, 0.2]),
                Distortion::Indicator,
            ),
        ),
        (
            "uniform-start/squared/B2/half-battery",
            walk(2, 0.7, energy(2, Pmf::point(1), pmf(0, &[0.5, 0.5])), third.clone(), pmf(-1, &[0.1, 0.8, 0.1]), sq),
        ),
        (
            "wide-noise/abs/B1/empty-or-full",
            walk(2, 1.2, energy(1, pmf(0, &[0.4, 0.6]), pmf(0, &[0.8, 0.2])), tri(), pmf(-1, &[0.3, 0.4, 0.3]), abs),
        ),
        (
            "uniform-start/indicator/B2/full-with-harvest",
            walk(2, 0.6, energy(2, Pmf::point(2), pmf(0, &[0.5, 0.5])), third, tri(), Distortion::Indicator),
        ),
    ]
}

/// A random instance with a.s.u. and even initial state and noise, hull of
/// at most 41 points, `T ≤ 6` and `B ≤ 4`.
pub fn random_neat_instance<R: Rng>(rng: &mut R) -> ProblemSpec {
    let t = rng.random_range(1..=6);
    let noise_half = rng.random_range(1..=3usize);
    let init_half = rng.random_range(0..=(20 - t * noise_half).min(3));
    let cap = rng.random_range(1..=4usize);
    let noise = random_asu_even(rng, noise_half);
    let init = random_asu_even(rng, init_half);
    let e1 = random_weights(rng, cap + 1);
    let harvest_len = rng.random_range(1..=cap + 1);
    let harvest = random_weights(rng, harvest_len);
    let distortion = match rng.random_range(0..3) {
        0 => Distortion::Indicator,
        1 => Distortion::Power { k: 1.0 },
        _ => Distortion::Power { k: 2.0 },
    };
    let c = rng.random_range(0.0..4.0);
    walk(t, c, energy(cap, pmf(0, &e1), pmf(0, &harvest)), init, noise, distortion)
}

fn random_weights<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() }).collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        let mut w = vec![0.0; n];
        w[n - 1] = 1.0;
        return w;
    }
    w.iter().map(|v| v / total).collect()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Weights `w_j` with `E[f(μ + σW)] = Σ_j w_j f(j h)`, `j = -m..=m`, for
/// `f` piecewise linear on the grid and constant beyond `±m h`. Integrals
/// are taken in closed form with the normal cdf.
fn signed_row(mu: f64, sigma: f64, h: f64, m: usize) -> Vec<f64> {
    let m = m as i64;
    let mut w = vec![0.0; (2 * m + 1) as usize];
    let edge = m as f64 * h;
    w[0] += std_normal_cdf((-edge - mu) / sigma);
    w[(2 * m) as usize] += 1.0 - std_normal_cdf((edge - mu) / sigma);
    let lo_cell = (((mu - 12.0 * sigma) / h).floor() as i64).max(-m);
    let hi_cell = (((mu + 12.0 * sigma) / h).ceil() as i64).min(m);
    for k in lo_cell..hi_cell {
        let a = k as f64 * h;
        let b = a + h;
        let (za, zb) = ((a - mu) / sigma, (b - mu) / sigma);
        let p0 = std_normal_cdf(zb) - std_normal_cdf(za);
        let p1 = sigma * (std_normal_pdf(za) - std_normal_pdf(zb));
        // ∫_a^b (y - a) φ_σ(y - μ) dy
        let slope = (p1 + (mu - a) * p0) / h;
        w[(k + m) as usize] += p0 - slope;
        w[(k + 1 + m) as usize] += slope;
    }
    w
}

fn dot(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Value iteration for the scalar Gaussian source on the signed grid
/// `d = j h`, `j = -m..=m`, with the same interpolation and extrapolation
/// conventions as the radial solver but none of its code. Returns
/// `J[t - 1][e][j + m]` for `t = 1..=T` and the expected initial cost.
pub fn signed_grid_dp(spec: &ProblemSpec, h: f64, m: usize) -> (Vec<Vec<Vec<f64>>>, f64) {
    let g = spec.source.gaussian.as_ref().unwrap();
    assert_eq!(g.dim, 1);
    let n = 2 * m + 1;
    let sigma = g.s2.sqrt();
    let coord = |j: usize| (j as f64 - m as f64) * h;
    let stay: Vec<Vec<f64>> = (0..n).map(|j| signed_row(g.lambda * coord(j), sigma, h, m)).collect();
    let fresh = signed_row(0.0, sigma, h, m);
    let cap = spec.battery_cap;
    let harvest: Vec<(usize, f64)> = spec.harvest.iter().filter(|p| p.1 > 0.0).map(|(k, w)| (k as usize, w)).collect();
    let mut next = vec![vec![0.0; n]; cap + 1];
    let mut out = Vec::new();
    for _t in (1..=spec.horizon).rev() {
        let mixed = |e_post: usize| -> Vec<f64> {
            let mut v = vec![0.0; n];
            for &(k, w) in &harvest {
                for (o, x) in v.iter_mut().zip(&next[(e_post + k).min(cap)]) {
                    *o += w * x;
                }
            }
            v
        };
        let mut layer = Vec::new();
        for e in 0..=cap {
            let future = mixed(e);
            let tx = (e > 0).then(|| spec.comm_cost + dot(&fresh, &mixed(e - 1)));
            let row: Vec<f64> = (0..n)
                .map(|j| {
                    let s = coord(j) * coord(j) + dot(&stay[j], &future);
                    tx.map_or(s, |tx| s.min(tx))
                })
                .collect();
            layer.push(row);
        }
        next = layer.clone();
        out.push(layer);
    }
    out.reverse();
    let init = signed_row(0.0, g.s1.sqrt(), h, m);
    let expected = spec.initial_energy.iter().map(|(e, w)| w * dot(&init, &out[0][e as usize])).sum();
    (out, expected)
}
