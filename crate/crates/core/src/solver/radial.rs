//! The Gaussian source `X_{t+1} = λ A X_t + W_t` with orthogonal `A`.
//!
//! Only `R_t = ‖X_t - λ A X̂_{t-1}‖` matters. Silent, the next error norm is
//! noncentral chi with center `λ r`; after a transmission it is central
//! chi. `J_t(·, e)` lives on `r_i = i h`, `i = 0..=M`, as a piecewise-linear
//! function held constant past `r_M`, and each expectation is a fixed
//! linear functional of the grid values computed once by quadrature.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use super::{check_structure, extract_thresholds, gauss_legendre, noncentral_chi_pdf};
use super::{EstimatorRule, Grid, Solution, ValueTable, TIE_TOL};
use crate::model::{GaussianSpec, ProblemSpec, SourceKind};
use crate::{Error, Result};

/// Largest `P(‖X_t - λ^{t-1} ⋯‖ > r_max)` tolerated for a never-transmit path.
pub const TAIL_TOL: f64 = 1e-6;

/// Radial grid settings; unset fields take the defaults
/// `h = 0.01 √(s1+s2)` and `r_max = 8 √(s1 + T s2) max(λ,1)^T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGridCfg {
    pub step: Option<f64>,
    pub r_max: Option<f64>,
    /// Gauss–Legendre points per grid cell.
    pub nodes_per_cell: usize,
    /// Half-width of the integration band around the kernel's center, in
    /// units of the kernel's `σ`.
    pub band_sigmas: f64,
}

impl Default for RadialGridCfg {
    fn default() -> Self {
        Self { step: None, r_max: None, nodes_per_cell: 8, band_sigmas: 10.0 }
    }
}

impl RadialGridCfg {
    pub fn with_step(step: f64) -> Self {
        Self { step: Some(step), ..Self::default() }
    }

    /// `(h, M)` with `M h ≥ r_max`.
    pub fn resolve(&self, spec: &ProblemSpec, g: &GaussianSpec) -> Result<(f64, usize)> {
        let h = self.step.unwrap_or(0.01 * (g.s1 + g.s2).sqrt());
        let t = spec.horizon as f64;
        let r_max = self
            .r_max
            .unwrap_or(8.0 * (g.s1 + t * g.s2).sqrt() * g.lambda.abs().max(1.0).powf(t));
        if !(h > 0.0 && h.is_finite() && r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidSpec(format!("radial grid needs h > 0 and r_max > 0, got h={h}, r_max={r_max}")));
        }
        if self.nodes_per_cell == 0 || self.band_sigmas <= 0.0 {
            return Err(Error::InvalidSpec("radial quadrature needs nodes_per_cell > 0 and band_sigmas > 0".into()));
        }
        Ok((h, (r_max / h).ceil() as usize))
    }
}

/// Variance per coordinate of `X_t` when nothing is ever sent.
pub(crate) fn silent_variance(g: &GaussianSpec, t: usize) -> f64 {
    let l2 = g.lambda * g.lambda;
    l2.powi(t as i32 - 1) * g.s1 + g.s2 * (0..t.saturating_sub(1)).map(|k| l2.powi(k as i32)).sum::<f64>()
}

/// Solves the radial problem and reports `E[J_1(‖X_1‖, E_1)]`.
pub fn solve_gaussian_radial(spec: &ProblemSpec, cfg: &RadialGridCfg) -> Result<Solution> {
    if spec.source.kind != SourceKind::GaussianRadial {
        return Err(Error::KindMismatch(format!("solve_gaussian_radial needs a Gaussian source, got {:?}", spec.source.kind)));
    }
    spec.validate()?;
    let g = spec.source.gaussian.clone().ok_or_else(|| Error::InvalidSpec("missing [source.gaussian]".into()))?;
    let (h, m) = cfg.resolve(spec, &g)?;
    let r_max = m as f64 * h;
    for t in 1..=spec.horizon {
        let var = silent_variance(&g, t);
        let tail = gamma_ur(g.dim as f64 / 2.0, r_max * r_max / (2.0 * var));
        if tail > TAIL_TOL {
            return Err(Error::GridTooSmall { r_max, tail, t });
        }
    }

    let kernel = Kernel { dim: g.dim, h, m, rule: gauss_legendre(cfg.nodes_per_cell), band: cfg.band_sigmas };
    let sigma = g.s2.sqrt();
    let stay_rows: Vec<Row> = (0..=m).into_par_iter().map(|i| kernel.row(g.lambda.abs() * i as f64 * h, sigma)).collect();
    let fresh_row = kernel.row(0.0, sigma);
    let init_row = kernel.row(0.0, g.s1.sqrt());

    let grid = Grid::Radial { step: h, len: m + 1 };
    let rule = EstimatorRule::GaussianPrediction { lambda: g.lambda };
    let mut vt = ValueTable::new(spec.horizon, spec.battery_cap, grid, vec![0; spec.horizon], rule);
    let harvest = spec.harvest_outcomes();

    for t in (1..=spec.horizon).rev() {
        let next = vt.layer(t + 1).to_vec();
        let mixed = |e_post: usize| -> Vec<f64> {
            let mut out = vec![0.0; m + 1];
            for &(n, w) in &harvest {
                for (o, v) in out.iter_mut().zip(&next[spec.energy_after(e_post, n)]) {
                    *o += w * v;
                }
            }
            out
        };
        for e in 0..=spec.battery_cap {
            let stay_next = mixed(e);
            let transmit = (e > 0).then(|| spec.comm_cost + fresh_row.dot(&mixed(e - 1)));
            let (values, decisions) = stay_rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let r = i as f64 * h;
                    let stay = r * r + row.dot(&stay_next);
                    match transmit {
                        Some(tx) if tx <= stay + TIE_TOL * stay.abs().max(1.0) => (tx.min(stay), true),
                        _ => (stay, false),
                    }
                })
                .unzip();
            vt.set(t, e, values, decisions);
        }
    }

    check_structure(&vt, false, 0.0)?;
    let policy = extract_thresholds(&vt)?;
    let expected_cost = spec
        .initial_energy
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(e, w)| w * init_row.dot(vt.values_at(1, e as usize)))
        .sum();
    Ok(Solution { table: vt, policy, expected_cost })
}

/// Weights `w_j = E[φ_j(R)]` for the hat functions `φ_j` of the grid,
/// stored from index `start`.
#[derive(Debug, Clone)]
pub(crate) struct Row {
    start: usize,
    weights: Vec<f64>,
}

impl Row {
    pub(crate) fn dot(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(&values[self.start..]).map(|(w, v)| w * v).sum()
    }

    #[cfg(test)]
    fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

struct Kernel {
    dim: usize,
    h: f64,
    m: usize,
    rule: Vec<(f64, f64)>,
    band: f64,
}

impl Kernel {
    /// Hat-function weights of the norm of a Gaussian with mean length
    /// `center` and per-coordinate deviation `sigma`. Cells past `r_M` feed
    /// node `M`, which makes the interpolant flat there.
    fn row(&self, center: f64, sigma: f64) -> Row {
        let lo = (center - self.band * sigma).max(0.0);
        let hi = center + self.band * sigma + sigma * (self.dim as f64).sqrt();
        let first = (lo / self.h).floor() as usize;
        let last = (hi / self.h).ceil() as usize;
        let start = first.min(self.m);
        let mut weights = vec![0.0; self.m.min(last) + 1 - start];
        for cell in first..last {
            let left = cell as f64 * self.h;
            let (a, b) = ((cell).min(self.m) - start, (cell + 1).min(self.m) - start);
            for &(x, w) in &self.rule {
                let frac = 0.5 * (x + 1.0);
                let mass = 0.5 * w * self.h * noncentral_chi_pdf(left + frac * self.h, self.dim, center, sigma);
                weights[a] += mass * (1.0 - frac);
                weights[b] += mass * frac;
            }
        }
        Row { start, weights }
    }
}
