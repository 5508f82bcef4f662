//! Backward induction for the sensor's threshold rule.
//!
//! With the estimator fixed to "last received value" (or its prediction),
//! the sensor faces an MDP on `(D_t, E_t)` where `D_t` is the gap between
//! the source and the estimator's current prediction:
//!
//! ```text
//! J_{T+1} = 0
//! J_t(d, e) = min{ c + E[J_{t+1}(Z, min(e-1+N, B))],
//!                  ρ(d) + E[J_{t+1}(d+Z, min(e+N, B))] }     e > 0
//! J_t(d, 0) = ρ(d) + E[J_{t+1}(d+Z, min(N, B))]
//! ```
//!
//! Ties go to the transmit branch. The decisions are then summarized as one
//! threshold per `(t, e)`, and the summary is checked to reproduce the table.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

mod chi;
mod discrete;
mod radial;

pub use chi::{gauss_legendre, noncentral_chi_pdf};
pub(crate) use discrete::{dp_expected_cost, iid_centers};
pub use discrete::{solve_discrete, solve_iid, solve_integer};
pub use radial::{solve_gaussian_radial, RadialGridCfg};

/// Relative slack under which the transmit branch counts as tied with the
/// silent branch.
pub const TIE_TOL: f64 = 1e-12;

/// How the estimator forms its estimate when nothing arrives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorRule {
    /// Keep the last received value; zero before the first receipt.
    LastReceivedOrZero,
    /// Use the per-step center of the source law (i.i.d. sources). The
    /// vector is indexed by `t - 1`.
    ReceivedOrCenter { centers: Vec<i64> },
    /// Propagate the last estimate through `x ↦ λ A x` (Gaussian source).
    GaussianPrediction { lambda: f64 },
}

/// Per-time, per-energy transmission thresholds plus the companion
/// estimator. The sensor transmits iff `e > 0` and its error distance is at
/// least the threshold; `+∞` means never.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    /// `thresholds[t - 1][e]`.
    pub thresholds: Vec<Vec<f64>>,
    pub estimator: EstimatorRule,
}

impl ThresholdPolicy {
    pub fn horizon(&self) -> usize {
        self.thresholds.len()
    }

    pub fn battery_cap(&self) -> usize {
        self.thresholds.first().map_or(0, |r| r.len() - 1)
    }

    pub fn threshold(&self, t: usize, e: usize) -> f64 {
        self.thresholds[t - 1][e]
    }

    pub fn transmits(&self, t: usize, e: usize, distance: f64) -> bool {
        e > 0 && distance >= self.thresholds[t - 1][e]
    }

    /// A policy with the same threshold at every `(t, e > 0)`.
    pub fn constant(horizon: usize, cap: usize, threshold: f64, estimator: EstimatorRule) -> Self {
        let row: Vec<f64> = (0..=cap).map(|e| if e == 0 { f64::INFINITY } else { threshold }).collect();
        Self { thresholds: vec![row; horizon], estimator }
    }
}

/// Points the value function is tabulated on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Grid {
    /// `lo, lo+1, …, lo+len-1`.
    Integer { lo: i64, len: usize },
    /// `0, h, 2h, …, (len-1) h`.
    Radial { step: f64, len: usize },
}

impl Grid {
    pub fn len(&self) -> usize {
        match *self {
            Grid::Integer { len, .. } | Grid::Radial { len, .. } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, i: usize) -> f64 {
        match *self {
            Grid::Integer { lo, .. } => (lo + i as i64) as f64,
            Grid::Radial { step, .. } => i as f64 * step,
        }
    }
}

/// `J_t(d, e)` and the optimal decisions, for `t = 1..=T+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub horizon: usize,
    pub battery_cap: usize,
    pub grid: Grid,
    /// Point each step's error is measured from (integer grids), by `t - 1`.
    pub centers: Vec<i64>,
    pub estimator: EstimatorRule,
    /// `values[t - 1][e][i]`, with `t = T + 1` all zero.
    values: Vec<Vec<Vec<f64>>>,
    /// `decisions[t - 1][e][i]` for `t ≤ T`.
    decisions: Vec<Vec<Vec<bool>>>,
}

impl ValueTable {
    pub(crate) fn new(horizon: usize, battery_cap: usize, grid: Grid, centers: Vec<i64>, estimator: EstimatorRule) -> Self {
        let layer = vec![vec![0.0; grid.len()]; battery_cap + 1];
        Self {
            horizon,
            battery_cap,
            grid,
            centers,
            estimator,
            values: vec![layer; horizon + 1],
            decisions: vec![vec![vec![false; grid.len()]; battery_cap + 1]; horizon],
        }
    }

    pub fn value(&self, t: usize, e: usize, i: usize) -> f64 {
        self.values[t - 1][e][i]
    }

    pub fn decision(&self, t: usize, e: usize, i: usize) -> bool {
        self.decisions[t - 1][e][i]
    }

    /// `J_t(·, e)` on the grid.
    pub fn values_at(&self, t: usize, e: usize) -> &[f64] {
        &self.values[t - 1][e]
    }

    pub(crate) fn layer(&self, t: usize) -> &[Vec<f64>] {
        &self.values[t - 1]
    }

    pub(crate) fn set(&mut self, t: usize, e: usize, values: Vec<f64>, decisions: Vec<bool>) {
        self.values[t - 1][e] = values;
        self.decisions[t - 1][e] = decisions;
    }

    /// Distance from the step's reference point used by the threshold test.
    pub fn distance(&self, t: usize, i: usize) -> f64 {
        match self.grid {
            Grid::Integer { .. } => (self.grid.coord(i) - self.centers[t - 1] as f64).abs(),
            Grid::Radial { .. } => self.grid.coord(i),
        }
    }

    /// Grid index of the integer coordinate `d`, if on the grid.
    pub fn index_of(&self, d: i64) -> Option<usize> {
        match self.grid {
            Grid::Integer { lo, len } => {
                let i = d - lo;
                (i >= 0 && (i as usize) < len).then_some(i as usize)
            }
            Grid::Radial { .. } => None,
        }
    }

    /// `(t, coord, e, J, U)` rows in `t`, then `coord`, then `e` order.
    /// The `t = T + 1` layer is omitted.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::InvalidSpec(format!("csv: {e}"));
        out.write_record(["t", "d_or_r", "e", "J", "U"]).map_err(io)?;
        for t in 1..=self.horizon {
            for i in 0..self.grid.len() {
                for e in 0..=self.battery_cap {
                    out.write_record([
                        t.to_string(),
                        self.grid.coord(i).to_string(),
                        e.to_string(),
                        self.value(t, e, i).to_string(),
                        (self.decision(t, e, i) as u8).to_string(),
                    ])
                    .map_err(io)?;
                }
            }
        }
        out.flush().map_err(|e| Error::InvalidSpec(format!("csv: {e}")))?;
        Ok(())
    }
}

impl ThresholdPolicy {
    /// `(t, e, threshold)` rows; `inf` marks "never transmit".
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::InvalidSpec(format!("csv: {e}"));
        out.write_record(["t", "e", "threshold"]).map_err(io)?;
        for (t, row) in self.thresholds.iter().enumerate() {
            for (e, n) in row.iter().enumerate() {
                out.write_record([(t + 1).to_string(), e.to_string(), n.to_string()]).map_err(io)?;
            }
        }
        out.flush().map_err(|e| Error::InvalidSpec(format!("csv: {e}")))?;
        Ok(())
    }
}

/// A solved instance.
#[derive(Debug, Clone)]
pub struct Solution {
    pub table: ValueTable,
    pub policy: ThresholdPolicy,
    /// `E[J_1(D_1, E_1)]` under the initial law: the optimal expected cost.
    pub expected_cost: f64,
}

/// Summarizes the decision table by one threshold per `(t, e)`: the
/// smallest distance at which the table transmits. Fails with a witness if
/// the table is not of that form.
pub fn extract_thresholds(vt: &ValueTable) -> Result<ThresholdPolicy> {
    let mut thresholds = Vec::with_capacity(vt.horizon);
    for t in 1..=vt.horizon {
        let mut row = Vec::with_capacity(vt.battery_cap + 1);
        for e in 0..=vt.battery_cap {
            let n = (0..vt.grid.len())
                .filter(|&i| vt.decision(t, e, i))
                .map(|i| vt.distance(t, i))
                .fold(f64::INFINITY, f64::min);
            if e == 0 && n.is_finite() {
                return Err(violation(vt, t, e, n, "transmission at zero energy"));
            }
            if let Some(i) = (0..vt.grid.len()).find(|&i| vt.decision(t, e, i) != (vt.distance(t, i) >= n)) {
                return Err(violation(vt, t, e, vt.grid.coord(i), &format!("decision is not a threshold rule (threshold {n})")));
            }
            row.push(n);
        }
        thresholds.push(row);
    }
    Ok(ThresholdPolicy { thresholds, estimator: vt.estimator.clone() })
}

fn violation(_vt: &ValueTable, t: usize, e: usize, coord: f64, reason: &str) -> Error {
    Error::StructuralViolation { t, e, coord, reason: reason.to_string() }
}

/// Checks monotonicity of `J_t` in the distance and in the energy, and,
/// when `symmetric`, `J_t(d, e) = J_t(-d, e)` up to `sym_tol`.
pub(crate) fn check_structure(vt: &ValueTable, symmetric: bool, sym_tol: f64) -> Result<()> {
    let tol = |v: f64| 1e-10 * v.abs().max(1.0);
    for t in 1..=vt.horizon {
        let mut order: Vec<usize> = (0..vt.grid.len()).collect();
        order.sort_by(|&a, &b| vt.distance(t, a).partial_cmp(&vt.distance(t, b)).unwrap());
        for e in 0..=vt.battery_cap {
            let j = vt.values_at(t, e);
            // every pair of points ordered by distance must be ordered by value
            let mut running_max = f64::NEG_INFINITY;
            let mut k = 0;
            while k < order.len() {
                let dist = vt.distance(t, order[k]);
                let mut group_min = f64::INFINITY;
                let mut group_max = f64::NEG_INFINITY;
                let start = k;
                while k < order.len() && vt.distance(t, order[k]) == dist {
                    group_min = group_min.min(j[order[k]]);
                    group_max = group_max.max(j[order[k]]);
                    k += 1;
                }
                if group_min + tol(group_min) < running_max {
                    return Err(violation(vt, t, e, vt.grid.coord(order[start]), "value decreases with distance"));
                }
                running_max = running_max.max(group_max);
            }
            if symmetric {
                for (i, v) in j.iter().enumerate() {
                    let d = vt.grid.coord(i) as i64;
                    if let Some(m) = vt.index_of(-d) {
                        if (v - j[m]).abs() > sym_tol {
                            return Err(violation(vt, t, e, d as f64, "value not symmetric in d"));
                        }
                    }
                }
            }
            if e > 0 {
                let lower = vt.values_at(t, e - 1);
                if let Some(i) = (0..j.len()).find(|&i| j[i] > lower[i] + tol(lower[i])) {
                    return Err(violation(vt, t, e, vt.grid.coord(i), "value increases with energy"));
                }
            }
        }
    }
    Ok(())
}
