//! The estimator's information state and its exact evaluation.
//!
//! The pre-transmission belief `Π_t` is the law of `(X_t, E_t)` given the
//! messages `Y_{1:t-1}`; the post-transmission belief `Θ_t` is the law of
//! `(X_t, E'_t)` with `E'_t = E_t - U_t`, given `Y_{1:t}`. Inside the tree
//! walks below a belief is carried *scaled* by the probability of the
//! history that produced it, which keeps every branch weight exact and
//! makes the expected cost a plain sum over nodes.

use crate::dist::{convolve_weights, Pmf, TOL};
use crate::model::{Distortion, ProblemSpec, SourceKind, SourceSpec};
use crate::solver::{EstimatorRule, ThresholdPolicy};
use crate::{Error, Result};

/// Default cap on belief-tree nodes for [`exact_cost`].
pub const DEFAULT_NODE_BUDGET: usize = 5_000_000;

/// Probability table over (source value, energy level).
#[derive(Debug, Clone, PartialEq)]
pub struct JointBelief {
    grid_lo: i64,
    width: usize,
    cap: usize,
    /// Row-major: `table[(x - grid_lo) * (cap + 1) + e]`.
    table: Vec<f64>,
}

impl JointBelief {
    pub fn zeros(grid_lo: i64, width: usize, cap: usize) -> Self {
        Self { grid_lo, width, cap, table: vec![0.0; width * (cap + 1)] }
    }

    /// Independent product of a source law and an energy law.
    pub fn product(x: &Pmf, e: &Pmf, cap: usize) -> Self {
        let mut b = Self::zeros(x.lo(), x.len(), cap);
        for (xv, wx) in x.iter() {
            for (ev, we) in e.iter() {
                b.add(xv, ev as usize, wx * we);
            }
        }
        b
    }

    /// Mass `w` at the single point `(x, e)`.
    pub fn point(x: i64, e: usize, cap: usize, w: f64) -> Self {
        let mut b = Self::zeros(x, 1, cap);
        b.add(x, e, w);
        b
    }

    pub fn grid_lo(&self) -> i64 {
        self.grid_lo
    }

    pub fn grid_hi(&self) -> i64 {
        self.grid_lo + self.width as i64 - 1
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    fn idx(&self, x: i64, e: usize) -> Option<usize> {
        let i = x - self.grid_lo;
        (i >= 0 && (i as usize) < self.width && e <= self.cap).then(|| i as usize * (self.cap + 1) + e)
    }

    pub fn get(&self, x: i64, e: usize) -> f64 {
        self.idx(x, e).map_or(0.0, |i| self.table[i])
    }

    /// Adds mass at a point inside the grid.
    pub fn add(&mut self, x: i64, e: usize, w: f64) {
        let i = self.idx(x, e).expect("point inside the belief grid");
        self.table[i] += w;
    }

    fn set(&mut self, x: i64, e: usize, w: f64) {
        let i = self.idx(x, e).expect("point inside the belief grid");
        self.table[i] = w;
    }

    pub fn mass(&self) -> f64 {
        self.table.iter().sum()
    }

    /// `(x, e, mass)` over the cells with positive mass, x ascending.
    pub fn support(&self) -> impl Iterator<Item = (i64, usize, f64)> + '_ {
        self.table.iter().enumerate().filter(|(_, w)| **w > 0.0).map(move |(i, &w)| {
            (self.grid_lo + (i / (self.cap + 1)) as i64, i % (self.cap + 1), w)
        })
    }

    /// Mass of each `x` summed over energies, on the belief grid.
    pub fn x_marginal(&self) -> Vec<f64> {
        self.table.chunks(self.cap + 1).map(|row| row.iter().sum()).collect()
    }

    /// The slice `x ↦ θ(x, e)` on the belief grid.
    pub fn energy_slice(&self, e: usize) -> Vec<f64> {
        self.table.chunks(self.cap + 1).map(|row| row[e]).collect()
    }

    pub fn normalized(&self) -> Self {
        let m = self.mass();
        let mut out = self.clone();
        out.table.iter_mut().for_each(|w| *w /= m);
        out
    }

    /// Shrinks the grid to the rows carrying mass.
    pub fn trimmed(&self) -> Self {
        let rows: Vec<bool> = self.table.chunks(self.cap + 1).map(|r| r.iter().any(|w| *w > 0.0)).collect();
        let (Some(first), Some(last)) = (rows.iter().position(|r| *r), rows.iter().rposition(|r| *r)) else {
            return Self::zeros(self.grid_lo, 1, self.cap);
        };
        let s = self.cap + 1;
        Self {
            grid_lo: self.grid_lo + first as i64,
            width: last - first + 1,
            cap: self.cap,
            table: self.table[first * s..(last + 1) * s].to_vec(),
        }
    }
}

/// A map `(x, e) ↦ P(transmit)`. The zero-energy row is pinned to zero.
pub struct Prescription<'a> {
    gamma: Box<dyn Fn(i64, usize) -> f64 + 'a>,
}

impl<'a> Prescription<'a> {
    pub fn new(gamma: impl Fn(i64, usize) -> f64 + 'a) -> Self {
        Self { gamma: Box::new(gamma) }
    }

    /// Transmit iff `e > 0` and `|x - center| ≥ thresholds[e]`.
    pub fn threshold(center: i64, thresholds: Vec<f64>) -> Self {
        Self::new(move |x, e| {
            let n = thresholds.get(e).copied().unwrap_or(f64::INFINITY);
            ((x - center).abs() as f64 >= n) as u8 as f64
        })
    }

    pub fn get(&self, x: i64, e: usize) -> f64 {
        if e == 0 {
            0.0
        } else {
            (self.gamma)(x, e).clamp(0.0, 1.0)
        }
    }
}

/// The message seen by the estimator at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Observation {
    Silent,
    Received { x: i64, e: usize },
}

/// One step of the belief dynamics between decision epochs: the source
/// moves and the battery harvests. The transmission's energy has already
/// been taken out in [`post_update`].
pub fn pre_update(theta: &JointBelief, source: &SourceSpec, harvest: &Pmf) -> JointBelief {
    let cap = theta.cap;
    let noise = &source.noise;
    let (lo, width) = match source.kind {
        SourceKind::Iid => (noise.lo(), noise.len()),
        _ => (theta.grid_lo + noise.lo(), theta.width + noise.len() - 1),
    };
    let mut out = JointBelief::zeros(lo, width, cap);
    for e_post in 0..=cap {
        let row = theta.energy_slice(e_post);
        let moved = match source.kind {
            SourceKind::Iid => {
                let m: f64 = row.iter().sum();
                noise.weights().iter().map(|w| w * m).collect()
            }
            _ => convolve_weights(&row, noise.weights()),
        };
        for (n, h) in harvest.iter() {
            if h == 0.0 {
                continue;
            }
            let e = (e_post + n as usize).min(cap);
            for (i, w) in moved.iter().enumerate() {
                if *w > 0.0 {
                    out.table[i * (cap + 1) + e] += w * h;
                }
            }
        }
    }
    out.trimmed()
}

/// Splits `pi` into the silent part `(1 - γ)·π` and the transmitted cells
/// `(x, e, γ·π)`.
pub(crate) fn split(pi: &JointBelief, gamma: &Prescription) -> (JointBelief, Vec<(i64, usize, f64)>) {
    let mut silent = pi.clone();
    let mut sent = Vec::new();
    for (x, e, w) in pi.support() {
        let g = gamma.get(x, e);
        if g > 0.0 {
            sent.push((x, e, g * w));
            silent.set(x, e, (1.0 - g) * w);
        }
    }
    (silent, sent)
}

/// Conditions the pre-transmission belief on the message.
pub fn post_update(pi: &JointBelief, gamma: &Prescription, y: Observation) -> Result<JointBelief> {
    match y {
        Observation::Received { x, e } => {
            if gamma.get(x, e) <= 0.0 || pi.get(x, e) <= 0.0 {
                return Err(Error::ZeroProbabilityObservation(format!("({x}, {e}) cannot be transmitted")));
            }
            Ok(JointBelief::point(x, e - 1, pi.cap, 1.0))
        }
        Observation::Silent => {
            let (silent, _) = split(pi, gamma);
            if silent.mass() <= 0.0 {
                return Err(Error::ZeroProbabilityObservation("silence has zero probability".into()));
            }
            Ok(silent.normalized())
        }
    }
}

/// Minimizer of `E[ρ(X, a)]` over integers `a` in the hull of the
/// x-support, with its (normalized) value. Ties go to the smallest `a`.
pub fn best_estimate(theta: &JointBelief, d: &Distortion) -> (i64, f64) {
    let marg = theta.x_marginal();
    let mass: f64 = marg.iter().sum();
    let lo = theta.grid_lo;
    let first = marg.iter().position(|w| *w > 0.0).unwrap_or(0);
    let last = marg.iter().rposition(|w| *w > 0.0).unwrap_or(0);
    let expected = |a: i64| -> f64 {
        marg[first..=last]
            .iter()
            .enumerate()
            .map(|(i, w)| w * d.eval(lo + (first + i) as i64, a))
            .sum::<f64>()
            / mass
    };
    let mut best = (lo + first as i64, expected(lo + first as i64));
    for i in first + 1..=last {
        let a = lo + i as i64;
        let v = expected(a);
        if v < best.1 - TOL * best.1.abs().max(1.0) {
            best = (a, v);
        }
    }
    best
}

/// Expected distortion of the estimate `a` under `theta` (normalized).
pub(crate) fn expected_distortion(theta: &JointBelief, d: &Distortion, a: i64) -> f64 {
    let marg = theta.x_marginal();
    let mass: f64 = marg.iter().sum();
    marg.iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(i, w)| w * d.eval(theta.grid_lo + i as i64, a))
        .sum::<f64>()
        / mass
}

/// A deterministic sensor rule with access to its own `(x, e)` and the
/// common message history `Y_{1:t-1}`.
pub trait SensorStrategy {
    fn transmit(&self, t: usize, history: &[Observation], x: i64, e: usize) -> bool;
}

/// An estimate from the message history `Y_{1:t}` and the exact posterior.
pub trait Estimator {
    fn estimate(&self, t: usize, history: &[Observation], posterior: &JointBelief, d: &Distortion) -> i64;
}

/// The pointwise best response: [`best_estimate`] on the exact posterior.
#[derive(Debug, Clone, Copy, Default)]
pub struct BestResponse;

impl Estimator for BestResponse {
    fn estimate(&self, _t: usize, _h: &[Observation], posterior: &JointBelief, d: &Distortion) -> i64 {
        best_estimate(posterior, d).0
    }
}

pub(crate) fn last_received(history: &[Observation]) -> Option<i64> {
    history.iter().rev().find_map(|o| match o {
        Observation::Received { x, .. } => Some(*x),
        Observation::Silent => None,
    })
}

impl EstimatorRule {
    /// Point the sensor's error is measured from at time `t`, given `Y_{1:t-1}`.
    pub fn reference(&self, t: usize, history: &[Observation]) -> i64 {
        match self {
            EstimatorRule::ReceivedOrCenter { centers } => centers[t - 1],
            _ => last_received(history).unwrap_or(0),
        }
    }
}

impl Estimator for EstimatorRule {
    fn estimate(&self, t: usize, history: &[Observation], _posterior: &JointBelief, _d: &Distortion) -> i64 {
        match history.last() {
            Some(Observation::Received { x, .. }) => *x,
            _ => self.reference(t, &history[..history.len().saturating_sub(1)]),
        }
    }
}

impl SensorStrategy for ThresholdPolicy {
    fn transmit(&self, t: usize, history: &[Observation], x: i64, e: usize) -> bool {
        e > 0 && self.transmits(t, e, (x - self.estimator.reference(t, history)).abs() as f64)
    }
}

/// Root pre-transmission belief `Π_1`.
pub(crate) fn initial_belief(spec: &ProblemSpec) -> JointBelief {
    JointBelief::product(&spec.source.init, &spec.initial_energy, spec.battery_cap)
}

pub(crate) fn require_discrete(spec: &ProblemSpec) -> Result<()> {
    if spec.source.kind == SourceKind::GaussianRadial {
        return Err(Error::KindMismatch("belief trees need an integer source".into()));
    }
    Ok(())
}

/// Exact expected total cost of a (sensor, estimator) pair, by expanding
/// every message history.
pub fn exact_cost(
    spec: &ProblemSpec,
    sensor: &impl SensorStrategy,
    estimator: &impl Estimator,
    node_budget: usize,
) -> Result<f64> {
    require_discrete(spec)?;
    let mut walk = CostWalk { spec, sensor, estimator, nodes: 0, budget: node_budget };
    walk.expand(1, &initial_belief(spec), &mut Vec::new())
}

struct CostWalk<'a, S, E> {
    spec: &'a ProblemSpec,
    sensor: &'a S,
    estimator: &'a E,
    nodes: usize,
    budget: usize,
}

impl<S: SensorStrategy, E: Estimator> CostWalk<'_, S, E> {
    fn expand(&mut self, t: usize, pi: &JointBelief, history: &mut Vec<Observation>) -> Result<f64> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::BudgetExceeded { count: self.nodes as u128, budget: self.budget as u128 });
        }
        let spec = self.spec;
        let sensor = self.sensor;
        let gamma = Prescription::new(|x, e| sensor.transmit(t, history, x, e) as u8 as f64);
        let (silent, sent) = split(pi, &gamma);
        drop(gamma);
        let mut cost = 0.0;
        for (x, e, w) in sent {
            history.push(Observation::Received { x, e });
            let post = JointBelief::point(x, e - 1, spec.battery_cap, w);
            let est = self.estimator.estimate(t, history, &post, &spec.distortion);
            cost += w * (spec.comm_cost + spec.distortion.eval(x, est));
            if t < spec.horizon {
                cost += self.expand(t + 1, &pre_update(&post, &spec.source, &spec.harvest), history)?;
            }
            history.pop();
        }
        let m = silent.mass();
        if m > 0.0 {
            history.push(Observation::Silent);
            let est = self.estimator.estimate(t, history, &silent, &spec.distortion);
            cost += m * expected_distortion(&silent, &spec.distortion, est);
            if t < spec.horizon {
                cost += self.expand(t + 1, &pre_update(&silent, &spec.source, &spec.harvest), history)?;
            }
            history.pop();
        }
        Ok(cost)
    }
}
