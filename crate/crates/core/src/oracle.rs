//! Ground truth for small integer instances.
//!
//! * [`enumerate_all`] lists every deterministic sensor strategy that can be
//!   told apart on the instance, pairs each with its best-response
//!   estimator and keeps the cheapest. Strategies see the full message
//!   history unless `collapse_histories` is set.
//! * [`threshold_family_dp`] runs backward induction on the estimator's
//!   belief, minimizing over threshold prescriptions only.
//! * [`estimator_structure_check`] walks the histories reachable under a
//!   threshold policy and checks that "last received value" is a best
//!   estimate at each of them.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::belief::{
    best_estimate, exact_cost, expected_distortion, initial_belief, last_received, pre_update, require_discrete,
    split, BestResponse, JointBelief, Observation, Prescription, SensorStrategy, DEFAULT_NODE_BUDGET,
};
use crate::dist::is_asu_about;
use crate::model::{ProblemSpec, SourceKind};
use crate::solver::{dp_expected_cost, iid_centers, ThresholdPolicy};
use crate::{Error, Result};

/// Strategy count allowed by default.
pub const DEFAULT_STRATEGY_BUDGET: u128 = 1_000_000;

/// Absolute slack when comparing costs of different strategies.
pub const COST_TOL: f64 = 1e-9;

/// Outcome of an exhaustive search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub best_cost: f64,
    /// Smallest id among the optimal strategies.
    pub best_strategy_id: u128,
    /// The DP's expected cost for the same instance. Off the a.s.u. setting
    /// this is the best cost with the last-received estimator.
    pub solver_cost: f64,
    /// `solver_cost - best_cost`.
    pub gap: f64,
    pub strategy_count: u128,
    /// Whether some optimal strategy transmits, at every history and
    /// energy, exactly on the points farthest from the reference estimate.
    pub threshold_witness: bool,
}

impl OracleReport {
    /// Header plus one row.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.serialize(self).map_err(csv_err)?;
        out.flush().map_err(|e| Error::InvalidSpec(format!("csv: {e}")))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidSpec(format!("csv: {e}"))
}

/// What a strategy may condition on besides `(t, x, e)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HistoryKey {
    Full(Vec<Observation>),
    /// Last received value and the step it was received at.
    LastReceived(Option<(i64, usize)>),
}

impl HistoryKey {
    fn of(history: &[Observation], collapsed: bool) -> Self {
        if collapsed {
            HistoryKey::LastReceived(last_received_at(history))
        } else {
            HistoryKey::Full(history.to_vec())
        }
    }
}

fn last_received_at(history: &[Observation]) -> Option<(i64, usize)> {
    history.iter().enumerate().rev().find_map(|(i, o)| match o {
        Observation::Received { x, .. } => Some((*x, i + 1)),
        Observation::Silent => None,
    })
}

/// A sensor strategy given as an explicit table. Points missing from the
/// table stay silent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableStrategy {
    collapsed: bool,
    table: HashMap<(usize, HistoryKey, i64, usize), bool>,
}

impl TableStrategy {
    pub fn decisions(&self) -> impl Iterator<Item = (&(usize, HistoryKey, i64, usize), &bool)> {
        self.table.iter()
    }
}

impl SensorStrategy for TableStrategy {
    fn transmit(&self, t: usize, history: &[Observation], x: i64, e: usize) -> bool {
        e > 0 && self.table.get(&(t, HistoryKey::of(history, self.collapsed), x, e)).copied().unwrap_or(false)
    }
}

/// Every distinguishable strategy of an instance with its exact cost.
pub struct Enumeration {
    costs: Vec<f64>,
    threshold_form: Vec<bool>,
    layout: Layout,
}

enum Layout {
    Tree(Node),
    Flat(Vec<(usize, HistoryKey, i64, usize)>),
}

impl Enumeration {
    pub fn count(&self) -> u128 {
        self.costs.len() as u128
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn is_threshold_form(&self, id: u128) -> bool {
        self.threshold_form[id as usize]
    }

    /// `(id, cost)` of the cheapest strategy, smallest id on ties.
    pub fn best(&self) -> (u128, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, &c) in self.costs.iter().enumerate() {
            if c < best.1 {
                best = (i as u128, c);
            }
        }
        best
    }

    /// Decision table of strategy `id`.
    pub fn strategy(&self, id: u128) -> TableStrategy {
        match &self.layout {
            Layout::Tree(root) => {
                let mut table = HashMap::new();
                root.fill(id, &mut table);
                TableStrategy { collapsed: false, table }
            }
            Layout::Flat(vars) => TableStrategy { collapsed: true, table: flat_table(vars, id) },
        }
    }

    /// `(strategy_id, cost, threshold_form)` rows.
    pub fn write_costs_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["strategy_id", "cost", "threshold_form"]).map_err(csv_err)?;
        for (i, (c, f)) in self.costs.iter().zip(&self.threshold_form).enumerate() {
            out.write_record([i.to_string(), c.to_string(), f.to_string()]).map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::InvalidSpec(format!("csv: {e}")))
    }
}

/// Enumerates the sensor strategies of `spec`. Fails before evaluating
/// anything once more than `budget` strategies are found.
pub fn enumerate(spec: &ProblemSpec, budget: u128, collapse_histories: bool) -> Result<Enumeration> {
    require_discrete(spec)?;
    let centers = reference_centers(spec);
    if collapse_histories {
        enumerate_flat(spec, budget, &centers)
    } else {
        let builder = TreeBuilder { spec, centers: &centers, budget };
        let root = builder.build(1, &initial_belief(spec), &mut Vec::new())?;
        let (costs, threshold_form) = root.costs().into_iter().unzip();
        Ok(Enumeration { costs, threshold_form, layout: Layout::Tree(root) })
    }
}

/// Exhaustive search against the threshold DP.
pub fn enumerate_all(spec: &ProblemSpec, budget: u128, collapse_histories: bool) -> Result<OracleReport> {
    let all = enumerate(spec, budget, collapse_histories)?;
    let (best_strategy_id, best_cost) = all.best();
    let solver_cost = dp_expected_cost(spec)?;
    let threshold_witness = all
        .costs
        .iter()
        .zip(&all.threshold_form)
        .any(|(c, f)| *f && *c <= best_cost + COST_TOL);
    Ok(OracleReport {
        best_cost,
        best_strategy_id,
        solver_cost,
        gap: solver_cost - best_cost,
        strategy_count: all.count(),
        threshold_witness,
    })
}

/// `None` unless the source is i.i.d., in which case the per-step centers.
fn reference_centers(spec: &ProblemSpec) -> Option<Vec<i64>> {
    (spec.source.kind == SourceKind::Iid).then(|| iid_centers(spec))
}

fn reference(centers: &Option<Vec<i64>>, t: usize, last: Option<i64>) -> i64 {
    match centers {
        Some(c) => c[t - 1],
        None => last.unwrap_or(0),
    }
}

/// True iff, per energy level, every transmitting point is farther from
/// `reference` than every silent one.
fn is_threshold_form(points: &[(i64, usize)], sends: impl Fn(usize) -> bool, reference: i64) -> bool {
    let mut far_silent: BTreeMap<usize, i64> = BTreeMap::new();
    let mut near_sent: BTreeMap<usize, i64> = BTreeMap::new();
    for (i, &(x, e)) in points.iter().enumerate() {
        let d = (x - reference).abs();
        let slot = if sends(i) { near_sent.entry(e).or_insert(i64::MAX) } else { far_silent.entry(e).or_insert(-1) };
        *slot = if sends(i) { (*slot).min(d) } else { (*slot).max(d) };
    }
    far_silent.iter().all(|(e, s)| near_sent.get(e).is_none_or(|n| s < n))
}

fn over_budget(count: u128, budget: u128) -> Error {
    Error::BudgetExceeded { count, budget }
}

/// One history node: a decision for every point of positive mass and
/// positive energy, and the subtree each decision set leads to.
struct Node {
    t: usize,
    history: Vec<Observation>,
    points: Vec<(i64, usize)>,
    choices: Vec<Choice>,
}

struct Choice {
    sends: Vec<bool>,
    stage: f64,
    threshold_form: bool,
    children: Vec<Node>,
    count: u128,
}

impl Node {
    fn count(&self) -> u128 {
        self.choices.iter().map(|c| c.count).sum()
    }

    /// Costs of all strategies below this node; within a choice the last
    /// child's index varies fastest.
    fn costs(&self) -> Vec<(f64, bool)> {
        let mut out = Vec::new();
        for choice in &self.choices {
            let mut acc = vec![(choice.stage, choice.threshold_form)];
            for child in &choice.children {
                let sub = child.costs();
                acc = acc
                    .iter()
                    .flat_map(|&(a, fa)| sub.iter().map(move |&(b, fb)| (a + b, fa && fb)))
                    .collect();
            }
            out.extend(acc);
        }
        out
    }

    fn fill(&self, mut id: u128, table: &mut HashMap<(usize, HistoryKey, i64, usize), bool>) {
        let choice = self
            .choices
            .iter()
            .find(|c| {
                if id < c.count {
                    true
                } else {
                    id -= c.count;
                    false
                }
            })
            .expect("strategy id in range");
        let key = HistoryKey::Full(self.history.clone());
        for (&(x, e), &u) in self.points.iter().zip(&choice.sends) {
            table.insert((self.t, key.clone(), x, e), u);
        }
        for (k, child) in choice.children.iter().enumerate() {
            let stride: u128 = choice.children[k + 1..].iter().map(Node::count).product();
            child.fill((id / stride) % child.count(), table);
        }
    }
}

struct TreeBuilder<'a> {
    spec: &'a ProblemSpec,
    centers: &'a Option<Vec<i64>>,
    budget: u128,
}

impl TreeBuilder<'_> {
    fn build(&self, t: usize, pi: &JointBelief, history: &mut Vec<Observation>) -> Result<Node> {
        let spec = self.spec;
        let points: Vec<(i64, usize)> = pi.support().filter(|p| p.1 > 0).map(|(x, e, _)| (x, e)).collect();
        let k = points.len();
        if k >= 127 || (1u128 << k) > self.budget {
            return Err(over_budget(1u128.checked_shl(k as u32).unwrap_or(u128::MAX), self.budget));
        }
        let reference = reference(self.centers, t, last_received(history));
        let mut choices = Vec::with_capacity(1 << k);
        let mut total: u128 = 0;
        for bits in 0..(1u128 << k) {
            let sends: Vec<bool> = (0..k).map(|i| bits >> i & 1 == 1).collect();
            let chosen: HashSet<(i64, usize)> = points.iter().zip(&sends).filter(|p| *p.1).map(|p| *p.0).collect();
            let gamma = Prescription::new(|x, e| chosen.contains(&(x, e)) as u8 as f64);
            let (silent, sent) = split(pi, &gamma);
            let silent_mass = silent.mass();
            let mut stage = spec.comm_cost * sent.iter().map(|s| s.2).sum::<f64>();
            if silent_mass > 0.0 {
                stage += silent_mass * best_estimate(&silent, &spec.distortion).1;
            }
            let mut children = Vec::new();
            if t < spec.horizon {
                for &(x, e, w) in &sent {
                    history.push(Observation::Received { x, e });
                    let post = JointBelief::point(x, e - 1, spec.battery_cap, w);
                    children.push(self.build(t + 1, &pre_update(&post, &spec.source, &spec.harvest), history)?);
                    history.pop();
                }
                if silent_mass > 0.0 {
                    history.push(Observation::Silent);
                    children.push(self.build(t + 1, &pre_update(&silent, &spec.source, &spec.harvest), history)?);
                    history.pop();
                }
            }
            let mut count: u128 = 1;
            for c in &children {
                count = count.saturating_mul(c.count());
            }
            total = total.saturating_add(count);
            if total > self.budget {
                return Err(over_budget(total, self.budget));
            }
            let threshold_form = is_threshold_form(&points, |i| sends[i], reference);
            choices.push(Choice { sends, stage, threshold_form, children, count });
        }
        Ok(Node { t, history: history.clone(), points, choices })
    }
}

/// Collapsed enumeration: one decision per `(t, last receipt, x, e)` that
/// some strategy can reach, each assignment scored by [`exact_cost`].
fn enumerate_flat(spec: &ProblemSpec, budget: u128, centers: &Option<Vec<i64>>) -> Result<Enumeration> {
    let vars = reachable_variables(spec);
    let v = vars.len();
    if v >= 127 || (1u128 << v) > budget {
        return Err(over_budget(1u128.checked_shl(v as u32).unwrap_or(u128::MAX), budget));
    }
    let scored: Vec<(f64, bool)> = (0..(1u128 << v))
        .into_par_iter()
        .map(|id| {
            let strategy = TableStrategy { collapsed: true, table: flat_table(&vars, id) };
            let cost = exact_cost(spec, &strategy, &BestResponse, DEFAULT_NODE_BUDGET)?;
            Ok((cost, flat_threshold_form(&vars, id, centers)))
        })
        .collect::<Result<_>>()?;
    let (costs, threshold_form) = scored.into_iter().unzip();
    Ok(Enumeration { costs, threshold_form, layout: Layout::Flat(vars) })
}

fn flat_table(vars: &[(usize, HistoryKey, i64, usize)], id: u128) -> HashMap<(usize, HistoryKey, i64, usize), bool> {
    vars.iter().enumerate().map(|(i, v)| (v.clone(), id >> i & 1 == 1)).collect()
}

fn flat_threshold_form(vars: &[(usize, HistoryKey, i64, usize)], id: u128, centers: &Option<Vec<i64>>) -> bool {
    let mut groups: BTreeMap<(usize, &HistoryKey), Vec<usize>> = BTreeMap::new();
    for (i, (t, key, _, _)) in vars.iter().enumerate() {
        groups.entry((*t, key)).or_default().push(i);
    }
    groups.iter().all(|(&(t, key), idx)| {
        let last = match key {
            HistoryKey::LastReceived(r) => r.map(|r| r.0),
            HistoryKey::Full(h) => last_received(h),
        };
        let points: Vec<(i64, usize)> = idx.iter().map(|&i| (vars[i].2, vars[i].3)).collect();
        is_threshold_form(&points, |j| id >> idx[j] & 1 == 1, reference(centers, t, last))
    })
}

/// Every `(t, last receipt, x, e > 0)` reachable under some strategy.
fn reachable_variables(spec: &ProblemSpec) -> Vec<(usize, HistoryKey, i64, usize)> {
    type Layer = BTreeMap<Option<(i64, usize)>, BTreeSet<(i64, usize)>>;
    let support = |b: &JointBelief| -> Vec<(i64, usize)> { b.support().map(|(x, e, _)| (x, e)).collect() };
    let cap = spec.battery_cap;
    let mut layer: Layer = BTreeMap::new();
    layer.insert(None, support(&initial_belief(spec)).into_iter().collect());
    let mut vars = Vec::new();
    for t in 1..=spec.horizon {
        let mut next: Layer = BTreeMap::new();
        for (key, points) in &layer {
            for &(x, e) in points.iter().filter(|p| p.1 > 0) {
                vars.push((t, HistoryKey::LastReceived(*key), x, e));
            }
            if t == spec.horizon {
                continue;
            }
            // silence is possible from any point, so take all of them
            let mut all = JointBelief::zeros(points.first().map_or(0, |p| p.0), 1, cap);
            for &(x, e) in points {
                all = merge(&all, &JointBelief::point(x, e, cap, 1.0));
            }
            let moved = pre_update(&all, &spec.source, &spec.harvest);
            next.entry(*key).or_default().extend(support(&moved));
            for &(x, e) in points.iter().filter(|p| p.1 > 0) {
                let moved = pre_update(&JointBelief::point(x, e - 1, cap, 1.0), &spec.source, &spec.harvest);
                next.entry(Some((x, t))).or_default().extend(support(&moved));
            }
        }
        layer = next;
    }
    vars
}

fn merge(a: &JointBelief, b: &JointBelief) -> JointBelief {
    let lo = a.grid_lo().min(b.grid_lo());
    let hi = a.grid_hi().max(b.grid_hi());
    let mut out = JointBelief::zeros(lo, (hi - lo + 1) as usize, a.cap());
    for (x, e, w) in a.support().chain(b.support()) {
        out.add(x, e, w);
    }
    out
}

/// Belief-space backward induction with the minimization restricted to
/// deterministic threshold prescriptions centered at points about which the
/// belief is a.s.u. Returns the optimal expected cost from the prior.
pub fn threshold_family_dp(spec: &ProblemSpec) -> Result<f64> {
    threshold_family_dp_budgeted(spec, DEFAULT_NODE_BUDGET)
}

/// [`threshold_family_dp`] with an explicit cap on belief nodes visited.
pub fn threshold_family_dp_budgeted(spec: &ProblemSpec, node_budget: usize) -> Result<f64> {
    require_discrete(spec)?;
    let mut dp = FamilyDp { spec, nodes: 0, budget: node_budget, received: HashMap::new() };
    dp.value(1, &initial_belief(spec))
}

struct FamilyDp<'a> {
    spec: &'a ProblemSpec,
    nodes: usize,
    budget: usize,
    /// Value of the unit-mass subtree after receiving `(x, e)` at `t`.
    received: HashMap<(usize, i64, usize), f64>,
}

impl FamilyDp<'_> {
    fn value(&mut self, t: usize, pi: &JointBelief) -> Result<f64> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(over_budget(self.nodes as u128, self.budget as u128));
        }
        let points: Vec<(i64, usize)> = pi.support().filter(|p| p.1 > 0).map(|(x, e, _)| (x, e)).collect();
        let mut seen: HashSet<Vec<bool>> = HashSet::new();
        let mut best = f64::INFINITY;
        for a in centers_of(pi) {
            for sends in threshold_masks(&points, a) {
                if !seen.insert(sends.clone()) {
                    continue;
                }
                let v = self.evaluate(t, pi, &points, &sends)?;
                best = best.min(v);
            }
        }
        Ok(best)
    }

    fn evaluate(&mut self, t: usize, pi: &JointBelief, points: &[(i64, usize)], sends: &[bool]) -> Result<f64> {
        let spec = self.spec;
        let chosen: HashSet<(i64, usize)> = points.iter().zip(sends).filter(|p| *p.1).map(|p| *p.0).collect();
        let gamma = Prescription::new(|x, e| chosen.contains(&(x, e)) as u8 as f64);
        let (silent, sent) = split(pi, &gamma);
        let silent_mass = silent.mass();
        let mut v = 0.0;
        for &(x, e, w) in &sent {
            v += w * spec.comm_cost;
            if t < spec.horizon {
                v += w * self.after_receipt(t, x, e)?;
            }
        }
        if silent_mass > 0.0 {
            v += silent_mass * best_estimate(&silent, &spec.distortion).1;
            if t < spec.horizon {
                v += self.value(t + 1, &pre_update(&silent, &spec.source, &spec.harvest))?;
            }
        }
        Ok(v)
    }

    fn after_receipt(&mut self, t: usize, x: i64, e: usize) -> Result<f64> {
        if let Some(v) = self.received.get(&(t, x, e)) {
            return Ok(*v);
        }
        let spec = self.spec;
        let post = JointBelief::point(x, e - 1, spec.battery_cap, 1.0);
        let v = self.value(t + 1, &pre_update(&post, &spec.source, &spec.harvest))?;
        self.received.insert((t, x, e), v);
        Ok(v)
    }
}

/// Points about which every energy slice of `pi` is a.s.u.; every point of
/// the hull if there are none.
fn centers_of(pi: &JointBelief) -> Vec<i64> {
    let (lo, hi) = (pi.grid_lo(), pi.grid_hi());
    let slices: Vec<Vec<f64>> =
        (0..=pi.cap()).map(|e| pi.energy_slice(e)).filter(|s| s.iter().any(|w| *w > 0.0)).collect();
    let asu: Vec<i64> = (lo..=hi)
        .filter(|&a| {
            slices.iter().all(|s| {
                let m: f64 = s.iter().sum();
                let normed: Vec<f64> = s.iter().map(|w| w / m).collect();
                is_asu_about(lo, &normed, a, 1e-12)
            })
        })
        .collect();
    if asu.is_empty() {
        (lo..=hi).collect()
    } else {
        asu
    }
}

/// Transmit sets `{(x, e) : |x - a| ≥ n(e)}` over all threshold vectors,
/// with `n(e)` ranging from 0 to one past the farthest point.
fn threshold_masks(points: &[(i64, usize)], a: i64) -> Vec<Vec<bool>> {
    let mut by_energy: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        by_energy.entry(p.1).or_default().push(i);
    }
    let mut masks = vec![vec![false; points.len()]];
    for idx in by_energy.values() {
        let far = idx.iter().map(|&i| (points[i].0 - a).abs()).max().unwrap_or(0);
        let mut grown = Vec::new();
        for mask in &masks {
            for n in 0..=far + 1 {
                let mut m = mask.clone();
                for &i in idx {
                    m[i] = (points[i].0 - a).abs() >= n;
                }
                if !grown.contains(&m) {
                    grown.push(m);
                }
            }
        }
        masks = grown;
    }
    masks
}

/// Whether the policy's own estimate (last received value, or the default
/// before any receipt) is a best estimate after every reachable silence.
pub fn estimator_structure_check(spec: &ProblemSpec, sensor: &ThresholdPolicy) -> Result<bool> {
    Ok(estimator_structure_witness(spec, sensor)?.is_none())
}

/// The first reachable history, if any, after which the policy's estimate
/// is strictly worse than the best one.
pub fn estimator_structure_witness(spec: &ProblemSpec, sensor: &ThresholdPolicy) -> Result<Option<Vec<Observation>>> {
    require_discrete(spec)?;
    let mut nodes = 0;
    structure_walk(spec, sensor, 1, &initial_belief(spec), &mut Vec::new(), &mut nodes)
}

fn structure_walk(
    spec: &ProblemSpec,
    sensor: &ThresholdPolicy,
    t: usize,
    pi: &JointBelief,
    history: &mut Vec<Observation>,
    nodes: &mut usize,
) -> Result<Option<Vec<Observation>>> {
    *nodes += 1;
    if *nodes > DEFAULT_NODE_BUDGET {
        return Err(over_budget(*nodes as u128, DEFAULT_NODE_BUDGET as u128));
    }
    let reference = sensor.estimator.reference(t, history);
    let gamma = Prescription::new(|x, e| sensor.transmit(t, history, x, e) as u8 as f64);
    let (silent, sent) = split(pi, &gamma);
    drop(gamma);
    if silent.mass() > 0.0 {
        history.push(Observation::Silent);
        let best = best_estimate(&silent, &spec.distortion).1;
        let own = expected_distortion(&silent, &spec.distortion, reference);
        if own > best + COST_TOL * best.abs().max(1.0) {
            return Ok(Some(history.clone()));
        }
        if t < spec.horizon {
            let next = pre_update(&silent, &spec.source, &spec.harvest);
            if let Some(w) = structure_walk(spec, sensor, t + 1, &next, history, nodes)? {
                return Ok(Some(w));
            }
        }
        history.pop();
    }
    if t < spec.horizon {
        for (x, e, w) in sent {
            history.push(Observation::Received { x, e });
            let post = JointBelief::point(x, e - 1, spec.battery_cap, w);
            let next = pre_update(&post, &spec.source, &spec.harvest);
            if let Some(w) = structure_walk(spec, sensor, t + 1, &next, history, nodes)? {
                return Ok(Some(w));
            }
            history.pop();
        }
    }
    Ok(None)
}
