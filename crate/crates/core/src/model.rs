//! The physical system: source, battery, channel and stage cost.
//!
//! Energy evolves as `E_{t+1} = min(E_t + N_t - U_t, B)` with `U_t ≤ E_t`.
//! A transmission delivers `(X_t, E_t)` exactly; silence delivers nothing.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dist::{asu_even, Pmf};
use crate::solver::{EstimatorRule, ThresholdPolicy};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// `X_{t+1} = X_t + Z_t` on the integers.
    RandomWalk,
    /// `X_{t+1} = Z_t`.
    Iid,
    /// `X_{t+1} = λ A X_t + Z_t` in ℝⁿ with Gaussian `X_1`, `Z_t`.
    GaussianRadial,
}

/// Parameters of the Gaussian source. The orthogonal matrix `A` is not
/// stored: every quantity the solver needs depends on it only through norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub dim: usize,
    pub lambda: f64,
    /// `X_1 ~ N(0, s1 I)`.
    pub s1: f64,
    /// `Z_t ~ N(0, s2 I)`.
    pub s2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub kind: SourceKind,
    /// Law of `X_1` (integer sources).
    pub init: Pmf,
    /// Law of `Z_t` (integer sources).
    pub noise: Pmf,
    pub gaussian: Option<GaussianSpec>,
}

impl SourceSpec {
    pub fn random_walk(init: Pmf, noise: Pmf) -> Self {
        Self { kind: SourceKind::RandomWalk, init, noise, gaussian: None }
    }

    pub fn iid(init: Pmf, noise: Pmf) -> Self {
        Self { kind: SourceKind::Iid, init, noise, gaussian: None }
    }

    pub fn gaussian(g: GaussianSpec) -> Self {
        Self {
            kind: SourceKind::GaussianRadial,
            init: Pmf::point(0),
            noise: Pmf::point(0),
            gaussian: Some(g),
        }
    }
}

/// Distortion `ρ(x, a)` as a function of the error `x - a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distortion {
    /// `1{x ≠ a}`.
    Indicator,
    /// `|x - a|^k`.
    Power { k: f64 },
}

impl Distortion {
    pub fn of_error(&self, d: f64) -> f64 {
        match *self {
            Distortion::Indicator => {
                if d != 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Distortion::Power { k } => d.abs().powf(k),
        }
    }

    pub fn eval(&self, x: i64, a: i64) -> f64 {
        self.of_error((x - a) as f64)
    }
}

/// A source value: an integer for the discrete sources, a vector for the
/// Gaussian one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum State {
    Int(i64),
    Vector(Vec<f64>),
}

/// `ρ(x, a)` for integers, or `‖x - a‖²` for vectors.
pub fn stage_distortion(d: &Distortion, x: &State, a: &State) -> Result<f64> {
    match (x, a) {
        (State::Int(x), State::Int(a)) => Ok(d.eval(*x, *a)),
        (State::Vector(x), State::Vector(a)) if x.len() == a.len() => {
            Ok(x.iter().zip(a).map(|(p, q)| (p - q) * (p - q)).sum())
        }
        _ => Err(Error::KindMismatch(format!("{x:?} vs {a:?}"))),
    }
}

/// `min(e + n - u, B)`, rejecting a transmission at zero energy.
pub fn energy_step(e: usize, u: bool, n_harvest: usize, cap: usize) -> Result<usize> {
    if u && e == 0 {
        return Err(Error::NoEnergy { energy: e });
    }
    Ok((e + n_harvest - u as usize).min(cap))
}

/// A full problem instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub horizon: usize,
    pub comm_cost: f64,
    pub battery_cap: usize,
    /// Law of `E_1` on `0..=B`.
    pub initial_energy: Pmf,
    /// Law of `N_t` on `0..=B`; mass above `B` is folded onto `B`.
    pub harvest: Pmf,
    pub source: SourceSpec,
    pub distortion: Distortion,
}

impl ProblemSpec {
    /// Validates and normalizes an instance. Harvest mass above the cap is
    /// moved onto the cap.
    pub fn new(
        horizon: usize,
        comm_cost: f64,
        battery_cap: usize,
        initial_energy: Pmf,
        harvest: Pmf,
        source: SourceSpec,
        distortion: Distortion,
    ) -> Result<Self> {
        let spec = Self {
            horizon,
            comm_cost,
            battery_cap,
            initial_energy: initial_energy.trimmed(),
            harvest: clip_harvest(&harvest, battery_cap)?,
            source,
            distortion,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.battery_cap == 0 {
            return bad("battery_cap must be positive".into());
        }
        if !(self.comm_cost >= 0.0 && self.comm_cost.is_finite()) {
            return bad(format!("comm_cost {} must be a finite non-negative number", self.comm_cost));
        }
        let cap = self.battery_cap as i64;
        if self.initial_energy.lo() < 0 || self.initial_energy.hi() > cap {
            return bad(format!("initial energy support must lie in [0, {cap}]"));
        }
        if self.harvest.lo() < 0 || self.harvest.hi() > cap {
            return bad(format!("harvest support must lie in [0, {cap}]"));
        }
        if let Distortion::Power { k } = self.distortion {
            if !(k > 0.0 && k.is_finite()) {
                return bad(format!("distortion exponent {k} must be positive"));
            }
        }
        match self.source.kind {
            SourceKind::GaussianRadial => match &self.source.gaussian {
                None => bad("gaussian source needs gaussian parameters".into()),
                Some(g) if g.dim == 0 || !(g.lambda > 0.0 && g.s1 > 0.0 && g.s2 > 0.0) => {
                    bad("gaussian parameters must be positive".into())
                }
                Some(_) => Ok(()),
            },
            _ => Ok(()),
        }
    }

    /// Initial state and noise are both a.s.u. and even (random walk), the
    /// setting in which thresholds and the last-received estimator are
    /// optimal.
    pub fn is_neat(&self) -> bool {
        self.source.kind == SourceKind::RandomWalk && asu_even(&self.source.init) && asu_even(&self.source.noise)
    }

    /// Expands one of the special-case presets.
    pub fn with_preset(mut self, preset: Preset) -> Result<Self> {
        match preset {
            Preset::FixedBudget(k) => {
                if k > self.battery_cap {
                    return Err(Error::InvalidSpec(format!(
                        "fixed budget {k} exceeds battery cap {}",
                        self.battery_cap
                    )));
                }
                self.initial_energy = Pmf::point(k as i64);
                self.harvest = Pmf::point(0);
            }
            Preset::NoConstraint => {
                self.battery_cap = 1;
                self.initial_energy = Pmf::point(1);
                self.harvest = Pmf::point(1);
            }
            Preset::Iid => {
                if self.source.kind == SourceKind::GaussianRadial {
                    return Err(Error::InvalidSpec("iid preset applies to integer sources".into()));
                }
                self.source.kind = SourceKind::Iid;
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub(crate) fn energy_after(&self, e_post: usize, n: usize) -> usize {
        (e_post + n).min(self.battery_cap)
    }

    /// `(n, P(N = n))` for the harvest outcomes with positive mass.
    pub(crate) fn harvest_outcomes(&self) -> Vec<(usize, f64)> {
        self.harvest.iter().filter(|(_, w)| *w > 0.0).map(|(n, w)| (n as usize, w)).collect()
    }
}

fn clip_harvest(h: &Pmf, cap: usize) -> Result<Pmf> {
    if h.lo() < 0 {
        return Err(Error::InvalidSpec("harvest support must be non-negative".into()));
    }
    let cap = cap as i64;
    if h.hi() <= cap {
        return Ok(h.trimmed());
    }
    let mut w = vec![0.0; (cap - h.lo() + 1).max(1) as usize];
    let lo = h.lo().min(cap);
    for (n, p) in h.iter() {
        w[(n.min(cap) - lo) as usize] += p;
    }
    Ok(Pmf::from_raw(lo, w).trimmed())
}

/// The special cases obtained by fixing the energy process or the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `E_1 = K` surely and no harvesting: at most `K` transmissions.
    FixedBudget(usize),
    /// `B = 1`, `E_1 = 1` and one unit harvested every step.
    NoConstraint,
    /// `X_{t+1} = Z_t`.
    Iid,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_constraint" => Ok(Preset::NoConstraint),
            "iid" => Ok(Preset::Iid),
            _ => match s.strip_prefix("fixed_budget") {
                Some(rest) => {
                    let k = rest.trim_start_matches([':', '=']);
                    k.parse()
                        .map(Preset::FixedBudget)
                        .map_err(|_| Error::InvalidSpec(format!("preset `{s}`: expected fixed_budget=K")))
                }
                None => Err(Error::InvalidSpec(format!("unknown preset `{s}`"))),
            },
        }
    }
}

/// One step of a closed-loop rollout. `estimate` is the estimate formed
/// after the step's message, the one the stage cost is charged against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub t: usize,
    pub x: State,
    pub e: usize,
    pub u: bool,
    pub estimate: State,
    pub stage_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn total_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.stage_cost).sum()
    }
}

/// Sample mean and standard error of the total cost over many rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub rollouts: usize,
    pub mean_cost: f64,
    pub std_err: f64,
}

/// Rolls the closed loop of `policy` and its estimator once.
pub fn sample_trajectory(spec: &ProblemSpec, policy: &ThresholdPolicy, rng_seed: u64) -> Result<Trace> {
    let mut sim = Simulator::new(spec, policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut steps = Vec::with_capacity(spec.horizon);
    sim.rollout(&mut rng, |s| steps.push(s));
    Ok(Trace { steps })
}

/// Mean total cost over `rollouts` independent rollouts from one seeded
/// stream.
pub fn simulate_cost(spec: &ProblemSpec, policy: &ThresholdPolicy, seed: u64, rollouts: usize) -> Result<MonteCarloSummary> {
    let mut sim = Simulator::new(spec, policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..rollouts {
        let mut total = 0.0;
        sim.rollout_costs(&mut rng, |c| total += c);
        let delta = total - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (total - mean);
    }
    let var = if rollouts > 1 { m2 / (rollouts - 1) as f64 } else { 0.0 };
    Ok(MonteCarloSummary {
        rollouts,
        mean_cost: mean,
        std_err: (var / rollouts as f64).sqrt(),
    })
}

struct Sampler {
    lo: i64,
    index: WeightedIndex<f64>,
}

impl Sampler {
    fn new(p: &Pmf) -> Self {
        Self {
            lo: p.lo(),
            index: WeightedIndex::new(p.weights()).expect("pmf weights are valid"),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> i64 {
        self.lo + self.index.sample(rng) as i64
    }
}

struct Simulator<'a> {
    spec: &'a ProblemSpec,
    policy: &'a ThresholdPolicy,
    init: Sampler,
    noise: Sampler,
    energy: Sampler,
    harvest: Sampler,
}

impl<'a> Simulator<'a> {
    fn new(spec: &'a ProblemSpec, policy: &'a ThresholdPolicy) -> Result<Self> {
        if policy.horizon() != spec.horizon || policy.battery_cap() != spec.battery_cap {
            return Err(Error::InvalidSpec(format!(
                "policy is for T={}, B={} but the problem has T={}, B={}",
                policy.horizon(),
                policy.battery_cap(),
                spec.horizon,
                spec.battery_cap
            )));
        }
        let gaussian_rule = matches!(policy.estimator, EstimatorRule::GaussianPrediction { .. });
        if gaussian_rule != (spec.source.kind == SourceKind::GaussianRadial) {
            return Err(Error::KindMismatch("estimator rule does not fit the source".into()));
        }
        Ok(Self {
            spec,
            policy,
            init: Sampler::new(&spec.source.init),
            noise: Sampler::new(&spec.source.noise),
            energy: Sampler::new(&spec.initial_energy),
            harvest: Sampler::new(&spec.harvest),
        })
    }

    fn rollout_costs(&mut self, rng: &mut ChaCha8Rng, mut sink: impl FnMut(f64)) {
        self.rollout(rng, |s| sink(s.stage_cost));
    }

    fn rollout(&mut self, rng: &mut ChaCha8Rng, sink: impl FnMut(TraceStep)) {
        match self.spec.source.kind {
            SourceKind::GaussianRadial => self.rollout_gaussian(rng, sink),
            _ => self.rollout_discrete(rng, sink),
        }
    }

    fn rollout_discrete(&mut self, rng: &mut ChaCha8Rng, mut sink: impl FnMut(TraceStep)) {
        let spec = self.spec;
        let mut x = self.init.sample(rng);
        let mut e = self.energy.sample(rng) as usize;
        let mut last = 0i64;
        for t in 1..=spec.horizon {
            let reference = match &self.policy.estimator {
                EstimatorRule::ReceivedOrCenter { centers } => centers[t - 1],
                _ => last,
            };
            let u = e > 0 && self.policy.transmits(t, e, (x - reference).abs() as f64);
            let estimate = if u { x } else { reference };
            let stage_cost = spec.comm_cost * u as u8 as f64 + spec.distortion.eval(x, estimate);
            sink(TraceStep {
                t,
                x: State::Int(x),
                e,
                u,
                estimate: State::Int(estimate),
                stage_cost,
            });
            let n = self.harvest.sample(rng) as usize;
            e = energy_step(e, u, n, spec.battery_cap).expect("policy never transmits at zero energy");
            last = estimate;
            x = match spec.source.kind {
                SourceKind::Iid => self.noise.sample(rng),
                _ => x + self.noise.sample(rng),
            };
        }
    }

    fn rollout_gaussian(&mut self, rng: &mut ChaCha8Rng, mut sink: impl FnMut(TraceStep)) {
        let spec = self.spec;
        let g = spec.source.gaussian.as_ref().expect("validated gaussian spec");
        let mut x = normal_vec(rng, g.dim, g.s1.sqrt());
        let mut e = self.energy.sample(rng) as usize;
        let mut last = vec![0.0; g.dim];
        for t in 1..=spec.horizon {
            // A is taken as the identity; costs and decisions only see norms.
            let reference: Vec<f64> = last.iter().map(|a| g.lambda * a).collect();
            let dist = x.iter().zip(&reference).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            let u = e > 0 && self.policy.transmits(t, e, dist);
            let estimate = if u { x.clone() } else { reference };
            let stage_cost = spec.comm_cost * u as u8 as f64 + if u { 0.0 } else { dist * dist };
            sink(TraceStep {
                t,
                x: State::Vector(x.clone()),
                e,
                u,
                estimate: State::Vector(estimate.clone()),
                stage_cost,
            });
            let n = self.harvest.sample(rng) as usize;
            e = energy_step(e, u, n, spec.battery_cap).expect("policy never transmits at zero energy");
            if t < spec.horizon {
                let z = normal_vec(rng, g.dim, g.s2.sqrt());
                x = x.iter().zip(&z).map(|(xi, zi)| g.lambda * xi + zi).collect();
            }
            last = estimate;
        }
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize, sd: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_examples() {
        assert_eq!(energy_step(2, true, 1, 3).unwrap(), 2);
        assert_eq!(energy_step(3, false, 5, 3).unwrap(), 3);
        assert_eq!(energy_step(0, true, 0, 3), Err(Error::NoEnergy { energy: 0 }));
    }

    #[test]
    fn distortion_examples() {
        let ind = Distortion::Indicator;
        assert_eq!(stage_distortion(&ind, &State::Int(3), &State::Int(3)).unwrap(), 0.0);
        let sq = Distortion::Power { k: 2.0 };
        assert_eq!(stage_distortion(&sq, &State::Int(3), &State::Int(1)).unwrap(), 4.0);
        let v = stage_distortion(&sq, &State::Vector(vec![1.0, 1.0]), &State::Vector(vec![0.0, 0.0]));
        assert_eq!(v.unwrap(), 2.0);
        assert!(stage_distortion(&sq, &State::Int(1), &State::Vector(vec![0.0])).is_err());
    }

    #[test]
    fn harvest_above_cap_is_clipped() {
        let h = Pmf::new(0, vec![0.2, 0.3, 0.5]).unwrap();
        let spec = ProblemSpec::new(
            2,
            1.0,
            1,
            Pmf::point(1),
            h,
            SourceSpec::random_walk(Pmf::point(0), Pmf::point(0)),
            Distortion::Indicator,
        )
        .unwrap();
        assert_eq!(spec.harvest.lo(), 0);
        assert_eq!(spec.harvest.weights(), &[0.2, 0.8]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let src = SourceSpec::random_walk(Pmf::point(0), Pmf::point(0));
        let mk = |t, c, b, e1: Pmf| ProblemSpec::new(t, c, b, e1, Pmf::point(0), src.clone(), Distortion::Indicator);
        assert!(mk(0, 1.0, 1, Pmf::point(1)).is_err());
        assert!(mk(1, -1.0, 1, Pmf::point(1)).is_err());
        assert!(mk(1, 1.0, 0, Pmf::point(0)).is_err());
        assert!(mk(1, 1.0, 1, Pmf::point(2)).is_err());
    }

    #[test]
    fn preset_parsing() {
        assert_eq!("no_constraint".parse::<Preset>().unwrap(), Preset::NoConstraint);
        assert_eq!("fixed_budget=3".parse::<Preset>().unwrap(), Preset::FixedBudget(3));
        assert_eq!("fixed_budget:0".parse::<Preset>().unwrap(), Preset::FixedBudget(0));
        assert!("fixed_budget".parse::<Preset>().is_err());
        assert!("bogus".parse::<Preset>().is_err());
    }
}
