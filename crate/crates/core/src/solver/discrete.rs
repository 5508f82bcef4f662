//! Integer-valued sources: random walk on the error `d`, and i.i.d. draws.

use super::{check_structure, extract_thresholds, EstimatorRule, Grid, Solution, ValueTable, TIE_TOL};
use crate::belief::{best_estimate, JointBelief};
use crate::dist::Pmf;
use crate::model::{ProblemSpec, SourceKind};
use crate::{Error, Result};

/// Solves the random-walk problem on `d ∈ [-D, D]`, `D = max|X_1| + T max|Z|`,
/// which contains every reachable error. Successors past the edge are
/// clamped, which never happens from a reachable state.
pub fn solve_discrete(spec: &ProblemSpec) -> Result<Solution> {
    let vt = walk_values(spec)?;
    check_structure(&vt, noise_is_even(&spec.source.noise), 0.0)?;
    let policy = extract_thresholds(&vt)?;
    let expected_cost = expected_initial_value(&vt, spec, &spec.source.init);
    Ok(Solution { table: vt, policy, expected_cost })
}

fn walk_values(spec: &ProblemSpec) -> Result<ValueTable> {
    if spec.source.kind != SourceKind::RandomWalk {
        return Err(Error::KindMismatch(format!("solve_discrete needs a random walk, got {:?}", spec.source.kind)));
    }
    spec.validate()?;
    let noise = &spec.source.noise;
    let radius = spec.source.init.max_abs() + spec.horizon as i64 * noise.max_abs();
    let len = (2 * radius + 1) as usize;
    let grid = Grid::Integer { lo: -radius, len };
    let rule = EstimatorRule::LastReceivedOrZero;
    let mut vt = ValueTable::new(spec.horizon, spec.battery_cap, grid, vec![0; spec.horizon], rule);
    let harvest = spec.harvest_outcomes();
    let pairs = symmetric_pairs(noise);

    for t in (1..=spec.horizon).rev() {
        let next = vt.layer(t + 1).to_vec();
        // E[J_{t+1}(d + Z, e')] for every d and e'
        let smoothed: Vec<Vec<f64>> = next.iter().map(|j| smooth(j, &pairs)).collect();
        let centre = radius as usize;
        for e in 0..=spec.battery_cap {
            let stay_future = mix(&harvest, |n| &smoothed[spec.energy_after(e, n)]);
            let transmit = (e > 0).then(|| {
                spec.comm_cost
                    + harvest.iter().map(|&(n, w)| w * smoothed[spec.energy_after(e - 1, n)][centre]).sum::<f64>()
            });
            let (values, decisions) = (0..len)
                .map(|i| {
                    let stay = spec.distortion.of_error(i as f64 - radius as f64) + stay_future[i];
                    decide(stay, transmit)
                })
                .unzip();
            vt.set(t, e, values, decisions);
        }
    }
    Ok(vt)
}

/// Solves the i.i.d. problem. The state is the fresh draw `x` itself, the
/// estimator falls back to a fixed center of the step's marginal law, and
/// the future does not depend on `x`.
pub fn solve_iid(spec: &ProblemSpec) -> Result<Solution> {
    let vt = iid_values(spec)?;
    check_structure(&vt, false, 0.0)?;
    let policy = extract_thresholds(&vt)?;
    let expected_cost = expected_initial_value(&vt, spec, &spec.source.init);
    Ok(Solution { table: vt, policy, expected_cost })
}

fn iid_values(spec: &ProblemSpec) -> Result<ValueTable> {
    if spec.source.kind != SourceKind::Iid {
        return Err(Error::KindMismatch(format!("solve_iid needs an i.i.d. source, got {:?}", spec.source.kind)));
    }
    spec.validate()?;
    let (init, noise) = (&spec.source.init, &spec.source.noise);
    let lo = init.lo().min(noise.lo());
    let hi = init.hi().max(noise.hi());
    let len = (hi - lo + 1) as usize;
    let centers = iid_centers(spec);
    let grid = Grid::Integer { lo, len };
    let rule = EstimatorRule::ReceivedOrCenter { centers: centers.clone() };
    let mut vt = ValueTable::new(spec.horizon, spec.battery_cap, grid, centers.clone(), rule);
    let harvest = spec.harvest_outcomes();

    for t in (1..=spec.horizon).rev() {
        // X_{t+1} ~ noise whatever happens now
        let future: Vec<f64> = vt
            .layer(t + 1)
            .iter()
            .map(|j| noise.iter().map(|(x, w)| w * j[(x - lo) as usize]).sum())
            .collect();
        for e in 0..=spec.battery_cap {
            let stay_future: f64 = harvest.iter().map(|&(n, w)| w * future[spec.energy_after(e, n)]).sum();
            let transmit = (e > 0).then(|| {
                spec.comm_cost + harvest.iter().map(|&(n, w)| w * future[spec.energy_after(e - 1, n)]).sum::<f64>()
            });
            let (values, decisions) = (0..len)
                .map(|i| decide(spec.distortion.eval(lo + i as i64, centers[t - 1]) + stay_future, transmit))
                .unzip();
            vt.set(t, e, values, decisions);
        }
    }
    Ok(vt)
}

/// Solves whichever integer problem `spec` describes.
pub fn solve_integer(spec: &ProblemSpec) -> Result<Solution> {
    match spec.source.kind {
        SourceKind::Iid => solve_iid(spec),
        _ => solve_discrete(spec),
    }
}

/// Per-step fallback estimate of an i.i.d. source: the best constant guess
/// for `X_1`, then for the noise law.
pub(crate) fn iid_centers(spec: &ProblemSpec) -> Vec<i64> {
    let (init, noise) = (&spec.source.init, &spec.source.noise);
    (1..=spec.horizon).map(|t| center_of(if t == 1 { init } else { noise }, spec)).collect()
}

/// Optimal expected cost of the DP without the structural checks, for
/// instances outside the setting where the threshold summary must exist.
pub(crate) fn dp_expected_cost(spec: &ProblemSpec) -> Result<f64> {
    let vt = match spec.source.kind {
        SourceKind::Iid => iid_values(spec)?,
        _ => walk_values(spec)?,
    };
    Ok(expected_initial_value(&vt, spec, &spec.source.init))
}

fn center_of(p: &Pmf, spec: &ProblemSpec) -> i64 {
    best_estimate(&JointBelief::product(p, &Pmf::point(0), 0), &spec.distortion).0
}

fn decide(stay: f64, transmit: Option<f64>) -> (f64, bool) {
    match transmit {
        Some(tx) if tx <= stay + TIE_TOL * stay.abs().max(1.0) => (tx.min(stay), true),
        _ => (stay, false),
    }
}

/// `(p(0), [(p(k), p(-k)) for k = 1..=K])`.
struct Pairs {
    zero: f64,
    pairs: Vec<(f64, f64)>,
}

fn symmetric_pairs(p: &Pmf) -> Pairs {
    let k = p.max_abs();
    Pairs { zero: p.get(0), pairs: (1..=k).map(|k| (p.get(k), p.get(-k))).collect() }
}

fn noise_is_even(p: &Pmf) -> bool {
    (1..=p.max_abs()).all(|k| p.get(k) == p.get(-k))
}

/// `E[J(d + Z)]` at every grid point, summed as `p(0)J(d) + Σ p(k)J(d+k) + p(-k)J(d-k)`
/// so that an even `Z` and an even `J` give a bitwise even result.
fn smooth(j: &[f64], z: &Pairs) -> Vec<f64> {
    let last = j.len() as i64 - 1;
    let at = |i: i64| j[i.clamp(0, last) as usize];
    (0..j.len() as i64)
        .map(|i| {
            let mut acc = z.zero * j[i as usize];
            for (k, &(up, down)) in z.pairs.iter().enumerate() {
                let k = k as i64 + 1;
                acc += up * at(i + k) + down * at(i - k);
            }
            acc
        })
        .collect()
}

/// `Σ_n P(N = n) f(n)[i]` elementwise.
fn mix<'a>(harvest: &[(usize, f64)], f: impl Fn(usize) -> &'a Vec<f64>) -> Vec<f64> {
    let mut out = vec![0.0; f(harvest[0].0).len()];
    for &(n, w) in harvest {
        for (o, v) in out.iter_mut().zip(f(n)) {
            *o += w * v;
        }
    }
    out
}

fn expected_initial_value(vt: &ValueTable, spec: &ProblemSpec, init: &Pmf) -> f64 {
    spec.initial_energy
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(e, we)| {
            we * init
                .iter()
                .map(|(x, wx)| wx * vt.value(1, e as usize, vt.index_of(x).expect("initial state on grid")))
                .sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Distortion, SourceSpec};

    fn walk(t: usize, c: f64, cap: usize, e1: usize) -> ProblemSpec {
        walk_from(Pmf::point(0), t, c, cap, e1)
    }

    fn walk_from(init: Pmf, t: usize, c: f64, cap: usize, e1: usize) -> ProblemSpec {
        let z = Pmf::new(-1, vec![0.25, 0.5, 0.25]).unwrap();
        ProblemSpec::new(
            t,
            c,
            cap,
            Pmf::point(e1 as i64),
            Pmf::point(0),
            SourceSpec::random_walk(init, z),
            Distortion::Power { k: 2.0 },
        )
        .unwrap()
    }

    #[test]
    fn one_step_with_battery_compares_c_to_squared_error() {
        let sol = solve_discrete(&walk_from(Pmf::uniform(-2, 5), 1, 1.5, 1, 1)).unwrap();
        // transmit iff d^2 >= 1.5, i.e. |d| >= 2
        assert_eq!(sol.policy.threshold(1, 1), 2.0);
        assert!(sol.policy.threshold(1, 0).is_infinite());
        assert!((sol.expected_cost - (2.0 + 2.0 * 1.5) / 5.0).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_two_step_value() {
        // T=2, one unit of energy, X_1 = 0, X_2 = Z with P(±1) = 1/4
        let sol = solve_discrete(&walk(2, 0.6, 1, 1)).unwrap();
        let vt = &sol.table;
        // J_2(±1, 1) = min(0.6, 1) = 0.6; J_2(0, 1) = 0; J_2(d, 0) = d^2
        assert!((vt.value(2, 1, vt.index_of(1).unwrap()) - 0.6).abs() < 1e-15);
        // J_1(0, 1): stay = 0 + 0.5 * 0.6 = 0.3; transmit = 0.6 + 0.5 * 1 = 1.1
        assert!((sol.expected_cost - 0.3).abs() < 1e-15);
    }

    #[test]
    fn value_is_exactly_symmetric() {
        let sol = solve_discrete(&walk(5, 2.0, 2, 2)).unwrap();
        let vt = &sol.table;
        for t in 1..=5 {
            for e in 0..=2 {
                for d in 0..=5 {
                    let (a, b) = (vt.index_of(d).unwrap(), vt.index_of(-d).unwrap());
                    assert_eq!(vt.value(t, e, a).to_bits(), vt.value(t, e, b).to_bits());
                }
            }
        }
    }

    #[test]
    fn iid_thresholds_are_measured_from_the_center() {
        let p = Pmf::new(2, vec![0.2, 0.6, 0.2]).unwrap();
        let spec = ProblemSpec::new(
            3,
            0.5,
            1,
            Pmf::point(1),
            Pmf::point(0),
            SourceSpec::iid(p.clone(), p),
            Distortion::Indicator,
        )
        .unwrap();
        let sol = solve_iid(&spec).unwrap();
        assert_eq!(sol.table.centers, vec![3, 3, 3]);
        assert!(sol.policy.thresholds.iter().all(|r| r[1] == 1.0 || r[1].is_infinite()));
    }
}
