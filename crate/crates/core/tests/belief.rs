mod common;

use remest::belief::{
    best_estimate, exact_cost, post_update, pre_update, BestResponse, JointBelief, Observation, Prescription,
    DEFAULT_NODE_BUDGET,
};
use remest::dist::{is_asu_about, Pmf};
use remest::model::{simulate_cost, Distortion, ProblemSpec};
use remest::solver::{solve_discrete, EstimatorRule, ThresholdPolicy};
use remest::Error;

use common::*;

#[test]
fn free_perfect_communication_costs_nothing() {
    let spec = walk(3, 0.0, energy(2, Pmf::point(1), Pmf::point(1)), tri(), tri(), Distortion::Indicator);
    let always = ThresholdPolicy::constant(3, 2, 0.0, EstimatorRule::LastReceivedOrZero);
    assert_eq!(exact_cost(&spec, &always, &always.estimator, DEFAULT_NODE_BUDGET).unwrap(), 0.0);
}

#[test]
fn never_sending_an_iid_uniform_source() {
    for (t, m) in [(1, 2), (3, 3), (4, 5)] {
        let spec = iid(t, 1.0, energy(1, Pmf::point(1), Pmf::point(0)), Pmf::uniform(0, m), Distortion::Indicator);
        let never = ThresholdPolicy::constant(t, 1, f64::INFINITY, EstimatorRule::LastReceivedOrZero);
        let cost = exact_cost(&spec, &never, &BestResponse, DEFAULT_NODE_BUDGET).unwrap();
        assert!((cost - t as f64 * (m as f64 - 1.0) / m as f64).abs() < 1e-12);
    }
}

#[test]
fn exact_cost_agrees_with_simulation() {
    let spec = oracle_instances().remove(4).1;
    let sol = solve_discrete(&spec).unwrap();
    let exact = exact_cost(&spec, &sol.policy, &sol.policy.estimator, DEFAULT_NODE_BUDGET).unwrap();
    let mc = simulate_cost(&spec, &sol.policy, 9, 200_000).unwrap();
    assert!((mc.mean_cost - exact).abs() < 3.0 * mc.std_err, "{mc:?} vs {exact}");
}

#[test]
fn node_budget_is_enforced() {
    let spec = walk(6, 0.5, energy(2, Pmf::point(2), pmf(0, &[0.5, 0.5])), tri(), tri(), Distortion::Indicator);
    let sol = solve_discrete(&spec).unwrap();
    let err = exact_cost(&spec, &sol.policy, &BestResponse, 10).unwrap_err();
    assert!(matches!(err, Error::BudgetExceeded { budget: 10, .. }));
}

#[test]
fn spec_examples_for_updates() {
    let pi = JointBelief::product(&Pmf::uniform(-1, 3), &Pmf::point(1), 1);
    let same = post_update(&pi, &Prescription::new(|_, _| 0.0), Observation::Silent).unwrap();
    assert_eq!(same, pi);
    let gamma = Prescription::threshold(0, vec![f64::INFINITY, 1.0]);
    let kept = post_update(&pi, &gamma, Observation::Silent).unwrap();
    assert_eq!(kept.support().collect::<Vec<_>>(), vec![(0, 1, 1.0)]);
    let wide = JointBelief::product(&Pmf::uniform(3, 5), &Pmf::point(2), 2);
    let got = post_update(&wide, &Prescription::new(|_, _| 1.0), Observation::Received { x: 5, e: 2 }).unwrap();
    assert_eq!(got.support().collect::<Vec<_>>(), vec![(5, 1, 1.0)]);
}

#[test]
fn best_estimate_of_a_split_marginal_takes_the_left_median() {
    let mut theta = JointBelief::zeros(0, 11, 1);
    theta.add(0, 1, 0.5);
    theta.add(10, 0, 0.5);
    assert_eq!(best_estimate(&theta, &Distortion::Power { k: 1.0 }), (0, 5.0));
}

/// Walks every history reachable under `policy` and checks that each
/// pre-transmission energy slice is a.s.u. about the previous estimate.
fn check_asu_along(spec: &ProblemSpec, policy: &ThresholdPolicy, t: usize, pi: &JointBelief, last: i64) {
    for e in 0..=spec.battery_cap {
        let s = pi.energy_slice(e);
        let m: f64 = s.iter().sum();
        if m > 0.0 {
            let s: Vec<f64> = s.iter().map(|w| w / m).collect();
            assert!(is_asu_about(pi.grid_lo(), &s, last, 1e-12), "t={t} e={e} about {last}: {s:?}");
        }
    }
    if t == spec.horizon {
        return;
    }
    let gamma = Prescription::threshold(last, policy.thresholds[t - 1].clone());
    for (x, e, _) in pi.support().collect::<Vec<_>>() {
        if e > 0 && policy.transmits(t, e, (x - last).abs() as f64) {
            let post = post_update(pi, &gamma, Observation::Received { x, e }).unwrap();
            check_asu_along(spec, policy, t + 1, &pre_update(&post, &spec.source, &spec.harvest), x);
        }
    }
    if let Ok(post) = post_update(pi, &gamma, Observation::Silent) {
        check_asu_along(spec, policy, t + 1, &pre_update(&post, &spec.source, &spec.harvest), last);
    }
}

#[test]
fn beliefs_stay_asu_about_the_last_estimate() {
    let specs = [
        walk(4, 1.0, energy(2, Pmf::point(2), pmf(0, &[0.6, 0.4])), tri(), pmf(-2, &[0.1, 0.2, 0.4, 0.2, 0.1]), Distortion::Power { k: 2.0 }),
        walk(4, 0.4, energy(1, pmf(0, &[0.5, 0.5]), pmf(0, &[0.5, 0.5])), Pmf::uniform(-1, 3), tri(), Distortion::Indicator),
    ];
    for spec in &specs {
        let policy = solve_discrete(spec).unwrap().policy;
        let pi = JointBelief::product(&spec.source.init, &spec.initial_energy, spec.battery_cap);
        check_asu_along(spec, &policy, 1, &pi, 0);
    }
}
