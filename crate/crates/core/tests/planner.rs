use chargenet::abompn::{abompn_solve, integer_adjust, layer1_solve, AbompnConfig, Method};
use chargenet::design::{Design, DesignMode};
use chargenet::equilibrium::SolverConfig;
use chargenet::fixtures::{self, Economics};
use chargenet::planner::{
    evaluate_design, price_floor, solve_integer_joint, solve_relaxed_gaev, LowerLevel, OptimizerConfig,
    PROFIT_TOL,
};
use chargenet::Error;
use proptest::prelude::*;

fn quick() -> AbompnConfig {
    let mut cfg = AbompnConfig::default();
    cfg.optimizer.starts = 3;
    cfg.optimizer.max_evaluations = 400;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn adjust_keeps_total_and_moves_less_than_one(
        x in prop::collection::vec(0.0f64..6.0, 1..12),
        slack in 0.0f64..3.0,
    ) {
        let total: f64 = x.iter().sum();
        let budget = (total + slack).ceil() as u32;
        let out = integer_adjust(&x, budget).unwrap();
        let adjusted: f64 = out.iter().sum();
        prop_assert_eq!(adjusted, total.round());
        prop_assert!(adjusted <= f64::from(budget));
        for (a, b) in x.iter().zip(&out) {
            prop_assert_eq!(b.fract(), 0.0);
            prop_assert!((a - b).abs() < 1.0);
        }
        prop_assert_eq!(integer_adjust(&out, budget).unwrap(), out);
    }

    #[test]
    fn adjust_is_identity_on_integers(x in prop::collection::vec(0u32..5, 1..12)) {
        let x: Vec<f64> = x.into_iter().map(f64::from).collect();
        let budget = x.iter().sum::<f64>() as u32;
        prop_assert_eq!(integer_adjust(&x, budget).unwrap(), x);
    }
}

#[test]
fn adjust_refuses_over_budget_input() {
    assert!(matches!(
        integer_adjust(&[2.5, 2.5], 4),
        Err(Error::BudgetViolation { .. })
    ));
}

/// One station serving every EV driver: the load is fixed, so the best
/// design sits at the price floor and only the charger count matters.
#[test]
fn single_station_matches_enumeration() {
    let mut sc = fixtures::single_link_ev(1.0, 10.0, 0.5);
    sc.budget = 6;
    let i = sc.network.node_index(2).unwrap();
    let solver = SolverConfig::default();
    let mut oracle = f64::INFINITY;
    for x in 1..=sc.budget {
        let mut d = Design::closed(sc.node_count(), DesignMode::Integer);
        d.x[i] = f64::from(x);
        d.y[i] = price_floor(d.x[i], sc.e[i], sc.t[i], 1.0, sc.pi).unwrap();
        let ev = evaluate_design(&sc, &d, &LowerLevel::Joint, &solver, None).unwrap();
        assert!(ev.feasible);
        oracle = oracle.min(ev.theta);
    }
    let sol = solve_integer_joint(&sc, &LowerLevel::Joint, &OptimizerConfig::default()).unwrap();
    assert!(sol.evaluation.feasible);
    assert!((sol.theta - oracle).abs() <= 1e-6 * oracle, "{} vs {oracle}", sol.theta);
}

#[test]
fn symmetric_network_has_mirror_optimum() {
    let econ = Economics {
        budget: 2,
        ..Economics::default()
    };
    let sc = fixtures::two_station(2.0, 4.0, 0.0, &econ);
    let sol = abompn_solve(&sc, &quick()).unwrap();
    let (a, b) = (sc.network.node_index(5).unwrap(), sc.network.node_index(6).unwrap());
    let mut mirror = sol.design.clone();
    mirror.x.swap(a, b);
    mirror.y.swap(a, b);
    let solver = SolverConfig::default();
    let here = evaluate_design(&sc, &sol.design, &LowerLevel::Joint, &solver, None).unwrap();
    let there = evaluate_design(&sc, &mirror, &LowerLevel::Joint, &solver, None).unwrap();
    assert_eq!(here.feasible, there.feasible);
    assert!((here.theta - there.theta).abs() <= 1e-6 * here.theta, "{} vs {}", here.theta, there.theta);
}

#[test]
fn ev_free_scenario_places_nothing() {
    let sc = fixtures::two_link(1.0, 2.0, 0.0, 3.0);
    let sol = abompn_solve(&sc, &quick()).unwrap();
    assert_eq!(sol.design.total_chargers(), 0.0);
    assert!((sol.theta - 6.0).abs() < 1e-5);
}

#[test]
fn zero_budget_with_ev_demand_is_infeasible() {
    let econ = Economics {
        budget: 0,
        ..Economics::default()
    };
    let sc = fixtures::two_station(2.0, 4.0, 0.2, &econ);
    for method in Method::ALL {
        let r = layer1_solve(&sc, method, &quick());
        assert!(matches!(r, Err(Error::NoFeasibleDesign(_))), "{method}: {r:?}");
    }
}

#[test]
fn joint_beats_both_baselines_on_small_grid() {
    for seed in [2, 5] {
        let mut sc = fixtures::random_grid(seed);
        sc.budget = 3;
        let cfg = quick();
        let runs: Vec<_> = Method::ALL.iter().map(|&m| layer1_solve(&sc, m, &cfg)).collect();
        if let [Ok(joint), Ok(price), Ok(place)] = &runs[..] {
            assert!(joint.theta <= price.theta.min(place.theta) + 1e-6, "seed {seed}");
        }
        for sol in runs.into_iter().flatten() {
            assert!(sol.design.total_chargers() <= f64::from(sc.budget));
            assert!(sol.evaluation.min_open_slack(&sol.design) >= -PROFIT_TOL);
        }
    }
}

/// The 0.1-step sweep bounds the relaxed optimum from above; a 0.001-step
/// sweep is close enough to the true minimum to bound it from below.
#[test]
fn relaxed_single_station_matches_sweeps() {
    let mut sc = fixtures::single_link_ev(1.0, 10.0, 0.5);
    sc.budget = 5;
    let i = sc.network.node_index(2).unwrap();
    let solver = SolverConfig::default();
    let sweep = |step: f64| {
        let n = (f64::from(sc.budget) / step).round() as u32;
        (1..=n)
            .map(|k| {
                let mut d = Design::closed(sc.node_count(), DesignMode::Relaxed);
                d.x[i] = step * f64::from(k);
                d.y[i] = price_floor(d.x[i], sc.e[i], sc.t[i], 1.0, sc.pi).unwrap();
                evaluate_design(&sc, &d, &LowerLevel::Joint, &solver, None).unwrap().theta
            })
            .fold(f64::INFINITY, f64::min)
    };
    let (coarse, fine) = (sweep(0.1), sweep(0.001));
    let sol = solve_relaxed_gaev(&sc, &LowerLevel::Joint, &OptimizerConfig::default()).unwrap();
    assert!(sol.evaluation.feasible);
    assert!(sol.theta <= coarse + 1e-6, "{} vs {coarse}", sol.theta);
    assert!(sol.theta >= fine - 1e-4 * fine, "{} vs {fine}", sol.theta);
}

#[test]
fn relaxed_symmetric_stations_split_evenly() {
    let econ = Economics {
        budget: 4,
        ..Economics::default()
    };
    let sc = fixtures::two_station(6.0, 0.0, 0.0, &econ);
    let sol = solve_relaxed_gaev(&sc, &LowerLevel::Joint, &OptimizerConfig::default()).unwrap();
    let (a, b) = (sc.network.node_index(5).unwrap(), sc.network.node_index(6).unwrap());
    assert!((sol.design.x[a] - sol.design.x[b]).abs() <= 0.05, "{:?}", sol.design.x);
}

/// Thetas of the refinement rounds, in order.
fn refine_thetas(sol: &chargenet::planner::PlannerSolution) -> Vec<f64> {
    sol.trace.iter().filter(|t| t.stage == "refine").map(|t| t.theta).collect()
}

#[test]
fn refinement_settles_at_half_penetration() {
    let econ = Economics {
        budget: 3,
        ..Economics::default()
    };
    let mut scenarios = vec![fixtures::two_station(4.0, 4.0, 0.3, &econ)];
    for seed in [1, 4] {
        let mut sc = fixtures::random_grid(seed);
        for od in sc.network.od_pairs.iter_mut() {
            od.gamma_ev = 5.0;
            od.gamma_ncd = 5.0;
        }
        sc.budget = 4;
        scenarios.push(sc);
    }
    for sc in scenarios {
        assert_eq!(chargenet::abompn::penetration_rate(&sc).unwrap(), 0.5);
        let sol = abompn_solve(&sc, &quick()).unwrap();
        assert!(sol.converged);
        let thetas = refine_thetas(&sol);
        assert!(thetas.len() >= 2, "{thetas:?}");
        for w in thetas[1..].windows(2) {
            assert!(w[1] <= w[0] + 1e-6 * w[0], "{thetas:?}");
        }
    }
}
