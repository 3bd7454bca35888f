use chargenet::cost::{potential, social_cost, strategy_costs};
use chargenet::design::{Design, DesignMode};
use chargenet::equilibrium::{
    brute_force_equilibrium, solve_equilibrium, solve_equilibrium_from, FlowProfile, Mode,
    SolverConfig,
};
use chargenet::fixtures;
use chargenet::network::aggregate_flows;
use chargenet::scenario::Scenario;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mode_for(sc: &Scenario) -> Mode {
    if sc.network.total_ev_demand() > 0.0 {
        Mode::Joint
    } else {
        Mode::NcdOnly
    }
}

/// Largest share difference over blocks that carry demand.
fn max_share_deviation(sc: &Scenario, a: &FlowProfile, b: &FlowProfile) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, od) in sc.network.od_pairs.iter().enumerate() {
        for (demand, ra, rb) in [(od.gamma_ev, &a.q[k], &b.q[k]), (od.gamma_ncd, &a.q0[k], &b.q0[k])] {
            if demand > 0.0 {
                worst = ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
            }
        }
    }
    worst
}

#[test]
fn solver_matches_grid_oracle() {
    for (name, sc, d) in fixtures::oracle_cases() {
        let solved = solve_equilibrium(&sc, &d, &mode_for(&sc), &SolverConfig::default()).unwrap();
        assert!(solved.converged, "{name}");
        let oracle = brute_force_equilibrium(&sc, &d, 0.01).unwrap();
        let dev = max_share_deviation(&sc, &solved.profile, &oracle);
        assert!(dev <= 0.011, "{name}: share deviation {dev}");
        let t_solved = social_cost(&sc, &d, &solved.profile).unwrap();
        let t_oracle = social_cost(&sc, &d, &oracle).unwrap();
        assert!(((t_solved - t_oracle) / t_oracle).abs() <= 1e-3, "{name}: {t_solved} vs {t_oracle}");
    }
}

#[test]
fn link_flows_conserve_demand() {
    for seed in 0..20 {
        let sc = fixtures::random_grid(seed);
        let d = fixtures::random_design(&sc, seed, false);
        let r = solve_equilibrium(&sc, &d, &Mode::Joint, &SolverConfig::default()).unwrap();
        let flows = aggregate_flows(&sc.network, &r.profile).unwrap();
        let net = &sc.network;
        for &node in net.nodes() {
            let inflow: f64 = net.links().iter().zip(&flows.link_flow).filter(|(l, _)| l.to == node).map(|(_, v)| v).sum();
            let outflow: f64 = net.links().iter().zip(&flows.link_flow).filter(|(l, _)| l.from == node).map(|(_, v)| v).sum();
            let net_supply: f64 = net
                .od_pairs
                .iter()
                .map(|od| {
                    let g = od.total_demand();
                    (if od.origin == node { g } else { 0.0 }) - (if od.dest == node { g } else { 0.0 })
                })
                .sum();
            assert!((outflow - inflow - net_supply).abs() < 1e-9, "seed {seed} node {node}");
        }
        let charged: f64 = flows.station_load.iter().sum();
        assert!((charged - net.total_ev_demand()).abs() < 1e-9);
    }
}

#[test]
fn potential_gradient_is_strategy_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (name, sc, _) in fixtures::oracle_cases().into_iter().chain([("grid", fixtures::random_grid(3), Design::closed(0, DesignMode::Integer))]) {
        let d = fixtures::open_all(&sc, 2.0, 5.0);
        for _ in 0..20 {
            let mut p = FlowProfile::uniform(&sc.network);
            for v in p.q.iter_mut().chain(p.q0.iter_mut()).flatten() {
                *v = rng.gen_range(0.05..1.0);
            }
            let costs = strategy_costs(&sc, &d, &aggregate_flows(&sc.network, &p).unwrap()).unwrap();
            for (k, od) in sc.network.od_pairs.iter().enumerate() {
                for (ev, demand) in [(true, od.gamma_ev), (false, od.gamma_ncd)] {
                    if demand <= 0.0 {
                        continue;
                    }
                    let n = if ev { p.q[k].len() } else { p.q0[k].len() };
                    for s in 0..n {
                        let h = 1e-6;
                        let mut up = p.clone();
                        let mut down = p.clone();
                        if ev {
                            up.q[k][s] += h;
                            down.q[k][s] -= h;
                        } else {
                            up.q0[k][s] += h;
                            down.q0[k][s] -= h;
                        }
                        let fd = (potential(&sc, &d, &up).unwrap() - potential(&sc, &d, &down).unwrap())
                            / (2.0 * h * demand);
                        let c = if ev { costs.ev[k][s] } else { costs.ncd[k][s] };
                        assert!(((fd - c) / c).abs() < 1e-5, "{name}: fd {fd} vs cost {c}");
                    }
                }
            }
        }
    }
}

fn skewed_start(sc: &Scenario, d: &Design) -> FlowProfile {
    let mut p = FlowProfile::uniform(&sc.network);
    for (k, row) in p.q.iter_mut().enumerate() {
        row.iter_mut().for_each(|v| *v = 0.0);
        let last = sc.network.extended_paths[k].iter().rposition(|e| d.is_open(e.station));
        if let Some(s) = last {
            row[s] = 1.0;
        }
    }
    for row in p.q0.iter_mut() {
        let n = row.len();
        row.iter_mut().for_each(|v| *v = 0.0);
        if n > 0 {
            row[n - 1] = 1.0;
        }
    }
    p
}

#[test]
fn theta_does_not_depend_on_start() {
    let cfg = SolverConfig {
        tolerance: 1e-9,
        ..SolverConfig::default()
    };
    let mut cases = fixtures::oracle_cases();
    for seed in 0..10 {
        let sc = fixtures::random_grid(seed);
        let d = fixtures::random_design(&sc, seed, seed % 2 == 0);
        cases.push(("grid", sc, d));
    }
    for (name, sc, d) in cases {
        let mode = mode_for(&sc);
        let a = solve_equilibrium(&sc, &d, &mode, &cfg).unwrap();
        let start = skewed_start(&sc, &d);
        let b = solve_equilibrium_from(&sc, &d, &mode, &cfg, Some(&start)).unwrap();
        assert!(a.converged && b.converged, "{name}");
        assert!(((a.theta - b.theta) / a.theta).abs() <= 1e-4, "{name}: {} vs {}", a.theta, b.theta);
    }
}

fn certificate_holds(seed: u64) -> Result<(), TestCaseError> {
    let sc = fixtures::random_grid(seed);
    let d = fixtures::random_design(&sc, seed, seed.is_multiple_of(3));
    let r = solve_equilibrium(&sc, &d, &Mode::Joint, &SolverConfig::default()).unwrap();
    prop_assert!(r.converged, "seed {seed} did not converge: gap {}", r.gap);
    let costs = strategy_costs(&sc, &d, &aggregate_flows(&sc.network, &r.profile).unwrap()).unwrap();
    for (k, od) in sc.network.od_pairs.iter().enumerate() {
        for (demand, shares, c) in [
            (od.gamma_ev, &r.profile.q[k], &costs.ev[k]),
            (od.gamma_ncd, &r.profile.q0[k], &costs.ncd[k]),
        ] {
            if demand <= 0.0 {
                continue;
            }
            let min = c.iter().copied().fold(f64::INFINITY, f64::min);
            for (q, cost) in shares.iter().zip(c) {
                if *q > 1e-6 {
                    prop_assert!(*cost <= min * (1.0 + 1e-4), "seed {seed}: used cost {cost}, min {min}");
                }
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn used_strategies_are_cheapest(seed in any::<u64>()) {
        certificate_holds(seed)?;
    }

    #[test]
    fn shares_stay_on_the_simplex(seed in 0u64..10_000) {
        let sc = fixtures::random_grid(seed);
        let d = fixtures::random_design(&sc, seed, true);
        let r = solve_equilibrium(&sc, &d, &Mode::Joint, &SolverConfig::default()).unwrap();
        prop_assert!(r.profile.validate(&sc.network).is_ok());
        for (k, row) in r.profile.q.iter().enumerate() {
            for (s, &v) in row.iter().enumerate() {
                if !d.is_open(sc.network.extended_paths[k][s].station) {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
    }
}
