//! Acceptance checks. Each check returns a [`Verdict`]; the `acceptance`
//! test target runs all of them and prints one line per check.
//!
//! The ND-like planning runs are expensive, so they are computed once in
//! [`NdSuite`] and shared by the rounding, decomposition, dominance and
//! constraint checks.

use std::time::Instant;

use chargenet::abompn::{integer_adjust, layer1_solve, penetration_rate, AbompnConfig, Method};
use chargenet::cost::{potential, social_cost, strategy_costs};
use chargenet::design::Design;
use chargenet::equilibrium::{
    brute_force_equilibrium, solve_equilibrium, solve_equilibrium_from, FlowProfile, Mode,
    SolverConfig,
};
use chargenet::fixtures;
use chargenet::generate::{generate_nd_like, NdParams};
use chargenet::io::{read_solution, write_scenario};
use chargenet::network::aggregate_flows;
use chargenet::planner::{PlannerSolution, PROFIT_TOL};
use chargenet::scenario::Scenario;
use chargenet::sweep::{parse_stations, plateau_start, plot_data, sweep_budget, SweepConfig, SweepRow};
use chargenet::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: u8,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:>2}. {:<34} {} ({:.1}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.seconds
        )
    }
}

fn timed(id: u8, title: &'static str, check: impl FnOnce() -> (bool, String)) -> Verdict {
    let t = Instant::now();
    let (pass, detail) = check();
    Verdict {
        id,
        title,
        pass,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn mode_for(sc: &Scenario) -> Mode {
    if sc.network.total_ev_demand() > 0.0 {
        Mode::Joint
    } else {
        Mode::NcdOnly
    }
}

fn tight() -> SolverConfig {
    SolverConfig {
        tolerance: 1e-9,
        certificate_tol: Some(1e-8),
        ..SolverConfig::default()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Largest share difference over blocks that carry demand.
fn share_deviation(sc: &Scenario, a: &FlowProfile, b: &FlowProfile, ev: bool, ncd: bool) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, od) in sc.network.od_pairs.iter().enumerate() {
        let mut blocks = Vec::new();
        if ev && od.gamma_ev > 0.0 {
            blocks.push((&a.q[k], &b.q[k]));
        }
        if ncd && od.gamma_ncd > 0.0 {
            blocks.push((&a.q0[k], &b.q0[k]));
        }
        for (ra, rb) in blocks {
            worst = ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
        }
    }
    worst
}

pub fn oracle_equivalence() -> Verdict {
    timed(1, "equilibrium oracle equivalence", || {
        let t = Instant::now();
        let cases = fixtures::oracle_cases();
        let (mut share, mut theta, mut ok) = (0.0f64, 0.0f64, true);
        for (_, sc, d) in &cases {
            let Ok(r) = solve_equilibrium(sc, d, &mode_for(sc), &SolverConfig::default()) else {
                ok = false;
                continue;
            };
            let Ok(oracle) = brute_force_equilibrium(sc, d, 0.01) else {
                ok = false;
                continue;
            };
            ok &= r.converged;
            share = share.max(share_deviation(sc, &r.profile, &oracle, true, true));
            let a = social_cost(sc, d, &r.profile).unwrap();
            let b = social_cost(sc, d, &oracle).unwrap();
            theta = theta.max(((a - b) / b).abs());
        }
        let secs = t.elapsed().as_secs_f64();
        (
            ok && cases.len() >= 5 && share <= 0.011 && theta <= 1e-3 && secs < 10.0,
            format!("{} fixtures, max share dev {share:.4} (<= 0.011), max theta dev {theta:.1e} (<= 1e-3)", cases.len()),
        )
    })
}

pub fn wardrop_certificate() -> Verdict {
    timed(2, "Wardrop certificate", || {
        let t = Instant::now();
        let (mut worst, mut failed, n) = (0.0f64, 0usize, 120u64);
        for seed in 0..n {
            let sc = fixtures::random_grid(seed);
            let d = fixtures::random_design(&sc, seed, seed % 3 == 0);
            let r = solve_equilibrium(&sc, &d, &Mode::Joint, &SolverConfig::default()).unwrap();
            if !r.converged {
                failed += 1;
                continue;
            }
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
                            worst = worst.max(cost / min - 1.0);
                        }
                    }
                }
            }
        }
        let secs = t.elapsed().as_secs_f64();
        (
            failed == 0 && worst <= 1e-4 && secs < 60.0,
            format!("{n} random scenarios, {failed} unconverged, worst used/min - 1 = {worst:.1e} (<= 1e-4)"),
        )
    })
}

pub fn potential_gradient() -> Verdict {
    timed(3, "potential gradient", || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut scenarios: Vec<Scenario> = fixtures::oracle_cases().into_iter().map(|c| c.1).collect();
        scenarios.extend((0..3).map(fixtures::random_grid));
        let mut worst: f64 = 0.0;
        let mut points = 0;
        for sc in &scenarios {
            let d = fixtures::open_all(sc, 2.0, 5.0);
            for _ in 0..20 {
                points += 1;
                let mut p = FlowProfile::uniform(&sc.network);
                for v in p.q.iter_mut().chain(p.q0.iter_mut()).flatten() {
                    *v = rng.gen_range(0.05..1.0);
                }
                let costs = strategy_costs(sc, &d, &aggregate_flows(&sc.network, &p).unwrap()).unwrap();
                for (k, od) in sc.network.od_pairs.iter().enumerate() {
                    for (ev, demand) in [(true, od.gamma_ev), (false, od.gamma_ncd)] {
                        if demand <= 0.0 {
                            continue;
                        }
                        let n = if ev { p.q[k].len() } else { p.q0[k].len() };
                        for s in 0..n {
                            let h = 1e-6;
                            let (mut up, mut down) = (p.clone(), p.clone());
                            let (u, w) = if ev {
                                (&mut up.q[k][s], &mut down.q[k][s])
                            } else {
                                (&mut up.q0[k][s], &mut down.q0[k][s])
                            };
                            *u += h;
                            *w -= h;
                            let fd = (potential(sc, &d, &up).unwrap() - potential(sc, &d, &down).unwrap())
                                / (2.0 * h * demand);
                            let c = if ev { costs.ev[k][s] } else { costs.ncd[k][s] };
                            worst = worst.max(((fd - c) / c).abs());
                        }
                    }
                }
            }
        }
        (
            worst < 1e-5,
            format!("{} fixtures, {points} points, max relative error {worst:.1e} (< 1e-5)", scenarios.len()),
        )
    })
}

fn corner_start(sc: &Scenario, d: &Design) -> FlowProfile {
    let mut p = FlowProfile::uniform(&sc.network);
    for (k, row) in p.q.iter_mut().enumerate() {
        row.iter_mut().for_each(|v| *v = 0.0);
        if let Some(s) = sc.network.extended_paths[k].iter().rposition(|e| d.is_open(e.station)) {
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

pub fn theta_uniqueness() -> Verdict {
    timed(4, "theta uniqueness", || {
        let mut cases = fixtures::oracle_cases();
        for seed in 0..20 {
            let sc = fixtures::random_grid(seed);
            let d = fixtures::random_design(&sc, seed, seed % 2 == 0);
            cases.push(("grid", sc, d));
        }
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for (_, sc, d) in &cases {
            let mode = mode_for(sc);
            let a = solve_equilibrium(sc, d, &mode, &tight()).unwrap();
            let b = solve_equilibrium_from(sc, d, &mode, &tight(), Some(&corner_start(sc, d))).unwrap();
            ok &= a.converged && b.converged;
            worst = worst.max(((a.theta - b.theta) / a.theta).abs());
        }
        (
            ok && worst <= 1e-4,
            format!("{} fixtures, max relative theta spread {worst:.1e} (<= 1e-4)", cases.len()),
        )
    })
}

/// One ND-like instance planned with every method.
pub struct NdCase {
    pub label: String,
    pub scenario: Scenario,
    pub runs: Vec<(Method, Result<PlannerSolution>)>,
}

impl NdCase {
    pub fn get(&self, m: Method) -> Option<&PlannerSolution> {
        self.runs.iter().find(|(k, _)| *k == m).and_then(|(_, r)| r.as_ref().ok())
    }
}

pub struct NdSuite {
    pub cases: Vec<NdCase>,
    pub seconds: f64,
}

/// Seeds 1..=12 crossed with lambda2 in {0.5, 2, 4} and B in {3, 7}.
pub fn nd_suite() -> NdSuite {
    let t = Instant::now();
    let cfg = AbompnConfig::default();
    let cases = (1..=12u64)
        .map(|seed| {
            let lambda2 = [0.5, 2.0, 4.0][(seed % 3) as usize];
            let budget = [3, 7][(seed % 2) as usize];
            let mut params = NdParams {
                budget,
                ..NdParams::default()
            };
            params.weights.lambda2 = lambda2;
            let scenario = generate_nd_like(seed, &params);
            let runs = Method::ALL.iter().map(|&m| (m, layer1_solve(&scenario, m, &cfg))).collect();
            NdCase {
                label: format!("seed {seed} lambda2 {lambda2} B {budget}"),
                scenario,
                runs,
            }
        })
        .collect();
    NdSuite {
        cases,
        seconds: t.elapsed().as_secs_f64(),
    }
}

pub fn rounding_gap(suite: &NdSuite) -> Verdict {
    let mut v = timed(5, "rounding gap", || {
        let mut gaps = Vec::new();
        let mut missing = Vec::new();
        for c in &suite.cases {
            match c.get(Method::Abompn).and_then(|s| s.rounding_gap()) {
                Some(g) => gaps.push(g),
                None => missing.push(c.label.clone()),
            }
        }
        let worst = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (
            missing.is_empty() && gaps.len() >= 10 && worst < 0.01,
            format!(
                "{} instances, max gap {:.3}%, median {:.3}% (< 1%){}",
                gaps.len(),
                100.0 * worst,
                100.0 * median(gaps.clone()),
                if missing.is_empty() { String::new() } else { format!(", no gap for {missing:?}") }
            ),
        )
    });
    v.seconds += suite.seconds;
    v
}

/// Decomposed NCD shares against a joint re-solve for the same design,
/// started from the decomposed profile so ties resolve toward it.
pub fn decomposition_accuracy(suite: &NdSuite) -> Verdict {
    timed(6, "decomposition accuracy", || {
        let mut devs = Vec::new();
        let mut theta_devs = Vec::new();
        for c in &suite.cases {
            let sc = &c.scenario;
            if penetration_rate(sc).unwrap() > 0.15 {
                continue;
            }
            let Some(sol) = c.get(Method::Abompn) else { continue };
            let joint = solve_equilibrium_from(sc, &sol.design, &Mode::Joint, &tight(), Some(&sol.profile)).unwrap();
            devs.push(share_deviation(sc, &sol.profile, &joint.profile, false, true));
            theta_devs.push(((sol.theta - joint.theta) / joint.theta).abs());
        }
        let worst = devs.iter().copied().fold(0.0, f64::max);
        (
            devs.len() >= 10 && worst < 0.01,
            format!(
                "{} instances, max NCD share gap {worst:.4}, median {:.4} (< 0.01); theta gap max {:.3}%",
                devs.len(),
                median(devs.clone()),
                100.0 * theta_devs.iter().copied().fold(0.0, f64::max)
            ),
        )
    })
}

pub fn joint_dominance(suite: &NdSuite) -> Verdict {
    timed(7, "joint dominance", || {
        let mut compared = 0;
        let mut violations = Vec::new();
        let mut gains = Vec::new();
        for c in &suite.cases {
            let sols: Vec<_> = Method::ALL.iter().map(|&m| c.get(m).filter(|s| s.evaluation.feasible)).collect();
            let [Some(joint), Some(price), Some(place)] = sols[..] else { continue };
            compared += 1;
            let best = price.theta.min(place.theta);
            if joint.theta > best + 1e-6 {
                violations.push(c.label.clone());
            }
            gains.push((best - joint.theta) / best);
        }
        (
            violations.is_empty() && compared > 0,
            format!(
                "{compared} instances with all methods feasible, {} violations; median gain over better baseline {:.2}% (target 10%, not gated)",
                violations.len(),
                100.0 * median(gains)
            ),
        )
    })
}

pub struct SweepSuite {
    pub rows: Vec<(Scenario, Vec<SweepRow>)>,
}

pub fn budget_plateau() -> (Verdict, SweepSuite) {
    let mut rows = Vec::new();
    let v = timed(8, "budget monotonicity and plateau", || {
        let cfg = SweepConfig {
            budgets: (1..=12).collect(),
            methods: vec![Method::Abompn],
            replications: 2,
            planner: AbompnConfig::default(),
        };
        let mut ok = true;
        let mut notes = Vec::new();
        for seed in [1u64, 2] {
            let sc = generate_nd_like(seed, &NdParams::default());
            let r = match sweep_budget(&sc, &cfg, None) {
                Ok(r) => r,
                Err(e) => {
                    ok = false;
                    notes.push(format!("seed {seed}: {e}"));
                    continue;
                }
            };
            let errors = r.iter().filter(|row| row.error.is_some()).count();
            let curve: Vec<(u32, f64)> = plot_data(&r).iter().map(|p| (p.budget, p.mean_theta)).collect();
            let rise = curve
                .windows(2)
                .map(|w| (w[1].1 - w[0].1) / w[0].1)
                .fold(f64::NEG_INFINITY, f64::max);
            let plateau = plateau_start(&curve, 1e-3);
            ok &= errors == 0 && curve.len() == 12 && rise <= 1e-4 && plateau.is_some();
            notes.push(format!(
                "seed {seed}: B*={} max rise {rise:.1e}{}",
                plateau.map_or("none".into(), |b| b.to_string()),
                if errors > 0 { format!(" ({errors} failed cells)") } else { String::new() }
            ));
            rows.push((sc, r));
        }
        (ok, notes.join("; "))
    });
    (v, SweepSuite { rows })
}

pub fn rounding_laws() -> Verdict {
    timed(9, "rounding algorithm laws", || {
        let t = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut bad = 0;
        for _ in 0..1000 {
            let n = rng.gen_range(1..15);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
            let total: f64 = x.iter().sum();
            let budget = total.ceil() as u32 + rng.gen_range(0..3);
            let Ok(out) = integer_adjust(&x, budget) else {
                bad += 1;
                continue;
            };
            let preserved = out.iter().sum::<f64>() == total.round();
            let close = x.iter().zip(&out).all(|(a, b)| (a - b).abs() < 1.0 && b.fract() == 0.0);
            let idempotent = integer_adjust(&out, budget).is_ok_and(|again| again == out);
            if !(preserved && close && idempotent) {
                bad += 1;
            }
        }
        let secs = t.elapsed().as_secs_f64();
        (bad == 0 && secs < 1.0, format!("1000 vectors, {bad} violations"))
    })
}

pub fn determinism() -> (Verdict, Option<PlannerSolution>) {
    let mut emitted = None;
    let v = timed(10, "plan determinism", || {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nd.txt");
        write_scenario(&path, &generate_nd_like(1, &NdParams { budget: 7, ..NdParams::default() })).unwrap();
        let sc = path.to_str().unwrap();
        let outs: Vec<_> = ["a.txt", "b.txt", "c.txt"]
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let out = dir.path().join(name);
                let mut args = vec!["chargenet", "plan", sc, "--seed", "5", "--out", out.to_str().unwrap()];
                if k == 2 {
                    args.extend(["--threads", "1"]);
                }
                let run = chargenet_cli::execute(args);
                (run.exit_code, run.stdout, std::fs::read(&out).unwrap_or_default())
            })
            .collect();
        let same = outs.windows(2).all(|w| w[0] == w[1]);
        let ok = outs[0].0 == 0 && !outs[0].2.is_empty();
        emitted = read_solution(&dir.path().join("a.txt")).ok();
        (
            same && ok,
            format!("3 runs of `plan --seed 5`, solution files {} bytes, identical: {same}", outs[0].2.len()),
        )
    });
    (v, emitted)
}

pub fn constraint_safety(suite: &NdSuite, sweeps: &SweepSuite, extra: Option<&PlannerSolution>) -> Verdict {
    timed(11, "constraint safety", || {
        let mut checked = 0;
        let mut bad = Vec::new();
        let mut check = |label: String, sol: &PlannerSolution, budget: u32| {
            if !sol.evaluation.feasible {
                return;
            }
            checked += 1;
            let total: f64 = sol.design.x.iter().sum();
            let integral = sol.design.x.iter().all(|v| v.fract() == 0.0);
            if !(total <= f64::from(budget) && integral && sol.evaluation.min_open_slack(&sol.design) >= -PROFIT_TOL) {
                bad.push(label);
            }
        };
        for c in &suite.cases {
            for (m, r) in &c.runs {
                if let Ok(sol) = r {
                    check(format!("{} {m}", c.label), sol, c.scenario.budget);
                }
            }
        }
        if let Some(sol) = extra {
            check("cli plan".into(), sol, 7);
        }
        let mut sweep_checked = 0;
        for (sc, rows) in &sweeps.rows {
            for row in rows.iter().filter(|r| r.feasible) {
                sweep_checked += 1;
                let d = parse_stations(&row.stations, sc).unwrap();
                if d.x.iter().sum::<f64>() > f64::from(row.budget) {
                    bad.push(format!("sweep B {}", row.budget));
                }
            }
        }
        (
            bad.is_empty() && checked > 0,
            format!("{checked} solutions and {sweep_checked} sweep cells checked, {} violations {bad:?}", bad.len()),
        )
    })
}
