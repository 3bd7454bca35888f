//! Small hand-built and randomly generated scenarios for tests and examples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::BehaviourWeights;
use crate::network::{build_network, Link, NodeId, OdPair, RouteConfig};
use crate::scenario::{Scenario, SCENARIO_FORMAT_VERSION};

/// Economic parameters shared by the toy fixtures.
#[derive(Debug, Clone)]
pub struct Economics {
    pub weights: BehaviourWeights,
    pub mu: f64,
    pub pi: f64,
    pub budget: u32,
    pub e: f64,
    pub t: f64,
}

impl Default for Economics {
    fn default() -> Self {
        Self {
            weights: BehaviourWeights::default(),
            mu: 4.0,
            pi: 1.2,
            budget: 4,
            e: 5.0,
            t: 10.0,
        }
    }
}

pub fn assemble(
    nodes: &[NodeId],
    links: Vec<Link>,
    od_pairs: Vec<OdPair>,
    charging: &[NodeId],
    route_cfg: RouteConfig,
    econ: &Economics,
) -> Scenario {
    let network = build_network(nodes, links, od_pairs, charging, route_cfg)
        .expect("fixture network is valid");
    let n = network.nodes().len();
    let sc = Scenario {
        version: SCENARIO_FORMAT_VERSION,
        seed: 0,
        network,
        weights: econ.weights,
        mu: econ.mu,
        pi: econ.pi,
        budget: econ.budget,
        e: vec![econ.e; n],
        t: vec![econ.t; n],
    };
    sc.validate().expect("fixture scenario is valid");
    sc
}

pub fn link(id: u32, from: NodeId, to: NodeId, d: f64, c: f64) -> Link {
    Link { id, from, to, d, c }
}

pub fn od(origin: NodeId, dest: NodeId, gamma_ev: f64, gamma_ncd: f64) -> OdPair {
    OdPair {
        origin,
        dest,
        gamma_ev,
        gamma_ncd,
    }
}

/// Two parallel unit-capacity links 1 -> 2 of lengths `d1`, `d2`; node 2 can charge.
pub fn two_link(d1: f64, d2: f64, gamma_ev: f64, gamma_ncd: f64) -> Scenario {
    assemble(
        &[1, 2],
        vec![link(1, 1, 2, d1, 1.0), link(2, 1, 2, d2, 1.0)],
        vec![od(1, 2, gamma_ev, gamma_ncd)],
        &[2],
        RouteConfig::default(),
        &Economics::default(),
    )
}

/// One link 1 -> 2, one unit of EV demand charging at node 2.
pub fn single_link_ev(d: f64, c: f64, mu: f64) -> Scenario {
    assemble(
        &[1, 2],
        vec![link(1, 1, 2, d, c)],
        vec![od(1, 2, 1.0, 0.0)],
        &[2],
        RouteConfig::default(),
        &Economics {
            mu,
            ..Economics::default()
        },
    )
}

/// Chain 1 -> 2 -> 3 with `d = c = 1`, NCD demand 1 from 1 to 3.
pub fn chain3() -> Scenario {
    assemble(
        &[1, 2, 3],
        vec![link(1, 1, 2, 1.0, 1.0), link(2, 2, 3, 1.0, 1.0)],
        vec![od(1, 3, 0.0, 1.0)],
        &[],
        RouteConfig::default(),
        &Economics::default(),
    )
}

/// Two routes 1 -> 5 -> 2 and 1 -> 6 -> 2, one station at each midpoint.
/// Symmetric when `asym == 0`.
pub fn two_station(gamma_ev: f64, gamma_ncd: f64, asym: f64, econ: &Economics) -> Scenario {
    assemble(
        &[1, 2, 5, 6],
        vec![
            link(1, 1, 5, 1.0, 20.0),
            link(2, 5, 2, 1.0, 20.0),
            link(3, 1, 6, 1.0 + asym, 20.0),
            link(4, 6, 2, 1.0, 20.0),
        ],
        vec![od(1, 2, gamma_ev, gamma_ncd)],
        &[5, 6],
        RouteConfig::default(),
        econ,
    )
}

/// 3x3 grid with nodes 1..=9 row-major, links rightwards and downwards.
pub fn grid3x3_links(rng: &mut impl Rng) -> Vec<Link> {
    let mut links = Vec::new();
    let mut id = 1;
    for r in 0..3u32 {
        for c in 0..3u32 {
            let n = r * 3 + c + 1;
            if c < 2 {
                links.push(link(id, n, n + 1, rng.gen_range(0.5..2.0), rng.gen_range(5.0..20.0)));
                id += 1;
            }
            if r < 2 {
                links.push(link(id, n, n + 3, rng.gen_range(0.5..2.0), rng.gen_range(5.0..20.0)));
                id += 1;
            }
        }
    }
    links
}

/// Random 3x3 grid scenario with one or two O-D pairs, every node eligible.
pub fn random_grid(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let links = grid3x3_links(&mut rng);
    let mut ods = vec![od(1, 9, rng.gen_range(0.0..6.0), rng.gen_range(1.0..30.0))];
    if rng.gen_bool(0.5) {
        ods.push(od(
            [2, 4][rng.gen_range(0..2)],
            [6, 8][rng.gen_range(0..2)],
            rng.gen_range(0.0..6.0),
            rng.gen_range(1.0..30.0),
        ));
    }
    let econ = Economics {
        weights: BehaviourWeights {
            lambda1: rng.gen_range(0.5..2.0),
            lambda2: rng.gen_range(0.0..4.0),
            lambda3: rng.gen_range(0.0..4.0),
        },
        ..Economics::default()
    };
    let mut sc = assemble(
        &(1..=9).collect::<Vec<_>>(),
        links,
        ods,
        &(1..=9).collect::<Vec<_>>(),
        RouteConfig {
            max_routes_per_od: 4,
            max_hops: 6,
            ..RouteConfig::default()
        },
        &econ,
    );
    sc.seed = seed;
    for v in sc.e.iter_mut() {
        *v = rng.gen_range(4.0..8.0);
    }
    sc
}

/// A random design opening a few stations of `sc` with random counts and prices.
pub fn random_design(sc: &Scenario, seed: u64, relaxed: bool) -> crate::design::Design {
    use crate::design::{Design, DesignMode};
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mode = if relaxed {
        DesignMode::Relaxed
    } else {
        DesignMode::Integer
    };
    let mut d = Design::closed(sc.node_count(), mode);
    for i in sc.network.usable_stations() {
        if rng.gen_bool(0.6) {
            d.x[i] = if relaxed {
                rng.gen_range(0.2..3.0)
            } else {
                rng.gen_range(1..4) as f64
            };
            d.y[i] = rng.gen_range(0.0..10.0);
        }
    }
    // every EV pair needs at least one open option
    for (k, od) in sc.network.od_pairs.iter().enumerate() {
        if od.gamma_ev > 0.0 && !sc.network.extended_paths[k].iter().any(|p| d.is_open(p.station))
        {
            let s = sc.network.extended_paths[k][0].station;
            d.x[s] = 1.0;
            d.y[s] = 5.0;
        }
    }
    d
}

/// Every usable station open with `x` chargers at price `y`.
pub fn open_all(sc: &Scenario, x: f64, y: f64) -> crate::design::Design {
    use crate::design::{Design, DesignMode};
    let mut d = Design::closed(sc.node_count(), DesignMode::Integer);
    for i in sc.network.usable_stations() {
        d.x[i] = x;
        d.y[i] = y;
    }
    d
}

/// Three parallel links 1 -> 2 of different lengths and capacities, NCDs only.
pub fn three_link() -> Scenario {
    assemble(
        &[1, 2],
        vec![link(1, 1, 2, 1.0, 2.0), link(2, 1, 2, 1.5, 3.0), link(3, 1, 2, 2.0, 5.0)],
        vec![od(1, 2, 0.0, 4.0)],
        &[2],
        RouteConfig::default(),
        &Economics::default(),
    )
}

/// Instances small enough for [`brute_force_equilibrium`], each with the
/// design to solve under. Mixed classes on shared parallel links only pin
/// down link totals, so every case keeps per-strategy shares identifiable.
///
/// [`brute_force_equilibrium`]: crate::equilibrium::brute_force_equilibrium
pub fn oracle_cases() -> Vec<(&'static str, Scenario, crate::design::Design)> {
    use crate::design::{Design, DesignMode};
    let econ = Economics::default();
    let mut cases = Vec::new();

    let sc = two_link(1.0, 2.0, 0.0, 3.0);
    let d = Design::closed(sc.node_count(), DesignMode::Integer);
    cases.push(("two-link ncd", sc, d));

    let sc = two_link(1.0, 1.5, 2.0, 0.0);
    let d = open_all(&sc, 2.0, 6.0);
    cases.push(("two-link ev", sc, d));

    let sc = two_station(1.0, 2.0, 0.3, &econ);
    let d = open_all(&sc, 1.0, 6.5);
    cases.push(("two-station", sc, d));

    let sc = two_station(3.0, 1.0, 0.0, &econ);
    let mut d = open_all(&sc, 2.0, 6.0);
    d.y[sc.network.node_index(6).unwrap()] = 7.0;
    cases.push(("two-station priced apart", sc, d));

    let sc = two_station(2.0, 0.0, 0.5, &econ);
    let mut d = open_all(&sc, 1.0, 6.0);
    d.x[sc.network.node_index(5).unwrap()] = 3.0;
    cases.push(("two-station ev only", sc, d));

    let sc = three_link();
    let d = Design::closed(sc.node_count(), DesignMode::Integer);
    cases.push(("three-link", sc, d));
    cases
}
