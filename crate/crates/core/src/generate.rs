//! Deterministic scenario generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::BehaviourWeights;
use crate::network::{build_network, Link, NodeId, OdPair, RouteConfig};
use crate::scenario::{Scenario, SCENARIO_FORMAT_VERSION};

/// The 19 links of the Nguyen-Dupuis network as `(from, to)`.
pub const ND_LINKS: [(NodeId, NodeId); 19] = [
    (1, 5),
    (1, 12),
    (4, 5),
    (4, 9),
    (5, 6),
    (5, 9),
    (6, 7),
    (6, 10),
    (7, 8),
    (7, 11),
    (8, 2),
    (9, 10),
    (9, 13),
    (10, 11),
    (11, 2),
    (11, 3),
    (12, 6),
    (12, 8),
    (13, 3),
];

pub const ND_OD_PAIRS: [(NodeId, NodeId); 4] = [(1, 2), (1, 3), (4, 2), (4, 3)];

/// Electricity price ranges: non-O-D nodes, O-D nodes.
pub const ND_E_NON_OD: (f64, f64) = (5.0, 7.0);
pub const ND_E_OD: (f64, f64) = (11.0, 15.0);

/// Link lengths are not part of the published instance; they are drawn from
/// this range so travel time, queueing and fees stay comparable in size.
pub const ND_LENGTH_RANGE: (f64, f64) = (1.0, 3.0);

#[derive(Debug, Clone, PartialEq)]
pub struct NdParams {
    pub weights: BehaviourWeights,
    pub capacity: f64,
    pub mu: f64,
    pub t: f64,
    pub pi: f64,
    pub gamma_ev: f64,
    pub gamma_ncd: f64,
    pub budget: u32,
    pub route_cfg: RouteConfig,
}

impl Default for NdParams {
    fn default() -> Self {
        Self {
            weights: BehaviourWeights {
                lambda1: 1.0,
                lambda2: 2.0,
                lambda3: 3.0,
            },
            capacity: 200.0,
            mu: 4.0,
            t: 10.0,
            pi: 1.2,
            gamma_ev: 15.0,
            gamma_ncd: 100.0,
            budget: 10,
            route_cfg: RouteConfig {
                max_routes_per_od: 3,
                max_hops: 8,
                max_routes_total: Some(10),
                charge_at_origin: false,
            },
        }
    }
}

/// Nguyen-Dupuis topology (13 nodes, 19 links, 4 O-D pairs) with seeded link
/// lengths and electricity prices. Every node except the two origins can host
/// chargers.
pub fn generate_nd_like(seed: u64, params: &NdParams) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let links: Vec<Link> = ND_LINKS
        .iter()
        .enumerate()
        .map(|(k, &(from, to))| Link {
            id: k as u32 + 1,
            from,
            to,
            d: rng.gen_range(ND_LENGTH_RANGE.0..ND_LENGTH_RANGE.1),
            c: params.capacity,
        })
        .collect();
    let nodes: Vec<NodeId> = (1..=13).collect();
    let od_pairs: Vec<OdPair> = ND_OD_PAIRS
        .iter()
        .map(|&(origin, dest)| OdPair {
            origin,
            dest,
            gamma_ev: params.gamma_ev,
            gamma_ncd: params.gamma_ncd,
        })
        .collect();
    let charging: Vec<NodeId> = nodes.iter().copied().filter(|&n| n != 1 && n != 4).collect();
    let network = build_network(&nodes, links, od_pairs, &charging, params.route_cfg.clone())
        .expect("Nguyen-Dupuis topology is connected");
    let e = draw_electricity(&mut rng, &nodes, &network.od_pairs);
    let n = nodes.len();
    Scenario {
        version: SCENARIO_FORMAT_VERSION,
        seed,
        network,
        weights: params.weights,
        mu: params.mu,
        pi: params.pi,
        budget: params.budget,
        e,
        t: vec![params.t; n],
    }
}

fn draw_electricity(rng: &mut impl Rng, nodes: &[NodeId], od_pairs: &[OdPair]) -> Vec<f64> {
    nodes
        .iter()
        .map(|&n| {
            let is_od = od_pairs.iter().any(|od| od.origin == n || od.dest == n);
            let (lo, hi) = if is_od { ND_E_OD } else { ND_E_NON_OD };
            rng.gen_range(lo..=hi)
        })
        .collect()
}

/// Copy of `scenario` with electricity prices redrawn from the O-D /
/// non-O-D ranges using `seed`.
pub fn redraw_electricity(scenario: &Scenario, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = scenario.clone();
    out.e = draw_electricity(&mut rng, scenario.network.nodes(), &scenario.network.od_pairs);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_instance_shape() {
        let sc = generate_nd_like(1, &NdParams::default());
        sc.validate().unwrap();
        assert_eq!(sc.network.nodes().len(), 13);
        assert_eq!(sc.network.links().len(), 19);
        assert_eq!(sc.network.od_pairs.len(), 4);
        assert_eq!(sc.network.route_count(), 10);
        for (i, &n) in sc.network.nodes().iter().enumerate() {
            let (lo, hi) = if n <= 4 { ND_E_OD } else { ND_E_NON_OD };
            assert!((lo..=hi).contains(&sc.e[i]), "node {n} e={}", sc.e[i]);
        }
        for l in sc.network.links() {
            assert!((1.0..3.0).contains(&l.d));
            assert_eq!(l.c, 200.0);
        }
        assert_eq!(sc.weights, BehaviourWeights { lambda1: 1.0, lambda2: 2.0, lambda3: 3.0 });
        assert_eq!((sc.mu, sc.pi), (4.0, 1.2));
        assert!(sc.t.iter().all(|&t| t == 10.0));
        assert!(sc.network.od_pairs.iter().all(|od| od.gamma_ev == 15.0 && od.gamma_ncd == 100.0));
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(
            generate_nd_like(7, &NdParams::default()),
            generate_nd_like(7, &NdParams::default())
        );
        assert_ne!(
            generate_nd_like(7, &NdParams::default()).e,
            generate_nd_like(8, &NdParams::default()).e
        );
    }

    #[test]
    fn budget_override() {
        let a = generate_nd_like(3, &NdParams { budget: 3, ..NdParams::default() });
        let b = generate_nd_like(3, &NdParams::default());
        assert_eq!(a.budget, 3);
        assert_eq!(a.with_budget(b.budget), b);
    }

    #[test]
    fn redraw_keeps_partition() {
        let sc = generate_nd_like(3, &NdParams::default());
        let r = redraw_electricity(&sc, 99);
        assert_ne!(r.e, sc.e);
        for (i, &n) in r.network.nodes().iter().enumerate() {
            let (lo, hi) = if n <= 4 { ND_E_OD } else { ND_E_NON_OD };
            assert!((lo..=hi).contains(&r.e[i]));
        }
    }
}
