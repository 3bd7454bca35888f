//! Agent cost functions, social cost and the Beckmann-style potential.
//!
//! Link travel time is linear in total flow, `f = d * v / c`. Station delay is
//! `load / (x * mu)`, linear in load and inversely proportional to the number
//! of chargers, so the potential stays a convex quadratic.

use crate::design::{Design, DesignMode};
use crate::equilibrium::FlowProfile;
use crate::error::{Error, Result};
use crate::network::{aggregate_flows, Aggregates, ExtendedPath, Link, Network, Route};
use crate::scenario::Scenario;

/// Floor on charger counts inside the delay formula.
pub const MIN_CHARGERS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviourWeights {
    /// Travel time weight.
    pub lambda1: f64,
    /// Queueing delay weight.
    pub lambda2: f64,
    /// Charging fee weight.
    pub lambda3: f64,
}

impl Default for BehaviourWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 2.0,
            lambda3: 3.0,
        }
    }
}

impl BehaviourWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.lambda1) && ok(self.lambda2) && ok(self.lambda3)) {
            return Err(Error::Validation("behaviour weights must be non-negative".into()));
        }
        if self.lambda1 <= 0.0 {
            return Err(Error::Validation("lambda1 must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub travel: f64,
    pub queue: f64,
    pub fee: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(travel: f64, queue: f64, fee: f64, w: &BehaviourWeights) -> Self {
        Self {
            travel,
            queue,
            fee,
            total: w.lambda1 * travel + w.lambda2 * queue + w.lambda3 * fee,
        }
    }
}

pub fn link_travel_time(link: &Link, total_flow: f64) -> Result<f64> {
    if total_flow < 0.0 {
        return Err(Error::NegativeFlow(total_flow));
    }
    Ok(link.d * total_flow / link.c)
}

pub fn queue_delay(load: f64, chargers: f64, mu: f64) -> f64 {
    load / (chargers.max(MIN_CHARGERS) * mu)
}

fn route_travel_time(network: &Network, route: &Route, link_flows: &[f64]) -> Result<f64> {
    route
        .links
        .iter()
        .map(|&l| link_travel_time(&network.links()[l], link_flows[l]))
        .sum()
}

pub fn ev_path_cost(
    scenario: &Scenario,
    path: &ExtendedPath,
    flows: &Aggregates,
    design: &Design,
) -> Result<CostBreakdown> {
    let network = &scenario.network;
    let i = path.station;
    if design.mode == DesignMode::Integer && !design.is_open(i) {
        return Err(Error::StationClosed(path.charge_node));
    }
    let travel = route_travel_time(network, network.route_of(path), &flows.link_flow)?;
    let queue = queue_delay(flows.station_load[i], design.x[i], scenario.mu);
    Ok(CostBreakdown::new(travel, queue, design.y[i], &scenario.weights))
}

pub fn ncd_route_cost(
    network: &Network,
    route: &Route,
    link_flows: &[f64],
    weights: &BehaviourWeights,
) -> Result<f64> {
    Ok(weights.lambda1 * route_travel_time(network, route, link_flows)?)
}

/// Per-strategy costs at one flow state. EV strategies at stations without
/// chargers cost `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyCosts {
    pub ev: Vec<Vec<f64>>,
    pub ncd: Vec<Vec<f64>>,
}

pub fn strategy_costs(
    scenario: &Scenario,
    design: &Design,
    flows: &Aggregates,
) -> Result<StrategyCosts> {
    let network = &scenario.network;
    let mut ev = Vec::with_capacity(network.od_pairs.len());
    let mut ncd = Vec::with_capacity(network.od_pairs.len());
    for k in 0..network.od_pairs.len() {
        let mut row = Vec::with_capacity(network.extended_paths[k].len());
        for path in &network.extended_paths[k] {
            if design.is_open(path.station) {
                row.push(ev_path_cost(scenario, path, flows, design)?.total);
            } else {
                row.push(f64::INFINITY);
            }
        }
        ev.push(row);
        ncd.push(
            network.routes[k]
                .iter()
                .map(|r| ncd_route_cost(network, r, &flows.link_flow, &scenario.weights))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(StrategyCosts { ev, ncd })
}

fn expected(shares: &[f64], costs: &[f64]) -> f64 {
    shares
        .iter()
        .zip(costs)
        .filter(|(&q, _)| q > 0.0)
        .map(|(q, c)| q * c)
        .sum()
}

/// Expected per-O-D cost of each class: `(C_w for EVs, C0_w for NCDs)`.
pub fn expected_class_costs(
    profile: &FlowProfile,
    costs: &StrategyCosts,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if profile.q.len() != costs.ev.len() || profile.q0.len() != costs.ncd.len() {
        return Err(Error::DimensionMismatch(
            "profile and cost tables cover different O-D sets".into(),
        ));
    }
    let mut ev = Vec::with_capacity(costs.ev.len());
    let mut ncd = Vec::with_capacity(costs.ncd.len());
    for k in 0..costs.ev.len() {
        if profile.q[k].len() != costs.ev[k].len() || profile.q0[k].len() != costs.ncd[k].len() {
            return Err(Error::DimensionMismatch(format!("O-D {k}: share/cost length")));
        }
        ev.push(expected(&profile.q[k], &costs.ev[k]));
        ncd.push(expected(&profile.q0[k], &costs.ncd[k]));
    }
    Ok((ev, ncd))
}

pub fn social_cost(scenario: &Scenario, design: &Design, profile: &FlowProfile) -> Result<f64> {
    let flows = aggregate_flows(&scenario.network, profile)?;
    let costs = strategy_costs(scenario, design, &flows)?;
    let (ev, ncd) = expected_class_costs(profile, &costs)?;
    Ok(scenario
        .network
        .od_pairs
        .iter()
        .enumerate()
        .map(|(k, od)| {
            let ev_part = if od.gamma_ev > 0.0 { od.gamma_ev * ev[k] } else { 0.0 };
            ev_part + od.gamma_ncd * ncd[k]
        })
        .sum())
}

/// Potential whose gradient with respect to a strategy's flow is that
/// strategy's cost.
pub fn potential(scenario: &Scenario, design: &Design, profile: &FlowProfile) -> Result<f64> {
    let flows = aggregate_flows(&scenario.network, profile)?;
    Ok(potential_at(scenario, design, &flows))
}

pub fn potential_at(scenario: &Scenario, design: &Design, flows: &Aggregates) -> f64 {
    let w = &scenario.weights;
    let road: f64 = scenario
        .network
        .links()
        .iter()
        .zip(&flows.link_flow)
        .map(|(l, &v)| l.d * v * v / (2.0 * l.c))
        .sum();
    let mut queue = 0.0;
    let mut fees = 0.0;
    for (i, &load) in flows.station_load.iter().enumerate() {
        if load == 0.0 {
            continue;
        }
        queue += load * load / (2.0 * design.x[i].max(MIN_CHARGERS) * scenario.mu);
        fees += load * design.y[i];
    }
    w.lambda1 * road + w.lambda2 * queue + w.lambda3 * fees
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn link(d: f64, c: f64) -> Link {
        Link {
            id: 1,
            from: 1,
            to: 2,
            d,
            c,
        }
    }

    #[test]
    fn link_travel_time_examples() {
        assert_eq!(link_travel_time(&link(1.0, 1.0), 0.0).unwrap(), 0.0);
        assert_eq!(link_travel_time(&link(2.0, 200.0), 100.0).unwrap(), 1.0);
        let t = link_travel_time(&link(1.5, 200.0), 230.0).unwrap();
        // 1.5 * 230 = 345, / 200
        assert!((t - 345.0 / 200.0).abs() < 1e-12);
        assert!((t - 1.725).abs() < 1e-12);
        assert_eq!(
            link_travel_time(&link(1.0, 1.0), -1.0),
            Err(Error::NegativeFlow(-1.0))
        );
    }

    #[test]
    fn queue_delay_examples() {
        assert_eq!(queue_delay(0.0, 3.0, 4.0), 0.0);
        assert_eq!(queue_delay(8.0, 2.0, 4.0), 1.0);
        assert_eq!(queue_delay(15.0, 1.0, 4.0), 3.75);
        assert!(queue_delay(1.0, 0.0, 4.0).is_finite());
        assert!(queue_delay(2.0, 1.0, 4.0) > queue_delay(1.0, 1.0, 4.0));
        assert!(queue_delay(2.0, 2.0, 4.0) < queue_delay(2.0, 1.0, 4.0));
    }

    #[test]
    fn ev_path_cost_single_link() {
        // one link d=1, c=1; EVs charge at the destination
        let sc = fixtures::single_link_ev(1.0, 1.0, 4.0);
        let mut design = Design::closed(sc.node_count(), DesignMode::Integer);
        let dest = sc.network.node_index(2).unwrap();
        design.x[dest] = 1.0;
        design.y[dest] = 5.0;
        let mut flows = Aggregates {
            link_flow: vec![2.0],
            station_load: vec![0.0; 2],
        };
        flows.station_load[dest] = 4.0;
        let path = &sc.network.extended_paths[0][0];
        let b = ev_path_cost(&sc, path, &flows, &design).unwrap();
        assert_eq!((b.travel, b.queue, b.fee), (2.0, 1.0, 5.0));
        assert_eq!(b.total, 2.0 + 2.0 * 1.0 + 3.0 * 5.0);

        design.x[dest] = 0.0;
        design.y[dest] = 0.0;
        assert_eq!(
            ev_path_cost(&sc, path, &flows, &design),
            Err(Error::StationClosed(2))
        );
    }

    #[test]
    fn ev_cost_degenerates_to_ncd_cost() {
        let mut sc = fixtures::single_link_ev(1.0, 1.0, 4.0);
        sc.weights = BehaviourWeights {
            lambda1: 1.0,
            lambda2: 0.0,
            lambda3: 0.0,
        };
        let mut design = Design::closed(sc.node_count(), DesignMode::Relaxed);
        design.x[1] = 2.0;
        design.y[1] = 9.0;
        let flows = Aggregates {
            link_flow: vec![3.5],
            station_load: vec![0.0, 1.0],
        };
        let ev = ev_path_cost(&sc, &sc.network.extended_paths[0][0], &flows, &design).unwrap();
        let ncd =
            ncd_route_cost(&sc.network, &sc.network.routes[0][0], &flows.link_flow, &sc.weights)
                .unwrap();
        assert_eq!(ev.total, ncd);
        assert_eq!(ncd, 3.5);
    }

    #[test]
    fn zero_flows_cost_nothing() {
        let sc = fixtures::single_link_ev(1.0, 1.0, 4.0);
        let mut design = Design::closed(sc.node_count(), DesignMode::Relaxed);
        design.x[1] = 1.0;
        let flows = Aggregates {
            link_flow: vec![0.0],
            station_load: vec![0.0; 2],
        };
        let b = ev_path_cost(&sc, &sc.network.extended_paths[0][0], &flows, &design).unwrap();
        assert_eq!(b.total, 0.0);
        let r = &sc.network.routes[0][0];
        assert_eq!(ncd_route_cost(&sc.network, r, &flows.link_flow, &sc.weights).unwrap(), 0.0);
    }

    #[test]
    fn ncd_cost_sums_links() {
        let sc = fixtures::chain3();
        let route = &sc.network.routes[0][0];
        assert_eq!(route.links.len(), 2);
        // chain links have d = c, so f_l equals the flow
        let mut flows = vec![0.0; sc.network.links().len()];
        flows[route.links[0]] = 1.0;
        flows[route.links[1]] = 0.5;
        let c = ncd_route_cost(&sc.network, route, &flows, &sc.weights).unwrap();
        assert!((c - 1.5).abs() < 1e-12);
    }

    #[test]
    fn expected_costs() {
        let costs = StrategyCosts {
            ev: vec![vec![10.0, 20.0]],
            ncd: vec![vec![3.0, f64::INFINITY]],
        };
        let profile = FlowProfile {
            q: vec![vec![0.5, 0.5]],
            q0: vec![vec![1.0, 0.0]],
        };
        let (ev, ncd) = expected_class_costs(&profile, &costs).unwrap();
        assert_eq!(ev, vec![15.0]);
        assert_eq!(ncd, vec![3.0]);
    }

    #[test]
    fn social_cost_two_link_equilibrium() {
        let sc = fixtures::two_link(1.0, 2.0, 0.0, 3.0);
        let design = Design::closed(sc.node_count(), DesignMode::Integer);
        // the d=1 link is route 0
        let profile = FlowProfile {
            q: FlowProfile::uniform(&sc.network).q,
            q0: vec![vec![2.0 / 3.0, 1.0 / 3.0]],
        };
        let theta = social_cost(&sc, &design, &profile).unwrap();
        assert!((theta - 6.0).abs() < 1e-12);
    }

    #[test]
    fn potential_minimizer_on_two_link_toy() {
        let sc = fixtures::two_link(1.0, 2.0, 0.0, 3.0);
        let design = Design::closed(sc.node_count(), DesignMode::Integer);
        let phi = |s: f64| {
            potential(
                &sc,
                &design,
                &FlowProfile {
                    q: FlowProfile::uniform(&sc.network).q,
                    q0: vec![vec![s, 1.0 - s]],
                },
            )
            .unwrap()
        };
        assert!(phi(0.0).min(phi(1.0)) > 0.0);
        // golden-section search on the share of the short link
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if phi(a) < phi(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let s = 0.5 * (lo + hi);
        assert!((3.0 * s - 2.0).abs() < 1e-6, "flow on short link {}", 3.0 * s);
    }
}
