//! Road graph, O-D demand, route enumeration and extended paths.
//!
//! An extended path pairs a route with the node where the EV driver charges.
//! Routes and extended paths are kept in a canonical order so that strategy
//! indices are stable across runs: routes by `(length, node sequence, link
//! ids)`, extended paths by `(route index, charge node id)`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::equilibrium::FlowProfile;
use crate::error::{Error, Result};

pub type NodeId = u32;
pub type LinkId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    /// Length, distance units.
    pub d: f64,
    /// Capacity, vehicles per unit time.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdPair {
    pub origin: NodeId,
    pub dest: NodeId,
    pub gamma_ev: f64,
    pub gamma_ncd: f64,
}

impl OdPair {
    pub fn total_demand(&self) -> f64 {
        self.gamma_ev + self.gamma_ncd
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub od: usize,
    /// Indices into [`Network::links`], in travel order.
    pub links: Vec<usize>,
    pub nodes: Vec<NodeId>,
    /// Free-flow key used for ranking: sum of link lengths.
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedPath {
    pub od: usize,
    /// Index into the O-D pair's route list.
    pub route: usize,
    pub charge_node: NodeId,
    /// Index of `charge_node` in [`Network::nodes`].
    pub station: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteConfig {
    pub max_routes_per_od: usize,
    pub max_hops: usize,
    /// Optional cap on routes summed over all O-D pairs, filled round-robin
    /// by rank so every pair keeps its shortest route.
    pub max_routes_total: Option<usize>,
    pub charge_at_origin: bool,
}

impl Default for RouteConfig {
    fn default() -> Self {
        Self {
            max_routes_per_od: 8,
            max_hops: 12,
            max_routes_total: None,
            charge_at_origin: false,
        }
    }
}

/// Node set plus links with an adjacency index. Validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    nodes: Vec<NodeId>,
    links: Vec<Link>,
    index: BTreeMap<NodeId, usize>,
    out: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(nodes: &[NodeId], links: Vec<Link>) -> Result<Self> {
        let mut sorted: Vec<NodeId> = nodes.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("duplicate node id".into()));
        }
        let index: BTreeMap<NodeId, usize> =
            sorted.iter().enumerate().map(|(i, &n)| (n, i)).collect();

        let mut seen = BTreeSet::new();
        let mut out = vec![Vec::new(); sorted.len()];
        for (k, link) in links.iter().enumerate() {
            if !seen.insert(link.id) {
                return Err(Error::DuplicateLink(link.id));
            }
            let invalid = |reason: &str| Error::InvalidLink {
                id: link.id,
                reason: reason.to_string(),
            };
            if !(link.d.is_finite() && link.d > 0.0) {
                return Err(invalid("length must be positive"));
            }
            if !(link.c.is_finite() && link.c > 0.0) {
                return Err(invalid("capacity must be positive"));
            }
            if link.from == link.to {
                return Err(invalid("self-loop"));
            }
            let Some(&from) = index.get(&link.from) else {
                return Err(invalid(&format!("unknown node {}", link.from)));
            };
            if !index.contains_key(&link.to) {
                return Err(invalid(&format!("unknown node {}", link.to)));
            }
            out[from].push(k);
        }
        Ok(Self {
            nodes: sorted,
            links,
            index,
            out,
        })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub graph: Graph,
    pub od_pairs: Vec<OdPair>,
    pub routes: Vec<Vec<Route>>,
    pub extended_paths: Vec<Vec<ExtendedPath>>,
    /// Charging eligibility, indexed like [`Graph::nodes`].
    pub eligible: Vec<bool>,
    pub route_cfg: RouteConfig,
}

impl Network {
    pub fn nodes(&self) -> &[NodeId] {
        self.graph.nodes()
    }

    pub fn links(&self) -> &[Link] {
        self.graph.links()
    }

    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        self.graph.node_index(id)
    }

    pub fn route_count(&self) -> usize {
        self.routes.iter().map(Vec::len).sum()
    }

    pub fn extended_path_count(&self) -> usize {
        self.extended_paths.iter().map(Vec::len).sum()
    }

    pub fn route_of(&self, path: &ExtendedPath) -> &Route {
        &self.routes[path.od][path.route]
    }

    /// Nodes that appear as a charge point on at least one extended path.
    pub fn usable_stations(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .extended_paths
            .iter()
            .flatten()
            .map(|p| p.station)
            .collect();
        set.into_iter().collect()
    }

    pub fn total_ev_demand(&self) -> f64 {
        self.od_pairs.iter().map(|od| od.gamma_ev).sum()
    }

    pub fn total_ncd_demand(&self) -> f64 {
        self.od_pairs.iter().map(|od| od.gamma_ncd).sum()
    }
}

pub fn build_network(
    nodes: &[NodeId],
    links: Vec<Link>,
    od_pairs: Vec<OdPair>,
    charging_nodes: &[NodeId],
    route_cfg: RouteConfig,
) -> Result<Network> {
    if route_cfg.max_routes_per_od == 0 || route_cfg.max_hops == 0 {
        return Err(Error::Validation(
            "max_routes_per_od and max_hops must be at least 1".into(),
        ));
    }
    let graph = Graph::new(nodes, links)?;

    for od in &od_pairs {
        validate_od(&graph, od)?;
    }

    let mut eligible = vec![false; graph.nodes().len()];
    for &n in charging_nodes {
        let i = graph
            .node_index(n)
            .ok_or_else(|| Error::Validation(format!("charging node {n} does not exist")))?;
        eligible[i] = true;
    }

    let mut routes = Vec::with_capacity(od_pairs.len());
    for (k, od) in od_pairs.iter().enumerate() {
        let found = enumerate_routes(
            &graph,
            k,
            od,
            route_cfg.max_routes_per_od,
            route_cfg.max_hops,
        );
        if found.is_empty() {
            return Err(Error::DisconnectedOd {
                origin: od.origin,
                dest: od.dest,
            });
        }
        routes.push(found);
    }

    if let Some(total) = route_cfg.max_routes_total {
        routes = cap_routes_round_robin(routes, total)?;
    }

    let extended_paths = build_extended_paths(
        &graph,
        &od_pairs,
        &routes,
        &eligible,
        route_cfg.charge_at_origin,
    )?;

    Ok(Network {
        graph,
        od_pairs,
        routes,
        extended_paths,
        eligible,
        route_cfg,
    })
}

fn validate_od(graph: &Graph, od: &OdPair) -> Result<()> {
    let name = format!("O-D {} -> {}", od.origin, od.dest);
    if od.origin == od.dest {
        return Err(Error::Validation(format!("{name}: origin equals dest")));
    }
    for n in [od.origin, od.dest] {
        if graph.node_index(n).is_none() {
            return Err(Error::Validation(format!("{name}: unknown node {n}")));
        }
    }
    for (label, g) in [("gamma_ev", od.gamma_ev), ("gamma_ncd", od.gamma_ncd)] {
        if !g.is_finite() || g < 0.0 {
            return Err(Error::Validation(format!(
                "{name}: {label} must be finite and non-negative"
            )));
        }
    }
    if od.total_demand() <= 0.0 {
        return Err(Error::Validation(format!("{name}: empty demand")));
    }
    Ok(())
}

fn route_order(a: &Route, b: &Route, graph: &Graph) -> Ordering {
    a.length
        .total_cmp(&b.length)
        .then_with(|| a.nodes.cmp(&b.nodes))
        .then_with(|| {
            let ia = a.links.iter().map(|&l| graph.links[l].id);
            let ib = b.links.iter().map(|&l| graph.links[l].id);
            ia.cmp(ib)
        })
}

/// Enumerates simple paths of at most `max_hops` links by depth-first
/// search and keeps the `max_routes` shortest by total length.
pub fn enumerate_routes(
    graph: &Graph,
    od_index: usize,
    od: &OdPair,
    max_routes: usize,
    max_hops: usize,
) -> Vec<Route> {
    let (Some(src), Some(dst)) = (graph.node_index(od.origin), graph.node_index(od.dest)) else {
        return Vec::new();
    };
    if max_routes == 0 || max_hops == 0 {
        return Vec::new();
    }

    let mut found: Vec<Route> = Vec::new();
    let mut on_path = vec![false; graph.nodes.len()];
    let mut link_stack: Vec<usize> = Vec::new();
    // (node, next outgoing position)
    let mut stack: Vec<(usize, usize)> = vec![(src, 0)];
    on_path[src] = true;

    while let Some(top) = stack.last_mut() {
        let (node, pos) = *top;
        if pos >= graph.out[node].len() || link_stack.len() >= max_hops {
            stack.pop();
            on_path[node] = false;
            link_stack.pop();
            continue;
        }
        top.1 += 1;
        let l = graph.out[node][pos];
        let next = graph.index[&graph.links[l].to];
        if on_path[next] {
            continue;
        }
        if next == dst {
            link_stack.push(l);
            let mut nodes = vec![od.origin];
            nodes.extend(link_stack.iter().map(|&k| graph.links[k].to));
            let length = link_stack.iter().map(|&k| graph.links[k].d).sum();
            found.push(Route {
                od: od_index,
                links: link_stack.clone(),
                nodes,
                length,
            });
            link_stack.pop();
            continue;
        }
        on_path[next] = true;
        link_stack.push(l);
        stack.push((next, 0));
    }

    found.sort_by(|a, b| route_order(a, b, graph));
    found.truncate(max_routes);
    found
}

fn cap_routes_round_robin(routes: Vec<Vec<Route>>, total: usize) -> Result<Vec<Vec<Route>>> {
    if total < routes.len() {
        return Err(Error::Validation(format!(
            "max_routes_total {total} is below the number of O-D pairs {}",
            routes.len()
        )));
    }
    let mut keep = vec![0usize; routes.len()];
    let mut remaining = total;
    let mut rank = 0;
    while remaining > 0 {
        let mut progressed = false;
        for (k, rs) in routes.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            if rank < rs.len() {
                keep[k] += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
        rank += 1;
    }
    Ok(routes
        .into_iter()
        .zip(keep)
        .map(|(mut rs, n)| {
            rs.truncate(n);
            rs
        })
        .collect())
}

/// One extended path per (route, eligible node on the route).
pub fn build_extended_paths(
    graph: &Graph,
    od_pairs: &[OdPair],
    routes: &[Vec<Route>],
    eligible: &[bool],
    charge_at_origin: bool,
) -> Result<Vec<Vec<ExtendedPath>>> {
    let mut all = Vec::with_capacity(routes.len());
    for (k, (od, rs)) in od_pairs.iter().zip(routes).enumerate() {
        let mut paths = Vec::new();
        for (r, route) in rs.iter().enumerate() {
            let mut stations: Vec<(NodeId, usize)> = route
                .nodes
                .iter()
                .filter(|&&n| charge_at_origin || n != od.origin)
                .filter_map(|&n| {
                    let i = graph.node_index(n)?;
                    eligible[i].then_some((n, i))
                })
                .collect();
            stations.sort_unstable();
            paths.extend(stations.into_iter().map(|(n, i)| ExtendedPath {
                od: k,
                route: r,
                charge_node: n,
                station: i,
            }));
        }
        if paths.is_empty() && od.gamma_ev > 0.0 {
            return Err(Error::NoChargingOption {
                origin: od.origin,
                dest: od.dest,
            });
        }
        all.push(paths);
    }
    Ok(all)
}

/// Link flows and station loads induced by a profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregates {
    pub link_flow: Vec<f64>,
    /// Indexed like [`Network::nodes`].
    pub station_load: Vec<f64>,
}

pub fn check_profile_shape(network: &Network, profile: &FlowProfile) -> Result<()> {
    let n = network.od_pairs.len();
    if profile.q.len() != n || profile.q0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "profile covers {}/{} O-D pairs, network has {n}",
            profile.q.len(),
            profile.q0.len()
        )));
    }
    for k in 0..n {
        if profile.q[k].len() != network.extended_paths[k].len() {
            return Err(Error::DimensionMismatch(format!(
                "O-D {k}: {} EV shares for {} extended paths",
                profile.q[k].len(),
                network.extended_paths[k].len()
            )));
        }
        if profile.q0[k].len() != network.routes[k].len() {
            return Err(Error::DimensionMismatch(format!(
                "O-D {k}: {} NCD shares for {} routes",
                profile.q0[k].len(),
                network.routes[k].len()
            )));
        }
    }
    Ok(())
}

pub fn aggregate_flows(network: &Network, profile: &FlowProfile) -> Result<Aggregates> {
    check_profile_shape(network, profile)?;
    let mut link_flow = vec![0.0; network.links().len()];
    let mut station_load = vec![0.0; network.nodes().len()];
    for (k, od) in network.od_pairs.iter().enumerate() {
        for (p, path) in network.extended_paths[k].iter().enumerate() {
            let f = od.gamma_ev * profile.q[k][p];
            if f == 0.0 {
                continue;
            }
            station_load[path.station] += f;
            for &l in &network.route_of(path).links {
                link_flow[l] += f;
            }
        }
        for (r, route) in network.routes[k].iter().enumerate() {
            let f = od.gamma_ncd * profile.q0[k][r];
            if f == 0.0 {
                continue;
            }
            for &l in &route.links {
                link_flow[l] += f;
            }
        }
    }
    Ok(Aggregates {
        link_flow,
        station_load,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(id: LinkId, from: NodeId, to: NodeId, d: f64) -> Link {
        Link {
            id,
            from,
            to,
            d,
            c: 1.0,
        }
    }

    fn od(origin: NodeId, dest: NodeId, gamma_ev: f64, gamma_ncd: f64) -> OdPair {
        OdPair {
            origin,
            dest,
            gamma_ev,
            gamma_ncd,
        }
    }

    #[test]
    fn parallel_links_give_two_routes_and_two_extended_paths() {
        let net = build_network(
            &[1, 2],
            vec![link(1, 1, 2, 2.0), link(2, 1, 2, 1.0)],
            vec![od(1, 2, 1.0, 1.0)],
            &[2],
            RouteConfig::default(),
        )
        .unwrap();
        assert_eq!(net.route_count(), 2);
        assert_eq!(net.extended_path_count(), 2);
        // shorter first
        assert_eq!(net.links()[net.routes[0][0].links[0]].id, 2);
        assert_eq!(net.links()[net.routes[0][1].links[0]].id, 1);
    }

    #[test]
    fn chain_with_shortcut_keeps_shortest() {
        let links = vec![link(1, 1, 2, 1.0), link(2, 2, 3, 1.0), link(3, 1, 3, 3.0)];
        let graph = Graph::new(&[1, 2, 3], links.clone()).unwrap();
        let routes = enumerate_routes(&graph, 0, &od(1, 3, 0.0, 1.0), 1, 5);
        assert_eq!(routes.len(), 1);
        assert_eq!(routes[0].nodes, vec![1, 2, 3]);

        let links = vec![link(1, 1, 2, 2.0), link(2, 2, 3, 2.0), link(3, 1, 3, 3.0)];
        let graph = Graph::new(&[1, 2, 3], links).unwrap();
        let routes = enumerate_routes(&graph, 0, &od(1, 3, 0.0, 1.0), 1, 5);
        assert_eq!(routes[0].nodes, vec![1, 3]);
    }

    #[test]
    fn unreachable_destination_is_disconnected() {
        let err = build_network(
            &[1, 2, 3],
            vec![link(1, 1, 2, 1.0)],
            vec![od(1, 3, 0.0, 1.0)],
            &[],
            RouteConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err, Error::DisconnectedOd { origin: 1, dest: 3 });
    }

    #[test]
    fn ev_demand_without_station_is_rejected() {
        let err = build_network(
            &[1, 2],
            vec![link(1, 1, 2, 1.0)],
            vec![od(1, 2, 1.0, 0.0)],
            &[1],
            RouteConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err, Error::NoChargingOption { origin: 1, dest: 2 });
    }

    #[test]
    fn link_validation() {
        let bad = |l: Link| Graph::new(&[1, 2], vec![l]).unwrap_err();
        assert!(matches!(bad(link(1, 1, 1, 1.0)), Error::InvalidLink { .. }));
        assert!(matches!(bad(link(1, 1, 9, 1.0)), Error::InvalidLink { .. }));
        assert!(matches!(bad(link(1, 1, 2, 0.0)), Error::InvalidLink { .. }));
        assert_eq!(
            Graph::new(&[1, 2], vec![link(1, 1, 2, 1.0), link(1, 2, 1, 1.0)]).unwrap_err(),
            Error::DuplicateLink(1)
        );
    }

    #[test]
    fn extended_paths_are_route_times_eligible_nodes() {
        let links = vec![link(1, 1, 5, 1.0), link(2, 5, 2, 1.0)];
        let net = build_network(
            &[1, 2, 5],
            links,
            vec![od(1, 2, 1.0, 0.0)],
            &[5, 2],
            RouteConfig::default(),
        )
        .unwrap();
        let nodes: Vec<_> = net.extended_paths[0].iter().map(|p| p.charge_node).collect();
        assert_eq!(nodes, vec![2, 5]);
    }

    #[test]
    fn origin_charging_is_opt_in() {
        let make = |charge_at_origin| {
            build_network(
                &[1, 2],
                vec![link(1, 1, 2, 1.0)],
                vec![od(1, 2, 1.0, 0.0)],
                &[1, 2],
                RouteConfig {
                    charge_at_origin,
                    ..RouteConfig::default()
                },
            )
            .unwrap()
            .extended_path_count()
        };
        assert_eq!(make(false), 1);
        assert_eq!(make(true), 2);
    }

    #[test]
    fn route_without_eligible_node_contributes_nothing() {
        // 1 -> 3 -> 2 passes eligible node 3; 1 -> 2 direct has only the dest, not eligible
        let links = vec![link(1, 1, 2, 1.0), link(2, 1, 3, 1.0), link(3, 3, 2, 1.0)];
        let net = build_network(
            &[1, 2, 3],
            links,
            vec![od(1, 2, 1.0, 1.0)],
            &[3],
            RouteConfig::default(),
        )
        .unwrap();
        assert_eq!(net.route_count(), 2);
        assert_eq!(net.extended_path_count(), 1);
        assert_eq!(net.extended_paths[0][0].route, 1);
    }

    #[test]
    fn aggregation_of_single_ncd_route() {
        let net = build_network(
            &[1, 2],
            vec![link(1, 1, 2, 1.0)],
            vec![od(1, 2, 0.0, 3.0)],
            &[2],
            RouteConfig::default(),
        )
        .unwrap();
        let profile = FlowProfile {
            q: vec![vec![1.0]],
            q0: vec![vec![1.0]],
        };
        let agg = aggregate_flows(&net, &profile).unwrap();
        assert_eq!(agg.link_flow, vec![3.0]);
        assert!(agg.station_load.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn aggregation_splits_station_load() {
        // 1 -> 7 -> 2 and 1 -> 9 -> 2, EVs charge at 7 or 9
        let links = vec![
            link(1, 1, 7, 1.0),
            link(2, 7, 2, 1.0),
            link(3, 1, 9, 1.0),
            link(4, 9, 2, 1.0),
        ];
        let net = build_network(
            &[1, 2, 7, 9],
            links,
            vec![od(1, 2, 10.0, 0.0)],
            &[7, 9],
            RouteConfig::default(),
        )
        .unwrap();
        assert_eq!(net.extended_path_count(), 2);
        let profile = FlowProfile {
            q: vec![vec![0.5, 0.5]],
            q0: vec![vec![0.5, 0.5]],
        };
        let agg = aggregate_flows(&net, &profile).unwrap();
        assert_eq!(agg.station_load[net.node_index(7).unwrap()], 5.0);
        assert_eq!(agg.station_load[net.node_index(9).unwrap()], 5.0);
    }

    #[test]
    fn aggregation_rejects_wrong_shape() {
        let net = build_network(
            &[1, 2],
            vec![link(1, 1, 2, 1.0)],
            vec![od(1, 2, 0.0, 3.0)],
            &[2],
            RouteConfig::default(),
        )
        .unwrap();
        let profile = FlowProfile {
            q: vec![vec![]],
            q0: vec![vec![1.0]],
        };
        assert!(matches!(
            aggregate_flows(&net, &profile),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn round_robin_cap_keeps_one_route_per_pair() {
        let links = vec![
            link(1, 1, 2, 1.0),
            link(2, 1, 2, 2.0),
            link(3, 1, 2, 3.0),
            link(4, 1, 3, 1.0),
            link(5, 1, 3, 2.0),
        ];
        let net = build_network(
            &[1, 2, 3],
            links,
            vec![od(1, 2, 0.0, 1.0), od(1, 3, 0.0, 1.0)],
            &[],
            RouteConfig {
                max_routes_total: Some(3),
                ..RouteConfig::default()
            },
        )
        .unwrap();
        assert_eq!(net.routes[0].len(), 2);
        assert_eq!(net.routes[1].len(), 1);
    }
}
