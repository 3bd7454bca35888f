//! Wardrop equilibria of the coupled road/charging congestion game.
//!
//! Equilibria are minimisers of the convex quadratic potential over the
//! product of per-O-D strategy simplices. Two Frank-Wolfe variants are
//! provided: the classic one (all-or-nothing direction, exact line search)
//! and a pairwise one that shifts flow from the costliest used strategy of a
//! block to its best response, again with an exact step. The pairwise variant
//! converges linearly on these problems and is the default.

use crate::cost::{strategy_costs, MIN_CHARGERS};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::network::{aggregate_flows, check_profile_shape, Network};
use crate::scenario::Scenario;

/// Per-O-D shares over EV extended paths (`q`) and NCD routes (`q0`).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowProfile {
    pub q: Vec<Vec<f64>>,
    pub q0: Vec<Vec<f64>>,
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

impl FlowProfile {
    pub fn uniform(network: &Network) -> Self {
        Self {
            q: network.extended_paths.iter().map(|p| uniform(p.len())).collect(),
            q0: network.routes.iter().map(|r| uniform(r.len())).collect(),
        }
    }

    /// Checks shape, `[0, 1]` entries and unit sums for every non-empty block.
    pub fn validate(&self, network: &Network) -> Result<()> {
        check_profile_shape(network, self)?;
        for (class, rows) in [("q", &self.q), ("q0", &self.q0)] {
            for (k, row) in rows.iter().enumerate() {
                if row.is_empty() {
                    continue;
                }
                if row.iter().any(|&s| !(0.0..=1.0).contains(&s)) {
                    return Err(Error::Validation(format!("{class}[{k}] has a share outside [0, 1]")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Validation(format!("{class}[{k}] sums to {sum}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentClass {
    Ev,
    Ncd,
}

impl AgentClass {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentClass::Ev => "ev",
            AgentClass::Ncd => "ncd",
        }
    }
}

/// Which classes move. Fixed shares act as background traffic.
#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// NCDs only; EV drivers are left out of the game entirely.
    NcdOnly,
    /// NCDs move over fixed EV shares.
    NcdWithFixedEv(Vec<Vec<f64>>),
    /// EVs move over fixed NCD shares.
    EvWithFixedNcd(Vec<Vec<f64>>),
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Pairwise,
    FrankWolfe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// When set, convergence also requires every used strategy to cost at
    /// most `min * (1 + certificate_tol)`.
    pub certificate_tol: Option<f64>,
    /// Shares at or below this count as unused in the certificate.
    pub used_share: f64,
    pub algorithm: Algorithm,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 5000,
            certificate_tol: Some(1e-5),
            used_share: 1e-6,
            algorithm: Algorithm::Pairwise,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub profile: FlowProfile,
    /// Relative gap of the moving classes.
    pub gap: f64,
    pub iterations: usize,
    pub potential_value: f64,
    pub converged: bool,
    /// Social cost over the classes present in the mode.
    pub theta: f64,
    /// Largest relative excess of a used strategy over its block minimum.
    pub wardrop_violation: f64,
}

impl EquilibriumResult {
    pub fn into_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                gap: self.gap,
            })
        }
    }
}

struct Block {
    od: usize,
    class: AgentClass,
    demand: f64,
    fixed: bool,
    links: Vec<Vec<usize>>,
    station: Vec<Option<usize>>,
    available: Vec<bool>,
    flow: Vec<f64>,
}

impl Block {
    fn len(&self) -> usize {
        self.flow.len()
    }
}

/// Compiled instance: slopes of the linear cost terms plus per-block flows.
struct Engine {
    link_slope: Vec<f64>,
    station_slope: Vec<f64>,
    station_fee: Vec<f64>,
    blocks: Vec<Block>,
    v: Vec<f64>,
    load: Vec<f64>,
}

fn project_start(shares: Option<&[f64]>, available: &[bool]) -> Vec<f64> {
    let n = available.len();
    let mut out = vec![0.0; n];
    if let Some(s) = shares.filter(|s| s.len() == n) {
        for i in 0..n {
            if available[i] && s[i] > 0.0 && s[i].is_finite() {
                out[i] = s[i];
            }
        }
    }
    let sum: f64 = out.iter().sum();
    if sum > 0.0 {
        out.iter_mut().for_each(|v| *v /= sum);
        return out;
    }
    let open = available.iter().filter(|&&a| a).count();
    for i in 0..n {
        if available[i] {
            out[i] = 1.0 / open as f64;
        }
    }
    out
}

impl Engine {
    fn new(
        scenario: &Scenario,
        design: &Design,
        mode: &Mode,
        start: Option<&FlowProfile>,
    ) -> Result<Self> {
        let net = &scenario.network;
        let w = &scenario.weights;
        let n_nodes = net.nodes().len();
        design.validate_shape(n_nodes)?;
        if let Some(s) = start {
            check_profile_shape(net, s)?;
        }
        let link_slope = net.links().iter().map(|l| w.lambda1 * l.d / l.c).collect();
        let station_slope = design
            .x
            .iter()
            .map(|&x| w.lambda2 / (x.max(MIN_CHARGERS) * scenario.mu))
            .collect();
        let station_fee = design.y.iter().map(|&y| w.lambda3 * y).collect();

        let (ev_fixed, ncd_fixed): (Option<&Vec<Vec<f64>>>, Option<&Vec<Vec<f64>>>) = match mode {
            Mode::NcdOnly | Mode::Joint => (None, None),
            Mode::NcdWithFixedEv(q) => (Some(q), None),
            Mode::EvWithFixedNcd(q0) => (None, Some(q0)),
        };
        for fixed in [ev_fixed, ncd_fixed].into_iter().flatten() {
            if fixed.len() != net.od_pairs.len() {
                return Err(Error::DimensionMismatch(
                    "background shares cover a different O-D set".into(),
                ));
            }
        }
        let include_ev = !matches!(mode, Mode::NcdOnly);

        let mut blocks = Vec::new();
        for (k, od) in net.od_pairs.iter().enumerate() {
            if include_ev && od.gamma_ev > 0.0 {
                let paths = &net.extended_paths[k];
                let available: Vec<bool> = paths.iter().map(|p| design.is_open(p.station)).collect();
                let shares = match ev_fixed {
                    Some(q) => {
                        if q[k].len() != paths.len() {
                            return Err(Error::DimensionMismatch(format!(
                                "O-D {k}: fixed EV shares"
                            )));
                        }
                        q[k].clone()
                    }
                    None => {
                        if !available.iter().any(|&a| a) {
                            return Err(Error::InfeasibleMode(format!(
                                "O-D {} -> {} has EV demand but no open station on its paths",
                                od.origin, od.dest
                            )));
                        }
                        project_start(start.map(|s| s.q[k].as_slice()), &available)
                    }
                };
                blocks.push(Block {
                    od: k,
                    class: AgentClass::Ev,
                    demand: od.gamma_ev,
                    fixed: ev_fixed.is_some(),
                    links: paths.iter().map(|p| net.route_of(p).links.clone()).collect(),
                    station: paths.iter().map(|p| Some(p.station)).collect(),
                    flow: shares.iter().map(|s| s * od.gamma_ev).collect(),
                    available,
                });
            }
            if od.gamma_ncd > 0.0 {
                let routes = &net.routes[k];
                let available = vec![true; routes.len()];
                let shares = match ncd_fixed {
                    Some(q0) => {
                        if q0[k].len() != routes.len() {
                            return Err(Error::DimensionMismatch(format!(
                                "O-D {k}: fixed NCD shares"
                            )));
                        }
                        q0[k].clone()
                    }
                    None => project_start(start.map(|s| s.q0[k].as_slice()), &available),
                };
                blocks.push(Block {
                    od: k,
                    class: AgentClass::Ncd,
                    demand: od.gamma_ncd,
                    fixed: ncd_fixed.is_some(),
                    links: routes.iter().map(|r| r.links.clone()).collect(),
                    station: vec![None; routes.len()],
                    flow: shares.iter().map(|s| s * od.gamma_ncd).collect(),
                    available,
                });
            }
        }

        let mut engine = Self {
            link_slope,
            station_slope,
            station_fee,
            blocks,
            v: vec![0.0; net.links().len()],
            load: vec![0.0; n_nodes],
        };
        engine.reaggregate();
        Ok(engine)
    }

    fn reaggregate(&mut self) {
        self.v.iter_mut().for_each(|v| *v = 0.0);
        self.load.iter_mut().for_each(|v| *v = 0.0);
        for b in &self.blocks {
            for s in 0..b.len() {
                let f = b.flow[s];
                if f == 0.0 {
                    continue;
                }
                for &l in &b.links[s] {
                    self.v[l] += f;
                }
                if let Some(i) = b.station[s] {
                    self.load[i] += f;
                }
            }
        }
    }

    fn cost(&self, links: &[usize], station: Option<usize>) -> f64 {
        let mut c: f64 = links.iter().map(|&l| self.link_slope[l] * self.v[l]).sum();
        if let Some(i) = station {
            c += self.station_slope[i] * self.load[i] + self.station_fee[i];
        }
        c
    }

    fn block_costs(&self, b: &Block, out: &mut Vec<f64>) {
        out.clear();
        for s in 0..b.len() {
            out.push(if b.available[s] {
                self.cost(&b.links[s], b.station[s])
            } else {
                f64::INFINITY
            });
        }
    }

    fn potential(&self) -> f64 {
        let road: f64 = self
            .link_slope
            .iter()
            .zip(&self.v)
            .map(|(a, v)| 0.5 * a * v * v)
            .sum();
        let station: f64 = (0..self.load.len())
            .filter(|&i| self.load[i] != 0.0)
            .map(|i| 0.5 * self.station_slope[i] * self.load[i] * self.load[i] + self.station_fee[i] * self.load[i])
            .sum();
        road + station
    }

    /// (relative gap of moving blocks, wardrop violation, theta of all blocks)
    fn diagnostics(&self, used_share: f64) -> (f64, f64, f64) {
        let mut costs = Vec::new();
        let mut excess = 0.0;
        let mut moving_total = 0.0;
        let mut theta = 0.0;
        let mut violation: f64 = 0.0;
        for b in &self.blocks {
            self.block_costs(b, &mut costs);
            let total: f64 = (0..b.len())
                .filter(|&s| b.flow[s] > 0.0)
                .map(|s| b.flow[s] * costs[s])
                .sum();
            theta += total;
            if b.fixed {
                continue;
            }
            let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
            moving_total += total;
            excess += total - b.demand * min;
            for s in 0..b.len() {
                if b.flow[s] > used_share * b.demand {
                    violation = violation.max((costs[s] - min) / min.max(1e-12));
                }
            }
        }
        let gap = if moving_total > 0.0 {
            (excess / moving_total).max(0.0)
        } else {
            0.0
        };
        (gap, violation, theta)
    }

    fn curvature(&self, b: &Block, s: usize, t: usize) -> f64 {
        let mut h = 0.0;
        for &l in &b.links[s] {
            if !b.links[t].contains(&l) {
                h += self.link_slope[l];
            }
        }
        for &l in &b.links[t] {
            if !b.links[s].contains(&l) {
                h += self.link_slope[l];
            }
        }
        if b.station[s] != b.station[t] {
            for i in [b.station[s], b.station[t]].into_iter().flatten() {
                h += self.station_slope[i];
            }
        }
        h
    }

    fn shift(&mut self, bi: usize, from: usize, to: usize, amount: f64) {
        let b = &mut self.blocks[bi];
        b.flow[from] -= amount;
        if b.flow[from] < 0.0 {
            b.flow[from] = 0.0;
        }
        b.flow[to] += amount;
        for &l in &b.links[from] {
            self.v[l] -= amount;
        }
        for &l in &b.links[to] {
            self.v[l] += amount;
        }
        if let Some(i) = b.station[from] {
            self.load[i] -= amount;
        }
        if let Some(i) = b.station[to] {
            self.load[i] += amount;
        }
    }

    fn pairwise_sweep(&mut self) {
        let mut costs = Vec::new();
        for bi in 0..self.blocks.len() {
            if self.blocks[bi].fixed {
                continue;
            }
            for _ in 0..self.blocks[bi].len().max(2) {
                let b = &self.blocks[bi];
                self.block_costs(b, &mut costs);
                let mut best = usize::MAX;
                let mut worst = usize::MAX;
                for s in 0..b.len() {
                    if !b.available[s] {
                        continue;
                    }
                    if best == usize::MAX || costs[s] < costs[best] {
                        best = s;
                    }
                    if b.flow[s] > 0.0 && (worst == usize::MAX || costs[s] > costs[worst]) {
                        worst = s;
                    }
                }
                if worst == usize::MAX || worst == best {
                    break;
                }
                let diff = costs[worst] - costs[best];
                if diff <= 1e-15 * costs[best].abs().max(1.0) {
                    break;
                }
                let h = self.curvature(b, best, worst);
                let amount = if h > 0.0 {
                    (diff / h).min(b.flow[worst])
                } else {
                    b.flow[worst]
                };
                self.shift(bi, worst, best, amount);
            }
        }
    }

    fn frank_wolfe_step(&mut self) {
        let mut costs = Vec::new();
        let mut dv = vec![0.0; self.v.len()];
        let mut dload = vec![0.0; self.load.len()];
        let mut slope = 0.0;
        let mut targets = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            if b.fixed {
                targets.push(usize::MAX);
                continue;
            }
            self.block_costs(b, &mut costs);
            let mut best = usize::MAX;
            for s in 0..b.len() {
                if b.available[s] && (best == usize::MAX || costs[s] < costs[best]) {
                    best = s;
                }
            }
            targets.push(best);
            for s in 0..b.len() {
                let target = if s == best { b.demand } else { 0.0 };
                let d = target - b.flow[s];
                if d == 0.0 {
                    continue;
                }
                slope += costs[s] * d;
                for &l in &b.links[s] {
                    dv[l] += d;
                }
                if let Some(i) = b.station[s] {
                    dload[i] += d;
                }
            }
        }
        let curv: f64 = self
            .link_slope
            .iter()
            .zip(&dv)
            .map(|(a, d)| a * d * d)
            .sum::<f64>()
            + self
                .station_slope
                .iter()
                .zip(&dload)
                .map(|(a, d)| a * d * d)
                .sum::<f64>();
        if slope >= 0.0 {
            return;
        }
        let step = if curv > 0.0 { (-slope / curv).min(1.0) } else { 1.0 };
        for (b, &best) in self.blocks.iter_mut().zip(&targets) {
            if b.fixed {
                continue;
            }
            for s in 0..b.flow.len() {
                let target = if s == best { b.demand } else { 0.0 };
                b.flow[s] += step * (target - b.flow[s]);
            }
        }
        self.reaggregate();
    }

    fn into_profile(self, template: &FlowProfile) -> FlowProfile {
        let mut profile = template.clone();
        for b in self.blocks {
            let row = match b.class {
                AgentClass::Ev => &mut profile.q[b.od],
                AgentClass::Ncd => &mut profile.q0[b.od],
            };
            let total: f64 = b.flow.iter().sum();
            for (r, f) in row.iter_mut().zip(&b.flow) {
                *r = f / total;
            }
        }
        profile
    }
}

pub fn solve_equilibrium(
    scenario: &Scenario,
    design: &Design,
    mode: &Mode,
    cfg: &SolverConfig,
) -> Result<EquilibriumResult> {
    solve_equilibrium_from(scenario, design, mode, cfg, None)
}

/// Like [`solve_equilibrium`], starting from `start` (projected onto the
/// available strategies) instead of the uniform profile.
pub fn solve_equilibrium_from(
    scenario: &Scenario,
    design: &Design,
    mode: &Mode,
    cfg: &SolverConfig,
    start: Option<&FlowProfile>,
) -> Result<EquilibriumResult> {
    let mut engine = Engine::new(scenario, design, mode, start)?;
    let mut iterations = 0;
    let mut converged = false;
    let mut last_phi = engine.potential();
    let (mut gap, mut violation, mut theta);
    loop {
        (gap, violation, theta) = engine.diagnostics(cfg.used_share);
        let certified = cfg.certificate_tol.is_none_or(|t| violation <= t);
        if gap <= cfg.tolerance && certified {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iterations {
            break;
        }
        match cfg.algorithm {
            Algorithm::Pairwise => {
                engine.pairwise_sweep();
                engine.reaggregate();
            }
            Algorithm::FrankWolfe => engine.frank_wolfe_step(),
        }
        iterations += 1;
        let phi = engine.potential();
        debug_assert!(
            phi <= last_phi + 1e-9 * last_phi.abs().max(1.0),
            "potential rose from {last_phi} to {phi}"
        );
        last_phi = phi;
    }
    let potential_value = engine.potential();

    let mut template = start.cloned().unwrap_or_else(|| FlowProfile::uniform(&scenario.network));
    match mode {
        Mode::NcdWithFixedEv(q) => template.q = q.clone(),
        Mode::EvWithFixedNcd(q0) => template.q0 = q0.clone(),
        Mode::NcdOnly | Mode::Joint => {}
    }
    Ok(EquilibriumResult {
        profile: engine.into_profile(&template),
        gap,
        iterations,
        potential_value,
        converged,
        theta,
        wardrop_violation: violation,
    })
}

/// Relative equilibrium gap of both classes,
/// `sum_w [g_w (C_w - min_p C_wp) + g0_w (C0_w - min_r C0_wr)] / theta`.
pub fn equilibrium_gap(scenario: &Scenario, design: &Design, profile: &FlowProfile) -> Result<f64> {
    let flows = aggregate_flows(&scenario.network, profile)?;
    let costs = strategy_costs(scenario, design, &flows)?;
    let mut excess = 0.0;
    let mut theta = 0.0;
    for (k, od) in scenario.network.od_pairs.iter().enumerate() {
        for (demand, shares, c) in [
            (od.gamma_ev, &profile.q[k], &costs.ev[k]),
            (od.gamma_ncd, &profile.q0[k], &costs.ncd[k]),
        ] {
            if demand <= 0.0 || shares.is_empty() {
                continue;
            }
            let expected: f64 = shares
                .iter()
                .zip(c)
                .filter(|(&q, _)| q > 0.0)
                .map(|(q, c)| q * c)
                .sum();
            let min = c.iter().copied().fold(f64::INFINITY, f64::min);
            theta += demand * expected;
            excess += demand * (expected - min);
        }
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    Ok((excess / theta).max(0.0))
}

/// Largest `(cost - min) / min` over strategies holding more than
/// `used_share` of their block.
pub fn wardrop_violation(
    scenario: &Scenario,
    design: &Design,
    profile: &FlowProfile,
    used_share: f64,
) -> Result<f64> {
    let flows = aggregate_flows(&scenario.network, profile)?;
    let costs = strategy_costs(scenario, design, &flows)?;
    let mut worst: f64 = 0.0;
    for (k, od) in scenario.network.od_pairs.iter().enumerate() {
        for (demand, shares, c) in [
            (od.gamma_ev, &profile.q[k], &costs.ev[k]),
            (od.gamma_ncd, &profile.q0[k], &costs.ncd[k]),
        ] {
            if demand <= 0.0 {
                continue;
            }
            let min = c.iter().copied().fold(f64::INFINITY, f64::min);
            for (q, cost) in shares.iter().zip(c) {
                if *q > used_share {
                    worst = worst.max((cost - min) / min.max(1e-12));
                }
            }
        }
    }
    Ok(worst)
}

/// Index of the cheapest available strategy; ties go to the lower index.
pub fn best_response(
    scenario: &Scenario,
    design: &Design,
    profile: &FlowProfile,
    class: AgentClass,
    od: usize,
) -> Result<Option<usize>> {
    let flows = aggregate_flows(&scenario.network, profile)?;
    let costs = strategy_costs(scenario, design, &flows)?;
    let row = match class {
        AgentClass::Ev => &costs.ev[od],
        AgentClass::Ncd => &costs.ncd[od],
    };
    let mut best: Option<usize> = None;
    for (s, &c) in row.iter().enumerate() {
        if c.is_finite() && best.is_none_or(|b| c < row[b]) {
            best = Some(s);
        }
    }
    Ok(best)
}

/// Exhaustive grid search for the profile of smallest [`equilibrium_gap`].
/// Test oracle for tiny instances only.
pub fn brute_force_equilibrium(
    scenario: &Scenario,
    design: &Design,
    resolution: f64,
) -> Result<FlowProfile> {
    let net = &scenario.network;
    let steps = (1.0 / resolution).round() as usize;
    if steps == 0 || (steps as f64 * resolution - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "resolution {resolution} does not divide 1"
        )));
    }

    // (class, od, available strategy indices)
    let mut blocks: Vec<(AgentClass, usize, Vec<usize>)> = Vec::new();
    for (k, od) in net.od_pairs.iter().enumerate() {
        if od.gamma_ev > 0.0 {
            let open: Vec<usize> = net.extended_paths[k]
                .iter()
                .enumerate()
                .filter(|(_, p)| design.is_open(p.station))
                .map(|(s, _)| s)
                .collect();
            if open.is_empty() {
                return Err(Error::InfeasibleMode(format!("O-D {k} has no open station")));
            }
            blocks.push((AgentClass::Ev, k, open));
        }
        if od.gamma_ncd > 0.0 {
            blocks.push((AgentClass::Ncd, k, (0..net.routes[k].len()).collect()));
        }
    }
    let strategies: usize = blocks.iter().map(|b| b.2.len()).sum();
    if strategies > 6 || net.od_pairs.len() > 2 {
        return Err(Error::TooLarge {
            strategies,
            od_pairs: net.od_pairs.len(),
        });
    }

    let grids: Vec<Vec<Vec<usize>>> = blocks
        .iter()
        .map(|(_, _, open)| compositions(steps, open.len()))
        .collect();

    let mut profile = FlowProfile::uniform(net);
    for row in profile.q.iter_mut().chain(profile.q0.iter_mut()) {
        row.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut best: Option<(f64, FlowProfile)> = None;
    let mut idx = vec![0usize; blocks.len()];
    loop {
        for (b, (class, k, open)) in blocks.iter().enumerate() {
            let row = match class {
                AgentClass::Ev => &mut profile.q[*k],
                AgentClass::Ncd => &mut profile.q0[*k],
            };
            for (j, &s) in open.iter().enumerate() {
                row[s] = grids[b][idx[b]][j] as f64 / steps as f64;
            }
        }
        let gap = equilibrium_gap(scenario, design, &profile)?;
        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
            best = Some((gap, profile.clone()));
        }
        // odometer over the per-block grids
        let mut b = 0;
        loop {
            if b == blocks.len() {
                let (_, p) = best.expect("grid is non-empty");
                return Ok(p);
            }
            idx[b] += 1;
            if idx[b] < grids[b].len() {
                break;
            }
            idx[b] = 0;
            b += 1;
        }
    }
}

/// All ways to write `total` as an ordered sum of `parts` non-negative integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::social_cost;
    use crate::design::DesignMode;
    use crate::fixtures;

    fn closed(sc: &Scenario) -> Design {
        Design::closed(sc.node_count(), DesignMode::Integer)
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(4, 1), vec![vec![4]]);
        assert_eq!(compositions(4, 2).len(), 5);
        assert_eq!(compositions(10, 3).len(), 66);
    }

    #[test]
    fn symmetric_links_split_evenly() {
        let sc = fixtures::two_link(1.0, 1.0, 0.0, 7.0);
        let r = solve_equilibrium(&sc, &closed(&sc), &Mode::NcdOnly, &SolverConfig::default())
            .unwrap();
        assert!(r.converged);
        assert!(r.gap <= 1e-6);
        assert!((r.profile.q0[0][0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn two_link_closed_form() {
        let sc = fixtures::two_link(1.0, 2.0, 0.0, 3.0);
        let r = solve_equilibrium(&sc, &closed(&sc), &Mode::NcdOnly, &SolverConfig::default())
            .unwrap();
        assert!((3.0 * r.profile.q0[0][0] - 2.0).abs() < 1e-6);
        assert!((r.theta - 6.0).abs() < 1e-5);
        let theta = social_cost(&sc, &closed(&sc), &r.profile).unwrap();
        assert!((theta - r.theta).abs() < 1e-9);
    }

    #[test]
    fn classic_frank_wolfe_agrees_with_pairwise() {
        let sc = fixtures::random_grid(11);
        let design = fixtures::random_design(&sc, 11, false);
        let pw = solve_equilibrium(&sc, &design, &Mode::Joint, &SolverConfig::default()).unwrap();
        let fw_cfg = SolverConfig {
            algorithm: Algorithm::FrankWolfe,
            certificate_tol: None,
            tolerance: 1e-5,
            max_iterations: 200_000,
            ..SolverConfig::default()
        };
        let fw = solve_equilibrium(&sc, &design, &Mode::Joint, &fw_cfg).unwrap();
        assert!(pw.converged && fw.converged);
        assert!((pw.theta - fw.theta).abs() <= 1e-3 * pw.theta);
    }

    #[test]
    fn gap_is_zero_on_unique_cheapest_path() {
        // single route: every unit of demand is on its best response
        let sc = fixtures::chain3();
        let p = FlowProfile::uniform(&sc.network);
        assert_eq!(equilibrium_gap(&sc, &closed(&sc), &p).unwrap(), 0.0);
    }

    #[test]
    fn gap_positive_when_all_mass_on_worse_route() {
        let sc = fixtures::two_link(1.0, 2.0, 0.0, 3.0);
        // all on the long link: it costs 6 while the empty short link costs 0
        let p = FlowProfile {
            q: FlowProfile::uniform(&sc.network).q,
            q0: vec![vec![0.0, 1.0]],
        };
        let gap = equilibrium_gap(&sc, &closed(&sc), &p).unwrap();
        assert!((gap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn best_response_and_ties() {
        let sc = fixtures::two_link(1.0, 1.0, 0.0, 2.0);
        let d = closed(&sc);
        let tie = FlowProfile {
            q: FlowProfile::uniform(&sc.network).q,
            q0: vec![vec![0.5, 0.5]],
        };
        assert_eq!(best_response(&sc, &d, &tie, AgentClass::Ncd, 0).unwrap(), Some(0));
        let skew = FlowProfile {
            q: FlowProfile::uniform(&sc.network).q,
            q0: vec![vec![0.9, 0.1]],
        };
        assert_eq!(best_response(&sc, &d, &skew, AgentClass::Ncd, 0).unwrap(), Some(1));
    }

    #[test]
    fn ev_mode_without_open_station_is_infeasible() {
        let sc = fixtures::two_link(1.0, 1.0, 2.0, 2.0);
        let err = solve_equilibrium(&sc, &closed(&sc), &Mode::Joint, &SolverConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::InfeasibleMode(_)));
    }

    #[test]
    fn fixed_background_is_untouched() {
        let sc = fixtures::two_station(6.0, 20.0, 0.3, &fixtures::Economics::default());
        let mut d = closed(&sc);
        for n in [5, 6] {
            let i = sc.network.node_index(n).unwrap();
            d.x[i] = 1.0;
            d.y[i] = 7.0;
        }
        let q0 = vec![vec![0.8, 0.2]];
        let r = solve_equilibrium(
            &sc,
            &d,
            &Mode::EvWithFixedNcd(q0.clone()),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert_eq!(r.profile.q0, q0);
        r.profile.validate(&sc.network).unwrap();
    }

    #[test]
    fn not_converged_is_reported() {
        let sc = fixtures::random_grid(3);
        let d = fixtures::random_design(&sc, 3, false);
        let cfg = SolverConfig {
            max_iterations: 1,
            tolerance: 1e-14,
            ..SolverConfig::default()
        };
        let r = solve_equilibrium(&sc, &d, &Mode::Joint, &cfg).unwrap();
        assert!(!r.converged);
        assert!(matches!(r.into_converged(), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn brute_force_two_link() {
        let sc = fixtures::two_link(1.0, 1.0, 0.0, 4.0);
        let p = brute_force_equilibrium(&sc, &closed(&sc), 0.1).unwrap();
        assert!((p.q0[0][0] - 0.5).abs() < 1e-12);
        let sc = fixtures::two_link(1.0, 2.0, 0.0, 3.0);
        let p = brute_force_equilibrium(&sc, &closed(&sc), 0.01).unwrap();
        assert!((p.q0[0][0] - 2.0 / 3.0).abs() <= 0.01);
    }

    #[test]
    fn brute_force_refuses_large_instances() {
        let sc = fixtures::random_grid(5);
        let d = fixtures::random_design(&sc, 5, false);
        assert!(matches!(
            brute_force_equilibrium(&sc, &d, 0.1),
            Err(Error::TooLarge { .. }) | Err(Error::InfeasibleMode(_))
        ));
    }
}
