//! Projected pattern search over placements and prices.
//!
//! Every candidate is repaired before it is scored: stations left without
//! load are closed, and prices below the profitability floor are lifted to
//! it. The search therefore moves between feasible designs and compares
//! them by social cost alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{evaluate_design, price_floor, DesignEvaluation, LowerLevel, PlannerSolution, TraceEntry};
use crate::design::{Design, DesignMode};
use crate::equilibrium::{FlowProfile, SolverConfig};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Loads at or below this count as an unused station.
const ZERO_LOAD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub seed: u64,
    /// Number of start designs, structured ones included.
    pub starts: usize,
    /// Design evaluations allowed per call.
    pub max_evaluations: usize,
    /// First placement step; defaults to a quarter of the budget.
    pub initial_step: Option<f64>,
    pub min_step: f64,
    pub price_step: f64,
    pub min_price_step: f64,
    /// How many of the best starts are searched to convergence.
    pub polish_starts: usize,
    pub repair_rounds: usize,
    pub solver: SolverConfig,
    /// Designs tried before the generated starts.
    pub warm_starts: Vec<Design>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            starts: 8,
            max_evaluations: 2000,
            initial_step: None,
            min_step: 1e-2,
            price_step: 1.0,
            min_price_step: 1e-2,
            polish_starts: 2,
            repair_rounds: 24,
            // Candidates are told apart by small differences in social cost,
            // so equilibria are solved well past the default tolerance.
            solver: SolverConfig {
                tolerance: 1e-9,
                certificate_tol: Some(1e-8),
                ..SolverConfig::default()
            },
            warm_starts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    /// Real-valued charger counts.
    Relaxed,
    /// Integer charger counts moved one at a time.
    Integer,
    /// Counts held at the given vector (up to closing unused stations).
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pricing {
    Search,
    /// Every open station charges its profitability floor.
    Floor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub placement: Placement,
    pub pricing: Pricing,
}

impl SearchSpace {
    fn mode(&self) -> DesignMode {
        match self.placement {
            Placement::Relaxed => DesignMode::Relaxed,
            Placement::Integer | Placement::Fixed(_) => DesignMode::Integer,
        }
    }
}

pub struct Problem<'a> {
    pub scenario: &'a Scenario,
    pub lower: &'a LowerLevel,
    pub space: SearchSpace,
    /// Label used in the trace.
    pub stage: &'a str,
}

/// Outer method over the design space. The pattern search is the only one
/// shipped; alternatives plug in here.
pub trait OuterOptimizer {
    fn optimize(&self, problem: &Problem, cfg: &OptimizerConfig) -> Result<PlannerSolution>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PatternSearch;

#[derive(Debug, Clone)]
struct Candidate {
    design: Design,
    eval: Option<DesignEvaluation>,
    objective: f64,
}

impl Candidate {
    fn infeasible(design: Design, eval: Option<DesignEvaluation>) -> Self {
        Self {
            design,
            eval,
            objective: f64::INFINITY,
        }
    }

    fn profile(&self) -> Option<&FlowProfile> {
        self.eval.as_ref().map(|e| &e.eq.profile)
    }
}

/// Scales `x` down until its float sum is within `budget`.
fn fit_budget(x: &mut [f64], budget: f64) {
    loop {
        let s: f64 = x.iter().sum();
        if s <= budget {
            return;
        }
        let f = budget / s * (1.0 - f64::EPSILON);
        x.iter_mut().for_each(|v| *v *= f);
    }
}

/// A candidate before repair. With `floor` set, open stations are priced at
/// their profitability floor and `y` only seeds the fixed-point iteration;
/// otherwise `y` is a proposal that is lifted where it falls short.
#[derive(Debug, Clone)]
struct Proposal {
    x: Vec<f64>,
    y: Vec<f64>,
    floor: bool,
}

impl Proposal {
    fn at_floor(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y, floor: true }
    }

    fn priced(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y, floor: false }
    }
}

/// Floor-priced stations accept prices this far above the floor.
const FLOOR_BAND: f64 = 1e-5;

fn assess(
    problem: &Problem,
    cfg: &OptimizerConfig,
    proposal: Proposal,
    warm: Option<&FlowProfile>,
) -> Result<Candidate> {
    let sc = problem.scenario;
    let at_floor = proposal.floor || problem.space.pricing == Pricing::Floor;
    let mut design = Design {
        x: proposal.x,
        y: proposal.y,
        mode: problem.space.mode(),
    };
    // A station opening without a price starts at its floor for a load share
    // proportional to its chargers, `pi * (e + t * sum(x) / demand)`. Starting
    // far above that leaves it empty and it would be closed straight away.
    let demand = sc.network.total_ev_demand();
    let chargers: f64 = design.x.iter().sum();
    let per_load = if demand > 0.0 { chargers / demand } else { 1.0 };
    for i in 0..design.x.len() {
        if design.x[i] <= 0.0 {
            design.y[i] = 0.0;
        } else if at_floor && design.y[i] <= 0.0 {
            design.y[i] = sc.pi * (sc.e[i] + sc.t[i] * per_load);
        }
    }
    let mut warm = warm.cloned();
    let mut last = None;
    // (price, floor) at each station's previous update, for a secant step
    // on the fixed point `y = floor(load(y))`.
    let mut prev: Vec<Option<(f64, f64)>> = vec![None; design.x.len()];
    for round in 0..cfg.repair_rounds {
        let eval = match evaluate_design(sc, &design, problem.lower, &cfg.solver, warm.as_ref()) {
            Ok(e) => e,
            Err(Error::InfeasibleMode(_)) => return Ok(Candidate::infeasible(design, None)),
            Err(e) => return Err(e),
        };
        if !eval.eq.converged {
            return Ok(Candidate::infeasible(design, Some(eval)));
        }
        // A margin that grows geometrically guarantees termination even when
        // the secant estimate keeps falling short.
        let mut margin = 1e-10 * 4f64.powi(round as i32);
        if at_floor {
            margin = margin.min(FLOOR_BAND / 2.0);
        }
        let mut changed = false;
        for i in 0..design.x.len() {
            if !design.is_open(i) {
                continue;
            }
            let load = eval.station_load[i];
            if load <= ZERO_LOAD {
                design.x[i] = 0.0;
                design.y[i] = 0.0;
                changed = true;
                continue;
            }
            let y = design.y[i];
            let floor = price_floor(design.x[i], sc.e[i], sc.t[i], load, sc.pi)?;
            let short = eval.profit_slack[i] < 0.0;
            let above = at_floor && y > floor * (1.0 + FLOOR_BAND);
            if !(short || above) {
                continue;
            }
            // Iterating y <- floor never crosses the fixed point, so neither
            // does any target at or above the current floor.
            let mut target = floor;
            if let Some((yp, fp)) = prev[i] {
                let slope = ((floor - y) - (fp - yp)) / (y - yp);
                if y != yp && slope < 0.0 {
                    target = target.max(y - (floor - y) / slope);
                }
            }
            prev[i] = Some((y, floor));
            design.y[i] = target * (1.0 + margin);
            changed = true;
        }
        if !changed {
            let objective = if eval.feasible { eval.theta } else { f64::INFINITY };
            return Ok(Candidate {
                design,
                eval: Some(eval),
                objective,
            });
        }
        warm = Some(eval.eq.profile.clone());
        last = Some(eval);
    }
    Ok(Candidate::infeasible(design, last))
}

struct Run<'p, 'a> {
    problem: &'p Problem<'a>,
    cfg: &'p OptimizerConfig,
    usable: Vec<usize>,
    budget: f64,
    evaluations: usize,
    trace: Vec<TraceEntry>,
}

impl Run<'_, '_> {
    fn remaining(&self) -> usize {
        self.cfg.max_evaluations.saturating_sub(self.evaluations)
    }

    fn assess_all(
        &mut self,
        mut moves: Vec<Proposal>,
        warm: Option<&FlowProfile>,
    ) -> Result<Vec<Candidate>> {
        moves.truncate(self.remaining());
        self.evaluations += moves.len();
        let (problem, cfg) = (self.problem, self.cfg);
        moves
            .into_par_iter()
            .map(|p| assess(problem, cfg, p, warm))
            .collect()
    }

    fn starts(&self) -> Vec<Proposal> {
        let sc = self.problem.scenario;
        let n = sc.node_count();
        let space = &self.problem.space;
        let mut out = Vec::new();
        for d in &self.cfg.warm_starts {
            let x = match &space.placement {
                Placement::Fixed(x) => x.clone(),
                Placement::Integer => d.x.iter().map(|v| v.round()).collect(),
                Placement::Relaxed => d.x.clone(),
            };
            let mut x = x;
            if space.placement == Placement::Relaxed {
                fit_budget(&mut x, self.budget);
            }
            if x.iter().sum::<f64>() > self.budget {
                continue;
            }
            out.push(Proposal::priced(x.clone(), d.y.clone()));
            out.push(Proposal::at_floor(x, d.y.clone()));
        }
        let base = match &space.placement {
            Placement::Fixed(x) => x.clone(),
            Placement::Relaxed => {
                let mut x = vec![0.0; n];
                if !self.usable.is_empty() {
                    let share = self.budget / self.usable.len() as f64;
                    self.usable.iter().for_each(|&i| x[i] = share);
                }
                fit_budget(&mut x, self.budget);
                x
            }
            Placement::Integer => spread_integer(n, &self.usable, self.budget as usize),
        };
        out.push(Proposal::at_floor(base, vec![0.0; n]));

        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        while out.len() < self.cfg.starts.max(1) && !self.usable.is_empty() {
            let x = match &space.placement {
                Placement::Fixed(x) => x.clone(),
                Placement::Relaxed => {
                    let k = rng.gen_range(1..=self.usable.len().min(6));
                    let mut x = vec![0.0; n];
                    let total = self.budget * rng.gen_range(0.5..=1.0);
                    let picks = pick(&mut rng, &self.usable, k);
                    let w: Vec<f64> = picks.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
                    let ws: f64 = w.iter().sum();
                    for (&i, wi) in picks.iter().zip(&w) {
                        x[i] = total * wi / ws;
                    }
                    fit_budget(&mut x, self.budget);
                    x
                }
                Placement::Integer => {
                    let k = rng.gen_range(1..=self.usable.len().min(6));
                    let picks = pick(&mut rng, &self.usable, k);
                    let units = ((self.budget * rng.gen_range(0.5..=1.0)).round() as usize).max(1);
                    let mut x = vec![0.0; n];
                    for _ in 0..units.min(self.budget as usize) {
                        x[picks[rng.gen_range(0..picks.len())]] += 1.0;
                    }
                    x
                }
            };
            if space.pricing == Pricing::Search && rng.gen_bool(0.5) {
                let y = (0..n)
                    .map(|i| sc.pi * (sc.e[i] + rng.gen_range(0.0..=sc.t[i].max(1.0))))
                    .collect();
                out.push(Proposal::priced(x, y));
            } else {
                out.push(Proposal::at_floor(x, vec![0.0; n]));
            }
        }
        out
    }

    fn polls(&self, inc: &Design, hx: f64, hy: f64) -> Vec<Proposal> {
        let mut out = Vec::new();
        let space = &self.problem.space;
        // A placement move shifts every station's load and so its floor;
        // those candidates go back to floor prices and price moves add markups.
        let h = match space.placement {
            Placement::Relaxed => Some(hx),
            Placement::Integer => Some(1.0),
            Placement::Fixed(_) => None,
        };
        if let Some(h) = h {
            let total: f64 = inc.x.iter().sum();
            for &i in &self.usable {
                if total + h <= self.budget {
                    let mut x = inc.x.clone();
                    x[i] += h;
                    fit_budget(&mut x, self.budget);
                    out.push(Proposal::at_floor(x, inc.y.clone()));
                }
            }
            for &i in &self.usable {
                if inc.x[i] <= 0.0 {
                    continue;
                }
                let amount = h.min(inc.x[i]);
                let mut x = inc.x.clone();
                x[i] = snap(x[i] - amount);
                out.push(Proposal::at_floor(x, inc.y.clone()));
                for &j in &self.usable {
                    if j == i {
                        continue;
                    }
                    let mut x = inc.x.clone();
                    x[i] = snap(x[i] - amount);
                    x[j] += amount;
                    fit_budget(&mut x, self.budget);
                    out.push(Proposal::at_floor(x, inc.y.clone()));
                }
            }
        }
        if space.pricing == Pricing::Search {
            for i in inc.open_stations() {
                for delta in [hy, -hy] {
                    let mut y = inc.y.clone();
                    y[i] = (y[i] + delta).max(0.0);
                    out.push(Proposal::priced(inc.x.clone(), y));
                }
            }
        }
        out
    }

    fn search(&mut self, start: Candidate) -> Result<Candidate> {
        let space = &self.problem.space;
        let mut inc = start;
        let mut hx = self
            .cfg
            .initial_step
            .unwrap_or((self.budget / 4.0).max(self.cfg.min_step));
        let mut hy = self.cfg.price_step;
        let mut iteration = 0;
        while self.remaining() > 0 {
            let moves = self.polls(&inc.design, hx, hy);
            let warm = inc.profile().cloned();
            let cands = self.assess_all(moves, warm.as_ref())?;
            let best = cands
                .into_iter()
                .reduce(|a, b| if b.objective < a.objective { b } else { a });
            iteration += 1;
            let improved = match best {
                Some(b) if b.objective < inc.objective - 1e-12 * inc.objective.abs().max(1.0) => {
                    inc = b;
                    true
                }
                _ => false,
            };
            self.trace.push(TraceEntry {
                stage: self.problem.stage.to_string(),
                iteration,
                evaluations: self.evaluations,
                theta: inc.objective,
            });
            if improved {
                continue;
            }
            let x_shrinks = space.placement == Placement::Relaxed && hx >= self.cfg.min_step;
            let y_shrinks = space.pricing == Pricing::Search && hy >= self.cfg.min_price_step;
            if !x_shrinks && !y_shrinks {
                break;
            }
            if x_shrinks {
                hx /= 2.0;
            }
            if y_shrinks {
                hy /= 2.0;
            }
        }
        log::debug!(
            "{}: theta {} after {} evaluations",
            self.problem.stage,
            inc.objective,
            self.evaluations
        );
        Ok(inc)
    }
}

fn snap(v: f64) -> f64 {
    if v < 1e-9 {
        0.0
    } else {
        v
    }
}

fn pick(rng: &mut impl Rng, from: &[usize], k: usize) -> Vec<usize> {
    let mut pool = from.to_vec();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k.min(pool.len()) {
        out.push(pool.swap_remove(rng.gen_range(0..pool.len())));
    }
    out.sort_unstable();
    out
}

/// `units` chargers spread evenly over `over`, remainder to the lowest indices.
pub(crate) fn spread_integer(n: usize, over: &[usize], units: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    if over.is_empty() {
        return x;
    }
    let each = units / over.len();
    let rest = units % over.len();
    for (k, &i) in over.iter().enumerate() {
        x[i] = (each + usize::from(k < rest)) as f64;
    }
    x
}

impl OuterOptimizer for PatternSearch {
    fn optimize(&self, problem: &Problem, cfg: &OptimizerConfig) -> Result<PlannerSolution> {
        let sc = problem.scenario;
        let mut run = Run {
            problem,
            cfg,
            usable: sc.network.usable_stations(),
            budget: sc.budget as f64,
            evaluations: 0,
            trace: Vec::new(),
        };
        let starts = run.starts();
        let mut cands = run.assess_all(starts, None)?;
        // Stable sort keeps generation order among equal objectives.
        cands.sort_by(|a, b| a.objective.total_cmp(&b.objective));
        let mut best: Option<Candidate> = None;
        for start in cands.into_iter().take(cfg.polish_starts.max(1)) {
            if !start.objective.is_finite() {
                break;
            }
            let found = run.search(start)?;
            if best.as_ref().is_none_or(|b| found.objective < b.objective) {
                best = Some(found);
            }
        }
        let Some(Candidate {
            design,
            eval: Some(eval),
            ..
        }) = best
        else {
            return Err(Error::NoFeasibleDesign(format!(
                "{}: no start could be repaired into a feasible design",
                problem.stage
            )));
        };
        let mut sol = PlannerSolution::from_evaluation(problem.stage, design, eval);
        sol.trace = run.trace;
        Ok(sol)
    }
}

/// Continuous placements and prices for the EV stage over `lower`.
pub fn solve_relaxed_gaev(
    scenario: &Scenario,
    lower: &LowerLevel,
    cfg: &OptimizerConfig,
) -> Result<PlannerSolution> {
    let problem = Problem {
        scenario,
        lower,
        space: SearchSpace {
            placement: Placement::Relaxed,
            pricing: Pricing::Search,
        },
        stage: "relaxed",
    };
    PatternSearch.optimize(&problem, cfg)
}

/// Prices for the integer placement `x`, which stays fixed.
pub fn solve_integer_pricing(
    scenario: &Scenario,
    lower: &LowerLevel,
    x: &[f64],
    cfg: &OptimizerConfig,
) -> Result<PlannerSolution> {
    let problem = Problem {
        scenario,
        lower,
        space: SearchSpace {
            placement: Placement::Fixed(x.to_vec()),
            pricing: Pricing::Search,
        },
        stage: "pricing",
    };
    PatternSearch.optimize(&problem, cfg)
}

/// Integer placements and prices together, from `cfg.warm_starts` and
/// generated starts.
pub fn solve_integer_joint(
    scenario: &Scenario,
    lower: &LowerLevel,
    cfg: &OptimizerConfig,
) -> Result<PlannerSolution> {
    let problem = Problem {
        scenario,
        lower,
        space: SearchSpace {
            placement: Placement::Integer,
            pricing: Pricing::Search,
        },
        stage: "integer",
    };
    PatternSearch.optimize(&problem, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_fit_is_exact() {
        let mut x = vec![0.1; 30];
        x[3] += 1e-12;
        fit_budget(&mut x, 3.0);
        assert!(x.iter().sum::<f64>() <= 3.0);
        let mut y = vec![0.5, 0.25];
        fit_budget(&mut y, 1.0);
        assert_eq!(y, vec![0.5, 0.25]);
    }

    #[test]
    fn spread_remainder_goes_first() {
        assert_eq!(spread_integer(5, &[0, 2, 3, 4], 3), vec![1.0, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(spread_integer(3, &[0, 1, 2], 7), vec![3.0, 2.0, 2.0]);
        assert_eq!(spread_integer(2, &[], 7), vec![0.0, 0.0]);
    }
}
