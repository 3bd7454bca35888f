//! The planner's bilevel problem: evaluating designs against the lower-level
//! equilibrium, the outer search over placements and prices, and the two
//! restricted baselines.

mod baselines;
mod search;

pub use baselines::{baseline_placement_only, baseline_price_only, uniform_placement};
pub use search::{
    solve_integer_joint, solve_integer_pricing, solve_relaxed_gaev, OptimizerConfig,
    OuterOptimizer, PatternSearch, Placement, Pricing, Problem, SearchSpace,
};

use crate::cost::social_cost;
use crate::design::{Design, DesignMode};
use crate::equilibrium::{
    solve_equilibrium, solve_equilibrium_from, EquilibriumResult, FlowProfile, Mode, SolverConfig,
};
use crate::error::{Error, Result};
use crate::network::aggregate_flows;
use crate::scenario::Scenario;

/// Profit slack below this counts as a violated profitability constraint.
pub const PROFIT_TOL: f64 = 1e-6;

/// Traffic the EV stage sees besides its own drivers.
#[derive(Debug, Clone, PartialEq)]
pub enum LowerLevel {
    /// Both classes re-equilibrate for every design.
    Joint,
    /// NCD route shares are frozen; only EV drivers respond to the design.
    FixedNcd(Vec<Vec<f64>>),
}

impl LowerLevel {
    fn mode(&self) -> Mode {
        match self {
            LowerLevel::Joint => Mode::Joint,
            LowerLevel::FixedNcd(q0) => Mode::EvWithFixedNcd(q0.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignEvaluation {
    pub theta: f64,
    pub eq: EquilibriumResult,
    pub budget_ok: bool,
    /// Revenue minus `pi` times cost, per node; 0 where no chargers are placed.
    pub profit_slack: Vec<f64>,
    pub station_load: Vec<f64>,
    pub feasible: bool,
}

impl DesignEvaluation {
    pub fn min_open_slack(&self, design: &Design) -> f64 {
        design
            .open_stations()
            .map(|i| self.profit_slack[i])
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub stage: String,
    pub iteration: usize,
    /// Design evaluations spent so far in this stage.
    pub evaluations: usize,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerSolution {
    pub method: String,
    pub design: Design,
    pub profile: FlowProfile,
    pub theta: f64,
    pub evaluation: DesignEvaluation,
    /// Best objective of the continuous relaxation, when one was solved.
    pub theta_relaxed: Option<f64>,
    /// Objective right after rounding and re-pricing, before any polish.
    pub theta_adjusted: Option<f64>,
    /// False when an iterative stage stopped at its round cap.
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

impl PlannerSolution {
    pub(crate) fn from_evaluation(method: &str, design: Design, evaluation: DesignEvaluation) -> Self {
        Self {
            method: method.to_string(),
            profile: evaluation.eq.profile.clone(),
            theta: evaluation.theta,
            design,
            evaluation,
            theta_relaxed: None,
            theta_adjusted: None,
            converged: true,
            trace: Vec::new(),
        }
    }

    /// `(theta_adjusted - theta_relaxed) / theta_relaxed`, when both are known.
    pub fn rounding_gap(&self) -> Option<f64> {
        match (self.theta_relaxed, self.theta_adjusted) {
            (Some(r), Some(a)) if r > 0.0 => Some((a - r) / r),
            _ => None,
        }
    }
}

/// Smallest price at which a station with `x` chargers serving `load`
/// covers `pi` times its electricity and rental costs.
pub fn price_floor(x: f64, e: f64, t: f64, load: f64, pi: f64) -> Result<f64> {
    if !(load > 0.0) {
        return Err(Error::ZeroLoad);
    }
    Ok(pi * (e + x * t / load))
}

/// `load * y - pi * (load * e + x * t)`.
pub fn profit_slack(load: f64, x: f64, y: f64, e: f64, t: f64, pi: f64) -> f64 {
    load * y - pi * (load * e + x * t)
}

/// Solves the lower level for `design` and scores it.
pub fn evaluate_design(
    scenario: &Scenario,
    design: &Design,
    lower: &LowerLevel,
    solver: &SolverConfig,
    warm: Option<&FlowProfile>,
) -> Result<DesignEvaluation> {
    design.validate_shape(scenario.node_count())?;
    let eq = solve_equilibrium_from(scenario, design, &lower.mode(), solver, warm)?;
    score(scenario, design, eq)
}

fn score(scenario: &Scenario, design: &Design, eq: EquilibriumResult) -> Result<DesignEvaluation> {
    let theta = social_cost(scenario, design, &eq.profile)?;
    let station_load = aggregate_flows(&scenario.network, &eq.profile)?.station_load;
    let profit_slack: Vec<f64> = (0..scenario.node_count())
        .map(|i| {
            if design.is_open(i) {
                profit_slack(
                    station_load[i],
                    design.x[i],
                    design.y[i],
                    scenario.e[i],
                    scenario.t[i],
                    scenario.pi,
                )
            } else {
                0.0
            }
        })
        .collect();
    let budget_ok = design.fits_budget(scenario.budget);
    let profitable = design.open_stations().all(|i| profit_slack[i] >= -PROFIT_TOL);
    Ok(DesignEvaluation {
        theta,
        feasible: budget_ok && eq.converged && profitable,
        eq,
        budget_ok,
        profit_slack,
        station_load,
    })
}

/// Re-scores a stored solution from its design and flows, without solving.
pub fn rescore(scenario: &Scenario, design: &Design, eq: EquilibriumResult) -> Result<DesignEvaluation> {
    score(scenario, design, eq)
}

/// Route choice of non-charging drivers alone on the bare network.
pub fn solve_ga_ncd(scenario: &Scenario, solver: &SolverConfig) -> Result<FlowProfile> {
    let closed = Design::closed(scenario.node_count(), DesignMode::Integer);
    Ok(solve_equilibrium(scenario, &closed, &Mode::NcdOnly, solver)?
        .into_converged()?
        .profile)
}
