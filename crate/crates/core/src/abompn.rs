//! The double-layer approximation. Layer 1 splits the two driver classes
//! when EVs are a small share of demand (or alternates between them
//! otherwise); Layer 2 solves placements as a relaxation and rounds them.

use std::fmt;
use std::str::FromStr;

use crate::design::{Design, DesignMode};
use crate::equilibrium::{solve_equilibrium, Mode};
use crate::error::{Error, Result};
use crate::planner::{
    baseline_placement_only, baseline_price_only, evaluate_design, solve_ga_ncd,
    solve_integer_joint, solve_integer_pricing, solve_relaxed_gaev, LowerLevel, OptimizerConfig,
    PlannerSolution, TraceEntry,
};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Joint placement and pricing.
    Abompn,
    PriceOnly,
    PlacementOnly,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Abompn, Method::PriceOnly, Method::PlacementOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Abompn => "abompn",
            Method::PriceOnly => "price-only",
            Method::PlacementOnly => "placement-only",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abompn" | "joint" => Ok(Method::Abompn),
            "price-only" | "price_only" => Ok(Method::PriceOnly),
            "placement-only" | "placement_only" => Ok(Method::PlacementOnly),
            other => Err(Error::Validation(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbompnConfig {
    /// EV share of demand up to which the classes are solved one after the other.
    pub alpha_threshold: f64,
    /// Relative change in social cost that ends the alternating rounds.
    pub refine_tol: f64,
    pub refine_max_rounds: usize,
    /// Seed the final integer search with both baselines' designs.
    pub seed_with_baselines: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for AbompnConfig {
    fn default() -> Self {
        Self {
            alpha_threshold: 0.2,
            refine_tol: 1e-4,
            refine_max_rounds: 20,
            seed_with_baselines: true,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl AbompnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha_threshold) {
            return Err(Error::Validation("alpha threshold must lie in [0, 1]".into()));
        }
        if !(self.refine_tol > 0.0) || self.refine_max_rounds == 0 {
            return Err(Error::Validation("refinement tolerance and round cap must be positive".into()));
        }
        Ok(())
    }
}

/// EV share of total demand.
pub fn penetration_rate(scenario: &Scenario) -> Result<f64> {
    let ev = scenario.network.total_ev_demand();
    let total = ev + scenario.network.total_ncd_demand();
    if !(total > 0.0) {
        return Err(Error::ZeroDemand);
    }
    Ok(ev / total)
}

/// Rounds relaxed placements to integers with the same rounded total:
/// floor everything, then add one charger to the entries with the largest
/// fractional parts (lowest index first on ties).
pub fn integer_adjust(x_relaxed: &[f64], budget: u32) -> Result<Vec<f64>> {
    if let Some(v) = x_relaxed.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Validation(format!("relaxed placement {v} is not non-negative")));
    }
    let total: f64 = x_relaxed.iter().sum();
    if total > budget as f64 {
        return Err(Error::BudgetViolation {
            total,
            budget: budget as f64,
        });
    }
    let mut x: Vec<f64> = x_relaxed.iter().map(|v| v.floor()).collect();
    let s_initial: f64 = x.iter().sum();
    let delta = (total - s_initial).round() as usize;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = x_relaxed[a] - x[a];
        let fb = x_relaxed[b] - x[b];
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(delta) {
        x[i] += 1.0;
    }
    let adjusted: f64 = x.iter().sum();
    if adjusted > budget as f64 {
        return Err(Error::BudgetViolation {
            total: adjusted,
            budget: budget as f64,
        });
    }
    Ok(x)
}

/// Relaxed EV-stage search, rounding, re-pricing with placements frozen,
/// then an integer search over placements and prices seeded with the
/// rounded design.
pub fn layer2_solve(
    scenario: &Scenario,
    lower: &LowerLevel,
    cfg: &AbompnConfig,
) -> Result<PlannerSolution> {
    let opt = &cfg.optimizer;
    let relaxed = solve_relaxed_gaev(scenario, lower, opt)?;
    let x = integer_adjust(&relaxed.design.x, scenario.budget)?;
    let mut trace = relaxed.trace.clone();

    let rounded = Design {
        x: x.clone(),
        y: (0..x.len())
            .map(|i| if x[i] > 0.0 { relaxed.design.y[i] } else { 0.0 })
            .collect(),
        mode: DesignMode::Integer,
    };
    // The rounded placement can leave an O-D pair without an open station,
    // or no price can make it profitable; the integer search below may still
    // recover, so that is not an error here.
    let adjusted = if x == relaxed.design.x {
        let mut same = relaxed.clone();
        same.design.mode = DesignMode::Integer;
        Some(same)
    } else {
        let pricing_cfg = OptimizerConfig {
            warm_starts: vec![rounded.clone()],
            ..opt.clone()
        };
        match solve_integer_pricing(scenario, lower, &x, &pricing_cfg) {
            Ok(mut sol) => {
                trace.append(&mut sol.trace);
                Some(sol)
            }
            Err(Error::NoFeasibleDesign(_)) => None,
            Err(e) => return Err(e),
        }
    };

    let mut starts = vec![adjusted.as_ref().map_or(rounded, |a| a.design.clone())];
    // Already scored designs from the same search space; the best of them
    // competes with the integer search's result.
    let mut contenders: Vec<PlannerSolution> = adjusted.iter().cloned().collect();
    if cfg.seed_with_baselines {
        for baseline in [baseline_price_only, baseline_placement_only] {
            match baseline(scenario, lower, opt) {
                Ok(sol) => {
                    starts.push(sol.design.clone());
                    contenders.push(sol);
                }
                Err(Error::NoFeasibleDesign(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    starts.extend(opt.warm_starts.iter().cloned());
    let polish_cfg = OptimizerConfig {
        warm_starts: starts,
        ..opt.clone()
    };
    let mut sol = solve_integer_joint(scenario, lower, &polish_cfg)?;
    for c in contenders {
        // Re-scoring a start can land a hair above its first score through
        // solver tolerance; keep the original then.
        if c.theta < sol.theta {
            sol = PlannerSolution {
                trace: sol.trace,
                ..c
            };
        }
    }
    trace.append(&mut sol.trace);
    sol.method = "abompn".into();
    sol.theta_adjusted = adjusted.map(|a| a.theta);
    // Every integer design is also a relaxed one.
    sol.theta_relaxed = Some(relaxed.theta.min(sol.theta_adjusted.unwrap_or(f64::INFINITY)).min(sol.theta));
    sol.trace = trace;
    Ok(sol)
}

fn stage(
    scenario: &Scenario,
    method: Method,
    lower: &LowerLevel,
    cfg: &AbompnConfig,
) -> Result<PlannerSolution> {
    let mut sol = match method {
        Method::Abompn => layer2_solve(scenario, lower, cfg)?,
        Method::PriceOnly => baseline_price_only(scenario, lower, &cfg.optimizer)?,
        Method::PlacementOnly => baseline_placement_only(scenario, lower, &cfg.optimizer)?,
    };
    sol.method = method.as_str().into();
    Ok(sol)
}

/// Runs `method` for the EV stage inside the class decomposition.
pub fn layer1_solve(scenario: &Scenario, method: Method, cfg: &AbompnConfig) -> Result<PlannerSolution> {
    cfg.validate()?;
    scenario.validate()?;
    let alpha = penetration_rate(scenario)?;
    let solver = &cfg.optimizer.solver;
    let mut q0 = solve_ga_ncd(scenario, solver)?.q0;

    if scenario.network.total_ev_demand() == 0.0 {
        let closed = Design::closed(scenario.node_count(), DesignMode::Integer);
        let eval = evaluate_design(scenario, &closed, &LowerLevel::FixedNcd(q0), solver, None)?;
        return Ok(PlannerSolution::from_evaluation(method.as_str(), closed, eval));
    }
    if alpha <= cfg.alpha_threshold {
        return stage(scenario, method, &LowerLevel::FixedNcd(q0), cfg);
    }

    let mut trace = Vec::new();
    let mut best: Option<PlannerSolution> = None;
    let mut last: Option<PlannerSolution> = None;
    let mut prev_theta: Option<f64> = None;
    for round in 1..=cfg.refine_max_rounds {
        let mut round_cfg = cfg.clone();
        if let Some(prev) = &last {
            round_cfg.optimizer.warm_starts.insert(0, prev.design.clone());
        }
        let mut sol = stage(scenario, method, &LowerLevel::FixedNcd(q0.clone()), &round_cfg)?;
        trace.append(&mut sol.trace);
        trace.push(TraceEntry {
            stage: "refine".into(),
            iteration: round,
            evaluations: 0,
            theta: sol.theta,
        });
        let done = prev_theta.is_some_and(|p| (sol.theta - p).abs() <= cfg.refine_tol * sol.theta.abs());
        prev_theta = Some(sol.theta);
        if best.as_ref().is_none_or(|b| sol.theta < b.theta) {
            best = Some(sol.clone());
        }
        if done {
            sol.trace = trace;
            return Ok(sol);
        }
        q0 = solve_equilibrium(scenario, &sol.design, &Mode::NcdWithFixedEv(sol.profile.q.clone()), solver)?
            .into_converged()?
            .profile
            .q0;
        last = Some(sol);
    }
    log::warn!("refinement stopped at the round cap; returning the best round");
    let mut sol = best.expect("at least one round ran");
    sol.converged = false;
    sol.trace = trace;
    Ok(sol)
}

/// The full pipeline with joint placement and pricing.
pub fn abompn_solve(scenario: &Scenario, cfg: &AbompnConfig) -> Result<PlannerSolution> {
    layer1_solve(scenario, Method::Abompn, cfg)
}
