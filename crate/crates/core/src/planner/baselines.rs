//! Restricted planners: pricing over a uniform placement, and placement
//! under floor pricing.

use super::search::{spread_integer, OptimizerConfig, OuterOptimizer, PatternSearch, Placement, Pricing, Problem, SearchSpace};
use super::{LowerLevel, PlannerSolution};
use crate::abompn::integer_adjust;
use crate::design::{Design, DesignMode};
use crate::error::Result;
use crate::scenario::Scenario;

/// `budget` chargers spread evenly over the charging-eligible nodes,
/// remainder to the lowest node ids.
pub fn uniform_placement(scenario: &Scenario) -> Vec<f64> {
    let eligible: Vec<usize> = (0..scenario.node_count())
        .filter(|&i| scenario.network.eligible[i])
        .collect();
    spread_integer(scenario.node_count(), &eligible, scenario.budget as usize)
}

/// Uniform placement; only prices are optimised.
pub fn baseline_price_only(
    scenario: &Scenario,
    lower: &LowerLevel,
    cfg: &OptimizerConfig,
) -> Result<PlannerSolution> {
    let problem = Problem {
        scenario,
        lower,
        space: SearchSpace {
            placement: Placement::Fixed(uniform_placement(scenario)),
            pricing: Pricing::Search,
        },
        stage: "price-only",
    };
    PatternSearch.optimize(&problem, cfg)
}

/// Placement only; every open station charges its profitability floor at
/// the load it ends up serving. Solved as a relaxation, rounded, then
/// improved by single-charger moves.
pub fn baseline_placement_only(
    scenario: &Scenario,
    lower: &LowerLevel,
    cfg: &OptimizerConfig,
) -> Result<PlannerSolution> {
    let relaxed = PatternSearch.optimize(
        &Problem {
            scenario,
            lower,
            space: SearchSpace {
                placement: Placement::Relaxed,
                pricing: Pricing::Floor,
            },
            stage: "placement-only/relaxed",
        },
        cfg,
    )?;
    let x = integer_adjust(&relaxed.design.x, scenario.budget)?;
    let mut starts = vec![Design {
        x,
        y: vec![0.0; scenario.node_count()],
        mode: DesignMode::Integer,
    }];
    starts.extend(cfg.warm_starts.iter().cloned());
    let int_cfg = OptimizerConfig {
        warm_starts: starts,
        ..cfg.clone()
    };
    let mut sol = PatternSearch.optimize(
        &Problem {
            scenario,
            lower,
            space: SearchSpace {
                placement: Placement::Integer,
                pricing: Pricing::Floor,
            },
            stage: "placement-only",
        },
        &int_cfg,
    )?;
    sol.theta_relaxed = Some(relaxed.theta);
    let mut trace = relaxed.trace;
    trace.append(&mut sol.trace);
    sol.trace = trace;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, Economics};

    #[test]
    fn uniform_placement_remainder() {
        let econ = Economics {
            budget: 3,
            ..Economics::default()
        };
        let sc = fixtures::two_station(2.0, 0.0, 0.0, &econ);
        // nodes 1, 2, 5, 6; only 5 and 6 are eligible
        assert_eq!(uniform_placement(&sc), vec![0.0, 0.0, 2.0, 1.0]);
        assert_eq!(uniform_placement(&sc.with_budget(2)), vec![0.0, 0.0, 1.0, 1.0]);
    }
}
