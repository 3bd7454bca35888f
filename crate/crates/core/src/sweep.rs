//! Budget sweeps: every (replication, budget, method) cell is one planner
//! run. Rows are appended to a CSV file as cells finish, so an interrupted
//! sweep picks up where it stopped.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::abompn::{layer1_solve, AbompnConfig, Method};
use crate::design::{Design, DesignMode};
use crate::error::{Error, Result};
use crate::generate::redraw_electricity;
use crate::network::NodeId;
use crate::planner::PlannerSolution;
use crate::scenario::Scenario;

pub const SWEEP_HEADER: [&str; 10] = [
    "budget",
    "method",
    "theta",
    "feasible",
    "gap",
    "iterations",
    "stations",
    "replication",
    "seed",
    "error",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub budgets: Vec<u32>,
    pub methods: Vec<Method>,
    /// Replication 0 uses the scenario as given; the others redraw
    /// electricity prices.
    pub replications: usize,
    pub planner: AbompnConfig,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budgets.is_empty() || self.methods.is_empty() || self.replications == 0 {
            return Err(Error::Validation("sweep needs budgets, methods and at least one replication".into()));
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("budgets must be strictly ascending".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub budget: u32,
    pub method: Method,
    pub theta: Option<f64>,
    pub feasible: bool,
    /// Equilibrium gap of the returned flows.
    pub gap: Option<f64>,
    pub iterations: Option<usize>,
    /// Open stations as `node:x:y`, `;`-separated.
    pub stations: String,
    pub replication: usize,
    pub seed: u64,
    pub error: Option<String>,
}

impl SweepRow {
    fn key(&self) -> (usize, u32, Method) {
        (self.replication, self.budget, self.method)
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.budget.to_string(),
            self.method.as_str().to_string(),
            self.theta.map_or_else(String::new, |v| v.to_string()),
            u8::from(self.feasible).to_string(),
            self.gap.map_or_else(String::new, |v| v.to_string()),
            self.iterations.map_or_else(String::new, |v| v.to_string()),
            self.stations.clone(),
            self.replication.to_string(),
            self.seed.to_string(),
            self.error.clone().unwrap_or_default(),
        ]
    }

    fn from_record(rec: &csv::StringRecord) -> Result<Self> {
        let bad = |what: &str| Error::Parse {
            line: rec.position().map_or(0, |p| p.line() as usize),
            msg: format!("sweep row: bad {what}"),
        };
        if rec.len() != SWEEP_HEADER.len() {
            return Err(bad("field count"));
        }
        let opt_f = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(what))
            }
        };
        Ok(Self {
            budget: rec[0].parse().map_err(|_| bad("budget"))?,
            method: rec[1].parse().map_err(|_| bad("method"))?,
            theta: opt_f(&rec[2], "theta")?,
            feasible: &rec[3] == "1",
            gap: opt_f(&rec[4], "gap")?,
            iterations: if rec[5].is_empty() {
                None
            } else {
                Some(rec[5].parse().map_err(|_| bad("iterations"))?)
            },
            stations: rec[6].to_string(),
            replication: rec[7].parse().map_err(|_| bad("replication"))?,
            seed: rec[8].parse().map_err(|_| bad("seed"))?,
            error: (!rec[9].is_empty()).then(|| rec[9].to_string()),
        })
    }
}

pub fn format_stations(design: &Design, node_ids: &[NodeId]) -> String {
    design
        .open_stations()
        .map(|i| format!("{}:{}:{}", node_ids[i], design.x[i], design.y[i]))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn parse_stations(text: &str, scenario: &Scenario) -> Result<Design> {
    let mut design = Design::closed(scenario.node_count(), DesignMode::Integer);
    for item in text.split(';').filter(|s| !s.is_empty()) {
        let bad = || Error::Validation(format!("bad station entry {item:?}"));
        let parts: Vec<&str> = item.split(':').collect();
        let [id, x, y] = parts.as_slice() else {
            return Err(bad());
        };
        let id: NodeId = id.parse().map_err(|_| bad())?;
        let i = scenario.network.node_index(id).ok_or_else(bad)?;
        design.x[i] = x.parse().map_err(|_| bad())?;
        design.y[i] = y.parse().map_err(|_| bad())?;
    }
    Ok(design)
}

/// The scenario used by replication `r`.
pub fn replicate(scenario: &Scenario, r: usize) -> Scenario {
    if r == 0 {
        return scenario.clone();
    }
    let seed = scenario.seed.wrapping_mul(1_000_003).wrapping_add(r as u64);
    let mut out = redraw_electricity(scenario, seed);
    out.seed = seed;
    out
}

fn row_for(
    budget: u32,
    method: Method,
    replication: usize,
    sc: &Scenario,
    outcome: &Result<PlannerSolution>,
) -> SweepRow {
    match outcome {
        Ok(sol) => SweepRow {
            budget,
            method,
            theta: Some(sol.theta),
            feasible: sol.evaluation.feasible,
            gap: Some(sol.evaluation.eq.gap),
            iterations: Some(sol.evaluation.eq.iterations),
            stations: format_stations(&sol.design, sc.network.nodes()),
            replication,
            seed: sc.seed,
            error: None,
        },
        Err(e) => SweepRow {
            budget,
            method,
            theta: None,
            feasible: false,
            gap: None,
            iterations: None,
            stations: String::new(),
            replication,
            seed: sc.seed,
            error: Some(e.to_string()),
        },
    }
}

pub fn read_rows(path: &Path) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().ne(SWEEP_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: "sweep file has an unexpected header".into(),
        });
    }
    reader.records().map(|r| SweepRow::from_record(&r?)).collect()
}

pub fn write_rows(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SWEEP_HEADER)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every cell not already present in `sink`, appending rows as they
/// finish, and returns all rows sorted by replication, budget and method.
/// Within one (replication, method) chain budgets run in ascending order and
/// each run is warm-started from the previous budget's design.
pub fn sweep_budget(scenario: &Scenario, cfg: &SweepConfig, sink: Option<&Path>) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut done: BTreeMap<(usize, u32, Method), SweepRow> = BTreeMap::new();
    if let Some(path) = sink {
        if path.exists() && fs::metadata(path)?.len() > 0 {
            for row in read_rows(path)? {
                done.insert(row.key(), row);
            }
        } else {
            write_rows(path, &[])?;
        }
    }
    let writer = match sink {
        Some(path) => Some(Mutex::new(csv::Writer::from_writer(
            OpenOptions::new().append(true).open(path)?,
        ))),
        None => None,
    };

    let chains: Vec<(usize, Method)> = (0..cfg.replications)
        .flat_map(|r| cfg.methods.iter().map(move |&m| (r, m)))
        .collect();
    let fresh: Vec<Vec<SweepRow>> = chains
        .par_iter()
        .map(|&(r, method)| -> Result<Vec<SweepRow>> {
            let base = replicate(scenario, r);
            let mut warm: Option<Design> = None;
            let mut rows = Vec::new();
            for &budget in &cfg.budgets {
                let sc = base.with_budget(budget);
                if let Some(prev) = done.get(&(r, budget, method)) {
                    if prev.error.is_none() {
                        warm = Some(parse_stations(&prev.stations, &sc)?);
                    }
                    continue;
                }
                let mut planner = cfg.planner.clone();
                if let Some(w) = &warm {
                    planner.optimizer.warm_starts.insert(0, w.clone());
                }
                let outcome = layer1_solve(&sc, method, &planner);
                if let Ok(sol) = &outcome {
                    warm = Some(sol.design.clone());
                }
                let row = row_for(budget, method, r, &sc, &outcome);
                log::info!("sweep r{r} B={budget} {method}: {:?}", row.theta);
                if let Some(w) = &writer {
                    let mut w = w.lock().expect("sweep writer lock");
                    w.write_record(row.record())?;
                    w.flush()?;
                }
                rows.push(row);
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    for row in fresh.into_iter().flatten() {
        done.insert(row.key(), row);
    }
    let rows: Vec<SweepRow> = done.into_values().collect();
    if let Some(path) = sink {
        // Leave the file in the same order as the returned rows.
        write_rows(path, &rows)?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub budget: u32,
    pub method: Method,
    pub mean_theta: f64,
    /// Sample standard deviation; 0 with a single replication.
    pub std_theta: f64,
    pub replications: usize,
}

/// Mean and spread of social cost per (budget, method) over feasible cells.
pub fn plot_data(rows: &[SweepRow]) -> Vec<PlotPoint> {
    let mut groups: BTreeMap<(u32, Method), Vec<f64>> = BTreeMap::new();
    for row in rows {
        if let (true, Some(theta)) = (row.feasible, row.theta) {
            groups.entry((row.budget, row.method)).or_default().push(theta);
        }
    }
    groups
        .into_iter()
        .map(|((budget, method), v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                v.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            PlotPoint {
                budget,
                method,
                mean_theta: mean,
                std_theta: var.sqrt(),
                replications: n,
            }
        })
        .collect()
}

pub fn write_plot_data(path: &Path, points: &[PlotPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["budget", "method", "mean_theta", "std_theta", "replications"])?;
    for p in points {
        w.write_record([
            p.budget.to_string(),
            p.method.as_str().to_string(),
            p.mean_theta.to_string(),
            p.std_theta.to_string(),
            p.replications.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// First budget from which every further unit of budget lowers the curve
/// by less than `rel_tol` of its value. `curve` must be sorted by budget.
pub fn plateau_start(curve: &[(u32, f64)], rel_tol: f64) -> Option<u32> {
    (0..curve.len()).find_map(|k| {
        let flat = curve[k..].windows(2).all(|w| {
            let per_unit = (w[0].1 - w[1].1) / f64::from(w[1].0 - w[0].0);
            per_unit < rel_tol * w[0].1.abs()
        });
        (flat && k + 1 < curve.len()).then_some(curve[k].0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_detection() {
        let curve = [(1, 100.0), (2, 90.0), (3, 85.0), (4, 84.99), (5, 84.985)];
        assert_eq!(plateau_start(&curve, 1e-3), Some(3));
        assert_eq!(plateau_start(&curve[..3], 1e-3), None);
        assert_eq!(plateau_start(&[(1, 5.0)], 1e-3), None);
    }

    #[test]
    fn plot_statistics() {
        let row = |r: usize, theta: f64, feasible: bool| SweepRow {
            budget: 2,
            method: Method::Abompn,
            theta: Some(theta),
            feasible,
            gap: Some(0.0),
            iterations: Some(1),
            stations: String::new(),
            replication: r,
            seed: 0,
            error: None,
        };
        let pts = plot_data(&[row(0, 1.0, true), row(1, 3.0, true), row(2, 100.0, false)]);
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].mean_theta, 2.0);
        assert!((pts[0].std_theta - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(pts[0].replications, 2);
    }
}
