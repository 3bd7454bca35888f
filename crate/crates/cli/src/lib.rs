//! Command-line front end: argument parsing, the commands, and their exit
//! codes. Commands write their report into a buffer so they can run in-process.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use chargenet::abompn::{layer1_solve, penetration_rate, AbompnConfig, Method};
use chargenet::cost::strategy_costs;
use chargenet::design::{Design, DesignMode};
use chargenet::equilibrium::{solve_equilibrium, Mode, SolverConfig};
use chargenet::generate::{generate_nd_like, NdParams};
use chargenet::io::{load_design, read_scenario, save_solution, write_scenario};
use chargenet::network::aggregate_flows;
use chargenet::scenario::Scenario;
use chargenet::sweep::{format_stations, plot_data, plateau_start, sweep_budget, write_plot_data, SweepConfig};
use chargenet::Error;

#[derive(Parser)]
#[command(name = "chargenet", version, about = "Charger placement and pricing under coupled Wardrop equilibria")]
pub struct Cli {
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and check a scenario file.
    Validate { scenario: PathBuf },
    /// Solve the driver equilibrium for a fixed design.
    Equilibrium(EquilibriumArgs),
    /// Choose charger placements and prices.
    Plan(PlanArgs),
    /// Plan over a range of budgets.
    Sweep(SweepArgs),
    /// Write a Nguyen-Dupuis style scenario.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct EquilibriumArgs {
    scenario: PathBuf,
    /// Design file; without one no chargers are placed and only
    /// non-charging drivers are routed.
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iterations: usize,
    /// Report a profile even when the solver stops short of the tolerance.
    #[arg(long)]
    allow_nonconverged: bool,
    /// Flows CSV path.
    #[arg(long, default_value = "flows.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct OptimizerArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    max_evaluations: usize,
    #[arg(long, default_value_t = 8)]
    starts: usize,
    #[arg(long, default_value_t = 0.2)]
    alpha_threshold: f64,
}

impl OptimizerArgs {
    fn config(&self) -> AbompnConfig {
        let mut cfg = AbompnConfig {
            alpha_threshold: self.alpha_threshold,
            ..AbompnConfig::default()
        };
        cfg.optimizer.seed = self.seed;
        cfg.optimizer.max_evaluations = self.max_evaluations;
        cfg.optimizer.starts = self.starts;
        cfg
    }
}

#[derive(Args)]
struct PlanArgs {
    scenario: PathBuf,
    #[arg(long, default_value = "abompn")]
    method: Method,
    #[command(flatten)]
    opt: OptimizerArgs,
    /// Override the scenario's budget.
    #[arg(long)]
    budget: Option<u32>,
    /// Solution file path.
    #[arg(long, default_value = "solution.txt")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    scenario: PathBuf,
    /// Inclusive budget range `a..b`.
    #[arg(long, default_value = "1..10")]
    budgets: String,
    /// Comma-separated subset of joint, price_only, placement_only.
    #[arg(long, default_value = "joint")]
    methods: String,
    #[arg(long, default_value_t = 5)]
    replications: usize,
    #[command(flatten)]
    opt: OptimizerArgs,
    /// Sweep CSV path; an existing file is resumed.
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
    /// Plot data path; defaults to the sweep path with a `.plot.csv` suffix.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    budget: Option<u32>,
    #[arg(long)]
    gamma_ev: Option<f64>,
    #[arg(long)]
    gamma_ncd: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long, default_value = "scenario.txt")]
    out: PathBuf,
}

/// What a command produced: its exit status and the files it wrote.
#[derive(Debug)]
pub struct CommandOutcome {
    pub exit_code: u8,
    pub report_paths: Vec<PathBuf>,
}

impl CommandOutcome {
    fn ok(report_paths: Vec<PathBuf>) -> Self {
        Self {
            exit_code: 0,
            report_paths,
        }
    }
}

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_CONVERGENCE: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;
pub const EXIT_SWEEP_FAILED: u8 = 5;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NotConverged { .. } | Error::InfeasibleMode(_) => EXIT_CONVERGENCE,
        Error::NoFeasibleDesign(_) => EXIT_INFEASIBLE,
        _ => EXIT_INPUT,
    }
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    if let Err(e) = std::fs::metadata(path) {
        return Err(Failure {
            code: EXIT_INPUT,
            message: format!("cannot read {}: {e}", path.display()),
        });
    }
    read_scenario(path).map_err(|e| Failure {
        code: EXIT_INPUT,
        message: format!("{}: {e}", path.display()),
    })
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::from(Error::from(e)))
}

fn validate(path: &Path, out: &mut String) -> Result<CommandOutcome, Failure> {
    let sc = load(path)?;
    let net = &sc.network;
    let alpha = penetration_rate(&sc)?;
    writeln!(
        out,
        "nodes={} links={} od_pairs={} routes={} extended_paths={} alpha={alpha:.3}",
        net.nodes().len(),
        net.links().len(),
        net.od_pairs.len(),
        net.route_count(),
        net.extended_path_count(),
    )
    .unwrap();
    Ok(CommandOutcome::ok(Vec::new()))
}

fn equilibrium(args: &EquilibriumArgs, out: &mut String) -> Result<CommandOutcome, Failure> {
    let sc = load(&args.scenario)?;
    let (design, mode) = match &args.design {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure {
                code: EXIT_INPUT,
                message: format!("cannot read {}: {e}", path.display()),
            })?;
            (load_design(&text, &sc)?, Mode::Joint)
        }
        None => (Design::closed(sc.node_count(), DesignMode::Integer), Mode::NcdOnly),
    };
    let cfg = SolverConfig {
        tolerance: args.tol,
        max_iterations: args.max_iterations,
        ..SolverConfig::default()
    };
    let mut result = solve_equilibrium(&sc, &design, &mode, &cfg)?;
    if !args.allow_nonconverged {
        result = result.into_converged()?;
    }
    let flows = aggregate_flows(&sc.network, &result.profile)?;
    let costs = strategy_costs(&sc, &design, &flows)?;

    let mut w = csv::Writer::from_path(&args.out).map_err(|e| Failure::from(Error::from(e)))?;
    let mut rows = || -> Result<(), csv::Error> {
        w.write_record(["od", "class", "strategy", "share", "cost"])?;
        for (k, od) in sc.network.od_pairs.iter().enumerate() {
            let od_name = format!("{}-{}", od.origin, od.dest);
            if od.gamma_ev > 0.0 && mode != Mode::NcdOnly {
                for (p, path) in sc.network.extended_paths[k].iter().enumerate() {
                    let route = sc.network.route_of(path);
                    let name = format!("{}@{}", join_nodes(&route.nodes), path.charge_node);
                    w.write_record([
                        od_name.clone(),
                        "ev".into(),
                        name,
                        format!("{:.6}", result.profile.q[k][p]),
                        format!("{:.6}", costs.ev[k][p]),
                    ])?;
                }
            }
            if od.gamma_ncd > 0.0 {
                for (r, route) in sc.network.routes[k].iter().enumerate() {
                    w.write_record([
                        od_name.clone(),
                        "ncd".into(),
                        join_nodes(&route.nodes),
                        format!("{:.6}", result.profile.q0[k][r]),
                        format!("{:.6}", costs.ncd[k][r]),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    };
    rows().map_err(|e| Failure::from(Error::from(e)))?;
    writeln!(out, "# tol={} max_iterations={} design={}", args.tol, args.max_iterations, args.design.as_ref().map_or("none".into(), |p| p.display().to_string())).unwrap();
    writeln!(
        out,
        "theta={:.6} gap={:e} iterations={} converged={}",
        result.theta, result.gap, result.iterations, result.converged
    )
    .unwrap();
    Ok(CommandOutcome::ok(vec![args.out.clone()]))
}

fn join_nodes(nodes: &[u32]) -> String {
    nodes.iter().map(u32::to_string).collect::<Vec<_>>().join(">")
}

fn plan(args: &PlanArgs, out: &mut String) -> Result<CommandOutcome, Failure> {
    let mut sc = load(&args.scenario)?;
    if let Some(b) = args.budget {
        sc = sc.with_budget(b);
    }
    let cfg = args.opt.config();
    let sol = layer1_solve(&sc, args.method, &cfg)?;
    write(&args.out, &save_solution(&sol, sc.network.nodes()))?;

    let mut s = String::new();
    writeln!(
        s,
        "# method={} seed={} max_evaluations={} starts={} alpha_threshold={} budget={}",
        args.method, cfg.optimizer.seed, cfg.optimizer.max_evaluations, cfg.optimizer.starts, cfg.alpha_threshold, sc.budget
    )
    .unwrap();
    writeln!(s, "theta={:.6} feasible={}", sol.theta, sol.evaluation.feasible).unwrap();
    writeln!(s, "stations={}", format_stations(&sol.design, sc.network.nodes())).unwrap();
    writeln!(s, "chargers={} budget_slack={}", sol.design.total_chargers(), f64::from(sc.budget) - sol.design.total_chargers()).unwrap();
    let slacks: Vec<String> = sol
        .design
        .open_stations()
        .map(|i| format!("{}:{:.6}", sc.node_id(i), sol.evaluation.profit_slack[i]))
        .collect();
    writeln!(s, "profit_slack={}", slacks.join(";")).unwrap();
    if args.method == Method::Abompn {
        match (sol.theta_relaxed, sol.theta_adjusted, sol.rounding_gap()) {
            (Some(r), Some(a), Some(g)) => {
                writeln!(s, "theta_relaxed={r:.6} theta_adjusted={a:.6} rounding_gap={:.4}%", 100.0 * g).unwrap()
            }
            _ => writeln!(s, "rounding_gap=unavailable").unwrap(),
        }
    }
    if !sol.converged {
        writeln!(s, "warning: refinement stopped at its round cap").unwrap();
    }
    out.push_str(&s);
    Ok(CommandOutcome::ok(vec![args.out.clone()]))
}

fn parse_budgets(text: &str) -> Result<Vec<u32>, Failure> {
    let bad = || Failure {
        code: EXIT_INPUT,
        message: format!("budget range {text:?} is not of the form a..b"),
    };
    let (a, b) = text.split_once("..").ok_or_else(bad)?;
    let a: u32 = a.trim().parse().map_err(|_| bad())?;
    let b: u32 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

fn sweep(args: &SweepArgs, out: &mut String) -> Result<CommandOutcome, Failure> {
    let sc = load(&args.scenario)?;
    let methods = args
        .methods
        .split(',')
        .map(|m| m.trim().parse::<Method>())
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = SweepConfig {
        budgets: parse_budgets(&args.budgets)?,
        methods,
        replications: args.replications,
        planner: args.opt.config(),
    };
    let rows = sweep_budget(&sc, &cfg, Some(&args.out))?;
    let plot_path = args.plot.clone().unwrap_or_else(|| args.out.with_extension("plot.csv"));
    let points = plot_data(&rows);
    write_plot_data(&plot_path, &points)?;

    writeln!(
        out,
        "# budgets={} methods={} replications={} seed={} max_evaluations={}",
        args.budgets,
        cfg.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(","),
        cfg.replications,
        cfg.planner.optimizer.seed,
        cfg.planner.optimizer.max_evaluations
    )
    .unwrap();
    for &m in &cfg.methods {
        let curve: Vec<(u32, f64)> = points
            .iter()
            .filter(|p| p.method == m)
            .map(|p| (p.budget, p.mean_theta))
            .collect();
        let plateau = plateau_start(&curve, 1e-3).map_or("none".into(), |b| b.to_string());
        writeln!(out, "{m}: {} budgets with a feasible result, plateau from B={plateau}", curve.len()).unwrap();
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        writeln!(out, "{failed} of {} cells failed; see the error column", rows.len()).unwrap();
    }
    let exit_code = if failed == rows.len() { EXIT_SWEEP_FAILED } else { 0 };
    Ok(CommandOutcome {
        exit_code,
        report_paths: vec![args.out.clone(), plot_path],
    })
}

fn generate(args: &GenerateArgs) -> Result<CommandOutcome, Failure> {
    let mut params = NdParams::default();
    if let Some(b) = args.budget {
        params.budget = b;
    }
    if let Some(g) = args.gamma_ev {
        params.gamma_ev = g;
    }
    if let Some(g) = args.gamma_ncd {
        params.gamma_ncd = g;
    }
    if let Some(l) = args.lambda2 {
        params.weights.lambda2 = l;
    }
    let sc = generate_nd_like(args.seed, &params);
    write_scenario(&args.out, &sc)?;
    Ok(CommandOutcome::ok(vec![args.out.clone()]))
}

pub fn run(cli: &Cli, out: &mut String) -> Result<CommandOutcome, Failure> {
    match &cli.command {
        Command::Validate { scenario } => validate(scenario, out),
        Command::Equilibrium(a) => equilibrium(a, out),
        Command::Plan(a) => plan(a, out),
        Command::Sweep(a) => sweep(a, out),
        Command::Generate(a) => generate(a),
    }
}

/// Everything a process running the command would have produced.
#[derive(Debug)]
pub struct Execution {
    pub exit_code: u8,
    pub stdout: String,
    pub stderr: String,
}

/// Parses `args` (program name first) and runs the command, inside a pool of
/// `--threads` workers when given.
pub fn execute<I, T>(args: I) -> Execution
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let code = e.exit_code() as u8;
            return if e.use_stderr() {
                Execution { exit_code: code, stdout: String::new(), stderr: text }
            } else {
                Execution { exit_code: code, stdout: text, stderr: String::new() }
            };
        }
    };
    let mut stdout = String::new();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli, &mut stdout)),
            Err(e) => Err(Failure {
                code: EXIT_INPUT,
                message: format!("cannot start {n} worker threads: {e}"),
            }),
        },
        None => run(&cli, &mut stdout),
    };
    match result {
        Ok(outcome) => Execution {
            exit_code: outcome.exit_code,
            stdout,
            stderr: outcome
                .report_paths
                .iter()
                .map(|p| format!("wrote {}\n", p.display()))
                .collect(),
        },
        Err(f) => Execution {
            exit_code: f.code,
            stdout,
            stderr: format!("error: {}\n", f.message),
        },
    }
}
