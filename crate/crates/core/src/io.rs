//! Line-oriented text formats for scenarios and planner solutions.
//!
//! Both formats are a sequence of `[section]` headers, each followed by
//! either `key = value` lines or whitespace-separated table rows. `#` starts
//! a comment. Sections and keys appear in a fixed order and unknown ones are
//! rejected. Numbers are written in shortest round-trip form, so a save and
//! load reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::cost::BehaviourWeights;
use crate::design::{Design, DesignMode};
use crate::equilibrium::{EquilibriumResult, FlowProfile};
use crate::error::{Error, Result};
use crate::network::{build_network, Link, NodeId, OdPair, RouteConfig};
use crate::planner::{DesignEvaluation, PlannerSolution, TraceEntry};
use crate::scenario::{Scenario, SCENARIO_FORMAT_VERSION};

pub const SOLUTION_FORMAT_VERSION: u32 = 1;

struct Row<'a> {
    line: usize,
    fields: Vec<&'a str>,
}

struct Section<'a> {
    name: &'a str,
    line: usize,
    rows: Vec<Row<'a>>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn sections(source: &str) -> Result<(Vec<Section<'_>>, usize)> {
    let mut out: Vec<Section> = Vec::new();
    let mut last = 0;
    for (k, raw) in source.lines().enumerate() {
        let line = k + 1;
        last = line;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if let Some(name) = text.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line, format!("malformed section header {text:?}")))?;
            out.push(Section {
                name,
                line,
                rows: Vec::new(),
            });
            continue;
        }
        let section = out
            .last_mut()
            .ok_or_else(|| parse_err(line, "content before the first section"))?;
        section.rows.push(Row {
            line,
            fields: text.split_whitespace().collect(),
        });
    }
    Ok((out, last + 1))
}

/// Walks the sections in their required order.
struct Reader<'a> {
    sections: std::vec::IntoIter<Section<'a>>,
    end_line: usize,
}

impl<'a> Reader<'a> {
    fn new(source: &'a str) -> Result<Self> {
        let (sections, end_line) = sections(source)?;
        Ok(Self {
            sections: sections.into_iter(),
            end_line,
        })
    }

    fn section(&mut self, name: &str) -> Result<Section<'a>> {
        match self.sections.next() {
            Some(s) if s.name == name => Ok(s),
            Some(s) => Err(parse_err(s.line, format!("expected section [{name}], found [{}]", s.name))),
            None => Err(parse_err(self.end_line, format!("missing section [{name}]"))),
        }
    }

    fn finish(mut self) -> Result<()> {
        match self.sections.next() {
            Some(s) => Err(parse_err(s.line, format!("unexpected section [{}]", s.name))),
            None => Ok(()),
        }
    }
}

/// `key = value` lines of a section, consumed in order.
struct Keys<'a> {
    rows: std::iter::Peekable<std::vec::IntoIter<Row<'a>>>,
    section: &'a str,
    line: usize,
}

impl<'a> Keys<'a> {
    fn new(section: Section<'a>) -> Self {
        Self {
            line: section.line,
            section: section.name,
            rows: section.rows.into_iter().peekable(),
        }
    }

    fn split(row: &Row<'a>) -> Result<(&'a str, &'a str)> {
        match row.fields.as_slice() {
            [key, "=", value] => Ok((key, value)),
            _ => Err(parse_err(row.line, "expected `key = value`")),
        }
    }

    fn raw(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let row = self
            .rows
            .next()
            .ok_or_else(|| parse_err(self.line, format!("[{}] is missing `{key}`", self.section)))?;
        let (k, v) = Self::split(&row)?;
        if k != key {
            return Err(parse_err(row.line, format!("expected `{key}`, found `{k}`")));
        }
        self.line = row.line;
        Ok((row.line, v))
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let (line, v) = self.raw(key)?;
        v.parse()
            .map_err(|_| parse_err(line, format!("`{key}`: cannot parse {v:?}")))
    }

    fn flag(&mut self, key: &str) -> Result<bool> {
        let (line, v) = self.raw(key)?;
        parse_flag(line, v)
    }

    fn optional<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.rows.peek() {
            Some(row) if Self::split(row)?.0 == key => {}
            _ => return Ok(None),
        }
        let (line, v) = self.raw(key)?;
        if v == "none" {
            return Ok(None);
        }
        v.parse()
            .map(Some)
            .map_err(|_| parse_err(line, format!("`{key}`: cannot parse {v:?}")))
    }

    fn finish(mut self) -> Result<()> {
        match self.rows.next() {
            Some(row) => {
                let key = row.fields.first().copied().unwrap_or("");
                Err(parse_err(row.line, format!("unknown field `{key}` in [{}]", self.section)))
            }
            None => Ok(()),
        }
    }
}

fn parse_flag(line: usize, v: &str) -> Result<bool> {
    match v {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        _ => Err(parse_err(line, format!("expected a 0/1 flag, found {v:?}"))),
    }
}

fn field<T: FromStr>(row: &Row, k: usize, name: &str) -> Result<T> {
    row.fields[k]
        .parse()
        .map_err(|_| parse_err(row.line, format!("{name}: cannot parse {:?}", row.fields[k])))
}

fn expect_width(row: &Row, width: usize, what: &str) -> Result<()> {
    if row.fields.len() != width {
        return Err(parse_err(
            row.line,
            format!("{what} rows have {width} fields, found {}", row.fields.len()),
        ));
    }
    Ok(())
}

fn check_version(keys: &mut Keys, expected: u32, what: &str) -> Result<()> {
    let version: u32 = keys.get("version")?;
    if version != expected {
        let hint = if version < expected {
            format!("re-save the {what} with the current tool to upgrade it")
        } else {
            format!("this {what} was written by a newer release")
        };
        return Err(Error::VersionMismatch {
            found: version,
            expected,
            hint,
        });
    }
    Ok(())
}

fn flag_str(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn load_scenario(source: &str) -> Result<Scenario> {
    let mut reader = Reader::new(source)?;
    let mut meta = Keys::new(reader.section("meta")?);
    check_version(&mut meta, SCENARIO_FORMAT_VERSION, "scenario")?;
    let seed: u64 = meta.get("seed")?;
    meta.finish()?;

    let mut params = Keys::new(reader.section("params")?);
    let weights = BehaviourWeights {
        lambda1: params.get("lambda1")?,
        lambda2: params.get("lambda2")?,
        lambda3: params.get("lambda3")?,
    };
    let mu: f64 = params.get("mu")?;
    let pi: f64 = params.get("pi")?;
    let budget: u32 = params.get("budget")?;
    let defaults = RouteConfig::default();
    let route_cfg = RouteConfig {
        max_routes_per_od: params.optional("max_routes_per_od")?.unwrap_or(defaults.max_routes_per_od),
        max_hops: params.optional("max_hops")?.unwrap_or(defaults.max_hops),
        max_routes_total: params.optional("max_routes_total")?,
        charge_at_origin: match params.optional::<String>("charge_at_origin")? {
            Some(v) => parse_flag(params.line, &v)?,
            None => defaults.charge_at_origin,
        },
    };
    params.finish()?;

    let nodes_sec = reader.section("nodes")?;
    let mut nodes = Vec::new();
    let mut e = Vec::new();
    let mut t = Vec::new();
    let mut charging = Vec::new();
    for row in &nodes_sec.rows {
        expect_width(row, 4, "[nodes]")?;
        let id: NodeId = field(row, 0, "id")?;
        nodes.push(id);
        e.push(field::<f64>(row, 1, "e")?);
        t.push(field::<f64>(row, 2, "t")?);
        if parse_flag(row.line, row.fields[3])? {
            charging.push(id);
        }
    }

    let links_sec = reader.section("links")?;
    let mut links = Vec::new();
    for row in &links_sec.rows {
        expect_width(row, 5, "[links]")?;
        links.push(Link {
            id: field(row, 0, "id")?,
            from: field(row, 1, "from")?,
            to: field(row, 2, "to")?,
            d: field(row, 3, "d")?,
            c: field(row, 4, "c")?,
        });
    }

    let od_sec = reader.section("od")?;
    let mut od_pairs = Vec::new();
    for row in &od_sec.rows {
        expect_width(row, 4, "[od]")?;
        od_pairs.push(OdPair {
            origin: field(row, 0, "origin")?,
            dest: field(row, 1, "dest")?,
            gamma_ev: field(row, 2, "gamma_ev")?,
            gamma_ncd: field(row, 3, "gamma_ncd")?,
        });
    }
    reader.finish()?;

    // The network is indexed in sorted node order; e and t follow it.
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by_key(|&k| nodes[k]);
    let network = build_network(&nodes, links, od_pairs, &charging, route_cfg)?;
    let scenario = Scenario {
        version: SCENARIO_FORMAT_VERSION,
        seed,
        network,
        weights,
        mu,
        pi,
        budget,
        e: order.iter().map(|&k| e[k]).collect(),
        t: order.iter().map(|&k| t[k]).collect(),
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn save_scenario(scenario: &Scenario) -> String {
    let mut s = String::new();
    let net = &scenario.network;
    let w = &scenario.weights;
    let rc = &net.route_cfg;
    writeln!(s, "# chargenet scenario").unwrap();
    writeln!(s, "[meta]\nversion = {}\nseed = {}\n", scenario.version, scenario.seed).unwrap();
    writeln!(s, "[params]").unwrap();
    writeln!(s, "lambda1 = {}\nlambda2 = {}\nlambda3 = {}", w.lambda1, w.lambda2, w.lambda3).unwrap();
    writeln!(s, "mu = {}\npi = {}\nbudget = {}", scenario.mu, scenario.pi, scenario.budget).unwrap();
    writeln!(s, "max_routes_per_od = {}\nmax_hops = {}", rc.max_routes_per_od, rc.max_hops).unwrap();
    match rc.max_routes_total {
        Some(n) => writeln!(s, "max_routes_total = {n}").unwrap(),
        None => writeln!(s, "max_routes_total = none").unwrap(),
    }
    writeln!(s, "charge_at_origin = {}\n", flag_str(rc.charge_at_origin)).unwrap();
    writeln!(s, "[nodes]\n# id e t eligible").unwrap();
    for (i, id) in net.nodes().iter().enumerate() {
        writeln!(s, "{id} {} {} {}", scenario.e[i], scenario.t[i], flag_str(net.eligible[i])).unwrap();
    }
    writeln!(s, "\n[links]\n# id from to d c").unwrap();
    for l in net.links() {
        writeln!(s, "{} {} {} {} {}", l.id, l.from, l.to, l.d, l.c).unwrap();
    }
    writeln!(s, "\n[od]\n# origin dest gamma_ev gamma_ncd").unwrap();
    for od in &net.od_pairs {
        writeln!(s, "{} {} {} {}", od.origin, od.dest, od.gamma_ev, od.gamma_ncd).unwrap();
    }
    s
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    load_scenario(&fs::read_to_string(path)?)
}

pub fn write_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    Ok(fs::write(path, save_scenario(scenario))?)
}

fn opt_str(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

/// Solution documents describe designs and flows by position; node ids
/// come from `node_ids` and are written for readability only.
pub fn save_solution(solution: &PlannerSolution, node_ids: &[NodeId]) -> String {
    let mut s = String::new();
    let ev = &solution.evaluation;
    let eq = &ev.eq;
    let d = &solution.design;
    writeln!(s, "# chargenet solution").unwrap();
    writeln!(s, "[meta]\nversion = {SOLUTION_FORMAT_VERSION}").unwrap();
    writeln!(s, "method = {}\nmode = {}", solution.method, d.mode.as_str()).unwrap();
    writeln!(s, "converged = {}", flag_str(solution.converged)).unwrap();
    writeln!(s, "od_pairs = {}\n", solution.profile.q.len()).unwrap();
    writeln!(s, "[summary]\ntheta = {}", solution.theta).unwrap();
    writeln!(s, "theta_relaxed = {}", opt_str(solution.theta_relaxed)).unwrap();
    writeln!(s, "theta_adjusted = {}", opt_str(solution.theta_adjusted)).unwrap();
    writeln!(s, "feasible = {}\nbudget_ok = {}", flag_str(ev.feasible), flag_str(ev.budget_ok)).unwrap();
    writeln!(s, "evaluation_theta = {}\n", ev.theta).unwrap();
    writeln!(s, "[equilibrium]\ngap = {}\niterations = {}", eq.gap, eq.iterations).unwrap();
    writeln!(s, "potential = {}\nconverged = {}", eq.potential_value, flag_str(eq.converged)).unwrap();
    writeln!(s, "theta = {}\nwardrop_violation = {}\n", eq.theta, eq.wardrop_violation).unwrap();
    writeln!(s, "[design]\n# node x y profit_slack load").unwrap();
    for i in 0..d.x.len() {
        let id = node_ids.get(i).map_or_else(|| i.to_string(), |n| n.to_string());
        writeln!(s, "{id} {} {} {} {}", d.x[i], d.y[i], ev.profit_slack[i], ev.station_load[i]).unwrap();
    }
    for (name, rows) in [("ev_flows", &solution.profile.q), ("ncd_flows", &solution.profile.q0)] {
        writeln!(s, "\n[{name}]\n# od strategy share").unwrap();
        for (k, row) in rows.iter().enumerate() {
            for (p, share) in row.iter().enumerate() {
                writeln!(s, "{k} {p} {share}").unwrap();
            }
        }
    }
    writeln!(s, "\n[trace]\n# stage iteration evaluations theta").unwrap();
    for e in &solution.trace {
        writeln!(s, "{} {} {} {}", e.stage, e.iteration, e.evaluations, e.theta).unwrap();
    }
    writeln!(s, "\n[end]").unwrap();
    s
}

fn read_flows(section: &Section, od_pairs: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![Vec::new(); od_pairs];
    for row in &section.rows {
        expect_width(row, 3, "flow")?;
        let k: usize = field(row, 0, "od")?;
        let p: usize = field(row, 1, "strategy")?;
        if k >= od_pairs || p != out[k].len() {
            return Err(parse_err(row.line, format!("flow row ({k}, {p}) is out of order")));
        }
        out[k].push(field(row, 2, "share")?);
    }
    Ok(out)
}

pub fn load_solution(source: &str) -> Result<PlannerSolution> {
    let mut reader = Reader::new(source)?;
    let mut meta = Keys::new(reader.section("meta")?);
    check_version(&mut meta, SOLUTION_FORMAT_VERSION, "solution")?;
    let method: String = meta.get("method")?;
    let (mode_line, mode) = meta.raw("mode")?;
    let mode = match mode {
        "integer" => DesignMode::Integer,
        "relaxed" => DesignMode::Relaxed,
        other => return Err(parse_err(mode_line, format!("unknown design mode {other:?}"))),
    };
    let converged = meta.flag("converged")?;
    let od_pairs: usize = meta.get("od_pairs")?;
    meta.finish()?;

    let mut summary = Keys::new(reader.section("summary")?);
    let theta: f64 = summary.get("theta")?;
    let theta_relaxed = summary.optional("theta_relaxed")?;
    let theta_adjusted = summary.optional("theta_adjusted")?;
    let feasible = summary.flag("feasible")?;
    let budget_ok = summary.flag("budget_ok")?;
    let evaluation_theta: f64 = summary.get("evaluation_theta")?;
    summary.finish()?;

    let mut eqs = Keys::new(reader.section("equilibrium")?);
    let gap: f64 = eqs.get("gap")?;
    let iterations: usize = eqs.get("iterations")?;
    let potential_value: f64 = eqs.get("potential")?;
    let eq_converged = eqs.flag("converged")?;
    let eq_theta: f64 = eqs.get("theta")?;
    let wardrop_violation: f64 = eqs.get("wardrop_violation")?;
    eqs.finish()?;

    let design_sec = reader.section("design")?;
    let (mut x, mut y, mut slack, mut load) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for row in &design_sec.rows {
        expect_width(row, 5, "[design]")?;
        x.push(field(row, 1, "x")?);
        y.push(field(row, 2, "y")?);
        slack.push(field(row, 3, "profit_slack")?);
        load.push(field(row, 4, "load")?);
    }
    let q = read_flows(&reader.section("ev_flows")?, od_pairs)?;
    let q0 = read_flows(&reader.section("ncd_flows")?, od_pairs)?;

    let trace_sec = reader.section("trace")?;
    let mut trace = Vec::new();
    for row in &trace_sec.rows {
        expect_width(row, 4, "[trace]")?;
        trace.push(TraceEntry {
            stage: row.fields[0].to_string(),
            iteration: field(row, 1, "iteration")?,
            evaluations: field(row, 2, "evaluations")?,
            theta: field(row, 3, "theta")?,
        });
    }
    let end = reader.section("end")?;
    if let Some(row) = end.rows.first() {
        return Err(parse_err(row.line, "content after [end]"));
    }
    reader.finish()?;

    let profile = FlowProfile { q, q0 };
    Ok(PlannerSolution {
        method,
        design: Design { x, y, mode },
        profile: profile.clone(),
        theta,
        evaluation: DesignEvaluation {
            theta: evaluation_theta,
            eq: EquilibriumResult {
                profile,
                gap,
                iterations,
                potential_value,
                converged: eq_converged,
                theta: eq_theta,
                wardrop_violation,
            },
            budget_ok,
            profit_slack: slack,
            station_load: load,
            feasible,
        },
        theta_relaxed,
        theta_adjusted,
        converged,
        trace,
    })
}

pub fn read_solution(path: &Path) -> Result<PlannerSolution> {
    load_solution(&fs::read_to_string(path)?)
}

/// Design-only documents use the `[design]` table of the solution format:
/// `node x y` rows keyed by node id, nodes not listed stay closed. A full
/// solution document is accepted too.
pub fn load_design(source: &str, scenario: &Scenario) -> Result<Design> {
    let mut reader = Reader::new(source)?;
    let mut meta = Keys::new(reader.section("meta")?);
    check_version(&mut meta, SOLUTION_FORMAT_VERSION, "design")?;
    if meta.optional::<String>("method")?.is_some() {
        let design = load_solution(source)?.design;
        design.validate(scenario.node_count(), scenario.budget)?;
        return Ok(design);
    }
    let (mode_line, mode) = meta.raw("mode")?;
    let mode = match mode {
        "integer" => DesignMode::Integer,
        "relaxed" => DesignMode::Relaxed,
        other => return Err(parse_err(mode_line, format!("unknown design mode {other:?}"))),
    };
    meta.finish()?;
    let sec = reader.section("design")?;
    let mut design = Design::closed(scenario.node_count(), mode);
    for row in &sec.rows {
        if !(3..=5).contains(&row.fields.len()) {
            return Err(parse_err(row.line, "design rows are `node x y`"));
        }
        let id: NodeId = field(row, 0, "node")?;
        let i = scenario
            .network
            .node_index(id)
            .ok_or_else(|| Error::Validation(format!("design references unknown node {id}")))?;
        design.x[i] = field(row, 1, "x")?;
        design.y[i] = field(row, 2, "y")?;
    }
    reader.finish()?;
    design.validate(scenario.node_count(), scenario.budget)?;
    Ok(design)
}
