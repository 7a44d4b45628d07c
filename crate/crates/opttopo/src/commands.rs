//! Command implementations. Each writes its report to `out` and returns
//! an error carrying the exit code.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use opttopo_core::baselines::{
    center_start, penalty_search, random_configurations, PenaltyOptions,
};
use opttopo_core::engine::combinations;
use opttopo_core::identification::{fit_spec, Dataset, DEFAULT_DEGREE};
use opttopo_core::model::DimensionKind;
use opttopo_core::plan::{Plan, DEFAULT_TIE_TOLERANCE};
use opttopo_core::refplant::{build_cooling_complex, realize_with, sample_dataset, DEFAULT_SEED};
use opttopo_core::topology::order_names;
use opttopo_core::{
    build_graph, evaluation_report, lookup, propagate, EvalCounter, LookupResult, Settings,
    SolvedSystem, SystemGraph,
};
use serde::Serialize;

use crate::formats::{self, BENCH_MAGIC, COMPARE_MAGIC};
use crate::report::{growth_factors, BenchRow, CompareRow};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "opttopo", version, about = "Topology-based set-point optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a system file and print its topology.
    Validate { system: PathBuf },
    /// Refit the models of a system from datasets.
    Fit(FitArgs),
    /// Solve all node tables and store them.
    Solve(SolveArgs),
    /// Answer requests from a stored table. Evaluates no model.
    Lookup(LookupArgs),
    /// Compare the table against the baselines.
    Compare(CompareArgs),
    /// Grid growth of combinations and evaluations.
    Bench(BenchArgs),
    /// The built-in cooling complex.
    Refplant {
        #[command(subcommand)]
        action: RefplantAction,
    },
}

#[derive(Debug, Args)]
pub struct Discretization {
    /// Steps per parameter dimension.
    #[arg(long, default_value_t = 5)]
    pub qphi: u32,
    /// Step of every flow grid, overriding the system file.
    #[arg(long)]
    pub flow_step: Option<f64>,
    /// External parameter value, `name=value`.
    #[arg(long = "theta", value_parser = parse_assignment)]
    pub theta: Vec<(String, f64)>,
    /// Relative tolerance under which table entries count as ties.
    #[arg(long, env = "OPTTOPO_TIE_TOL", default_value_t = DEFAULT_TIE_TOLERANCE)]
    pub tie_tol: f64,
}

impl Discretization {
    pub fn settings(&self) -> Result<Settings, CliError> {
        if self.qphi < 1 {
            return Err(CliError::Usage("--qphi must be at least 1".into()));
        }
        if !(self.tie_tol >= 0.0 && self.tie_tol.is_finite()) {
            return Err(CliError::Usage(format!("bad tie tolerance {}", self.tie_tol)));
        }
        let mut s = Settings::with_steps(self.qphi);
        s.flow_step = self.flow_step;
        s.tie_tolerance = self.tie_tol;
        s.external = self.theta.iter().cloned().collect();
        Ok(s)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub system: PathBuf,
    /// Dataset for one node or model, `name=path`. Repeatable.
    #[arg(long = "data", value_parser = parse_path_assignment, required = true)]
    pub data: Vec<(String, PathBuf)>,
    #[arg(long, default_value_t = DEFAULT_DEGREE)]
    pub degree: u32,
    /// Where to write the fitted system.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub system: PathBuf,
    #[command(flatten)]
    pub grid: Discretization,
    /// Where to write the solved table.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LookupArgs {
    pub table: PathBuf,
    /// Requested benefit. Repeatable.
    #[arg(long = "request", required = true, allow_negative_numbers = true)]
    pub requests: Vec<f64>,
    /// Print the results as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub system: PathBuf,
    #[arg(long = "request", required = true, allow_negative_numbers = true)]
    pub requests: Vec<f64>,
    /// Comma separated: `dp`, `random:N`, `penalty`.
    #[arg(long, default_value = "dp,random:100,penalty")]
    pub methods: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub grid: Discretization,
    /// System whose models realize the configurations; defaults to the
    /// compared system itself.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Largest accepted benefit violation of the penalty search.
    #[arg(long, env = "OPTTOPO_PENALTY_TOL", default_value_t = PenaltyOptions::default().tolerance)]
    pub penalty_tol: f64,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub system: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5,20,40")]
    pub qphi_list: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "5,10")]
    pub flow_steps: Vec<f64>,
    /// Count combinations only, without solving.
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long, env = "OPTTOPO_TIE_TOL", default_value_t = DEFAULT_TIE_TOLERANCE)]
    pub tie_tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum RefplantAction {
    /// Write the system file and one sampled dataset per node.
    Export {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        rows: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_owned(), v))
}

fn parse_path_assignment(s: &str) -> Result<(String, PathBuf), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=path, got `{s}`"))?;
    Ok((k.trim().to_owned(), PathBuf::from(v)))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { system } => validate(&system, out),
        Command::Fit(a) => fit(&a, out),
        Command::Solve(a) => solve(&a, out),
        Command::Lookup(a) => lookup_cmd(&a, out),
        Command::Compare(a) => compare(&a, out),
        Command::Bench(a) => bench(&a, out),
        Command::Refplant {
            action: RefplantAction::Export { seed, rows, out_dir },
        } => export(seed, rows, &out_dir, out),
    }
}

fn load_graph(path: &Path) -> Result<SystemGraph, CliError> {
    Ok(build_graph(&formats::load_system(path)?)?)
}

fn kind_name(k: DimensionKind) -> &'static str {
    match k {
        DimensionKind::Free => "free",
        DimensionKind::External => "external",
        DimensionKind::Coupling => "coupling",
        DimensionKind::Effort => "effort",
        DimensionKind::Benefit => "benefit",
        DimensionKind::Internal => "internal",
    }
}

pub fn validate(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let g = load_graph(path)?;
    writeln!(out, "order: {}", order_names(&g).join(" -> "))?;
    writeln!(out, "nodes: {}", g.nodes.len())?;
    writeln!(out, "dimensions:")?;
    for d in g.dimensions.values() {
        let unit = if d.unit.is_empty() { "-" } else { &d.unit };
        writeln!(
            out,
            "  {:<20} {:<9} {:<6} [{}, {}]",
            d.name,
            kind_name(d.kind),
            unit,
            d.lo,
            d.hi
        )?;
    }
    writeln!(out, "topology:")?;
    writeln!(out, "root")?;
    for (ty, w) in &g.weights {
        writeln!(out, "  {ty} (weight {w})")?;
        for d in g.root_draws.iter().filter(|d| &d.energy_type == ty) {
            writeln!(out, "    -> {} [{}]", g.nodes[d.node].name, d.dimension)?;
        }
    }
    for &n in g.node_order() {
        let node = &g.nodes[n];
        writeln!(out, "{}", node.name)?;
        let params: Vec<&str> = node.free_params.iter().map(String::as_str).collect();
        let xi: Vec<&str> = node.coupling_params.iter().map(String::as_str).collect();
        writeln!(out, "  free: {}", list_or_dash(&params))?;
        writeln!(out, "  coupling: {}", list_or_dash(&xi))?;
        if !node.external_params.is_empty() {
            writeln!(out, "  external: {}", node.external_params.join(", "))?;
        }
        for (_, e) in g.outgoing(n) {
            writeln!(
                out,
                "  -> {} [{}, step {}]",
                g.nodes[e.to].name, e.dimension, e.step_size
            )?;
        }
        if n == g.sink.node {
            writeln!(out, "  -> sink [{}, step {}]", g.sink.dimension, g.sink.step_size)?;
        }
    }
    writeln!(out, "valid")?;
    Ok(())
}

fn list_or_dash(v: &[&str]) -> String {
    if v.is_empty() {
        "-".into()
    } else {
        v.join(", ")
    }
}

pub fn fit(a: &FitArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = formats::load_system(&a.system)?;
    let mut data: BTreeMap<String, Dataset> = BTreeMap::new();
    for (name, path) in &a.data {
        // node names resolve to their model
        let model = spec
            .nodes
            .iter()
            .find(|n| &n.name == name)
            .map(|n| n.model.clone())
            .or_else(|| spec.model(name).map(|m| m.name.clone()))
            .ok_or_else(|| CliError::Usage(format!("no node or model named `{name}`")))?;
        data.insert(model, formats::load_dataset(path)?);
    }
    let (fitted, reports) = fit_spec(&spec, &data, a.degree)?;
    build_graph(&fitted)?;
    formats::write_file(&a.out, &formats::write_system(&fitted))?;
    writeln!(out, "model,output,rows,dropped,rms,relative_rms,r_squared")?;
    // reports come in model order, one per output
    let models = spec
        .models
        .iter()
        .filter(|m| data.contains_key(&m.name))
        .flat_map(|m| m.outputs.iter().map(move |_| &m.name));
    for (model, r) in models.zip(&reports) {
        let rel = if r.scale > 0.0 { r.rms / r.scale } else { r.rms };
        writeln!(
            out,
            "{model},{},{},{},{:e},{:e},{}",
            r.output, r.rows, r.dropped, r.rms, rel, r.r_squared
        )?;
    }
    Ok(())
}

/// Propagates and records the wall time.
pub fn timed_solve(g: &SystemGraph, settings: &Settings) -> Result<SolvedSystem, CliError> {
    let t = Instant::now();
    let mut s = propagate(g, settings)?;
    s.wall_time = t.elapsed();
    Ok(s)
}

pub fn solve(a: &SolveArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let g = load_graph(&a.system)?;
    let settings = a.grid.settings()?;
    let s = timed_solve(&g, &settings)?;
    if let Some(p) = &a.out {
        formats::write_file(p, &formats::write_table(&s))?;
    }
    let r = evaluation_report(&s);
    writeln!(out, "qphi {}", r.param_steps)?;
    match r.flow_step {
        Some(f) => writeln!(out, "flow_step {f}")?,
        None => writeln!(out, "flow_step file")?,
    }
    writeln!(out, "combinations {}", r.combinations)?;
    writeln!(out, "eval_count {}", r.eval_count)?;
    writeln!(out, "candidates {}", r.candidates)?;
    writeln!(out, "wall_time_s {:.6}", r.wall_time_secs)?;
    writeln!(out, "sink_levels {}", s.sink_levels().len())?;
    for (node, keys, entries) in &r.table_sizes {
        writeln!(out, "table {node:?} keys {keys} entries {entries}")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct LookupReport<'a> {
    results: &'a [LookupResult],
    evaluations: u64,
}

pub fn lookup_cmd(a: &LookupArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let s = formats::load_table(&a.table)?;
    let before = s.eval_count;
    let results: Vec<LookupResult> = a.requests.iter().map(|&r| lookup(&s, r)).collect();
    let evaluations = s.eval_count - before;
    if a.json {
        let report = LookupReport {
            results: &results,
            evaluations,
        };
        serde_json::to_writer(&mut *out, &report).map_err(formats::FormatError::from)?;
        writeln!(out)?;
        return Ok(());
    }
    for (req, r) in a.requests.iter().zip(&results) {
        match r {
            LookupResult::NoSolution { level: None, .. } => {
                writeln!(out, "request {req}: no solution (outside the sink grid)")?;
            }
            LookupResult::NoSolution { level: Some(l), .. } => {
                writeln!(out, "request {req}: no solution at level {l}")?;
            }
            LookupResult::Found {
                level,
                configurations,
                truncated,
            } => {
                let more = if *truncated { " (ties truncated)" } else { "" };
                writeln!(
                    out,
                    "request {req}: level {level}, {} configuration(s){more}",
                    configurations.len()
                )?;
                for (i, c) in configurations.iter().enumerate() {
                    let eps = c.efficiency.map_or("-".into(), |e| format!("{e:.6}"));
                    writeln!(
                        out,
                        "  #{} effort {:.6} benefit {:.6} efficiency {eps}",
                        i + 1,
                        c.cumulative_effort,
                        c.predicted_benefit
                    )?;
                    let vals: Vec<String> =
                        c.values().iter().map(|(k, v)| format!("{k}={v}")).collect();
                    writeln!(out, "     {}", vals.join(" "))?;
                    for (from, to, dim, level) in &c.flows {
                        writeln!(out, "     {from} -> {to}: {dim}={level}")?;
                    }
                }
            }
        }
    }
    writeln!(out, "evaluations {evaluations}")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Dp,
    Random(usize),
    Penalty,
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(|m| match m.split_once(':') {
            None if m == "dp" => Ok(Method::Dp),
            None if m == "penalty" => Ok(Method::Penalty),
            None if m == "random" => Ok(Method::Random(100)),
            Some(("random", n)) => n
                .parse()
                .map(Method::Random)
                .map_err(|_| CliError::Usage(format!("bad sample count in `{m}`"))),
            _ => Err(CliError::Usage(format!("unknown method `{m}`"))),
        })
        .collect()
}

/// Realized effort and efficiency, or `None` for configurations the
/// ground truth cannot balance.
fn realized(
    truth: &SystemGraph,
    settings: &Settings,
    values: &BTreeMap<String, f64>,
) -> (Option<f64>, Option<f64>) {
    match realize_with(truth, settings, values, &EvalCounter::new()) {
        Ok(r) => (Some(r.effort), r.efficiency),
        Err(_) => (None, None),
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

pub fn compare_rows(
    g: &SystemGraph,
    truth: &SystemGraph,
    settings: &Settings,
    requests: &[f64],
    methods: &[Method],
    seed: u64,
    penalty: &PenaltyOptions,
) -> Result<Vec<CompareRow>, CliError> {
    let plan = Plan::new(g, settings)?;
    let mut rows = Vec::new();
    for m in methods {
        match m {
            Method::Dp => {
                let s = timed_solve(g, settings)?;
                for &r in requests {
                    let t = Instant::now();
                    let res = lookup(&s, r);
                    let spent = s.wall_time + t.elapsed();
                    let row = match res.configurations().first() {
                        Some(c) => {
                            let (re, reps) = realized(truth, settings, &c.values());
                            CompareRow {
                                request: r,
                                method: "dp".into(),
                                expected_effort: Some(c.cumulative_effort),
                                realized_effort: re,
                                expected_efficiency: c.efficiency,
                                realized_efficiency: reps,
                                eval_count: s.eval_count,
                                wall_time_s: secs(spent),
                            }
                        }
                        None => empty_row(r, "dp", s.eval_count, secs(spent)),
                    };
                    rows.push(row);
                }
            }
            Method::Random(n) => {
                let counter = EvalCounter::new();
                let t = Instant::now();
                let samples = random_configurations(g, settings, *n, seed, &counter)?;
                let spent = t.elapsed();
                let name = format!("random:{n}");
                for &r in requests {
                    let snapped = plan.sink_grid.snap(r);
                    let best = samples
                        .iter()
                        .filter(|x| {
                            x.feasible && !snapped.clamped && x.sink_level == Some(snapped.level)
                        })
                        .min_by(|a, b| a.effort.total_cmp(&b.effort));
                    let row = match best {
                        Some(x) => {
                            let (re, reps) = realized(truth, settings, &x.values);
                            CompareRow {
                                request: r,
                                method: name.clone(),
                                expected_effort: Some(x.effort),
                                realized_effort: re,
                                expected_efficiency: opttopo_core::efficiency(x.benefit, x.effort)
                                    .ok(),
                                realized_efficiency: reps,
                                eval_count: counter.get(),
                                wall_time_s: secs(spent),
                            }
                        }
                        None => empty_row(r, &name, counter.get(), secs(spent)),
                    };
                    rows.push(row);
                }
            }
            Method::Penalty => {
                let start = center_start(g);
                for &r in requests {
                    let t = Instant::now();
                    let res = penalty_search(g, settings, r, &start, penalty)?;
                    let spent = secs(t.elapsed());
                    let row = if res.diverged || !res.best.feasible {
                        empty_row(r, "penalty", res.eval_count, spent)
                    } else {
                        let (re, reps) = realized(truth, settings, &res.best.values);
                        CompareRow {
                            request: r,
                            method: "penalty".into(),
                            expected_effort: Some(res.best.effort),
                            realized_effort: re,
                            expected_efficiency: opttopo_core::efficiency(
                                res.best.benefit,
                                res.best.effort,
                            )
                            .ok(),
                            realized_efficiency: reps,
                            eval_count: res.eval_count,
                            wall_time_s: spent,
                        }
                    };
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}

fn empty_row(request: f64, method: &str, eval_count: u64, wall_time_s: f64) -> CompareRow {
    CompareRow {
        request,
        method: method.into(),
        expected_effort: None,
        realized_effort: None,
        expected_efficiency: None,
        realized_efficiency: None,
        eval_count,
        wall_time_s,
    }
}

pub fn compare(a: &CompareArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let methods = parse_methods(&a.methods)?;
    if methods.is_empty() {
        return Err(CliError::Usage("no method given".into()));
    }
    let g = load_graph(&a.system)?;
    let truth = match &a.truth {
        Some(p) => load_graph(p)?,
        None => g.clone(),
    };
    let settings = a.grid.settings()?;
    let penalty = PenaltyOptions {
        tolerance: a.penalty_tol,
        ..PenaltyOptions::default()
    };
    let rows = compare_rows(&g, &truth, &settings, &a.requests, &methods, a.seed, &penalty)?;
    emit(&formats::write_report(COMPARE_MAGIC, &rows)?, a.out.as_deref(), out)
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => formats::write_file(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn bench_rows(
    g: &SystemGraph,
    qphi: &[u32],
    flow_steps: &[f64],
    tie_tol: f64,
    dry_run: bool,
) -> Result<Vec<BenchRow>, CliError> {
    let mut rows = Vec::new();
    for &f in flow_steps {
        for &q in qphi {
            let mut settings = Settings::with_steps(q).flow_step(f);
            settings.tie_tolerance = tie_tol;
            let combos = combinations(g, &settings)?;
            let solved = if dry_run {
                None
            } else {
                Some(timed_solve(g, &settings)?)
            };
            rows.push(BenchRow {
                qphi: q,
                flow_step: Some(f),
                combinations: combos,
                eval_count: solved.as_ref().map(|s| s.eval_count),
                candidates: solved.as_ref().map(|s| s.candidates),
                wall_time_s: solved.as_ref().map(|s| secs(s.wall_time)),
                combination_factor: None,
                eval_factor: None,
            });
        }
    }
    growth_factors(&mut rows);
    Ok(rows)
}

pub fn bench(a: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.qphi_list.iter().any(|&q| q < 1) {
        return Err(CliError::Usage("--qphi-list entries must be at least 1".into()));
    }
    let g = load_graph(&a.system)?;
    let rows = bench_rows(&g, &a.qphi_list, &a.flow_steps, a.tie_tol, a.dry_run)?;
    emit(&formats::write_report(BENCH_MAGIC, &rows)?, a.out.as_deref(), out)
}

/// File name of a node's dataset.
pub fn dataset_file(node: &str) -> String {
    format!("{}.csv", node.replace(' ', "-"))
}

pub fn export(seed: u64, rows: usize, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let p = build_cooling_complex(seed);
    std::fs::create_dir_all(dir).map_err(|source| formats::FormatError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let sys = dir.join("refplant.system");
    formats::write_file(&sys, &formats::write_system(&p.spec))?;
    writeln!(out, "{}", sys.display())?;
    for (i, n) in p.graph.nodes.iter().enumerate() {
        let d = sample_dataset(&p.graph, &n.name, rows, seed.wrapping_mul(1000) + i as u64);
        let path = dir.join(dataset_file(&n.name));
        formats::write_file(&path, &formats::write_dataset(&d))?;
        writeln!(out, "{}", path.display())?;
    }
    Ok(())
}
