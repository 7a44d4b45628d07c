use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use opttopo::exit;
use opttopo::formats;
use opttopo::report::{BenchRow, CompareRow};
use opttopo_core::model::DimensionKind::*;
use opttopo_core::refplant::{CoolingComplex, REQUESTS};
use opttopo_core::synth::{square_node, symmetric_node, Builder};
use opttopo_core::{lookup, propagate, Settings, SystemSpec};
use tempfile::TempDir;

fn opttopo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opttopo"))
        .args(args)
        .env_remove("OPTTOPO_TIE_TOL")
        .env_remove("OPTTOPO_PENALTY_TOL")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> u8 {
    o.status.code().unwrap() as u8
}

fn write(dir: &TempDir, name: &str, spec: &SystemSpec) -> PathBuf {
    let p = dir.path().join(name);
    formats::write_file(&p, &formats::write_system(spec)).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Exports the reference plant and returns the system path.
fn refplant(dir: &TempDir) -> PathBuf {
    let o = opttopo(&["refplant", "export", "--out-dir", s(dir.path()), "--rows", "500"]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.path().join("refplant.system")
}

/// `a` feeds `b` with `f = pa`; `b` delivers `n = pb` and needs `f = pb`.
/// The cyclic variant also feeds `g` back from `b` to `a`.
fn pair(cyclic: bool) -> SystemSpec {
    let (a_efforts, b_benefits) = if cyclic {
        (
            vec![("ea", vec![(1.0, vec![1])]), ("g", vec![(1.0, vec![0])])],
            vec![("g", vec![(1.0, vec![1])]), ("n", vec![(1.0, vec![1])])],
        )
    } else {
        (
            vec![("ea", vec![(1.0, vec![1])])],
            vec![("n", vec![(1.0, vec![1])])],
        )
    };
    let mut b = Builder::new()
        .dim("pa", Free, 0.0, 1.0)
        .dim("pb", Free, 0.0, 1.0)
        .dim("ea", Effort, 0.0, 10.0)
        .dim("f", Benefit, 0.0, 2.0)
        .dim("g", Benefit, 0.0, 2.0)
        .dim("n", Benefit, 0.0, 2.0)
        .node("a", &["pa"], &[], &a_efforts, &[("f", vec![(1.0, vec![1])])])
        .node("b", &["pb"], &[], &[("f", vec![(1.0, vec![1])])], &b_benefits)
        .edge("a", "b", "f", 1.0)
        .weight("elec", 1.0, &["ea"])
        .sink("b", "n", 1.0);
    if cyclic {
        b = b.edge("b", "a", "g", 1.0);
    }
    b.build()
}

#[test]
fn validate_lists_the_plant() {
    let dir = TempDir::new().unwrap();
    let sys = refplant(&dir);
    let o = opttopo(&["validate", s(&sys)]);
    assert_eq!(code(&o), exit::OK);
    let out = stdout(&o);
    assert!(out.contains("nodes: 4"));
    assert!(out.contains(
        "order: root -> cooling tower -> cooling water -> chillers -> chilled water -> sink"
    ));
    for d in ["HysteresisA", "TempConsumer", "CoolingPower"] {
        assert!(out.contains(d), "{d} missing");
    }
}

#[test]
fn validate_reports_graph_errors() {
    let dir = TempDir::new().unwrap();
    let o = opttopo(&["validate", s(&write(&dir, "cyclic.system", &pair(true)))]);
    assert_eq!(code(&o), exit::CYCLE);
    assert!(stderr(&o).contains("cycle detected: "), "{}", stderr(&o));

    let mut dangling = pair(false);
    dangling.edges[0].dimension = "n".into();
    let o = opttopo(&["validate", s(&write(&dir, "dangling.system", &dangling))]);
    assert_eq!(code(&o), exit::DANGLING_FLOW, "{}", stderr(&o));

    let o = opttopo(&["validate", s(&dir.path().join("missing.system"))]);
    assert_eq!(code(&o), exit::IO);

    let p = dir.path().join("garbage.system");
    std::fs::write(&p, "opttopo-system 1\n{ not json").unwrap();
    assert_eq!(code(&opttopo(&["validate", s(&p)])), exit::PARSE);
    std::fs::write(&p, "opttopo-system 7\n{}").unwrap();
    assert_eq!(code(&opttopo(&["validate", s(&p)])), exit::VERSION);
}

#[test]
fn solve_prints_the_bench_columns() {
    let dir = TempDir::new().unwrap();
    let sys = refplant(&dir);
    let o = opttopo(&["solve", s(&sys), "--qphi", "5", "--flow-step", "5"]);
    assert_eq!(code(&o), exit::OK, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l == "combinations 625"), "{out}");
    assert!(out.lines().any(|l| l == "eval_count 700"), "{out}");
    assert!(out.lines().any(|l| l.starts_with("wall_time_s ")));
}

#[test]
fn toy_solve_is_quick() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "toy.system", &square_node(10.0, 2.5));
    let t = Instant::now();
    let o = opttopo(&["solve", s(&sys)]);
    assert!(t.elapsed() < Duration::from_secs(1));
    assert_eq!(code(&o), exit::OK);
}

#[test]
fn infeasible_systems_name_the_node() {
    let dir = TempDir::new().unwrap();
    let mut spec = pair(false);
    // b now needs more flow than a can ever send
    spec.models[1].terms[0].push(opttopo_core::Term::new(3.0, vec![0]));
    spec.dimensions.iter_mut().find(|d| d.name == "f").unwrap().hi = 5.0;
    let o = opttopo(&["solve", s(&write(&dir, "x.system", &spec)), "--qphi", "2"]);
    assert_eq!(code(&o), exit::INFEASIBLE, "{}", stderr(&o));
    assert!(stderr(&o).contains('b'));
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "toy.system", &square_node(10.0, 2.5));
    assert_eq!(code(&opttopo(&["solve", s(&sys), "--qphi", "0"])), exit::USAGE);
    assert_eq!(code(&opttopo(&["solve", s(&sys), "--theta", "x"])), exit::USAGE);
    let o = opttopo(&["compare", s(&sys), "--request", "5", "--methods", "dp,annealing"]);
    assert_eq!(code(&o), exit::USAGE);
    assert!(stderr(&o).contains("annealing"));
    // a missing external parameter is a discretization error
    let mut spec = square_node(10.0, 2.5);
    spec.dimensions
        .push(opttopo_core::Dimension::new("t", External, "", 0.0, 1.0));
    spec.models[0].inputs.push("t".into());
    for t in spec.models[0].terms.iter_mut().flatten() {
        t.exponents.push(0);
    }
    spec.nodes[0].external_params.push("t".into());
    let ext = write(&dir, "ext.system", &spec);
    assert_eq!(code(&opttopo(&["solve", s(&ext)])), exit::DISCRETIZATION);
    assert_eq!(code(&opttopo(&["solve", s(&ext), "--theta", "t=0.5"])), exit::OK);
}

#[test]
fn solve_then_lookup() {
    let dir = TempDir::new().unwrap();
    let sys = refplant(&dir);
    let table = dir.path().join("plant.table");
    let o = opttopo(&["solve", s(&sys), "--qphi", "5", "--flow-step", "5", "--out", s(&table)]);
    assert_eq!(code(&o), exit::OK);
    let mut args = vec!["lookup".to_string(), s(&table).to_string()];
    for r in REQUESTS.iter().chain([1e6].iter()) {
        args.push("--request".into());
        args.push(r.to_string());
    }
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = opttopo(&args);
    assert_eq!(code(&o), exit::OK, "{}", stderr(&o));
    let out = stdout(&o);
    let answered = out.lines().filter(|l| l.contains("configuration(s)")).count();
    assert!(answered >= 4, "{out}");
    assert!(out.contains("request 1000000: no solution"));
    assert!(out.lines().any(|l| l == "evaluations 0"));

    // a damaged table is refused
    let text = std::fs::read_to_string(&table).unwrap();
    std::fs::write(&table, text.replacen("chillers", "boilers", 1)).unwrap();
    let o = opttopo(&["lookup", s(&table), "--request", "90"]);
    assert_eq!(code(&o), exit::CORRUPT_TABLE, "{}", stderr(&o));
}

#[test]
fn tie_levels_list_every_configuration() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "sym.system", &symmetric_node(2.0, 1.0));
    let table = dir.path().join("sym.table");
    opttopo(&["solve", s(&sys), "--qphi", "3", "--out", s(&table)]);
    let o = opttopo(&["lookup", s(&table), "--request", "1"]);
    let out = stdout(&o);
    assert!(out.contains("level 1, 2 configuration(s)"), "{out}");
    assert!(out.contains("phi1=0 phi2=1") && out.contains("phi1=1 phi2=0"), "{out}");

    // a loose tolerance from the environment turns near misses into ties
    let o = Command::new(env!("CARGO_BIN_EXE_opttopo"))
        .args(["solve", s(&sys), "--qphi", "3", "--out", s(&table)])
        .env("OPTTOPO_TIE_TOL", "1.0")
        .output()
        .unwrap();
    assert!(o.status.success());
    let out = stdout(&opttopo(&["lookup", s(&table), "--request", "2"]));
    assert!(out.contains("level 2, 3 configuration(s)"), "{out}");
}

fn compare(sys: &Path, extra: &[&str]) -> Vec<CompareRow> {
    let mut args = vec!["compare", s(sys), "--flow-step", "5", "--seed", "1"];
    args.extend_from_slice(extra);
    let o = opttopo(&args);
    assert_eq!(code(&o), exit::OK, "{}", stderr(&o));
    formats::read_report(formats::COMPARE_MAGIC, &stdout(&o)).unwrap()
}

#[test]
fn compare_dp_against_random() {
    let dir = TempDir::new().unwrap();
    let sys = refplant(&dir);
    let mut extra = vec!["--methods", "dp,random:100"];
    for r in ["85.75", "97.5", "109.25"] {
        extra.extend(["--request", r]);
    }
    let rows = compare(&sys, &extra);
    assert_eq!(rows.len(), 6);
    let mut compared = 0;
    for dp in rows.iter().filter(|r| r.method == "dp") {
        // ground truth and model coincide here
        assert_eq!(dp.expected_effort, dp.realized_effort);
        let random = rows
            .iter()
            .find(|r| r.method == "random:100" && r.request == dp.request)
            .unwrap();
        if let (Some(a), Some(b)) = (dp.expected_effort, random.expected_effort) {
            assert!(a <= b);
            compared += 1;
        }
    }
    assert!(compared > 0);
}

#[test]
fn compare_dp_against_penalty() {
    let dir = TempDir::new().unwrap();
    let sys = refplant(&dir);
    let rows = compare(
        &sys,
        &["--methods", "dp,penalty", "--qphi", "20", "--request", "97.5"],
    );
    let dp = rows.iter().find(|r| r.method == "dp").unwrap();
    let pen = rows.iter().find(|r| r.method == "penalty").unwrap();
    assert!(pen.eval_count * 20 < dp.eval_count, "{} vs {}", pen.eval_count, dp.eval_count);
    if let Some(e) = pen.expected_effort {
        // the penalty search may settle one flow step away from the request
        let p = CoolingComplex::default();
        let st = Settings::with_steps(20).flow_step(5.0);
        let solved = propagate(&p.graph, &st).unwrap();
        let best = [92.5, 97.5, 102.5]
            .iter()
            .filter_map(|&b| lookup(&solved, b).best_effort())
            .fold(f64::INFINITY, f64::min);
        assert!(e >= best - 1e-9, "{e} < {best}");
    }
}

#[test]
fn compare_single_method() {
    let dir = TempDir::new().unwrap();
    let sys = refplant(&dir);
    let rows = compare(&sys, &["--methods", "dp", "--request", "97.5"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].method, "dp");
}

#[test]
fn bench_growth() {
    let dir = TempDir::new().unwrap();
    let sys = refplant(&dir);
    let o = opttopo(&["bench", s(&sys), "--dry-run"]);
    assert_eq!(code(&o), exit::OK);
    let rows: Vec<BenchRow> = formats::read_report(formats::BENCH_MAGIC, &stdout(&o)).unwrap();
    let at = |q, f| rows.iter().find(|r| r.qphi == q && r.flow_step == Some(f)).unwrap();
    for f in [5.0, 10.0] {
        assert_eq!(at(5, f).combinations, 625);
        assert_eq!(at(20, f).combination_factor, Some(256.0));
        assert_eq!(at(40, f).combination_factor, Some(16.0));
        assert!(at(40, f).eval_count.is_none());
    }

    let o = opttopo(&["bench", s(&sys), "--qphi-list", "5,10,20", "--flow-steps", "10"]);
    let rows: Vec<BenchRow> = formats::read_report(formats::BENCH_MAGIC, &stdout(&o)).unwrap();
    assert_eq!(rows.len(), 3);
    for r in &rows[1..] {
        assert!(r.eval_factor.unwrap() < r.combination_factor.unwrap());
    }
}

#[test]
fn fit_solve_compare_from_files() {
    let dir = TempDir::new().unwrap();
    let sys = refplant(&dir);
    let fitted = dir.path().join("fitted.system");
    let mut args: Vec<String> = vec!["fit".into(), s(&sys).into()];
    for n in ["cooling tower", "cooling water", "chillers", "chilled water"] {
        let path = dir.path().join(opttopo::commands::dataset_file(n));
        args.push("--data".into());
        args.push(format!("{n}={}", path.display()));
    }
    args.extend(["--out".into(), s(&fitted).into()]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = opttopo(&args);
    assert_eq!(code(&o), exit::OK, "{}", stderr(&o));
    // one line per fitted output: 2 + 3 + 3 + 3
    let report = stdout(&o);
    assert_eq!(report.lines().count(), 1 + 11, "{report}");
    assert!(report.contains(",CoolingPower,500,0,"), "{report}");

    let rows = compare(
        &fitted,
        &["--methods", "dp", "--request", "97.5", "--truth", s(&sys)],
    );
    let (x, y) = (
        rows[0].expected_efficiency.unwrap(),
        rows[0].realized_efficiency.unwrap(),
    );
    assert!((x - y).abs() < 0.05 * y);

    let o = opttopo(&["fit", s(&sys), "--data", "boiler=x.csv", "--out", s(&fitted)]);
    assert_eq!(code(&o), exit::USAGE);
}
