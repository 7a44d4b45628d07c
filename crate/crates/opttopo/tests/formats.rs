use opttopo::formats::{self, FormatError};
use opttopo::report::{growth_factors, BenchRow, CompareRow};
use opttopo_core::identification::Dataset;
use opttopo_core::refplant::CoolingComplex;
use opttopo_core::synth::{random_system, symmetric_node, Shape};
use opttopo_core::{build_graph, lookup, propagate, Settings};
use proptest::prelude::*;

#[test]
fn system_documents_round_trip() {
    let specs = [
        CoolingComplex::default().spec,
        symmetric_node(2.0, 1.0),
        random_system(3, Shape::Diamond, 4).0,
        random_system(8, Shape::Chain(3), 5).0,
    ];
    for spec in specs {
        let text = formats::write_system(&spec);
        assert!(text.starts_with("opttopo-system 1\n"));
        assert_eq!(formats::parse_system(&text).unwrap(), spec);
    }
}

#[test]
fn tables_round_trip_bit_exactly() {
    let p = CoolingComplex::default();
    let s = propagate(&p.graph, &Settings::with_steps(5).flow_step(5.0)).unwrap();
    let back = formats::parse_table(&formats::write_table(&s)).unwrap();
    assert_eq!(back, s);
    for r in [74.0, 80.0, 85.75, 97.5, 120.0, 121.0, 1e6] {
        assert_eq!(lookup(&back, r), lookup(&s, r));
    }
}

#[test]
fn headers_are_checked() {
    let spec = symmetric_node(2.0, 1.0);
    let text = formats::write_system(&spec);
    let body = text.split_once('\n').unwrap().1;
    assert!(matches!(
        formats::parse_system(body),
        Err(FormatError::Magic { .. })
    ));
    let v2 = text.replacen("opttopo-system 1", "opttopo-system 2", 1);
    assert!(matches!(
        formats::parse_system(&v2),
        Err(FormatError::Version { .. })
    ));
    // a system file is not a table
    assert!(matches!(
        formats::parse_table(&text),
        Err(FormatError::Magic { .. })
    ));
}

#[test]
fn tampered_tables_are_rejected() {
    let g = build_graph(&symmetric_node(2.0, 1.0)).unwrap();
    let s = propagate(&g, &Settings::with_steps(3)).unwrap();
    let text = formats::write_table(&s);
    let renamed = text.replacen("\"node\":\"n\"", "\"node\":\"m\"", 1);
    assert!(matches!(
        formats::parse_table(&renamed),
        Err(FormatError::Table(_))
    ));
    assert!(matches!(
        formats::parse_table(&text[..text.len() / 2]),
        Err(FormatError::Json(_))
    ));
}

#[test]
fn datasets_accept_comments_and_gaps() {
    let text = "# operating data, week 12\nTempCoTo, PowerFan\n20.5,3.25\n# pause\n21,\n22,nan\n";
    let d = formats::parse_dataset(text, "x").unwrap();
    assert_eq!(d.columns, ["TempCoTo", "PowerFan"]);
    assert_eq!(d.rows.len(), 3);
    assert_eq!(d.rows[0], [20.5, 3.25]);
    assert!(d.rows[1][1].is_nan() && d.rows[2][1].is_nan());
    let bad = "a,b\n1,x\n";
    assert!(matches!(
        formats::parse_dataset(bad, "x"),
        Err(FormatError::Field { line: 2, .. })
    ));
    let future = "# opttopo-dataset 9\na\n1\n";
    assert!(matches!(
        formats::parse_dataset(future, "x"),
        Err(FormatError::Version { .. })
    ));
}

#[test]
fn reports_round_trip() {
    let rows = vec![
        CompareRow {
            request: 97.5,
            method: "dp".into(),
            expected_effort: Some(31.25),
            realized_effort: Some(31.25),
            expected_efficiency: Some(3.0),
            realized_efficiency: Some(3.0),
            eval_count: 700,
            wall_time_s: 0.5,
        },
        CompareRow {
            request: 74.0,
            method: "random:100".into(),
            expected_effort: None,
            realized_effort: None,
            expected_efficiency: None,
            realized_efficiency: None,
            eval_count: 400,
            wall_time_s: 0.25,
        },
    ];
    let text = formats::write_report(formats::COMPARE_MAGIC, &rows).unwrap();
    assert!(text.starts_with("# opttopo-compare 1\n"));
    let back: Vec<CompareRow> = formats::read_report(formats::COMPARE_MAGIC, &text).unwrap();
    assert_eq!(back, rows);
}

#[test]
fn growth_factors_compare_equal_flow_steps() {
    let row = |q, f, c, e| BenchRow {
        qphi: q,
        flow_step: Some(f),
        combinations: c,
        eval_count: Some(e),
        candidates: None,
        wall_time_s: None,
        combination_factor: None,
        eval_factor: None,
    };
    let mut rows = vec![
        row(5, 10.0, 625, 700),
        row(5, 5.0, 625, 700),
        row(20, 10.0, 160_000, 161_200),
    ];
    growth_factors(&mut rows);
    assert_eq!(rows[0].combination_factor, None);
    assert_eq!(rows[1].combination_factor, None);
    assert_eq!(rows[2].combination_factor, Some(256.0));
    assert_eq!(rows[2].eval_factor, Some(161_200.0 / 700.0));
}

proptest! {
    #[test]
    fn dataset_round_trip(
        cols in 1usize..5,
        raw in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 0..60),
    ) {
        let columns: Vec<String> = (0..cols).map(|i| format!("d{i}")).collect();
        let mut d = Dataset::new(columns, "generated");
        for row in raw.chunks_exact(cols) {
            d.push(row.to_vec()).unwrap();
        }
        let back = formats::parse_dataset(&formats::write_dataset(&d), "generated").unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn random_tables_round_trip(seed in any::<u64>(), n in 1usize..=5, q in 2u32..=4) {
        let shape = if n == 5 { Shape::Diamond } else { Shape::Chain(n) };
        let (spec, st) = random_system(seed, shape, q);
        let g = build_graph(&spec).unwrap();
        if let Ok(s) = propagate(&g, &st) {
            let back = formats::parse_table(&formats::write_table(&s)).unwrap();
            prop_assert_eq!(&back, &s);
            for (l, _) in s.sink_levels() {
                prop_assert_eq!(lookup(&back, l), lookup(&s, l));
            }
        }
    }
}
