use std::collections::BTreeMap;

use opttopo_core::model::DimensionKind::*;
use opttopo_core::synth::{square_node, symmetric_node, Builder};
use opttopo_core::{build_graph, lookup, propagate, LookupResult, Settings, SolveError};

#[test]
fn bijective_node_keeps_every_level() {
    // φ on [0, 3] with q = 4 gives the integer grid
    let g = build_graph(&square_node(3.0, 1.0)).unwrap();
    let s = propagate(&g, &Settings::with_steps(4)).unwrap();
    assert_eq!(
        s.sink_levels(),
        vec![(0.0, 0.0), (1.0, 1.0), (2.0, 4.0), (3.0, 9.0)]
    );
    assert_eq!(s.eval_count, 4);
}

#[test]
fn single_node_sink_table() {
    let g = build_graph(&square_node(10.0, 2.5)).unwrap();
    let s = propagate(&g, &Settings::with_steps(5)).unwrap();
    assert_eq!(
        s.sink_levels(),
        vec![(0.0, 0.0), (2.5, 6.25), (5.0, 25.0), (7.5, 56.25), (10.0, 100.0)]
    );
}

#[test]
fn two_parameter_node_keeps_cheapest() {
    let spec = Builder::new()
        .dim("p1", Free, 0.0, 2.0)
        .dim("p2", Free, 0.0, 2.0)
        .dim("a", Effort, 0.0, 20.0)
        .dim("n", Benefit, 0.0, 4.0)
        .node(
            "x",
            &["p1", "p2"],
            &[],
            &[("a", vec![(1.0, vec![2, 0]), (2.0, vec![0, 2])])],
            &[("n", vec![(1.0, vec![1, 0]), (1.0, vec![0, 1])])],
        )
        .weight("elec", 1.0, &["a"])
        .sink("x", "n", 1.0)
        .build();
    let g = build_graph(&spec).unwrap();
    let s = propagate(&g, &Settings::with_steps(3)).unwrap();

    // enumerate all nine pairs independently
    let mut best: BTreeMap<i64, (f64, (f64, f64))> = BTreeMap::new();
    for p1 in [0.0, 1.0, 2.0] {
        for p2 in [0.0, 1.0, 2.0] {
            let (n, a) = (p1 + p2, p1 * p1 + 2.0 * p2 * p2);
            let e = best.entry(n as i64).or_insert((f64::INFINITY, (0.0, 0.0)));
            if a < e.0 {
                *e = (a, (p1, p2));
            }
        }
    }
    for (k, (a, (p1, p2))) in best {
        let r = lookup(&s, k as f64);
        let c = &r.configurations()[0];
        assert_eq!(c.cumulative_effort, a);
        assert_eq!((c.parameters["p1"], c.parameters["p2"]), (p1, p2));
    }
    let c = lookup(&s, 2.0).configurations()[0].clone();
    assert_eq!((c.parameters["p1"], c.parameters["p2"], c.cumulative_effort), (1.0, 1.0, 3.0));
}

#[test]
fn mirrored_settings_are_ties() {
    let g = build_graph(&symmetric_node(2.0, 1.0)).unwrap();
    let s = propagate(&g, &Settings::with_steps(3)).unwrap();
    let r = lookup(&s, 2.0);
    let cs = r.configurations();
    // (1,1) costs 2; (0,2) and (2,0) cost 4
    assert_eq!(cs.len(), 1);
    let r = lookup(&s, 1.0);
    let cs = r.configurations();
    assert_eq!(cs.len(), 2);
    assert_eq!(cs[0].cumulative_effort, cs[1].cumulative_effort);
    assert_ne!(cs[0].parameters, cs[1].parameters);
}

#[test]
fn request_outside_the_table() {
    let g = build_graph(&square_node(10.0, 2.5)).unwrap();
    let s = propagate(&g, &Settings::with_steps(5)).unwrap();
    assert_eq!(
        lookup(&s, -3.0),
        LookupResult::NoSolution {
            request: -3.0,
            level: None
        }
    );
    assert!(!lookup(&s, 1e6).is_found());
    // on the grid, but between parameter levels: no configuration lands there
    let s = propagate(&g, &Settings::with_steps(3)).unwrap();
    assert!(matches!(
        lookup(&s, 2.5),
        LookupResult::NoSolution {
            level: Some(l),
            ..
        } if l == 2.5
    ));
}

#[test]
fn lookups_do_not_evaluate() {
    let g = build_graph(&square_node(10.0, 2.5)).unwrap();
    let s = propagate(&g, &Settings::with_steps(5)).unwrap();
    let before = s.clone();
    let first: Vec<_> = (0..100).map(|i| lookup(&s, f64::from(i) * 0.1)).collect();
    let again: Vec<_> = (0..100).map(|i| lookup(&s, f64::from(i) * 0.1)).collect();
    assert_eq!(first, again);
    assert_eq!(s, before);
}

fn chain(consumer_need: f64) -> opttopo_core::SystemSpec {
    // a produces f = 2·pa, b needs f = need + pb and delivers n = pb
    Builder::new()
        .dim("pa", Free, 0.0, 2.0)
        .dim("pb", Free, 0.0, 2.0)
        .dim("ea", Effort, 0.0, 100.0)
        .dim("eb", Effort, 0.0, 100.0)
        .dim("f", Benefit, 0.0, 4.0)
        .dim("n", Benefit, 0.0, 2.0)
        .node(
            "a",
            &["pa"],
            &[],
            &[("ea", vec![(3.0, vec![1])])],
            &[("f", vec![(2.0, vec![1])])],
        )
        .node(
            "b",
            &["pb"],
            &[],
            &[
                ("eb", vec![(1.0, vec![0]), (1.0, vec![1])]),
                ("f", vec![(consumer_need, vec![0]), (1.0, vec![1])]),
            ],
            &[("n", vec![(1.0, vec![1])])],
        )
        .edge("a", "b", "f", 1.0)
        .weight("elec", 1.0, &["ea", "eb"])
        .sink("b", "n", 1.0)
        .build()
}

#[test]
fn chain_matches_hand_enumeration() {
    let g = build_graph(&chain(0.0)).unwrap();
    let s = propagate(&g, &Settings::with_steps(3)).unwrap();
    // b needs f = pb, which a covers only at even levels: pb ∈ {0, 2}
    // n = 0: pa = 0, pb = 0 → 0 + 1 = 1;  n = 2: pa = 1, pb = 2 → 3 + 3 = 6
    assert_eq!(s.sink_levels(), vec![(0.0, 1.0), (2.0, 6.0)]);
    let c = lookup(&s, 2.0).configurations()[0].clone();
    assert_eq!(c.parameters["pa"], 1.0);
    assert_eq!(c.flows, vec![("a".into(), "b".into(), "f".into(), 2.0)]);
    assert_eq!(s.eval_count, 6);
}

#[test]
fn unreachable_demand_is_infeasible() {
    let g = build_graph(&chain(10.0)).unwrap();
    assert_eq!(
        propagate(&g, &Settings::with_steps(3)),
        Err(SolveError::Infeasible("b".into()))
    );
}

#[test]
fn coupling_must_agree() {
    // both nodes read x; b only gets cheap when x is high, a when it is low
    let spec = Builder::new()
        .dim("x", Coupling, 0.0, 1.0)
        .dim("ea", Effort, -10.0, 100.0)
        .dim("eb", Effort, -10.0, 100.0)
        .dim("f", Benefit, 0.0, 1.0)
        .dim("n", Benefit, 0.0, 1.0)
        .node(
            "a",
            &[],
            &["x"],
            &[("ea", vec![(1.0, vec![0]), (-1.0, vec![1])])],
            &[("f", vec![(1.0, vec![0])])],
        )
        .node(
            "b",
            &[],
            &["x"],
            &[
                ("eb", vec![(0.5, vec![1])]),
                ("f", vec![(1.0, vec![0])]),
            ],
            &[("n", vec![(1.0, vec![0])])],
        )
        .edge("a", "b", "f", 1.0)
        .weight("elec", 1.0, &["ea", "eb"])
        .sink("b", "n", 1.0)
        .build();
    let g = build_graph(&spec).unwrap();
    let s = propagate(&g, &Settings::with_steps(2)).unwrap();
    // x = 0: 1 + 0; x = 1: 0 + 0.5
    let c = lookup(&s, 1.0).configurations()[0].clone();
    assert_eq!(c.couplings["x"], 1.0);
    assert_eq!(c.cumulative_effort, 0.5);
    // the coupling is part of a's key until b is solved
    assert_eq!(s.tables[0].coupling_slots, vec!["x".to_string()]);
    assert!(s.tables[1].coupling_slots.is_empty());
}

#[test]
fn external_parameters_are_fixed_inputs() {
    let spec = Builder::new()
        .dim("p", Free, 0.0, 2.0)
        .dim("t", External, 0.0, 10.0)
        .dim("a", Effort, 0.0, 100.0)
        .dim("n", Benefit, 0.0, 2.0)
        .node(
            "x",
            &["p"],
            &[],
            &[("a", vec![(1.0, vec![1, 1])])],
            &[("n", vec![(1.0, vec![1, 0])])],
        )
        .weight("elec", 1.0, &["a"])
        .sink("x", "n", 1.0)
        .build();
    let mut spec = spec;
    spec.models[0].inputs.push("t".into());
    spec.nodes[0].external_params.push("t".into());
    let g = build_graph(&spec).unwrap();
    let mut st = Settings::with_steps(3);
    assert!(propagate(&g, &st).is_err());
    st.external.insert("t".into(), 4.0);
    let s = propagate(&g, &st).unwrap();
    assert_eq!(s.sink_levels(), vec![(0.0, 0.0), (1.0, 4.0), (2.0, 8.0)]);
    st.external.insert("t".into(), 11.0);
    assert!(propagate(&g, &st).is_err());
}
