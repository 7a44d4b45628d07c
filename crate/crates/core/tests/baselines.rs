use std::collections::BTreeMap;

use opttopo_core::baselines::{
    center_start, joint_bruteforce, penalty_search, random_configurations, PenaltyOptions,
    DEFAULT_CAP,
};
use opttopo_core::model::DimensionKind::*;
use opttopo_core::synth::{random_system, square_node, Builder, Shape};
use opttopo_core::{build_graph, propagate, EvalCounter, Settings, SystemGraph};

fn start(phi: &[(&str, f64)]) -> BTreeMap<String, f64> {
    phi.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[test]
fn penalty_finds_the_convex_optimum() {
    let g = build_graph(&square_node(10.0, 1.0)).unwrap();
    let r = penalty_search(
        &g,
        &Settings::with_steps(5),
        5.0,
        &start(&[("phi", 1.0)]),
        &PenaltyOptions::default(),
    )
    .unwrap();
    assert!(!r.diverged);
    assert!((r.best.values["phi"] - 5.0).abs() < 1e-3, "{:?}", r.best);
    assert!((r.best.effort - 25.0).abs() < 1e-2);
    assert!(r.eval_count > 0 && !r.trace.is_empty());
}

/// `ν = φ1`, `α = φ1 + (φ2² - 4)² + φ2 + 5`: two valleys in `φ2`, the
/// deeper one near -2.
fn two_valleys() -> SystemGraph {
    let spec = Builder::new()
        .dim("p1", Free, 0.0, 10.0)
        .dim("p2", Free, -3.0, 3.0)
        .dim("alpha", Effort, 0.0, 200.0)
        .dim("nu", Benefit, 0.0, 10.0)
        .node(
            "n",
            &["p1", "p2"],
            &[],
            &[(
                "alpha",
                vec![
                    (1.0, vec![1, 0]),
                    (1.0, vec![0, 4]),
                    (-8.0, vec![0, 2]),
                    (1.0, vec![0, 1]),
                    (21.0, vec![0, 0]),
                ],
            )],
            &[("nu", vec![(1.0, vec![1, 0])])],
        )
        .weight("elec", 1.0, &["alpha"])
        .sink("n", "nu", 1.0)
        .build();
    build_graph(&spec).unwrap()
}

#[test]
fn penalty_stops_in_the_nearer_valley() {
    let g = two_valleys();
    let st = Settings::with_steps(13);
    let r = penalty_search(
        &g,
        &st,
        4.0,
        &start(&[("p1", 6.0), ("p2", 2.5)]),
        &PenaltyOptions::default(),
    )
    .unwrap();
    assert!(!r.diverged);
    assert!(r.best.values["p2"] > 1.5, "{:?}", r.best);
    // the grid search sees p2 = -2 and beats the local method
    let s = propagate(&g, &st).unwrap();
    let (_, dp) = s
        .sink_levels()
        .into_iter()
        .find(|&(l, _)| (l - 4.0).abs() < 1e-9)
        .unwrap();
    assert!(dp + 1.0 < r.best.effort, "dp {dp} vs penalty {}", r.best.effort);
}

#[test]
fn random_samples_are_seeded() {
    let g = build_graph(&square_node(10.0, 1.0)).unwrap();
    let st = Settings::with_steps(5);
    let c = EvalCounter::new();
    let a = random_configurations(&g, &st, 1, 42, &c).unwrap();
    let b = random_configurations(&g, &st, 1, 42, &c).unwrap();
    assert_eq!(a.len(), 1);
    assert_eq!(a, b);
    assert_eq!(c.get(), 2);
    let phi = a[0].values["phi"];
    assert!((0.0..=10.0).contains(&phi));
    assert_eq!(a[0].effort, phi * phi);
    let other = random_configurations(&g, &st, 1, 43, &c).unwrap();
    assert_ne!(other, a);
}

#[test]
fn joint_enumeration_equals_the_traversal_on_one_node() {
    for seed in 0..8 {
        let (spec, st) = random_system(seed, Shape::Chain(1), 5);
        let g = build_graph(&spec).unwrap();
        let joint = joint_bruteforce(&g, &st, DEFAULT_CAP).unwrap();
        match propagate(&g, &st) {
            Ok(s) => {
                let dp: Vec<(f64, f64)> = s.sink_levels();
                let bf: Vec<(f64, f64)> =
                    joint.best.iter().map(|(&k, (e, _))| (joint.level(k), *e)).collect();
                assert_eq!(dp, bf, "seed {seed}");
            }
            Err(_) => assert!(joint.best.is_empty(), "seed {seed}"),
        }
    }
}

#[test]
fn center_start_is_the_middle() {
    let g = two_valleys();
    assert_eq!(center_start(&g), start(&[("p1", 5.0), ("p2", 0.0)]));
}
