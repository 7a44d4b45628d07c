use std::collections::BTreeMap;

use opttopo_core::baselines::{
    center_start, joint_bruteforce, penalty_search, random_configurations, BaselineError,
    PenaltyOptions, DEFAULT_CAP,
};
use opttopo_core::engine::combinations;
use opttopo_core::identification::{fit_spec, Dataset, DEFAULT_DEGREE};
use opttopo_core::refplant::{
    build_cooling_complex, realize, sample_dataset, CoolingComplex, DEFAULT_SEED, REQUESTS,
};
use opttopo_core::{build_graph, lookup, propagate, EvalCounter, Settings, SolvedSystem};

fn solve(p: &CoolingComplex, q: u32, step: f64) -> SolvedSystem {
    propagate(&p.graph, &Settings::with_steps(q).flow_step(step)).unwrap()
}

#[test]
fn densest_node_counts() {
    let p = CoolingComplex::default();
    let c: Vec<u64> = [5, 20, 40]
        .iter()
        .map(|&q| combinations(&p.graph, &Settings::with_steps(q)).unwrap())
        .collect();
    // q^4 for the chillers: 5^4, 20^4, 40^4
    assert_eq!(c, [625, 160_000, 2_560_000]);
    assert_eq!((c[1] / c[0], c[2] / c[1]), (256, 16));
}

#[test]
fn request_span() {
    let p = CoolingComplex::default();
    let s = solve(&p, 5, 5.0);
    let found: Vec<bool> = REQUESTS.iter().map(|&r| lookup(&s, r).is_found()).collect();
    assert_eq!(found, [false, true, true, true, true]);
}

#[test]
fn coarse_enumeration_covers_80_to_110() {
    let p = CoolingComplex::default();
    let s = solve(&p, 10, 5.0);
    let levels: Vec<f64> = s.sink_levels().iter().map(|l| l.0).collect();
    for want in [80.0, 85.0, 90.0, 95.0, 100.0, 105.0, 110.0] {
        assert!(levels.contains(&want), "{want} missing from {levels:?}");
    }
}

#[test]
fn finer_flow_step_keeps_coarse_levels() {
    for seed in [DEFAULT_SEED, 1, 2] {
        let p = build_cooling_complex(seed);
        for q in [5, 10] {
            let coarse = solve(&p, q, 10.0);
            let fine = solve(&p, q, 5.0);
            let fine_levels: Vec<f64> = fine.sink_levels().iter().map(|l| l.0).collect();
            for (l, _) in coarse.sink_levels() {
                assert!(fine_levels.contains(&l), "seed {seed} q {q}: {l} lost");
            }
        }
    }
}

#[test]
fn growth_stays_below_the_grid_growth() {
    let p = CoolingComplex::default();
    let e5 = solve(&p, 5, 10.0).eval_count;
    let e10 = solve(&p, 10, 10.0).eval_count;
    assert!((e10 as f64 / e5 as f64) < 16.0);
}

#[test]
fn ground_truth_solutions_realize_exactly() {
    let p = CoolingComplex::default();
    let s = solve(&p, 5, 5.0);
    let c = EvalCounter::new();
    for (level, _) in s.sink_levels() {
        for cfg in lookup(&s, level).configurations() {
            let r = realize(&p.graph, &cfg.values(), &c).unwrap();
            assert_eq!(r.effort, cfg.cumulative_effort);
            assert_eq!(r.benefit, cfg.predicted_benefit);
            assert_eq!(r.efficiency, cfg.efficiency);
        }
    }
}

#[test]
fn dp_matches_joint_grid_on_the_plant() {
    let p = CoolingComplex::default();
    let st = Settings::with_steps(3).flow_step(5.0);
    let s = propagate(&p.graph, &st).unwrap();
    let joint = joint_bruteforce(&p.graph, &st, DEFAULT_CAP).unwrap();
    assert!(!joint.best.is_empty());
    for (&k, (e, _)) in &joint.best {
        assert_eq!(lookup(&s, joint.level(k)).best_effort(), Some(*e));
    }
    assert!(matches!(
        joint_bruteforce(&p.graph, &Settings::with_steps(20), DEFAULT_CAP),
        Err(BaselineError::CapExceeded { .. })
    ));
}

#[test]
fn random_configurations_never_beat_the_table() {
    let p = CoolingComplex::default();
    let st = Settings::with_steps(5).flow_step(5.0);
    let s = propagate(&p.graph, &st).unwrap();
    for seed in [1, 2, 3] {
        let c = EvalCounter::new();
        let samples = random_configurations(&p.graph, &st, 100, seed, &c).unwrap();
        assert_eq!(samples, random_configurations(&p.graph, &st, 100, seed, &c).unwrap());
        for r in samples.iter().filter(|r| r.feasible) {
            if let Some(best) = lookup(&s, r.sink_level.unwrap()).best_effort() {
                assert!(best <= r.effort, "seed {seed}: {} < {best}", r.effort);
            }
        }
    }
}

#[test]
fn penalty_search_is_cheap_and_not_better() {
    let p = CoolingComplex::default();
    let st = Settings::with_steps(5).flow_step(5.0);
    let s = propagate(&p.graph, &st).unwrap();
    let start = center_start(&p.graph);
    for &r in &REQUESTS[1..] {
        let res = penalty_search(&p.graph, &st, r, &start, &PenaltyOptions::default()).unwrap();
        assert!(res.eval_count <= 100_000);
        if res.diverged {
            continue;
        }
        // the table optimum one flow step around the reached benefit
        let best = [res.best.benefit - 5.0, res.best.benefit, res.best.benefit + 5.0]
            .iter()
            .filter_map(|&b| lookup(&s, b).best_effort())
            .fold(f64::INFINITY, f64::min);
        assert!(res.best.effort >= best - 1e-9 || best.is_infinite());
    }
}

fn fitted(p: &CoolingComplex, rows: usize) -> (opttopo_core::SystemSpec, f64) {
    let data: BTreeMap<String, Dataset> = p
        .graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.model.name.clone(), sample_dataset(&p.graph, &n.name, rows, 100 + i as u64)))
        .collect();
    let (spec, reports) = fit_spec(&p.spec, &data, DEFAULT_DEGREE).unwrap();
    let worst = reports
        .iter()
        .map(|r| r.rms / r.scale)
        .fold(0.0, f64::max);
    (spec, worst)
}

#[test]
fn surrogates_recover_the_plant() {
    let p = CoolingComplex::default();
    let (spec, worst) = fitted(&p, 500);
    assert!(worst < 1e-6, "relative rms {worst}");
    let g = build_graph(&spec).unwrap();
    let st = Settings::with_steps(5).flow_step(5.0);
    let truth = propagate(&p.graph, &st).unwrap();
    let surrogate = propagate(&g, &st).unwrap();
    let c = EvalCounter::new();
    for (level, e) in truth.sink_levels() {
        let r = lookup(&surrogate, level);
        let Some(fe) = r.best_effort() else { continue };
        assert!((fe - e).abs() < 0.01 * e);
        let cfg = &r.configurations()[0];
        let real = realize(&p.graph, &cfg.values(), &c).unwrap();
        let (xe, re) = (cfg.efficiency.unwrap(), real.efficiency.unwrap());
        assert!((xe - re).abs() < 0.05 * re);
    }
}

#[test]
fn sampled_cooling_power_spans_the_flow_interval() {
    let p = CoolingComplex::default();
    let d = sample_dataset(&p.graph, "chilled water", 500, 5);
    let iv = opttopo_core::identification::extract_bounds(&d, "CoolingPower").unwrap();
    assert!(iv.lo <= 80.0 && iv.hi >= 100.0, "{iv:?}");
}
