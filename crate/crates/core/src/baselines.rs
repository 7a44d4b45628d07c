//! Comparison methods: random configurations, exhaustive joint enumeration
//! and a simplified sequential-penalty local search.
//!
//! All three evaluate whole configurations through
//! [`Plan::evaluate_chain`], so they share the engine's snapping and
//! balance rules and its effort summation order.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::model::{EvalCounter, Interval, ModelError};
use crate::plan::{GridWalk, Plan, PlanError, Settings};
use crate::topology::SystemGraph;

/// Largest cross product [`joint_bruteforce`] enumerates by default.
pub const DEFAULT_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("joint grid has {size} points, above the cap of {cap}")]
    CapExceeded { size: u128, cap: u64 },
    #[error("start point: {0}")]
    BadStart(ModelError),
}

/// Every enumerated dimension of the graph (free and coupling), sorted.
pub fn decision_dims(graph: &SystemGraph) -> Vec<String> {
    let mut d: Vec<String> = graph
        .nodes
        .iter()
        .flat_map(|n| n.local_dims().cloned())
        .collect();
    d.sort();
    d.dedup();
    d
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub values: BTreeMap<String, f64>,
    pub effort: f64,
    pub benefit: f64,
    /// Snapped sink level, if the benefit lies on the sink grid.
    pub sink_level: Option<f64>,
    pub feasible: bool,
}

/// `n` configurations with every parameter drawn uniformly from its
/// interval. Infeasible ones are kept and flagged.
pub fn random_configurations(
    graph: &SystemGraph,
    settings: &Settings,
    n: usize,
    seed: u64,
    counter: &EvalCounter,
) -> Result<Vec<Sample>, PlanError> {
    let plan = Plan::new(graph, settings)?;
    let dims = decision_dims(graph);
    let boxes: Vec<Interval> = dims.iter().map(|d| graph.dimensions[d].interval()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let values: BTreeMap<String, f64> = dims
            .iter()
            .zip(&boxes)
            .map(|(d, b)| (d.clone(), b.lo + b.width() * rng.random::<f64>()))
            .collect();
        out.push(evaluate(&plan, values, counter));
    }
    Ok(out)
}

fn evaluate(plan: &Plan<'_>, values: BTreeMap<String, f64>, counter: &EvalCounter) -> Sample {
    match plan.evaluate_chain(&values, counter) {
        Ok(o) => Sample {
            values,
            effort: o.effort,
            benefit: o.benefit,
            sink_level: o.sink_level,
            feasible: o.feasible,
        },
        Err(_) => Sample {
            values,
            effort: f64::NAN,
            benefit: f64::NAN,
            sink_level: None,
            feasible: false,
        },
    }
}

/// Least effort per populated sink level over the full joint grid.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    /// Sink step multiple → (least effort, first configuration reaching it).
    pub best: BTreeMap<i64, (f64, BTreeMap<String, f64>)>,
    pub sink_grid: Grid,
    pub eval_count: u64,
}

impl JointTable {
    /// Best configuration for `request`, snapped like a look-up.
    pub fn get(&self, request: f64) -> Option<(f64, &BTreeMap<String, f64>)> {
        let k = self.sink_grid.snap_index(request)?;
        self.best.get(&k).map(|(e, v)| (*e, v))
    }

    pub fn level(&self, k: i64) -> f64 {
        k as f64 * self.sink_grid.step().unwrap_or(1.0)
    }
}

/// Enumerates the cross product of every node's parameter grids at once.
///
/// This is the correctness reference for the traversal engine: it applies
/// the same snapping and balance rules, but without any decomposition.
pub fn joint_bruteforce(
    graph: &SystemGraph,
    settings: &Settings,
    cap: u64,
) -> Result<JointTable, BaselineError> {
    let plan = Plan::new(graph, settings)?;
    let dims = decision_dims(graph);
    let grids: Vec<&Grid> = dims.iter().map(|d| &plan.param_grids[d]).collect();
    let size: u128 = grids.iter().map(|g| g.len() as u128).product();
    if size > u128::from(cap) {
        return Err(BaselineError::CapExceeded { size, cap });
    }
    let counter = EvalCounter::new();
    let mut best: BTreeMap<i64, (f64, BTreeMap<String, f64>)> = BTreeMap::new();
    let mut values: BTreeMap<String, f64> = dims.iter().map(|d| (d.clone(), 0.0)).collect();
    for point in GridWalk::new(grids.iter().map(|g| g.len()).collect()) {
        for ((d, g), &p) in dims.iter().zip(&grids).zip(&point) {
            *values.get_mut(d).expect("preset key") = g.levels[p];
        }
        let Ok(o) = plan.evaluate_chain(&values, &counter) else {
            continue;
        };
        if !o.feasible {
            continue;
        }
        let k = o.sink_index.expect("feasible implies on grid");
        match best.get(&k) {
            Some((e, _)) if *e <= o.effort => {}
            _ => {
                best.insert(k, (o.effort, values.clone()));
            }
        }
    }
    Ok(JointTable {
        best,
        sink_grid: plan.sink_grid,
        eval_count: counter.get(),
    })
}

/// Knobs of [`penalty_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyOptions {
    pub initial_rho: f64,
    pub rho_factor: f64,
    /// First step, as a fraction of each interval width.
    pub initial_step: f64,
    /// Stop once the step falls below this fraction.
    pub min_step: f64,
    pub max_outer: usize,
    /// Largest accepted `|benefit - request|`.
    pub tolerance: f64,
}

impl Default for PenaltyOptions {
    fn default() -> Self {
        Self {
            initial_rho: 1.0,
            rho_factor: 10.0,
            initial_step: 0.25,
            min_step: 1e-6,
            max_outer: 40,
            tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub outer: usize,
    pub rho: f64,
    pub step: f64,
    pub objective: f64,
    pub effort: f64,
    pub benefit: f64,
    pub evals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyResult {
    pub best: Sample,
    pub trace: Vec<TraceStep>,
    /// The benefit never came within the tolerance of the request.
    pub diverged: bool,
    pub eval_count: u64,
}

/// Sequential-penalty coordinate search.
///
/// Minimizes `effort + rho * (benefit - request)^2` one coordinate at a time
/// with a pattern step; after each sweep `rho` grows by `rho_factor` and the
/// step halves, until the step is below `min_step`. Configurations failing
/// the chain's balance rules count as infinitely bad. A local method: on
/// multimodal models it may stop in a local optimum.
pub fn penalty_search(
    graph: &SystemGraph,
    settings: &Settings,
    request: f64,
    start: &BTreeMap<String, f64>,
    options: &PenaltyOptions,
) -> Result<PenaltyResult, BaselineError> {
    let plan = Plan::new(graph, settings)?;
    let dims = decision_dims(graph);
    let boxes: Vec<Interval> = dims.iter().map(|d| graph.dimensions[d].interval()).collect();
    let counter = EvalCounter::new();
    let mut x: Vec<f64> = Vec::with_capacity(dims.len());
    for (d, b) in dims.iter().zip(&boxes) {
        let v = *start
            .get(d)
            .ok_or_else(|| BaselineError::BadStart(ModelError::MissingInput(d.clone())))?;
        if !b.contains(v) {
            return Err(BaselineError::BadStart(ModelError::OutOfBounds {
                dimension: d.clone(),
                value: v,
                lo: b.lo,
                hi: b.hi,
            }));
        }
        x.push(v);
    }
    let to_map = |x: &[f64]| -> BTreeMap<String, f64> { dims.iter().cloned().zip(x.iter().copied()).collect() };
    let objective = |s: &Sample, rho: f64| -> f64 {
        if s.effort.is_finite() && s.benefit.is_finite() && s.feasible {
            let v = s.benefit - request;
            s.effort + rho * v * v
        } else {
            f64::INFINITY
        }
    };

    let mut rho = options.initial_rho;
    let mut step = options.initial_step;
    let mut cur = evaluate(&plan, to_map(&x), &counter);
    let mut trace = Vec::new();
    let mut best: Option<Sample> = None;
    let mut outer = 0;
    while step >= options.min_step && outer < options.max_outer {
        let mut f = objective(&cur, rho);
        for i in 0..x.len() {
            let h = step * boxes[i].width();
            if h == 0.0 {
                continue;
            }
            for dir in [1.0, -1.0] {
                // keep walking while it helps
                loop {
                    let cand = (x[i] + dir * h).clamp(boxes[i].lo, boxes[i].hi);
                    if cand == x[i] {
                        break;
                    }
                    let mut y = x.clone();
                    y[i] = cand;
                    let s = evaluate(&plan, to_map(&y), &counter);
                    let g = objective(&s, rho);
                    if g < f {
                        x = y;
                        cur = s;
                        f = g;
                    } else {
                        break;
                    }
                }
            }
        }
        trace.push(TraceStep {
            outer,
            rho,
            step,
            objective: f,
            effort: cur.effort,
            benefit: cur.benefit,
            evals: counter.get(),
        });
        if cur.feasible && (cur.benefit - request).abs() <= options.tolerance {
            best = Some(cur.clone());
        }
        rho *= options.rho_factor;
        step *= 0.5;
        outer += 1;
    }
    let diverged = best.is_none();
    Ok(PenaltyResult {
        best: best.unwrap_or(cur),
        trace,
        diverged,
        eval_count: counter.get(),
    })
}

/// Middle of every interval, a neutral start.
pub fn center_start(graph: &SystemGraph) -> BTreeMap<String, f64> {
    decision_dims(graph)
        .into_iter()
        .map(|d| {
            let iv = graph.dimensions[&d].interval();
            (d, 0.5 * (iv.lo + iv.hi))
        })
        .collect()
}
