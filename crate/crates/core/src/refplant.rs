//! Synthetic four-node cooling complex.
//!
//! Cooling tower, cooling water, chillers and chilled water are chained by
//! cooling-power flows; every node draws electricity from the root. The
//! polynomials are invented (no coefficients of a real plant are available)
//! and double as ground truth: [`realize`] evaluates them to obtain the
//! "measured" outcome of a configuration.
//!
//! Flow capacities depend only on the interface temperatures, so both ends
//! of an edge agree for every setting of the shared coupling. The seed
//! perturbs the electrical-power coefficients by up to ±10 %; the capacity
//! maps are fixed so that attainable cooling power always spans roughly
//! 79–120 kW with nothing near 75 kW.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::identification::Dataset;
use crate::model::{compose_affine, efficiency, Dimension, DimensionKind, EvalCounter};
use crate::model::{ModelError, PolynomialModel, Term};
use crate::plan::{Plan, Settings};
use crate::spec::{EdgeSpec, NodeSpec, RootWeight, SinkSpec, Sinks, SystemSpec};
use crate::topology::{build_graph, SystemGraph};
use crate::synth::OutputTerms;

pub const DEFAULT_SEED: u64 = 7;

/// Requests spread evenly over the span that was probed on the real plant.
pub const REQUESTS: [f64; 5] = [74.0, 85.75, 97.5, 109.25, 121.0];

pub const COOLING_TOWER: &str = "cooling tower";
pub const COOLING_WATER: &str = "cooling water";
pub const CHILLERS: &str = "chillers";
pub const CHILLED_WATER: &str = "chilled water";

/// Node names in flow order.
pub const NODES: [&str; 4] = [COOLING_TOWER, COOLING_WATER, CHILLERS, CHILLED_WATER];

/// Energy type of every root draw.
pub const ELECTRICITY: &str = "electricity";

#[derive(Debug, Clone, PartialEq)]
pub struct CoolingComplex {
    pub seed: u64,
    /// System document with the ground-truth models.
    pub spec: SystemSpec,
    pub graph: SystemGraph,
}

/// Realized outcome of one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Realized {
    pub effort: f64,
    pub benefit: f64,
    pub efficiency: Option<f64>,
}

fn dims() -> Vec<Dimension> {
    use DimensionKind::*;
    vec![
        Dimension::new("TempCoTo", Free, "degC", 20.0, 30.0),
        Dimension::new("SetPressureCoWa", Free, "bar", 1.0, 3.0),
        Dimension::new("HysteresisA", Free, "1", 0.0, 1.0),
        Dimension::new("HysteresisB", Free, "1", 0.0, 1.0),
        Dimension::new("SetPressureChWa", Free, "bar", 1.0, 3.0),
        Dimension::new("TempHeatex", Coupling, "degC", 25.0, 35.0),
        Dimension::new("TempConsumer", Coupling, "degC", 6.0, 14.0),
        Dimension::new("PowerFan", Effort, "kW", 0.0, 40.0),
        Dimension::new("PowerPumpCoWa", Effort, "kW", 0.0, 40.0),
        Dimension::new("PowerChillers", Effort, "kW", 0.0, 80.0),
        Dimension::new("PowerPumpChWa", Effort, "kW", 0.0, 40.0),
        Dimension::new("HeatRejection", Benefit, "kW", 150.0, 170.0),
        Dimension::new("CondenserCooling", Benefit, "kW", 130.0, 150.0),
        Dimension::new("ChilledCooling", Benefit, "kW", 95.0, 120.0),
        Dimension::new("CoolingPower", Benefit, "kW", 70.0, 125.0),
    ]
}

/// Model over inputs normalized to `[0, 1]`, rewritten in physical units.
fn model(
    name: &str,
    dims: &[Dimension],
    inputs: &[&str],
    outputs: &[OutputTerms<'_>],
) -> PolynomialModel {
    let find = |n: &str| dims.iter().find(|d| d.name == n).expect("known dimension");
    // x = (u - lo) / (hi - lo)
    let offset: Vec<f64> = inputs
        .iter()
        .map(|n| {
            let d = find(n);
            -d.lo / (d.hi - d.lo)
        })
        .collect();
    let scale: Vec<f64> = inputs
        .iter()
        .map(|n| {
            let d = find(n);
            1.0 / (d.hi - d.lo)
        })
        .collect();
    let terms = outputs
        .iter()
        .map(|(_, ts)| {
            let normalized: Vec<Term> = ts.iter().map(|(c, e)| Term::new(*c, e.clone())).collect();
            compose_affine(&normalized, &offset, &scale)
        })
        .collect();
    PolynomialModel {
        name: name.into(),
        inputs: inputs.iter().map(|s| s.to_string()).collect(),
        outputs: outputs.iter().map(|(n, _)| n.to_string()).collect(),
        terms,
        max_degree: 3,
    }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Builds the plant with electrical coefficients drawn from `seed`.
pub fn build_cooling_complex(seed: u64) -> CoolingComplex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = |c: f64| c * rng.random_range(0.9..=1.1);
    let dims = dims();

    // cooling tower: x = [TempCoTo, TempHeatex]
    // 14 + 9(1-a)^2 - 8h - 2ah
    let (c0, ca, ch, cah) = (k(14.0), k(9.0), k(8.0), k(2.0));
    let fan = vec![
        (c0 + ca, vec![0, 0]),
        (-2.0 * ca, vec![1, 0]),
        (ca, vec![2, 0]),
        (-ch, vec![0, 1]),
        (-cah, vec![1, 1]),
    ];
    let tower = model(
        "cooling_tower",
        &dims,
        &["TempCoTo", "TempHeatex"],
        &[
            ("PowerFan", fan),
            ("HeatRejection", vec![(151.37, vec![0, 0]), (17.9, vec![0, 1])]),
        ],
    );

    // cooling water: x = [SetPressureCoWa, TempHeatex]
    let pump = vec![
        (k(2.0), vec![0, 0]),
        (k(7.0), vec![1, 0]),
        (k(3.0), vec![2, 0]),
        (k(1.5), vec![0, 1]),
        (k(-1.5), vec![1, 1]),
    ];
    let water = model(
        "cooling_water",
        &dims,
        &["SetPressureCoWa", "TempHeatex"],
        &[
            ("PowerPumpCoWa", pump),
            ("HeatRejection", vec![(151.37, vec![0, 0]), (17.9, vec![0, 1])]),
            ("CondenserCooling", vec![(132.23, vec![0, 0]), (15.7, vec![0, 1])]),
        ],
    );

    // chillers: x = [HysteresisA, HysteresisB, TempHeatex, TempConsumer]
    // 18 + 5(1-a)^2 + 4(1-b) + 2(1-a)(1-b) + 9h + 4h^2 - 6v + 1.5hv - 0.8v^3
    let (c0, ca, cb, cab) = (k(18.0), k(5.0), k(4.0), k(2.0));
    let (ch, ch2, cv, chv, cv3) = (k(9.0), k(4.0), k(6.0), k(1.5), k(0.8));
    let chill = vec![
        (c0 + ca + cb + cab, vec![0, 0, 0, 0]),
        (-2.0 * ca - cab, vec![1, 0, 0, 0]),
        (ca, vec![2, 0, 0, 0]),
        (-cb - cab, vec![0, 1, 0, 0]),
        (cab, vec![1, 1, 0, 0]),
        (ch, vec![0, 0, 1, 0]),
        (ch2, vec![0, 0, 2, 0]),
        (-cv, vec![0, 0, 0, 1]),
        (chv, vec![0, 0, 1, 1]),
        (-cv3, vec![0, 0, 0, 3]),
    ];
    let chillers = model(
        "chillers",
        &dims,
        &["HysteresisA", "HysteresisB", "TempHeatex", "TempConsumer"],
        &[
            ("PowerChillers", chill),
            ("CondenserCooling", vec![(132.23, vec![0, 0, 0, 0]), (15.7, vec![0, 0, 1, 0])]),
            ("ChilledCooling", vec![(96.41, vec![0, 0, 0, 0]), (23.3, vec![0, 0, 0, 1])]),
        ],
    );

    // chilled water: x = [SetPressureChWa, TempConsumer]
    // CoolingPower = (96.41 + 23.3 v)(0.82 + 0.18 u)
    let chw_pump = vec![
        (k(1.5), vec![0, 0]),
        (k(6.0), vec![1, 0]),
        (k(4.0), vec![2, 0]),
        (k(1.0), vec![1, 1]),
    ];
    let delivered = vec![
        (96.41 * 0.82, vec![0, 0]),
        (96.41 * 0.18, vec![1, 0]),
        (23.3 * 0.82, vec![0, 1]),
        (23.3 * 0.18, vec![1, 1]),
    ];
    let chilled = model(
        "chilled_water",
        &dims,
        &["SetPressureChWa", "TempConsumer"],
        &[
            ("PowerPumpChWa", chw_pump),
            ("ChilledCooling", vec![(96.41, vec![0, 0]), (23.3, vec![0, 1])]),
            ("CoolingPower", delivered),
        ],
    );

    let node = |name: &str,
                model: &str,
                free: &[&str],
                coupling: &[&str],
                effort: &[&str],
                benefit: &[&str]| NodeSpec {
        name: name.into(),
        model: model.into(),
        free_params: names(free),
        coupling_params: names(coupling),
        external_params: Vec::new(),
        effort_dims: names(effort),
        benefit_dims: names(benefit),
        internal_dims: Vec::new(),
    };
    let edge = |from: &str, to: &str, dimension: &str| EdgeSpec {
        from: from.into(),
        to: to.into(),
        dimension: dimension.into(),
        step_size: 5.0,
    };
    let spec = SystemSpec {
        dimensions: dims,
        models: vec![tower, water, chillers, chilled],
        nodes: vec![
            node(
                COOLING_TOWER,
                "cooling_tower",
                &["TempCoTo"],
                &["TempHeatex"],
                &["PowerFan"],
                &["HeatRejection"],
            ),
            node(
                COOLING_WATER,
                "cooling_water",
                &["SetPressureCoWa"],
                &["TempHeatex"],
                &["PowerPumpCoWa", "HeatRejection"],
                &["CondenserCooling"],
            ),
            node(
                CHILLERS,
                "chillers",
                &["HysteresisA", "HysteresisB"],
                &["TempHeatex", "TempConsumer"],
                &["PowerChillers", "CondenserCooling"],
                &["ChilledCooling"],
            ),
            node(
                CHILLED_WATER,
                "chilled_water",
                &["SetPressureChWa"],
                &["TempConsumer"],
                &["PowerPumpChWa", "ChilledCooling"],
                &["CoolingPower"],
            ),
        ],
        edges: vec![
            edge(COOLING_TOWER, COOLING_WATER, "HeatRejection"),
            edge(COOLING_WATER, CHILLERS, "CondenserCooling"),
            edge(CHILLERS, CHILLED_WATER, "ChilledCooling"),
        ],
        root_weights: vec![RootWeight {
            energy_type: ELECTRICITY.into(),
            weight: 1.0,
            dimensions: names(&["PowerFan", "PowerPumpCoWa", "PowerChillers", "PowerPumpChWa"]),
        }],
        sink: Sinks::One(SinkSpec {
            node: CHILLED_WATER.into(),
            dimension: "CoolingPower".into(),
            step_size: 5.0,
        }),
    };
    let graph = build_graph(&spec).expect("reference plant is a valid system");
    CoolingComplex { seed, spec, graph }
}

impl Default for CoolingComplex {
    fn default() -> Self {
        build_cooling_complex(DEFAULT_SEED)
    }
}

/// Evaluates the ground-truth models through the chain.
///
/// `values` holds every free and coupling parameter. Effort is summed node
/// by node in traversal order, like the solver does.
pub fn realize(
    graph: &SystemGraph,
    values: &BTreeMap<String, f64>,
    counter: &EvalCounter,
) -> Result<Realized, ModelError> {
    realize_with(graph, &Settings::default(), values, counter)
}

/// [`realize`] for systems with external parameters, taken from `settings`.
pub fn realize_with(
    graph: &SystemGraph,
    settings: &Settings,
    values: &BTreeMap<String, f64>,
    counter: &EvalCounter,
) -> Result<Realized, ModelError> {
    let plan = Plan::new(graph, settings).map_err(|e| match e {
        crate::plan::PlanError::Model(m) => m,
        crate::plan::PlanError::MissingExternal(d) => ModelError::MissingInput(d),
        crate::plan::PlanError::Grid(g) => ModelError::InvalidModel {
            model: String::new(),
            reason: g.to_string(),
        },
    })?;
    let o = plan.evaluate_chain(values, counter)?;
    Ok(Realized {
        effort: o.effort,
        benefit: o.benefit,
        efficiency: efficiency(o.benefit, o.effort).ok(),
    })
}

/// Samples the inputs of `node` uniformly and records the ground-truth
/// outputs. Columns are the model inputs followed by its outputs.
pub fn sample_dataset(graph: &SystemGraph, node: &str, rows: usize, seed: u64) -> Dataset {
    let i = graph.node_index(node).expect("known node");
    let m = &graph.nodes[i].model;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = m.inputs.clone();
    columns.extend(m.outputs.iter().cloned());
    let mut data = Dataset::new(columns, &alloc::format!("refplant seed sample {seed}"));
    let bounds: Vec<_> = m
        .inputs
        .iter()
        .map(|d| graph.dimensions[d].interval())
        .collect();
    let counter = EvalCounter::new();
    let mut out = vec![0.0; m.outputs.len()];
    for _ in 0..rows {
        let x: Vec<f64> = bounds
            .iter()
            .map(|b| b.lo + (b.hi - b.lo) * rng.random::<f64>())
            .collect();
        m.eval_slice(&x, &bounds, &mut out, &counter)
            .expect("samples lie inside the box");
        let mut row = x;
        row.extend_from_slice(&out);
        data.push(row).expect("row matches columns");
    }
    data
}
