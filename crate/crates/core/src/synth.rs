//! Small synthetic systems for cross-checks and smoke tests.
//!
//! [`random_system`] builds chains and a split/merge diamond with integer
//! flow maps on integer parameter grids, so that edges balance often enough
//! to make the comparison with joint enumeration meaningful.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Dimension, DimensionKind, PolynomialModel, Term};
use crate::plan::Settings;
use crate::spec::{EdgeSpec, NodeSpec, RootWeight, SinkSpec, Sinks, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// `n` nodes in a row, `1 <= n <= 4`.
    Chain(usize),
    /// `s` feeds `a` and `b` through one split flow, both feed `t`.
    Diamond,
}

/// Builder for hand-written test systems.
#[derive(Debug, Clone, Default)]
pub struct Builder {
    spec: SystemSpec,
}

/// Output of a node model: name and `(coefficient, exponents)` terms.
pub type OutputTerms<'a> = (&'a str, Vec<(f64, Vec<u32>)>);

impl Builder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(mut self, name: &str, kind: DimensionKind, lo: f64, hi: f64) -> Self {
        self.spec
            .dimensions
            .push(Dimension::new(name, kind, "", lo, hi));
        self
    }

    /// Adds a node whose model has the same name. Inputs are `free`, then
    /// `coupling`; outputs are efforts, then benefits.
    pub fn node(
        mut self,
        name: &str,
        free: &[&str],
        coupling: &[&str],
        effort: &[OutputTerms<'_>],
        benefit: &[OutputTerms<'_>],
    ) -> Self {
        let inputs: Vec<String> = free.iter().chain(coupling).map(|s| s.to_string()).collect();
        let outs = effort.iter().chain(benefit);
        let degree = outs
            .clone()
            .flat_map(|(_, ts)| ts.iter().map(|(_, e)| e.iter().sum::<u32>()))
            .max()
            .unwrap_or(0);
        self.spec.models.push(PolynomialModel {
            name: name.into(),
            inputs,
            outputs: outs.clone().map(|(n, _)| n.to_string()).collect(),
            terms: outs
                .map(|(_, ts)| ts.iter().map(|(c, e)| Term::new(*c, e.clone())).collect())
                .collect(),
            max_degree: degree.max(1),
        });
        let strs = |v: &[OutputTerms<'_>]| v.iter().map(|(n, _)| n.to_string()).collect();
        self.spec.nodes.push(NodeSpec {
            name: name.into(),
            model: name.into(),
            free_params: free.iter().map(|s| s.to_string()).collect(),
            coupling_params: coupling.iter().map(|s| s.to_string()).collect(),
            external_params: Vec::new(),
            effort_dims: strs(effort),
            benefit_dims: strs(benefit),
            internal_dims: Vec::new(),
        });
        self
    }

    pub fn edge(mut self, from: &str, to: &str, dimension: &str, step: f64) -> Self {
        self.spec.edges.push(EdgeSpec {
            from: from.into(),
            to: to.into(),
            dimension: dimension.into(),
            step_size: step,
        });
        self
    }

    pub fn weight(mut self, energy_type: &str, weight: f64, dims: &[&str]) -> Self {
        self.spec.root_weights.push(RootWeight {
            energy_type: energy_type.into(),
            weight,
            dimensions: dims.iter().map(|s| s.to_string()).collect(),
        });
        self
    }

    pub fn sink(mut self, node: &str, dimension: &str, step: f64) -> Self {
        self.spec.sink = Sinks::One(SinkSpec {
            node: node.into(),
            dimension: dimension.into(),
            step_size: step,
        });
        self
    }

    pub fn build(self) -> SystemSpec {
        self.spec
    }
}

/// One node with `ν = φ` and `α = φ²` on `[0, hi]`.
pub fn square_node(hi: f64, step: f64) -> SystemSpec {
    use DimensionKind::*;
    Builder::new()
        .dim("phi", Free, 0.0, hi)
        .dim("alpha", Effort, 0.0, hi * hi)
        .dim("nu", Benefit, 0.0, hi)
        .node(
            "n",
            &["phi"],
            &[],
            &[("alpha", vec![(1.0, vec![2])])],
            &[("nu", vec![(1.0, vec![1])])],
        )
        .weight("elec", 1.0, &["alpha"])
        .sink("n", "nu", step)
        .build()
}

/// One node with `ν = φ₁ + φ₂` and `α = φ₁² + φ₂²` on `[0, hi]²`: every
/// benefit level between the extremes is reached by mirrored settings with
/// identical effort.
pub fn symmetric_node(hi: f64, step: f64) -> SystemSpec {
    use DimensionKind::*;
    Builder::new()
        .dim("phi1", Free, 0.0, hi)
        .dim("phi2", Free, 0.0, hi)
        .dim("alpha", Effort, 0.0, 2.0 * hi * hi)
        .dim("nu", Benefit, 0.0, 2.0 * hi)
        .node(
            "n",
            &["phi1", "phi2"],
            &[],
            &[("alpha", vec![(1.0, vec![2, 0]), (1.0, vec![0, 2])])],
            &[("nu", vec![(1.0, vec![1, 0]), (1.0, vec![0, 1])])],
        )
        .weight("elec", 1.0, &["alpha"])
        .sink("n", "nu", step)
        .build()
}

/// Random node flow map: `(coefficient, parameter index)` pairs plus offset.
fn flow_terms(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<(f64, Vec<u32>)> {
    let mut t: Vec<(f64, Vec<u32>)> = (0..n)
        .map(|i| {
            let mut e = vec![0; n];
            e[i] = 1;
            (scale * f64::from(rng.random_range(1u32..=2)), e)
        })
        .collect();
    t.push((f64::from(rng.random_range(0u32..=2)), vec![0; n]));
    t
}

fn flow_range(terms: &[(f64, Vec<u32>)], hi: f64) -> (f64, f64) {
    let mut lo = 0.0;
    let mut top = 0.0;
    for (c, e) in terms {
        if e.iter().all(|&x| x == 0) {
            lo += c;
            top += c;
        } else {
            top += c * hi;
        }
    }
    (lo, top)
}

/// Random system of the given shape with `q` levels per parameter.
///
/// Parameters live on `[0, q-1]` so their grid levels are the integers.
/// Flows are small integer combinations of the parameters; efforts are
/// positive quadratics with random real coefficients.
pub fn random_system(seed: u64, shape: Shape, q: u32) -> (SystemSpec, Settings) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = f64::from(q.max(2) - 1);
    let names: Vec<String> = match shape {
        Shape::Chain(n) => (0..n.clamp(1, 4)).map(|i| format!("n{i}")).collect(),
        Shape::Diamond => ["s", "a", "b", "t"].iter().map(|s| s.to_string()).collect(),
    };
    // (from, to) pairs; the diamond's first flow splits, its second merges
    let links: Vec<(usize, usize)> = match shape {
        Shape::Chain(_) => (1..names.len()).map(|i| (i - 1, i)).collect(),
        Shape::Diamond => vec![(0, 1), (0, 2), (1, 3), (2, 3)],
    };
    let flow_of = |from: usize| match shape {
        Shape::Chain(_) => format!("f_{}", names[from]),
        Shape::Diamond if from == 0 => "f_split".to_string(),
        Shape::Diamond => "f_merge".to_string(),
    };
    let sink_dim = String::from("nu");

    // couplings: shared by linked pairs, plus one spanning the diamond
    let mut couplings: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    let mut coupling_dims = Vec::new();
    let pairs: Vec<(usize, usize)> = match shape {
        Shape::Chain(_) => links.clone(),
        Shape::Diamond => vec![(0, 3), (1, 2)],
    };
    for (a, b) in pairs {
        if rng.random_bool(0.5) {
            let x = format!("x_{}_{}", names[a], names[b]);
            couplings[a].push(x.clone());
            couplings[b].push(x.clone());
            coupling_dims.push(x);
        }
    }

    let mut b = Builder::new();
    for x in &coupling_dims {
        b = b.dim(x, DimensionKind::Coupling, 0.0, hi);
    }
    let mut flow_ranges: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut nodes = Vec::new();
    let mut effort_dims = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let free_n = rng.random_range(1..=2usize);
        let free: Vec<String> = (0..free_n).map(|j| format!("p_{name}_{j}")).collect();
        for p in &free {
            b = b.dim(p, DimensionKind::Free, 0.0, hi);
        }
        let n_in = free.len() + couplings[i].len();
        // positive quadratic effort
        let mut e = vec![(rng.random_range(0.5..2.0), vec![0; n_in])];
        for k in 0..n_in {
            let mut lin = vec![0; n_in];
            lin[k] = 1;
            e.push((rng.random_range(-1.0..1.0), lin.clone()));
            lin[k] = 2;
            e.push((rng.random_range(0.1..1.0), lin));
        }
        let ed = format!("e_{name}");
        effort_dims.push(ed.clone());
        let incoming: Vec<usize> = links.iter().filter(|l| l.1 == i).map(|l| l.0).collect();
        let outgoing: Vec<usize> = links.iter().filter(|l| l.0 == i).map(|l| l.1).collect();
        let mut efforts = vec![(ed, e)];
        // required inflow; the merge node needs the sum of two edges
        if let Some(&from) = incoming.first() {
            let scale = incoming.len() as f64;
            let mut t = flow_terms(&mut rng, free.len(), scale);
            for t in &mut t {
                t.1.resize(n_in, 0);
            }
            efforts.push((flow_of(from), t));
        }
        let out_dim = if outgoing.is_empty() { sink_dim.clone() } else { flow_of(i) };
        let scale = outgoing.len().max(1) as f64;
        let mut out = flow_terms(&mut rng, free.len(), scale);
        for t in &mut out {
            t.1.resize(n_in, 0);
        }
        let (lo, top) = flow_range(&out, hi);
        let per_edge = (lo / scale, top / scale);
        flow_ranges
            .entry(out_dim.clone())
            .and_modify(|r| *r = (r.0.min(per_edge.0), r.1.max(per_edge.1)))
            .or_insert(per_edge);
        nodes.push((name.clone(), free, couplings[i].clone(), efforts, out_dim, out));
    }
    // fit each flow grid into at most 8 levels
    let mut steps = BTreeMap::new();
    for (d, (lo, top)) in &flow_ranges {
        let mut step = 1.0;
        while (libm::ceil(top / step) - libm::floor(lo / step)) > 7.0 {
            step *= 2.0;
        }
        steps.insert(d.clone(), step);
        b = b.dim(d, DimensionKind::Benefit, *lo, *top);
    }
    for d in &effort_dims {
        b = b.dim(d, DimensionKind::Effort, -1e6, 1e6);
    }
    for (name, free, coupling, efforts, out_dim, out) in &nodes {
        let free: Vec<&str> = free.iter().map(String::as_str).collect();
        let coupling: Vec<&str> = coupling.iter().map(String::as_str).collect();
        let efforts: Vec<OutputTerms<'_>> =
            efforts.iter().map(|(n, t)| (n.as_str(), t.clone())).collect();
        b = b.node(name, &free, &coupling, &efforts, &[(out_dim.as_str(), out.clone())]);
    }
    for &(from, to) in &links {
        let d = flow_of(from);
        b = b.edge(&names[from], &names[to], &d, steps[&d]);
    }
    let eds: Vec<&str> = effort_dims.iter().map(String::as_str).collect();
    b = b.weight("elec", 1.0, &eds);
    b = b.sink(names.last().unwrap(), &sink_dim, steps[&sink_dim]);
    (b.build(), Settings::with_steps(q))
}
