//! The decomposed system as a directed acyclic graph.
//!
//! Nodes are subsystems, edges are energy flows from a benefit of one node
//! to an effort of another. Effort dimensions not fed by an edge are drawn
//! from the virtual root, which weights each energy type into one scalar.
//! The virtual sink is attached to one benefit dimension of one node.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::model::{Dimension, DimensionKind, ModelError, PolynomialModel};
use crate::spec::{EdgeSpec, NodeSpec, SinkSpec, SystemSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("cycle detected: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("edge {from} -> {to} carries `{dimension}`, which is not a benefit of {from} and an effort of {to}")]
    DanglingFlow {
        from: String,
        to: String,
        dimension: String,
    },
    #[error("node `{0}` does not lie on a path from the root to the sink")]
    Orphan(String),
    #[error("exactly one sink is allowed, found {}", .0.join(", "))]
    MultipleSinks(Vec<String>),
    #[error("no sink defined")]
    MissingSink,
    #[error("no root weight for energy input `{0}`")]
    MissingWeight(String),
    #[error("root weight for `{energy_type}` must be positive and finite, got {weight}")]
    BadWeight { energy_type: String, weight: f64 },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("duplicate name `{0}`")]
    Duplicate(String),
    #[error("dimension `{name}` has inverted interval [{lo}, {hi}]")]
    InvalidInterval { name: String, lo: f64, hi: f64 },
    #[error("node `{node}`: {reason}")]
    RoleMismatch { node: String, reason: String },
    #[error("flow `{dimension}` has step sizes {a} and {b}; edges sharing a dimension must share the step")]
    InconsistentStep { dimension: String, a: f64, b: f64 },
    #[error("flow `{dimension}` step size must be positive, got {step}")]
    BadStep { dimension: String, step: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemNode {
    pub name: String,
    pub model: PolynomialModel,
    pub free_params: Vec<String>,
    pub coupling_params: Vec<String>,
    pub external_params: Vec<String>,
    pub effort_dims: Vec<String>,
    pub benefit_dims: Vec<String>,
    pub internal_dims: Vec<String>,
}

impl SubsystemNode {
    /// Enumerated dimensions of this node: free parameters, then couplings.
    pub fn local_dims(&self) -> impl Iterator<Item = &String> {
        self.free_params.iter().chain(&self.coupling_params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowEdge {
    pub from: usize,
    pub to: usize,
    pub dimension: String,
    pub step_size: f64,
}

/// Effort dimension drawn directly from the virtual root.
#[derive(Debug, Clone, PartialEq)]
pub struct RootDraw {
    pub node: usize,
    pub dimension: String,
    pub energy_type: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sink {
    pub node: usize,
    pub dimension: String,
    pub step_size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vertex {
    Root,
    Node(usize),
    Sink,
}

/// Validated, immutable system graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemGraph {
    pub dimensions: BTreeMap<String, Dimension>,
    pub nodes: Vec<SubsystemNode>,
    pub edges: Vec<FlowEdge>,
    pub root_draws: Vec<RootDraw>,
    pub weights: BTreeMap<String, f64>,
    pub sink: Sink,
    order: Vec<usize>,
    spec: SystemSpec,
}

impl SystemGraph {
    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Subsystem nodes in traversal order.
    pub fn node_order(&self) -> &[usize] {
        &self.order
    }

    pub fn incoming(&self, node: usize) -> impl Iterator<Item = (usize, &FlowEdge)> {
        self.edges.iter().enumerate().filter(move |(_, e)| e.to == node)
    }

    pub fn outgoing(&self, node: usize) -> impl Iterator<Item = (usize, &FlowEdge)> {
        self.edges.iter().enumerate().filter(move |(_, e)| e.from == node)
    }

    pub fn draws_of(&self, node: usize) -> impl Iterator<Item = &RootDraw> {
        self.root_draws.iter().filter(move |d| d.node == node)
    }

    pub fn vertex_name(&self, v: Vertex) -> &str {
        match v {
            Vertex::Root => "root",
            Vertex::Node(i) => &self.nodes[i].name,
            Vertex::Sink => "sink",
        }
    }

    /// All coupling dimensions, each listed once.
    pub fn coupling_dims(&self) -> BTreeSet<&String> {
        self.nodes.iter().flat_map(|n| &n.coupling_params).collect()
    }
}

fn dup_check<'a>(names: impl Iterator<Item = &'a String>) -> Result<(), GraphError> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(GraphError::Duplicate(n.clone()));
        }
    }
    Ok(())
}

fn check_node(
    ns: &NodeSpec,
    model: &PolynomialModel,
    dims: &BTreeMap<String, Dimension>,
) -> Result<(), GraphError> {
    let mismatch = |reason: String| GraphError::RoleMismatch {
        node: ns.name.clone(),
        reason,
    };
    let roles: [(&[String], &[DimensionKind], &str); 6] = [
        (&ns.free_params, &[DimensionKind::Free], "free_params"),
        (&ns.coupling_params, &[DimensionKind::Coupling], "coupling_params"),
        (&ns.external_params, &[DimensionKind::External], "external_params"),
        (
            &ns.effort_dims,
            &[DimensionKind::Effort, DimensionKind::Benefit],
            "effort_dims",
        ),
        (
            &ns.benefit_dims,
            &[DimensionKind::Effort, DimensionKind::Benefit],
            "benefit_dims",
        ),
        (&ns.internal_dims, &[DimensionKind::Internal], "internal_dims"),
    ];
    for (list, kinds, label) in roles {
        for name in list {
            let d = dims
                .get(name)
                .ok_or_else(|| GraphError::UnknownDimension(name.clone()))?;
            if !kinds.contains(&d.kind) {
                return Err(mismatch(alloc::format!(
                    "`{name}` is listed in {label} but has kind {}",
                    d.kind
                )));
            }
        }
    }
    let partition = |parts: &[&[String]], whole: &[String], what: &str| {
        let mut joined: Vec<&String> = parts.iter().flat_map(|p| p.iter()).collect();
        let mut target: Vec<&String> = whole.iter().collect();
        joined.sort();
        target.sort();
        if joined != target {
            Err(mismatch(alloc::format!(
                "role lists do not partition the model {what}"
            )))
        } else {
            Ok(())
        }
    };
    partition(
        &[&ns.free_params, &ns.coupling_params, &ns.external_params],
        &model.inputs,
        "inputs",
    )?;
    partition(
        &[&ns.effort_dims, &ns.benefit_dims, &ns.internal_dims],
        &model.outputs,
        "outputs",
    )?;
    Ok(())
}

/// Validates a parsed system document and builds the graph.
pub fn build_graph(spec: &SystemSpec) -> Result<SystemGraph, GraphError> {
    dup_check(spec.dimensions.iter().map(|d| &d.name))?;
    let mut dims = BTreeMap::new();
    for d in &spec.dimensions {
        // also rejects NaN bounds
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(d.lo <= d.hi) {
            return Err(GraphError::InvalidInterval {
                name: d.name.clone(),
                lo: d.lo,
                hi: d.hi,
            });
        }
        dims.insert(d.name.clone(), d.clone());
    }

    dup_check(spec.models.iter().map(|m| &m.name))?;
    for m in &spec.models {
        m.check_shape()?;
        m.check_dimensions(&dims)?;
    }

    dup_check(spec.nodes.iter().map(|n| &n.name))?;
    dup_check(spec.nodes.iter().flat_map(|n| &n.free_params))?;
    let mut nodes = Vec::with_capacity(spec.nodes.len());
    for ns in &spec.nodes {
        let model = spec
            .model(&ns.model)
            .ok_or_else(|| GraphError::UnknownModel(ns.model.clone()))?;
        check_node(ns, model, &dims)?;
        nodes.push(SubsystemNode {
            name: ns.name.clone(),
            model: model.clone(),
            free_params: ns.free_params.clone(),
            coupling_params: ns.coupling_params.clone(),
            external_params: ns.external_params.clone(),
            effort_dims: ns.effort_dims.clone(),
            benefit_dims: ns.benefit_dims.clone(),
            internal_dims: ns.internal_dims.clone(),
        });
    }
    let index = |name: &str| {
        nodes
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    };

    let mut edges = Vec::with_capacity(spec.edges.len());
    let mut steps: BTreeMap<&str, f64> = BTreeMap::new();
    for EdgeSpec {
        from,
        to,
        dimension,
        step_size,
    } in &spec.edges
    {
        let (f, t) = (index(from)?, index(to)?);
        if !dims.contains_key(dimension) {
            return Err(GraphError::UnknownDimension(dimension.clone()));
        }
        if !nodes[f].benefit_dims.contains(dimension) || !nodes[t].effort_dims.contains(dimension)
        {
            return Err(GraphError::DanglingFlow {
                from: from.clone(),
                to: to.clone(),
                dimension: dimension.clone(),
            });
        }
        if !(*step_size > 0.0 && step_size.is_finite()) {
            return Err(GraphError::BadStep {
                dimension: dimension.clone(),
                step: *step_size,
            });
        }
        if let Some(&prev) = steps.get(dimension.as_str()) {
            if prev != *step_size {
                return Err(GraphError::InconsistentStep {
                    dimension: dimension.clone(),
                    a: prev,
                    b: *step_size,
                });
            }
        }
        steps.insert(dimension, *step_size);
        edges.push(FlowEdge {
            from: f,
            to: t,
            dimension: dimension.clone(),
            step_size: *step_size,
        });
    }

    let mut weights = BTreeMap::new();
    let mut type_of: BTreeMap<&str, (&str, f64)> = BTreeMap::new();
    for rw in &spec.root_weights {
        if !(rw.weight > 0.0 && rw.weight.is_finite()) {
            return Err(GraphError::BadWeight {
                energy_type: rw.energy_type.clone(),
                weight: rw.weight,
            });
        }
        if weights.insert(rw.energy_type.clone(), rw.weight).is_some() {
            return Err(GraphError::Duplicate(rw.energy_type.clone()));
        }
        for d in &rw.dimensions {
            if !dims.contains_key(d) {
                return Err(GraphError::UnknownDimension(d.clone()));
            }
            if type_of.insert(d, (&rw.energy_type, rw.weight)).is_some() {
                return Err(GraphError::Duplicate(d.clone()));
            }
        }
    }
    let mut root_draws = Vec::new();
    for (i, n) in nodes.iter().enumerate() {
        for d in &n.effort_dims {
            let fed = edges.iter().any(|e| e.to == i && &e.dimension == d);
            if fed {
                continue;
            }
            let (ty, w) = type_of
                .get(d.as_str())
                .ok_or_else(|| GraphError::MissingWeight(d.clone()))?;
            root_draws.push(RootDraw {
                node: i,
                dimension: d.clone(),
                energy_type: (*ty).into(),
                weight: *w,
            });
        }
    }

    let sink = match spec.sink.as_slice() {
        [] => return Err(GraphError::MissingSink),
        [one] => one,
        many => {
            return Err(GraphError::MultipleSinks(
                many.iter().map(|s| s.node.clone()).collect(),
            ))
        }
    };
    let SinkSpec {
        node: sink_node,
        dimension: sink_dim,
        step_size: sink_step,
    } = sink;
    let sink_idx = index(sink_node)?;
    if !dims.contains_key(sink_dim) {
        return Err(GraphError::UnknownDimension(sink_dim.clone()));
    }
    if !nodes[sink_idx].benefit_dims.contains(sink_dim) {
        return Err(GraphError::RoleMismatch {
            node: sink_node.clone(),
            reason: alloc::format!("sink dimension `{sink_dim}` is not one of its benefits"),
        });
    }
    if !(*sink_step > 0.0 && sink_step.is_finite()) {
        return Err(GraphError::BadStep {
            dimension: sink_dim.clone(),
            step: *sink_step,
        });
    }

    if let Some(cycle) = find_cycle(nodes.len(), &edges) {
        return Err(GraphError::CycleDetected(
            cycle.into_iter().map(|i| nodes[i].name.clone()).collect(),
        ));
    }

    // every node must be reachable from the root and reach the sink
    let mut from_root = vec![false; nodes.len()];
    let mut stack: Vec<usize> = root_draws.iter().map(|d| d.node).collect();
    while let Some(u) = stack.pop() {
        if core::mem::replace(&mut from_root[u], true) {
            continue;
        }
        stack.extend(edges.iter().filter(|e| e.from == u).map(|e| e.to));
    }
    let mut to_sink = vec![false; nodes.len()];
    stack.push(sink_idx);
    while let Some(u) = stack.pop() {
        if core::mem::replace(&mut to_sink[u], true) {
            continue;
        }
        stack.extend(edges.iter().filter(|e| e.to == u).map(|e| e.from));
    }
    let mut by_name: Vec<usize> = (0..nodes.len()).collect();
    by_name.sort_by(|&a, &b| nodes[a].name.cmp(&nodes[b].name));
    if let Some(&o) = by_name.iter().find(|&&i| !(from_root[i] && to_sink[i])) {
        return Err(GraphError::Orphan(nodes[o].name.clone()));
    }

    let order = layered_order(&nodes, &edges);
    Ok(SystemGraph {
        dimensions: dims,
        nodes,
        edges,
        root_draws,
        weights,
        sink: Sink {
            node: sink_idx,
            dimension: sink_dim.clone(),
            step_size: *sink_step,
        },
        order,
        spec: spec.clone(),
    })
}

/// Returns the nodes of one cycle, first node repeated at the end.
fn find_cycle(n: usize, edges: &[FlowEdge]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e.from].push(e.to);
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let mut mark = vec![Mark::New; n];
    let mut parent = vec![usize::MAX; n];
    for start in 0..n {
        if mark[start] != Mark::New {
            continue;
        }
        // iterative DFS: (node, next child position)
        let mut stack = vec![(start, 0usize)];
        mark[start] = Mark::Active;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if let Some(&v) = adj[u].get(*next) {
                *next += 1;
                match mark[v] {
                    Mark::New => {
                        parent[v] = u;
                        mark[v] = Mark::Active;
                        stack.push((v, 0));
                    }
                    Mark::Active => return Some(directed_cycle(v, u, &parent)),
                    Mark::Done => {}
                }
            } else {
                mark[u] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

fn directed_cycle(v: usize, u: usize, parent: &[usize]) -> Vec<usize> {
    // tree path v -> ... -> u plus back edge u -> v
    let mut path = vec![u];
    let mut w = u;
    while w != v {
        w = parent[w];
        path.push(w);
    }
    path.reverse();
    path.push(v);
    path
}

/// Longest-path layers from the root; ties within a layer broken by name.
fn layered_order(nodes: &[SubsystemNode], edges: &[FlowEdge]) -> Vec<usize> {
    let n = nodes.len();
    let mut indeg = vec![0usize; n];
    for e in edges {
        indeg[e.to] += 1;
    }
    let mut depth = vec![1usize; n];
    let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    while let Some(u) = ready.pop() {
        for e in edges.iter().filter(|e| e.from == u) {
            depth[e.to] = depth[e.to].max(depth[u] + 1);
            indeg[e.to] -= 1;
            if indeg[e.to] == 0 {
                ready.push(e.to);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        depth[a]
            .cmp(&depth[b])
            .then_with(|| nodes[a].name.cmp(&nodes[b].name))
    });
    order
}

/// Traversal order including the virtual root and sink.
pub fn topological_order(g: &SystemGraph) -> Vec<Vertex> {
    let mut v = Vec::with_capacity(g.nodes.len() + 2);
    v.push(Vertex::Root);
    v.extend(g.order.iter().map(|&i| Vertex::Node(i)));
    v.push(Vertex::Sink);
    v
}

/// Names of [`topological_order`], with `root` and `sink` at the ends.
pub fn order_names(g: &SystemGraph) -> Vec<String> {
    topological_order(g)
        .into_iter()
        .map(|v| g.vertex_name(v).to_string())
        .collect()
}

/// Weighted sum of root inputs, the scalar objective.
pub fn commensurate_effort(
    root_inputs: &BTreeMap<String, f64>,
    weights: &BTreeMap<String, f64>,
) -> Result<f64, GraphError> {
    let mut total = 0.0;
    for (ty, v) in root_inputs {
        let w = *weights
            .get(ty)
            .ok_or_else(|| GraphError::MissingWeight(ty.clone()))?;
        if !(w > 0.0 && w.is_finite()) {
            return Err(GraphError::BadWeight {
                energy_type: ty.clone(),
                weight: w,
            });
        }
        total += w * v;
    }
    Ok(total)
}
