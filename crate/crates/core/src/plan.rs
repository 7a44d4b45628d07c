//! Discretized view of a system graph.
//!
//! A [`Plan`] fixes the grids of every enumerated parameter and energy flow
//! and compiles each node into index-based form. It holds the feasibility
//! rules shared by the traversal engine and the baselines: how efforts are
//! commensurated at the root, how flows are snapped to their grids, and how
//! edge levels have to balance at producers and consumers.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::grid::{make_flow_grid, make_param_grid, Grid, GridError};
use crate::model::{EvalCounter, Interval, ModelError};
use crate::topology::SystemGraph;

/// Tie tolerance used when none is configured: relative, on cumulative effort.
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-9;

/// Discretization and scenario settings for one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    /// Steps per enumerated parameter (free and coupling).
    pub param_steps: u32,
    #[serde(default)]
    pub param_steps_by_dim: BTreeMap<String, u32>,
    /// Overrides every flow step from the system document.
    #[serde(default)]
    pub flow_step: Option<f64>,
    #[serde(default)]
    pub flow_step_by_dim: BTreeMap<String, f64>,
    pub tie_tolerance: f64,
    /// Values of the external parameters for this scenario.
    #[serde(default)]
    pub external: BTreeMap<String, f64>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            param_steps: 5,
            param_steps_by_dim: BTreeMap::new(),
            flow_step: None,
            flow_step_by_dim: BTreeMap::new(),
            tie_tolerance: DEFAULT_TIE_TOLERANCE,
            external: BTreeMap::new(),
        }
    }
}

impl Settings {
    pub fn with_steps(q: u32) -> Self {
        Self {
            param_steps: q,
            ..Self::default()
        }
    }

    pub fn flow_step(mut self, step: f64) -> Self {
        self.flow_step = Some(step);
        self
    }

    pub fn steps_for(&self, dim: &str) -> u32 {
        self.param_steps_by_dim
            .get(dim)
            .copied()
            .unwrap_or(self.param_steps)
    }

    pub fn step_for(&self, dim: &str, document_step: f64) -> f64 {
        self.flow_step_by_dim
            .get(dim)
            .copied()
            .or(self.flow_step)
            .unwrap_or(document_step)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("no value given for external parameter `{0}`")]
    MissingExternal(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Input {
    Local(usize),
    Fixed(f64),
}

/// Edges of one node sharing one flow dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGroup {
    pub dimension: String,
    /// Model output carrying the flow.
    pub output: usize,
    pub edges: Vec<usize>,
    /// Grid of one edge.
    pub edge_grid: Grid,
    /// Grid the group total is snapped to. Equal to `edge_grid` for a
    /// single edge, otherwise the sums of edge levels.
    pub total_grid: Grid,
}

impl FlowGroup {
    fn new(dimension: &str, output: usize, edges: Vec<usize>, edge_grid: Grid) -> Self {
        let m = edges.len() as i64;
        let total_grid = if m == 1 {
            edge_grid.clone()
        } else {
            Grid::flow_range(
                dimension,
                edge_grid.step().unwrap_or(1.0),
                edge_grid.first_index * m,
                edge_grid.last_index() * m,
            )
        };
        Self {
            dimension: dimension.into(),
            output,
            edges,
            edge_grid,
            total_grid,
        }
    }

    /// Snapped group total, `None` when the value falls off the grid.
    pub fn snap_total(&self, outputs: &[f64]) -> Option<i64> {
        self.total_grid.snap_index(outputs[self.output])
    }

    /// Every split of `total` into per-edge grid levels.
    pub fn splits(&self, total: i64) -> Vec<Vec<i64>> {
        compositions(
            total,
            self.edges.len(),
            self.edge_grid.first_index,
            self.edge_grid.last_index(),
        )
    }
}

/// Index-based view of one subsystem node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePlan {
    pub node: usize,
    /// Enumerated dimensions: free parameters, then couplings.
    pub local_dims: Vec<String>,
    pub free_count: usize,
    pub local_grids: Vec<Grid>,
    inputs: Vec<Input>,
    bounds: Vec<Interval>,
    /// `(output index, weight)` of every effort drawn from the root.
    pub draws: Vec<(usize, f64)>,
    pub incoming: Vec<FlowGroup>,
    pub outgoing: Vec<FlowGroup>,
    /// Output index of the requested benefit, for the sink node.
    pub sink_output: Option<usize>,
}

impl NodePlan {
    /// Number of local grid points, `prod` of the local grid sizes.
    pub fn local_size(&self) -> u64 {
        self.local_grids.iter().map(|g| g.len() as u64).product()
    }

    pub fn couplings(&self) -> &[String] {
        &self.local_dims[self.free_count..]
    }

    /// Evaluates the model with local dimensions set to `local` (real values,
    /// ordered like `local_dims`).
    pub fn evaluate(
        &self,
        graph: &SystemGraph,
        local: &[f64],
        scratch: &mut Vec<f64>,
        out: &mut [f64],
        counter: &EvalCounter,
    ) -> Result<(), ModelError> {
        scratch.clear();
        scratch.extend(self.inputs.iter().map(|i| match *i {
            Input::Local(j) => local[j],
            Input::Fixed(v) => v,
        }));
        graph.nodes[self.node]
            .model
            .eval_slice(scratch, &self.bounds, out, counter)
    }

    /// Commensurated root effort of this node, accumulated in draw order.
    pub fn draw_cost(&self, outputs: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &(o, w) in &self.draws {
            acc += w * outputs[o];
        }
        acc
    }

    pub fn draws_nonnegative(&self, outputs: &[f64]) -> bool {
        self.draws.iter().all(|&(o, _)| outputs[o] >= 0.0)
    }

    pub fn incoming_totals(&self, outputs: &[f64]) -> Option<Vec<i64>> {
        self.incoming.iter().map(|g| g.snap_total(outputs)).collect()
    }

    pub fn outgoing_totals(&self, outputs: &[f64]) -> Option<Vec<i64>> {
        self.outgoing.iter().map(|g| g.snap_total(outputs)).collect()
    }
}

/// Grids and compiled nodes for one graph under one set of settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan<'g> {
    pub graph: &'g SystemGraph,
    pub param_grids: BTreeMap<String, Grid>,
    pub flow_grids: BTreeMap<String, Grid>,
    pub sink_grid: Grid,
    /// Indexed like `graph.nodes`.
    pub nodes: Vec<NodePlan>,
}

impl<'g> Plan<'g> {
    pub fn new(graph: &'g SystemGraph, settings: &Settings) -> Result<Self, PlanError> {
        let mut param_grids = BTreeMap::new();
        for n in &graph.nodes {
            for d in n.local_dims() {
                if !param_grids.contains_key(d) {
                    let g = make_param_grid(&graph.dimensions[d], settings.steps_for(d))?;
                    param_grids.insert(d.clone(), g);
                }
            }
        }
        let mut flow_grids = BTreeMap::new();
        for e in &graph.edges {
            if !flow_grids.contains_key(&e.dimension) {
                let step = settings.step_for(&e.dimension, e.step_size);
                let g = make_flow_grid(&graph.dimensions[&e.dimension], step)?;
                flow_grids.insert(e.dimension.clone(), g);
            }
        }
        let sink_dim = &graph.sink.dimension;
        let sink_grid = make_flow_grid(
            &graph.dimensions[sink_dim],
            settings.step_for(sink_dim, graph.sink.step_size),
        )?;

        let mut nodes = Vec::with_capacity(graph.nodes.len());
        for (i, n) in graph.nodes.iter().enumerate() {
            let local_dims: Vec<String> = n.local_dims().cloned().collect();
            let mut inputs = Vec::with_capacity(n.model.inputs.len());
            let mut bounds = Vec::with_capacity(n.model.inputs.len());
            for name in &n.model.inputs {
                let dim = &graph.dimensions[name];
                bounds.push(dim.interval());
                if let Some(j) = local_dims.iter().position(|d| d == name) {
                    inputs.push(Input::Local(j));
                } else {
                    let v = *settings
                        .external
                        .get(name)
                        .ok_or_else(|| PlanError::MissingExternal(name.clone()))?;
                    if !dim.interval().contains(v) {
                        return Err(ModelError::OutOfBounds {
                            dimension: name.clone(),
                            value: v,
                            lo: dim.lo,
                            hi: dim.hi,
                        }
                        .into());
                    }
                    inputs.push(Input::Fixed(v));
                }
            }
            let out_idx = |d: &str| n.model.output_index(d).expect("validated output");
            let draws = graph
                .draws_of(i)
                .map(|d| (out_idx(&d.dimension), d.weight))
                .collect();
            let group = |edges: Vec<(usize, &crate::topology::FlowEdge)>| {
                let mut by_dim: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
                for (ei, e) in edges {
                    by_dim.entry(&e.dimension).or_default().push(ei);
                }
                by_dim
                    .into_iter()
                    .map(|(d, es)| FlowGroup::new(d, out_idx(d), es, flow_grids[d].clone()))
                    .collect::<Vec<_>>()
            };
            let incoming = group(graph.incoming(i).collect());
            let outgoing = group(graph.outgoing(i).collect());
            let local_grids = local_dims.iter().map(|d| param_grids[d].clone()).collect();
            nodes.push(NodePlan {
                node: i,
                free_count: n.free_params.len(),
                local_dims,
                local_grids,
                inputs,
                bounds,
                draws,
                incoming,
                outgoing,
                sink_output: (graph.sink.node == i).then(|| out_idx(sink_dim)),
            });
        }
        Ok(Self {
            graph,
            param_grids,
            flow_grids,
            sink_grid,
            nodes,
        })
    }

    /// Size of the densest node grid.
    pub fn combinations(&self) -> u64 {
        self.nodes.iter().map(NodePlan::local_size).max().unwrap_or(0)
    }

    /// Evaluates every node at real parameter values and checks the flow
    /// balance under the snapping rules.
    pub fn evaluate_chain(
        &self,
        values: &BTreeMap<String, f64>,
        counter: &EvalCounter,
    ) -> Result<ChainOutcome, ModelError> {
        let g = self.graph;
        let mut scratch = Vec::new();
        let mut effort = 0.0;
        let mut feasible = true;
        let mut produced = vec![None; g.nodes.len()];
        let mut consumed = vec![None; g.nodes.len()];
        let mut outputs = BTreeMap::new();
        let mut benefit = 0.0;
        let mut sink_level = None;
        for &i in g.node_order() {
            let np = &self.nodes[i];
            let local: Vec<f64> = np
                .local_dims
                .iter()
                .map(|d| {
                    values
                        .get(d)
                        .copied()
                        .ok_or_else(|| ModelError::MissingInput(d.clone()))
                })
                .collect::<Result<_, _>>()?;
            let mut out = vec![0.0; g.nodes[i].model.outputs.len()];
            np.evaluate(g, &local, &mut scratch, &mut out, counter)?;
            effort += np.draw_cost(&out);
            feasible &= np.draws_nonnegative(&out);
            produced[i] = np.outgoing_totals(&out);
            consumed[i] = np.incoming_totals(&out);
            feasible &= produced[i].is_some() && consumed[i].is_some();
            if let Some(o) = np.sink_output {
                benefit = out[o];
                sink_level = self.sink_grid.snap_index(out[o]);
                feasible &= sink_level.is_some();
            }
            outputs.insert(
                g.nodes[i].name.clone(),
                g.nodes[i].model.outputs.iter().cloned().zip(out).collect(),
            );
        }
        let flows = if feasible {
            let p: Vec<Vec<i64>> = produced.into_iter().map(Option::unwrap).collect();
            let c: Vec<Vec<i64>> = consumed.into_iter().map(Option::unwrap).collect();
            self.balance_edges(&p, &c)
        } else {
            None
        };
        let feasible = feasible && flows.is_some();
        Ok(ChainOutcome {
            effort,
            benefit,
            sink_level: sink_level.map(|k| k as f64 * self.sink_grid.step().unwrap_or(1.0)),
            sink_index: sink_level,
            feasible,
            edge_levels: flows.unwrap_or_default(),
            outputs,
        })
    }

    /// Finds edge levels matching every producer and consumer group total.
    ///
    /// `produced[n][g]` is the snapped total of outgoing group `g` of node
    /// `n`, `consumed[n][g]` the same for incoming groups. Returns one level
    /// per edge (the lowest in lexicographic order if several exist).
    pub fn balance_edges(&self, produced: &[Vec<i64>], consumed: &[Vec<i64>]) -> Option<Vec<i64>> {
        let edges = &self.graph.edges;
        // fixed[e]: level forced by a single-edge group at either end
        let mut fixed: Vec<Option<i64>> = vec![None; edges.len()];
        let mut groups: Vec<(&[usize], i64)> = Vec::new();
        for (np, (p, c)) in self.nodes.iter().zip(produced.iter().zip(consumed)) {
            for (grp, &t) in np.outgoing.iter().zip(p).chain(np.incoming.iter().zip(c)) {
                if grp.edges.len() == 1 {
                    let e = grp.edges[0];
                    if fixed[e].is_some_and(|v| v != t) {
                        return None;
                    }
                    fixed[e] = Some(t);
                }
                groups.push((&grp.edges, t));
            }
        }
        let mut levels = vec![0i64; edges.len()];
        let free: Vec<usize> = (0..edges.len()).filter(|&e| fixed[e].is_none()).collect();
        for (e, f) in fixed.iter().enumerate() {
            if let Some(v) = f {
                levels[e] = *v;
            }
        }
        let ranges: Vec<(i64, i64)> = free
            .iter()
            .map(|&e| {
                let g = &self.flow_grids[&edges[e].dimension];
                (g.first_index, g.last_index())
            })
            .collect();
        fn search(
            k: usize,
            free: &[usize],
            ranges: &[(i64, i64)],
            levels: &mut [i64],
            groups: &[(&[usize], i64)],
        ) -> bool {
            if k == free.len() {
                return groups
                    .iter()
                    .all(|(es, t)| es.iter().map(|&e| levels[e]).sum::<i64>() == *t);
            }
            for v in ranges[k].0..=ranges[k].1 {
                levels[free[k]] = v;
                if search(k + 1, free, ranges, levels, groups) {
                    return true;
                }
            }
            false
        }
        search(0, &free, &ranges, &mut levels, &groups).then_some(levels)
    }
}

/// Result of evaluating a whole configuration through the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutcome {
    /// Commensurated root effort, summed node by node in traversal order.
    pub effort: f64,
    /// Raw requested-benefit output of the sink node.
    pub benefit: f64,
    pub sink_level: Option<f64>,
    pub sink_index: Option<i64>,
    pub feasible: bool,
    pub edge_levels: Vec<i64>,
    pub outputs: BTreeMap<String, BTreeMap<String, f64>>,
}

/// All ways to write `total` as an ordered sum of `parts` values in `lo..=hi`.
pub fn compositions(total: i64, parts: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(parts);
    fn rec(left: i64, parts: usize, lo: i64, hi: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if parts == 0 {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let rest = parts as i64 - 1;
        let from = lo.max(left - rest * hi);
        let to = hi.min(left - rest * lo);
        for v in from..=to {
            cur.push(v);
            rec(left - v, parts - 1, lo, hi, cur, out);
            cur.pop();
        }
    }
    if parts > 0 {
        rec(total, parts, lo, hi, &mut cur, &mut out);
    }
    out
}

/// Mixed-radix counter over grid sizes; yields position vectors in
/// lexicographic order (last dimension fastest).
pub struct GridWalk {
    sizes: Vec<usize>,
    cur: Vec<usize>,
    done: bool,
}

impl GridWalk {
    pub fn new(sizes: Vec<usize>) -> Self {
        let done = sizes.contains(&0);
        let cur = vec![0; sizes.len()];
        Self { sizes, cur, done }
    }
}

impl Iterator for GridWalk {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let item = self.cur.clone();
        let mut i = self.sizes.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            self.cur[i] += 1;
            if self.cur[i] < self.sizes[i] {
                break;
            }
            self.cur[i] = 0;
        }
        Some(item)
    }
}
