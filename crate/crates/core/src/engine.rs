//! Traversal engine.
//!
//! Nodes are solved one after another in topological order. After node `p`
//! the table keeps, for every combination of
//!
//! * levels of the flows still open (edges from solved to unsolved nodes,
//!   and the requested benefit once the sink node is solved), and
//! * levels of coupling parameters shared between solved and unsolved nodes,
//!
//! only the configurations with the least cumulative root effort. Couplings
//! that no unsolved node references are projected out of the key. On a chain
//! the key reduces to `(benefit level, shared couplings)` of the last node.
//!
//! Every entry points back to the key it extended in the previous table, so
//! full configurations are rebuilt on look-up without storing them.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::model::{efficiency, EvalCounter};
use crate::plan::{GridWalk, NodePlan, Plan, PlanError};
use crate::topology::SystemGraph;

pub use crate::plan::Settings;

/// Most configurations rebuilt for one look-up when ties multiply.
pub const MAX_TIED_CONFIGURATIONS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("node `{0}` has no feasible configuration")]
    EmptyTable(String),
    #[error("infeasible: node `{0}` has no feasible configuration")]
    Infeasible(String),
    #[error("table layout does not match the system graph: {0}")]
    Corrupt(String),
}

/// One open flow in a table key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlowSlot {
    Edge(usize),
    Sink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionEntry {
    /// Grid positions of the node's free parameters, then its couplings.
    pub local: Vec<u32>,
    /// Key of the extended configuration in the previous table.
    pub prev_key: Vec<i64>,
    pub local_cost: f64,
    pub cumulative_cost: f64,
    /// Model outputs, internals included.
    pub outputs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    /// Least cumulative cost under this key.
    pub best: f64,
    /// Entries within the tie tolerance of `best`, cheapest first.
    pub entries: Vec<SolutionEntry>,
}

fn within(cost: f64, best: f64, tol: f64) -> bool {
    cost - best <= tol * best.abs().max(cost.abs())
}

impl Bucket {
    fn offer(&mut self, e: SolutionEntry, tol: f64) {
        let c = e.cumulative_cost;
        if self.entries.is_empty() {
            self.best = c;
            self.entries.push(e);
        } else if c < self.best {
            self.best = c;
            self.entries
                .retain(|x| within(x.cumulative_cost, c, tol));
            self.entries.push(e);
        } else if within(c, self.best, tol) {
            self.entries.push(e);
        }
    }

    fn finish(&mut self) {
        self.entries.sort_by(|a, b| {
            a.cumulative_cost
                .total_cmp(&b.cumulative_cost)
                .then_with(|| a.local.cmp(&b.local))
                .then_with(|| a.prev_key.cmp(&b.prev_key))
        });
    }
}

/// Best configurations of all nodes solved so far, per open key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTable {
    pub node: String,
    pub flow_slots: Vec<FlowSlot>,
    pub coupling_slots: Vec<String>,
    #[serde(with = "keyed")]
    pub buckets: BTreeMap<Vec<i64>, Bucket>,
}

impl NodeTable {
    fn root() -> Self {
        let mut buckets = BTreeMap::new();
        buckets.insert(
            Vec::new(),
            Bucket {
                best: 0.0,
                entries: Vec::new(),
            },
        );
        Self {
            node: "root".into(),
            flow_slots: Vec::new(),
            coupling_slots: Vec::new(),
            buckets,
        }
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn entry_count(&self) -> usize {
        self.buckets.values().map(|b| b.entries.len()).sum()
    }

    pub fn key_width(&self) -> usize {
        self.flow_slots.len() + self.coupling_slots.len()
    }
}

mod keyed {
    use super::Bucket;
    use alloc::collections::BTreeMap;
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        m: &BTreeMap<Vec<i64>, Bucket>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<Vec<i64>, Bucket>, D::Error> {
        let v: Vec<(Vec<i64>, Bucket)> = Vec::deserialize(d)?;
        Ok(v.into_iter().collect())
    }
}

/// Outcome of a full traversal.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedSystem {
    pub graph: SystemGraph,
    pub settings: Settings,
    /// One table per node, in traversal order; the last one is keyed by
    /// the requested-benefit level alone.
    pub tables: Vec<NodeTable>,
    pub sink_grid: Grid,
    pub eval_count: u64,
    /// `(configuration, previous key)` pairs examined while joining.
    pub candidates: u64,
    /// Filled in by callers that can measure time.
    pub wall_time: Duration,
}

impl SolvedSystem {
    /// Reassembles a solved system from stored parts, checking that the
    /// tables fit the graph.
    pub fn from_parts(
        graph: SystemGraph,
        settings: Settings,
        tables: Vec<NodeTable>,
        eval_count: u64,
        candidates: u64,
        wall_time: Duration,
    ) -> Result<Self, SolveError> {
        let plan = Plan::new(&graph, &settings)?;
        let order = graph.node_order();
        if tables.len() != order.len() {
            return Err(SolveError::Corrupt(alloc::format!(
                "{} tables for {} nodes",
                tables.len(),
                order.len()
            )));
        }
        for (p, (t, &n)) in tables.iter().zip(order).enumerate() {
            let (flows, couplings) = layout_after(&graph, p);
            if t.node != graph.nodes[n].name || t.flow_slots != flows || t.coupling_slots != couplings
            {
                return Err(SolveError::Corrupt(alloc::format!(
                    "table {p} does not match node `{}`",
                    graph.nodes[n].name
                )));
            }
            if t.buckets.keys().any(|k| k.len() != t.key_width()) {
                return Err(SolveError::Corrupt(alloc::format!("bad key width in table {p}")));
            }
        }
        let sink_grid = plan.sink_grid.clone();
        Ok(Self {
            graph,
            settings,
            tables,
            sink_grid,
            eval_count,
            candidates,
            wall_time,
        })
    }

    pub fn sink_table(&self) -> &NodeTable {
        self.tables.last().expect("at least one node")
    }

    pub fn table(&self, node: &str) -> Option<&NodeTable> {
        self.tables.iter().find(|t| t.node == node)
    }

    /// Populated requested-benefit levels with their least effort.
    pub fn sink_levels(&self) -> Vec<(f64, f64)> {
        let step = self.sink_grid.step().unwrap_or(1.0);
        self.sink_table()
            .buckets
            .iter()
            .map(|(k, b)| (k[0] as f64 * step, b.best))
            .collect()
    }
}

/// Open flow slots and open couplings after traversal position `p`.
fn layout_after(g: &SystemGraph, p: usize) -> (Vec<FlowSlot>, Vec<String>) {
    let order = g.node_order();
    let pos = |n: usize| order.iter().position(|&x| x == n).expect("node in order");
    let mut flows: Vec<FlowSlot> = g
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| pos(e.from) <= p && pos(e.to) > p)
        .map(|(i, _)| FlowSlot::Edge(i))
        .collect();
    if pos(g.sink.node) <= p {
        flows.push(FlowSlot::Sink);
    }
    let couplings = g
        .coupling_dims()
        .into_iter()
        .filter(|d| {
            let users = || {
                g.nodes
                    .iter()
                    .enumerate()
                    .filter(move |(_, n)| n.coupling_params.contains(d))
                    .map(|(i, _)| pos(i))
            };
            users().any(|q| q <= p) && users().any(|q| q > p)
        })
        .cloned()
        .collect();
    (flows, couplings)
}

#[derive(Debug, Clone, Copy)]
enum KeyPart {
    Prev(usize),
    Xi(usize),
    Out(usize, usize),
    Sink,
}

/// Solves one node on top of the table of everything before it.
///
/// Every local grid point is evaluated once. Its efforts fed by edges are
/// snapped and must hit a populated key of `previous`; couplings already
/// present in that key must agree. Surviving candidates are bucketed by the
/// next key, keeping ties within `settings.tie_tolerance`.
pub fn solve_component(
    plan: &Plan<'_>,
    position: usize,
    previous: &NodeTable,
    settings: &Settings,
    counter: &EvalCounter,
    candidates: &mut u64,
) -> Result<NodeTable, SolveError> {
    let g = plan.graph;
    let node = g.node_order()[position];
    let np: &NodePlan = &plan.nodes[node];
    let (flows, couplings) = layout_after(g, position);
    let prev_width = previous.flow_slots.len();
    let slot_of_flow = |s: FlowSlot| previous.flow_slots.iter().position(|&x| x == s);
    let slot_of_xi = |d: &String| {
        previous
            .coupling_slots
            .iter()
            .position(|x| x == d)
            .map(|i| prev_width + i)
    };

    // (local coupling index, previous slot) for couplings fixed upstream
    let matched_xi: Vec<(usize, usize)> = np
        .couplings()
        .iter()
        .enumerate()
        .filter_map(|(j, d)| slot_of_xi(d).map(|s| (np.free_count + j, s)))
        .collect();
    let incoming_slots: Vec<Vec<usize>> = np
        .incoming
        .iter()
        .map(|grp| {
            grp.edges
                .iter()
                .map(|&e| slot_of_flow(FlowSlot::Edge(e)).expect("producer solved earlier"))
                .collect()
        })
        .collect();

    let recipe: Vec<KeyPart> = flows
        .iter()
        .map(|&s| {
            if let Some(i) = slot_of_flow(s) {
                return KeyPart::Prev(i);
            }
            match s {
                FlowSlot::Sink => KeyPart::Sink,
                FlowSlot::Edge(e) => {
                    let (gi, grp) = np
                        .outgoing
                        .iter()
                        .enumerate()
                        .find(|(_, grp)| grp.edges.contains(&e))
                        .expect("new open edge leaves this node");
                    KeyPart::Out(gi, grp.edges.iter().position(|&x| x == e).unwrap())
                }
            }
        })
        .chain(couplings.iter().map(|d| match slot_of_xi(d) {
            Some(s) => KeyPart::Prev(s),
            None => KeyPart::Xi(
                np.local_dims
                    .iter()
                    .position(|x| x == d)
                    .expect("new open coupling belongs to this node"),
            ),
        }))
        .collect();

    // previous keys grouped by what this node has to match
    let prev: Vec<(&Vec<i64>, f64)> = previous.buckets.iter().map(|(k, b)| (k, b.best)).collect();
    let mut index: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for (i, (k, _)) in prev.iter().enumerate() {
        let mut m: Vec<i64> = matched_xi.iter().map(|&(_, s)| k[s]).collect();
        m.extend(
            incoming_slots
                .iter()
                .map(|slots| slots.iter().map(|&s| k[s]).sum::<i64>()),
        );
        index.entry(m).or_default().push(i);
    }

    let tol = settings.tie_tolerance;
    let n_out = g.nodes[node].model.outputs.len();
    let mut out = vec![0.0; n_out];
    let mut scratch = Vec::new();
    let mut values = vec![0.0; np.local_dims.len()];
    let mut buckets: BTreeMap<Vec<i64>, Bucket> = BTreeMap::new();
    let sizes = np.local_grids.iter().map(Grid::len).collect();
    for point in GridWalk::new(sizes) {
        for (j, &p) in point.iter().enumerate() {
            values[j] = np.local_grids[j].levels[p];
        }
        if np
            .evaluate(g, &values, &mut scratch, &mut out, counter)
            .is_err()
            || !np.draws_nonnegative(&out)
        {
            continue;
        }
        let Some(incoming) = np.incoming_totals(&out) else {
            continue;
        };
        let Some(outgoing) = np.outgoing_totals(&out) else {
            continue;
        };
        let sink = match np.sink_output {
            Some(o) => match plan.sink_grid.snap_index(out[o]) {
                Some(k) => Some(k),
                None => continue,
            },
            None => None,
        };
        let mut m: Vec<i64> = matched_xi.iter().map(|&(j, _)| point[j] as i64).collect();
        m.extend_from_slice(&incoming);
        let Some(matches) = index.get(&m) else {
            continue;
        };
        let splits: Vec<Vec<Vec<i64>>> = np
            .outgoing
            .iter()
            .zip(&outgoing)
            .map(|(grp, &t)| grp.splits(t))
            .collect();
        if splits.iter().any(Vec::is_empty) {
            continue;
        }
        let local_cost = np.draw_cost(&out);
        let local: Vec<u32> = point.iter().map(|&p| p as u32).collect();
        for &pi in matches {
            let (pk, pbest) = prev[pi];
            let cost = pbest + local_cost;
            for choice in SplitWalk::new(&splits) {
                *candidates += 1;
                let key: Vec<i64> = recipe
                    .iter()
                    .map(|part| match *part {
                        KeyPart::Prev(s) => pk[s],
                        KeyPart::Xi(j) => point[j] as i64,
                        KeyPart::Out(gi, ei) => splits[gi][choice[gi]][ei],
                        KeyPart::Sink => sink.expect("sink node"),
                    })
                    .collect();
                buckets
                    .entry(key)
                    .or_insert_with(|| Bucket {
                        best: cost,
                        entries: Vec::new(),
                    })
                    .offer(
                        SolutionEntry {
                            local: local.clone(),
                            prev_key: pk.clone(),
                            local_cost,
                            cumulative_cost: cost,
                            outputs: out.clone(),
                        },
                        tol,
                    );
            }
        }
    }
    if buckets.is_empty() {
        return Err(SolveError::EmptyTable(g.nodes[node].name.clone()));
    }
    for b in buckets.values_mut() {
        b.finish();
    }
    Ok(NodeTable {
        node: g.nodes[node].name.clone(),
        flow_slots: flows,
        coupling_slots: couplings,
        buckets,
    })
}

/// Cartesian product over the split options of each outgoing group.
struct SplitWalk {
    sizes: Vec<usize>,
    cur: Vec<usize>,
    done: bool,
}

impl SplitWalk {
    fn new(splits: &[Vec<Vec<i64>>]) -> Self {
        Self {
            sizes: splits.iter().map(Vec::len).collect(),
            cur: vec![0; splits.len()],
            done: false,
        }
    }
}

impl Iterator for SplitWalk {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let item = self.cur.clone();
        self.done = true;
        for i in (0..self.sizes.len()).rev() {
            self.cur[i] += 1;
            if self.cur[i] < self.sizes[i] {
                self.done = false;
                break;
            }
            self.cur[i] = 0;
        }
        Some(item)
    }
}

/// Solves every node in topological order.
pub fn propagate(graph: &SystemGraph, settings: &Settings) -> Result<SolvedSystem, SolveError> {
    let plan = Plan::new(graph, settings)?;
    let counter = EvalCounter::new();
    let mut candidates = 0u64;
    let mut tables: Vec<NodeTable> = Vec::with_capacity(graph.nodes.len());
    let root = NodeTable::root();
    for p in 0..graph.node_order().len() {
        let prev = tables.last().unwrap_or(&root);
        let t = solve_component(&plan, p, prev, settings, &counter, &mut candidates).map_err(
            |e| match e {
                SolveError::EmptyTable(n) => SolveError::Infeasible(n),
                other => other,
            },
        )?;
        tables.push(t);
    }
    Ok(SolvedSystem {
        graph: graph.clone(),
        settings: settings.clone(),
        tables,
        sink_grid: plan.sink_grid,
        eval_count: counter.get(),
        candidates,
        wall_time: Duration::ZERO,
    })
}

/// Full configuration behind one table entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub sink_level: f64,
    /// Requested-benefit output predicted by the sink node model.
    pub predicted_benefit: f64,
    pub cumulative_effort: f64,
    pub efficiency: Option<f64>,
    /// Free parameter values of every node.
    pub parameters: BTreeMap<String, f64>,
    pub couplings: BTreeMap<String, f64>,
    /// `(from, to, dimension, level)` of every edge.
    pub flows: Vec<(String, String, String, f64)>,
    /// Model outputs per node.
    pub outputs: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Configuration {
    /// Free parameters and couplings in one map.
    pub fn values(&self) -> BTreeMap<String, f64> {
        let mut v = self.parameters.clone();
        v.extend(self.couplings.iter().map(|(k, x)| (k.clone(), *x)));
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LookupResult {
    Found {
        level: f64,
        configurations: Vec<Configuration>,
        /// Set when ties expanded beyond [`MAX_TIED_CONFIGURATIONS`].
        truncated: bool,
    },
    NoSolution {
        request: f64,
        /// Snapped level, absent when the request is off the grid.
        level: Option<f64>,
    },
}

impl LookupResult {
    pub fn configurations(&self) -> &[Configuration] {
        match self {
            Self::Found { configurations, .. } => configurations,
            Self::NoSolution { .. } => &[],
        }
    }

    pub fn is_found(&self) -> bool {
        matches!(self, Self::Found { .. })
    }

    pub fn best_effort(&self) -> Option<f64> {
        self.configurations()
            .iter()
            .map(|c| c.cumulative_effort)
            .min_by(f64::total_cmp)
    }
}

/// One step of a rebuilt path: table position, bucket key and entry.
type PathStep<'a> = (usize, &'a Vec<i64>, &'a SolutionEntry);

fn expand<'a>(
    s: &'a SolvedSystem,
    p: usize,
    key: &'a Vec<i64>,
    e: &'a SolutionEntry,
    suffix: &mut Vec<PathStep<'a>>,
    out: &mut Vec<Vec<PathStep<'a>>>,
    truncated: &mut bool,
) {
    if out.len() >= MAX_TIED_CONFIGURATIONS {
        *truncated = true;
        return;
    }
    suffix.push((p, key, e));
    if p == 0 {
        let mut path = suffix.clone();
        path.reverse();
        out.push(path);
    } else {
        let (pk, bucket) = s.tables[p - 1]
            .buckets
            .get_key_value(&e.prev_key)
            .expect("back-pointer into previous table");
        for pe in &bucket.entries {
            expand(s, p - 1, pk, pe, suffix, out, truncated);
        }
    }
    suffix.pop();
}

fn configuration(
    s: &SolvedSystem,
    grids: &BTreeMap<String, Grid>,
    path: &[PathStep<'_>],
) -> Configuration {
    let g = &s.graph;
    let order = g.node_order();
    let mut parameters = BTreeMap::new();
    let mut couplings = BTreeMap::new();
    let mut outputs = BTreeMap::new();
    let mut effort = 0.0;
    let mut flows = Vec::new();
    let mut benefit = 0.0;
    for &(p, key, e) in path {
        let n = &g.nodes[order[p]];
        effort += e.local_cost;
        for (j, d) in n.local_dims().enumerate() {
            let v = grids[d].levels[e.local[j] as usize];
            if j < n.free_params.len() {
                parameters.insert(d.clone(), v);
            } else {
                couplings.insert(d.clone(), v);
            }
        }
        outputs.insert(
            n.name.clone(),
            n.model
                .outputs
                .iter()
                .cloned()
                .zip(e.outputs.iter().copied())
                .collect::<BTreeMap<_, _>>(),
        );
        if order[p] == g.sink.node {
            let o = n.model.output_index(&g.sink.dimension).expect("sink output");
            benefit = e.outputs[o];
        }
        // an edge's level is fixed in the table of its producer
        let t = &s.tables[p];
        for (slot, &fs) in t.flow_slots.iter().enumerate() {
            if let FlowSlot::Edge(ei) = fs {
                let edge = &g.edges[ei];
                if edge.from == order[p] {
                    let step = edge_step(s, &edge.dimension);
                    flows.push((
                        g.nodes[edge.from].name.clone(),
                        g.nodes[edge.to].name.clone(),
                        edge.dimension.clone(),
                        key[slot] as f64 * step,
                    ));
                }
            }
        }
    }
    let (_, last_key, _) = path[path.len() - 1];
    let sink_level = last_key[0] as f64 * s.sink_grid.step().unwrap_or(1.0);
    Configuration {
        sink_level,
        predicted_benefit: benefit,
        cumulative_effort: effort,
        efficiency: efficiency(benefit, effort).ok(),
        parameters,
        couplings,
        flows,
        outputs,
    }
}

// grids are reproducible from the stored settings
fn param_grids(s: &SolvedSystem) -> BTreeMap<String, Grid> {
    Plan::new(&s.graph, &s.settings)
        .expect("settings validated at solve time")
        .param_grids
}

fn edge_step(s: &SolvedSystem, dim: &str) -> f64 {
    let e = s
        .graph
        .edges
        .iter()
        .find(|e| e.dimension == dim)
        .expect("edge dimension");
    s.settings.step_for(dim, e.step_size)
}

/// Answers a request from the solved tables. No model is evaluated.
pub fn lookup(s: &SolvedSystem, request: f64) -> LookupResult {
    let snapped = s.sink_grid.snap(request);
    if snapped.clamped || !request.is_finite() {
        return LookupResult::NoSolution {
            request,
            level: None,
        };
    }
    let k = s.sink_grid.index_of(snapped.position);
    let key = vec![k];
    let table = s.sink_table();
    let Some((key, bucket)) = table.buckets.get_key_value(&key) else {
        return LookupResult::NoSolution {
            request,
            level: Some(snapped.level),
        };
    };
    let last = s.tables.len() - 1;
    let mut paths = Vec::new();
    let mut truncated = false;
    for e in &bucket.entries {
        expand(s, last, key, e, &mut Vec::new(), &mut paths, &mut truncated);
    }
    let grids = param_grids(s);
    let mut configurations: Vec<Configuration> =
        paths.iter().map(|p| configuration(s, &grids, p)).collect();
    configurations.sort_by(|a, b| {
        a.cumulative_effort
            .partial_cmp(&b.cumulative_effort)
            .unwrap_or(Ordering::Equal)
    });
    LookupResult::Found {
        level: snapped.level,
        configurations,
        truncated,
    }
}

/// Table sizes and evaluation counts of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub param_steps: u32,
    pub flow_step: Option<f64>,
    /// Grid size of the densest node.
    pub combinations: u64,
    pub eval_count: u64,
    pub candidates: u64,
    pub wall_time_secs: f64,
    /// `(node, keys, entries)` per table.
    pub table_sizes: Vec<(String, usize, usize)>,
}

/// Grid size of the densest node, without solving anything.
pub fn combinations(graph: &SystemGraph, settings: &Settings) -> Result<u64, SolveError> {
    Ok(Plan::new(graph, settings)?.combinations())
}

pub fn evaluation_report(s: &SolvedSystem) -> BenchRecord {
    let combos = Plan::new(&s.graph, &s.settings)
        .map(|p| p.combinations())
        .unwrap_or(0);
    BenchRecord {
        param_steps: s.settings.param_steps,
        flow_step: s.settings.flow_step,
        combinations: combos,
        eval_count: s.eval_count,
        candidates: s.candidates,
        wall_time_secs: s.wall_time.as_secs_f64(),
        table_sizes: s
            .tables
            .iter()
            .map(|t| (t.node.clone(), t.len(), t.entry_count()))
            .collect(),
    }
}
