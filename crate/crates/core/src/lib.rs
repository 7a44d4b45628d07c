//! Topology-based set-point optimization for energy systems.
//!
//! A plant is decomposed into subsystems, each described by a quasi-static
//! polynomial model mapping set-points (free parameters), scenario inputs
//! (external parameters) and interface values shared between subsystems
//! (coupling parameters) onto efforts, benefits and internal observations.
//! Subsystems are wired into a directed acyclic graph by energy flows: the
//! benefit of one subsystem is the effort of its successor. A virtual root
//! merges all external energy inputs into one weighted objective and a
//! virtual sink carries the requested benefit.
//!
//! [`engine::propagate`] walks the graph in topological order, brute-forces
//! every subsystem over its discretized parameters and keeps only the
//! cheapest configurations per open flow level. Requests are then answered
//! by [`engine::lookup`] without further model evaluations.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, timing and
//! the command-line front end live in the `opttopo` companion crate.
#![no_std]

extern crate alloc;

pub mod baselines;
pub mod engine;
pub mod grid;
pub mod identification;
pub mod model;
pub mod plan;
pub mod refplant;
pub mod spec;
pub mod synth;
pub mod topology;

pub use engine::{
    evaluation_report, lookup, propagate, BenchRecord, Configuration, LookupResult, NodeTable,
    Settings, SolveError, SolvedSystem,
};
pub use grid::{make_flow_grid, make_param_grid, snap_to_level, Grid, GridError, Snapped};
pub use model::{
    efficiency, Dimension, DimensionKind, EvalCounter, Interval, ModelError, PolynomialModel,
    Term,
};
pub use spec::SystemSpec;
pub use topology::{build_graph, commensurate_effort, topological_order, GraphError, SystemGraph};
