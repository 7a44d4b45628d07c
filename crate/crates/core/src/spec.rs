//! Parsed system documents.
//!
//! This is the in-memory form of a system file: dimension records, models,
//! subsystem nodes, flow edges, root weights and the sink. Reading and
//! writing the text form is done by the `opttopo` crate.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{Dimension, PolynomialModel};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub dimensions: Vec<Dimension>,
    pub models: Vec<PolynomialModel>,
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub root_weights: Vec<RootWeight>,
    /// Exactly one sink is valid; a list is accepted so that several sinks
    /// can be reported instead of silently dropped.
    #[serde(default)]
    pub sink: Sinks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub model: String,
    #[serde(default)]
    pub free_params: Vec<String>,
    #[serde(default)]
    pub coupling_params: Vec<String>,
    #[serde(default)]
    pub external_params: Vec<String>,
    #[serde(default)]
    pub effort_dims: Vec<String>,
    #[serde(default)]
    pub benefit_dims: Vec<String>,
    #[serde(default)]
    pub internal_dims: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    pub dimension: String,
    pub step_size: f64,
}

/// Weight making one energy type commensurable at the root, and the effort
/// dimensions drawn from the root under that type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootWeight {
    pub energy_type: String,
    pub weight: f64,
    #[serde(default)]
    pub dimensions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkSpec {
    pub node: String,
    pub dimension: String,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sinks {
    One(SinkSpec),
    Many(Vec<SinkSpec>),
}

impl Default for Sinks {
    fn default() -> Self {
        Sinks::Many(Vec::new())
    }
}

impl Sinks {
    pub fn as_slice(&self) -> &[SinkSpec] {
        match self {
            Sinks::One(s) => core::slice::from_ref(s),
            Sinks::Many(v) => v,
        }
    }
}

impl SystemSpec {
    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    pub fn model(&self, name: &str) -> Option<&PolynomialModel> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn model_mut(&mut self, name: &str) -> Option<&mut PolynomialModel> {
        self.models.iter_mut().find(|m| m.name == name)
    }

    pub fn dimension_mut(&mut self, name: &str) -> Option<&mut Dimension> {
        self.dimensions.iter_mut().find(|d| d.name == name)
    }
}
