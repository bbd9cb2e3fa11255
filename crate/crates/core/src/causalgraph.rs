//! Lagged causal graphs, structural Hamming distance and graph documents.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Directed link `source(t - lag) -> target(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaggedEdge {
    pub source: String,
    pub target: String,
    pub lag: usize,
    pub strength: f64,
    pub p_value: f64,
}

impl LaggedEdge {
    pub fn new(source: impl Into<String>, target: impl Into<String>, lag: usize) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            lag,
            strength: 1.0,
            p_value: 0.0,
        }
    }

    pub fn with_stats(mut self, strength: f64, p_value: f64) -> Self {
        self.strength = strength;
        self.p_value = p_value;
        self
    }

    pub fn is_auto(&self) -> bool {
        self.source == self.target
    }
}

/// Identity of an edge for structural comparison: `(source, target, lag)`.
pub type EdgeKey = (String, String, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct CausalGraph {
    variables: Vec<String>,
    tau_max: usize,
    edges: Vec<LaggedEdge>,
}

impl CausalGraph {
    pub fn new(variables: Vec<String>, tau_max: usize) -> Result<Self> {
        if tau_max < 1 {
            return Err(Error::InvalidArgument("tau_max must be >= 1".into()));
        }
        for (i, v) in variables.iter().enumerate() {
            if variables[..i].contains(v) {
                return Err(Error::InvalidArgument(format!("duplicate variable `{v}`")));
            }
        }
        Ok(Self {
            variables,
            tau_max,
            edges: Vec::new(),
        })
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn tau_max(&self) -> usize {
        self.tau_max
    }

    /// Edges in canonical order: by source index, then target index, then lag.
    pub fn edges(&self) -> &[LaggedEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variable `{name}`")))
    }

    pub fn add_edge(&mut self, edge: LaggedEdge) -> Result<()> {
        let s = self.index_of(&edge.source)?;
        let t = self.index_of(&edge.target)?;
        if edge.lag < 1 || edge.lag > self.tau_max {
            return Err(Error::InvalidArgument(format!(
                "lag {} outside 1..={}",
                edge.lag, self.tau_max
            )));
        }
        if !(0.0..=1.0).contains(&edge.p_value) {
            return Err(Error::InvalidArgument(format!("p-value {} outside [0, 1]", edge.p_value)));
        }
        let key = (s, t, edge.lag);
        let pos = self
            .edges
            .binary_search_by_key(&key, |e| self.sort_key(e))
            .err()
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "duplicate edge {} -> {} (lag {})",
                    edge.source, edge.target, edge.lag
                ))
            })?;
        self.edges.insert(pos, edge);
        Ok(())
    }

    fn sort_key(&self, e: &LaggedEdge) -> (usize, usize, usize) {
        let s = self.variables.iter().position(|v| *v == e.source).unwrap_or(usize::MAX);
        let t = self.variables.iter().position(|v| *v == e.target).unwrap_or(usize::MAX);
        (s, t, e.lag)
    }

    pub fn contains(&self, source: &str, target: &str, lag: usize) -> bool {
        self.edges
            .iter()
            .any(|e| e.source == source && e.target == target && e.lag == lag)
    }

    pub fn edge_keys(&self, include_auto: bool) -> BTreeSet<EdgeKey> {
        self.edges
            .iter()
            .filter(|e| include_auto || !e.is_auto())
            .map(|e| (e.source.clone(), e.target.clone(), e.lag))
            .collect()
    }

    /// Cross-variable edges only.
    pub fn cross_edges(&self) -> impl Iterator<Item = &LaggedEdge> {
        self.edges.iter().filter(|e| !e.is_auto())
    }
}

/// Structural Hamming distance: size of the symmetric difference of the two
/// graphs' `(source, target, lag)` sets. Self-loops count only when
/// `include_auto` is set.
pub fn shd(a: &CausalGraph, b: &CausalGraph, include_auto: bool) -> Result<usize> {
    let va: BTreeSet<_> = a.variables.iter().collect();
    let vb: BTreeSet<_> = b.variables.iter().collect();
    if va != vb {
        return Err(Error::IncompatibleGraphs(format!(
            "variable sets differ: {:?} vs {:?}",
            a.variables, b.variables
        )));
    }
    if a.tau_max != b.tau_max {
        return Err(Error::IncompatibleGraphs(format!(
            "tau_max differs: {} vs {}",
            a.tau_max, b.tau_max
        )));
    }
    let ka = a.edge_keys(include_auto);
    let kb = b.edge_keys(include_auto);
    Ok(ka.symmetric_difference(&kb).count())
}

/// Interaction variable names in canonical order.
pub const HRSI_VARIABLES: [&str; 3] = ["v", "d_g", "r"];

/// The four cross links of the human-robot spatial interaction scenario, lag 1:
/// `v -> d_g`, `d_g -> v`, `r -> v`, `v -> r`.
pub fn expected_hrsi_graph() -> CausalGraph {
    let mut g = CausalGraph::new(HRSI_VARIABLES.iter().map(|s| s.to_string()).collect(), 1)
        .expect("static variable list");
    for (s, t) in [("v", "d_g"), ("d_g", "v"), ("r", "v"), ("v", "r")] {
        g.add_edge(LaggedEdge::new(s, t, 1)).expect("static edge");
    }
    g
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDocument {
    format_version: u32,
    variables: Vec<String>,
    tau_max: usize,
    edges: Vec<LaggedEdge>,
}

/// Serializes `g` as a JSON graph document (pretty-printed, trailing newline).
pub fn to_text(g: &CausalGraph) -> String {
    let doc = GraphDocument {
        format_version: FORMAT_VERSION,
        variables: g.variables.clone(),
        tau_max: g.tau_max,
        edges: g.edges.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("graph document serializes");
    s.push('\n');
    s
}

pub fn from_text(text: &str) -> Result<CausalGraph> {
    let doc: GraphDocument = serde_json::from_str(text)
        .map_err(|e| Error::parse(e.line(), e.to_string()))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::parse(
            0,
            format!("unsupported format_version {}", doc.format_version),
        ));
    }
    let mut g = CausalGraph::new(doc.variables, doc.tau_max).map_err(|e| Error::parse(0, e.to_string()))?;
    for e in doc.edges {
        g.add_edge(e).map_err(|e| Error::parse(0, e.to_string()))?;
    }
    Ok(g)
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<CausalGraph> {
    let path = path.as_ref();
    from_text(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_graph(g: &CausalGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_text(g)).map_err(|e| Error::io(path, e))
}

pub fn write_dot(g: &CausalGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_dot(g)).map_err(|e| Error::io(path, e))
}

/// Graphviz rendering; edges carry `label="-<lag>"`.
pub fn to_dot(g: &CausalGraph) -> String {
    let mut out = String::from("digraph causal {\n");
    for v in &g.variables {
        let _ = writeln!(out, "    \"{v}\";");
    }
    for e in &g.edges {
        let _ = writeln!(
            out,
            "    \"{}\" -> \"{}\" [label=\"-{}\"];",
            e.source, e.target, e.lag
        );
    }
    out.push_str("}\n");
    out
}
