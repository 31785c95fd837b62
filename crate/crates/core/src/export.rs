//! Graph serialization: JSON (round-trippable), GraphML and DOT.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{DependencyGraph, EdgeRecord};
use crate::subsets::SubsetCap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub config_fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_fingerprint: Option<String>,
    pub n_samples: usize,
    /// `null` when the conditioning-set size was unlimited.
    pub max_cond_size: Option<usize>,
    pub nodes: Vec<String>,
    pub edges: Vec<EdgeDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDocument {
    pub source: String,
    pub target: String,
    pub weight: f64,
    pub unconditional: f64,
    pub argmin: Vec<String>,
    pub p_value: Option<f64>,
    pub pruned: bool,
    pub evaluated_subsets: u64,
}

impl GraphDocument {
    pub fn from_graph(g: &DependencyGraph, run_fingerprint: Option<String>) -> Self {
        let name = |i: usize| g.nodes[i].clone();
        Self {
            config_fingerprint: g.config_fingerprint.clone(),
            run_fingerprint,
            n_samples: g.n_samples,
            max_cond_size: g.cap.limit(),
            nodes: g.nodes.clone(),
            edges: g
                .edges
                .iter()
                .map(|e| EdgeDocument {
                    source: name(e.source),
                    target: name(e.target),
                    weight: e.weight,
                    unconditional: e.unconditional,
                    argmin: e.argmin.iter().map(|&k| name(k)).collect(),
                    p_value: e.p_value,
                    pruned: e.pruned,
                    evaluated_subsets: e.evaluated_subsets,
                })
                .collect(),
        }
    }

    pub fn into_graph(self) -> Result<DependencyGraph> {
        let index = |name: &str| {
            self.nodes
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Config(format!("edge references unknown node {name:?}")))
        };
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let (a, b) = (index(&e.source)?, index(&e.target)?);
            let mut argmin = e
                .argmin
                .iter()
                .map(|k| index(k))
                .collect::<Result<Vec<_>>>()?;
            argmin.sort_unstable();
            edges.push(EdgeRecord {
                source: a.min(b),
                target: a.max(b),
                weight: e.weight,
                unconditional: e.unconditional,
                argmin,
                p_value: e.p_value,
                evaluated_subsets: e.evaluated_subsets,
                pruned: e.pruned,
            });
        }
        Ok(DependencyGraph {
            nodes: self.nodes,
            edges,
            config_fingerprint: self.config_fingerprint,
            n_samples: self.n_samples,
            cap: self
                .max_cond_size
                .map_or(SubsetCap::Unlimited, SubsetCap::AtMost),
        })
    }
}

pub fn to_json(g: &DependencyGraph, run_fingerprint: Option<String>) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&GraphDocument::from_graph(g, run_fingerprint))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<DependencyGraph> {
    serde_json::from_str::<GraphDocument>(text)?.into_graph()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

/// GraphML with every edge; pruned edges carry `pruned=true`.
pub fn to_graphml(g: &DependencyGraph, run_fingerprint: Option<&str>) -> String {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    for (id, target, name, ty) in [
        ("label", "node", "label", "string"),
        ("fp", "graph", "config_fingerprint", "string"),
        ("rfp", "graph", "run_fingerprint", "string"),
        ("w", "edge", "weight", "double"),
        ("u", "edge", "unconditional", "double"),
        ("z", "edge", "argmin", "string"),
        ("p", "edge", "p_value", "double"),
        ("pr", "edge", "pruned", "boolean"),
    ] {
        let _ = writeln!(
            s,
            "  <key id=\"{id}\" for=\"{target}\" attr.name=\"{name}\" attr.type=\"{ty}\"/>"
        );
    }
    s.push_str("  <graph id=\"dependencies\" edgedefault=\"undirected\">\n");
    let _ = writeln!(s, "    <data key=\"fp\">{}</data>", g.config_fingerprint);
    if let Some(r) = run_fingerprint {
        let _ = writeln!(s, "    <data key=\"rfp\">{r}</data>");
    }
    for (i, n) in g.nodes.iter().enumerate() {
        let _ = writeln!(
            s,
            "    <node id=\"n{i}\"><data key=\"label\">{}</data></node>",
            xml_escape(n)
        );
    }
    for (i, e) in g.edges.iter().enumerate() {
        let argmin: Vec<&str> = e.argmin.iter().map(|&k| g.nodes[k].as_str()).collect();
        let _ = writeln!(
            s,
            "    <edge id=\"e{i}\" source=\"n{}\" target=\"n{}\">",
            e.source, e.target
        );
        let _ = writeln!(s, "      <data key=\"w\">{}</data>", e.weight);
        let _ = writeln!(s, "      <data key=\"u\">{}</data>", e.unconditional);
        let _ = writeln!(
            s,
            "      <data key=\"z\">{}</data>",
            xml_escape(&argmin.join(";"))
        );
        if let Some(p) = e.p_value {
            let _ = writeln!(s, "      <data key=\"p\">{p}</data>");
        }
        let _ = writeln!(s, "      <data key=\"pr\">{}</data>", e.pruned);
        s.push_str("    </edge>\n");
    }
    s.push_str("  </graph>\n</graphml>\n");
    s
}

/// DOT rendering of the unpruned edges, pen width proportional to weight.
pub fn to_dot(g: &DependencyGraph, run_fingerprint: Option<&str>) -> String {
    let quote = |s: &str| format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""));
    let mut s = String::new();
    let _ = writeln!(s, "// config_fingerprint={}", g.config_fingerprint);
    if let Some(r) = run_fingerprint {
        let _ = writeln!(s, "// run_fingerprint={r}");
    }
    s.push_str("graph dependencies {\n  layout=circo;\n  node [shape=circle];\n");
    for n in &g.nodes {
        let _ = writeln!(s, "  {};", quote(n));
    }
    for e in g.active_edges() {
        let _ = writeln!(
            s,
            "  {} -- {} [pdcor={:.6}, penwidth={:.3}, label=\"{:.2}\"];",
            quote(&g.nodes[e.source]),
            quote(&g.nodes[e.target]),
            e.weight,
            10.0 * e.weight,
            e.weight
        );
    }
    s.push_str("}\n");
    s
}
