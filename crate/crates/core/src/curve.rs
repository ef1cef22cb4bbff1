//! Decorated-graph model of an oriented nodal curve: components become
//! vertices with genus and line-bundle degree, nodes become ordered edges
//! (the edge-array order is the total order on nodes), and smooth marked
//! points become framings.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VertexId = u32;
pub type EdgeId = u32;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Vertex {
    pub id: VertexId,
    pub genus: u32,
    pub degree: i32,
    #[serde(default)]
    pub framed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    /// Component containing the first preimage x' of the node.
    pub source: VertexId,
    /// Component containing the second preimage x''.
    pub target: VertexId,
}

fn c64_pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn pair_c64(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

/// Decorated intersection graph of a nodal curve. The edge sequence order is
/// normative: it is the total order on nodes used by the relation products.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalCurveGraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    /// Global twist parameter q (nonzero).
    pub q: Complex64,
    /// Optional per-vertex override of the twist scalar (replaces q^{d_i}).
    pub q_overrides: BTreeMap<VertexId, Complex64>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    q: [f64; 2],
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    q_overrides: BTreeMap<VertexId, [f64; 2]>,
}

impl Serialize for NodalCurveGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GraphJson {
            q: c64_pair(self.q),
            vertices: self.vertices.clone(),
            edges: self.edges.clone(),
            q_overrides: self
                .q_overrides
                .iter()
                .map(|(k, v)| (*k, c64_pair(*v)))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NodalCurveGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = GraphJson::deserialize(d)?;
        Ok(NodalCurveGraph {
            q: pair_c64(raw.q),
            vertices: raw.vertices,
            edges: raw.edges,
            q_overrides: raw
                .q_overrides
                .into_iter()
                .map(|(k, v)| (k, pair_c64(v)))
                .collect(),
        })
    }
}

/// Per-vertex dimensions of the V spaces, plus optional framing dimensions.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct DimensionVector {
    pub v: BTreeMap<VertexId, usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub w: BTreeMap<VertexId, usize>,
}

impl DimensionVector {
    pub fn uniform(g: &NodalCurveGraph, n: usize) -> Self {
        DimensionVector {
            v: g.vertices.iter().map(|v| (v.id, n)).collect(),
            w: BTreeMap::new(),
        }
    }

    pub fn dim_v(&self, id: VertexId) -> usize {
        *self.v.get(&id).unwrap_or(&0)
    }

    pub fn dim_w(&self, id: VertexId) -> usize {
        *self.w.get(&id).unwrap_or(&0)
    }

    pub fn validate(&self, g: &NodalCurveGraph) -> Result<()> {
        for v in &g.vertices {
            if !self.v.contains_key(&v.id) {
                return Err(Error::InvalidGraph(format!(
                    "dimension vector misses vertex {}",
                    v.id
                )));
            }
        }
        for id in self.w.keys() {
            let vx = g
                .vertices
                .iter()
                .find(|v| v.id == *id)
                .ok_or_else(|| Error::InvalidGraph(format!("framing dim for unknown vertex {id}")))?;
            if !vx.framed {
                return Err(Error::InvalidGraph(format!(
                    "framing dimension given for unframed vertex {id}"
                )));
            }
        }
        Ok(())
    }
}

/// One invariant violation found by `validate_graph`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Violation {
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl NodalCurveGraph {
    pub fn vertex(&self, id: VertexId) -> Option<&Vertex> {
        self.vertices.iter().find(|v| v.id == id)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.iter().find(|e| e.id == id)
    }

    /// Incoming edges at `i` (target = i), in the normative edge order.
    pub fn incoming(&self, i: VertexId) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.target == i)
    }

    /// Outgoing edges at `i` (source = i), in the normative edge order.
    pub fn outgoing(&self, i: VertexId) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.source == i)
    }

    /// The twist scalar q^{d_i} for vertex i (or the explicit override).
    pub fn vertex_twist(&self, i: VertexId) -> Result<Complex64> {
        if let Some(q) = self.q_overrides.get(&i) {
            return Ok(*q);
        }
        let v = self
            .vertex(i)
            .ok_or_else(|| Error::InvalidGraph(format!("unknown vertex {i}")))?;
        Ok(self.q.powi(v.degree))
    }
}

/// Check the structural invariants, reporting every violation found.
pub fn validate_graph(g: &NodalCurveGraph) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut push = |kind: &str, detail: String| {
        report.violations.push(Violation {
            kind: kind.to_string(),
            detail,
        });
    };
    if g.q.norm() == 0.0 {
        push("zero_q", "twist parameter q must be nonzero".into());
    }
    let mut seen_v = std::collections::BTreeSet::new();
    for v in &g.vertices {
        if !seen_v.insert(v.id) {
            push("duplicate_vertex", format!("vertex id {} repeats", v.id));
        }
    }
    let mut seen_e = std::collections::BTreeSet::new();
    for e in &g.edges {
        if !seen_e.insert(e.id) {
            push("duplicate_edge", format!("edge id {} repeats", e.id));
        }
        for (role, end) in [("source", e.source), ("target", e.target)] {
            if !seen_v.contains(&end) && g.vertex(end).is_none() {
                push(
                    "dangling_edge",
                    format!("edge {} {role} references missing vertex {end}", e.id),
                );
            }
        }
    }
    for (id, q) in &g.q_overrides {
        if g.vertex(*id).is_none() {
            push("dangling_override", format!("q override for unknown vertex {id}"));
        }
        if q.norm() == 0.0 {
            push("zero_q", format!("q override for vertex {id} is zero"));
        }
    }
    report
}

/// Build a graph from component decorations and a node list. Edge order (and
/// hence the normative total order on nodes) is the input order. At most one
/// framing point per component.
pub fn from_components(
    components: &[(u32, i32)],
    nodes: &[(usize, usize)],
    q: Complex64,
    framed: &[usize],
) -> Result<NodalCurveGraph> {
    let n = components.len();
    let mut framed_flags = vec![false; n];
    for &f in framed {
        if f >= n {
            return Err(Error::InvalidGraph(format!("framed component index {f} out of range")));
        }
        if framed_flags[f] {
            return Err(Error::InvalidGraph(format!(
                "component {f} marked with more than one framing point; only one is supported"
            )));
        }
        framed_flags[f] = true;
    }
    let vertices = components
        .iter()
        .enumerate()
        .map(|(i, &(genus, degree))| Vertex {
            id: i as VertexId,
            genus,
            degree,
            framed: framed_flags[i],
            label: None,
        })
        .collect();
    let mut edges = Vec::with_capacity(nodes.len());
    for (k, &(s, t)) in nodes.iter().enumerate() {
        if s >= n || t >= n {
            return Err(Error::InvalidGraph(format!(
                "node ({s}, {t}) references a missing component"
            )));
        }
        edges.push(Edge {
            id: k as EdgeId,
            source: s as VertexId,
            target: t as VertexId,
        });
    }
    let g = NodalCurveGraph {
        vertices,
        edges,
        q,
        q_overrides: BTreeMap::new(),
    };
    let report = validate_graph(&g);
    if !report.is_valid() {
        return Err(Error::InvalidGraph(format!("{:?}", report.violations)));
    }
    Ok(g)
}

/// Ambient complex dimension of the assembled quasi-Hamiltonian space:
/// Σ_i 2·g_i·n_i² + Σ_{(i,j)∈E} 2·n_i·n_j + Σ_{framed i} 2·n_i·w_i.
pub fn expected_moduli_dimension(g: &NodalCurveGraph, dims: &DimensionVector) -> usize {
    let mut total = 0;
    for v in &g.vertices {
        let n = dims.dim_v(v.id);
        total += 2 * v.genus as usize * n * n;
        if v.framed {
            total += 2 * n * dims.dim_w(v.id);
        }
    }
    for e in &g.edges {
        total += 2 * dims.dim_v(e.source) * dims.dim_v(e.target);
    }
    total
}
