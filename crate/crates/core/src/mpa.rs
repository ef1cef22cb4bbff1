//! Representations of the multiplicative preprojective algebra attached to a
//! decorated nodal-curve graph: relation residuals, gauge action, random
//! generation, and the expansion of a representation into local node diagrams
//! together with the inverse gluing.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curve::{DimensionVector, EdgeId, NodalCurveGraph, VertexId};
use crate::diagrams::{ft_j, PhiPsiDiagram};
use crate::error::{Error, Result};
use crate::linalg::{self, inverse, ComplexMatrix, ToleranceConfig};

/// Framing data at a vertex: u: V_i → W_i and v: W_i → V_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Framing {
    pub u: ComplexMatrix,
    pub v: ComplexMatrix,
}

impl Framing {
    pub fn dim_w(&self) -> usize {
        self.u.rows()
    }
}

/// A representation: edge maps a_h: V_{s(h)}→V_{t(h)}, b_h: V_{t(h)}→V_{s(h)},
/// handle pairs (α^i_ν, β^i_ν) on V_i for ν = 1..g_i, and optional framings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub dims: DimensionVector,
    pub a: BTreeMap<EdgeId, ComplexMatrix>,
    pub b: BTreeMap<EdgeId, ComplexMatrix>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub alpha: BTreeMap<VertexId, Vec<ComplexMatrix>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub beta: BTreeMap<VertexId, Vec<ComplexMatrix>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub framing: BTreeMap<VertexId, Framing>,
}

impl Representation {
    /// Zero representation for the given graph and dimensions.
    pub fn zero(g: &NodalCurveGraph, dims: &DimensionVector) -> Result<Self> {
        dims.validate(g)?;
        let mut rep = Representation {
            dims: dims.clone(),
            a: BTreeMap::new(),
            b: BTreeMap::new(),
            alpha: BTreeMap::new(),
            beta: BTreeMap::new(),
            framing: BTreeMap::new(),
        };
        for e in &g.edges {
            let (ns, nt) = (dims.dim_v(e.source), dims.dim_v(e.target));
            rep.a.insert(e.id, ComplexMatrix::zeros(nt, ns));
            rep.b.insert(e.id, ComplexMatrix::zeros(ns, nt));
        }
        for v in &g.vertices {
            let n = dims.dim_v(v.id);
            if v.genus > 0 {
                let ids = vec![ComplexMatrix::identity(n); v.genus as usize];
                rep.alpha.insert(v.id, ids.clone());
                rep.beta.insert(v.id, ids);
            }
            if v.framed {
                let w = dims.dim_w(v.id);
                rep.framing.insert(
                    v.id,
                    Framing {
                        u: ComplexMatrix::zeros(w, n),
                        v: ComplexMatrix::zeros(n, w),
                    },
                );
            }
        }
        Ok(rep)
    }

    fn edge_mats(&self, h: EdgeId) -> Result<(&ComplexMatrix, &ComplexMatrix)> {
        let a = self
            .a
            .get(&h)
            .ok_or_else(|| Error::InvalidRepresentation(format!("missing a for edge {h}")))?;
        let b = self
            .b
            .get(&h)
            .ok_or_else(|| Error::InvalidRepresentation(format!("missing b for edge {h}")))?;
        Ok((a, b))
    }

    fn handles(&self, i: VertexId) -> (&[ComplexMatrix], &[ComplexMatrix]) {
        (
            self.alpha.get(&i).map(Vec::as_slice).unwrap_or(&[]),
            self.beta.get(&i).map(Vec::as_slice).unwrap_or(&[]),
        )
    }

    /// Check shapes and the invertibility invariants against a graph.
    pub fn validate(&self, g: &NodalCurveGraph, cfg: &ToleranceConfig) -> Result<()> {
        self.dims.validate(g)?;
        for e in &g.edges {
            let (a, b) = self.edge_mats(e.id)?;
            let (ns, nt) = (self.dims.dim_v(e.source), self.dims.dim_v(e.target));
            if a.rows() != nt || a.cols() != ns || b.rows() != ns || b.cols() != nt {
                return Err(Error::ShapeMismatch(format!("edge {} maps", e.id)));
            }
            let t = &ComplexMatrix::identity(nt) + &(a * b);
            if !linalg::is_invertible(&t, cfg) {
                return Err(Error::InvalidRepresentation(format!(
                    "1 + a b singular at edge {}",
                    e.id
                )));
            }
        }
        for v in &g.vertices {
            let n = self.dims.dim_v(v.id);
            let (al, be) = self.handles(v.id);
            if al.len() != v.genus as usize || be.len() != v.genus as usize {
                return Err(Error::InvalidRepresentation(format!(
                    "vertex {} needs {} handle pairs",
                    v.id, v.genus
                )));
            }
            for m in al.iter().chain(be) {
                if m.rows() != n || m.cols() != n {
                    return Err(Error::ShapeMismatch(format!("handle at vertex {}", v.id)));
                }
                if !linalg::is_invertible(m, cfg) {
                    return Err(Error::InvalidRepresentation(format!(
                        "singular handle matrix at vertex {}",
                        v.id
                    )));
                }
            }
            match (v.framed, self.framing.get(&v.id)) {
                (true, Some(f)) => {
                    let w = self.dims.dim_w(v.id);
                    if f.u.rows() != w || f.u.cols() != n || f.v.rows() != n || f.v.cols() != w {
                        return Err(Error::ShapeMismatch(format!("framing at vertex {}", v.id)));
                    }
                    let t = &ComplexMatrix::identity(n) + &(&f.v * &f.u);
                    if !linalg::is_invertible(&t, cfg) {
                        return Err(Error::InvalidRepresentation(format!(
                            "1 + v u singular at vertex {}",
                            v.id
                        )));
                    }
                }
                (true, None) => {
                    return Err(Error::InvalidRepresentation(format!(
                        "framed vertex {} has no framing maps",
                        v.id
                    )))
                }
                (false, Some(_)) => {
                    return Err(Error::InvalidRepresentation(format!(
                        "framing maps on unframed vertex {}",
                        v.id
                    )))
                }
                (false, None) => {}
            }
        }
        Ok(())
    }
}

/// The ordered relation product at vertex i, without the right-hand side:
/// framing factor (if any), incoming (1+a_h b_h) in edge order, outgoing
/// (1+b_h a_h)^{-1} in edge order, handle commutators ν ascending.
fn relation_product(rep: &Representation, g: &NodalCurveGraph, i: VertexId) -> Result<ComplexMatrix> {
    let n = rep.dims.dim_v(i);
    let mut acc = ComplexMatrix::identity(n);
    if let Some(f) = rep.framing.get(&i) {
        acc = &acc * &(&ComplexMatrix::identity(n) + &(&f.v * &f.u));
    }
    for e in g.incoming(i) {
        let (a, b) = rep.edge_mats(e.id)?;
        acc = &acc * &(&ComplexMatrix::identity(n) + &(a * b));
    }
    for e in g.outgoing(i) {
        let (a, b) = rep.edge_mats(e.id)?;
        let t = &ComplexMatrix::identity(n) + &(b * a);
        acc = &acc * &inverse(&t)?;
    }
    let (al, be) = rep.handles(i);
    for (alpha, beta) in al.iter().zip(be) {
        let comm = &(&(alpha * beta) * &inverse(alpha)?) * &inverse(beta)?;
        acc = &acc * &comm;
    }
    Ok(acc)
}

/// LHS − RHS of the vertex relation: RHS is q^{d_i}·1 for unframed vertices
/// and 1 for framed ones.
pub fn relation_residual(
    rep: &Representation,
    g: &NodalCurveGraph,
    i: VertexId,
) -> Result<ComplexMatrix> {
    let v = g
        .vertex(i)
        .ok_or_else(|| Error::InvalidGraph(format!("unknown vertex {i}")))?;
    let n = rep.dims.dim_v(i);
    let rhs = if v.framed {
        ComplexMatrix::identity(n)
    } else {
        ComplexMatrix::identity(n).scale(g.vertex_twist(i)?)
    };
    Ok(&relation_product(rep, g, i)? - &rhs)
}

/// LHS − 1 of the framed vertex relation (1+vu)·∏(1+ab)·∏(1+ba)^{-1} = 1.
pub fn framed_relation_residual(
    rep: &Representation,
    g: &NodalCurveGraph,
    i: VertexId,
) -> Result<ComplexMatrix> {
    let v = g
        .vertex(i)
        .ok_or_else(|| Error::InvalidGraph(format!("unknown vertex {i}")))?;
    if !v.framed {
        return Err(Error::Precondition(format!("vertex {i} is not framed")));
    }
    relation_residual(rep, g, i)
}

/// Residuals at every vertex of the graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelationReport {
    pub residuals: BTreeMap<VertexId, ComplexMatrix>,
    pub norms: BTreeMap<VertexId, f64>,
    pub max_norm: f64,
    /// Vertices/edges where an invertibility invariant failed.
    pub invertibility_failures: Vec<String>,
}

impl RelationReport {
    pub fn satisfied(&self, cfg: &ToleranceConfig) -> bool {
        self.invertibility_failures.is_empty() && self.max_norm <= cfg.eq_tol
    }
}

/// Full relation check: validates invariants (recorded, not thrown) and
/// computes every vertex residual.
pub fn check_relations(
    rep: &Representation,
    g: &NodalCurveGraph,
    cfg: &ToleranceConfig,
) -> Result<RelationReport> {
    let mut failures = Vec::new();
    if let Err(e) = rep.validate(g, cfg) {
        failures.push(e.to_string());
    }
    let mut residuals = BTreeMap::new();
    let mut norms = BTreeMap::new();
    let mut max_norm: f64 = 0.0;
    for v in &g.vertices {
        let r = relation_residual(rep, g, v.id)?;
        let nrm = r.frobenius_norm();
        max_norm = max_norm.max(nrm);
        residuals.insert(v.id, r);
        norms.insert(v.id, nrm);
    }
    Ok(RelationReport {
        residuals,
        norms,
        max_norm,
        invertibility_failures: failures,
    })
}

/// Change of basis by (g_i): a ↦ g_t a g_s^{-1}, b ↦ g_s b g_t^{-1},
/// α,β ↦ g_i α g_i^{-1}, u ↦ u g_i^{-1}, v ↦ g_i v.
pub fn gauge_act(
    rep: &Representation,
    g: &NodalCurveGraph,
    gauge: &BTreeMap<VertexId, ComplexMatrix>,
) -> Result<Representation> {
    let mut inv = BTreeMap::new();
    for v in &g.vertices {
        let gi = gauge
            .get(&v.id)
            .ok_or_else(|| Error::Precondition(format!("gauge misses vertex {}", v.id)))?;
        let n = rep.dims.dim_v(v.id);
        if gi.rows() != n || gi.cols() != n {
            return Err(Error::ShapeMismatch(format!("gauge at vertex {}", v.id)));
        }
        inv.insert(v.id, inverse(gi)?);
    }
    let mut out = rep.clone();
    for e in &g.edges {
        let (a, b) = rep.edge_mats(e.id)?;
        out.a
            .insert(e.id, &(&gauge[&e.target] * a) * &inv[&e.source]);
        out.b
            .insert(e.id, &(&gauge[&e.source] * b) * &inv[&e.target]);
    }
    for v in &g.vertices {
        let conj = |m: &ComplexMatrix| &(&gauge[&v.id] * m) * &inv[&v.id];
        if let Some(al) = rep.alpha.get(&v.id) {
            out.alpha.insert(v.id, al.iter().map(conj).collect());
        }
        if let Some(be) = rep.beta.get(&v.id) {
            out.beta.insert(v.id, be.iter().map(conj).collect());
        }
        if let Some(f) = rep.framing.get(&v.id) {
            out.framing.insert(
                v.id,
                Framing {
                    u: &f.u * &inv[&v.id],
                    v: &gauge[&v.id] * &f.v,
                },
            );
        }
    }
    Ok(out)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, radius: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let r = radius * rng.gen::<f64>().sqrt();
        let t = rng.gen::<f64>() * std::f64::consts::TAU;
        Complex64::new(r * t.cos(), r * t.sin())
    })
}

const MAX_RESAMPLE: usize = 100;

fn sample_until<T>(mut f: impl FnMut() -> Option<T>) -> Result<T> {
    for _ in 0..MAX_RESAMPLE {
        if let Some(t) = f() {
            return Ok(t);
        }
    }
    Err(Error::ResamplingExhausted(MAX_RESAMPLE))
}

/// Deterministic random representation: entries uniform in the complex disk
/// of the given radius; handles are identity plus a perturbation; every
/// invertibility invariant is enforced by resampling.
pub fn random_representation(
    g: &NodalCurveGraph,
    dims: &DimensionVector,
    seed: u64,
    radius: f64,
) -> Result<Representation> {
    if radius <= 0.0 {
        return Err(Error::Precondition("radius must be positive".into()));
    }
    let cfg = ToleranceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = Representation::zero(g, dims)?;
    for e in &g.edges {
        let (ns, nt) = (dims.dim_v(e.source), dims.dim_v(e.target));
        let (a, b) = sample_until(|| {
            let a = random_matrix(&mut rng, nt, ns, radius);
            let b = random_matrix(&mut rng, ns, nt, radius);
            let t = &ComplexMatrix::identity(nt) + &(&a * &b);
            linalg::is_invertible(&t, &cfg).then_some((a, b))
        })?;
        rep.a.insert(e.id, a);
        rep.b.insert(e.id, b);
    }
    for v in &g.vertices {
        let n = dims.dim_v(v.id);
        for field in [&mut rep.alpha, &mut rep.beta] {
            if let Some(mats) = field.get_mut(&v.id) {
                for m in mats.iter_mut() {
                    *m = sample_until(|| {
                        let cand =
                            &ComplexMatrix::identity(n) + &random_matrix(&mut rng, n, n, radius);
                        linalg::is_invertible(&cand, &cfg).then_some(cand)
                    })?;
                }
            }
        }
        if v.framed {
            let w = dims.dim_w(v.id);
            let f = sample_until(|| {
                let u = random_matrix(&mut rng, w, n, radius);
                let vm = random_matrix(&mut rng, n, w, radius);
                let t = &ComplexMatrix::identity(n) + &(&vm * &u);
                linalg::is_invertible(&t, &cfg).then_some(Framing { u, v: vm })
            })?;
            rep.framing.insert(v.id, f);
        }
    }
    Ok(rep)
}

/// Whether a node diagram sits on the incoming (unprimed) or outgoing
/// (Fourier-transformed) side of its vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Incoming,
    Outgoing,
}

/// One local diagram at a vertex, labelled by the node (edge) it came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalNodeDiagram {
    pub edge: EdgeId,
    pub role: NodeRole,
    pub diagram: PhiPsiDiagram,
}

/// The complete local model of a representation: per-vertex node diagrams
/// plus the data (handles, framings) not seen by the nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalModel {
    pub psi: BTreeMap<VertexId, usize>,
    pub vertices: BTreeMap<VertexId, Vec<LocalNodeDiagram>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub alpha: BTreeMap<VertexId, Vec<ComplexMatrix>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub beta: BTreeMap<VertexId, Vec<ComplexMatrix>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub framing: BTreeMap<VertexId, Framing>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub w: BTreeMap<VertexId, usize>,
}

/// Local node diagrams at vertex i: for each incoming edge the diagram
/// (a″, b″) = (a_h, b_h), for each outgoing edge its Fourier transform
/// (a′, b′) = (−b_h, a_h(1 + b_h a_h)^{-1}); incoming before outgoing, each
/// group in edge order.
pub fn expand_local(
    rep: &Representation,
    g: &NodalCurveGraph,
    i: VertexId,
    cfg: &ToleranceConfig,
) -> Result<Vec<LocalNodeDiagram>> {
    g.vertex(i)
        .ok_or_else(|| Error::InvalidGraph(format!("unknown vertex {i}")))?;
    let mut out = Vec::new();
    for e in g.incoming(i) {
        let (a, b) = rep.edge_mats(e.id)?;
        out.push(LocalNodeDiagram {
            edge: e.id,
            role: NodeRole::Incoming,
            diagram: PhiPsiDiagram::new(a.clone(), b.clone())?,
        });
    }
    for e in g.outgoing(i) {
        let (a, b) = rep.edge_mats(e.id)?;
        let node = PhiPsiDiagram::new(a.clone(), b.clone())?;
        out.push(LocalNodeDiagram {
            edge: e.id,
            role: NodeRole::Outgoing,
            diagram: ft_j(&node, cfg)?,
        });
    }
    Ok(out)
}

/// Expand every vertex, carrying handles and framings along unchanged.
pub fn expand_all(
    rep: &Representation,
    g: &NodalCurveGraph,
    cfg: &ToleranceConfig,
) -> Result<LocalModel> {
    let mut vertices = BTreeMap::new();
    let mut psi = BTreeMap::new();
    for v in &g.vertices {
        vertices.insert(v.id, expand_local(rep, g, v.id, cfg)?);
        psi.insert(v.id, rep.dims.dim_v(v.id));
    }
    Ok(LocalModel {
        psi,
        vertices,
        alpha: rep.alpha.clone(),
        beta: rep.beta.clone(),
        framing: rep.framing.clone(),
        w: rep.dims.w.clone(),
    })
}

/// The local relation product at vertex i: framing factor, then the
/// monodromy factors (1 + a b) of the vertex's node diagrams in their stored
/// order, then handle commutators, minus q^{d_i}·1 (or 1 when framed).
pub fn local_relation_residual(
    model: &LocalModel,
    g: &NodalCurveGraph,
    i: VertexId,
) -> Result<ComplexMatrix> {
    let v = g
        .vertex(i)
        .ok_or_else(|| Error::InvalidGraph(format!("unknown vertex {i}")))?;
    let n = *model
        .psi
        .get(&i)
        .ok_or_else(|| Error::Precondition(format!("no Ψ dimension for vertex {i}")))?;
    let mut acc = ComplexMatrix::identity(n);
    if let Some(f) = model.framing.get(&i) {
        acc = &acc * &(&ComplexMatrix::identity(n) + &(&f.v * &f.u));
    }
    for node in model.vertices.get(&i).map(Vec::as_slice).unwrap_or(&[]) {
        let d = &node.diagram;
        if d.dim_psi() != n {
            return Err(Error::ShapeMismatch(format!(
                "node diagram at edge {} has Ψ dimension {}, vertex has {}",
                node.edge,
                d.dim_psi(),
                n
            )));
        }
        acc = &acc * &(&ComplexMatrix::identity(n) + &(&d.a * &d.b));
    }
    let empty: &[ComplexMatrix] = &[];
    let al = model.alpha.get(&i).map(Vec::as_slice).unwrap_or(empty);
    let be = model.beta.get(&i).map(Vec::as_slice).unwrap_or(empty);
    for (alpha, beta) in al.iter().zip(be) {
        let comm = &(&(alpha * beta) * &inverse(alpha)?) * &inverse(beta)?;
        acc = &acc * &comm;
    }
    let rhs = if v.framed {
        ComplexMatrix::identity(n)
    } else {
        ComplexMatrix::identity(n).scale(g.vertex_twist(i)?)
    };
    Ok(&acc - &rhs)
}

/// Rebuild a representation from local node data. For every edge the
/// outgoing-side diagram must equal the Fourier transform of the
/// incoming-side diagram to eq_tol; the edge maps are then read off the
/// incoming side.
pub fn glue_from_local(
    g: &NodalCurveGraph,
    model: &LocalModel,
    cfg: &ToleranceConfig,
) -> Result<Representation> {
    let find = |i: VertexId, h: EdgeId, role: NodeRole| -> Result<&PhiPsiDiagram> {
        model
            .vertices
            .get(&i)
            .and_then(|nodes| {
                nodes
                    .iter()
                    .find(|n| n.edge == h && n.role == role)
                    .map(|n| &n.diagram)
            })
            .ok_or_else(|| {
                Error::Precondition(format!("vertex {i} is missing the diagram for edge {h}"))
            })
    };
    let mut dims = DimensionVector {
        v: model.psi.clone(),
        w: model.w.clone(),
    };
    for v in &g.vertices {
        if !dims.v.contains_key(&v.id) {
            return Err(Error::Precondition(format!("no Ψ space for vertex {}", v.id)));
        }
        if v.framed && !dims.w.contains_key(&v.id) {
            if let Some(f) = model.framing.get(&v.id) {
                dims.w.insert(v.id, f.dim_w());
            }
        }
    }
    let mut rep = Representation {
        dims,
        a: BTreeMap::new(),
        b: BTreeMap::new(),
        alpha: model.alpha.clone(),
        beta: model.beta.clone(),
        framing: model.framing.clone(),
    };
    for e in &g.edges {
        let incoming = find(e.target, e.id, NodeRole::Incoming)?;
        let outgoing = find(e.source, e.id, NodeRole::Outgoing)?;
        let expected = ft_j(incoming, cfg)?;
        let scale = 1f64
            .max(expected.a.frobenius_norm())
            .max(expected.b.frobenius_norm());
        let defect = (&outgoing.a - &expected.a)
            .frobenius_norm()
            .max((&outgoing.b - &expected.b).frobenius_norm());
        if defect > cfg.eq_tol * scale {
            return Err(Error::FtConsistency(format!(
                "edge {}: outgoing diagram differs from the transform of the incoming one by {defect:.3e}",
                e.id
            )));
        }
        rep.a.insert(e.id, incoming.a.clone());
        rep.b.insert(e.id, incoming.b.clone());
    }
    Ok(rep)
}
