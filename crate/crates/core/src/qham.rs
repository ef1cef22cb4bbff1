//! Quasi-Hamiltonian GL(n,ℂ)-product spaces: the double, van den Bergh's
//! space, intrinsic/extrinsic fusion, numeric verification of the three
//! axioms, assembly from a decorated graph, moment-fiber solving, and
//! reduction reports.
//!
//! Conventions (fixed once, used everywhere):
//! - invariant pairing on gl(n): (ξ,ζ) = tr(ξζ);
//! - for 𝔤-valued 1-forms, (α,β)(X,Y) = (α(X),β(Y)) − (α(Y),β(X));
//! - dω(X,Y,Z) = Xω(Y,Z) − Yω(X,Z) + Zω(X,Y) on constant extensions;
//! - Cartan 3-form η(X,Y,Z) = ½·tr(ξ[υ,ζ]) with ξ = g^{-1}X etc.
//!
//! Under these conventions the double with moment (ab, a^{-1}b^{-1}) and its
//! printed 2-form passes QH1–QH3; van den Bergh's space passes with the
//! printed moment ((1+ab)^{-1}, 1+ba) and the printed 2-form with its overall
//! sign reversed, which is the form implemented here.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curve::{DimensionVector, EdgeId, NodalCurveGraph, VertexId};
use crate::dual::{lift, seed, tangent_part, value_part, Dual, GMat, Scalar};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, ToleranceConfig};

pub type Point = Vec<ComplexMatrix>;
pub type Tangent = Vec<ComplexMatrix>;

/// G = GL(n_1) × … × GL(n_k), as an ordered list of slot sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub sizes: Vec<usize>,
}

/// Structure tree of a space: the two elementary pieces, products, and
/// fusions. `Fuse` merges slots `i` and `j` (of the inner space) into one
/// diagonal slot carrying the ordered product moment m_i·m_j; the merged
/// slot takes slot i's position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpaceExpr {
    Double { n: usize },
    Vdb { n1: usize, n2: usize },
    Product(Vec<SpaceExpr>),
    Fuse { inner: Box<SpaceExpr>, i: usize, j: usize },
}

/// Shape of one matrix block of the point layout. Blocks flagged
/// `base_identity` must stay invertible, and random sampling perturbs the
/// identity instead of the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub base_identity: bool,
}

impl SpaceExpr {
    fn block_count(&self) -> usize {
        match self {
            SpaceExpr::Double { .. } | SpaceExpr::Vdb { .. } => 2,
            SpaceExpr::Product(children) => children.iter().map(|c| c.block_count()).sum(),
            SpaceExpr::Fuse { inner, .. } => inner.block_count(),
        }
    }

    fn slot_count(&self) -> usize {
        match self {
            SpaceExpr::Double { .. } | SpaceExpr::Vdb { .. } => 2,
            SpaceExpr::Product(children) => children.iter().map(|c| c.slot_count()).sum(),
            SpaceExpr::Fuse { inner, .. } => inner.slot_count() - 1,
        }
    }

    fn slot_sizes(&self) -> Vec<usize> {
        match self {
            SpaceExpr::Double { n } => vec![*n, *n],
            SpaceExpr::Vdb { n1, n2 } => vec![*n2, *n1],
            SpaceExpr::Product(children) => {
                children.iter().flat_map(|c| c.slot_sizes()).collect()
            }
            SpaceExpr::Fuse { inner, i, j } => {
                let mut s = inner.slot_sizes();
                s.remove(*j);
                let _ = i;
                s
            }
        }
    }

    fn blocks(&self) -> Vec<BlockShape> {
        match self {
            SpaceExpr::Double { n } => vec![
                BlockShape {
                    name: "a".into(),
                    rows: *n,
                    cols: *n,
                    base_identity: true,
                },
                BlockShape {
                    name: "b".into(),
                    rows: *n,
                    cols: *n,
                    base_identity: true,
                },
            ],
            SpaceExpr::Vdb { n1, n2 } => vec![
                BlockShape {
                    name: "a".into(),
                    rows: *n2,
                    cols: *n1,
                    base_identity: false,
                },
                BlockShape {
                    name: "b".into(),
                    rows: *n1,
                    cols: *n2,
                    base_identity: false,
                },
            ],
            SpaceExpr::Product(children) => children
                .iter()
                .enumerate()
                .flat_map(|(k, c)| {
                    c.blocks().into_iter().map(move |mut b| {
                        b.name = format!("{k}.{}", b.name);
                        b
                    })
                })
                .collect(),
            SpaceExpr::Fuse { inner, .. } => inner.blocks(),
        }
    }

    fn slot_names(&self) -> Vec<String> {
        match self {
            SpaceExpr::Double { .. } => vec!["l".into(), "r".into()],
            SpaceExpr::Vdb { .. } => vec!["t".into(), "s".into()],
            SpaceExpr::Product(children) => children
                .iter()
                .enumerate()
                .flat_map(|(k, c)| {
                    c.slot_names()
                        .into_iter()
                        .map(move |n| format!("{k}.{n}"))
                })
                .collect(),
            SpaceExpr::Fuse { inner, i, j } => {
                let names = inner.slot_names();
                let merged = format!("{}*{}", names[*i], names[*j]);
                let mut out = Vec::new();
                for (k, n) in names.into_iter().enumerate() {
                    if k == *j {
                        continue;
                    }
                    if k == *i {
                        out.push(merged.clone());
                    } else {
                        out.push(n);
                    }
                }
                out
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SpaceExpr::Double { n } => {
                if *n == 0 {
                    return Err(Error::Slot("double of size 0".into()));
                }
            }
            SpaceExpr::Vdb { n1, n2 } => {
                if *n1 == 0 || *n2 == 0 {
                    return Err(Error::Slot("vdb slot of size 0".into()));
                }
            }
            SpaceExpr::Product(children) => {
                for c in children {
                    c.validate()?;
                }
            }
            SpaceExpr::Fuse { inner, i, j } => {
                inner.validate()?;
                let sizes = inner.slot_sizes();
                if *i == *j || *i >= sizes.len() || *j >= sizes.len() {
                    return Err(Error::Slot(format!("fuse indices ({i},{j}) out of range")));
                }
                if sizes[*i] != sizes[*j] {
                    return Err(Error::Slot(format!(
                        "fuse size mismatch: slot {i} has size {}, slot {j} has size {}",
                        sizes[*i], sizes[*j]
                    )));
                }
            }
        }
        Ok(())
    }
}

fn half<S: Scalar>() -> S {
    S::from_c64(Complex64::new(0.5, 0.0))
}

/// Group action on points, generic over the scalar.
fn action_g<S: Scalar>(expr: &SpaceExpr, g: &[GMat<S>], x: &[GMat<S>]) -> Result<Vec<GMat<S>>> {
    match expr {
        // (g1, g2)·(a, b) = (g1 a g2^{-1}, g2 b g1^{-1}); same shape for vdb
        SpaceExpr::Double { .. } | SpaceExpr::Vdb { .. } => {
            let g1_inv = g[1].inverse()?;
            let g0_inv = g[0].inverse()?;
            Ok(vec![
                g[0].matmul(&x[0]).matmul(&g1_inv),
                g[1].matmul(&x[1]).matmul(&g0_inv),
            ])
        }
        SpaceExpr::Product(children) => {
            let mut out = Vec::with_capacity(x.len());
            let (mut gb, mut xb) = (0, 0);
            for c in children {
                let (ns, nb) = (c.slot_count(), c.block_count());
                out.extend(action_g(c, &g[gb..gb + ns], &x[xb..xb + nb])?);
                gb += ns;
                xb += nb;
            }
            Ok(out)
        }
        SpaceExpr::Fuse { inner, i, j } => {
            let inner_slots = inner.slot_count();
            let fused_of = |k: usize| -> usize {
                if k == *j {
                    *i - usize::from(*i > *j)
                } else {
                    k - usize::from(k > *j)
                }
            };
            let expanded: Vec<GMat<S>> = (0..inner_slots).map(|k| g[fused_of(k)].clone()).collect();
            action_g(inner, &expanded, x)
        }
    }
}

/// Group-valued moment map, one matrix per slot, generic over the scalar.
fn moment_g<S: Scalar>(expr: &SpaceExpr, x: &[GMat<S>]) -> Result<Vec<GMat<S>>> {
    match expr {
        SpaceExpr::Double { .. } => {
            let ab = x[0].matmul(&x[1]);
            let inv = x[0].inverse()?.matmul(&x[1].inverse()?);
            Ok(vec![ab, inv])
        }
        SpaceExpr::Vdb { n1, n2 } => {
            let t2 = GMat::identity(*n2).add(&x[0].matmul(&x[1]));
            let t1 = GMat::identity(*n1).add(&x[1].matmul(&x[0]));
            Ok(vec![t2.inverse()?, t1])
        }
        SpaceExpr::Product(children) => {
            let mut out = Vec::new();
            let mut xb = 0;
            for c in children {
                let nb = c.block_count();
                out.extend(moment_g(c, &x[xb..xb + nb])?);
                xb += nb;
            }
            Ok(out)
        }
        SpaceExpr::Fuse { inner, i, j } => {
            let m = moment_g(inner, x)?;
            let merged = m[*i].matmul(&m[*j]);
            let mut out = Vec::new();
            for (k, mk) in m.into_iter().enumerate() {
                if k == *j {
                    continue;
                }
                if k == *i {
                    out.push(merged.clone());
                } else {
                    out.push(mk);
                }
            }
            Ok(out)
        }
    }
}

/// Moment value and its differential along tangent `t`, via dual numbers.
fn moment_and_diff<S: Scalar>(
    expr: &SpaceExpr,
    x: &[GMat<S>],
    t: &[GMat<S>],
) -> Result<(Vec<GMat<S>>, Vec<GMat<S>>)> {
    let xd: Vec<GMat<Dual<S>>> = x.iter().zip(t).map(|(v, tv)| seed(v, tv)).collect();
    let md = moment_g(expr, &xd)?;
    Ok(md
        .iter()
        .map(|m| (value_part(m), tangent_part(m)))
        .unzip())
}

/// The 2-form evaluated on two ambient tangents, generic over the scalar.
fn omega_g<S: Scalar>(expr: &SpaceExpr, x: &[GMat<S>], xv: &[GMat<S>], yv: &[GMat<S>]) -> Result<S> {
    match expr {
        SpaceExpr::Double { .. } => {
            // ½(a*θ^L, b*θ^R) + ½(a*θ^R, b*θ^L)
            let a_inv = x[0].inverse()?;
            let b_inv = x[1].inverse()?;
            let first = a_inv
                .matmul(&xv[0])
                .trace_prod(&yv[1].matmul(&b_inv))
                - a_inv.matmul(&yv[0]).trace_prod(&xv[1].matmul(&b_inv));
            let second = xv[0]
                .matmul(&a_inv)
                .trace_prod(&b_inv.matmul(&yv[1]))
                - yv[0].matmul(&a_inv).trace_prod(&b_inv.matmul(&xv[1]));
            Ok(half::<S>() * (first + second))
        }
        SpaceExpr::Vdb { n1, n2 } => {
            // ½( tr_{W1} (1+ba)^{-1} db∧da − tr_{W2} (1+ab)^{-1} da∧db )
            let s1 = GMat::identity(*n1).add(&x[1].matmul(&x[0])).inverse()?;
            let s2 = GMat::identity(*n2).add(&x[0].matmul(&x[1])).inverse()?;
            let db_da = xv[1].matmul(&yv[0]).sub(&yv[1].matmul(&xv[0]));
            let da_db = xv[0].matmul(&yv[1]).sub(&yv[0].matmul(&xv[1]));
            Ok(half::<S>() * (s1.trace_prod(&db_da) - s2.trace_prod(&da_db)))
        }
        SpaceExpr::Product(children) => {
            let mut acc = S::zero();
            let mut xb = 0;
            for c in children {
                let nb = c.block_count();
                acc = acc
                    + omega_g(
                        c,
                        &x[xb..xb + nb],
                        &xv[xb..xb + nb],
                        &yv[xb..xb + nb],
                    )?;
                xb += nb;
            }
            Ok(acc)
        }
        SpaceExpr::Fuse { inner, i, j } => {
            // ω′ = ω + ½(m_i^*θ^L, m_j^*θ^R)
            let base = omega_g(inner, x, xv, yv)?;
            let (m, dmx) = moment_and_diff(inner, x, xv)?;
            let (_, dmy) = moment_and_diff(inner, x, yv)?;
            let mi_inv = m[*i].inverse()?;
            let mj_inv = m[*j].inverse()?;
            let tl_x = mi_inv.matmul(&dmx[*i]);
            let tl_y = mi_inv.matmul(&dmy[*i]);
            let tr_x = dmx[*j].matmul(&mj_inv);
            let tr_y = dmy[*j].matmul(&mj_inv);
            let corr = half::<S>() * (tl_x.trace_prod(&tr_y) - tl_y.trace_prod(&tr_x));
            Ok(base + corr)
        }
    }
}

fn to_g(x: &[ComplexMatrix]) -> Vec<GMat<Complex64>> {
    x.iter().map(GMat::from_complex).collect()
}

fn from_g(x: &[GMat<Complex64>]) -> Vec<ComplexMatrix> {
    x.iter().map(GMat::to_complex).collect()
}

/// A concrete quasi-Hamiltonian space: structure tree plus derived layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QHSpace {
    pub name: String,
    pub expr: SpaceExpr,
    pub blocks: Vec<BlockShape>,
    pub group: GroupSpec,
    pub slot_names: Vec<String>,
    /// Ambient complex dimension (sum of block entry counts).
    pub dim: usize,
}

impl QHSpace {
    pub fn from_expr(name: impl Into<String>, expr: SpaceExpr) -> Result<Self> {
        expr.validate()?;
        let blocks = expr.blocks();
        let dim = blocks.iter().map(|b| b.rows * b.cols).sum();
        Ok(QHSpace {
            name: name.into(),
            blocks,
            group: GroupSpec {
                sizes: expr.slot_sizes(),
            },
            slot_names: expr.slot_names(),
            dim,
            expr,
        })
    }

    pub fn slot_count(&self) -> usize {
        self.group.sizes.len()
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        if x.len() != self.blocks.len() {
            return Err(Error::ShapeMismatch(format!(
                "point has {} blocks, layout has {}",
                x.len(),
                self.blocks.len()
            )));
        }
        for (b, m) in self.blocks.iter().zip(x) {
            if m.rows() != b.rows || m.cols() != b.cols {
                return Err(Error::ShapeMismatch(format!(
                    "block {} is {}x{}, expected {}x{}",
                    b.name,
                    m.rows(),
                    m.cols(),
                    b.rows,
                    b.cols
                )));
            }
        }
        Ok(())
    }

    pub fn action(&self, g: &[ComplexMatrix], x: &Point) -> Result<Point> {
        self.check_point(x)?;
        if g.len() != self.slot_count() {
            return Err(Error::Slot(format!(
                "group tuple has {} entries, space has {} slots",
                g.len(),
                self.slot_count()
            )));
        }
        Ok(from_g(&action_g(&self.expr, &to_g(g), &to_g(x))?))
    }

    pub fn moment(&self, x: &Point) -> Result<Vec<ComplexMatrix>> {
        self.check_point(x)?;
        Ok(from_g(&moment_g(&self.expr, &to_g(x))?))
    }

    pub fn omega(&self, x: &Point, xv: &Tangent, yv: &Tangent) -> Result<Complex64> {
        omega_g(&self.expr, &to_g(x), &to_g(xv), &to_g(yv))
    }

    /// Directional derivative of x ↦ ω_x(Y, Z) along `dir`, with Y, Z held
    /// constant (dual-number differentiation; exact).
    pub fn omega_directional(
        &self,
        x: &Point,
        dir: &Tangent,
        yv: &Tangent,
        zv: &Tangent,
    ) -> Result<Complex64> {
        let xg = to_g(x);
        let dg = to_g(dir);
        let xd: Vec<GMat<Dual<Complex64>>> =
            xg.iter().zip(&dg).map(|(v, t)| seed(v, t)).collect();
        let yd: Vec<GMat<Dual<Complex64>>> = to_g(yv).iter().map(lift).collect();
        let zd: Vec<GMat<Dual<Complex64>>> = to_g(zv).iter().map(lift).collect();
        Ok(omega_g(&self.expr, &xd, &yd, &zd)?.du)
    }

    /// Differential of the moment map along tangent `t`, one matrix per slot.
    pub fn moment_diff(&self, x: &Point, t: &Tangent) -> Result<Vec<ComplexMatrix>> {
        let (_, dm) = moment_and_diff(&self.expr, &to_g(x), &to_g(t))?;
        Ok(from_g(&dm))
    }

    /// Infinitesimal action ∂_ξ(x) for a Lie-algebra tuple ξ (one matrix per
    /// slot), computed as the tangent of g = 1 + ε·ξ acting on x.
    pub fn orbit_vector(&self, x: &Point, xi: &[ComplexMatrix]) -> Result<Tangent> {
        let gd: Vec<GMat<Dual<Complex64>>> = self
            .group
            .sizes
            .iter()
            .zip(xi)
            .map(|(&n, m)| seed(&GMat::identity(n), &GMat::from_complex(m)))
            .collect();
        let xd: Vec<GMat<Dual<Complex64>>> = to_g(x).iter().map(lift).collect();
        let moved = action_g(&self.expr, &gd, &xd)?;
        Ok(moved.iter().map(|m| tangent_part(m).to_complex()).collect())
    }

    pub fn identity_tuple(&self) -> Vec<ComplexMatrix> {
        self.group
            .sizes
            .iter()
            .map(|&n| ComplexMatrix::identity(n))
            .collect()
    }

    /// Random point: identity-based blocks get 1 + perturbation, the rest a
    /// small perturbation of the origin.
    pub fn random_point(&self, rng: &mut ChaCha8Rng, radius: f64) -> Point {
        self.blocks
            .iter()
            .map(|b| {
                let pert = random_block(rng, b.rows, b.cols, radius);
                if b.base_identity {
                    &ComplexMatrix::identity(b.rows) + &pert
                } else {
                    pert
                }
            })
            .collect()
    }

    pub fn random_tangent(&self, rng: &mut ChaCha8Rng, radius: f64) -> Tangent {
        self.blocks
            .iter()
            .map(|b| random_block(rng, b.rows, b.cols, radius))
            .collect()
    }

    pub fn zero_tangent(&self) -> Tangent {
        self.blocks
            .iter()
            .map(|b| ComplexMatrix::zeros(b.rows, b.cols))
            .collect()
    }

    pub fn flatten(&self, t: &Tangent) -> Vec<Complex64> {
        t.iter().flat_map(|m| m.entries().iter().copied()).collect()
    }

    pub fn unflatten(&self, v: &[Complex64]) -> Tangent {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut off = 0;
        for b in &self.blocks {
            let n = b.rows * b.cols;
            let mut m = ComplexMatrix::zeros(b.rows, b.cols);
            for (k, z) in v[off..off + n].iter().enumerate() {
                m[(k / b.cols, k % b.cols)] = *z;
            }
            out.push(m);
            off += n;
        }
        out
    }

    /// The k-th coordinate basis tangent.
    pub fn basis_tangent(&self, k: usize) -> Tangent {
        let mut v = vec![Complex64::new(0.0, 0.0); self.dim];
        v[k] = Complex64::new(1.0, 0.0);
        self.unflatten(&v)
    }

    /// Lie-algebra tuple that is E_{pq} at `slot` and zero elsewhere.
    pub fn basis_xi(&self, slot: usize, p: usize, q: usize) -> Vec<ComplexMatrix> {
        self.group
            .sizes
            .iter()
            .enumerate()
            .map(|(s, &n)| {
                let mut m = ComplexMatrix::zeros(n, n);
                if s == slot {
                    m[(p, q)] = Complex64::new(1.0, 0.0);
                }
                m
            })
            .collect()
    }
}

fn random_block(rng: &mut ChaCha8Rng, rows: usize, cols: usize, radius: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let r = radius * rng.gen::<f64>().sqrt();
        let t = rng.gen::<f64>() * std::f64::consts::TAU;
        Complex64::new(r * t.cos(), r * t.sin())
    })
}

/// The double of GL(n): points (a,b) ∈ GL(n)², a GL(n)×GL(n)-space.
pub fn double(n: usize) -> Result<QHSpace> {
    QHSpace::from_expr(format!("double({n})"), SpaceExpr::Double { n })
}

/// Internally fused double: a single-slot GL(n)-space with moment [a,b].
pub fn fused_double(n: usize) -> Result<QHSpace> {
    QHSpace::from_expr(
        format!("fused_double({n})"),
        SpaceExpr::Fuse {
            inner: Box::new(SpaceExpr::Double { n }),
            i: 0,
            j: 1,
        },
    )
}

/// Van den Bergh's space on pairs (a: W1→W2, b: W2→W1) with 1+ab invertible;
/// a GL(n2)×GL(n1)-space with moment ((1+ab)^{-1}, 1+ba).
pub fn vdb_space(n1: usize, n2: usize) -> Result<QHSpace> {
    QHSpace::from_expr(format!("vdb({n1},{n2})"), SpaceExpr::Vdb { n1, n2 })
}

/// Intrinsic fusion of two equal-size slots of one space.
pub fn fuse(m: QHSpace, i: usize, j: usize) -> Result<QHSpace> {
    let name = format!("fuse({},{i},{j})", m.name);
    QHSpace::from_expr(
        name,
        SpaceExpr::Fuse {
            inner: Box::new(m.expr),
            i,
            j,
        },
    )
}

/// Product space (concatenated layout and slots).
pub fn product(spaces: Vec<QHSpace>) -> Result<QHSpace> {
    let name = format!(
        "product({})",
        spaces
            .iter()
            .map(|s| s.name.clone())
            .collect::<Vec<_>>()
            .join(",")
    );
    QHSpace::from_expr(
        name,
        SpaceExpr::Product(spaces.into_iter().map(|s| s.expr).collect()),
    )
}

/// Extrinsic fusion: product of two spaces, then fusion of slot `i` of the
/// first with slot `j` of the second.
pub fn extrinsic_fuse(m1: QHSpace, m2: QHSpace, i: usize, j: usize) -> Result<QHSpace> {
    let off = m1.slot_count();
    let name = format!("extrinsic_fuse({},{},{i},{j})", m1.name, m2.name);
    QHSpace::from_expr(
        name,
        SpaceExpr::Fuse {
            inner: Box::new(SpaceExpr::Product(vec![m1.expr, m2.expr])),
            i,
            j: off + j,
        },
    )
}

/// Look up a cataloged space by name: double(n), fused_double(n), vdb(n1,n2).
pub fn catalog(name: &str) -> Option<QHSpace> {
    let name = name.trim();
    let inner = |prefix: &str| -> Option<Vec<usize>> {
        let rest = name.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
        rest.split(',')
            .map(|p| p.trim().parse::<usize>().ok())
            .collect()
    };
    if let Some(args) = inner("fused_double") {
        if let [n] = args[..] {
            return fused_double(n).ok();
        }
    }
    if let Some(args) = inner("double") {
        if let [n] = args[..] {
            return double(n).ok();
        }
    }
    if let Some(args) = inner("vdb") {
        if let [n1, n2] = args[..] {
            return vdb_space(n1, n2).ok();
        }
    }
    None
}

/// The bi-invariant Cartan 3-form at g on three ambient tangents:
/// η(X,Y,Z) = ½·tr(ξ[υ,ζ]) with ξ = g^{-1}X etc. (equal to the full signed
/// S₃ antisymmetrization of (ξ,[υ,ζ]) with the printed 1/12 prefactor).
pub fn cartan_eta(
    g: &ComplexMatrix,
    x: &ComplexMatrix,
    y: &ComplexMatrix,
    z: &ComplexMatrix,
) -> Result<Complex64> {
    let g_inv = linalg::inverse(g)?;
    let xi = &g_inv * x;
    let up = &g_inv * y;
    let ze = &g_inv * z;
    let bracket = &(&up * &ze) - &(&ze * &up);
    Ok(Complex64::new(0.5, 0.0) * (&xi * &bracket).trace())
}

const QH1_DUAL_TOL: f64 = 1e-8;
const QH1_FD_TOL: f64 = 1e-5;
const QH2_TOL: f64 = 1e-10;
const QH3_ANGLE_TOL: f64 = 1e-6;

/// Worst-case residuals of the three axioms over a sampled grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxiomReport {
    pub space: String,
    pub points: usize,
    pub triples: usize,
    pub qh1_max_dual: f64,
    pub qh1_max_fd: f64,
    pub qh2_max: f64,
    pub qh3_max_angle: f64,
    pub qh3_dim_mismatches: usize,
    pub qh1_tol: f64,
    pub qh1_fd_tol: f64,
    pub qh2_tol: f64,
    pub qh3_angle_tol: f64,
}

impl AxiomReport {
    pub fn qh1_pass(&self) -> bool {
        self.qh1_max_dual < self.qh1_tol && self.qh1_max_fd < self.qh1_fd_tol
    }
    pub fn qh2_pass(&self) -> bool {
        self.qh2_max < self.qh2_tol
    }
    pub fn qh3_pass(&self) -> bool {
        self.qh3_dim_mismatches == 0 && self.qh3_max_angle < self.qh3_angle_tol
    }
    pub fn pass(&self) -> bool {
        self.qh1_pass() && self.qh2_pass() && self.qh3_pass()
    }
}

/// dω(X,Y,Z) on constant extensions, by dual-number directional derivatives.
pub fn d_omega(space: &QHSpace, x: &Point, xv: &Tangent, yv: &Tangent, zv: &Tangent) -> Result<Complex64> {
    Ok(space.omega_directional(x, xv, yv, zv)?
        - space.omega_directional(x, yv, xv, zv)?
        + space.omega_directional(x, zv, xv, yv)?)
}

fn add_scaled(x: &Point, t: &Tangent, s: f64) -> Point {
    x.iter()
        .zip(t)
        .map(|(m, d)| m + &d.scale(Complex64::new(s, 0.0)))
        .collect()
}

/// Finite-difference directional derivative of ω with Richardson
/// extrapolation (cross-check oracle for the dual-number path).
fn omega_directional_fd(
    space: &QHSpace,
    x: &Point,
    dir: &Tangent,
    yv: &Tangent,
    zv: &Tangent,
    h: f64,
) -> Result<Complex64> {
    let central = |h: f64| -> Result<Complex64> {
        let p = space.omega(&add_scaled(x, dir, h), yv, zv)?;
        let m = space.omega(&add_scaled(x, dir, -h), yv, zv)?;
        Ok((p - m) / Complex64::new(2.0 * h, 0.0))
    };
    let d1 = central(h)?;
    let d2 = central(h / 2.0)?;
    Ok((Complex64::new(4.0, 0.0) * d2 - d1) / Complex64::new(3.0, 0.0))
}

fn d_omega_fd(space: &QHSpace, x: &Point, xv: &Tangent, yv: &Tangent, zv: &Tangent) -> Result<Complex64> {
    let h = 1e-5;
    Ok(omega_directional_fd(space, x, xv, yv, zv, h)?
        - omega_directional_fd(space, x, yv, xv, zv, h)?
        + omega_directional_fd(space, x, zv, xv, yv, h)?)
}

/// Verify QH1–QH3 on `points` random points with `triples` random tangent
/// triples each. All randomness comes from `seed`.
pub fn check_qh_axioms(
    space: &QHSpace,
    points: usize,
    triples: usize,
    seed: u64,
    cfg: &ToleranceConfig,
) -> Result<AxiomReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut qh1_max_dual: f64 = 0.0;
    let mut qh1_max_fd: f64 = 0.0;
    let mut qh2_max: f64 = 0.0;
    let mut qh3_max_angle: f64 = 0.0;
    let mut qh3_dim_mismatches = 0usize;
    for _ in 0..points {
        let x = space.random_point(&mut rng, 0.25);
        // QH1: dω = −𝔪^*η summed over slots
        for _ in 0..triples {
            let xv = space.random_tangent(&mut rng, 0.5);
            let yv = space.random_tangent(&mut rng, 0.5);
            let zv = space.random_tangent(&mut rng, 0.5);
            let lhs = d_omega(space, &x, &xv, &yv, &zv)?;
            let lhs_fd = d_omega_fd(space, &x, &xv, &yv, &zv)?;
            let m = space.moment(&x)?;
            let dmx = space.moment_diff(&x, &xv)?;
            let dmy = space.moment_diff(&x, &yv)?;
            let dmz = space.moment_diff(&x, &zv)?;
            let mut rhs = Complex64::new(0.0, 0.0);
            for s in 0..space.slot_count() {
                rhs -= cartan_eta(&m[s], &dmx[s], &dmy[s], &dmz[s])?;
            }
            qh1_max_dual = qh1_max_dual.max((lhs - rhs).norm());
            qh1_max_fd = qh1_max_fd.max((lhs_fd - rhs).norm());
        }
        // QH2: i_{∂ξ}ω = ½ 𝔪^*(θ^L+θ^R, ξ), over a basis of each slot algebra
        let m = space.moment(&x)?;
        let m_inv: Vec<ComplexMatrix> = m
            .iter()
            .map(linalg::inverse)
            .collect::<Result<_>>()?;
        for _ in 0..triples.max(1) {
            let yv = space.random_tangent(&mut rng, 0.5);
            let dmy = space.moment_diff(&x, &yv)?;
            for s in 0..space.slot_count() {
                let n = space.group.sizes[s];
                let pair_base = &(&m_inv[s] * &dmy[s]) + &(&dmy[s] * &m_inv[s]);
                for p in 0..n {
                    for q in 0..n {
                        let xi = space.basis_xi(s, p, q);
                        let orbit = space.orbit_vector(&x, &xi)?;
                        let lhs = space.omega(&x, &orbit, &yv)?;
                        // tr(pair_base · E_pq) = pair_base[q, p]
                        let rhs = Complex64::new(0.5, 0.0) * pair_base[(q, p)];
                        qh2_max = qh2_max.max((lhs - rhs).norm());
                    }
                }
            }
        }
        // QH3: ker ω_x = {∂ξ(x) : ξ ∈ ker(Ad_{m(x)} + 1)}
        let (mismatch, angle) = qh3_at_point(space, &x, &m, cfg)?;
        if mismatch {
            qh3_dim_mismatches += 1;
        }
        qh3_max_angle = qh3_max_angle.max(angle);
    }
    Ok(AxiomReport {
        space: space.name.clone(),
        points,
        triples,
        qh1_max_dual,
        qh1_max_fd,
        qh2_max,
        qh3_max_angle,
        qh3_dim_mismatches,
        qh1_tol: QH1_DUAL_TOL,
        qh1_fd_tol: QH1_FD_TOL,
        qh2_tol: QH2_TOL,
        qh3_angle_tol: QH3_ANGLE_TOL,
    })
}

/// Gram matrix of ω_x in the coordinate basis.
pub fn omega_gram(space: &QHSpace, x: &Point) -> Result<ComplexMatrix> {
    let d = space.dim;
    let basis: Vec<Tangent> = (0..d).map(|k| space.basis_tangent(k)).collect();
    let mut gram = ComplexMatrix::zeros(d, d);
    for p in 0..d {
        for q in (p + 1)..d {
            let v = space.omega(x, &basis[p], &basis[q])?;
            gram[(p, q)] = v;
            gram[(q, p)] = -v;
        }
    }
    Ok(gram)
}

/// Basis of ker(Ad_m + 1) ⊂ gl(n) for one slot value m, as matrices.
fn ad_plus_one_kernel(m: &ComplexMatrix, cfg: &ToleranceConfig) -> Result<Vec<ComplexMatrix>> {
    let n = m.rows();
    let m_inv = linalg::inverse(m)?;
    let mut op = ComplexMatrix::zeros(n * n, n * n);
    for r in 0..n {
        for s in 0..n {
            let mut e = ComplexMatrix::zeros(n, n);
            e[(r, s)] = Complex64::new(1.0, 0.0);
            let image = &(&(m * &e) * &m_inv) + &e;
            for i in 0..n {
                for j in 0..n {
                    op[(i * n + j, r * n + s)] = image[(i, j)];
                }
            }
        }
    }
    let null = linalg::null_space(&op, cfg);
    let mut out = Vec::new();
    for c in 0..null.cols() {
        let mut xi = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                xi[(i, j)] = null[(i * n + j, c)];
            }
        }
        out.push(xi);
    }
    Ok(out)
}

fn tangents_to_columns(space: &QHSpace, tangents: &[Tangent]) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(space.dim, tangents.len());
    for (c, t) in tangents.iter().enumerate() {
        for (r, z) in space.flatten(t).into_iter().enumerate() {
            out[(r, c)] = z;
        }
    }
    out
}

fn qh3_at_point(
    space: &QHSpace,
    x: &Point,
    m: &[ComplexMatrix],
    cfg: &ToleranceConfig,
) -> Result<(bool, f64)> {
    let gram = omega_gram(space, x)?;
    let ker_omega = linalg::null_space(&gram, cfg);
    // orbit vectors of the Ad-kernel, slotwise
    let mut orbit_tangents = Vec::new();
    for s in 0..space.slot_count() {
        for xi_mat in ad_plus_one_kernel(&m[s], cfg)? {
            let mut xi: Vec<ComplexMatrix> = space
                .group
                .sizes
                .iter()
                .map(|&n| ComplexMatrix::zeros(n, n))
                .collect();
            xi[s] = xi_mat;
            orbit_tangents.push(space.orbit_vector(x, &xi)?);
        }
    }
    let orbit_cols = tangents_to_columns(space, &orbit_tangents);
    let orbit_basis = linalg::column_space(&orbit_cols, cfg);
    if ker_omega.cols() != orbit_basis.cols() {
        return Ok((true, std::f64::consts::FRAC_PI_2));
    }
    if ker_omega.cols() == 0 {
        return Ok((false, 0.0));
    }
    let cosines = linalg::principal_angle_cosines(&ker_omega, &orbit_basis);
    let min_cos = cosines.last().copied().unwrap_or(0.0).clamp(-1.0, 1.0);
    Ok((false, min_cos.acos()))
}

/// A space assembled from a decorated graph, with the bookkeeping linking
/// slots back to vertices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssembledSpace {
    pub space: QHSpace,
    /// Fused gauge slot per vertex (vertices contributing no blocks absent).
    pub vertex_slot: BTreeMap<VertexId, usize>,
    /// Residual flavor slot GL(W_i) per framed vertex.
    pub flavor_slot: BTreeMap<VertexId, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum SlotTag {
    EdgeTarget(EdgeId),
    EdgeSource(EdgeId),
    FramingColor(VertexId),
    Flavor(VertexId),
    Handle(VertexId, u32),
    Vertex(VertexId),
}

/// Assemble the moduli space of a decorated graph: per edge a van den Bergh
/// space, per framed vertex a van den Bergh space against the flavor space,
/// per handle a fused double; all slots at a vertex fused in the order
/// framing, incoming, outgoing, handles.
pub fn assemble_moduli(g: &NodalCurveGraph, dims: &DimensionVector) -> Result<AssembledSpace> {
    dims.validate(g)?;
    for v in &g.vertices {
        if dims.dim_v(v.id) == 0 {
            return Err(Error::Precondition(format!(
                "vertex {} has dimension 0",
                v.id
            )));
        }
        if v.framed && dims.dim_w(v.id) == 0 {
            return Err(Error::Precondition(format!(
                "framed vertex {} has flavor dimension 0",
                v.id
            )));
        }
    }
    let mut pieces: Vec<SpaceExpr> = Vec::new();
    let mut tags: Vec<SlotTag> = Vec::new();
    let mut block_names: Vec<String> = Vec::new();
    for e in &g.edges {
        pieces.push(SpaceExpr::Vdb {
            n1: dims.dim_v(e.source),
            n2: dims.dim_v(e.target),
        });
        tags.push(SlotTag::EdgeTarget(e.id));
        tags.push(SlotTag::EdgeSource(e.id));
        block_names.push(format!("e{}.a", e.id));
        block_names.push(format!("e{}.b", e.id));
    }
    for v in &g.vertices {
        if v.framed {
            pieces.push(SpaceExpr::Vdb {
                n1: dims.dim_v(v.id),
                n2: dims.dim_w(v.id),
            });
            tags.push(SlotTag::Flavor(v.id));
            tags.push(SlotTag::FramingColor(v.id));
            block_names.push(format!("f{}.u", v.id));
            block_names.push(format!("f{}.v", v.id));
        }
    }
    for v in &g.vertices {
        for nu in 1..=v.genus {
            pieces.push(SpaceExpr::Fuse {
                inner: Box::new(SpaceExpr::Double {
                    n: dims.dim_v(v.id),
                }),
                i: 0,
                j: 1,
            });
            tags.push(SlotTag::Handle(v.id, nu));
            block_names.push(format!("v{}.alpha{nu}", v.id));
            block_names.push(format!("v{}.beta{nu}", v.id));
        }
    }
    let mut expr = if pieces.len() == 1 {
        pieces.pop().unwrap()
    } else {
        SpaceExpr::Product(pieces)
    };
    // fuse per vertex in the normative order
    for v in &g.vertices {
        let mut wanted: Vec<SlotTag> = Vec::new();
        if v.framed {
            wanted.push(SlotTag::FramingColor(v.id));
        }
        for e in g.incoming(v.id) {
            wanted.push(SlotTag::EdgeTarget(e.id));
        }
        for e in g.outgoing(v.id) {
            wanted.push(SlotTag::EdgeSource(e.id));
        }
        for nu in 1..=v.genus {
            wanted.push(SlotTag::Handle(v.id, nu));
        }
        let mut cur: Option<usize> = None;
        for tag in wanted {
            let idx = tags
                .iter()
                .position(|t| *t == tag)
                .ok_or_else(|| Error::Slot(format!("missing slot {tag:?}")))?;
            match cur {
                None => cur = Some(idx),
                Some(ci) => {
                    expr = SpaceExpr::Fuse {
                        inner: Box::new(expr),
                        i: ci,
                        j: idx,
                    };
                    tags.remove(idx);
                    cur = Some(ci - usize::from(ci > idx));
                }
            }
        }
        if let Some(ci) = cur {
            tags[ci] = SlotTag::Vertex(v.id);
        }
    }
    let mut space = QHSpace::from_expr(format!("moduli({} vertices)", g.vertices.len()), expr)?;
    // human-readable block and slot names
    for (b, name) in space.blocks.iter_mut().zip(&block_names) {
        b.name = name.clone();
    }
    let mut vertex_slot = BTreeMap::new();
    let mut flavor_slot = BTreeMap::new();
    for (k, tag) in tags.iter().enumerate() {
        let name = match tag {
            SlotTag::Vertex(i) => {
                vertex_slot.insert(*i, k);
                format!("v{i}")
            }
            SlotTag::Flavor(i) => {
                flavor_slot.insert(*i, k);
                format!("w{i}")
            }
            other => format!("{other:?}"),
        };
        space.slot_names[k] = name;
    }
    Ok(AssembledSpace {
        space,
        vertex_slot,
        flavor_slot,
    })
}

/// Outcome of a moment-fiber solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiberSolution {
    pub success: bool,
    pub residual: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub point: Option<Point>,
}

fn fiber_residual(
    space: &QHSpace,
    x: &Point,
    target_inv: &[ComplexMatrix],
) -> Option<Vec<Complex64>> {
    let m = space.moment(x).ok()?;
    let mut out = Vec::new();
    for (ms, ti) in m.iter().zip(target_inv) {
        let r = &(ms * ti) - &ComplexMatrix::identity(ms.rows());
        out.extend(r.entries().iter().copied());
    }
    Some(out)
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

const FIBER_TOL: f64 = 1e-10;
const FIBER_RESTARTS: usize = 8;

/// Find a point with 𝔪(x) = target by Gauss–Newton least squares from
/// seeded random starts. Deterministic per seed; non-convergence is a
/// reported failure, not an error.
pub fn solve_moment_fiber(
    space: &QHSpace,
    target: &[ComplexMatrix],
    seed: u64,
    max_iter: usize,
) -> Result<FiberSolution> {
    if target.len() != space.slot_count() {
        return Err(Error::Slot(format!(
            "target has {} entries, space has {} slots",
            target.len(),
            space.slot_count()
        )));
    }
    for (t, &n) in target.iter().zip(&space.group.sizes) {
        if t.rows() != n || t.cols() != n {
            return Err(Error::ShapeMismatch("fiber target slot size".into()));
        }
    }
    let cfg = ToleranceConfig::default();
    let target_inv: Vec<ComplexMatrix> = target
        .iter()
        .map(linalg::inverse)
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    let mut total_iters = 0usize;
    for restart in 0..FIBER_RESTARTS {
        let mut x = space.random_point(&mut rng, 0.3);
        let mut r = match fiber_residual(space, &x, &target_inv) {
            Some(r) => r,
            None => continue,
        };
        for _ in 0..max_iter {
            total_iters += 1;
            let rn = vec_norm(&r);
            best = best.min(rn);
            if rn < FIBER_TOL {
                return Ok(FiberSolution {
                    success: true,
                    residual: rn,
                    iterations: total_iters,
                    restarts: restart,
                    point: Some(x),
                });
            }
            // Jacobian of the residual, column per ambient coordinate
            let rows = r.len();
            let mut jac = ComplexMatrix::zeros(rows, space.dim);
            let mut singular = false;
            for k in 0..space.dim {
                let dm = match space.moment_diff(&x, &space.basis_tangent(k)) {
                    Ok(dm) => dm,
                    Err(_) => {
                        singular = true;
                        break;
                    }
                };
                let mut row = 0;
                for (dms, ti) in dm.iter().zip(&target_inv) {
                    let col = dms * ti;
                    for z in col.entries() {
                        jac[(row, k)] = *z;
                        row += 1;
                    }
                }
            }
            if singular {
                break;
            }
            let mut rhs = ComplexMatrix::zeros(rows, 1);
            for (i, z) in r.iter().enumerate() {
                rhs[(i, 0)] = -*z;
            }
            let delta = linalg::lstsq(&jac, &rhs, &cfg)?;
            let step: Vec<Complex64> = (0..space.dim).map(|k| delta[(k, 0)]).collect();
            let dir = space.unflatten(&step);
            // backtracking line search
            let mut alpha = 1.0f64;
            let mut accepted = false;
            for _ in 0..24 {
                let cand = add_scaled(&x, &dir, alpha);
                if let Some(rc) = fiber_residual(space, &cand, &target_inv) {
                    if vec_norm(&rc) < rn {
                        x = cand;
                        r = rc;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }
    Ok(FiberSolution {
        success: false,
        residual: best,
        iterations: total_iters,
        restarts: FIBER_RESTARTS,
        point: None,
    })
}

/// Linearized quasi-Hamiltonian reduction data at a point of the moment
/// fiber.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReductionReport {
    pub moment_defect: f64,
    pub dm_rank: usize,
    pub ker_dm_dim: usize,
    pub orbit_rank: usize,
    pub gauged_group_dim: usize,
    pub stabilizer_dim: usize,
    pub reduced_dim: usize,
    pub reduced_form_rank: usize,
    pub nondegenerate: bool,
}

/// Compute the reduction report at `x`, gauging the listed slots: kernel of
/// d𝔪 restricted to those slots, orbit directions of their group, the
/// reduced tangent space, and the rank of ω on it.
pub fn reduction_report(
    space: &QHSpace,
    x: &Point,
    gauged_slots: &[usize],
    cfg: &ToleranceConfig,
) -> Result<ReductionReport> {
    for &s in gauged_slots {
        if s >= space.slot_count() {
            return Err(Error::Slot(format!("slot {s} out of range")));
        }
    }
    let m = space.moment(x)?;
    let mut defect: f64 = 0.0;
    for &s in gauged_slots {
        let d = (&m[s] - &ComplexMatrix::identity(m[s].rows())).frobenius_norm();
        defect = defect.max(d);
    }
    if defect > 1e-8 {
        return Err(Error::Precondition(format!(
            "moment defect {defect:.3e} on gauged slots exceeds 1e-8"
        )));
    }
    // d𝔪 restricted to gauged slots, as a matrix over the ambient basis
    let res_rows: usize = gauged_slots.iter().map(|&s| {
        let n = space.group.sizes[s];
        n * n
    }).sum();
    let mut dm_mat = ComplexMatrix::zeros(res_rows, space.dim);
    for k in 0..space.dim {
        let dm = space.moment_diff(x, &space.basis_tangent(k))?;
        let mut row = 0;
        for &s in gauged_slots {
            for z in dm[s].entries() {
                dm_mat[(row, k)] = *z;
                row += 1;
            }
        }
    }
    let dm_rank = linalg::rank(&dm_mat, cfg);
    let ker = linalg::null_space(&dm_mat, cfg);
    let ker_dim = ker.cols();
    // orbit directions of the gauged group
    let mut orbit_tangents = Vec::new();
    for &s in gauged_slots {
        let n = space.group.sizes[s];
        for p in 0..n {
            for q in 0..n {
                let xi = space.basis_xi(s, p, q);
                orbit_tangents.push(space.orbit_vector(x, &xi)?);
            }
        }
    }
    let gauged_group_dim = orbit_tangents.len();
    let orbit_cols = tangents_to_columns(space, &orbit_tangents);
    let orbit_rank = linalg::rank(&orbit_cols, cfg);
    // orbit image expressed in kernel coordinates
    let proj = &ker.adjoint() * &orbit_cols;
    let orbit_in_ker = linalg::rank(&proj, cfg);
    let complement = linalg::null_space(&proj.adjoint(), cfg);
    let reduced_basis = &ker * &complement;
    let reduced_dim = reduced_basis.cols();
    // Gram matrix of ω on the reduced basis
    let cols: Vec<Tangent> = (0..reduced_dim)
        .map(|c| {
            let v: Vec<Complex64> = (0..space.dim).map(|r| reduced_basis[(r, c)]).collect();
            space.unflatten(&v)
        })
        .collect();
    let mut gram = ComplexMatrix::zeros(reduced_dim, reduced_dim);
    for p in 0..reduced_dim {
        for q in (p + 1)..reduced_dim {
            let v = space.omega(x, &cols[p], &cols[q])?;
            gram[(p, q)] = v;
            gram[(q, p)] = -v;
        }
    }
    let reduced_form_rank = linalg::rank(&gram, cfg);
    Ok(ReductionReport {
        moment_defect: defect,
        dm_rank,
        ker_dm_dim: ker_dim,
        orbit_rank,
        gauged_group_dim,
        stabilizer_dim: gauged_group_dim - orbit_rank,
        reduced_dim,
        reduced_form_rank,
        nondegenerate: reduced_form_rank == reduced_dim && reduced_dim == ker_dim - orbit_in_ker,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::from_components;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn cartan_eta_matches_s3_sum() {
        // independent oracle: (1/12)·Σ_{σ∈S₃} sign(σ)·tr(ξ_{σ(1)}[ξ_{σ(2)},ξ_{σ(3)}])
        let g = &ComplexMatrix::identity(2)
            + &ComplexMatrix::from_real_rows(&[&[0.1, 0.2], &[-0.3, 0.05]]);
        let x = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let y = ComplexMatrix::from_real_rows(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let z = ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]);
        let got = cartan_eta(&g, &x, &y, &z).unwrap();
        let gi = linalg::inverse(&g).unwrap();
        let xs = [&gi * &x, &gi * &y, &gi * &z];
        let perms: [([usize; 3], f64); 6] = [
            ([0, 1, 2], 1.0),
            ([1, 2, 0], 1.0),
            ([2, 0, 1], 1.0),
            ([0, 2, 1], -1.0),
            ([2, 1, 0], -1.0),
            ([1, 0, 2], -1.0),
        ];
        let mut acc = c(0.0, 0.0);
        for (p, sgn) in perms {
            let bracket = &(&xs[p[1]] * &xs[p[2]]) - &(&xs[p[2]] * &xs[p[1]]);
            acc += Complex64::new(sgn / 12.0, 0.0) * (&xs[p[0]] * &bracket).trace();
        }
        assert!((got - acc).norm() < 1e-14);
        // antisymmetry: dependent arguments give zero
        let dep = cartan_eta(&g, &x, &x, &z).unwrap();
        assert!(dep.norm() < 1e-15);
        // abelian case vanishes
        let e1 = ComplexMatrix::scalar(c(2.0, 1.0));
        let t = ComplexMatrix::scalar(c(0.3, 0.0));
        assert!(cartan_eta(&e1, &t, &t, &t).unwrap().norm() < 1e-15);
    }

    #[test]
    fn double_moment_values() {
        let d = double(1).unwrap();
        let x = vec![
            ComplexMatrix::scalar(c(2.0, 0.0)),
            ComplexMatrix::scalar(c(3.0, 0.0)),
        ];
        let m = d.moment(&x).unwrap();
        assert!((m[0][(0, 0)] - c(6.0, 0.0)).norm() < 1e-15);
        assert!((m[1][(0, 0)] - c(1.0 / 6.0, 0.0)).norm() < 1e-15);
        let e = vec![ComplexMatrix::identity(2), ComplexMatrix::identity(2)];
        let d2 = double(2).unwrap();
        let m = d2.moment(&e).unwrap();
        assert!(m[0].approx_eq(&ComplexMatrix::identity(2), 1e-15));
        assert!(m[1].approx_eq(&ComplexMatrix::identity(2), 1e-15));
    }

    #[test]
    fn vdb_moment_values() {
        let v = vdb_space(1, 1).unwrap();
        let zero = vec![ComplexMatrix::zeros(1, 1), ComplexMatrix::zeros(1, 1)];
        let m = v.moment(&zero).unwrap();
        assert!((m[0][(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((m[1][(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        let x = vec![
            ComplexMatrix::scalar(c(2.0, 0.0)),
            ComplexMatrix::scalar(c(3.0, 0.0)),
        ];
        let m = v.moment(&x).unwrap();
        assert!((m[0][(0, 0)] - c(1.0 / 7.0, 0.0)).norm() < 1e-14);
        assert!((m[1][(0, 0)] - c(7.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn fused_double_commutator() {
        let f = fused_double(2).unwrap();
        let sx = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let sz = ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]);
        let m = f.moment(&vec![sx, sz]).unwrap();
        let minus_e = ComplexMatrix::identity(2).scale(c(-1.0, 0.0));
        assert!(m[0].approx_eq(&minus_e, 1e-14));
        let e = vec![ComplexMatrix::identity(2), ComplexMatrix::identity(2)];
        assert!(f.moment(&e).unwrap()[0].approx_eq(&ComplexMatrix::identity(2), 1e-15));
    }

    #[test]
    fn moment_equivariance() {
        let mut r = rng(17);
        for space in [
            double(2).unwrap(),
            fused_double(2).unwrap(),
            vdb_space(2, 3).unwrap(),
            extrinsic_fuse(double(2).unwrap(), double(2).unwrap(), 1, 0).unwrap(),
        ] {
            let x = space.random_point(&mut r, 0.2);
            let g: Vec<ComplexMatrix> = space
                .group
                .sizes
                .iter()
                .map(|&n| &ComplexMatrix::identity(n) + &random_block(&mut r, n, n, 0.3))
                .collect();
            let m_moved = space.moment(&space.action(&g, &x).unwrap()).unwrap();
            let m = space.moment(&x).unwrap();
            for s in 0..space.slot_count() {
                let conj = &(&g[s] * &m[s]) * &linalg::inverse(&g[s]).unwrap();
                assert!(
                    m_moved[s].approx_eq(&conj, 1e-10),
                    "space {} slot {s}",
                    space.name
                );
            }
        }
    }

    #[test]
    fn omega_antisymmetric_bilinear() {
        let mut r = rng(23);
        let space = fused_double(2).unwrap();
        let x = space.random_point(&mut r, 0.2);
        let xv = space.random_tangent(&mut r, 0.5);
        let yv = space.random_tangent(&mut r, 0.5);
        let zv = space.random_tangent(&mut r, 0.5);
        let w_xy = space.omega(&x, &xv, &yv).unwrap();
        let w_yx = space.omega(&x, &yv, &xv).unwrap();
        assert!((w_xy + w_yx).norm() < 1e-13);
        assert!(space.omega(&x, &xv, &xv).unwrap().norm() < 1e-13);
        // bilinearity
        let s = c(0.3, -0.8);
        let ys: Tangent = yv.iter().map(|m| m.scale(s)).collect();
        let sum: Tangent = yv.iter().zip(&zv).map(|(a, b)| a + b).collect();
        assert!((space.omega(&x, &xv, &ys).unwrap() - s * w_xy).norm() < 1e-13);
        assert!(
            (space.omega(&x, &xv, &sum).unwrap() - w_xy - space.omega(&x, &xv, &zv).unwrap())
                .norm()
                < 1e-13
        );
    }

    #[test]
    fn qh_axioms_double_1_exact() {
        let report = check_qh_axioms(&double(1).unwrap(), 5, 4, 1, &cfg()).unwrap();
        assert!(report.qh1_max_dual < 1e-14, "{report:?}");
        assert!(report.qh2_max < 1e-14, "{report:?}");
        assert!(report.qh3_pass(), "{report:?}");
    }

    #[test]
    fn qh_axioms_double_2() {
        let report = check_qh_axioms(&double(2).unwrap(), 6, 4, 2, &cfg()).unwrap();
        assert!(report.pass(), "{report:?}");
    }

    #[test]
    fn qh_axioms_fused_double_2() {
        let report = check_qh_axioms(&fused_double(2).unwrap(), 6, 4, 3, &cfg()).unwrap();
        assert!(report.pass(), "{report:?}");
    }

    #[test]
    fn qh_axioms_vdb() {
        let report = check_qh_axioms(&vdb_space(2, 2).unwrap(), 6, 4, 4, &cfg()).unwrap();
        assert!(report.pass(), "{report:?}");
        let report = check_qh_axioms(&vdb_space(1, 2).unwrap(), 5, 4, 5, &cfg()).unwrap();
        assert!(report.pass(), "{report:?}");
    }

    #[test]
    fn qh_axioms_extrinsic_fusion() {
        let space = extrinsic_fuse(double(2).unwrap(), double(2).unwrap(), 1, 0).unwrap();
        let report = check_qh_axioms(&space, 4, 3, 6, &cfg()).unwrap();
        assert!(report.pass(), "{report:?}");
    }

    #[test]
    fn fuse_of_double_is_fused_double() {
        let a = fuse(double(3).unwrap(), 0, 1).unwrap();
        let b = fused_double(3).unwrap();
        assert_eq!(a.expr, b.expr);
    }

    #[test]
    fn fusion_moment_is_ordered_product() {
        let mut r = rng(31);
        let d1 = double(2).unwrap();
        let d2 = double(2).unwrap();
        let fusedsp = extrinsic_fuse(d1, d2, 1, 0).unwrap();
        let prod = product(vec![double(2).unwrap(), double(2).unwrap()]).unwrap();
        let x = fusedsp.random_point(&mut r, 0.2);
        let mf = fusedsp.moment(&x).unwrap();
        let mp = prod.moment(&x).unwrap();
        // slots of the product: (l1, r1, l2, r2); fused (1 of first, 0 of
        // second) merges r1·l2 at position 1
        assert!(mf[0].approx_eq(&mp[0], 1e-13));
        assert!(mf[1].approx_eq(&(&mp[1] * &mp[2]), 1e-13));
        assert!(mf[2].approx_eq(&mp[3], 1e-13));
    }

    #[test]
    fn fusion_associative_on_moments() {
        for n in [1usize, 2] {
            let mut r = rng(40 + n as u64);
            let triple = product(vec![
                fused_double(n).unwrap(),
                fused_double(n).unwrap(),
                fused_double(n).unwrap(),
            ])
            .unwrap();
            let x = triple.random_point(&mut r, 0.2);
            let left = fuse(fuse(triple.clone(), 0, 1).unwrap(), 0, 1).unwrap();
            let right = fuse(fuse(triple.clone(), 1, 2).unwrap(), 0, 1).unwrap();
            let ml = left.moment(&x).unwrap();
            let mr = right.moment(&x).unwrap();
            assert!(ml[0].approx_eq(&mr[0], 1e-12));
        }
    }

    #[test]
    fn catalog_lookup() {
        assert_eq!(catalog("double(2)").unwrap().name, "double(2)");
        assert_eq!(catalog("fused_double(3)").unwrap().group.sizes, vec![3]);
        assert_eq!(catalog("vdb(1,2)").unwrap().group.sizes, vec![2, 1]);
        assert!(catalog("nonsense").is_none());
    }

    #[test]
    fn assemble_single_vertex_genus_g() {
        for (g_handles, n) in [(1u32, 2usize), (2, 2), (3, 1)] {
            let graph = from_components(&[(g_handles, 0)], &[], c(1.0, 0.0), &[]).unwrap();
            let dims = DimensionVector::uniform(&graph, n);
            let asm = assemble_moduli(&graph, &dims).unwrap();
            assert_eq!(asm.space.dim, 2 * g_handles as usize * n * n);
            assert_eq!(asm.space.group.sizes, vec![n]);
            let mut r = rng(100 + g_handles as u64);
            for _ in 0..5 {
                let x = asm.space.random_point(&mut r, 0.2);
                let m = asm.space.moment(&x).unwrap();
                // direct formula: ∏ [A_ν, B_ν]
                let mut direct = ComplexMatrix::identity(n);
                for h in 0..g_handles as usize {
                    let a = &x[2 * h];
                    let b = &x[2 * h + 1];
                    let comm = &(&(a * b) * &linalg::inverse(a).unwrap())
                        * &linalg::inverse(b).unwrap();
                    direct = &direct * &comm;
                }
                assert!(m[0].approx_eq(&direct, 1e-12));
            }
        }
    }

    #[test]
    fn assemble_pauli_point() {
        let graph = from_components(&[(1, 0)], &[], c(1.0, 0.0), &[]).unwrap();
        let asm = assemble_moduli(&graph, &DimensionVector::uniform(&graph, 2)).unwrap();
        let sx = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let sz = ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]);
        let m = asm.space.moment(&vec![sx, sz]).unwrap();
        assert!(m[0].approx_eq(&ComplexMatrix::identity(2).scale(c(-1.0, 0.0)), 1e-14));
    }

    #[test]
    fn assemble_a2_is_vdb() {
        let graph = from_components(&[(0, 0), (0, 0)], &[(0, 1)], c(1.0, 0.0), &[]).unwrap();
        let asm = assemble_moduli(&graph, &DimensionVector::uniform(&graph, 1)).unwrap();
        assert_eq!(asm.space.expr, SpaceExpr::Vdb { n1: 1, n2: 1 });
        let a = c(0.4, 0.1);
        let b = c(-0.2, 0.3);
        let m = asm
            .space
            .moment(&vec![ComplexMatrix::scalar(a), ComplexMatrix::scalar(b)])
            .unwrap();
        assert!((m[0][(0, 0)] - (c(1.0, 0.0) + a * b).inv()).norm() < 1e-15);
        assert!((m[1][(0, 0)] - (c(1.0, 0.0) + b * a)).norm() < 1e-15);
        // slot 0 is the target vertex (vertex 1), slot 1 the source (vertex 0)
        assert_eq!(asm.vertex_slot[&1], 0);
        assert_eq!(asm.vertex_slot[&0], 1);
    }

    #[test]
    fn assemble_dimension_matches_graph_formula() {
        let graph =
            from_components(&[(1, 0), (0, 0), (2, 1)], &[(0, 1), (1, 2), (2, 0)], c(0.5, 0.0), &[1])
                .unwrap();
        let mut dims = DimensionVector::uniform(&graph, 2);
        dims.v.insert(2, 1);
        dims.w.insert(1, 2);
        let asm = assemble_moduli(&graph, &dims).unwrap();
        assert_eq!(
            asm.space.dim,
            crate::curve::expected_moduli_dimension(&graph, &dims)
        );
        // one gauge slot per vertex, one flavor slot for the framed vertex
        assert_eq!(asm.vertex_slot.len(), 3);
        assert_eq!(asm.flavor_slot.len(), 1);
        assert_eq!(
            asm.space.slot_count(),
            asm.vertex_slot.len() + asm.flavor_slot.len()
        );
    }

    #[test]
    fn assembled_spaces_satisfy_axioms() {
        // a graph mixing handles, an edge, and a framing
        let graph = from_components(&[(1, 0), (0, 0)], &[(0, 1)], c(1.0, 0.0), &[1]).unwrap();
        let mut dims = DimensionVector::uniform(&graph, 2);
        dims.v.insert(1, 1);
        dims.w.insert(1, 1);
        let asm = assemble_moduli(&graph, &dims).unwrap();
        let report = check_qh_axioms(&asm.space, 3, 3, 7, &cfg()).unwrap();
        assert!(report.pass(), "{report:?}");
    }

    #[test]
    fn solve_fiber_double_identity() {
        let space = double(2).unwrap();
        let sol = solve_moment_fiber(&space, &space.identity_tuple(), 1, 60).unwrap();
        assert!(sol.success, "{sol:?}");
        assert!(sol.residual < 1e-10);
        let x = sol.point.unwrap();
        let m = space.moment(&x).unwrap();
        assert!(m[0].approx_eq(&ComplexMatrix::identity(2), 1e-9));
    }

    #[test]
    fn solve_fiber_pauli_commutator() {
        let space = fused_double(2).unwrap();
        let minus_e = ComplexMatrix::identity(2).scale(c(-1.0, 0.0));
        let sol = solve_moment_fiber(&space, &[minus_e.clone()], 2, 80).unwrap();
        assert!(sol.success, "{sol:?}");
        let x = sol.point.unwrap();
        let m = space.moment(&x).unwrap();
        assert!(m[0].approx_eq(&minus_e, 1e-9));
    }

    #[test]
    fn solve_fiber_determinant_obstruction() {
        // det [A,B] = 1 but det(i·e) = −1: no solution can exist
        let space = fused_double(2).unwrap();
        let target = ComplexMatrix::identity(2).scale(c(0.0, 1.0));
        let sol = solve_moment_fiber(&space, &[target], 3, 40).unwrap();
        assert!(!sol.success);
        assert!(sol.residual > 1e-3, "residual {}", sol.residual);
    }

    #[test]
    fn reduction_vdb_origin() {
        // at (0,0) the moment differential vanishes identically, so the
        // kernel is the whole 2-dim ambient space and nothing is quotiented
        let space = vdb_space(1, 1).unwrap();
        let x = vec![ComplexMatrix::zeros(1, 1), ComplexMatrix::zeros(1, 1)];
        let report = reduction_report(&space, &x, &[0, 1], &cfg()).unwrap();
        assert_eq!(report.dm_rank, 0);
        assert_eq!(report.ker_dm_dim, 2);
        assert_eq!(report.orbit_rank, 0);
        assert_eq!(report.reduced_dim, 2);
        assert!(report.nondegenerate, "{report:?}");
    }

    #[test]
    fn reduction_abelian_genus_two() {
        // 𝔪 ≡ e, d𝔪 = 0, orbit trivial: reduced space is the whole 4-dim
        // ambient space with a nondegenerate form
        let graph = from_components(&[(2, 0)], &[], c(1.0, 0.0), &[]).unwrap();
        let asm = assemble_moduli(&graph, &DimensionVector::uniform(&graph, 1)).unwrap();
        let mut r = rng(55);
        let x = asm.space.random_point(&mut r, 0.2);
        let report = reduction_report(&asm.space, &x, &[0], &cfg()).unwrap();
        assert_eq!(report.dm_rank, 0);
        assert_eq!(report.ker_dm_dim, 4);
        assert_eq!(report.orbit_rank, 0);
        assert_eq!(report.reduced_dim, 4);
        assert_eq!(report.reduced_form_rank, 4);
        assert!(report.nondegenerate);
    }

    #[test]
    fn reduction_genus_two_nonabelian() {
        let graph = from_components(&[(2, 0)], &[], c(1.0, 0.0), &[]).unwrap();
        let asm = assemble_moduli(&graph, &DimensionVector::uniform(&graph, 2)).unwrap();
        let sol =
            solve_moment_fiber(&asm.space, &asm.space.identity_tuple(), 4, 80).unwrap();
        assert!(sol.success, "{sol:?}");
        let x = sol.point.unwrap();
        let report = reduction_report(&asm.space, &x, &[0], &cfg()).unwrap();
        assert_eq!(report.reduced_dim % 2, 0);
        assert_eq!(report.reduced_form_rank, report.reduced_dim);
        assert!(report.nondegenerate, "{report:?}");
    }

    #[test]
    fn reduction_requires_moment_fiber() {
        let space = fused_double(2).unwrap();
        let mut r = rng(9);
        // a generic point is far from the identity fiber
        let x = space.random_point(&mut r, 0.4);
        match reduction_report(&space, &x, &[0], &cfg()) {
            Err(Error::Precondition(_)) => {}
            other => panic!("expected precondition error, got {other:?}"),
        }
    }

    #[test]
    fn fuse_size_mismatch_rejected() {
        assert!(extrinsic_fuse(double(2).unwrap(), double(3).unwrap(), 1, 0).is_err());
    }

    #[test]
    fn qh3_nondegenerate_on_identity_fiber() {
        // at 𝔪(x) = e: ker(Ad_e + 1) = 0, so ω must be nondegenerate
        let space = double(2).unwrap();
        let x = vec![ComplexMatrix::identity(2), ComplexMatrix::identity(2)];
        let gram = omega_gram(&space, &x).unwrap();
        assert_eq!(linalg::rank(&gram, &cfg()), space.dim);
    }
}
