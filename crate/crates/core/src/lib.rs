//! Linear-algebra toolkit for representations of multiplicative preprojective
//! algebras attached to nodal curves, the local (Φ,Ψ)/(u,v) node calculus with
//! Fourier and Malgrange transforms, and quasi-Hamiltonian moduli spaces built
//! from group-valued moment maps.

pub mod curve;
pub mod diagrams;
pub mod dual;
pub mod error;
pub mod linalg;
pub mod mpa;
pub mod qham;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, Spectrum, ToleranceConfig};
