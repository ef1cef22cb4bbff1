//! Forward-mode automatic differentiation over complex scalars, and a small
//! generic matrix type so moment maps and 2-forms can be evaluated both on
//! plain values and on (nested) dual numbers.
//!
//! `Dual<Dual<Complex64>>` arises when differentiating a 2-form whose
//! evaluation itself differentiates a moment map (fusion correction terms).

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Ring/field operations needed by the generic evaluators. Implemented by
/// `Complex64` and by `Dual<S>` for any implementor `S`.
pub trait Scalar:
    Clone
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_c64(z: Complex64) -> Self;
    /// Modulus of the value (of the primal part, for dual numbers); used for
    /// pivot selection in elimination.
    fn primal_modulus(&self) -> f64;
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_c64(z: Complex64) -> Self {
        z
    }
    fn primal_modulus(&self) -> f64 {
        self.norm()
    }
}

/// First-order dual number a + ε·b with ε² = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual<S> {
    pub re: S,
    pub du: S,
}

impl<S: Scalar> Dual<S> {
    pub fn new(re: S, du: S) -> Self {
        Dual { re, du }
    }

    pub fn constant(re: S) -> Self {
        Dual {
            re,
            du: S::zero(),
        }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Dual::new(self.re + rhs.re, self.du + rhs.du)
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Dual::new(self.re - rhs.re, self.du - rhs.du)
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Dual::new(
            self.re.clone() * rhs.re.clone(),
            self.re * rhs.du + self.du * rhs.re,
        )
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.re / rhs.re.clone();
        let du = (self.du - q.clone() * rhs.du) / rhs.re;
        Dual::new(q, du)
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.du)
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn zero() -> Self {
        Dual::constant(S::zero())
    }
    fn one() -> Self {
        Dual::constant(S::one())
    }
    fn from_c64(z: Complex64) -> Self {
        Dual::constant(S::from_c64(z))
    }
    fn primal_modulus(&self) -> f64 {
        self.re.primal_modulus()
    }
}

/// Dense matrix over a generic scalar, row-major. Sized for the small blocks
/// appearing in point layouts (n ≤ 6).
#[derive(Debug, Clone, PartialEq)]
pub struct GMat<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> GMat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        GMat {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        GMat { rows, cols, data }
    }

    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    pub fn from_complex(m: &ComplexMatrix) -> Self {
        Self::from_fn(m.rows(), m.cols(), |i, j| S::from_c64(m[(i, j)]))
    }

    pub fn matmul(&self, rhs: &GMat<S>) -> GMat<S> {
        assert_eq!(self.cols, rhs.rows, "inner dimension mismatch");
        GMat::from_fn(self.rows, rhs.cols, |i, j| {
            let mut acc = S::zero();
            for k in 0..self.cols {
                acc = acc + self.get(i, k).clone() * rhs.get(k, j).clone();
            }
            acc
        })
    }

    pub fn add(&self, rhs: &GMat<S>) -> GMat<S> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        GMat::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j).clone() + rhs.get(i, j).clone()
        })
    }

    pub fn sub(&self, rhs: &GMat<S>) -> GMat<S> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        GMat::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j).clone() - rhs.get(i, j).clone()
        })
    }

    pub fn neg(&self) -> GMat<S> {
        GMat::from_fn(self.rows, self.cols, |i, j| -self.get(i, j).clone())
    }

    pub fn scale(&self, s: &S) -> GMat<S> {
        GMat::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j).clone() * s.clone()
        })
    }

    pub fn trace(&self) -> S {
        let mut acc = S::zero();
        for i in 0..self.rows.min(self.cols) {
            acc = acc + self.get(i, i).clone();
        }
        acc
    }

    /// tr(self · rhs), without forming the product.
    pub fn trace_prod(&self, rhs: &GMat<S>) -> S {
        assert_eq!(self.cols, rhs.rows);
        assert_eq!(self.rows, rhs.cols);
        let mut acc = S::zero();
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc = acc + self.get(i, k).clone() * rhs.get(k, i).clone();
            }
        }
        acc
    }

    /// Gauss-Jordan inverse with partial pivoting on the primal modulus.
    pub fn inverse(&self) -> Result<GMat<S>> {
        assert_eq!(self.rows, self.cols, "inverse of non-square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut inv: GMat<S> = GMat::identity(n);
        for col in 0..n {
            let mut pivot = col;
            let mut best = a.get(col, col).primal_modulus();
            for r in (col + 1)..n {
                let m = a.get(r, col).primal_modulus();
                if m > best {
                    best = m;
                    pivot = r;
                }
            }
            if best == 0.0 {
                return Err(Error::Singular("generic inverse".into()));
            }
            if pivot != col {
                for j in 0..n {
                    a.data.swap(col * n + j, pivot * n + j);
                    inv.data.swap(col * n + j, pivot * n + j);
                }
            }
            let d = a.get(col, col).clone();
            for j in 0..n {
                a.set(col, j, a.get(col, j).clone() / d.clone());
                inv.set(col, j, inv.get(col, j).clone() / d.clone());
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = a.get(r, col).clone();
                for j in 0..n {
                    let av = a.get(r, j).clone() - factor.clone() * a.get(col, j).clone();
                    a.set(r, j, av);
                    let iv = inv.get(r, j).clone() - factor.clone() * inv.get(col, j).clone();
                    inv.set(r, j, iv);
                }
            }
        }
        Ok(inv)
    }
}

impl GMat<Complex64> {
    pub fn to_complex(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.rows, self.cols, |i, j| *self.get(i, j))
    }
}

/// Pair a value matrix with a tangent seed: entries re + ε·du.
pub fn seed<S: Scalar>(value: &GMat<S>, tangent: &GMat<S>) -> GMat<Dual<S>> {
    assert_eq!((value.rows, value.cols), (tangent.rows, tangent.cols));
    GMat::from_fn(value.rows, value.cols, |i, j| {
        Dual::new(value.get(i, j).clone(), tangent.get(i, j).clone())
    })
}

/// Lift a matrix to dual numbers with zero tangent.
pub fn lift<S: Scalar>(value: &GMat<S>) -> GMat<Dual<S>> {
    GMat::from_fn(value.rows, value.cols, |i, j| {
        Dual::constant(value.get(i, j).clone())
    })
}

/// Extract the tangent (ε) part.
pub fn tangent_part<S: Scalar>(m: &GMat<Dual<S>>) -> GMat<S> {
    GMat::from_fn(m.rows, m.cols, |i, j| m.get(i, j).du.clone())
}

/// Extract the value part.
pub fn value_part<S: Scalar>(m: &GMat<Dual<S>>) -> GMat<S> {
    GMat::from_fn(m.rows, m.cols, |i, j| m.get(i, j).re.clone())
}
