//! Dense complex linear algebra: the `ComplexMatrix` carrier type, eigenvalues,
//! rank/solve, and primary matrix functions with explicit branch control.
//!
//! Matrix functions are computed from a Schur decomposition with eigenvalue
//! clustering: clustered eigenvalues are grouped into contiguous diagonal
//! blocks (by unitary reordering), each atomic block is evaluated by a shifted
//! Taylor series, and off-diagonal blocks follow from the block Parlett
//! recurrence (Sylvester equations).

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI_I: Complex64 = Complex64::new(0.0, 2.0 * PI);

/// Tolerances used by identity checks, rank decisions and differentiated
/// quantities throughout the crate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Relative Frobenius tolerance for identity checks.
    pub eq_tol: f64,
    /// Relative singular-value cutoff for rank decisions.
    pub rank_tol: f64,
    /// Tolerance for differentiated quantities.
    pub fd_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            eq_tol: 1e-10,
            rank_tol: 1e-8,
            fd_tol: 1e-6,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eq_tol > 0.0 && self.rank_tol > 0.0 && self.fd_tol > 0.0 {
            Ok(())
        } else {
            Err(Error::Precondition("tolerances must be positive".into()))
        }
    }
}

/// Dense complex matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

/// Multiset of eigenvalues with algebraic multiplicities, in a canonical order
/// (lexicographic by real part, then imaginary part).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
}

impl Spectrum {
    fn from_unsorted(mut eigs: Vec<Complex64>) -> Self {
        eigs.sort_by(|a, b| {
            a.re.partial_cmp(&b.re)
                .unwrap()
                .then(a.im.partial_cmp(&b.im).unwrap())
        });
        Spectrum { eigenvalues: eigs }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "expected {} entries for {}x{}, got {}",
                rows * cols,
                rows,
                cols,
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Precondition("non-finite matrix entry".into()));
        }
        Ok(ComplexMatrix {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            entries: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn scalar(z: Complex64) -> Self {
        ComplexMatrix {
            rows: 1,
            cols: 1,
            entries: vec![z],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        ComplexMatrix {
            rows,
            cols,
            entries,
        }
    }

    /// Build from real entries, row-major rows.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r > 0 { rows[0].len() } else { 0 };
        Self::from_fn(r, c, |i, j| Complex64::new(rows[i][j], 0.0))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&self, z: Complex64) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| e * z).collect(),
        }
    }

    /// Relative Frobenius distance: ‖a−b‖ / max(1, ‖a‖, ‖b‖).
    pub fn rel_dist(&self, other: &ComplexMatrix) -> f64 {
        let denom = 1f64.max(self.frobenius_norm()).max(other.frobenius_norm());
        (self - other).frobenius_norm() / denom
    }

    pub fn approx_eq(&self, other: &ComplexMatrix, tol: f64) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.rel_dist(other) <= tol
    }

    pub fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }

    pub fn from_nalgebra(m: &DMatrix<Complex64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.entries[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.entries[i * self.cols + j]
    }
}

macro_rules! elementwise {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait for &ComplexMatrix {
            type Output = ComplexMatrix;
            fn $method(self, rhs: &ComplexMatrix) -> ComplexMatrix {
                assert_eq!(self.rows, rhs.rows, "row mismatch");
                assert_eq!(self.cols, rhs.cols, "col mismatch");
                ComplexMatrix {
                    rows: self.rows,
                    cols: self.cols,
                    entries: self
                        .entries
                        .iter()
                        .zip(&rhs.entries)
                        .map(|(a, b)| a $op b)
                        .collect(),
                }
            }
        }
    };
}

elementwise!(Add, add, +);
elementwise!(Sub, sub, -);

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "inner dimension mismatch");
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += aik * rhs[(k, j)];
                }
            }
        }
        out
    }
}

// JSON encoding: {"rows": r, "cols": c, "entries": [[re, im], ...]} row-major.
#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    entries: Vec<[f64; 2]>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MatrixJson::deserialize(d)?;
        ComplexMatrix::new(
            raw.rows,
            raw.cols,
            raw.entries
                .iter()
                .map(|[re, im]| Complex64::new(*re, *im))
                .collect(),
        )
        .map_err(serde::de::Error::custom)
    }
}

/// Scalar function specification for primary matrix functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarFunction {
    /// z ↦ e^z
    Exp,
    /// φ(z) = (e^{2πiz} − 1)/z, with the removable singularity filled in:
    /// φ(0) = 2πi.
    Phi,
    /// Principal-strip logarithm with arg ∈ [0, 2π), cut along the positive
    /// real axis approached from below.
    LogBranch02Pi,
}

/// arg z normalized to [0, 2π).
fn arg_0_2pi(z: Complex64) -> f64 {
    let a = z.arg();
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

/// log with arg ∈ [0, 2π).
pub fn log_scalar_0_2pi(z: Complex64) -> Complex64 {
    Complex64::new(z.norm().ln(), arg_0_2pi(z))
}

/// Scalar φ, switching to the power series near the removable singularity.
pub fn phi_scalar(z: Complex64) -> Complex64 {
    if z.norm() < 1e-3 {
        // φ(z) = Σ_{k≥0} (2πi)^{k+1} z^k / (k+1)!
        let mut sum = Complex64::new(0.0, 0.0);
        let mut coeff = TWO_PI_I; // (2πi)^{k+1} / (k+1)!
        let mut zk = Complex64::new(1.0, 0.0);
        for k in 0..30 {
            sum += coeff * zk;
            zk *= z;
            coeff *= TWO_PI_I / ((k + 2) as f64);
        }
        sum
    } else {
        ((TWO_PI_I * z).exp() - 1.0) / z
    }
}

impl ScalarFunction {
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        match self {
            ScalarFunction::Exp => Ok(z.exp()),
            ScalarFunction::Phi => Ok(phi_scalar(z)),
            ScalarFunction::LogBranch02Pi => {
                if z.norm() == 0.0 {
                    Err(Error::FunctionDomain(z, "log of zero".into()))
                } else {
                    Ok(log_scalar_0_2pi(z))
                }
            }
        }
    }

    /// Check analyticity of the function at every eigenvalue. For the branch
    /// log this rejects eigenvalues within `cut_tol` (relative) of the cut
    /// along the positive real axis.
    fn check_domain(&self, eigs: &[Complex64], cut_tol: f64) -> Result<()> {
        match self {
            ScalarFunction::Exp | ScalarFunction::Phi => Ok(()),
            ScalarFunction::LogBranch02Pi => {
                for &z in eigs {
                    let r = z.norm();
                    if r < cut_tol {
                        return Err(Error::Singular(format!("eigenvalue {z} ~ 0 in log")));
                    }
                    // Distance to the cut {x > 0, approached from below}:
                    // near the positive real axis with arg just below 2π.
                    let a = arg_0_2pi(z);
                    if z.re > 0.0 && (2.0 * PI - a) * r < cut_tol * r.max(1.0) && a > PI {
                        return Err(Error::BranchCut(z));
                    }
                }
                Ok(())
            }
        }
    }

    /// Taylor coefficients a_k = f^{(k)}(mu)/k! for k = 0..terms.
    fn taylor_coeffs(&self, mu: Complex64, terms: usize) -> Result<Vec<Complex64>> {
        let mut coeffs = Vec::with_capacity(terms);
        match self {
            ScalarFunction::Exp => {
                let mut c = mu.exp();
                for k in 0..terms {
                    coeffs.push(c);
                    c /= (k + 1) as f64;
                }
            }
            ScalarFunction::LogBranch02Pi => {
                if mu.norm() == 0.0 {
                    return Err(Error::Singular("log expansion at zero".into()));
                }
                coeffs.push(log_scalar_0_2pi(mu));
                // log(mu + h) = log(mu) + Σ_{k≥1} (−1)^{k−1} h^k / (k mu^k)
                let mut pow = Complex64::new(1.0, 0.0);
                for k in 1..terms {
                    pow /= mu;
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    coeffs.push(pow * sign / k as f64);
                }
            }
            ScalarFunction::Phi => {
                // Numerator n(h) = e^{2πi mu} e^{2πi h} − 1, denominator mu + h.
                let c = (TWO_PI_I * mu).exp();
                let mut num = Vec::with_capacity(terms);
                let mut fac = Complex64::new(1.0, 0.0); // (2πi)^k / k!
                for k in 0..terms {
                    let nk = if k == 0 { c - 1.0 } else { c * fac };
                    num.push(nk);
                    fac *= TWO_PI_I / ((k + 1) as f64);
                }
                if mu.norm() >= 0.5 {
                    // Divide the series by (mu + h).
                    let mut prev = Complex64::new(0.0, 0.0);
                    for nk in num {
                        let q = (nk - prev) / mu;
                        coeffs.push(q);
                        prev = q;
                    }
                } else {
                    // Close to the removable singularity: expand φ's entire
                    // series at 0 and re-center at mu by binomial shifting.
                    let n_base = terms + 25;
                    let mut base = Vec::with_capacity(n_base);
                    let mut coeff = TWO_PI_I;
                    for k in 0..n_base {
                        base.push(coeff);
                        coeff *= TWO_PI_I / ((k + 2) as f64);
                    }
                    // a_k(mu) = Σ_{j≥k} C(j,k) base_j mu^{j−k}
                    for k in 0..terms {
                        let mut sum = Complex64::new(0.0, 0.0);
                        let mut binom = 1.0f64;
                        let mut mupow = Complex64::new(1.0, 0.0);
                        for j in k..n_base {
                            sum += base[j] * binom * mupow;
                            binom *= (j + 1) as f64 / (j + 1 - k) as f64;
                            mupow *= mu;
                        }
                        coeffs.push(sum);
                    }
                }
            }
        }
        Ok(coeffs)
    }
}

fn schur(m: &ComplexMatrix) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    if m.rows == 1 {
        return Ok((DMatrix::identity(1, 1), m.to_nalgebra()));
    }
    let nm = m.to_nalgebra();
    if let Some(s) = nalgebra::linalg::Schur::try_new(nm.clone(), 1e-14, 10_000) {
        let (q, t) = s.unpack();
        return Ok((q, t));
    }
    // The QR iteration's relative convergence test stalls on matrices with
    // near-zero diagonal; Schur is shift-invariant, so retry shifted.
    let n = m.rows;
    let shift = Complex64::new(1.0 + m.frobenius_norm(), 0.0);
    let shifted = &nm + DMatrix::from_diagonal_element(n, n, shift);
    let s = nalgebra::linalg::Schur::try_new(shifted, 1e-14, 10_000).ok_or(Error::SchurFailed)?;
    let (q, mut t) = s.unpack();
    for i in 0..n {
        t[(i, i)] -= shift;
    }
    Ok((q, t))
}

/// Eigenvalues with algebraic multiplicity, via the Schur decomposition.
pub fn eigenvalues(m: &ComplexMatrix) -> Result<Spectrum> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    if m.rows == 0 {
        return Ok(Spectrum {
            eigenvalues: vec![],
        });
    }
    let (_, t) = schur(m)?;
    Ok(Spectrum::from_unsorted(
        (0..m.rows).map(|i| t[(i, i)]).collect(),
    ))
}

/// Swap the diagonal entries at positions (k, k+1) of an upper-triangular
/// complex Schur factor by a unitary similarity, updating q accordingly.
fn swap_adjacent(t: &mut DMatrix<Complex64>, q: &mut DMatrix<Complex64>, k: usize) {
    let t11 = t[(k, k)];
    let t12 = t[(k, k + 1)];
    let t22 = t[(k + 1, k + 1)];
    // Eigenvector of [[t11, t12], [0, t22]] for t22 is (t12, t22 − t11).
    let x1 = t12;
    let x2 = t22 - t11;
    let r = (x1.norm_sqr() + x2.norm_sqr()).sqrt();
    if r == 0.0 {
        return; // identical eigenvalues and no coupling, nothing to do
    }
    let g11 = x1 / r;
    let g21 = x2 / r;
    // G = [[g11, −conj(g21)], [g21, conj(g11)]] is unitary with G e1 = x/r.
    let g12 = -g21.conj();
    let g22 = g11.conj();
    let n = t.nrows();
    // T ← G^H T (rows k, k+1)
    for j in 0..n {
        let a = t[(k, j)];
        let b = t[(k + 1, j)];
        t[(k, j)] = g11.conj() * a + g21.conj() * b;
        t[(k + 1, j)] = g12.conj() * a + g22.conj() * b;
    }
    // T ← T G (cols k, k+1)
    for i in 0..n {
        let a = t[(i, k)];
        let b = t[(i, k + 1)];
        t[(i, k)] = a * g11 + b * g21;
        t[(i, k + 1)] = a * g12 + b * g22;
    }
    // Q ← Q G
    for i in 0..n {
        let a = q[(i, k)];
        let b = q[(i, k + 1)];
        q[(i, k)] = a * g11 + b * g21;
        q[(i, k + 1)] = a * g12 + b * g22;
    }
    t[(k + 1, k)] = Complex64::new(0.0, 0.0);
}

/// Group diagonal entries into clusters of nearby eigenvalues (gap below
/// `delta`, transitively), and reorder the Schur form so clusters occupy
/// contiguous diagonal blocks. Returns block extents.
///
/// With `relative` set, the gap is measured relative to the smaller of the
/// two moduli. Entire functions converge on any cluster, so absolute
/// clustering is safe for them, but the log's Taylor series only converges
/// on clusters that are tight relative to their distance from the origin.
fn cluster_and_reorder(
    t: &mut DMatrix<Complex64>,
    q: &mut DMatrix<Complex64>,
    delta: f64,
    relative: bool,
) -> Vec<usize> {
    let n = t.nrows();
    // Union-find on eigenvalue proximity.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (t[(i, i)] - t[(j, j)]).norm();
            let thresh = if relative {
                delta * t[(i, i)].norm().min(t[(j, j)].norm())
            } else {
                delta
            };
            if gap < thresh {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    // Cluster ids in order of first appearance along the diagonal.
    let mut cluster_of = vec![0usize; n];
    let mut seen: Vec<usize> = vec![];
    for i in 0..n {
        let r = find(&mut parent, i);
        let id = match seen.iter().position(|&s| s == r) {
            Some(p) => p,
            None => {
                seen.push(r);
                seen.len() - 1
            }
        };
        cluster_of[i] = id;
    }
    // Bubble sort by cluster id using unitary adjacent swaps.
    loop {
        let mut swapped = false;
        for k in 0..n.saturating_sub(1) {
            if cluster_of[k] > cluster_of[k + 1] {
                swap_adjacent(t, q, k);
                cluster_of.swap(k, k + 1);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
    // Block sizes in diagonal order.
    let mut blocks = vec![];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && cluster_of[j] == cluster_of[i] {
            j += 1;
        }
        blocks.push(j - i);
        i = j;
    }
    blocks
}

/// f applied to an atomic triangular block with clustered eigenvalues, by a
/// Taylor expansion about the mean eigenvalue.
fn atomic_block(f: ScalarFunction, t: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let m = t.nrows();
    if m == 1 {
        return Ok(DMatrix::from_element(1, 1, f.eval(t[(0, 0)])?));
    }
    let mu: Complex64 = (0..m).map(|i| t[(i, i)]).sum::<Complex64>() / m as f64;
    let shifted = t - DMatrix::from_diagonal_element(m, m, mu);
    let max_terms = 120usize;
    let coeffs = f.taylor_coeffs(mu, max_terms)?;
    let mut result = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    let mut power = DMatrix::identity(m, m);
    let mut small_streak = 0;
    for (k, &a) in coeffs.iter().enumerate() {
        let term = &power * a;
        result += &term;
        let tn = term.norm();
        if k >= m && tn <= 1e-18 * result.norm().max(1.0) {
            small_streak += 1;
            if small_streak >= 3 {
                break;
            }
        } else {
            small_streak = 0;
        }
        power *= &shifted;
    }
    if result.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::FunctionDomain(
            mu,
            "Taylor series diverged on an atomic block".into(),
        ));
    }
    Ok(result)
}

/// Solve the small Sylvester equation A X − X B = C by vectorization.
fn sylvester(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    c: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    let (p, r) = (a.nrows(), b.nrows());
    let n = p * r;
    let mut big = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    // vec by rows: X index (i, j) -> i*r + j.
    for i in 0..p {
        for j in 0..r {
            let row = i * r + j;
            for k in 0..p {
                big[(row, k * r + j)] += a[(i, k)];
            }
            for l in 0..r {
                big[(row, i * r + l)] -= b[(l, j)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_fn(n, |idx, _| c[(idx / r, idx % r)]);
    let lu = big.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("sylvester system".into()))?;
    Ok(DMatrix::from_fn(p, r, |i, j| sol[i * r + j]))
}

/// Primary matrix function f(M) via Schur decomposition, eigenvalue clustering
/// and the block Parlett recurrence.
pub fn matrix_function(m: &ComplexMatrix, f: ScalarFunction) -> Result<ComplexMatrix> {
    matrix_function_cfg(m, f, &ToleranceConfig::default())
}

pub fn matrix_function_cfg(
    m: &ComplexMatrix,
    f: ScalarFunction,
    cfg: &ToleranceConfig,
) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    let n = m.rows;
    if n == 0 {
        return Ok(ComplexMatrix::zeros(0, 0));
    }
    let (mut q, mut t) = schur(m)?;
    let eigs: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    f.check_domain(&eigs, cfg.rank_tol)?;
    let blocks = cluster_and_reorder(
        &mut t,
        &mut q,
        0.1,
        matches!(f, ScalarFunction::LogBranch02Pi),
    );
    // Block offsets.
    let mut offs = vec![0usize];
    for b in &blocks {
        offs.push(offs.last().unwrap() + b);
    }
    let nb = blocks.len();
    let block =
        |t: &DMatrix<Complex64>, bi: usize, bj: usize| t.view((offs[bi], offs[bj]), (blocks[bi], blocks[bj])).into_owned();
    let mut fmat = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    // Diagonal blocks.
    for bi in 0..nb {
        let fb = atomic_block(f, &block(&t, bi, bi))?;
        fmat.view_mut((offs[bi], offs[bi]), (blocks[bi], blocks[bi]))
            .copy_from(&fb);
    }
    // Superdiagonals via the block Parlett recurrence.
    for d in 1..nb {
        for bi in 0..(nb - d) {
            let bj = bi + d;
            let tii = block(&t, bi, bi);
            let tjj = block(&t, bj, bj);
            let mut rhs = &block(&fmat, bi, bi) * &block(&t, bi, bj)
                - &block(&t, bi, bj) * &block(&fmat, bj, bj);
            for bk in (bi + 1)..bj {
                rhs += &block(&fmat, bi, bk) * &block(&t, bk, bj)
                    - &block(&t, bi, bk) * &block(&fmat, bk, bj);
            }
            let fij = sylvester(&tii, &tjj, &rhs)?;
            fmat.view_mut((offs[bi], offs[bj]), (blocks[bi], blocks[bj]))
                .copy_from(&fij);
        }
    }
    let result = &q * fmat * q.adjoint();
    ComplexMatrix::new(
        n,
        n,
        (0..n * n)
            .map(|idx| result[(idx / n, idx % n)])
            .collect(),
    )
}

/// Matrix logarithm L with exp(L) = M and every eigenvalue of L of the form
/// ln|μ| + i·arg μ with arg μ ∈ [0, 2π).
pub fn log_branch_arg0_2pi(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    log_branch_arg0_2pi_cfg(m, &ToleranceConfig::default())
}

pub fn log_branch_arg0_2pi_cfg(m: &ComplexMatrix, cfg: &ToleranceConfig) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    if m.rows > 0 && !is_invertible(m, cfg) {
        return Err(Error::Singular("log of a singular matrix".into()));
    }
    let l = matrix_function_cfg(m, ScalarFunction::LogBranch02Pi, cfg)?;
    // Escalate branch-cut trouble to an error. A healthy primary log
    // reconstructs M to near machine precision (relatively), while a cluster
    // straddling the cut produces O(1) relative residuals, so a loose
    // relative threshold separates the two regimes without rejecting
    // moderately conditioned inputs.
    let back = matrix_function_cfg(&l, ScalarFunction::Exp, cfg)?;
    if back.rel_dist(m) > cfg.fd_tol {
        return Err(Error::Singular(format!(
            "log residual {:.3e} too large (eigenvalue near branch cut?)",
            back.rel_dist(m)
        )));
    }
    Ok(l)
}

/// Singular values of M (descending).
pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    if m.rows == 0 || m.cols == 0 {
        return vec![];
    }
    let sv = m.to_nalgebra().singular_values();
    let mut v: Vec<f64> = sv.iter().copied().collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

/// Numerical rank with relative singular-value cutoff `cfg.rank_tol`.
pub fn rank(m: &ComplexMatrix, cfg: &ToleranceConfig) -> usize {
    let sv = singular_values(m);
    match sv.first() {
        None => 0,
        // a matrix that is numerically zero outright has rank 0 even though
        // its largest singular value is a nonzero rounding residue
        Some(&s0) if s0 <= cfg.rank_tol => 0,
        Some(&s0) => sv.iter().filter(|&&s| s > cfg.rank_tol * s0).count(),
    }
}

pub fn is_invertible(m: &ComplexMatrix, cfg: &ToleranceConfig) -> bool {
    m.is_square() && rank(m, cfg) == m.rows
}

/// Solve AX = B.
pub fn solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    if a.rows != b.rows {
        return Err(Error::ShapeMismatch(format!(
            "solve: A is {}x{} but B has {} rows",
            a.rows, a.cols, b.rows
        )));
    }
    if a.rows == 0 {
        return Ok(ComplexMatrix::zeros(0, b.cols));
    }
    let lu = a.to_nalgebra().lu();
    let x = lu
        .solve(&b.to_nalgebra())
        .ok_or_else(|| Error::Singular("solve on singular A".into()))?;
    Ok(ComplexMatrix::from_nalgebra(&x))
}

/// Matrix inverse.
pub fn inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    solve(a, &ComplexMatrix::identity(a.rows))
}

fn svd_rank(sv: &[f64], rank_tol: f64) -> usize {
    match sv.first() {
        None => 0,
        Some(&s0) if s0 <= rank_tol => 0,
        Some(&s0) => sv.iter().filter(|&&s| s > rank_tol * s0).count(),
    }
}

/// Orthonormal basis (columns) of the null space of M, cutoff `rank_tol`
/// relative to the largest singular value.
pub fn null_space(m: &ComplexMatrix, cfg: &ToleranceConfig) -> ComplexMatrix {
    let n = m.cols;
    if m.rows == 0 || n == 0 {
        return ComplexMatrix::identity(n);
    }
    let svd = m.to_nalgebra().svd(false, true);
    let v_t = svd.v_t.expect("svd with v_t requested");
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let r = svd_rank(&sv, cfg.rank_tol);
    // rows of v_t are ordered by descending singular value; rows beyond the
    // rank (plus the cols not covered by v_t when rows < cols) span ker M
    let k = v_t.nrows();
    let mut cols: Vec<Complex64> = Vec::new();
    let mut count = 0;
    for row in r..k {
        for j in 0..n {
            cols.push(v_t[(row, j)].conj());
        }
        count += 1;
    }
    // v_t from nalgebra's thin SVD has min(rows, cols) rows; any remaining
    // directions are completed by projecting the standard basis
    let mut basis = ComplexMatrix::zeros(n, count);
    for (c_idx, chunk) in cols.chunks(n).enumerate() {
        for (j, z) in chunk.iter().enumerate() {
            basis[(j, c_idx)] = *z;
        }
    }
    if k < n {
        basis = complete_basis(m, &basis, cfg);
    }
    basis
}

/// Extend `partial` (orthonormal columns, all in ker M) to a full orthonormal
/// basis of ker M by Gram–Schmidt over projected standard basis vectors.
fn complete_basis(m: &ComplexMatrix, partial: &ComplexMatrix, cfg: &ToleranceConfig) -> ComplexMatrix {
    let n = m.cols;
    let mut vecs: Vec<Vec<Complex64>> = (0..partial.cols)
        .map(|c| (0..n).map(|j| partial[(j, c)]).collect())
        .collect();
    let target = n - rank(m, cfg);
    let mm = m.to_nalgebra();
    'cand: for e in 0..n {
        if vecs.len() >= target {
            break;
        }
        let mut v: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n];
        v[e] = Complex64::new(1.0, 0.0);
        // must lie in ker M
        let as_vec = nalgebra::DVector::from_iterator(n, v.iter().copied());
        if (&mm * &as_vec).norm() > cfg.rank_tol * 10.0 {
            continue 'cand;
        }
        for q in &vecs {
            let dot: Complex64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= dot * qi;
            }
        }
        let nrm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm > cfg.rank_tol {
            for vi in v.iter_mut() {
                *vi /= Complex64::new(nrm, 0.0);
            }
            vecs.push(v);
        }
    }
    let mut out = ComplexMatrix::zeros(n, vecs.len());
    for (c, v) in vecs.iter().enumerate() {
        for (j, z) in v.iter().enumerate() {
            out[(j, c)] = *z;
        }
    }
    out
}

/// Orthonormal basis (columns) of the column space of M.
pub fn column_space(m: &ComplexMatrix, cfg: &ToleranceConfig) -> ComplexMatrix {
    if m.rows == 0 || m.cols == 0 {
        return ComplexMatrix::zeros(m.rows, 0);
    }
    let svd = m.to_nalgebra().svd(true, false);
    let u = svd.u.expect("svd with u requested");
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let r = svd_rank(&sv, cfg.rank_tol);
    let mut out = ComplexMatrix::zeros(m.rows, r);
    for c in 0..r {
        for j in 0..m.rows {
            out[(j, c)] = u[(j, c)];
        }
    }
    out
}

/// Minimal-norm least-squares solution of AX ≈ B via the SVD pseudo-inverse.
pub fn lstsq(a: &ComplexMatrix, b: &ComplexMatrix, cfg: &ToleranceConfig) -> Result<ComplexMatrix> {
    if a.rows != b.rows {
        return Err(Error::ShapeMismatch(format!(
            "lstsq: A is {}x{} but B has {} rows",
            a.rows, a.cols, b.rows
        )));
    }
    if a.rows == 0 || a.cols == 0 {
        return Ok(ComplexMatrix::zeros(a.cols, b.cols));
    }
    let svd = a.to_nalgebra().svd(true, true);
    let x = svd
        .solve(&b.to_nalgebra(), cfg.rank_tol * svd.singular_values.max())
        .map_err(|e| Error::Singular(e.to_string()))?;
    Ok(ComplexMatrix::from_nalgebra(&x))
}

/// Cosines of the principal angles between the column spans of two matrices
/// with orthonormal columns (descending; all ≈ 1 iff the spans coincide).
pub fn principal_angle_cosines(q1: &ComplexMatrix, q2: &ComplexMatrix) -> Vec<f64> {
    let prod = &q1.adjoint() * q2;
    singular_values(&prod)
}
