//! The local calculus at a node: (Φ,Ψ)-diagrams, (u,v)-diagrams, the Fourier
//! transform in both descriptions, and the correspondence between them given
//! by b = φ(vu)·v with φ(z) = (e^{2πiz} − 1)/z.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, inverse, log_branch_arg0_2pi_cfg, matrix_function_cfg, ComplexMatrix, ScalarFunction,
    ToleranceConfig, TWO_PI_I,
};

/// Diagram Φ ⇄ Ψ with a: Φ→Ψ and b: Ψ→Φ, such that 1_Ψ + ab is invertible
/// (then 1_Φ + ba is automatically invertible).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiPsiDiagram {
    /// Φ→Ψ, shape (dim Ψ) × (dim Φ).
    pub a: ComplexMatrix,
    /// Ψ→Φ, shape (dim Φ) × (dim Ψ).
    pub b: ComplexMatrix,
}

/// Diagram E ⇄ F with u: E→F and v: F→E, normalized so all eigenvalues of
/// v·u and −u·v lie in the strip Re ∈ [0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UVDiagram {
    /// E→F, shape (dim F) × (dim E).
    pub u: ComplexMatrix,
    /// F→E, shape (dim E) × (dim F).
    pub v: ComplexMatrix,
}

/// De Rham data at a node: the operators u, v together with the residues the
/// connection claims at the two branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeRhamNodeData {
    pub u: ComplexMatrix,
    pub v: ComplexMatrix,
    pub res_source: ComplexMatrix,
    pub res_target: ComplexMatrix,
}

/// Tagged wire format for diagrams.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagram {
    PhiPsi(PhiPsiDiagram),
    Uv(UVDiagram),
    DerhamNode(DeRhamNodeData),
}

impl PhiPsiDiagram {
    pub fn new(a: ComplexMatrix, b: ComplexMatrix) -> Result<Self> {
        let d = PhiPsiDiagram { a, b };
        d.check_shapes()?;
        Ok(d)
    }

    pub fn dim_phi(&self) -> usize {
        self.a.cols()
    }

    pub fn dim_psi(&self) -> usize {
        self.a.rows()
    }

    fn check_shapes(&self) -> Result<()> {
        if self.b.rows() != self.a.cols() || self.b.cols() != self.a.rows() {
            return Err(Error::ShapeMismatch(format!(
                "a is {}x{} but b is {}x{}",
                self.a.rows(),
                self.a.cols(),
                self.b.rows(),
                self.b.cols()
            )));
        }
        Ok(())
    }

    /// 1_Ψ + ab must be invertible.
    pub fn validate(&self, cfg: &ToleranceConfig) -> Result<()> {
        self.check_shapes()?;
        let t_psi = &ComplexMatrix::identity(self.dim_psi()) + &(&self.a * &self.b);
        if !linalg::is_invertible(&t_psi, cfg) {
            return Err(Error::Singular("1 + ab is not invertible".into()));
        }
        Ok(())
    }
}

impl UVDiagram {
    pub fn new(u: ComplexMatrix, v: ComplexMatrix) -> Result<Self> {
        let d = UVDiagram { u, v };
        d.check_shapes()?;
        Ok(d)
    }

    pub fn dim_e(&self) -> usize {
        self.u.cols()
    }

    pub fn dim_f(&self) -> usize {
        self.u.rows()
    }

    fn check_shapes(&self) -> Result<()> {
        if self.v.rows() != self.u.cols() || self.v.cols() != self.u.rows() {
            return Err(Error::ShapeMismatch(format!(
                "u is {}x{} but v is {}x{}",
                self.u.rows(),
                self.u.cols(),
                self.v.rows(),
                self.v.cols()
            )));
        }
        Ok(())
    }

    pub fn vu(&self) -> ComplexMatrix {
        &self.v * &self.u
    }

    pub fn minus_uv(&self) -> ComplexMatrix {
        -&(&self.u * &self.v)
    }

    /// Eigenvalue strip condition on both products.
    pub fn strip_check(&self, cfg: &ToleranceConfig) -> Result<StripReport> {
        self.check_shapes()?;
        let mut report = StripReport::default();
        for m in [self.vu(), self.minus_uv()] {
            let spec = linalg::eigenvalues(&m)?;
            report.absorb(strip_classify(&spec.eigenvalues, cfg));
        }
        Ok(report)
    }
}

/// Strip membership findings: violating eigenvalues and near-boundary
/// warnings (within the rank_tol collar).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StripReport {
    pub violations: Vec<Complex64>,
    pub warnings: Vec<Complex64>,
}

impl StripReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn absorb(&mut self, other: StripReport) {
        self.violations.extend(other.violations);
        self.warnings.extend(other.warnings);
    }
}

/// Classify eigenvalues against the half-open strip Re ∈ [0, 1): Re = 0
/// counts as inside, Re = 1 as outside, each with a rank_tol collar.
pub fn strip_classify(eigs: &[Complex64], cfg: &ToleranceConfig) -> StripReport {
    let mut report = StripReport::default();
    let collar = cfg.rank_tol;
    for &z in eigs {
        let inside = z.re >= -collar && z.re < 1.0 - collar;
        if !inside {
            report.violations.push(z);
        } else if z.re < collar || z.re >= 1.0 - 2.0 * collar {
            report.warnings.push(z);
        }
    }
    report
}

/// Fourier transform in the (Φ,Ψ)-description: the cluster transformation
/// (a, b) ↦ (−b, a(1 + ba)^{-1}); Φ and Ψ swap roles.
pub fn ft_j(d: &PhiPsiDiagram, cfg: &ToleranceConfig) -> Result<PhiPsiDiagram> {
    d.validate(cfg)?;
    let t_phi = &ComplexMatrix::identity(d.dim_phi()) + &(&d.b * &d.a);
    let b_new = &d.a * &inverse(&t_phi)?;
    PhiPsiDiagram::new(-&d.b, b_new)
}

/// Fourier transform in the (u,v)-description: (u, v) ↦ (v, −u). The output
/// strip condition is not enforced; violations are surfaced by
/// `UVDiagram::strip_check` on the result.
pub fn ft_i(d: &UVDiagram) -> Result<UVDiagram> {
    UVDiagram::new(d.v.clone(), -&d.u)
}

/// Monodromies (T_Ψ, T_Φ) = (1 + ab, 1 + ba).
pub fn monodromies(d: &PhiPsiDiagram) -> (ComplexMatrix, ComplexMatrix) {
    let t_psi = &ComplexMatrix::identity(d.dim_psi()) + &(&d.a * &d.b);
    let t_phi = &ComplexMatrix::identity(d.dim_phi()) + &(&d.b * &d.a);
    (t_psi, t_phi)
}

/// The (u,v) → (Φ,Ψ) correspondence: a = u, b = φ(vu)·v. On the strip,
/// φ(vu) is invertible (φ has no zeros with Re ∈ [0,1)).
pub fn malgrange_to_j(d: &UVDiagram, cfg: &ToleranceConfig) -> Result<PhiPsiDiagram> {
    d.check_shapes()?;
    let phi_vu = matrix_function_cfg(&d.vu(), ScalarFunction::Phi, cfg)?;
    let b = &phi_vu * &d.v;
    PhiPsiDiagram::new(d.u.clone(), b)
}

/// Inverse correspondence: u = a, vu = log(1 + ba)/(2πi) on the branch with
/// arg ∈ [0, 2π), v = φ(vu)^{-1}·b.
pub fn malgrange_from_j(d: &PhiPsiDiagram, cfg: &ToleranceConfig) -> Result<UVDiagram> {
    d.validate(cfg)?;
    let t_phi = &ComplexMatrix::identity(d.dim_phi()) + &(&d.b * &d.a);
    let log_t = log_branch_arg0_2pi_cfg(&t_phi, cfg)?;
    let vu = log_t.scale(Complex64::new(1.0, 0.0) / TWO_PI_I);
    let phi_vu = matrix_function_cfg(&vu, ScalarFunction::Phi, cfg)?;
    let v = linalg::solve(&phi_vu, &d.b)?;
    UVDiagram::new(d.a.clone(), v)
}

/// Residual norms for the de Rham residue factorization and the list of
/// strip-violating eigenvalues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeRhamReport {
    pub res_source_defect: f64,
    pub res_target_defect: f64,
    pub strip: StripReport,
    pub valid: bool,
}

/// Check Res_{x'} = vu, Res_{x''} = −uv and the eigenvalue strip condition.
pub fn validate_derham(d: &DeRhamNodeData, cfg: &ToleranceConfig) -> Result<DeRhamReport> {
    let uv_diag = UVDiagram::new(d.u.clone(), d.v.clone())?;
    let vu = uv_diag.vu();
    let minus_uv = uv_diag.minus_uv();
    if d.res_source.rows() != vu.rows() || d.res_source.cols() != vu.cols() {
        return Err(Error::ShapeMismatch("res_source shape".into()));
    }
    if d.res_target.rows() != minus_uv.rows() || d.res_target.cols() != minus_uv.cols() {
        return Err(Error::ShapeMismatch("res_target shape".into()));
    }
    let src_defect = (&d.res_source - &vu).frobenius_norm();
    let tgt_defect = (&d.res_target - &minus_uv).frobenius_norm();
    let strip = uv_diag.strip_check(cfg)?;
    let scale = 1f64.max(vu.frobenius_norm()).max(minus_uv.frobenius_norm());
    let valid = src_defect <= cfg.eq_tol * scale && tgt_defect <= cfg.eq_tol * scale && strip.is_ok();
    Ok(DeRhamReport {
        res_source_defect: src_defect,
        res_target_defect: tgt_defect,
        strip,
        valid,
    })
}
