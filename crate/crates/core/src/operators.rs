//! Dense complex-matrix calculus for small Hermitian operators.
//!
//! Everything here works on `nalgebra::DMatrix<Complex64>`. Target sizes are
//! tiny (system × environment × meter ≤ 64), so there is no sparse path.
//!
//! Composite spaces are ordered `first ⊗ second`, i.e. the joint index of
//! `(a, b)` is `a * d_second + b`. This matches [`kron`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Relative hermiticity tolerance (scaled by the operator max-norm).
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted by `log` and the shifted inverse.
pub const POS_DEF_FLOOR: f64 = 1e-14;

/// Eigenvalues closer than this (relative to the spectral scale) are treated
/// as one degenerate cluster and re-orthogonalized canonically.
const DEGENERACY_TOL: f64 = 1e-10;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn max_norm(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn identity(dim: usize) -> ComplexMatrix {
    ComplexMatrix::identity(dim, dim)
}

pub fn trace(m: &ComplexMatrix) -> C64 {
    m.diagonal().iter().sum()
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn real_diagonal(values: &[f64]) -> ComplexMatrix {
    let d = values.len();
    ComplexMatrix::from_fn(d, d, |j, k| {
        if j == k {
            c(values[j], 0.0)
        } else {
            C64::default()
        }
    })
}

/// Builds a matrix from real row-major entries.
pub fn from_real_rows(dim_rows: usize, dim_cols: usize, entries: &[f64]) -> ComplexMatrix {
    assert_eq!(
        entries.len(),
        dim_rows * dim_cols,
        "entry count must equal rows × cols"
    );
    ComplexMatrix::from_fn(dim_rows, dim_cols, |j, k| c(entries[j * dim_cols + k], 0.0))
}

/// `|psi⟩⟨psi|`
pub fn outer(psi: &ComplexVector) -> ComplexMatrix {
    psi * psi.adjoint()
}

pub fn basis_vector(dim: usize, index: usize) -> ComplexVector {
    let mut v = ComplexVector::zeros(dim);
    v[index] = c(1.0, 0.0);
    v
}

/// Pauli matrices.
pub mod pauli {
    use super::{c, ComplexMatrix};

    pub fn x() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    pub fn y() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
    }

    pub fn z() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }
}

/// Largest deviation `|M[j,k] − conj(M[k,j])|`.
pub fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for k in j..n {
            worst = worst.max((m[(j, k)] - m[(k, j)].conj()).norm());
        }
    }
    worst
}

/// A square matrix that is Hermitian within [`HERMITICITY_TOL`].
///
/// The stored matrix is the exact Hermitian part of the input, so downstream
/// eigensolvers never see the (tolerated) anti-Hermitian residue.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    matrix: ComplexMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, HERMITICITY_TOL)
    }

    pub fn with_tolerance(matrix: ComplexMatrix, rel_tol: f64) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.nrows() != matrix.ncols() {
            return Err(Error::Validation(format!(
                "Hermitian operator must be square and non-empty, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !is_finite(&matrix) {
            return Err(Error::Validation("matrix has non-finite entries".into()));
        }
        let defect = hermiticity_defect(&matrix);
        let allowed = rel_tol * max_norm(&matrix);
        if defect > allowed {
            return Err(Error::Validation(format!(
                "matrix is not Hermitian: max |M[j,k] - conj(M[k,j])| = {defect:e} exceeds {allowed:e}"
            )));
        }
        Ok(Self::hermitian_part(&matrix))
    }

    /// `(M + M†)/2` without any tolerance check. Use only where the input is
    /// Hermitian by construction up to roundoff.
    pub fn hermitian_part(matrix: &ComplexMatrix) -> Self {
        let sym = (matrix + matrix.adjoint()).scale(0.5);
        Self { matrix: sym }
    }

    pub fn from_real_diagonal(values: &[f64]) -> Self {
        Self {
            matrix: real_diagonal(values),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            matrix: self.matrix.scale(factor),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same_dim(self.dim(), other.dim(), "Hermitian sum")?;
        Ok(Self {
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_same_dim(self.dim(), other.dim(), "Hermitian difference")?;
        Ok(Self {
            matrix: &self.matrix - &other.matrix,
        })
    }

    /// `V† H V`, Hermitian for any square `V`.
    pub fn conjugate_by(&self, v: &ComplexMatrix) -> Result<Self> {
        check_same_dim(self.dim(), v.nrows(), "conjugation")?;
        Ok(Self::hermitian_part(&(v.adjoint() * &self.matrix * v)))
    }

    /// `tr[ρ H]` for a Hermitian `ρ`; real part only.
    pub fn expectation(&self, rho: &ComplexMatrix) -> f64 {
        trace_product(rho, &self.matrix).re
    }

    pub fn trace(&self) -> f64 {
        trace(&self.matrix).re
    }

    pub fn max_norm(&self) -> f64 {
        max_norm(&self.matrix)
    }
}

/// `tr[A B]` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::default();
    for j in 0..n {
        for k in 0..a.ncols() {
            acc += a[(j, k)] * b[(k, j)];
        }
    }
    acc
}

pub(crate) fn check_same_dim(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// Spectral decomposition `M = V diag(λ) V†` with ascending `λ`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: ComplexMatrix,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    pub fn eigenvector(&self, k: usize) -> ComplexVector {
        self.eigenvectors.column(k).into_owned()
    }

    /// `V diag(f(λ)) V†`
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> HermitianOperator {
        let values: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        self.with_spectrum(&values)
    }

    pub fn with_spectrum(&self, values: &[f64]) -> HermitianOperator {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (k, &value) in values.iter().enumerate() {
            scaled.column_mut(k).scale_mut(value);
        }
        HermitianOperator::hermitian_part(&(scaled * v.adjoint()))
    }

    /// `V diag(g(λ)) V†` for a complex-valued spectral function.
    pub fn map_complex<F: Fn(f64) -> C64>(&self, g: F) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (k, &value) in self.eigenvalues.iter().enumerate() {
            let factor = g(value);
            for entry in scaled.column_mut(k).iter_mut() {
                *entry *= factor;
            }
        }
        scaled * v.adjoint()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map(|l| l).into_matrix()
    }
}

/// Hermitian eigendecomposition with ascending eigenvalues.
///
/// Output is a deterministic function of the input matrix: eigenvectors of
/// simple eigenvalues are phase-fixed so their largest component is real
/// positive, and each degenerate cluster is replaced by the Gram–Schmidt
/// orthonormalization of its projector applied to the standard basis vectors
/// in index order (independent of the basis the solver happened to return).
pub fn eig_hermitian(m: &HermitianOperator) -> EigenSystem {
    let n = m.dim();
    let solved = nalgebra::SymmetricEigen::new(m.matrix().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| solved.eigenvalues[a].total_cmp(&solved.eigenvalues[b]));

    let eigenvalues: Vec<f64> = order.iter().map(|&k| solved.eigenvalues[k]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &solved.eigenvectors.column(src));
    }

    let scale = eigenvalues.iter().fold(1.0_f64, |acc, l| acc.max(l.abs()));
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && eigenvalues[end] - eigenvalues[end - 1] <= DEGENERACY_TOL * scale {
            end += 1;
        }
        if end - start == 1 {
            let mut col = vectors.column(start).into_owned();
            fix_phase(&mut col);
            vectors.set_column(start, &col);
        } else {
            let block = vectors.columns(start, end - start).into_owned();
            let canonical = canonical_basis(&block);
            for (offset, col) in canonical.into_iter().enumerate() {
                vectors.set_column(start + offset, &col);
            }
        }
        start = end;
    }

    EigenSystem {
        eigenvalues,
        eigenvectors: vectors,
    }
}

/// Rotate `v` so its first maximal-modulus component is real positive.
fn fix_phase(v: &mut ComplexVector) {
    let max = v.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-9))
        .expect("non-empty vector");
    let phase = v[pivot].conj() / v[pivot].norm();
    for z in v.iter_mut() {
        *z *= phase;
    }
}

/// Orthonormal basis of span(block) obtained from the columns `P e_j`.
///
/// At each step the first `j` whose residual `‖P e_j‖²` outside the current
/// basis is at least half the largest one is taken, so every accepted
/// candidate keeps a residual of order `1/√n` and orthogonality is not lost.
fn canonical_basis(block: &ComplexMatrix) -> Vec<ComplexVector> {
    let n = block.nrows();
    let rank = block.ncols();
    let projector = block * block.adjoint();
    // Residual² of P e_j is P_jj − Σ_b |b_j|².
    let mut residual: Vec<f64> = (0..n).map(|j| projector[(j, j)].re).collect();
    let mut basis: Vec<ComplexVector> = Vec::with_capacity(rank);
    while basis.len() < rank {
        let max = residual.iter().copied().fold(0.0_f64, f64::max);
        if max <= 1e-12 {
            return (0..rank).map(|k| block.column(k).into_owned()).collect();
        }
        let j = residual
            .iter()
            .position(|&r| r >= 0.5 * max)
            .expect("maximum is attained");
        let mut candidate = projector.column(j).into_owned();
        for _ in 0..2 {
            for b in &basis {
                let overlap = b.dotc(&candidate);
                candidate -= b * overlap;
            }
        }
        let norm = candidate.norm();
        let v = candidate / c(norm, 0.0);
        for (r, z) in residual.iter_mut().zip(v.iter()) {
            *r -= z.norm_sqr();
        }
        residual[j] = 0.0;
        basis.push(v);
    }
    basis
}

/// Spectral functions supported by [`matrix_function`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatrixFunction {
    Exp,
    Log,
    /// `(M + u·1)^{-1}`
    InverseShifted(f64),
}

pub fn matrix_function(m: &HermitianOperator, f: MatrixFunction) -> Result<HermitianOperator> {
    let eig = eig_hermitian(m);
    apply_spectral(&eig, f)
}

/// Same as [`matrix_function`] but reusing an existing decomposition.
pub fn apply_spectral(eig: &EigenSystem, f: MatrixFunction) -> Result<HermitianOperator> {
    match f {
        MatrixFunction::Exp => Ok(eig.map(f64::exp)),
        MatrixFunction::Log => {
            require_positive(eig, "log")?;
            Ok(eig.map(f64::ln))
        }
        MatrixFunction::InverseShifted(u) => {
            require_positive(eig, "shifted inverse")?;
            Ok(eig.map(|l| 1.0 / (l + u)))
        }
    }
}

fn require_positive(eig: &EigenSystem, context: &str) -> Result<()> {
    let lowest = eig.min_eigenvalue();
    if lowest > POS_DEF_FLOOR {
        Ok(())
    } else {
        Err(Error::Domain {
            context: format!("{context} requires a positive definite operator"),
            eigenvalue: lowest,
        })
    }
}

pub fn exp_hermitian(m: &HermitianOperator) -> HermitianOperator {
    eig_hermitian(m).map(f64::exp)
}

pub fn log_positive(m: &HermitianOperator) -> Result<HermitianOperator> {
    matrix_function(m, MatrixFunction::Log)
}

/// `exp(−i H t)`
pub fn unitary_exp(h: &HermitianOperator, t: f64) -> ComplexMatrix {
    eig_hermitian(h).map_complex(|l| C64::from_polar(1.0, -l * t))
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Which factor of a bipartite space survives [`partial_trace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Keep {
    System,
    Environment,
}

/// Partial trace over one factor of a `d_S ⊗ d_E` operator.
pub fn partial_trace(m: &ComplexMatrix, keep: Keep, dims: (usize, usize)) -> Result<ComplexMatrix> {
    let (ds, de) = dims;
    let total = ds * de;
    if m.nrows() != total || m.ncols() != total {
        return Err(Error::Validation(format!(
            "partial trace expects a {total}×{total} matrix for dims ({ds}, {de}), got {}×{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let out = match keep {
        Keep::System => ComplexMatrix::from_fn(ds, ds, |s, t| {
            (0..de).map(|e| m[(s * de + e, t * de + e)]).sum()
        }),
        Keep::Environment => ComplexMatrix::from_fn(de, de, |e, f| {
            (0..ds).map(|s| m[(s * de + e, s * de + f)]).sum()
        }),
    };
    Ok(out)
}

/// `AB − BA`
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "commutator of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a * b - b * a)
}

/// `‖U†U − 1‖_max`
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    max_norm(&(u.adjoint() * u - identity(u.ncols())))
}
