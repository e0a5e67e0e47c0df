//! Gibbs states, purifications, environment POVMs and the decompositions of
//! the thermal state they induce.

use rand::Rng;

use crate::error::{Error, Result};
use crate::operators::{
    c, check_same_dim, eig_hermitian, identity, kron, max_norm, outer, partial_trace, trace,
    unitarity_defect, ComplexMatrix, ComplexVector, EigenSystem, HermitianOperator, Keep,
};
use crate::random::{gaussian_matrix, rng_from_seed};

/// Positivity and trace tolerance for density operators.
pub const DENSITY_TOL: f64 = 1e-12;
/// Tolerance on `U†U = 1`.
pub const UNITARY_TOL: f64 = 1e-10;
/// Tolerance on POVM completeness.
pub const POVM_TOL: f64 = 1e-10;
/// Max-norm tolerance on `Σ p_i ρ_i = reference`.
pub const MIXTURE_TOL: f64 = 1e-9;
/// Outcomes with probability below this are dropped from decompositions.
pub const P_FLOOR: f64 = 1e-12;
/// Largest admissible `β · (λ_max − λ_min)` for Gibbs weights.
pub const GIBBS_EXPONENT_GUARD: f64 = 700.0;

/// Positive semidefinite, unit-trace Hermitian operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    op: HermitianOperator,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, DENSITY_TOL)
    }

    /// Validates with a custom positivity/trace tolerance (channel outputs
    /// inherit the looser trace-preservation tolerance of their Kraus set).
    pub fn with_tolerance(matrix: ComplexMatrix, tol: f64) -> Result<Self> {
        let op = HermitianOperator::new(matrix)?;
        Self::from_hermitian_with_tolerance(op, tol)
    }

    pub fn from_hermitian(op: HermitianOperator) -> Result<Self> {
        Self::from_hermitian_with_tolerance(op, DENSITY_TOL)
    }

    fn from_hermitian_with_tolerance(op: HermitianOperator, tol: f64) -> Result<Self> {
        let tr = op.trace();
        if (tr - 1.0).abs() > tol {
            return Err(Error::Validation(format!(
                "density operator trace is {tr}, expected 1"
            )));
        }
        let lowest = eig_hermitian(&op).min_eigenvalue();
        if lowest < -tol {
            return Err(Error::Validation(format!(
                "density operator has negative eigenvalue {lowest:e}"
            )));
        }
        Ok(Self { op })
    }

    /// `|ψ⟩⟨ψ|` for a unit vector.
    pub fn pure(psi: &ComplexVector) -> Result<Self> {
        let norm = psi.norm();
        if (norm - 1.0).abs() > DENSITY_TOL {
            return Err(Error::Validation(format!(
                "state vector has norm {norm}, expected 1"
            )));
        }
        Ok(Self {
            op: HermitianOperator::hermitian_part(&outer(psi)),
        })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            op: HermitianOperator::identity(dim).scale(1.0 / dim as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        self.op.matrix()
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn expectation(&self, observable: &HermitianOperator) -> f64 {
        observable.expectation(self.matrix())
    }

    /// `U ρ U†`
    pub fn evolve(&self, u: &UnitaryOperator) -> Result<Self> {
        check_same_dim(self.dim(), u.dim(), "unitary evolution")?;
        let m = u.matrix() * self.matrix() * u.matrix().adjoint();
        Ok(Self {
            op: HermitianOperator::hermitian_part(&m),
        })
    }

    pub fn eigen(&self) -> EigenSystem {
        eig_hermitian(&self.op)
    }

    /// Von Neumann entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.eigen()
            .eigenvalues
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }
}

/// Matrix with `U†U = 1` within [`UNITARY_TOL`].
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryOperator {
    matrix: ComplexMatrix,
}

impl UnitaryOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::Validation(format!(
                "unitary must be square and non-empty, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let defect = unitarity_defect(&matrix);
        if defect > UNITARY_TOL {
            return Err(Error::Validation(format!(
                "matrix is not unitary: ‖U†U − 1‖ = {defect:e}"
            )));
        }
        Ok(Self { matrix })
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

    /// `self · other` (apply `other` first).
    pub fn then_after(&self, other: &UnitaryOperator) -> Result<Self> {
        check_same_dim(self.dim(), other.dim(), "unitary product")?;
        Ok(Self {
            matrix: &self.matrix * &other.matrix,
        })
    }

    /// Heisenberg picture `U† H U`.
    pub fn heisenberg(&self, h: &HermitianOperator) -> Result<HermitianOperator> {
        h.conjugate_by(&self.matrix)
    }
}

/// Pure joint state `|Ψ⟩` on `d_S ⊗ d_E` whose system marginal is the target.
#[derive(Clone, Debug, PartialEq)]
pub struct Purification {
    pub system_dim: usize,
    pub environment_dim: usize,
    pub joint_state: ComplexVector,
}

impl Purification {
    pub fn joint_density(&self) -> ComplexMatrix {
        outer(&self.joint_state)
    }

    pub fn reduced_system(&self) -> Result<DensityOperator> {
        let m = partial_trace(&self.joint_density(), Keep::System, self.dims())?;
        DensityOperator::new(m)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.system_dim, self.environment_dim)
    }

    /// Coefficient matrix `C[s, e] = ⟨s e|Ψ⟩`.
    pub fn coefficients(&self) -> ComplexMatrix {
        let de = self.environment_dim;
        ComplexMatrix::from_fn(self.system_dim, de, |s, e| self.joint_state[s * de + e])
    }

    /// Projective POVM onto the environment Schmidt vectors. Measuring it
    /// induces the eigendecomposition of the reduced state.
    pub fn schmidt_povm(&self) -> Result<Povm> {
        let coeffs = self.coefficients();
        // Right singular vectors of C: eigenvectors of C^T conj(C) on E.
        let gram = coeffs.transpose() * coeffs.map(|z| z.conj());
        let eig = eig_hermitian(&HermitianOperator::hermitian_part(&gram));
        let elements = (0..self.environment_dim)
            .map(|k| HermitianOperator::hermitian_part(&outer(&eig.eigenvector(k))))
            .collect();
        Povm::new(elements)
    }
}

/// Positive operator-valued measure on the environment.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    elements: Vec<HermitianOperator>,
}

impl Povm {
    pub fn new(elements: Vec<HermitianOperator>) -> Result<Self> {
        let first = elements
            .first()
            .ok_or_else(|| Error::Validation("POVM needs at least one element".into()))?;
        let dim = first.dim();
        let mut sum = ComplexMatrix::zeros(dim, dim);
        for (i, a) in elements.iter().enumerate() {
            check_same_dim(dim, a.dim(), "POVM element")?;
            let lowest = eig_hermitian(a).min_eigenvalue();
            if lowest < -DENSITY_TOL {
                return Err(Error::Validation(format!(
                    "POVM element {i} has negative eigenvalue {lowest:e}"
                )));
            }
            sum += a.matrix();
        }
        let defect = max_norm(&(sum - identity(dim)));
        if defect > POVM_TOL {
            return Err(Error::Validation(format!(
                "POVM elements sum to identity only within {defect:e}"
            )));
        }
        Ok(Self { elements })
    }

    pub fn trivial(dim: usize) -> Self {
        Self {
            elements: vec![HermitianOperator::identity(dim)],
        }
    }

    pub fn computational_basis(dim: usize) -> Self {
        let elements = (0..dim)
            .map(|k| {
                let mut diag = vec![0.0; dim];
                diag[k] = 1.0;
                HermitianOperator::from_real_diagonal(&diag)
            })
            .collect();
        Self { elements }
    }

    /// `A_i = V_i† V_i` where `V_i` is the `i`-th `d_E`-row block of an
    /// isometry `V: C^{d_E} → C^m ⊗ C^{d_E}`.
    pub fn from_isometry(
        v: &ComplexMatrix,
        environment_dim: usize,
        outcomes: usize,
    ) -> Result<Self> {
        if v.nrows() != outcomes * environment_dim || v.ncols() != environment_dim {
            return Err(Error::DimensionMismatch(format!(
                "isometry must be {}×{environment_dim}, got {}×{}",
                outcomes * environment_dim,
                v.nrows(),
                v.ncols()
            )));
        }
        let elements = (0..outcomes)
            .map(|i| {
                let block = v.rows(i * environment_dim, environment_dim);
                HermitianOperator::hermitian_part(&(block.adjoint() * block))
            })
            .collect();
        Self::new(elements)
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn outcome_count(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionEntry {
    pub probability: f64,
    pub state: DensityOperator,
}

/// Ensemble `{(p_i, ρ_i)}` mixing to a reference state.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    entries: Vec<DecompositionEntry>,
    reference: DensityOperator,
    /// Probability mass of outcomes dropped below [`P_FLOOR`].
    pruned_mass: f64,
}

impl Decomposition {
    pub fn new(entries: Vec<DecompositionEntry>, reference: DensityOperator) -> Result<Self> {
        Self::with_pruned_mass(entries, reference, 0.0)
    }

    fn with_pruned_mass(
        entries: Vec<DecompositionEntry>,
        reference: DensityOperator,
        pruned_mass: f64,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Validation("decomposition has no entries".into()));
        }
        let dim = reference.dim();
        let mut total = 0.0;
        for (i, e) in entries.iter().enumerate() {
            check_same_dim(dim, e.state.dim(), "decomposition entry")?;
            if !(e.probability >= 0.0) {
                return Err(Error::Validation(format!(
                    "entry {i} has probability {}",
                    e.probability
                )));
            }
            total += e.probability;
        }
        if (total - 1.0).abs() > DENSITY_TOL {
            return Err(Error::Validation(format!(
                "decomposition probabilities sum to {total}"
            )));
        }
        let d = Self {
            entries,
            reference,
            pruned_mass,
        };
        let defect = d.mixture_defect();
        if defect > MIXTURE_TOL {
            return Err(Error::Validation(format!(
                "decomposition does not mix to its reference: max-norm defect {defect:e}"
            )));
        }
        Ok(d)
    }

    /// `{(1, ρ)}`
    pub fn trivial(rho: &DensityOperator) -> Self {
        Self {
            entries: vec![DecompositionEntry {
                probability: 1.0,
                state: rho.clone(),
            }],
            reference: rho.clone(),
            pruned_mass: 0.0,
        }
    }

    /// Spectral ensemble `{(λ_k, |v_k⟩⟨v_k|)}`.
    pub fn eigen(rho: &DensityOperator) -> Result<Self> {
        let eig = rho.eigen();
        let mut entries = Vec::new();
        let mut pruned = 0.0;
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            let p = lambda.max(0.0);
            if p < P_FLOOR {
                pruned += p;
                continue;
            }
            entries.push(DecompositionEntry {
                probability: p,
                state: DensityOperator::pure(&eig.eigenvector(k))?,
            });
        }
        renormalize(&mut entries, pruned);
        Self::with_pruned_mass(entries, rho.clone(), pruned)
    }

    pub fn entries(&self) -> &[DecompositionEntry] {
        &self.entries
    }

    pub fn reference(&self) -> &DensityOperator {
        &self.reference
    }

    pub fn pruned_mass(&self) -> f64 {
        self.pruned_mass
    }

    pub fn was_pruned(&self) -> bool {
        self.pruned_mass > 0.0
    }

    pub fn dim(&self) -> usize {
        self.reference.dim()
    }

    pub fn mixture(&self) -> ComplexMatrix {
        let d = self.dim();
        self.entries
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, e| {
                acc + e.state.matrix().scale(e.probability)
            })
    }

    pub fn mixture_defect(&self) -> f64 {
        max_norm(&(self.mixture() - self.reference.matrix()))
    }
}

fn renormalize(entries: &mut [DecompositionEntry], pruned: f64) {
    if pruned > 0.0 {
        let kept: f64 = entries.iter().map(|e| e.probability).sum();
        for e in entries.iter_mut() {
            e.probability /= kept;
        }
    }
}

/// `Σ_k exp(−β λ_k)` evaluated as `exp(ln Z)` with max-shift.
pub fn partition_function(h: &HermitianOperator, beta: f64) -> Result<f64> {
    let ln_z = log_partition_function(h, beta)?;
    if ln_z > f64::MAX.ln() {
        return Err(Error::Range(format!(
            "partition function overflows: ln Z = {ln_z}"
        )));
    }
    Ok(ln_z.exp())
}

/// `ln Σ_k exp(−β λ_k) = −β λ_min + ln Σ_k exp(−β (λ_k − λ_min))`
pub fn log_partition_function(h: &HermitianOperator, beta: f64) -> Result<f64> {
    let eig = eig_hermitian(h);
    let weights = gibbs_weights(&eig, beta)?;
    let shifted_sum: f64 = weights.iter().sum();
    Ok(-beta * eig.min_eigenvalue() + shifted_sum.ln())
}

fn gibbs_weights(eig: &EigenSystem, beta: f64) -> Result<Vec<f64>> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::Validation(format!(
            "inverse temperature must be finite and ≥ 0, got {beta}"
        )));
    }
    let spread = eig.max_eigenvalue() - eig.min_eigenvalue();
    if beta * spread > GIBBS_EXPONENT_GUARD {
        return Err(Error::Range(format!(
            "β·spread(H) = {} exceeds the overflow guard {GIBBS_EXPONENT_GUARD}",
            beta * spread
        )));
    }
    let lowest = eig.min_eigenvalue();
    Ok(eig
        .eigenvalues
        .iter()
        .map(|&l| (-beta * (l - lowest)).exp())
        .collect())
}

/// `exp(−βH) / tr exp(−βH)`, built in the eigenbasis of `H`.
pub fn gibbs_state(h: &HermitianOperator, beta: f64) -> Result<DensityOperator> {
    let eig = eig_hermitian(h);
    let weights = gibbs_weights(&eig, beta)?;
    let z: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
    Ok(DensityOperator {
        op: eig.with_spectrum(&probs),
    })
}

/// Standard purification `|Ψ⟩ = (√ρ ⊗ 1) Σ_k |k⟩|k⟩` with `d_E = d_S`.
///
/// In the eigenbasis this is `Σ_k √λ_k |v_k⟩|v̄_k⟩`; for diagonal `ρ` it is
/// `Σ_k √ρ_kk |k⟩|k⟩`.
pub fn purify(rho: &DensityOperator) -> Purification {
    let d = rho.dim();
    let sqrt_rho = rho.eigen().map(|l| l.max(0.0).sqrt());
    let joint = ComplexVector::from_fn(d * d, |idx, _| sqrt_rho.matrix()[(idx / d, idx % d)]);
    Purification {
        system_dim: d,
        environment_dim: d,
        joint_state: joint,
    }
}

/// Conditional states `ρ_i = tr_E[ρ_SE (1 ⊗ A_i)] / p_i`.
pub fn decompose_via_povm(psi: &Purification, povm: &Povm) -> Result<Decomposition> {
    decompose_via_povm_with_floor(psi, povm, P_FLOOR)
}

pub fn decompose_via_povm_with_floor(
    psi: &Purification,
    povm: &Povm,
    p_floor: f64,
) -> Result<Decomposition> {
    check_same_dim(psi.environment_dim, povm.dim(), "POVM vs environment")?;
    let joint = psi.joint_density();
    let dims = psi.dims();
    let reference = DensityOperator::new(partial_trace(&joint, Keep::System, dims)?)?;
    let id_s = identity(psi.system_dim);

    let mut entries = Vec::with_capacity(povm.outcome_count());
    let mut pruned = 0.0;
    for a in povm.elements() {
        let unnormalized = partial_trace(&(&joint * kron(&id_s, a.matrix())), Keep::System, dims)?;
        let p = trace(&unnormalized).re.max(0.0);
        if p < p_floor {
            pruned += p;
            continue;
        }
        let rho_i = HermitianOperator::hermitian_part(&unnormalized.unscale(p));
        entries.push(DecompositionEntry {
            probability: p,
            state: DensityOperator::from_hermitian(rho_i)?,
        });
    }
    if entries.is_empty() {
        return Err(Error::Validation(
            "every POVM outcome fell below the probability floor".into(),
        ));
    }
    let total: f64 = entries.iter().map(|e| e.probability).sum();
    for e in entries.iter_mut() {
        e.probability /= total;
    }
    Decomposition::with_pruned_mass(entries, reference, pruned)
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix with
/// the phases of `diag(R)` absorbed into `Q`.
pub fn haar_unitary(dim: usize, seed: u64) -> UnitaryOperator {
    haar_unitary_from_rng(dim, &mut rng_from_seed(seed))
}

pub fn haar_unitary_from_rng<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> UnitaryOperator {
    let g = gaussian_matrix(dim, dim, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..dim {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            c(1.0, 0.0)
        };
        for entry in q.column_mut(k).iter_mut() {
            *entry *= phase;
        }
    }
    UnitaryOperator { matrix: q }
}

/// POVM families offered for environment measurements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PovmFamily {
    /// `A_i = V†(|i⟩⟨i| ⊗ 1)V` with `V` a Haar isometry into `C^m ⊗ C^{d_E}`.
    HaarIsometry,
    /// Rank-one projectors onto the columns of a Haar unitary (`m = d_E`).
    Projective,
}

pub fn random_povm(
    environment_dim: usize,
    outcomes: usize,
    seed: u64,
    family: PovmFamily,
) -> Result<Povm> {
    random_povm_from_rng(environment_dim, outcomes, family, &mut rng_from_seed(seed))
}

pub fn random_povm_from_rng<R: Rng + ?Sized>(
    environment_dim: usize,
    outcomes: usize,
    family: PovmFamily,
    rng: &mut R,
) -> Result<Povm> {
    if outcomes == 0 {
        return Err(Error::Validation("POVM needs at least one outcome".into()));
    }
    match family {
        PovmFamily::HaarIsometry => {
            let w = haar_unitary_from_rng(outcomes * environment_dim, rng);
            let v = w.matrix().columns(0, environment_dim).into_owned();
            Povm::from_isometry(&v, environment_dim, outcomes)
        }
        PovmFamily::Projective => {
            if outcomes != environment_dim {
                return Err(Error::Validation(format!(
                    "projective POVM needs m = d_E, got m = {outcomes}, d_E = {environment_dim}"
                )));
            }
            let u = haar_unitary_from_rng(environment_dim, rng);
            let elements = (0..outcomes)
                .map(|k| {
                    HermitianOperator::hermitian_part(&outer(&u.matrix().column(k).into_owned()))
                })
                .collect();
            Povm::new(elements)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{pauli, unitarity_defect};

    fn sz() -> HermitianOperator {
        HermitianOperator::new(pauli::z()).unwrap()
    }

    // 1/(1 + e^{2}) and 1/(1 + e^{-2}), the σ_z Gibbs populations at β = 1.
    fn sz_populations() -> (f64, f64) {
        let e2 = (2.0_f64).exp();
        (1.0 / (1.0 + e2), 1.0 / (1.0 + 1.0 / e2))
    }

    #[test]
    fn gibbs_at_infinite_temperature_is_maximally_mixed() {
        let h = HermitianOperator::new(pauli::x() + pauli::z().scale(0.3)).unwrap();
        let rho = gibbs_state(&h, 0.0).unwrap();
        assert!(max_norm(&(rho.matrix() - identity(2).scale(0.5))) < 1e-15);
        let zero = gibbs_state(&HermitianOperator::zeros(3), 4.0).unwrap();
        assert!(max_norm(&(zero.matrix() - identity(3).scale(1.0 / 3.0))) < 1e-15);
    }

    #[test]
    fn gibbs_of_pauli_z() {
        let rho = gibbs_state(&sz(), 1.0).unwrap();
        let (up, down) = sz_populations();
        assert!((rho.matrix()[(0, 0)].re - up).abs() < 1e-15);
        assert!((rho.matrix()[(1, 1)].re - down).abs() < 1e-15);
        assert!((up - 0.119203).abs() < 1e-6 && (down - 0.880797).abs() < 1e-6);
        let comm = crate::operators::commutator(rho.matrix(), &pauli::z()).unwrap();
        assert!(max_norm(&comm) < 1e-10);
    }

    #[test]
    fn partition_function_values() {
        let z = partition_function(&sz(), 1.0).unwrap();
        assert!((z - 2.0 * (1.0_f64).cosh()).abs() < 1e-14);
        assert!((z - 3.086161).abs() < 1e-6);
        assert!(
            (partition_function(&HermitianOperator::zeros(4), 2.5).unwrap() - 4.0).abs() < 1e-15
        );
        assert!((partition_function(&sz(), 0.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn overflow_guard_is_a_range_error() {
        let h = HermitianOperator::from_real_diagonal(&[0.0, 1000.0]);
        assert!(matches!(gibbs_state(&h, 1.0), Err(Error::Range(_))));
        assert!(matches!(partition_function(&h, 1.0), Err(Error::Range(_))));
        assert!(gibbs_state(&h, f64::NAN).is_err());
    }

    #[test]
    fn purification_examples() {
        let zero = DensityOperator::pure(&crate::operators::basis_vector(2, 0)).unwrap();
        let psi = purify(&zero);
        assert!((psi.joint_state[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(psi.joint_state.iter().skip(1).all(|z| z.norm() < 1e-15));

        let mixed = purify(&DensityOperator::maximally_mixed(2));
        let s = 0.5_f64.sqrt();
        assert!((mixed.joint_state[0].re - s).abs() < 1e-15);
        assert!((mixed.joint_state[3].re - s).abs() < 1e-15);

        let g = purify(&gibbs_state(&sz(), 1.0).unwrap());
        let (up, down) = sz_populations();
        assert!((g.joint_state[0].re - up.sqrt()).abs() < 1e-14);
        assert!((g.joint_state[3].re - down.sqrt()).abs() < 1e-14);
        assert!(g.joint_state[1].norm() < 1e-15 && g.joint_state[2].norm() < 1e-15);
    }

    #[test]
    fn trivial_povm_gives_trivial_decomposition() {
        let rho = gibbs_state(&sz(), 1.0).unwrap();
        let d = decompose_via_povm(&purify(&rho), &Povm::trivial(2)).unwrap();
        assert_eq!(d.entries().len(), 1);
        assert!((d.entries()[0].probability - 1.0).abs() < 1e-15);
        assert!(max_norm(&(d.entries()[0].state.matrix() - rho.matrix())) < 1e-15);
    }

    #[test]
    fn schmidt_povm_reproduces_eigendecomposition() {
        let mut rng = crate::random::rng_from_seed(5);
        let rho = crate::random::random_density(3, &mut rng);
        let psi = purify(&rho);
        let d = decompose_via_povm(&psi, &psi.schmidt_povm().unwrap()).unwrap();
        let eig = rho.eigen();
        let mut probs: Vec<f64> = d.entries().iter().map(|e| e.probability).collect();
        probs.sort_by(f64::total_cmp);
        for (p, l) in probs.iter().zip(&eig.eigenvalues) {
            assert!((p - l).abs() < 1e-12);
        }
        for e in d.entries() {
            // each conditional state is a pure eigenprojector of ρ
            let purity = crate::operators::trace_product(e.state.matrix(), e.state.matrix()).re;
            assert!((purity - 1.0).abs() < 1e-10);
            let comm = crate::operators::commutator(e.state.matrix(), rho.matrix()).unwrap();
            assert!(max_norm(&comm) < 1e-10);
        }
    }

    #[test]
    fn plus_minus_povm_gives_nonorthogonal_ensemble() {
        let rho = gibbs_state(&sz(), 1.0).unwrap();
        let s = 0.5_f64.sqrt();
        let plus = ComplexVector::from_vec(vec![c(s, 0.), c(s, 0.)]);
        let minus = ComplexVector::from_vec(vec![c(s, 0.), c(-s, 0.)]);
        let povm = Povm::new(vec![
            HermitianOperator::hermitian_part(&outer(&plus)),
            HermitianOperator::hermitian_part(&outer(&minus)),
        ])
        .unwrap();
        let d = decompose_via_povm(&purify(&rho), &povm).unwrap();
        assert_eq!(d.entries().len(), 2);
        assert!(d.mixture_defect() < 1e-15);
        // √ρ|±⟩ are not orthogonal, and each outcome is equally likely
        let overlap = crate::operators::trace_product(
            d.entries()[0].state.matrix(),
            d.entries()[1].state.matrix(),
        )
        .re;
        assert!(overlap > 0.1);
        assert!((d.entries()[0].probability - 0.5).abs() < 1e-15);
    }

    #[test]
    fn povm_dimension_mismatch() {
        let rho = DensityOperator::maximally_mixed(2);
        assert!(matches!(
            decompose_via_povm(&purify(&rho), &Povm::trivial(3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn pruned_outcomes_are_flagged() {
        let zero = DensityOperator::pure(&crate::operators::basis_vector(2, 0)).unwrap();
        let d = decompose_via_povm(&purify(&zero), &Povm::computational_basis(2)).unwrap();
        assert_eq!(d.entries().len(), 1);
        assert!(!d.was_pruned() || d.pruned_mass() < P_FLOOR);
        let eig = Decomposition::eigen(&zero).unwrap();
        assert_eq!(eig.entries().len(), 1);
    }

    #[test]
    fn haar_unitary_is_deterministic_and_unitary() {
        let a = haar_unitary(3, 42);
        assert_eq!(a, haar_unitary(3, 42));
        assert_ne!(a, haar_unitary(3, 43));
        assert!(unitarity_defect(a.matrix()) < 1e-12);
        let one = haar_unitary(1, 9);
        assert!((one.matrix()[(0, 0)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn haar_first_moment_vanishes() {
        let samples = 10_000;
        let mut rng = crate::random::rng_from_seed(2024);
        let mut sum = ComplexMatrix::zeros(2, 2);
        for _ in 0..samples {
            sum += haar_unitary_from_rng(2, &mut rng).matrix();
        }
        let mean = sum.unscale(samples as f64);
        // Each entry of a Haar unitary has E|U_jk|² = 1/d, so the Monte Carlo
        // standard error of the mean is √(1/(d·n)) per entry.
        let sigma = (1.0 / (2.0 * samples as f64)).sqrt();
        assert!(max_norm(&mean) < 3.0 * sigma * 1.5);
    }

    #[test]
    fn random_povm_families() {
        let single = random_povm(3, 1, 1, PovmFamily::HaarIsometry).unwrap();
        assert!(max_norm(&(single.elements()[0].matrix() - identity(3))) < 1e-12);

        let p = random_povm(3, 5, 2, PovmFamily::HaarIsometry).unwrap();
        let sum = p
            .elements()
            .iter()
            .fold(ComplexMatrix::zeros(3, 3), |a, e| a + e.matrix());
        assert!(max_norm(&(sum - identity(3))) < 1e-10);

        let proj = random_povm(3, 3, 3, PovmFamily::Projective).unwrap();
        for (i, a) in proj.elements().iter().enumerate() {
            assert!(max_norm(&(a.matrix() * a.matrix() - a.matrix())) < 1e-12);
            assert!((a.trace() - 1.0).abs() < 1e-12);
            for b in &proj.elements()[i + 1..] {
                assert!(max_norm(&(a.matrix() * b.matrix())) < 1e-12);
            }
        }
        assert!(random_povm(3, 2, 3, PovmFamily::Projective).is_err());
        assert!(random_povm(3, 0, 3, PovmFamily::HaarIsometry).is_err());
    }

    #[test]
    fn purification_round_trip() {
        let mut rng = crate::random::rng_from_seed(8);
        for d in 1..=4 {
            let rho = crate::random::random_density(d, &mut rng);
            let back = purify(&rho).reduced_system().unwrap();
            assert!(max_norm(&(back.matrix() - rho.matrix())) < 1e-10);
        }
    }

    #[test]
    fn density_validation() {
        assert!(DensityOperator::new(identity(2)).is_err());
        assert!(DensityOperator::new(crate::operators::real_diagonal(&[1.5, -0.5])).is_err());
        let u = haar_unitary(2, 3);
        assert!(UnitaryOperator::new(u.matrix().scale(1.01)).is_err());
        assert!(unitarity_defect(u.matrix()) < 1e-12);
    }
}
