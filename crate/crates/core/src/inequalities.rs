//! Trace inequalities and lifting identities behind the fluctuation bound,
//! evaluated numerically so that each ingredient can be probed on random
//! inputs.

use serde::{Deserialize, Serialize};

use crate::driving::{check_reference, delta_f};
use crate::error::{Error, Result};
use crate::openthermo::{apply_channel, verify_gibbs_fixed_point, QuantumChannel, FIXED_POINT_TOL};
use crate::operators::{
    c, check_same_dim, eig_hermitian, exp_hermitian, identity, kron, log_positive, max_norm,
    partial_trace, trace_product, unitarity_defect, ComplexMatrix, EigenSystem, HermitianOperator,
    Keep,
};
use crate::states::{gibbs_state, Decomposition, DensityOperator, UnitaryOperator};

/// Relative slack accepted on every probe.
pub const PROBE_TOL: f64 = 1e-9;
/// Eigenvalue floor applied to rank-deficient lifted states before taking logs.
pub const LIFT_FLOOR: f64 = 1e-13;

/// One evaluation of an inequality `lhs ≤ rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityProbe {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub digest: String,
}

impl InequalityProbe {
    pub fn new(lhs: f64, rhs: f64, digest: impl Into<String>) -> Self {
        Self {
            lhs,
            rhs,
            gap: rhs - lhs,
            digest: digest.into(),
        }
    }

    pub fn with_digest(mut self, digest: impl Into<String>) -> Self {
        self.digest = digest.into();
        self
    }

    pub fn scale(&self) -> f64 {
        self.rhs.abs().max(1.0)
    }

    pub fn holds(&self, rel_tol: f64) -> bool {
        self.gap >= -rel_tol * self.scale()
    }

    pub fn check(&self, rel_tol: f64) -> Result<()> {
        if self.holds(rel_tol) {
            Ok(())
        } else {
            Err(Error::InequalityViolation(format!(
                "{}: lhs {:e} exceeds rhs {:e} (gap {:e})",
                self.digest, self.lhs, self.rhs, self.gap
            )))
        }
    }
}

fn real_trace(m: &HermitianOperator) -> f64 {
    m.trace()
}

/// `tr[e^A]·e^{⟨B⟩} ≤ tr[e^{A+B}]` with `⟨B⟩ = tr[e^A B]/tr[e^A]`.
pub fn peierls_bogoliubov_gap(
    a: &HermitianOperator,
    b: &HermitianOperator,
) -> Result<InequalityProbe> {
    check_same_dim(a.dim(), b.dim(), "Peierls–Bogoliubov operands")?;
    let ea = exp_hermitian(a);
    let z = real_trace(&ea);
    let mean_b = trace_product(ea.matrix(), b.matrix()).re / z;
    let lhs = z * mean_b.exp();
    let rhs = real_trace(&exp_hermitian(&a.add(b)?));
    Ok(InequalityProbe::new(
        lhs,
        rhs,
        format!("peierls-bogoliubov d={}", a.dim()),
    ))
}

/// `F_L[A] = tr e^{ln A + L}`.
pub fn lieb_trace_function(a: &HermitianOperator, l: &HermitianOperator) -> Result<f64> {
    check_same_dim(a.dim(), l.dim(), "Lieb trace function operands")?;
    let ln_a = log_positive(a)?;
    Ok(real_trace(&exp_hermitian(&ln_a.add(l)?)))
}

/// `λF_L[A₁] + (1−λ)F_L[A₂] ≤ F_L[λA₁ + (1−λ)A₂]`.
pub fn concavity_probe(
    a1: &HermitianOperator,
    a2: &HermitianOperator,
    lambda: f64,
    l: &HermitianOperator,
) -> Result<InequalityProbe> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Validation(format!(
            "mixing weight must lie in [0, 1], got {lambda}"
        )));
    }
    check_same_dim(a1.dim(), a2.dim(), "concavity operands")?;
    let lhs = lambda * lieb_trace_function(a1, l)? + (1.0 - lambda) * lieb_trace_function(a2, l)?;
    let mix = a1.scale(lambda).add(&a2.scale(1.0 - lambda))?;
    let rhs = lieb_trace_function(&mix, l)?;
    Ok(InequalityProbe::new(
        lhs,
        rhs,
        format!("lieb-concavity d={} lambda={lambda}", a1.dim()),
    ))
}

/// `∫₀^∞ du 1/((s_j+u)(s_k+u))`, i.e. `ln(s_j/s_k)/(s_j − s_k)` with the
/// diagonal limit `1/s_j`.
fn resolvent_kernel(sj: f64, sk: f64) -> f64 {
    let x = (sj - sk) / sk;
    if x.abs() < 1e-6 {
        (1.0 - x / 2.0 + x * x / 3.0 - x * x * x / 4.0) / sk
    } else {
        x.ln_1p() / (sj - sk)
    }
}

fn require_positive_definite(eig: &EigenSystem, context: &str) -> Result<()> {
    let lowest = eig.min_eigenvalue();
    if lowest > crate::operators::POS_DEF_FLOOR {
        Ok(())
    } else {
        Err(Error::Domain {
            context: context.into(),
            eigenvalue: lowest,
        })
    }
}

/// `∫₀^∞ du (S+u)⁻¹ T (S+u)⁻¹` in closed form in the eigenbasis of `S`.
pub fn resolvent_double_integral(
    s: &HermitianOperator,
    t: &HermitianOperator,
) -> Result<HermitianOperator> {
    check_same_dim(s.dim(), t.dim(), "resolvent operands")?;
    let eig = eig_hermitian(s);
    require_positive_definite(&eig, "resolvent integral requires positive definite S")?;
    let w = &eig.eigenvectors;
    let mut inner = w.adjoint() * t.matrix() * w;
    let vals = &eig.eigenvalues;
    for j in 0..s.dim() {
        for k in 0..s.dim() {
            inner[(j, k)] *= resolvent_kernel(vals[j], vals[k]);
        }
    }
    Ok(HermitianOperator::hermitian_part(
        &(w * inner * w.adjoint()),
    ))
}

/// `tr e^{ln T + ln R − ln S} ≤ tr[R ∫₀^∞ du (S+u)⁻¹ T (S+u)⁻¹]`.
pub fn lgt_gap(
    t: &HermitianOperator,
    r: &HermitianOperator,
    s: &HermitianOperator,
) -> Result<InequalityProbe> {
    check_same_dim(t.dim(), r.dim(), "LGT operands")?;
    check_same_dim(t.dim(), s.dim(), "LGT operands")?;
    let exponent = log_positive(t)?
        .add(&log_positive(r)?)?
        .sub(&log_positive(s)?)?;
    let lhs = real_trace(&exp_hermitian(&exponent));
    let rhs = trace_product(r.matrix(), resolvent_double_integral(s, t)?.matrix()).re;
    Ok(InequalityProbe::new(
        lhs,
        rhs,
        format!("lieb-golden-thompson d={}", t.dim()),
    ))
}

/// Unitary dilation `K[ρ] = tr_E[U (ρ ⊗ ε) U†]`.
#[derive(Clone, Debug)]
pub struct Dilation {
    pub unitary: UnitaryOperator,
    pub environment_state: DensityOperator,
    pub system_dim: usize,
    pub environment_dim: usize,
}

impl Dilation {
    pub fn dims(&self) -> (usize, usize) {
        (self.system_dim, self.environment_dim)
    }

    /// `U (ρ ⊗ ε) U†`
    pub fn lift(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let u = self.unitary.matrix();
        u * kron(rho, self.environment_state.matrix()) * u.adjoint()
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<ComplexMatrix> {
        partial_trace(&self.lift(rho.matrix()), Keep::System, self.dims())
    }

    /// [`floored_log`] of `U (ρ ⊗ ε) U†`, evaluated through the spectrum of
    /// `ρ` so that small eigenvalues keep their relative accuracy.
    pub fn lifted_floored_log(
        &self,
        rho: &DensityOperator,
        floor: f64,
    ) -> (HermitianOperator, f64) {
        let eig = rho.eigen();
        let de = self.environment_dim;
        let kernel = self.system_dim * de - self.system_dim;
        let kernel_mass = floor * kernel as f64;
        let added: f64 = eig
            .eigenvalues
            .iter()
            .map(|&l| (floor - l).max(0.0))
            .sum::<f64>()
            + kernel_mass;
        let total: f64 = eig.eigenvalues.iter().map(|&l| l.max(floor)).sum::<f64>() + kernel_mass;
        let log_rho = eig.map(|l| (l.max(floor) / total).ln());
        let eps = self.environment_state.matrix();
        let block = kron(log_rho.matrix(), eps)
            + kron(&identity(self.system_dim), &(identity(de) - eps))
                * c((floor / total).ln(), 0.0);
        let u = self.unitary.matrix();
        (
            HermitianOperator::hermitian_part(&(u * block * u.adjoint())),
            added,
        )
    }
}

/// Stinespring dilation with `d_E` equal to the Kraus rank and `ε = |0⟩⟨0|`.
/// The isometry `|ψ⟩|0⟩ ↦ Σ_j K_j|ψ⟩|j⟩` fills the columns `(s, 0)`; the
/// remaining columns are the canonical eigenbasis of the complementary
/// projector, so the result depends only on the Kraus list.
pub fn stinespring(k: &QuantumChannel) -> Result<Dilation> {
    let defect = k.trace_preservation_defect();
    if defect > crate::openthermo::TRACE_PRESERVATION_TOL {
        return Err(Error::Validation(format!(
            "channel is not trace preserving: defect {defect:e}"
        )));
    }
    let d = k.dim();
    let r = k.kraus_operators().len();
    let n = d * r;
    let mut v = ComplexMatrix::zeros(n, d);
    for (j, kj) in k.kraus_operators().iter().enumerate() {
        for a in 0..d {
            for s in 0..d {
                v[(a * r + j, s)] = kj[(a, s)];
            }
        }
    }
    let complement = HermitianOperator::hermitian_part(&(identity(n) - &v * v.adjoint()));
    let eig = eig_hermitian(&complement);
    let mut extra = (0..n)
        .filter(|&idx| eig.eigenvalues[idx] > 0.5)
        .map(|idx| eig.eigenvector(idx));
    let mut u = ComplexMatrix::zeros(n, n);
    for s in 0..d {
        u.set_column(s * r, &v.column(s));
        for e in 1..r {
            let col = extra.next().ok_or_else(|| {
                Error::Construction("isometry complement has too few directions".into())
            })?;
            u.set_column(s * r + e, &col);
        }
    }
    let unitary = UnitaryOperator::new(u)?;
    Ok(Dilation {
        unitary,
        environment_state: DensityOperator::pure(&crate::operators::basis_vector(r, 0))?,
        system_dim: d,
        environment_dim: r,
    })
}

/// `max_ρ ‖tr_E[U(ρ⊗ε)U†] − K[ρ]‖_max` over the supplied states.
pub fn dilation_residual(
    k: &QuantumChannel,
    dilation: &Dilation,
    states: &[DensityOperator],
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for rho in states {
        let via_dilation = dilation.apply(rho)?;
        let direct = apply_channel(k, rho)?;
        worst = worst.max(max_norm(&(via_dilation - direct.matrix())));
    }
    debug_assert!(unitarity_defect(dilation.unitary.matrix()) < 1e-9);
    Ok(worst)
}

/// `ln` of a positive semidefinite matrix after raising eigenvalues below
/// `floor` to `floor` and renormalizing to unit trace. Returns the log and
/// the trace mass that flooring added.
pub fn floored_log(m: &ComplexMatrix, floor: f64) -> (HermitianOperator, f64) {
    let eig = eig_hermitian(&HermitianOperator::hermitian_part(m));
    let added: f64 = eig.eigenvalues.iter().map(|&l| (floor - l).max(0.0)).sum();
    let total: f64 = eig.eigenvalues.iter().map(|&l| l.max(floor)).sum();
    (eig.map(|l| (l.max(floor) / total).ln()), added)
}

/// Both sides of the two lifted trace identities for one damping step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedIdentityReport {
    /// `tr_S[ρ_i(ln ρ_B − ln ρ_A)]` and its lifted counterpart.
    pub first: (f64, f64),
    /// `tr_S[K[ρ_i](ln ρ_C − ln ρ_B)]` and its lifted counterpart.
    pub second: (f64, f64),
    pub first_residual: f64,
    pub second_residual: f64,
    /// Largest trace mass added by flooring any lifted state.
    pub floor_mass: f64,
    pub floored: bool,
}

pub fn lifted_work_identity_check(
    rho_i: &DensityOperator,
    k: &QuantumChannel,
    h_a: &HermitianOperator,
    h_b: &HermitianOperator,
    h_c: &HermitianOperator,
    beta: f64,
) -> Result<LiftedIdentityReport> {
    for h in [h_a, h_b, h_c] {
        check_same_dim(rho_i.dim(), h.dim(), "lifted identity operands")?;
    }
    let residual = verify_gibbs_fixed_point(k, h_b, beta)?;
    if residual > FIXED_POINT_TOL {
        return Err(Error::Precondition(format!(
            "channel is not Gibbs-preserving for H_B: residual {residual:e}"
        )));
    }
    let rho_a = gibbs_state(h_a, beta)?;
    let rho_b = gibbs_state(h_b, beta)?;
    let rho_c = gibbs_state(h_c, beta)?;
    let ln_a = log_positive(rho_a.operator())?;
    let ln_b = log_positive(rho_b.operator())?;
    let ln_c = log_positive(rho_c.operator())?;

    let first_system = trace_product(rho_i.matrix(), ln_b.sub(&ln_a)?.matrix()).re;
    let k_rho = apply_channel(k, rho_i)?;
    let second_system = trace_product(k_rho.matrix(), ln_c.sub(&ln_b)?.matrix()).re;

    let dilation = stinespring(k)?;
    let de = dilation.environment_dim;
    let rho_ie = dilation.lift(rho_i.matrix());
    let (ln_ae, mass_a) = dilation.lifted_floored_log(&rho_a, LIFT_FLOOR);
    let (ln_be, mass_b) = dilation.lifted_floored_log(&rho_b, LIFT_FLOOR);
    let first_lifted = trace_product(&rho_ie, ln_be.sub(&ln_ae)?.matrix()).re;

    // ln(ρ ⊗ 1/d_E) = ln ρ ⊗ 1 − ln d_E
    let lift1 = |ln_rho: &HermitianOperator| -> ComplexMatrix {
        kron(ln_rho.matrix(), &identity(de))
            - identity(ln_rho.dim() * de) * c((de as f64).ln(), 0.0)
    };
    let second_lifted = trace_product(&rho_ie, &(lift1(&ln_c) - lift1(&ln_b))).re;

    let floor_mass = mass_a.max(mass_b);
    Ok(LiftedIdentityReport {
        first: (first_system, first_lifted),
        second: (second_system, second_lifted),
        first_residual: (first_system - first_lifted).abs(),
        second_residual: (second_system - second_lifted).abs(),
        floor_mass,
        floored: floor_mass > 0.0,
    })
}

/// `Σ_i p_i exp(tr[ρ_i(ln ρ_B − ln ρ_A)])` with `ρ_A = ρ_0` and
/// `ρ_B = e^{−βU†H_T U}/Z_T`; bounded by one.
pub fn composition_sum(
    d: &Decomposition,
    u: &UnitaryOperator,
    h0: &HermitianOperator,
    ht: &HermitianOperator,
    beta: f64,
) -> Result<f64> {
    check_reference(d, h0, beta)?;
    let ln_a = log_positive(gibbs_state(h0, beta)?.operator())?;
    let ln_b = log_positive(gibbs_state(&u.heisenberg(ht)?, beta)?.operator())?;
    let diff = ln_b.sub(&ln_a)?;
    Ok(d.entries()
        .iter()
        .map(|e| e.probability * trace_product(e.state.matrix(), diff.matrix()).re.exp())
        .sum())
}

/// `composition_sum` rescaled to the work estimator: multiplies by `e^{−βΔF}`.
pub fn composition_estimator(
    d: &Decomposition,
    u: &UnitaryOperator,
    h0: &HermitianOperator,
    ht: &HermitianOperator,
    beta: f64,
) -> Result<f64> {
    Ok(composition_sum(d, u, h0, ht, beta)? * (-beta * delta_f(h0, ht, beta)?).exp())
}

/// `ρ ⊗ 1/d_E`
pub fn trivial_lift(rho: &ComplexMatrix, environment_dim: usize) -> ComplexMatrix {
    kron(
        rho,
        &identity(environment_dim).unscale(environment_dim as f64),
    )
}
