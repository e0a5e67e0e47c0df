//! Open-system driving: Gibbs-preserving damping channels applied
//! instantaneously between unitary driving windows, and the work collected
//! between damping events.

use rand::Rng;

use crate::driving::{
    check_reference, conditional_work, delta_f, metadata_for, propagator, propagator_window,
    require_positive_beta, work_report_unchecked, DrivingProtocol, OutcomeWork, WorkReport,
    INEQUALITY_TOL,
};
use crate::error::{Error, Result};
use crate::operators::{
    check_same_dim, eig_hermitian, identity, kron, max_norm, outer, unitary_exp, ComplexMatrix,
    ComplexVector, HermitianOperator,
};
use crate::random::random_hermitian;
use crate::states::{gibbs_state, Decomposition, DensityOperator};

/// Tolerance on `Σ K_j† K_j = 1`.
pub const TRACE_PRESERVATION_TOL: f64 = 1e-10;
/// Largest accepted `‖K[ρ_G] − ρ_G‖_max` for a damping channel.
pub const FIXED_POINT_TOL: f64 = 1e-9;
/// Tolerance on `[V, H ⊗ 1 + 1 ⊗ H_anc] = 0`.
pub const COMMUTATION_TOL: f64 = 1e-10;
/// Tolerance when matching schedule Hamiltonians to the protocol.
pub const SCHEDULE_MATCH_TOL: f64 = 1e-9;

/// Completely positive trace-preserving map in Kraus form.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumChannel {
    dim: usize,
    kraus: Vec<ComplexMatrix>,
}

impl QuantumChannel {
    pub fn new(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::Validation("channel needs at least one Kraus operator".into()))?;
        let dim = first.nrows();
        for (j, k) in kraus.iter().enumerate() {
            if k.nrows() != dim || k.ncols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "Kraus operator {j} is {}×{}, expected {dim}×{dim}",
                    k.nrows(),
                    k.ncols()
                )));
            }
        }
        let channel = Self { dim, kraus };
        let defect = channel.trace_preservation_defect();
        if defect > TRACE_PRESERVATION_TOL {
            return Err(Error::Validation(format!(
                "Kraus operators are not trace preserving: defect {defect:e}"
            )));
        }
        Ok(channel)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            kraus: vec![identity(dim)],
        }
    }

    /// Replacement map `ρ ↦ σ` with Kraus operators `√s_k |φ_k⟩⟨j|`.
    pub fn reset_to(sigma: &DensityOperator) -> Self {
        let eig = sigma.eigen();
        let d = sigma.dim();
        let mut kraus = Vec::with_capacity(d * d);
        for (k, &s) in eig.eigenvalues.iter().enumerate() {
            if s <= 0.0 {
                continue;
            }
            let phi = eig.eigenvector(k);
            for j in 0..d {
                let bra = crate::operators::basis_vector(d, j).adjoint();
                kraus.push(&phi * bra * crate::operators::c(s.sqrt(), 0.0));
            }
        }
        Self { dim: d, kraus }
    }

    /// Dephasing in the eigenbasis of `h`: Kraus operators `|v_k⟩⟨v_k|`.
    pub fn dephasing(h: &HermitianOperator) -> Self {
        let eig = eig_hermitian(h);
        let kraus = (0..h.dim()).map(|k| outer(&eig.eigenvector(k))).collect();
        Self {
            dim: h.dim(),
            kraus,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus_operators(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn trace_preservation_defect(&self) -> f64 {
        let sum = self
            .kraus
            .iter()
            .fold(ComplexMatrix::zeros(self.dim, self.dim), |acc, k| {
                acc + k.adjoint() * k
            });
        max_norm(&(sum - identity(self.dim)))
    }

    /// `Σ_j K_j X K_j†` for any operator `X`.
    pub fn apply_matrix(&self, x: &ComplexMatrix) -> ComplexMatrix {
        self.kraus
            .iter()
            .fold(ComplexMatrix::zeros(self.dim, self.dim), |acc, k| {
                acc + k * x * k.adjoint()
            })
    }

    /// `K₂ ∘ K₁` (apply `self` first), in minimal Kraus form.
    pub fn then(&self, next: &QuantumChannel) -> Result<Self> {
        check_same_dim(self.dim, next.dim, "channel composition")?;
        let kraus = next
            .kraus
            .iter()
            .flat_map(|b| self.kraus.iter().map(move |a| b * a))
            .collect();
        Ok(Self::new(kraus)?.minimal())
    }

    /// Equivalent channel whose Kraus operators are the eigenvectors of the
    /// Choi matrix, so their number equals the Choi rank.
    pub fn minimal(&self) -> Self {
        let d = self.dim;
        let vecs: Vec<ComplexVector> = self
            .kraus
            .iter()
            .map(|k| ComplexVector::from_fn(d * d, |i, _| k[(i / d, i % d)]))
            .collect();
        let choi = vecs
            .iter()
            .fold(ComplexMatrix::zeros(d * d, d * d), |acc, v| {
                acc + v * v.adjoint()
            });
        let eig = eig_hermitian(&HermitianOperator::hermitian_part(&choi));
        let cutoff = 1e-13 * eig.max_eigenvalue().max(1.0);
        let kraus = (0..d * d)
            .rev()
            .filter(|&k| eig.eigenvalues[k] > cutoff)
            .map(|k| {
                let v = eig.eigenvector(k) * crate::operators::c(eig.eigenvalues[k].sqrt(), 0.0);
                ComplexMatrix::from_fn(d, d, |a, s| v[a * d + s])
            })
            .collect();
        Self { dim: d, kraus }
    }
}

pub fn apply_channel(k: &QuantumChannel, rho: &DensityOperator) -> Result<DensityOperator> {
    check_same_dim(k.dim(), rho.dim(), "channel vs state")?;
    DensityOperator::with_tolerance(k.apply_matrix(rho.matrix()), 10.0 * TRACE_PRESERVATION_TOL)
}

/// `K[ρ] = (1−λ)ρ + λ·gibbs(H, β)` with Kraus operators `√(1−λ)·1` and
/// `√(λ p_k) |k⟩⟨j|` over the Gibbs eigenbasis.
pub fn mixture_reset_channel(
    h: &HermitianOperator,
    beta: f64,
    lambda: f64,
) -> Result<QuantumChannel> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Validation(format!(
            "mixing weight λ must lie in [0, 1], got {lambda}"
        )));
    }
    let gibbs = gibbs_state(h, beta)?;
    let d = h.dim();
    let mut kraus = Vec::new();
    if lambda < 1.0 {
        kraus.push(identity(d).scale((1.0 - lambda).sqrt()));
    }
    if lambda > 0.0 {
        let eig = gibbs.eigen();
        for (k, &p) in eig.eigenvalues.iter().enumerate() {
            let weight = (lambda * p.max(0.0)).sqrt();
            if weight == 0.0 {
                continue;
            }
            let ket = eig.eigenvector(k);
            for j in 0..d {
                let bra = eig.eigenvector(j).adjoint();
                kraus.push(&ket * bra * crate::operators::c(weight, 0.0));
            }
        }
    }
    QuantumChannel::new(kraus)
}

/// `H ⊗ 1 + 1 ⊗ H_anc`
pub fn total_energy(h: &HermitianOperator, h_anc: &HermitianOperator) -> HermitianOperator {
    let m = kron(h.matrix(), &identity(h_anc.dim())) + kron(&identity(h.dim()), h_anc.matrix());
    HermitianOperator::hermitian_part(&m)
}

/// `K[ρ] = tr_anc[V (ρ ⊗ gibbs(H_anc, β)) V†]` for an energy-conserving `V`.
pub fn thermal_attach_channel(
    h: &HermitianOperator,
    beta: f64,
    h_anc: &HermitianOperator,
    v: &ComplexMatrix,
) -> Result<QuantumChannel> {
    let ds = h.dim();
    let da = h_anc.dim();
    if v.nrows() != ds * da || v.ncols() != ds * da {
        return Err(Error::DimensionMismatch(format!(
            "joint unitary must be {0}×{0}, got {1}×{2}",
            ds * da,
            v.nrows(),
            v.ncols()
        )));
    }
    let h_tot = total_energy(h, h_anc);
    let comm = crate::operators::commutator(v, h_tot.matrix())?;
    let defect = max_norm(&comm);
    if defect > COMMUTATION_TOL * h_tot.max_norm().max(1.0) {
        return Err(Error::Construction(format!(
            "joint unitary does not conserve total energy: ‖[V, H_tot]‖ = {defect:e}"
        )));
    }
    let ancilla = gibbs_state(h_anc, beta)?.eigen();
    let mut kraus = Vec::with_capacity(da * da);
    for (a, &q) in ancilla.eigenvalues.iter().enumerate() {
        if q <= 0.0 {
            continue;
        }
        let phi_a = ancilla.eigenvector(a);
        let embed_in = kron(
            &identity(ds),
            &ComplexMatrix::from_column_slice(da, 1, phi_a.as_slice()),
        );
        for b in 0..da {
            let phi_b = ancilla.eigenvector(b);
            let project_out = kron(
                &identity(ds),
                &ComplexMatrix::from_column_slice(da, 1, phi_b.as_slice()).adjoint(),
            );
            kraus.push((&project_out * v * &embed_in) * crate::operators::c(q.sqrt(), 0.0));
        }
    }
    let channel = QuantumChannel::new(kraus)?;
    let residual = verify_gibbs_fixed_point(&channel, h, beta)?;
    if residual > FIXED_POINT_TOL {
        return Err(Error::Construction(format!(
            "thermal-attach channel moves the Gibbs state by {residual:e}"
        )));
    }
    Ok(channel)
}

/// SWAP on `C^d ⊗ C^d`.
pub fn swap(dim: usize) -> ComplexMatrix {
    let n = dim * dim;
    ComplexMatrix::from_fn(n, n, |row, col| {
        let (a, b) = (col / dim, col % dim);
        if row == b * dim + a {
            crate::operators::c(1.0, 0.0)
        } else {
            crate::operators::c(0.0, 0.0)
        }
    })
}

/// `exp(−iθ·SWAP)`, which commutes with `H ⊗ 1 + 1 ⊗ H`.
pub fn partial_swap(dim: usize, theta: f64) -> ComplexMatrix {
    let s = HermitianOperator::hermitian_part(&swap(dim));
    unitary_exp(&s, theta)
}

/// Random unitary commuting with `h_total`: the exponential of a random
/// Hermitian generator projected onto the degenerate eigenspaces of `h_total`.
pub fn energy_conserving_unitary<R: Rng + ?Sized>(
    h_total: &HermitianOperator,
    rng: &mut R,
) -> ComplexMatrix {
    let eig = eig_hermitian(h_total);
    let n = h_total.dim();
    let g = random_hermitian(n, 1.0, rng);
    let g_eig = eig.eigenvectors.adjoint() * g.matrix() * &eig.eigenvectors;
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |a, l| a.max(l.abs()));
    let blocked = ComplexMatrix::from_fn(n, n, |j, k| {
        if (eig.eigenvalues[j] - eig.eigenvalues[k]).abs() <= 1e-9 * scale {
            g_eig[(j, k)]
        } else {
            crate::operators::c(0.0, 0.0)
        }
    });
    let generator = HermitianOperator::hermitian_part(
        &(&eig.eigenvectors * blocked * eig.eigenvectors.adjoint()),
    );
    unitary_exp(&generator, 1.0)
}

/// `‖K[ρ_G] − ρ_G‖_max` with `ρ_G = gibbs(H, β)`.
pub fn verify_gibbs_fixed_point(
    k: &QuantumChannel,
    h: &HermitianOperator,
    beta: f64,
) -> Result<f64> {
    check_same_dim(k.dim(), h.dim(), "channel vs Hamiltonian")?;
    let g = gibbs_state(h, beta)?;
    Ok(max_norm(&(k.apply_matrix(g.matrix()) - g.matrix())))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DampingEvent {
    pub time: f64,
    /// Instantaneous Hamiltonian `H_n` at the event.
    pub hamiltonian: HermitianOperator,
    pub channel: QuantumChannel,
}

/// Instantaneous damping events, each Gibbs-preserving for its `H_n` at the
/// schedule's inverse temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct DampingSchedule {
    events: Vec<DampingEvent>,
    beta: f64,
}

impl DampingSchedule {
    pub fn new(events: Vec<DampingEvent>, beta: f64) -> Result<Self> {
        require_positive_beta(beta)?;
        for (n, ev) in events.iter().enumerate() {
            if !(ev.time >= 0.0) || !ev.time.is_finite() {
                return Err(Error::Validation(format!(
                    "damping event {n} has invalid time {}",
                    ev.time
                )));
            }
            if n > 0 && !(ev.time > events[n - 1].time) {
                return Err(Error::Validation(format!(
                    "damping times must increase strictly (event {n})"
                )));
            }
            check_same_dim(
                ev.hamiltonian.dim(),
                ev.channel.dim(),
                "damping Hamiltonian vs channel",
            )?;
            let residual = verify_gibbs_fixed_point(&ev.channel, &ev.hamiltonian, beta)?;
            if residual > FIXED_POINT_TOL {
                return Err(Error::Validation(format!(
                    "damping event {n} is not Gibbs-preserving: residual {residual:e}"
                )));
            }
        }
        Ok(Self { events, beta })
    }

    pub fn empty(beta: f64) -> Result<Self> {
        Self::new(Vec::new(), beta)
    }

    pub fn events(&self) -> &[DampingEvent] {
        &self.events
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Fails unless every event lies in `[0, T]`, shares the protocol
    /// dimension, and carries the protocol Hamiltonian at its time.
    pub fn check_against(&self, protocol: &DrivingProtocol) -> Result<()> {
        let duration = protocol.duration();
        for (n, ev) in self.events.iter().enumerate() {
            if ev.time > duration {
                return Err(Error::Precondition(format!(
                    "damping event {n} at t = {} lies after the protocol end {duration}",
                    ev.time
                )));
            }
            check_same_dim(
                protocol.dim(),
                ev.hamiltonian.dim(),
                "damping event vs protocol",
            )?;
            let expected = protocol.hamiltonian_at(ev.time);
            let mismatch = max_norm(&(expected.matrix() - ev.hamiltonian.matrix()));
            if mismatch > SCHEDULE_MATCH_TOL {
                return Err(Error::Precondition(format!(
                    "damping event {n} Hamiltonian differs from the protocol at t = {} by {mismatch:e}",
                    ev.time
                )));
            }
        }
        Ok(())
    }
}

/// Work collected between damping events:
/// `Σ_n tr[H_n ρ^{(n)−}] − tr[H_{n−1} ρ^{(n−1)+}]`, where the last interval
/// ends at `T` with `H_T`. Driving windows use `steps` midpoint steps per
/// protocol duration.
pub fn open_conditional_work(
    rho: &DensityOperator,
    schedule: &DampingSchedule,
    protocol: &DrivingProtocol,
    steps: usize,
) -> Result<f64> {
    schedule.check_against(protocol)?;
    check_same_dim(rho.dim(), protocol.dim(), "state vs protocol")?;
    if schedule.events().is_empty() {
        let u = propagator(protocol, steps)?;
        return conditional_work(
            rho,
            &u,
            &protocol.initial_hamiltonian(),
            &protocol.final_hamiltonian(),
        );
    }
    let trajectory = OpenTrajectory::new(schedule, protocol, steps)?;
    trajectory.work(rho)
}

/// Window propagators and event channels for one schedule, shared by every
/// initial state of a decomposition.
struct OpenTrajectory<'a> {
    schedule: &'a DampingSchedule,
    windows: Vec<crate::states::UnitaryOperator>,
    initial: HermitianOperator,
    last: HermitianOperator,
}

impl<'a> OpenTrajectory<'a> {
    fn new(
        schedule: &'a DampingSchedule,
        protocol: &DrivingProtocol,
        steps: usize,
    ) -> Result<Self> {
        let duration = protocol.duration();
        let mut bounds = vec![0.0];
        bounds.extend(schedule.events().iter().map(|e| e.time));
        bounds.push(duration);
        let windows = bounds
            .windows(2)
            .map(|w| {
                let n = ((steps as f64) * (w[1] - w[0]) / duration).ceil().max(1.0) as usize;
                propagator_window(protocol, w[0], w[1], n)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            schedule,
            windows,
            initial: protocol.initial_hamiltonian(),
            last: protocol.final_hamiltonian(),
        })
    }

    fn work(&self, rho: &DensityOperator) -> Result<f64> {
        let mut state = rho.clone();
        let mut energy_after = state.expectation(&self.initial);
        let mut work = 0.0;
        for (event, window) in self.schedule.events().iter().zip(&self.windows) {
            state = state.evolve(window)?;
            work += state.expectation(&event.hamiltonian) - energy_after;
            state = apply_channel(&event.channel, &state)?;
            energy_after = state.expectation(&event.hamiltonian);
        }
        state = state.evolve(&self.windows[self.windows.len() - 1])?;
        work += state.expectation(&self.last) - energy_after;
        Ok(work)
    }
}

/// Open-system analogue of [`crate::driving::work_report`]. An empty schedule takes exactly
/// the closed-system code path.
pub fn open_work_report(
    d: &Decomposition,
    schedule: &DampingSchedule,
    protocol: &DrivingProtocol,
    steps: usize,
) -> Result<WorkReport> {
    let report = open_work_report_unchecked(d, schedule, protocol, steps)?;
    report.check(INEQUALITY_TOL)?;
    Ok(report)
}

/// [`open_work_report`] without the final bound-chain check.
pub fn open_work_report_unchecked(
    d: &Decomposition,
    schedule: &DampingSchedule,
    protocol: &DrivingProtocol,
    steps: usize,
) -> Result<WorkReport> {
    let beta = schedule.beta();
    let h0 = protocol.initial_hamiltonian();
    let ht = protocol.final_hamiltonian();
    schedule.check_against(protocol)?;
    if schedule.events().is_empty() {
        return work_report_unchecked(d, &propagator(protocol, steps)?, &h0, &ht, beta);
    }
    check_reference(d, &h0, beta)?;
    let trajectory = OpenTrajectory::new(schedule, protocol, steps)?;
    let outcomes = d
        .entries()
        .iter()
        .map(|e| {
            Ok(OutcomeWork {
                probability: e.probability,
                work: trajectory.work(&e.state)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    WorkReport::from_outcomes(beta, outcomes, delta_f(&h0, &ht, beta)?, metadata_for(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driving::work_report;
    use crate::operators::{c, pauli, real_diagonal};
    use crate::random::{random_density, rng_from_seed};

    fn h(m: ComplexMatrix) -> HermitianOperator {
        HermitianOperator::new(m).unwrap()
    }

    fn plus() -> DensityOperator {
        DensityOperator::new(ComplexMatrix::from_element(2, 2, c(0.5, 0.0))).unwrap()
    }

    #[test]
    fn identity_channel_leaves_state_unchanged() {
        let rho = plus();
        let out = apply_channel(&QuantumChannel::identity(2), &rho).unwrap();
        assert_eq!(out.matrix(), rho.matrix());
    }

    #[test]
    fn reset_channel_replaces_any_state() {
        let mut rng = rng_from_seed(3);
        let sigma = random_density(3, &mut rng);
        let k = QuantumChannel::reset_to(&sigma);
        for _ in 0..5 {
            let out = apply_channel(&k, &random_density(3, &mut rng)).unwrap();
            assert!(max_norm(&(out.matrix() - sigma.matrix())) < 1e-14);
        }
    }

    #[test]
    fn dephasing_plus_state() {
        let out = apply_channel(&QuantumChannel::dephasing(&h(pauli::z())), &plus()).unwrap();
        assert!(max_norm(&(out.matrix() - identity(2).scale(0.5))) < 1e-15);
    }

    #[test]
    fn mixture_reset_limits() {
        let hz = h(pauli::z());
        let id = mixture_reset_channel(&hz, 1.0, 0.0).unwrap();
        assert_eq!(id.kraus_operators().len(), 1);
        let full = mixture_reset_channel(&hz, 1.0, 1.0).unwrap();
        let g = gibbs_state(&hz, 1.0).unwrap();
        let out = apply_channel(&full, &plus()).unwrap();
        assert!(max_norm(&(out.matrix() - g.matrix())) < 1e-15);
        assert!(mixture_reset_channel(&hz, 1.0, 1.5).is_err());
    }

    #[test]
    fn mixture_reset_half_on_ground_state() {
        let hz = h(pauli::z());
        let k = mixture_reset_channel(&hz, 1.0, 0.5).unwrap();
        let rho = DensityOperator::new(real_diagonal(&[1.0, 0.0])).unwrap();
        let out = apply_channel(&k, &rho).unwrap();
        let e2 = (2.0_f64).exp();
        let up = 1.0 / (1.0 + e2);
        let expected = real_diagonal(&[0.5 + 0.5 * up, 0.5 * (1.0 - up)]);
        assert!(max_norm(&(out.matrix() - expected)) < 1e-15);
    }

    #[test]
    fn thermal_attach_examples() {
        let hn = h(pauli::z() + pauli::x().scale(0.3));
        let beta = 0.8;
        let trivial = thermal_attach_channel(&hn, beta, &hn, &identity(4)).unwrap();
        let mut rng = rng_from_seed(1);
        let rho = random_density(2, &mut rng);
        assert!(
            max_norm(&(apply_channel(&trivial, &rho).unwrap().matrix() - rho.matrix())) < 1e-14
        );

        let full = thermal_attach_channel(&hn, beta, &hn, &swap(2)).unwrap();
        let g = gibbs_state(&hn, beta).unwrap();
        assert!(max_norm(&(apply_channel(&full, &rho).unwrap().matrix() - g.matrix())) < 1e-14);

        let partial = thermal_attach_channel(
            &hn,
            beta,
            &hn,
            &partial_swap(2, std::f64::consts::FRAC_PI_4),
        )
        .unwrap();
        assert!(verify_gibbs_fixed_point(&partial, &hn, beta).unwrap() < 1e-10);
    }

    #[test]
    fn thermal_attach_rejects_energy_violation() {
        let hn = h(pauli::z());
        let v = kron(&pauli::x(), &identity(2));
        assert!(matches!(
            thermal_attach_channel(&hn, 1.0, &hn, &v),
            Err(Error::Construction(_))
        ));
    }

    #[test]
    fn energy_conserving_unitary_commutes() {
        let mut rng = rng_from_seed(12);
        let hn = crate::random::random_hermitian(3, 1.0, &mut rng);
        let tot = total_energy(&hn, &hn);
        let v = energy_conserving_unitary(&tot, &mut rng);
        assert!(max_norm(&crate::operators::commutator(&v, tot.matrix()).unwrap()) < 1e-12);
        let k = thermal_attach_channel(&hn, 1.3, &hn, &v).unwrap();
        assert!(verify_gibbs_fixed_point(&k, &hn, 1.3).unwrap() < 1e-12);
    }

    #[test]
    fn fixed_point_residuals() {
        let hn = h(pauli::z() + pauli::y().scale(0.7));
        assert_eq!(
            verify_gibbs_fixed_point(&QuantumChannel::identity(2), &hn, 1.0).unwrap(),
            0.0
        );
        let g = gibbs_state(&hn, 1.0).unwrap();
        assert!(verify_gibbs_fixed_point(&QuantumChannel::reset_to(&g), &hn, 1.0).unwrap() < 1e-12);
        assert!(
            verify_gibbs_fixed_point(&QuantumChannel::dephasing(&hn), &hn, 1.0).unwrap() < 1e-12
        );
    }

    #[test]
    fn schedule_rejects_non_gibbs_preserving_channel() {
        let hz = h(pauli::z());
        let bad = QuantumChannel::reset_to(&DensityOperator::maximally_mixed(2));
        let ev = DampingEvent {
            time: 0.5,
            hamiltonian: hz,
            channel: bad,
        };
        assert!(DampingSchedule::new(vec![ev], 1.0).is_err());
    }

    #[test]
    fn schedule_must_match_protocol() {
        let hz = h(pauli::z());
        let protocol = DrivingProtocol::linear(hz.clone(), hz.scale(2.0), 1.0).unwrap();
        let ev = DampingEvent {
            time: 0.5,
            hamiltonian: hz.clone(),
            channel: mixture_reset_channel(&hz, 1.0, 0.5).unwrap(),
        };
        let schedule = DampingSchedule::new(vec![ev], 1.0).unwrap();
        assert!(matches!(
            schedule.check_against(&protocol),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn empty_schedule_reduces_to_closed_work() {
        let h0 = h(pauli::z());
        let ht = h(pauli::x().scale(1.5));
        let protocol = DrivingProtocol::linear(h0.clone(), ht.clone(), 1.3).unwrap();
        let mut rng = rng_from_seed(4);
        let rho = random_density(2, &mut rng);
        let open =
            open_conditional_work(&rho, &DampingSchedule::empty(1.0).unwrap(), &protocol, 40)
                .unwrap();
        let closed = conditional_work(&rho, &propagator(&protocol, 40).unwrap(), &h0, &ht).unwrap();
        assert_eq!(open, closed);
    }

    #[test]
    fn stationary_driving_does_no_work() {
        let hn = h(pauli::z() + pauli::x().scale(0.4));
        let protocol = DrivingProtocol::constant(hn.clone(), 2.0).unwrap();
        let events = vec![
            DampingEvent {
                time: 0.5,
                hamiltonian: hn.clone(),
                channel: mixture_reset_channel(&hn, 1.0, 0.3).unwrap(),
            },
            DampingEvent {
                time: 1.5,
                hamiltonian: hn.clone(),
                channel: QuantumChannel::dephasing(&hn),
            },
        ];
        let schedule = DampingSchedule::new(events, 1.0).unwrap();
        let mut rng = rng_from_seed(5);
        let rho = random_density(2, &mut rng);
        assert!(
            open_conditional_work(&rho, &schedule, &protocol, 10)
                .unwrap()
                .abs()
                < 1e-14
        );
    }

    #[test]
    fn single_thermalization_matches_straight_line_oracle() {
        // σ_z for t < 1, 2σ_z on [1, 2), 4σ_z on [2, 3]; full thermalization at t = 1.
        let hs = [
            h(pauli::z()),
            h(pauli::z().scale(2.0)),
            h(pauli::z().scale(4.0)),
        ];
        let protocol = DrivingProtocol::piecewise_constant(&hs, 1.0).unwrap();
        let beta = 1.0;
        let ev = DampingEvent {
            time: 1.0,
            hamiltonian: hs[1].clone(),
            channel: mixture_reset_channel(&hs[1], beta, 1.0).unwrap(),
        };
        let schedule = DampingSchedule::new(vec![ev], beta).unwrap();
        let rho = DensityOperator::new(real_diagonal(&[0.3, 0.7])).unwrap();
        let got = open_conditional_work(&rho, &schedule, &protocol, 8).unwrap();

        // Diagonal states under diagonal Hamiltonians: energies only.
        let before = 2.0 * (0.3 - 0.7) - (0.3 - 0.7);
        let e2 = (-2.0_f64 * 2.0).exp();
        let (p_up, p_down) = (e2 / (1.0 + e2), 1.0 / (1.0 + e2));
        let after = 4.0 * (p_up - p_down) - 2.0 * (p_up - p_down);
        assert!((got - (before + after)).abs() < 1e-13);
    }

    #[test]
    fn identity_channels_match_closed_report() {
        let h0 = h(pauli::z());
        let ht = h(pauli::z().scale(2.0) + pauli::x().scale(0.5));
        let hmid = h(pauli::z().scale(1.5) + pauli::x().scale(0.25));
        let protocol = DrivingProtocol::new(vec![
            crate::driving::Segment {
                t_start: 0.0,
                t_end: 1.0,
                path: crate::driving::HamiltonianPath::Constant(h0.clone()),
            },
            crate::driving::Segment {
                t_start: 1.0,
                t_end: 2.0,
                path: crate::driving::HamiltonianPath::Constant(hmid.clone()),
            },
            crate::driving::Segment {
                t_start: 2.0,
                t_end: 3.0,
                path: crate::driving::HamiltonianPath::Constant(ht.clone()),
            },
        ])
        .unwrap();
        let beta = 0.9;
        let ev = DampingEvent {
            time: 1.0,
            hamiltonian: hmid.clone(),
            channel: mixture_reset_channel(&hmid, beta, 0.0).unwrap(),
        };
        let schedule = DampingSchedule::new(vec![ev], beta).unwrap();
        let rho0 = gibbs_state(&h0, beta).unwrap();
        let d = crate::states::decompose_via_povm(
            &crate::states::purify(&rho0),
            &crate::states::random_povm(2, 3, 7, crate::states::PovmFamily::HaarIsometry).unwrap(),
        )
        .unwrap();
        let open = open_work_report(&d, &schedule, &protocol, 30).unwrap();
        let closed = work_report(&d, &propagator(&protocol, 30).unwrap(), &h0, &ht, beta).unwrap();
        assert!((open.delta_f_tilde - closed.delta_f_tilde).abs() < 1e-12);
        assert!((open.w_avg - closed.w_avg).abs() < 1e-12);
    }

    #[test]
    fn composed_channel_stays_gibbs_preserving() {
        let hn = h(pauli::z() + pauli::x().scale(0.2));
        let a = mixture_reset_channel(&hn, 1.0, 0.4).unwrap();
        let b = QuantumChannel::dephasing(&hn);
        let ab = a.then(&b).unwrap();
        assert!(verify_gibbs_fixed_point(&ab, &hn, 1.0).unwrap() < 1e-12);
        assert!(ab.kraus_operators().len() <= 4);
        let mut rng = rng_from_seed(9);
        for _ in 0..5 {
            let rho = random_density(2, &mut rng);
            let two_step = b.apply_matrix(&a.apply_matrix(rho.matrix()));
            assert!(max_norm(&(ab.apply_matrix(rho.matrix()) - two_step)) < 1e-13);
        }
    }
}
