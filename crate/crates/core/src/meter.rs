//! Stroboscopic work meter.
//!
//! A meter prepared in `|μ_t⟩` at times `t_n = nΔt` interacts with the system
//! for `Δt` through `H_SM`, is read out with `Ω_n = −i[Ṁ_n, M_n]` and
//! re-prepared. The joint step is always the exact exponential of `H_SM`.
//! Composite indices are ordered system ⊗ meter.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driving::conditional_work;
use crate::error::{Error, Result};
use crate::operators::{
    c, eig_hermitian, identity, kron, outer, partial_trace, trace_product, unitary_exp,
    ComplexMatrix, ComplexVector, HermitianOperator, Keep,
};
use crate::random::{rng_from_seed, stream_seed};
use crate::states::{gibbs_state, DensityOperator, UnitaryOperator};

/// Tolerance on `‖|μ_t⟩‖ = 1`.
pub const NORM_TOL: f64 = 1e-12;
/// Finite-difference step as a fraction of `Δt`.
pub const FD_FRACTION: f64 = 1.0 / 16.0;
/// Midpoint steps used for the effective-Hamiltonian reference work.
pub const REFERENCE_STEPS: usize = 4096;

/// Meter state family `t ↦ |μ_t⟩`.
#[derive(Clone, Debug, PartialEq)]
pub enum MeterPath {
    Constant(ComplexVector),
    /// `cos(ωt)|from⟩ + sin(ωt)|to⟩` with orthonormal `from`, `to`.
    Rotation {
        omega: f64,
        from: ComplexVector,
        to: ComplexVector,
    },
    /// Piecewise-linear interpolation between samples, renormalized.
    Sampled {
        times: Vec<f64>,
        states: Vec<ComplexVector>,
    },
}

impl MeterPath {
    pub fn rotation(dim: usize, omega: f64) -> Self {
        MeterPath::Rotation {
            omega,
            from: crate::operators::basis_vector(dim, 0),
            to: crate::operators::basis_vector(dim, 1),
        }
    }

    fn dim(&self) -> usize {
        match self {
            MeterPath::Constant(v) => v.len(),
            MeterPath::Rotation { from, .. } => from.len(),
            MeterPath::Sampled { states, .. } => states.first().map_or(0, |s| s.len()),
        }
    }

    fn validate(&self) -> Result<()> {
        let unit = |v: &ComplexVector, what: &str| -> Result<()> {
            let defect = (v.norm() - 1.0).abs();
            if defect > NORM_TOL {
                return Err(Error::Validation(format!(
                    "{what} is not normalized (|‖μ‖ − 1| = {defect:e})"
                )));
            }
            Ok(())
        };
        match self {
            MeterPath::Constant(v) => unit(v, "meter state"),
            MeterPath::Rotation { omega, from, to } => {
                if !omega.is_finite() {
                    return Err(Error::Validation(
                        "rotation frequency must be finite".into(),
                    ));
                }
                if from.len() != to.len() {
                    return Err(Error::DimensionMismatch(
                        "rotation endpoints differ in dimension".into(),
                    ));
                }
                unit(from, "rotation start state")?;
                unit(to, "rotation target state")?;
                let overlap = from.dotc(to).norm();
                if overlap > NORM_TOL {
                    return Err(Error::Validation(format!(
                        "rotation states must be orthogonal (overlap {overlap:e})"
                    )));
                }
                Ok(())
            }
            MeterPath::Sampled { times, states } => {
                if times.len() != states.len() || times.len() < 2 {
                    return Err(Error::Validation(
                        "sampled meter path needs ≥ 2 (time, state) pairs".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Validation(
                        "sampled meter times must increase strictly".into(),
                    ));
                }
                let d = states[0].len();
                for (k, s) in states.iter().enumerate() {
                    if s.len() != d {
                        return Err(Error::DimensionMismatch(format!(
                            "meter sample {k} has dimension {}",
                            s.len()
                        )));
                    }
                    unit(s, &format!("meter sample {k}"))?;
                }
                Ok(())
            }
        }
    }

    pub fn state_at(&self, t: f64) -> ComplexVector {
        match self {
            MeterPath::Constant(v) => v.clone(),
            MeterPath::Rotation { omega, from, to } => {
                let (s, co) = (omega * t).sin_cos();
                from * c(co, 0.0) + to * c(s, 0.0)
            }
            MeterPath::Sampled { times, states } => {
                let last = times.len() - 1;
                let t = t.clamp(times[0], times[last]);
                let k = times.partition_point(|&x| x <= t).clamp(1, last) - 1;
                let w = (t - times[k]) / (times[k + 1] - times[k]);
                let v = &states[k] * c(1.0 - w, 0.0) + &states[k + 1] * c(w, 0.0);
                let n = v.norm();
                v.unscale(n)
            }
        }
    }

    fn analytic_projector_derivative(&self, t: f64) -> Option<ComplexMatrix> {
        match self {
            MeterPath::Constant(v) => Some(ComplexMatrix::zeros(v.len(), v.len())),
            MeterPath::Rotation { omega, from, to } => {
                let (s, co) = (omega * t).sin_cos();
                let mu = self.state_at(t);
                let dmu = (to * c(co, 0.0) - from * c(s, 0.0)) * c(*omega, 0.0);
                Some(&dmu * mu.adjoint() + &mu * dmu.adjoint())
            }
            MeterPath::Sampled { .. } => None,
        }
    }
}

/// Stroboscopic meter protocol: `N` steps of `Δt = T/N`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeterProtocol {
    path: MeterPath,
    duration: f64,
    steps: usize,
}

impl MeterProtocol {
    pub fn new(path: MeterPath, duration: f64, steps: usize) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::Validation(format!(
                "meter duration must be positive, got {duration}"
            )));
        }
        if steps == 0 {
            return Err(Error::Validation(
                "meter protocol needs at least one step".into(),
            ));
        }
        path.validate()?;
        Ok(Self {
            path,
            duration,
            steps,
        })
    }

    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Self::new(self.path.clone(), self.duration, steps)
    }

    pub fn meter_dim(&self) -> usize {
        self.path.dim()
    }

    pub fn path(&self) -> &MeterPath {
        &self.path
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.duration / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.duration
        } else {
            n as f64 * self.dt()
        }
    }
}

/// `M_n`, `Ṁ_n`, and whether a one-sided difference had to be used.
#[derive(Clone, Debug)]
pub struct ProjectorPair {
    pub projector: HermitianOperator,
    pub derivative: HermitianOperator,
    pub one_sided: bool,
}

pub fn projector_and_derivative(mp: &MeterProtocol, n: usize) -> Result<ProjectorPair> {
    if n > mp.steps() {
        return Err(Error::Validation(format!(
            "step {n} outside 0..={}",
            mp.steps()
        )));
    }
    let t = mp.time(n);
    let projector = HermitianOperator::hermitian_part(&outer(&mp.path.state_at(t)));
    let (derivative, one_sided) = match mp.path.analytic_projector_derivative(t) {
        Some(d) => (d, false),
        None => {
            let h = mp.dt() * FD_FRACTION;
            let p = |s: f64| outer(&mp.path.state_at(s));
            if t - h < 0.0 {
                ((p(t + h) - p(t)).unscale(h), true)
            } else if t + h > mp.duration() {
                ((p(t) - p(t - h)).unscale(h), true)
            } else {
                ((p(t + h) - p(t - h)).unscale(2.0 * h), false)
            }
        }
    };
    Ok(ProjectorPair {
        projector,
        derivative: HermitianOperator::hermitian_part(&derivative),
        one_sided,
    })
}

/// `Ω_n = −i[Ṁ_n, M_n]`.
pub fn work_observable(mp: &MeterProtocol, n: usize) -> Result<HermitianOperator> {
    let pair = projector_and_derivative(mp, n)?;
    Ok(observable_from(&pair))
}

fn observable_from(pair: &ProjectorPair) -> HermitianOperator {
    let (m, md) = (pair.projector.matrix(), pair.derivative.matrix());
    let comm = md * m - m * md;
    HermitianOperator::hermitian_part(&(comm * c(0.0, -1.0)))
}

/// Coupling Hamiltonian on `system ⊗ meter`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointHamiltonian {
    system_dim: usize,
    meter_dim: usize,
    h: HermitianOperator,
}

impl JointHamiltonian {
    pub fn new(h: HermitianOperator, system_dim: usize, meter_dim: usize) -> Result<Self> {
        if system_dim == 0 || meter_dim == 0 || h.dim() != system_dim * meter_dim {
            return Err(Error::DimensionMismatch(format!(
                "joint Hamiltonian has dimension {}, expected {system_dim}·{meter_dim}",
                h.dim()
            )));
        }
        Ok(Self {
            system_dim,
            meter_dim,
            h,
        })
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn meter_dim(&self) -> usize {
        self.meter_dim
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.h
    }
}

/// `⟨μ|H_SM|μ⟩` as an operator on the system.
pub fn effective_hamiltonian(
    joint: &JointHamiltonian,
    mu: &ComplexVector,
) -> Result<HermitianOperator> {
    if mu.len() != joint.meter_dim {
        return Err(Error::DimensionMismatch(format!(
            "meter state has dimension {}, expected {}",
            mu.len(),
            joint.meter_dim
        )));
    }
    let ket = kron(
        &identity(joint.system_dim),
        &ComplexMatrix::from_column_slice(mu.len(), 1, mu.as_slice()),
    );
    Ok(HermitianOperator::hermitian_part(
        &(ket.adjoint() * joint.h.matrix() * ket),
    ))
}

/// Sampled-outcome statistics of the total `Σ_n ω_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleStatistics {
    pub shots: usize,
    pub seed: u64,
    pub mean: f64,
    pub variance: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug)]
pub struct MeterRunRecord {
    pub steps: usize,
    pub dt: f64,
    /// `⟨Ω_n⟩` for `n = 0..N`.
    pub omega_expectations: Vec<f64>,
    /// System states `ρ_0 … ρ_N`.
    pub system_states: Vec<DensityOperator>,
    /// Post-interaction meter states `χ_0 … χ_{N−1}`.
    pub meter_states: Vec<ComplexMatrix>,
    pub observables: Vec<HermitianOperator>,
    pub total: f64,
    pub reference: f64,
    pub error: f64,
    pub samples: Option<SampleStatistics>,
}

fn check_dims(rho0: &DensityOperator, joint: &JointHamiltonian, mp: &MeterProtocol) -> Result<()> {
    if rho0.dim() != joint.system_dim {
        return Err(Error::DimensionMismatch(format!(
            "initial state has dimension {}, system has {}",
            rho0.dim(),
            joint.system_dim
        )));
    }
    if mp.meter_dim() != joint.meter_dim {
        return Err(Error::DimensionMismatch(format!(
            "protocol meter dimension {} differs from joint Hamiltonian meter dimension {}",
            mp.meter_dim(),
            joint.meter_dim
        )));
    }
    Ok(())
}

/// Propagator of the effective Hamiltonian `⟨μ_t|H_SM|μ_t⟩` over `[0, T]`
/// using `steps` midpoint exponentials.
pub fn effective_propagator(
    joint: &JointHamiltonian,
    mp: &MeterProtocol,
    steps: usize,
) -> Result<UnitaryOperator> {
    let h = mp.duration() / steps as f64;
    let mut u = identity(joint.system_dim);
    for k in 0..steps {
        let mid = (k as f64 + 0.5) * h;
        let heff = effective_hamiltonian(joint, &mp.path.state_at(mid))?;
        u = unitary_exp(&heff, h) * u;
    }
    UnitaryOperator::new(u)
}

/// `⟨w⟩_ρ = tr[ρ(U†H_T U − H_0)]` for the effective closed dynamics.
pub fn reference_work(
    rho0: &DensityOperator,
    joint: &JointHamiltonian,
    mp: &MeterProtocol,
) -> Result<f64> {
    check_dims(rho0, joint, mp)?;
    let u = effective_propagator(joint, mp, REFERENCE_STEPS)?;
    let h0 = effective_hamiltonian(joint, &mp.path.state_at(0.0))?;
    let ht = effective_hamiltonian(joint, &mp.path.state_at(mp.duration()))?;
    conditional_work(rho0, &u, &h0, &ht)
}

/// Exact stroboscopic evolution with per-step `⟨Ω_n⟩ = tr[Ω_n χ_n]`.
pub fn stroboscopic_run(
    rho0: &DensityOperator,
    joint: &JointHamiltonian,
    mp: &MeterProtocol,
) -> Result<MeterRunRecord> {
    let reference = reference_work(rho0, joint, mp)?;
    stroboscopic_with_reference(rho0, joint, mp, reference)
}

fn stroboscopic_with_reference(
    rho0: &DensityOperator,
    joint: &JointHamiltonian,
    mp: &MeterProtocol,
    reference: f64,
) -> Result<MeterRunRecord> {
    check_dims(rho0, joint, mp)?;
    let dims = (joint.system_dim, joint.meter_dim);
    let x = unitary_exp(&joint.h, mp.dt());
    let x_dag = x.adjoint();
    let n_steps = mp.steps();
    let mut rho = rho0.clone();
    let mut system_states = Vec::with_capacity(n_steps + 1);
    let mut meter_states = Vec::with_capacity(n_steps);
    let mut observables = Vec::with_capacity(n_steps);
    let mut omega_expectations = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        let pair = projector_and_derivative(mp, n)?;
        let omega = observable_from(&pair);
        let joint_state = &x * kron(rho.matrix(), pair.projector.matrix()) * &x_dag;
        let chi = partial_trace(&joint_state, Keep::Environment, dims)?;
        let next = partial_trace(&joint_state, Keep::System, dims)?;
        omega_expectations.push(trace_product(omega.matrix(), &chi).re);
        meter_states.push(chi);
        observables.push(omega);
        system_states.push(rho);
        rho = DensityOperator::with_tolerance(next, 1e-9)?;
    }
    system_states.push(rho);
    let total = omega_expectations.iter().sum::<f64>();
    Ok(MeterRunRecord {
        steps: n_steps,
        dt: mp.dt(),
        omega_expectations,
        system_states,
        meter_states,
        observables,
        total,
        reference,
        error: total - reference,
        samples: None,
    })
}

type OutcomeDistribution = (Vec<f64>, Option<WeightedIndex<f64>>);

/// Per-step outcome distributions `(values, Born weights)` of `Ω_n` on `χ_n`.
fn outcome_distributions(record: &MeterRunRecord) -> Result<Vec<OutcomeDistribution>> {
    record
        .observables
        .iter()
        .zip(&record.meter_states)
        .map(|(omega, chi)| {
            let eig = eig_hermitian(omega);
            if eig.eigenvalues.iter().all(|&v| v == 0.0) {
                return Ok((vec![0.0], None));
            }
            let weights: Vec<f64> = (0..eig.dim())
                .map(|k| {
                    let v = eig.eigenvector(k);
                    (v.adjoint() * chi * &v)[(0, 0)].re.max(0.0)
                })
                .collect();
            let dist = WeightedIndex::new(&weights)
                .map_err(|e| Error::Construction(format!("meter outcome distribution: {e}")))?;
            Ok((eig.eigenvalues, Some(dist)))
        })
        .collect()
}

/// Stroboscopic run plus `shots` Monte Carlo repetitions of the meter
/// readout. Outcomes are drawn per step from the Born statistics of the
/// unconditioned `χ_n`; shot `k` uses the RNG stream `stream_seed(seed, k)`.
pub fn sample_run(
    rho0: &DensityOperator,
    joint: &JointHamiltonian,
    mp: &MeterProtocol,
    shots: usize,
    seed: u64,
) -> Result<MeterRunRecord> {
    let reference = reference_work(rho0, joint, mp)?;
    sample_with_reference(rho0, joint, mp, shots, seed, reference)
}

fn sample_with_reference(
    rho0: &DensityOperator,
    joint: &JointHamiltonian,
    mp: &MeterProtocol,
    shots: usize,
    seed: u64,
    reference: f64,
) -> Result<MeterRunRecord> {
    if shots == 0 {
        return Err(Error::Validation("shots must be at least 1".into()));
    }
    let mut record = stroboscopic_with_reference(rho0, joint, mp, reference)?;
    let dists = outcome_distributions(&record)?;
    let totals: Vec<f64> = (0..shots)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_from_seed(stream_seed(seed, k as u64));
            dists
                .iter()
                .map(|(values, dist)| match dist {
                    Some(d) => values[d.sample(&mut rng)],
                    None => 0.0,
                })
                .sum::<f64>()
        })
        .collect();
    let mean = totals.iter().sum::<f64>() / shots as f64;
    let variance = if shots > 1 {
        totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (shots - 1) as f64
    } else {
        0.0
    };
    record.samples = Some(SampleStatistics {
        shots,
        seed,
        mean,
        variance,
        standard_error: (variance / shots as f64).sqrt(),
    });
    Ok(record)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub steps: usize,
    pub dt: f64,
    pub total: f64,
    pub reference: f64,
    pub abs_error: f64,
    pub variance: f64,
}

/// One [`sample_run`] per step count; rows follow the order of `step_counts`.
pub fn convergence_scan(
    rho0: &DensityOperator,
    joint: &JointHamiltonian,
    mp: &MeterProtocol,
    step_counts: &[usize],
    shots: usize,
    seed: u64,
) -> Result<Vec<ScanRow>> {
    if step_counts.is_empty() {
        return Err(Error::Validation(
            "convergence scan needs at least one step count".into(),
        ));
    }
    let reference = reference_work(rho0, joint, mp)?;
    step_counts
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            let protocol = mp.with_steps(n)?;
            let r = sample_with_reference(
                rho0,
                joint,
                &protocol,
                shots,
                stream_seed(seed, i as u64),
                reference,
            )?;
            Ok(ScanRow {
                steps: n,
                dt: r.dt,
                total: r.total,
                reference,
                abs_error: r.error.abs(),
                variance: r.samples.map_or(0.0, |s| s.variance),
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len()) as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Ready-made qubit ⊗ qubit meter setup.
#[derive(Clone, Debug)]
pub struct MeterScenario {
    pub joint: JointHamiltonian,
    pub path: MeterPath,
    pub duration: f64,
    pub initial_state: DensityOperator,
}

impl MeterScenario {
    pub fn protocol(&self, steps: usize) -> Result<MeterProtocol> {
        MeterProtocol::new(self.path.clone(), self.duration, steps)
    }
}

/// `H_SM = σ_z⊗σ_z + ½σ_x⊗1`, `|μ_t⟩ = cos(ωt)|0⟩ + sin(ωt)|1⟩` with
/// `ωT = π/4`, `T = 1`, starting in the Gibbs state of `H_{μ_0}` at `β = 1`.
/// The effective Hamiltonian moves from `σ_z + ½σ_x` to `½σ_x`.
pub fn standard_qubit_scenario() -> MeterScenario {
    use crate::operators::pauli;
    let h = kron(&pauli::z(), &pauli::z()) + kron(&pauli::x(), &identity(2)).scale(0.5);
    let joint =
        JointHamiltonian::new(HermitianOperator::hermitian_part(&h), 2, 2).expect("qubit dims");
    let path = MeterPath::rotation(2, std::f64::consts::FRAC_PI_4);
    let h0 = effective_hamiltonian(&joint, &path.state_at(0.0)).expect("meter dim");
    let initial_state = gibbs_state(&h0, 1.0).expect("finite Gibbs state");
    MeterScenario {
        joint,
        path,
        duration: 1.0,
        initial_state,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{basis_vector, max_norm, pauli};
    use crate::random::{random_density, random_hermitian};

    fn rotation(steps: usize, omega: f64) -> MeterProtocol {
        MeterProtocol::new(MeterPath::rotation(2, omega), 1.0, steps).unwrap()
    }

    #[test]
    fn constant_path_has_zero_derivative_and_observable() {
        let mp = MeterProtocol::new(MeterPath::Constant(basis_vector(2, 0)), 1.0, 10).unwrap();
        let pair = projector_and_derivative(&mp, 3).unwrap();
        assert_eq!(pair.derivative.max_norm(), 0.0);
        assert_eq!(work_observable(&mp, 3).unwrap().max_norm(), 0.0);
    }

    #[test]
    fn rotation_derivative_and_observable_at_start() {
        let omega = 0.7;
        let mp = rotation(10, omega);
        let pair = projector_and_derivative(&mp, 0).unwrap();
        assert!(max_norm(&(pair.derivative.matrix() - pauli::x().scale(omega))) < 1e-15);
        let obs = work_observable(&mp, 0).unwrap();
        assert!(max_norm(&(obs.matrix() + pauli::y().scale(omega))) < 1e-15);
    }

    #[test]
    fn projector_identities_hold_along_rotation() {
        let mp = rotation(13, 1.3);
        for n in 0..=13 {
            let pair = projector_and_derivative(&mp, n).unwrap();
            let (m, md) = (pair.projector.matrix(), pair.derivative.matrix());
            assert!(crate::operators::trace(md).norm() < 1e-14);
            assert!(max_norm(&(m * md * m)) < 1e-8);
            let obs = observable_from(&pair);
            assert!(obs.trace().abs() < 1e-14);
            assert!(trace_product(obs.matrix(), m).norm() < 1e-14);
        }
    }

    #[test]
    fn sampled_path_matches_analytic_derivative() {
        let omega = 0.9;
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 / 2000.0).collect();
        let states = times
            .iter()
            .map(|&t| MeterPath::rotation(2, omega).state_at(t))
            .collect();
        let sampled = MeterProtocol::new(MeterPath::Sampled { times, states }, 1.0, 20).unwrap();
        let analytic = rotation(20, omega);
        let mid = projector_and_derivative(&sampled, 7).unwrap();
        assert!(!mid.one_sided);
        let exact = projector_and_derivative(&analytic, 7).unwrap();
        assert!(max_norm(&(mid.derivative.matrix() - exact.derivative.matrix())) < 1e-4);
        assert!(projector_and_derivative(&sampled, 0).unwrap().one_sided);
        assert!(projector_and_derivative(&sampled, 20).unwrap().one_sided);
    }

    #[test]
    fn rejects_bad_paths() {
        let unnormalized = ComplexVector::from_element(2, c(1.0, 0.0));
        assert!(MeterProtocol::new(MeterPath::Constant(unnormalized), 1.0, 4).is_err());
        let parallel = MeterPath::Rotation {
            omega: 1.0,
            from: basis_vector(2, 0),
            to: basis_vector(2, 0),
        };
        assert!(MeterProtocol::new(parallel, 1.0, 4).is_err());
        assert!(MeterProtocol::new(MeterPath::rotation(2, 1.0), 1.0, 0).is_err());
    }

    #[test]
    fn effective_hamiltonian_examples() {
        let mut rng = rng_from_seed(2);
        let hs = random_hermitian(3, 1.0, &mut rng);
        let joint = JointHamiltonian::new(
            HermitianOperator::hermitian_part(&kron(hs.matrix(), &identity(2))),
            3,
            2,
        )
        .unwrap();
        let mu = ComplexVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        assert!(
            max_norm(&(effective_hamiltonian(&joint, &mu).unwrap().matrix() - hs.matrix())) < 1e-15
        );

        let zz = JointHamiltonian::new(
            HermitianOperator::hermitian_part(&kron(&pauli::z(), &pauli::z())),
            2,
            2,
        )
        .unwrap();
        let theta: f64 = 0.4;
        let mu = ComplexVector::from_vec(vec![c(theta.cos(), 0.0), c(theta.sin(), 0.0)]);
        let expected = pauli::z().scale((2.0 * theta).cos());
        assert!(max_norm(&(effective_hamiltonian(&zz, &mu).unwrap().matrix() - expected)) < 1e-15);

        let zx = JointHamiltonian::new(
            HermitianOperator::hermitian_part(&kron(&pauli::z(), &pauli::x())),
            2,
            2,
        )
        .unwrap();
        assert!(
            effective_hamiltonian(&zx, &basis_vector(2, 0))
                .unwrap()
                .max_norm()
                < 1e-15
        );
        assert!(effective_hamiltonian(&zx, &basis_vector(3, 0)).is_err());
    }

    #[test]
    fn uncoupled_meter_does_no_work() {
        let hs = pauli::z() + pauli::x().scale(0.3);
        let joint = JointHamiltonian::new(
            HermitianOperator::hermitian_part(&kron(&hs, &identity(2))),
            2,
            2,
        )
        .unwrap();
        let mp = MeterProtocol::new(MeterPath::Constant(basis_vector(2, 1)), 1.0, 25).unwrap();
        let rho0 = DensityOperator::new(crate::operators::real_diagonal(&[0.8, 0.2])).unwrap();
        let run = stroboscopic_run(&rho0, &joint, &mp).unwrap();
        assert_eq!(run.total, 0.0);
        let u = unitary_exp(&HermitianOperator::hermitian_part(&hs), 1.0);
        let expected = &u * rho0.matrix() * u.adjoint();
        assert!(max_norm(&(run.system_states[25].matrix() - expected)) < 1e-12);
    }

    #[test]
    fn zeno_freeze_converges_at_first_order() {
        let mut rng = rng_from_seed(8);
        let h = random_hermitian(4, 1.0, &mut rng);
        let joint = JointHamiltonian::new(h, 2, 2).unwrap();
        let mu0 = basis_vector(2, 0);
        let heff = effective_hamiltonian(&joint, &mu0).unwrap();
        let rho0 = random_density(2, &mut rng);
        let u = unitary_exp(&heff, 1.0);
        let target = &u * rho0.matrix() * u.adjoint();
        let deviation = |n: usize| {
            let mp = MeterProtocol::new(MeterPath::Constant(mu0.clone()), 1.0, n).unwrap();
            let run = stroboscopic_run(&rho0, &joint, &mp).unwrap();
            max_norm(&(run.system_states[n].matrix() - &target))
        };
        let (a, b, c3) = (deviation(100), deviation(200), deviation(400));
        assert!(b < a && c3 < b);
        assert!((a / b - 2.0).abs() < 0.6 && (b / c3 - 2.0).abs() < 0.6);
    }

    #[test]
    fn standard_scenario_first_order_convergence() {
        let sc = standard_qubit_scenario();
        let mp = sc.protocol(50).unwrap();
        let errs: Vec<f64> = [50, 100, 200]
            .iter()
            .map(|&n| {
                stroboscopic_run(&sc.initial_state, &sc.joint, &mp.with_steps(n).unwrap())
                    .unwrap()
                    .error
                    .abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 2.0).abs() < 0.6, "ratio {ratio}");
        }
        assert!(errs[2] < 1e-2);
    }

    #[test]
    fn per_step_expectation_tracks_energy_change() {
        let sc = standard_qubit_scenario();
        let worst = |n: usize| {
            let mp = sc.protocol(n).unwrap();
            let run = stroboscopic_run(&sc.initial_state, &sc.joint, &mp).unwrap();
            (0..n)
                .map(|k| {
                    let pair = projector_and_derivative(&mp, k).unwrap();
                    let first_order = mp.dt()
                        * trace_product(
                            &kron(run.system_states[k].matrix(), pair.derivative.matrix()),
                            sc.joint.operator().matrix(),
                        )
                        .re;
                    (run.omega_expectations[k] - first_order).abs()
                })
                .fold(0.0, f64::max)
        };
        let (a, b) = (worst(40), worst(80));
        assert!(a / b > 3.0, "second-order residual ratio {}", a / b);
    }

    #[test]
    fn constant_protocol_samples_are_zero() {
        let sc = standard_qubit_scenario();
        let mp = MeterProtocol::new(MeterPath::Constant(basis_vector(2, 0)), 1.0, 16).unwrap();
        let run = sample_run(&sc.initial_state, &sc.joint, &mp, 50, 3).unwrap();
        let s = run.samples.unwrap();
        assert_eq!((s.mean, s.variance), (0.0, 0.0));
    }

    #[test]
    fn sampled_mean_matches_exact_total() {
        let sc = standard_qubit_scenario();
        let mp = sc.protocol(40).unwrap();
        let run = sample_run(&sc.initial_state, &sc.joint, &mp, 20_000, 17).unwrap();
        let s = run.samples.as_ref().unwrap();
        assert!((s.mean - run.total).abs() < 4.0 * s.standard_error);
        let again = sample_run(&sc.initial_state, &sc.joint, &mp, 20_000, 17).unwrap();
        assert_eq!(again.samples.unwrap(), *s);
    }

    #[test]
    fn scan_single_row_and_slope_helper() {
        let sc = standard_qubit_scenario();
        let mp = sc.protocol(10).unwrap();
        let rows = convergence_scan(&sc.initial_state, &sc.joint, &mp, &[30], 100, 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].steps, 30);
        assert!(convergence_scan(&sc.initial_state, &sc.joint, &mp, &[], 100, 1).is_err());
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        assert!((log_log_slope(&xs, &ys) + 1.5).abs() < 1e-12);
    }
}
