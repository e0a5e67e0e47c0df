//! Closed-system driving: propagators for Hamiltonian paths, conditional
//! work, the exponential work estimator with its bound chain, and the
//! two-point-measurement (TPM) estimator used as a cross-check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{
    check_same_dim, eig_hermitian, max_norm, unitary_exp, ComplexMatrix, HermitianOperator,
};
use crate::states::{
    gibbs_state, log_partition_function, Decomposition, DensityOperator, UnitaryOperator,
};

/// Relative slack allowed on every inequality of the bound chain.
pub const INEQUALITY_TOL: f64 = 1e-9;
/// Max-norm tolerance when checking a decomposition against `gibbs(H_0, β)`.
pub const REFERENCE_TOL: f64 = 1e-9;

/// Hamiltonian as a function of the local segment coordinate `s ∈ [0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum HamiltonianPath {
    Constant(HermitianOperator),
    Linear {
        from: HermitianOperator,
        to: HermitianOperator,
    },
    /// Equally spaced samples across the segment, linearly interpolated.
    Sampled(Vec<HermitianOperator>),
}

impl HamiltonianPath {
    fn validate(&self) -> Result<usize> {
        match self {
            HamiltonianPath::Constant(h) => Ok(h.dim()),
            HamiltonianPath::Linear { from, to } => {
                check_same_dim(from.dim(), to.dim(), "linear path endpoints")?;
                Ok(from.dim())
            }
            HamiltonianPath::Sampled(samples) => {
                let first = samples
                    .first()
                    .ok_or_else(|| Error::Validation("sampled path has no samples".into()))?;
                for h in samples {
                    check_same_dim(first.dim(), h.dim(), "sampled path")?;
                }
                Ok(first.dim())
            }
        }
    }

    pub fn at(&self, s: f64) -> HermitianOperator {
        let s = s.clamp(0.0, 1.0);
        match self {
            HamiltonianPath::Constant(h) => h.clone(),
            HamiltonianPath::Linear { from, to } => interpolate(from, to, s),
            HamiltonianPath::Sampled(samples) => {
                if samples.len() == 1 {
                    return samples[0].clone();
                }
                let pos = s * (samples.len() - 1) as f64;
                let k = (pos.floor() as usize).min(samples.len() - 2);
                interpolate(&samples[k], &samples[k + 1], pos - k as f64)
            }
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, HamiltonianPath::Constant(_))
    }
}

fn interpolate(a: &HermitianOperator, b: &HermitianOperator, s: f64) -> HermitianOperator {
    HermitianOperator::hermitian_part(&(a.matrix().scale(1.0 - s) + b.matrix().scale(s)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub path: HamiltonianPath,
}

/// Time-ordered Hamiltonian path `t ↦ H(t)` on `[0, T]`.
///
/// `hamiltonian_at` is right-continuous at segment boundaries: a sudden
/// quench at `t` is already in effect at `t`. At `t = T` the value is the end
/// of the last segment.
#[derive(Clone, Debug, PartialEq)]
pub struct DrivingProtocol {
    segments: Vec<Segment>,
    dim: usize,
}

impl DrivingProtocol {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::Validation("protocol needs at least one segment".into()))?;
        if first.t_start != 0.0 {
            return Err(Error::Validation(format!(
                "protocol must start at t = 0, got {}",
                first.t_start
            )));
        }
        let dim = first.path.validate()?;
        let duration = segments.last().map(|s| s.t_end).unwrap_or(0.0);
        for (k, seg) in segments.iter().enumerate() {
            if !(seg.t_end > seg.t_start) || !seg.t_end.is_finite() {
                return Err(Error::Validation(format!(
                    "segment {k} has empty or invalid interval [{}, {}]",
                    seg.t_start, seg.t_end
                )));
            }
            check_same_dim(dim, seg.path.validate()?, "protocol segments")?;
            if k > 0 {
                let gap = (seg.t_start - segments[k - 1].t_end).abs();
                if gap > 1e-12 * duration.max(1.0) {
                    return Err(Error::Validation(format!(
                        "segments {} and {k} are not contiguous",
                        k - 1
                    )));
                }
            }
        }
        Ok(Self { segments, dim })
    }

    pub fn constant(h: HermitianOperator, duration: f64) -> Result<Self> {
        Self::new(vec![Segment {
            t_start: 0.0,
            t_end: duration,
            path: HamiltonianPath::Constant(h),
        }])
    }

    pub fn linear(from: HermitianOperator, to: HermitianOperator, duration: f64) -> Result<Self> {
        Self::new(vec![Segment {
            t_start: 0.0,
            t_end: duration,
            path: HamiltonianPath::Linear { from, to },
        }])
    }

    /// Sudden quenches: `hamiltonians[k]` acts on `[k·τ, (k+1)·τ)`.
    pub fn piecewise_constant(hamiltonians: &[HermitianOperator], tau: f64) -> Result<Self> {
        let segments = hamiltonians
            .iter()
            .enumerate()
            .map(|(k, h)| Segment {
                t_start: k as f64 * tau,
                t_end: (k + 1) as f64 * tau,
                path: HamiltonianPath::Constant(h.clone()),
            })
            .collect();
        Self::new(segments)
    }

    pub fn duration(&self) -> f64 {
        self.segments[self.segments.len() - 1].t_end
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn hamiltonian_at(&self, t: f64) -> HermitianOperator {
        let seg = self
            .segments
            .iter()
            .find(|s| t < s.t_end)
            .unwrap_or(&self.segments[self.segments.len() - 1]);
        seg.path.at((t - seg.t_start) / (seg.t_end - seg.t_start))
    }

    pub fn initial_hamiltonian(&self) -> HermitianOperator {
        self.segments[0].path.at(0.0)
    }

    pub fn final_hamiltonian(&self) -> HermitianOperator {
        self.segments[self.segments.len() - 1].path.at(1.0)
    }
}

/// Time-ordered product of `exp(−i H(t_k) Δt)` over `[0, T]` with midpoint
/// sampling. Constant segments use one exact exponential.
pub fn propagator(protocol: &DrivingProtocol, steps: usize) -> Result<UnitaryOperator> {
    propagator_window(protocol, 0.0, protocol.duration(), steps)
}

/// Propagator restricted to `[t_from, t_to]`. Each overlapped segment piece
/// of length `ℓ` gets `max(1, ⌈steps·ℓ/(t_to − t_from)⌉)` midpoint steps.
pub fn propagator_window(
    protocol: &DrivingProtocol,
    t_from: f64,
    t_to: f64,
    steps: usize,
) -> Result<UnitaryOperator> {
    if steps == 0 {
        return Err(Error::Validation(
            "propagator needs at least one step".into(),
        ));
    }
    if !(t_from <= t_to) || t_from < 0.0 || t_to > protocol.duration() * (1.0 + 1e-12) {
        return Err(Error::Validation(format!(
            "window [{t_from}, {t_to}] is outside the protocol [0, {}]",
            protocol.duration()
        )));
    }
    let mut u = crate::operators::identity(protocol.dim());
    let window = t_to - t_from;
    if window == 0.0 {
        return UnitaryOperator::new(u);
    }
    for seg in protocol.segments() {
        let a = seg.t_start.max(t_from);
        let b = seg.t_end.min(t_to);
        if b <= a {
            continue;
        }
        let len = b - a;
        if seg.path.is_constant() {
            u = unitary_exp(&seg.path.at(0.0), len) * u;
            continue;
        }
        let n = ((steps as f64 * len / window) - 1e-9).ceil().max(1.0) as usize;
        let dt = len / n as f64;
        let span = seg.t_end - seg.t_start;
        for k in 0..n {
            let t_mid = a + (k as f64 + 0.5) * dt;
            let h = seg.path.at((t_mid - seg.t_start) / span);
            u = unitary_exp(&h, dt) * u;
        }
    }
    UnitaryOperator::new(u)
}

/// `U†H_T U − H_0`
pub fn work_operator(
    u: &UnitaryOperator,
    h0: &HermitianOperator,
    ht: &HermitianOperator,
) -> Result<HermitianOperator> {
    check_same_dim(h0.dim(), ht.dim(), "H_0 vs H_T")?;
    u.heisenberg(ht)?.sub(h0)
}

/// `⟨w⟩_ρ = tr[ρ (U†H_T U − H_0)]`
pub fn conditional_work(
    rho: &DensityOperator,
    u: &UnitaryOperator,
    h0: &HermitianOperator,
    ht: &HermitianOperator,
) -> Result<f64> {
    check_same_dim(rho.dim(), h0.dim(), "state vs Hamiltonian")?;
    Ok(rho.expectation(&work_operator(u, h0, ht)?))
}

/// `ΔF = −β⁻¹ ln(Z_T / Z_0)`
pub fn delta_f(h0: &HermitianOperator, ht: &HermitianOperator, beta: f64) -> Result<f64> {
    require_positive_beta(beta)?;
    check_same_dim(h0.dim(), ht.dim(), "H_0 vs H_T")?;
    let ln_z0 = log_partition_function(h0, beta)?;
    let ln_zt = log_partition_function(ht, beta)?;
    Ok(-(ln_zt - ln_z0) / beta)
}

pub(crate) fn require_positive_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "inverse temperature must be positive and finite, got {beta}"
        )))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeWork {
    pub probability: f64,
    pub work: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkMetadata {
    pub scenario_id: String,
    pub seed: Option<u64>,
    pub pruned: bool,
    pub pruned_mass: f64,
}

/// Conditional work values together with the bound chain they imply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkReport {
    pub beta: f64,
    pub outcomes: Vec<OutcomeWork>,
    pub w_avg: f64,
    /// `Σ p_i e^{−β⟨w⟩_i}`
    pub estimator: f64,
    pub ln_estimator: f64,
    pub delta_f_tilde: f64,
    pub delta_f: f64,
    /// `W_avg − ΔF̃`
    pub gap_jensen: f64,
    /// `ΔF̃ − ΔF`
    pub gap_quantum: f64,
    pub metadata: WorkMetadata,
}

impl WorkReport {
    /// Assembles a report from per-outcome probabilities and work values.
    pub fn from_outcomes(
        beta: f64,
        outcomes: Vec<OutcomeWork>,
        delta_f: f64,
        metadata: WorkMetadata,
    ) -> Result<Self> {
        require_positive_beta(beta)?;
        let w_avg: f64 = outcomes.iter().map(|o| o.probability * o.work).sum();
        let ln_estimator = log_sum_exp(
            outcomes
                .iter()
                .filter(|o| o.probability > 0.0)
                .map(|o| o.probability.ln() - beta * o.work),
        );
        let delta_f_tilde = -ln_estimator / beta;
        Ok(Self {
            beta,
            outcomes,
            w_avg,
            estimator: ln_estimator.exp(),
            ln_estimator,
            delta_f_tilde,
            delta_f,
            gap_jensen: w_avg - delta_f_tilde,
            gap_quantum: delta_f_tilde - delta_f,
            metadata,
        })
    }

    /// `max(1, |W_avg|)`
    pub fn scale(&self) -> f64 {
        self.w_avg.abs().max(1.0)
    }

    /// Checks `W_avg ≥ ΔF̃ ≥ ΔF` with slack `rel_tol · scale`.
    pub fn check(&self, rel_tol: f64) -> Result<()> {
        let slack = rel_tol * self.scale();
        if self.gap_jensen < -slack {
            return Err(Error::InequalityViolation(format!(
                "W_avg = {} < ΔF̃ = {} (gap {:e})",
                self.w_avg, self.delta_f_tilde, self.gap_jensen
            )));
        }
        if self.gap_quantum < -slack {
            return Err(Error::InequalityViolation(format!(
                "ΔF̃ = {} < ΔF = {} (gap {:e})",
                self.delta_f_tilde, self.delta_f, self.gap_quantum
            )));
        }
        Ok(())
    }

    pub fn with_metadata(mut self, scenario_id: impl Into<String>, seed: Option<u64>) -> Self {
        self.metadata.scenario_id = scenario_id.into();
        self.metadata.seed = seed;
        self
    }
}

/// `ln Σ exp(x_i)` with max-shift; `−∞` for an empty input.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let terms: Vec<f64> = terms.into_iter().collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Fails unless `D` decomposes `gibbs(H_0, β)` within [`REFERENCE_TOL`].
pub fn check_reference(d: &Decomposition, h0: &HermitianOperator, beta: f64) -> Result<()> {
    check_same_dim(d.dim(), h0.dim(), "decomposition vs H_0")?;
    let gibbs = gibbs_state(h0, beta)?;
    let defect = max_norm(&(d.reference().matrix() - gibbs.matrix()));
    if defect > REFERENCE_TOL {
        return Err(Error::Precondition(format!(
            "decomposition reference differs from gibbs(H_0, β) by {defect:e}"
        )));
    }
    Ok(())
}

/// Conditional work for every outcome of `D`, the estimator, `ΔF̃` and `ΔF`.
/// Fails with [`Error::InequalityViolation`] if the bound chain breaks.
pub fn work_report(
    d: &Decomposition,
    u: &UnitaryOperator,
    h0: &HermitianOperator,
    ht: &HermitianOperator,
    beta: f64,
) -> Result<WorkReport> {
    let report = work_report_unchecked(d, u, h0, ht, beta)?;
    report.check(INEQUALITY_TOL)?;
    Ok(report)
}

/// [`work_report`] without the final bound-chain check.
pub fn work_report_unchecked(
    d: &Decomposition,
    u: &UnitaryOperator,
    h0: &HermitianOperator,
    ht: &HermitianOperator,
    beta: f64,
) -> Result<WorkReport> {
    require_positive_beta(beta)?;
    check_reference(d, h0, beta)?;
    let w_op = work_operator(u, h0, ht)?;
    let outcomes = d
        .entries()
        .iter()
        .map(|e| OutcomeWork {
            probability: e.probability,
            work: e.state.expectation(&w_op),
        })
        .collect();
    WorkReport::from_outcomes(beta, outcomes, delta_f(h0, ht, beta)?, metadata_for(d))
}

pub(crate) fn metadata_for(d: &Decomposition) -> WorkMetadata {
    WorkMetadata {
        scenario_id: String::new(),
        seed: None,
        pruned: d.was_pruned(),
        pruned_mass: d.pruned_mass(),
    }
}

/// `Σ_{j,k} p⁰_j |⟨e^T_k|U|e^0_j⟩|² e^{−β(E^T_k − E^0_j)}`, which equals
/// `e^{−βΔF}` for every unitary.
pub fn tpm_estimator(
    h0: &HermitianOperator,
    ht: &HermitianOperator,
    u: &UnitaryOperator,
    beta: f64,
) -> Result<f64> {
    require_positive_beta(beta)?;
    check_same_dim(h0.dim(), ht.dim(), "H_0 vs H_T")?;
    check_same_dim(h0.dim(), u.dim(), "Hamiltonian vs unitary")?;
    let e0 = eig_hermitian(h0);
    let et = eig_hermitian(ht);
    let ln_z0 = log_partition_function(h0, beta)?;
    let amplitudes: ComplexMatrix = et.eigenvectors.adjoint() * u.matrix() * &e0.eigenvectors;
    let mut total = 0.0;
    for (j, &ej) in e0.eigenvalues.iter().enumerate() {
        let ln_p0 = -beta * ej - ln_z0;
        for (k, &ek) in et.eigenvalues.iter().enumerate() {
            let transition = amplitudes[(k, j)].norm_sqr();
            total += transition * (ln_p0 - beta * (ek - ej)).exp();
        }
    }
    Ok(total)
}
