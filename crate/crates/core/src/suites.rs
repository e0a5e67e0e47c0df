//! Seeded scenario generators and randomized verification suites.
//!
//! Every scenario is a pure function of its `(seed, dimension)` pair, so
//! suite results are reproducible regardless of how cases are scheduled
//! across threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driving::{
    tpm_estimator, work_report_unchecked, DrivingProtocol, HamiltonianPath, Segment, WorkReport,
    INEQUALITY_TOL,
};
use crate::error::{Error, Result};
use crate::inequalities::{
    concavity_probe, dilation_residual, lgt_gap, lifted_work_identity_check,
    peierls_bogoliubov_gap, stinespring, InequalityProbe, PROBE_TOL,
};
use crate::openthermo::{
    energy_conserving_unitary, mixture_reset_channel, open_work_report_unchecked,
    thermal_attach_channel, total_energy, DampingEvent, DampingSchedule, QuantumChannel,
};
use crate::operators::{eig_hermitian, HermitianOperator};
use crate::random::{
    random_density, random_hermitian, random_positive, rng_from_seed, stream_seed, SimRng,
};
use crate::states::{
    decompose_via_povm, gibbs_state, haar_unitary_from_rng, purify, random_povm_from_rng,
    Decomposition, DensityOperator, PovmFamily, UnitaryOperator,
};

/// Largest POVM outcome count drawn by the generators.
pub const MAX_OUTCOMES: usize = 6;

fn pick_dim(rng: &mut SimRng, dim: Option<usize>) -> usize {
    dim.unwrap_or_else(|| rng.random_range(2..=4))
}

fn random_decomposition(rho0: &DensityOperator, rng: &mut SimRng) -> Result<Decomposition> {
    let de = rho0.dim();
    let family = if rng.random_bool(0.25) {
        PovmFamily::Projective
    } else {
        PovmFamily::HaarIsometry
    };
    let m = match family {
        PovmFamily::Projective => de,
        PovmFamily::HaarIsometry => rng.random_range(1..=MAX_OUTCOMES),
    };
    let povm = random_povm_from_rng(de, m, family, rng)?;
    decompose_via_povm(&purify(rho0), &povm)
}

/// Closed driving from `gibbs(H_0, β)` under a Haar unitary.
#[derive(Clone, Debug)]
pub struct ClosedScenario {
    pub seed: u64,
    pub h0: HermitianOperator,
    pub ht: HermitianOperator,
    pub beta: f64,
    pub unitary: UnitaryOperator,
    pub decomposition: Decomposition,
}

impl ClosedScenario {
    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn report(&self) -> Result<WorkReport> {
        Ok(work_report_unchecked(
            &self.decomposition,
            &self.unitary,
            &self.h0,
            &self.ht,
            self.beta,
        )?
        .with_metadata(format!("closed-{}", self.seed), Some(self.seed)))
    }

    pub fn tpm_estimator(&self) -> Result<f64> {
        tpm_estimator(&self.h0, &self.ht, &self.unitary, self.beta)
    }
}

/// Random dimension in 2–4 unless fixed, `β ∈ [0.1, 5]`, GUE Hamiltonians,
/// Haar unitary, and a random POVM decomposition with at most six outcomes.
pub fn random_closed_scenario(seed: u64, dim: Option<usize>) -> Result<ClosedScenario> {
    let mut rng = rng_from_seed(seed);
    let d = pick_dim(&mut rng, dim);
    let beta = rng.random_range(0.1..=5.0);
    let h0 = random_hermitian(d, 1.0, &mut rng);
    let ht = random_hermitian(d, 1.0, &mut rng);
    let unitary = haar_unitary_from_rng(d, &mut rng);
    let decomposition = random_decomposition(&gibbs_state(&h0, beta)?, &mut rng)?;
    Ok(ClosedScenario {
        seed,
        h0,
        ht,
        beta,
        unitary,
        decomposition,
    })
}

/// Eigenbasis decomposition with `U = V_T V_0†`, so `U†H_T U` is diagonal
/// in the eigenbasis of `H_0`.
pub fn saturating_scenario(seed: u64, dim: Option<usize>) -> Result<ClosedScenario> {
    let mut rng = rng_from_seed(seed);
    let d = pick_dim(&mut rng, dim);
    let beta = rng.random_range(0.1..=5.0);
    let h0 = random_hermitian(d, 1.0, &mut rng);
    let ht = random_hermitian(d, 1.0, &mut rng);
    let v0 = eig_hermitian(&h0).eigenvectors;
    let vt = eig_hermitian(&ht).eigenvectors;
    let unitary = UnitaryOperator::new(vt * v0.adjoint())?;
    let decomposition = Decomposition::eigen(&gibbs_state(&h0, beta)?)?;
    Ok(ClosedScenario {
        seed,
        h0,
        ht,
        beta,
        unitary,
        decomposition,
    })
}

/// Driving through random Hamiltonian knots with Gibbs-preserving damping
/// at the interior knots.
#[derive(Clone, Debug)]
pub struct OpenScenario {
    pub seed: u64,
    pub protocol: DrivingProtocol,
    pub schedule: DampingSchedule,
    pub decomposition: Decomposition,
    pub steps: usize,
}

impl OpenScenario {
    pub fn report(&self) -> Result<WorkReport> {
        Ok(open_work_report_unchecked(
            &self.decomposition,
            &self.schedule,
            &self.protocol,
            self.steps,
        )?
        .with_metadata(format!("open-{}", self.seed), Some(self.seed)))
    }
}

/// Channel drawn from the shipped Gibbs-preserving families.
pub fn random_gibbs_preserving_channel(
    h: &HermitianOperator,
    beta: f64,
    rng: &mut SimRng,
) -> Result<QuantumChannel> {
    match rng.random_range(0..4) {
        0 => mixture_reset_channel(h, beta, rng.random_range(0.0..=1.0)),
        1 => {
            let v = energy_conserving_unitary(&total_energy(h, h), rng);
            thermal_attach_channel(h, beta, h, &v)
        }
        2 => Ok(QuantumChannel::dephasing(h)),
        _ => mixture_reset_channel(h, beta, rng.random_range(0.0..=1.0))?
            .then(&QuantumChannel::dephasing(h)),
    }
}

/// One to three damping events between linear driving segments.
pub fn random_open_scenario(seed: u64, dim: Option<usize>) -> Result<OpenScenario> {
    let mut rng = rng_from_seed(seed);
    let d = pick_dim(&mut rng, dim);
    let beta = rng.random_range(0.1..=5.0);
    let events = rng.random_range(1..=3);
    let knots: Vec<HermitianOperator> = (0..events + 2)
        .map(|_| random_hermitian(d, 1.0, &mut rng))
        .collect();
    let mut segments = Vec::with_capacity(events + 1);
    let mut t = 0.0;
    for k in 0..=events {
        let len = rng.random_range(0.3..=1.0);
        segments.push(Segment {
            t_start: t,
            t_end: t + len,
            path: HamiltonianPath::Linear {
                from: knots[k].clone(),
                to: knots[k + 1].clone(),
            },
        });
        t += len;
    }
    let protocol = DrivingProtocol::new(segments)?;
    let damping = (0..events)
        .map(|k| {
            let h = knots[k + 1].clone();
            let channel = random_gibbs_preserving_channel(&h, beta, &mut rng)?;
            Ok(DampingEvent {
                time: protocol.segments()[k].t_end,
                hamiltonian: h,
                channel,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let schedule = DampingSchedule::new(damping, beta)?;
    let decomposition = random_decomposition(&gibbs_state(&knots[0], beta)?, &mut rng)?;
    Ok(OpenScenario {
        seed,
        protocol,
        schedule,
        decomposition,
        steps: 24,
    })
}

/// `H_k = H_from + (k/K)(H_to − H_from)` held for `tau` each, with full
/// thermalization at every `t_k = kτ`, `k = 1..K`.
pub fn quasistatic_ladder(
    h_from: &HermitianOperator,
    h_to: &HermitianOperator,
    rungs: usize,
    beta: f64,
    tau: f64,
) -> Result<OpenScenario> {
    if rungs == 0 {
        return Err(Error::Validation("ladder needs at least one rung".into()));
    }
    let step = h_to.sub(h_from)?;
    let hs: Vec<HermitianOperator> = (0..=rungs)
        .map(|k| h_from.add(&step.scale(k as f64 / rungs as f64)))
        .collect::<Result<_>>()?;
    let protocol = DrivingProtocol::piecewise_constant(&hs, tau)?;
    let events = (1..=rungs)
        .map(|k| {
            Ok(DampingEvent {
                time: k as f64 * tau,
                hamiltonian: hs[k].clone(),
                channel: mixture_reset_channel(&hs[k], beta, 1.0)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let schedule = DampingSchedule::new(events, beta)?;
    let decomposition = Decomposition::eigen(&gibbs_state(h_from, beta)?)?;
    Ok(OpenScenario {
        seed: 0,
        protocol,
        schedule,
        decomposition,
        steps: rungs + 1,
    })
}

/// Aggregate of one randomized suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub violations: usize,
    /// Smallest `gap / scale` observed (negative values are violations).
    pub worst_relative_gap: f64,
    /// Largest residual for identity-type checks; zero for inequality suites.
    pub max_residual: f64,
    pub tolerance: f64,
    /// Seeds of the first few failing cases.
    pub failing_seeds: Vec<u64>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Clone, Copy, Debug)]
enum Outcome {
    /// `gap / scale`
    Gap(f64),
    Residual(f64),
}

fn summarize(
    name: &str,
    tolerance: f64,
    seeds: &[u64],
    outcomes: Vec<Result<Vec<Outcome>>>,
) -> Result<SuiteResult> {
    let mut worst = f64::INFINITY;
    let mut max_residual = 0.0_f64;
    let mut violations = 0;
    let mut failing_seeds = Vec::new();
    for (&seed, outcome) in seeds.iter().zip(outcomes) {
        let mut failed = false;
        match outcome {
            Ok(items) => {
                for item in items {
                    match item {
                        Outcome::Gap(g) => {
                            worst = worst.min(g);
                            failed |= g < -tolerance;
                        }
                        Outcome::Residual(r) => {
                            max_residual = max_residual.max(r);
                            failed |= !(r <= tolerance);
                        }
                    }
                }
            }
            Err(e) if e.is_inequality_violation() => failed = true,
            Err(e) => return Err(e),
        }
        if failed {
            violations += 1;
            if failing_seeds.len() < 10 {
                failing_seeds.push(seed);
            }
        }
    }
    Ok(SuiteResult {
        name: name.into(),
        cases: seeds.len(),
        violations,
        worst_relative_gap: if worst.is_finite() { worst } else { 0.0 },
        max_residual,
        tolerance,
        failing_seeds,
    })
}

fn run_suite<F>(
    name: &str,
    tolerance: f64,
    base_seed: u64,
    cases: usize,
    case: F,
) -> Result<SuiteResult>
where
    F: Fn(u64) -> Result<Vec<Outcome>> + Sync,
{
    let seeds: Vec<u64> = (0..cases as u64)
        .map(|i| stream_seed(base_seed, i))
        .collect();
    let outcomes: Vec<Result<Vec<Outcome>>> = seeds.par_iter().map(|&s| case(s)).collect();
    summarize(name, tolerance, &seeds, outcomes)
}

fn chain_gaps(r: &WorkReport) -> Vec<Outcome> {
    let scale = r.scale();
    vec![
        Outcome::Gap(r.gap_jensen / scale),
        Outcome::Gap(r.gap_quantum / scale),
    ]
}

fn estimator_gap(r: &WorkReport) -> Outcome {
    // Σ p_i e^{−β⟨w⟩_i} ≤ e^{−βΔF}, compared in relative terms.
    let bound = (-r.beta * r.delta_f).exp();
    Outcome::Gap((bound - r.estimator) / bound)
}

/// Sizes and tolerances for [`verify_all`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub cases: usize,
    pub dim: Option<usize>,
    pub tol: f64,
    /// Probe count for the trace-inequality suites.
    pub probe_cases: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            cases: 1000,
            dim: None,
            tol: INEQUALITY_TOL,
            probe_cases: 10_000,
        }
    }
}

/// Main estimator inequality (`Σ p_i e^{−β⟨w⟩_i} ≤ e^{−βΔF}`) on closed scenarios.
pub fn closed_inequality_suite(cfg: &VerifyConfig) -> Result<SuiteResult> {
    run_suite("closed_inequality", cfg.tol, cfg.seed, cfg.cases, |s| {
        Ok(vec![estimator_gap(
            &random_closed_scenario(s, cfg.dim)?.report()?,
        )])
    })
}

/// `W_avg ≥ ΔF̃ ≥ ΔF` on closed scenarios.
pub fn bound_chain_suite(cfg: &VerifyConfig) -> Result<SuiteResult> {
    run_suite("bound_chain", cfg.tol, cfg.seed, cfg.cases, |s| {
        Ok(chain_gaps(&random_closed_scenario(s, cfg.dim)?.report()?))
    })
}

/// `|ΔF̃ − ΔF| ≤ tol·scale` for eigenbasis decompositions with commuting dynamics.
pub fn saturation_suite(cfg: &VerifyConfig, tol: f64) -> Result<SuiteResult> {
    run_suite("saturation", tol, cfg.seed, cfg.cases, |s| {
        let r = saturating_scenario(s, cfg.dim)?.report()?;
        Ok(vec![Outcome::Residual(r.gap_quantum.abs() / r.scale())])
    })
}

/// `|tpm − e^{−βΔF}| / e^{−βΔF}` on closed scenarios.
pub fn tpm_suite(cfg: &VerifyConfig, tol: f64) -> Result<SuiteResult> {
    run_suite("tpm_identity", tol, cfg.seed, cfg.cases, |s| {
        let sc = random_closed_scenario(s, cfg.dim)?;
        let exact = (-sc.beta * crate::driving::delta_f(&sc.h0, &sc.ht, sc.beta)?).exp();
        Ok(vec![Outcome::Residual(
            (sc.tpm_estimator()? - exact).abs() / exact,
        )])
    })
}

/// Estimator inequality and bound chain with damping events.
pub fn open_inequality_suite(cfg: &VerifyConfig) -> Result<SuiteResult> {
    run_suite("open_inequality", cfg.tol, cfg.seed, cfg.cases, |s| {
        let r = random_open_scenario(s, cfg.dim)?.report()?;
        let mut out = chain_gaps(&r);
        out.push(estimator_gap(&r));
        Ok(out)
    })
}

fn probe_gap(p: &InequalityProbe) -> Outcome {
    Outcome::Gap(p.gap / p.scale())
}

pub fn peierls_bogoliubov_suite(cfg: &VerifyConfig) -> Result<SuiteResult> {
    run_suite(
        "peierls_bogoliubov",
        PROBE_TOL,
        cfg.seed,
        cfg.probe_cases,
        |s| {
            let mut rng = rng_from_seed(s);
            let d = pick_dim(&mut rng, cfg.dim);
            let a = random_hermitian(d, 1.0, &mut rng);
            let b = random_hermitian(d, 1.0, &mut rng);
            Ok(vec![probe_gap(&peierls_bogoliubov_gap(&a, &b)?)])
        },
    )
}

pub fn concavity_suite(cfg: &VerifyConfig) -> Result<SuiteResult> {
    run_suite(
        "lieb_concavity",
        PROBE_TOL,
        cfg.seed,
        cfg.probe_cases,
        |s| {
            let mut rng = rng_from_seed(s);
            let d = pick_dim(&mut rng, cfg.dim);
            let a1 = random_positive(d, 1e-3, &mut rng);
            let a2 = random_positive(d, 1e-3, &mut rng);
            let l = random_hermitian(d, 1.0, &mut rng);
            let lambda = rng.random_range(0.0..=1.0);
            Ok(vec![probe_gap(&concavity_probe(&a1, &a2, lambda, &l)?)])
        },
    )
}

pub fn lgt_suite(cfg: &VerifyConfig) -> Result<SuiteResult> {
    run_suite(
        "lieb_golden_thompson",
        PROBE_TOL,
        cfg.seed,
        cfg.probe_cases,
        |s| {
            let mut rng = rng_from_seed(s);
            let d = pick_dim(&mut rng, cfg.dim);
            let t = random_positive(d, 1e-3, &mut rng);
            let r = random_positive(d, 1e-3, &mut rng);
            let sm = random_positive(d, 1e-3, &mut rng);
            Ok(vec![probe_gap(&lgt_gap(&t, &r, &sm)?)])
        },
    )
}

/// Dilation round trip on random Gibbs-preserving channels.
pub fn stinespring_suite(cfg: &VerifyConfig, cases: usize, tol: f64) -> Result<SuiteResult> {
    run_suite("stinespring", tol, cfg.seed, cases, |s| {
        let mut rng = rng_from_seed(s);
        let d = pick_dim(&mut rng, cfg.dim);
        let h = random_hermitian(d, 1.0, &mut rng);
        let beta = rng.random_range(0.1..=5.0);
        let k = random_gibbs_preserving_channel(&h, beta, &mut rng)?;
        let dilation = stinespring(&k)?;
        let states: Vec<DensityOperator> = (0..10).map(|_| random_density(d, &mut rng)).collect();
        Ok(vec![Outcome::Residual(dilation_residual(
            &k, &dilation, &states,
        )?)])
    })
}

/// Both lifted trace identities for one damping step.
pub fn lifted_identity_suite(cfg: &VerifyConfig, cases: usize, tol: f64) -> Result<SuiteResult> {
    run_suite("lifted_identities", tol, cfg.seed, cases, |s| {
        let mut rng = rng_from_seed(s);
        let d = pick_dim(&mut rng, cfg.dim);
        let beta = rng.random_range(0.1..=5.0);
        let ha = random_hermitian(d, 1.0, &mut rng);
        let hb = random_hermitian(d, 1.0, &mut rng);
        let hc = random_hermitian(d, 1.0, &mut rng);
        let k = random_gibbs_preserving_channel(&hb, beta, &mut rng)?;
        let rho_a = gibbs_state(&ha, beta)?;
        let rho_i = random_decomposition(&rho_a, &mut rng)?.entries()[0]
            .state
            .clone();
        let r = lifted_work_identity_check(&rho_i, &k, &ha, &hb, &hc, beta)?;
        Ok(vec![
            Outcome::Residual(r.first_residual),
            Outcome::Residual(r.second_residual),
        ])
    })
}

/// Runs every randomized suite; identity checks use their fixed tolerances.
pub fn verify_all(cfg: &VerifyConfig) -> Result<Vec<SuiteResult>> {
    Ok(vec![
        closed_inequality_suite(cfg)?,
        bound_chain_suite(cfg)?,
        saturation_suite(cfg, 1e-10)?,
        tpm_suite(cfg, 1e-10)?,
        open_inequality_suite(cfg)?,
        peierls_bogoliubov_suite(cfg)?,
        concavity_suite(cfg)?,
        lgt_suite(cfg)?,
        stinespring_suite(cfg, cfg.cases.clamp(1, 100), 1e-9)?,
        lifted_identity_suite(cfg, cfg.cases, 1e-8)?,
    ])
}
