//! Minimization of the operational bound `ΔF̃` over the driving unitary and
//! the environment POVM.
//!
//! The search is a Nelder–Mead simplex over generator coordinates with
//! dimension-adapted coefficients, repeated from random starting points.
//! Every evaluated point is checked against `ΔF̃ ≥ ΔF`; a violation aborts.

use std::sync::Mutex;

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driving::{delta_f, work_report, WorkReport};
use crate::error::{Error, Result};
use crate::operators::{c, unitary_exp, ComplexMatrix, HermitianOperator};
use crate::random::{rng_from_seed, stream_seed};
use crate::states::{decompose_via_povm, gibbs_state, purify, Povm, Purification, UnitaryOperator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationConfig {
    pub restarts: usize,
    pub max_iters: u64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    /// Stop when the standard deviation of simplex values drops below this.
    pub tol: f64,
    pub seed: u64,
    /// Number of POVM outcomes `m`.
    pub povm_outcomes: usize,
    /// Standard deviation of random starting points.
    pub init_scale: f64,
    /// Starting point of restart 0; zero vector when absent.
    pub initial_point: Option<Vec<f64>>,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iters: 4000,
            initial_step: 0.5,
            tol: 1e-8,
            seed: 0,
            povm_outcomes: 2,
            init_scale: 1.0,
            initial_point: None,
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iters == 0 || self.povm_outcomes == 0 {
            return Err(Error::Validation(
                "restarts, max_iters and povm_outcomes must be positive".into(),
            ));
        }
        if !(self.tol > 0.0) || !(self.initial_step > 0.0) || !(self.init_scale >= 0.0) {
            return Err(Error::Validation(
                "tol and initial_step must be positive, init_scale non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub index: usize,
    pub seed: u64,
    pub best: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Best value seen after each evaluation.
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_delta_f_tilde: f64,
    pub delta_f: f64,
    /// `ΔF̃* − ΔF`
    pub certificate_gap: f64,
    /// Smallest `ΔF̃` over every evaluated point of every restart.
    pub min_evaluated: f64,
    pub unitary_params: Vec<f64>,
    pub povm_params: Vec<f64>,
    pub best_restart: usize,
    pub converged: bool,
    pub evaluations: usize,
    /// Best-so-far trace of the winning restart.
    pub trace: Vec<f64>,
    pub restarts: Vec<RestartOutcome>,
    pub best_report: WorkReport,
}

/// Hermitian generator from `d²` coordinates: the diagonal first, then
/// `(re, im)` of the strict upper triangle in row-major order.
pub fn generator_from_params(theta: &[f64], dim: usize) -> Result<HermitianOperator> {
    if theta.len() != dim * dim {
        return Err(Error::Validation(format!(
            "expected {} parameters for dimension {dim}, got {}",
            dim * dim,
            theta.len()
        )));
    }
    let mut g = ComplexMatrix::zeros(dim, dim);
    for j in 0..dim {
        g[(j, j)] = c(theta[j], 0.0);
    }
    let mut idx = dim;
    for j in 0..dim {
        for k in j + 1..dim {
            let z = c(theta[idx], theta[idx + 1]);
            g[(j, k)] = z;
            g[(k, j)] = z.conj();
            idx += 2;
        }
    }
    Ok(HermitianOperator::hermitian_part(&g))
}

/// Inverse of [`generator_from_params`].
pub fn params_from_generator(g: &HermitianOperator) -> Vec<f64> {
    let dim = g.dim();
    let m = g.matrix();
    let mut theta: Vec<f64> = (0..dim).map(|j| m[(j, j)].re).collect();
    for j in 0..dim {
        for k in j + 1..dim {
            theta.push(m[(j, k)].re);
            theta.push(m[(j, k)].im);
        }
    }
    theta
}

/// `U = exp(−iG(θ))`.
pub fn unitary_from_params(theta: &[f64], dim: usize) -> Result<UnitaryOperator> {
    let g = generator_from_params(theta, dim)?;
    UnitaryOperator::new(unitary_exp(&g, 1.0))
}

/// POVM `A_i = V†(|i⟩⟨i| ⊗ 1)V` with `V = W(|0⟩ ⊗ 1)` and `W` built from
/// `(m·d_E)²` parameters on `C^m ⊗ C^{d_E}`.
pub fn povm_from_params(theta: &[f64], environment_dim: usize, outcomes: usize) -> Result<Povm> {
    let n = outcomes * environment_dim;
    let w = unitary_from_params(theta, n)?;
    let v = w.matrix().columns(0, environment_dim).into_owned();
    Povm::from_isometry(&v, environment_dim, outcomes)
}

/// Objective over concatenated `(θ_U, θ_POVM)`.
pub struct BoundObjective {
    h0: HermitianOperator,
    ht: HermitianOperator,
    beta: f64,
    outcomes: usize,
    purification: Purification,
    delta_f: f64,
}

impl BoundObjective {
    pub fn new(
        h0: &HermitianOperator,
        ht: &HermitianOperator,
        beta: f64,
        outcomes: usize,
    ) -> Result<Self> {
        crate::operators::check_same_dim(h0.dim(), ht.dim(), "H_0 vs H_T")?;
        let rho0 = gibbs_state(h0, beta)?;
        Ok(Self {
            h0: h0.clone(),
            ht: ht.clone(),
            beta,
            outcomes,
            purification: purify(&rho0),
            delta_f: delta_f(h0, ht, beta)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn unitary_len(&self) -> usize {
        self.dim() * self.dim()
    }

    pub fn param_len(&self) -> usize {
        let n = self.outcomes * self.purification.dims().1;
        self.unitary_len() + n * n
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    /// Full report at `θ`; fails with an inequality violation if the bound
    /// chain breaks.
    pub fn report(&self, theta: &[f64]) -> Result<WorkReport> {
        if theta.len() != self.param_len() {
            return Err(Error::Validation(format!(
                "expected {} parameters, got {}",
                self.param_len(),
                theta.len()
            )));
        }
        let (tu, tp) = theta.split_at(self.unitary_len());
        let u = unitary_from_params(tu, self.dim())?;
        let povm = povm_from_params(tp, self.purification.dims().1, self.outcomes)?;
        let d = decompose_via_povm(&self.purification, &povm)?;
        work_report(&d, &u, &self.h0, &self.ht, self.beta)
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.report(theta)?.delta_f_tilde)
    }

    /// Identity driving plus a POVM reading out the environment in the
    /// purification's computational basis (outcome `e mod m`). Saturates the
    /// bound when `m ≥ d_E` and the Hamiltonians are diagonal.
    pub fn saturating_point(&self) -> Vec<f64> {
        let de = self.purification.dims().1;
        let m = self.outcomes;
        let n = m * de;
        // W|0, e⟩ = |e mod m, e div m⟩; the remaining basis vectors fill the gaps in order.
        let mut image: Vec<usize> = (0..de).map(|e| (e % m) * de + e / m).collect();
        let used: std::collections::BTreeSet<usize> = image.iter().copied().collect();
        let free: Vec<usize> = (0..n).filter(|x| !used.contains(x)).collect();
        image.extend(free);
        let mut domain: Vec<usize> = (0..de).collect();
        domain.extend((0..n).filter(|&x| x >= de));
        let mut w = ComplexMatrix::zeros(n, n);
        for (&col, &row) in domain.iter().zip(&image) {
            w[(row, col)] = c(1.0, 0.0);
        }
        let mut theta = vec![0.0; self.unitary_len()];
        theta.extend(params_from_generator(&permutation_generator(&w)));
        theta
    }
}

/// A Hermitian `G` with `exp(−iG) = P` for a permutation matrix `P`.
fn permutation_generator(p: &ComplexMatrix) -> HermitianOperator {
    let n = p.nrows();
    let mut g = ComplexMatrix::zeros(n, n);
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut cycle = vec![start];
        seen[start] = true;
        let next = |x: usize| {
            (0..n)
                .find(|&r| p[(r, x)].re > 0.5)
                .expect("permutation column")
        };
        let mut cur = next(start);
        while cur != start {
            seen[cur] = true;
            cycle.push(cur);
            cur = next(cur);
        }
        let len = cycle.len();
        if len == 1 {
            continue;
        }
        // Cycle eigenvectors are Fourier modes with eigenvalues e^{2πik/len};
        // choose G with eigenvalues −2πk/len on the cycle subspace.
        for k in 0..len {
            let phase = 2.0 * std::f64::consts::PI * k as f64 / len as f64;
            let lam = -phase;
            for (a, &ia) in cycle.iter().enumerate() {
                for (b, &ib) in cycle.iter().enumerate() {
                    let va = num_complex::Complex64::from_polar(
                        1.0 / (len as f64).sqrt(),
                        -phase * a as f64,
                    );
                    let vb = num_complex::Complex64::from_polar(
                        1.0 / (len as f64).sqrt(),
                        -phase * b as f64,
                    );
                    g[(ia, ib)] += va * vb.conj() * lam;
                }
            }
        }
    }
    HermitianOperator::hermitian_part(&g)
}

struct Problem<'a> {
    objective: &'a BoundObjective,
    trace: &'a Mutex<Vec<f64>>,
    failure: &'a Mutex<Option<Error>>,
}

impl CostFunction for Problem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        match self.objective.value(theta) {
            Ok(v) => {
                let mut trace = self.trace.lock().expect("trace lock");
                let best = trace.last().map_or(v, |&b: &f64| b.min(v));
                trace.push(best);
                Ok(v)
            }
            Err(e) => {
                let msg = e.to_string();
                self.failure.lock().expect("failure lock").get_or_insert(e);
                Err(argmin::core::Error::msg(msg))
            }
        }
    }
}

fn run_restart(
    objective: &BoundObjective,
    config: &OptimizationConfig,
    index: usize,
) -> Result<(RestartOutcome, Vec<f64>)> {
    let n = objective.param_len();
    let seed = stream_seed(config.seed, index as u64);
    let start: Vec<f64> = if index == 0 {
        match &config.initial_point {
            Some(p) => p.clone(),
            None => vec![0.0; n],
        }
    } else {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| config.init_scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    if start.len() != n {
        return Err(Error::Validation(format!(
            "initial point has {} entries, expected {n}",
            start.len()
        )));
    }
    let mut simplex = vec![start.clone()];
    for i in 0..n {
        let mut v = start.clone();
        v[i] += config.initial_step;
        simplex.push(v);
    }
    let nf = n as f64;
    let solver = NelderMead::new(simplex)
        .with_alpha(1.0)
        .and_then(|s| s.with_gamma(1.0 + 2.0 / nf))
        .and_then(|s| s.with_rho((0.75 - 1.0 / (2.0 * nf)).min(0.5)))
        .and_then(|s| s.with_sigma(1.0 - 1.0 / nf))
        .and_then(|s| s.with_sd_tolerance(config.tol))
        .map_err(|e| Error::Validation(format!("simplex configuration: {e}")))?;
    let trace = Mutex::new(Vec::new());
    let failure = Mutex::new(None);
    let problem = Problem {
        objective,
        trace: &trace,
        failure: &failure,
    };
    let outcome = Executor::new(problem, solver)
        .configure(|s| s.max_iters(config.max_iters))
        .run();
    if let Some(e) = failure.lock().expect("failure lock").take() {
        return Err(e);
    }
    let res = outcome.map_err(|e| Error::Construction(format!("simplex search failed: {e}")))?;
    let state = res.state();
    let best_param = state.get_best_param().cloned().unwrap_or(start);
    let converged = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    );
    let trace = trace.into_inner().expect("trace lock");
    let best = objective.value(&best_param)?;
    Ok((
        RestartOutcome {
            index,
            seed,
            best,
            evaluations: trace.len(),
            converged,
            trace,
        },
        best_param,
    ))
}

/// Minimizes `ΔF̃` over `(U, POVM)` from `config.restarts` starting points
/// evaluated in parallel. Ties go to the lowest restart index.
pub fn minimize_bound(
    h0: &HermitianOperator,
    ht: &HermitianOperator,
    beta: f64,
    config: &OptimizationConfig,
) -> Result<OptimizationResult> {
    config.validate()?;
    let objective = BoundObjective::new(h0, ht, beta, config.povm_outcomes)?;
    let runs = (0..config.restarts)
        .into_par_iter()
        .map(|i| run_restart(&objective, config, i))
        .collect::<Result<Vec<_>>>()?;
    let (winner, params) = runs
        .iter()
        .min_by(|a, b| {
            a.0.best
                .total_cmp(&b.0.best)
                .then(a.0.index.cmp(&b.0.index))
        })
        .expect("at least one restart");
    let best_report = objective.report(params)?;
    let min_evaluated = runs
        .iter()
        .flat_map(|(r, _)| r.trace.last().copied())
        .fold(f64::INFINITY, f64::min)
        .min(winner.best);
    let delta_f = objective.delta_f();
    let scale = delta_f.abs().max(1.0);
    if min_evaluated < delta_f - crate::driving::INEQUALITY_TOL * scale {
        return Err(Error::InequalityViolation(format!(
            "evaluated ΔF̃ = {min_evaluated:e} below ΔF = {delta_f:e}"
        )));
    }
    let (tu, tp) = params.split_at(objective.unitary_len());
    Ok(OptimizationResult {
        best_delta_f_tilde: winner.best,
        delta_f,
        certificate_gap: winner.best - delta_f,
        min_evaluated,
        unitary_params: tu.to_vec(),
        povm_params: tp.to_vec(),
        best_restart: winner.index,
        converged: winner.converged,
        evaluations: runs.iter().map(|(r, _)| r.evaluations).sum(),
        trace: winner.trace.clone(),
        restarts: runs.into_iter().map(|(r, _)| r).collect(),
        best_report,
    })
}
