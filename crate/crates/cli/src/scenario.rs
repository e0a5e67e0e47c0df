//! Scenario files: JSON input describing Hamiltonians, driving, the thermal
//! decomposition, damping, meter and optimizer settings.
//!
//! Complex numbers are `[re, im]` pairs and matrices are arrays of rows.
//! Hamiltonians are declared once under `hamiltonians` and referenced by name
//! everywhere else. Every validation error carries the JSON path of the field
//! that caused it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use qfluct::driving::{propagator, DrivingProtocol, HamiltonianPath, Segment};
use qfluct::meter::{effective_hamiltonian, JointHamiltonian, MeterPath, MeterScenario};
use qfluct::openthermo::{
    mixture_reset_channel, partial_swap, thermal_attach_channel, DampingEvent, DampingSchedule,
    QuantumChannel,
};
use qfluct::operators::{ComplexMatrix, ComplexVector, HermitianOperator};
use qfluct::optimize::OptimizationConfig;
use qfluct::states::{
    decompose_via_povm, gibbs_state, purify, random_povm, Decomposition, DensityOperator, Povm,
    PovmFamily, UnitaryOperator,
};

use crate::error::{AtPath, CliError};

pub const SCHEMA_VERSION: &str = "1";

/// Dense complex matrix as rows of `[re, im]` pairs.
pub type MatrixSpec = Vec<Vec<[f64; 2]>>;
/// Complex vector as `[re, im]` pairs.
pub type VectorSpec = Vec<[f64; 2]>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: String,
    #[serde(default)]
    pub id: Option<String>,
    pub beta: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub hamiltonians: BTreeMap<String, MatrixSpec>,
    #[serde(default)]
    pub protocol: Option<ProtocolSpec>,
    #[serde(default)]
    pub decomposition: DecompositionSpec,
    #[serde(default)]
    pub damping: Vec<DampingSpec>,
    #[serde(default)]
    pub meter: Option<MeterSpec>,
    #[serde(default)]
    pub optimize: Option<OptimizeSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolSpec {
    /// Instantaneous quench: `U = 1`.
    Sudden { from: String, to: String },
    /// Explicit unitary between `from` and `to`.
    Unitary {
        from: String,
        to: String,
        unitary: MatrixSpec,
    },
    /// `H(t) = H_from + (t/T)(H_to − H_from)`.
    Linear {
        from: String,
        to: String,
        duration: f64,
        #[serde(default = "default_steps")]
        steps: usize,
    },
    /// Consecutive segments starting at `t = 0`.
    Segments {
        segments: Vec<SegmentSpec>,
        #[serde(default = "default_steps")]
        steps: usize,
    },
}

fn default_steps() -> usize {
    256
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "path", rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmentSpec {
    Constant {
        hamiltonian: String,
        duration: f64,
    },
    Linear {
        from: String,
        to: String,
        duration: f64,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecompositionSpec {
    Trivial,
    #[default]
    Eigen,
    PovmRandom {
        m: usize,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        family: FamilySpec,
    },
    PovmExplicit {
        elements: Vec<MatrixSpec>,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilySpec {
    #[default]
    Haar,
    Projective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DampingSpec {
    pub time: f64,
    pub hamiltonian: String,
    pub channel: ChannelSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    /// `(1 − λ)ρ + λ ρ_β`
    MixtureReset {
        lambda: f64,
    },
    /// Replace the state by the Gibbs state.
    Reset,
    /// Remove coherences in the energy eigenbasis.
    Dephasing,
    /// Partial swap with a thermal copy of the system.
    ThermalAttach {
        theta: f64,
    },
    Kraus {
        operators: Vec<MatrixSpec>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeterSpec {
    /// Joint Hamiltonian on system ⊗ meter.
    pub h_sm: MatrixSpec,
    pub system_dim: usize,
    pub meter_dim: usize,
    pub path: MeterPathSpec,
    pub duration: f64,
    /// Step counts `N` of the convergence scan.
    pub steps: Vec<usize>,
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default)]
    pub initial_state: InitialStateSpec,
}

fn default_shots() -> usize {
    20_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeterPathSpec {
    Constant {
        state: VectorSpec,
    },
    Rotation {
        omega: f64,
        #[serde(default)]
        from: Option<VectorSpec>,
        #[serde(default)]
        to: Option<VectorSpec>,
    },
    Sampled {
        times: Vec<f64>,
        states: Vec<VectorSpec>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialStateSpec {
    /// Gibbs state of the effective Hamiltonian at `t = 0`.
    #[default]
    GibbsEffective,
    Density {
        matrix: MatrixSpec,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSpec {
    pub restarts: Option<usize>,
    pub max_iters: Option<u64>,
    pub initial_step: Option<f64>,
    pub tol: Option<f64>,
    pub povm_outcomes: Option<usize>,
    pub init_scale: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Beta,
    /// Every `mixture_reset` strength.
    Lambda,
    /// Driving discretization steps.
    Steps,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Beta => "beta",
            SweepParameter::Lambda => "lambda",
            SweepParameter::Steps => "steps",
        }
    }
}

/// Parses scenario JSON, reporting the failing field path and position.
pub fn parse(text: &str) -> Result<ScenarioFile, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::input("parse", e.inner().to_string()).at(path)
    })?;
    if file.version != SCHEMA_VERSION {
        return Err(CliError::input(
            "validation",
            format!(
                "unsupported scenario version {:?}, expected {SCHEMA_VERSION:?}",
                file.version
            ),
        )
        .at("version"));
    }
    Ok(file)
}

fn matrix(spec: &MatrixSpec, path: &str) -> Result<ComplexMatrix, CliError> {
    let n = spec.len();
    if n == 0 {
        return Err(CliError::input("validation", "matrix is empty").at(path));
    }
    let cols = spec[0].len();
    if let Some((r, row)) = spec.iter().enumerate().find(|(_, row)| row.len() != cols) {
        return Err(CliError::input(
            "validation",
            format!("row has {} entries, expected {cols}", row.len()),
        )
        .at(format!("{path}[{r}]")));
    }
    if spec.iter().flatten().flatten().any(|x| !x.is_finite()) {
        return Err(CliError::input("validation", "matrix entries must be finite").at(path));
    }
    Ok(ComplexMatrix::from_fn(n, cols, |r, c| {
        let [re, im] = spec[r][c];
        qfluct::operators::c(re, im)
    }))
}

fn vector(spec: &VectorSpec, path: &str) -> Result<ComplexVector, CliError> {
    if spec.is_empty() {
        return Err(CliError::input("validation", "vector is empty").at(path));
    }
    Ok(ComplexVector::from_iterator(
        spec.len(),
        spec.iter().map(|[re, im]| qfluct::operators::c(*re, *im)),
    ))
}

fn hermitian(spec: &MatrixSpec, path: &str) -> Result<HermitianOperator, CliError> {
    HermitianOperator::new(matrix(spec, path)?).at(path)
}

pub fn matrix_spec(m: &ComplexMatrix) -> MatrixSpec {
    (0..m.nrows())
        .map(|r| {
            (0..m.ncols())
                .map(|c| [m[(r, c)].re, m[(r, c)].im])
                .collect()
        })
        .collect()
}

/// Closed-system inputs shared by `bound`, `optimize` and `sweep`.
pub struct ClosedInputs {
    pub h0: HermitianOperator,
    pub ht: HermitianOperator,
    pub unitary: UnitaryOperator,
    pub decomposition: Decomposition,
}

impl ScenarioFile {
    pub fn scenario_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| "scenario".into())
    }

    pub fn hamiltonian(&self, name: &str, path: &str) -> Result<HermitianOperator, CliError> {
        let spec = self.hamiltonians.get(name).ok_or_else(|| {
            CliError::input("validation", format!("unknown Hamiltonian {name:?}")).at(path)
        })?;
        hermitian(spec, &format!("hamiltonians.{name}"))
    }

    fn protocol_spec(&self) -> Result<&ProtocolSpec, CliError> {
        self.protocol
            .as_ref()
            .ok_or_else(|| CliError::input("validation", "scenario has no protocol").at("protocol"))
    }

    /// Endpoint Hamiltonians `(H_0, H_T)` of the protocol.
    pub fn endpoints(&self) -> Result<(HermitianOperator, HermitianOperator), CliError> {
        match self.protocol_spec()? {
            ProtocolSpec::Sudden { from, to }
            | ProtocolSpec::Unitary { from, to, .. }
            | ProtocolSpec::Linear { from, to, .. } => Ok((
                self.hamiltonian(from, "protocol.from")?,
                self.hamiltonian(to, "protocol.to")?,
            )),
            ProtocolSpec::Segments { .. } => {
                let p = self.driving_protocol()?;
                Ok((p.initial_hamiltonian(), p.final_hamiltonian()))
            }
        }
    }

    /// Time-resolved protocol and its step count.
    pub fn driving(&self) -> Result<(DrivingProtocol, usize), CliError> {
        let steps = match self.protocol_spec()? {
            ProtocolSpec::Linear { steps, .. } | ProtocolSpec::Segments { steps, .. } => *steps,
            _ => {
                return Err(CliError::input(
                    "validation",
                    "a time-resolved protocol (linear or segments) is required",
                )
                .at("protocol.type"))
            }
        };
        if steps == 0 {
            return Err(
                CliError::input("validation", "steps must be positive").at("protocol.steps")
            );
        }
        Ok((self.driving_protocol()?, steps))
    }

    fn driving_protocol(&self) -> Result<DrivingProtocol, CliError> {
        match self.protocol_spec()? {
            ProtocolSpec::Linear {
                from, to, duration, ..
            } => DrivingProtocol::linear(
                self.hamiltonian(from, "protocol.from")?,
                self.hamiltonian(to, "protocol.to")?,
                *duration,
            )
            .at("protocol"),
            ProtocolSpec::Segments { segments, .. } => {
                let mut t = 0.0;
                let mut built = Vec::with_capacity(segments.len());
                for (k, s) in segments.iter().enumerate() {
                    let at = format!("protocol.segments[{k}]");
                    let (path, duration) = match s {
                        SegmentSpec::Constant {
                            hamiltonian,
                            duration,
                        } => (
                            HamiltonianPath::Constant(
                                self.hamiltonian(hamiltonian, &format!("{at}.hamiltonian"))?,
                            ),
                            *duration,
                        ),
                        SegmentSpec::Linear { from, to, duration } => (
                            HamiltonianPath::Linear {
                                from: self.hamiltonian(from, &format!("{at}.from"))?,
                                to: self.hamiltonian(to, &format!("{at}.to"))?,
                            },
                            *duration,
                        ),
                    };
                    built.push(Segment {
                        t_start: t,
                        t_end: t + duration,
                        path,
                    });
                    t += duration;
                }
                DrivingProtocol::new(built).at("protocol.segments")
            }
            _ => Err(
                CliError::input("validation", "protocol is not time-resolved").at("protocol.type"),
            ),
        }
    }

    /// Driving unitary over the whole protocol.
    pub fn unitary(&self) -> Result<UnitaryOperator, CliError> {
        match self.protocol_spec()? {
            ProtocolSpec::Sudden { from, .. } => Ok(UnitaryOperator::identity(
                self.hamiltonian(from, "protocol.from")?.dim(),
            )),
            ProtocolSpec::Unitary { unitary, .. } => {
                UnitaryOperator::new(matrix(unitary, "protocol.unitary")?).at("protocol.unitary")
            }
            _ => {
                let (p, steps) = self.driving()?;
                propagator(&p, steps).at("protocol")
            }
        }
    }

    /// Decomposition of `gibbs(H_0, β)`; `run_seed` seeds random POVMs that
    /// do not declare their own seed.
    pub fn decomposition(
        &self,
        h0: &HermitianOperator,
        run_seed: u64,
    ) -> Result<Decomposition, CliError> {
        let rho0 = gibbs_state(h0, self.beta).at("beta")?;
        match &self.decomposition {
            DecompositionSpec::Trivial => Ok(Decomposition::trivial(&rho0)),
            DecompositionSpec::Eigen => Decomposition::eigen(&rho0).at("decomposition"),
            DecompositionSpec::PovmRandom { m, seed, family } => {
                let family = match family {
                    FamilySpec::Haar => PovmFamily::HaarIsometry,
                    FamilySpec::Projective => PovmFamily::Projective,
                };
                let povm = random_povm(rho0.dim(), *m, seed.unwrap_or(run_seed), family)
                    .at("decomposition.m")?;
                decompose_via_povm(&purify(&rho0), &povm).at("decomposition")
            }
            DecompositionSpec::PovmExplicit { elements } => {
                let ops = elements
                    .iter()
                    .enumerate()
                    .map(|(k, e)| hermitian(e, &format!("decomposition.elements[{k}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                let povm = Povm::new(ops).at("decomposition.elements")?;
                decompose_via_povm(&purify(&rho0), &povm).at("decomposition.elements")
            }
        }
    }

    pub fn closed(&self, run_seed: u64) -> Result<ClosedInputs, CliError> {
        require_beta(self.beta)?;
        let (h0, ht) = self.endpoints()?;
        let unitary = self.unitary()?;
        let decomposition = self.decomposition(&h0, run_seed)?;
        Ok(ClosedInputs {
            h0,
            ht,
            unitary,
            decomposition,
        })
    }

    pub fn schedule(&self) -> Result<DampingSchedule, CliError> {
        require_beta(self.beta)?;
        let events = self
            .damping
            .iter()
            .enumerate()
            .map(|(k, ev)| {
                let at = format!("damping[{k}]");
                let h = self.hamiltonian(&ev.hamiltonian, &format!("{at}.hamiltonian"))?;
                let channel = self.channel(&ev.channel, &h, &format!("{at}.channel"))?;
                Ok(DampingEvent {
                    time: ev.time,
                    hamiltonian: h,
                    channel,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        DampingSchedule::new(events, self.beta).at("damping")
    }

    fn channel(
        &self,
        spec: &ChannelSpec,
        h: &HermitianOperator,
        path: &str,
    ) -> Result<QuantumChannel, CliError> {
        match spec {
            ChannelSpec::MixtureReset { lambda } => {
                mixture_reset_channel(h, self.beta, *lambda).at(&format!("{path}.lambda"))
            }
            ChannelSpec::Reset => Ok(QuantumChannel::reset_to(
                &gibbs_state(h, self.beta).at(path)?,
            )),
            ChannelSpec::Dephasing => Ok(QuantumChannel::dephasing(h)),
            ChannelSpec::ThermalAttach { theta } => {
                thermal_attach_channel(h, self.beta, h, &partial_swap(h.dim(), *theta)).at(path)
            }
            ChannelSpec::Kraus { operators } => {
                let ks = operators
                    .iter()
                    .enumerate()
                    .map(|(k, m)| matrix(m, &format!("{path}.operators[{k}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                QuantumChannel::new(ks).at(&format!("{path}.operators"))
            }
        }
    }

    pub fn meter(&self) -> Result<(MeterScenario, &MeterSpec), CliError> {
        let spec = self.meter.as_ref().ok_or_else(|| {
            CliError::input("validation", "scenario has no meter block").at("meter")
        })?;
        let h = hermitian(&spec.h_sm, "meter.h_sm")?;
        let joint = JointHamiltonian::new(h, spec.system_dim, spec.meter_dim).at("meter.h_sm")?;
        let path = match &spec.path {
            MeterPathSpec::Constant { state } => {
                MeterPath::Constant(vector(state, "meter.path.state")?)
            }
            MeterPathSpec::Rotation { omega, from, to } => {
                let mut p = MeterPath::rotation(spec.meter_dim, *omega);
                if let MeterPath::Rotation { from: f, to: t, .. } = &mut p {
                    if let Some(v) = from {
                        *f = vector(v, "meter.path.from")?;
                    }
                    if let Some(v) = to {
                        *t = vector(v, "meter.path.to")?;
                    }
                }
                p
            }
            MeterPathSpec::Sampled { times, states } => MeterPath::Sampled {
                times: times.clone(),
                states: states
                    .iter()
                    .enumerate()
                    .map(|(k, s)| vector(s, &format!("meter.path.states[{k}]")))
                    .collect::<Result<_, _>>()?,
            },
        };
        if spec.steps.is_empty() || spec.steps.contains(&0) {
            return Err(CliError::input(
                "validation",
                "step counts must be positive and non-empty",
            )
            .at("meter.steps"));
        }
        let probe = qfluct::meter::MeterProtocol::new(path.clone(), spec.duration, spec.steps[0])
            .at("meter.path")?;
        let initial_state = match &spec.initial_state {
            InitialStateSpec::GibbsEffective => {
                require_beta(self.beta)?;
                let h0 =
                    effective_hamiltonian(&joint, &probe.path().state_at(0.0)).at("meter.path")?;
                gibbs_state(&h0, self.beta).at("beta")?
            }
            InitialStateSpec::Density { matrix: m } => {
                DensityOperator::new(matrix(m, "meter.initial_state.matrix")?)
                    .at("meter.initial_state.matrix")?
            }
        };
        Ok((
            MeterScenario {
                joint,
                path,
                duration: spec.duration,
                initial_state,
            },
            spec,
        ))
    }

    pub fn optimization_config(&self, seed: u64) -> OptimizationConfig {
        let mut cfg = OptimizationConfig {
            seed,
            ..Default::default()
        };
        if let Some(o) = &self.optimize {
            cfg.restarts = o.restarts.unwrap_or(cfg.restarts);
            cfg.max_iters = o.max_iters.unwrap_or(cfg.max_iters);
            cfg.initial_step = o.initial_step.unwrap_or(cfg.initial_step);
            cfg.tol = o.tol.unwrap_or(cfg.tol);
            cfg.povm_outcomes = o.povm_outcomes.unwrap_or(cfg.povm_outcomes);
            cfg.init_scale = o.init_scale.unwrap_or(cfg.init_scale);
        }
        cfg
    }

    /// Copy of the scenario with one sweep parameter replaced.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Result<Self, CliError> {
        let mut s = self.clone();
        match parameter {
            SweepParameter::Beta => s.beta = value,
            SweepParameter::Lambda => {
                let mut found = false;
                for ev in &mut s.damping {
                    if let ChannelSpec::MixtureReset { lambda } = &mut ev.channel {
                        *lambda = value;
                        found = true;
                    }
                }
                if !found {
                    return Err(CliError::input(
                        "validation",
                        "lambda sweep needs at least one mixture_reset damping event",
                    )
                    .at("sweep.parameter"));
                }
            }
            SweepParameter::Steps => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(CliError::input(
                        "validation",
                        format!("steps must be a positive integer, got {value}"),
                    )
                    .at("sweep.values"));
                }
                match &mut s.protocol {
                    Some(ProtocolSpec::Linear { steps, .. })
                    | Some(ProtocolSpec::Segments { steps, .. }) => *steps = value as usize,
                    _ => {
                        return Err(CliError::input(
                            "validation",
                            "steps sweep needs a time-resolved protocol",
                        )
                        .at("sweep.parameter"))
                    }
                }
            }
        }
        Ok(s)
    }
}

fn require_beta(beta: f64) -> Result<(), CliError> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(CliError::input(
            "validation",
            format!("beta must be positive and finite, got {beta}"),
        )
        .at("beta"))
    }
}
