//! Open-system simulation of qubits coupled to independent Ornstein-Uhlenbeck
//! baths, each bath replaced by one damped, zero-frequency pseudomode.
//!
//! A bath with correlation `(Γγ/2) e^{-γ|t|}` becomes a mode `a` with coupling
//! `g σ_α (a + a†)`, `g = sqrt(Γγ/2)`, and collapse operator `sqrt(2γ) a`.

mod experiments;
mod kernel;
pub mod presets;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dfs::named_state;
use crate::linalg::structured::{FactorLayout, LocalOperator};
use crate::linalg::{state_fidelity, hermitian_eigen, LinalgError, OperatorMatrix, StateVector, C64, DEFAULT_MAX_SIDE};
use crate::qubit_ops::{PauliAxis, QubitError};
use crate::sequences::{
    schedule_concatenated, schedule_periodic, CycleKind, DecouplingCycle, EventKind, PulseMode,
    PulseSpacing, PulseTimeline, SequenceError,
};

pub use experiments::{compare_cycles, compare_schedules, CycleRow, ScheduleRow};
pub use kernel::{Generator, Jump, Rk4};

/// Trace drift that aborts a run.
pub const TRACE_TOL: f64 = 1e-6;
/// Most negative eigenvalue of the reduced state tolerated.
pub const POSITIVITY_TOL: f64 = 1e-6;
/// Default minimum number of uniform samples.
pub const MIN_SAMPLES: usize = 200;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("integrator failure at t = {t:.6}: {reason}")]
    Integrator { t: f64, reason: String },
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Qubit(#[from] QubitError),
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(DynamicsError::Config(msg.into()))
}

fn default_axis() -> PauliAxis {
    PauliAxis::X
}
fn default_strength() -> f64 {
    0.1
}
fn default_rate() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

/// One bath: Ornstein-Uhlenbeck correlation `(Γγ/2) e^{-γ|t|}` along `axis`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    #[serde(default = "default_axis")]
    pub axis: PauliAxis,
    /// Γ, in units of ω.
    #[serde(default = "default_strength")]
    pub strength: f64,
    /// γ, in units of ω.
    #[serde(default = "default_rate")]
    pub memory_rate: f64,
    /// Photon-number cutoff; defaults to 2 for up to two qubits and 1 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default = "yes")]
    pub enabled: bool,
}

impl Default for BathSpec {
    fn default() -> Self {
        Self {
            axis: default_axis(),
            strength: default_strength(),
            memory_rate: default_rate(),
            n_max: None,
            enabled: true,
        }
    }
}

impl BathSpec {
    /// Pseudomode coupling `sqrt(Γγ/2)`.
    pub fn mode_coupling(&self) -> f64 {
        (self.strength * self.memory_rate / 2.0).sqrt()
    }

    fn validate(&self) -> Result<()> {
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return config_err(format!("bath strength must be >= 0, got {}", self.strength));
        }
        if !(self.memory_rate > 0.0 && self.memory_rate.is_finite()) {
            return config_err(format!("memory rate must be > 0, got {}", self.memory_rate));
        }
        if self.n_max == Some(0) {
            return config_err("n_max must be >= 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlCycle {
    #[default]
    None,
    Optimal,
    Cyclic,
    Original4,
}

impl ControlCycle {
    pub fn kind(self) -> Option<CycleKind> {
        match self {
            ControlCycle::None => None,
            ControlCycle::Optimal => Some(CycleKind::Optimal),
            ControlCycle::Cyclic => Some(CycleKind::Cyclic),
            ControlCycle::Original4 => Some(CycleKind::Original4),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Back-to-back cycles.
    #[default]
    Periodic,
    /// Back-to-back concatenated super-cycles of `m²` intervals.
    Concatenated,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BathTopology {
    /// One mode per qubit.
    #[default]
    Independent,
    /// One shared mode coupled to `Σ_j σ_α^{(j)}`.
    Collective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    /// `psi1`, `psi2`, `psi3`.
    Label(String),
    /// Amplitudes as `[re, im]` pairs over the qubit basis; normalised on use.
    Amplitudes { amplitudes: Vec<[f64; 2]> },
}

fn one() -> f64 {
    1.0
}
fn default_tau() -> f64 {
    0.25
}
fn default_t_final() -> f64 {
    4.0
}
fn default_samples() -> usize {
    MIN_SAMPLES
}
fn default_baths() -> Vec<BathSpec> {
    vec![BathSpec::default()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_qubits: usize,
    /// Qubit frequency ω; times are in units of 1/ω when ω = 1.
    #[serde(default = "one")]
    pub omega: f64,
    /// One entry applies to every qubit; otherwise one entry per qubit.
    #[serde(default = "default_baths")]
    pub baths: Vec<BathSpec>,
    #[serde(default)]
    pub bath_topology: BathTopology,
    /// Give the odd-n ancilla its own bath (a copy of the first entry).
    #[serde(default)]
    pub ancilla_bath: bool,
    #[serde(default)]
    pub cycle: ControlCycle,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "ideal")]
    pub pulse: PulseMode,
    #[serde(default)]
    pub spacing: PulseSpacing,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// Integrator step; defaults to `min(τ/20, 0.005/ω)`. Control windows
    /// additionally cap the step at `0.02/J`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub initial_state: InitialState,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn ideal() -> PulseMode {
    PulseMode::Ideal
}

impl SimulationConfig {
    /// Defaults for `n` qubits starting in `state`, no control.
    pub fn new(n_qubits: usize, state: &str) -> Self {
        Self {
            n_qubits,
            omega: 1.0,
            baths: default_baths(),
            bath_topology: BathTopology::Independent,
            ancilla_bath: false,
            cycle: ControlCycle::None,
            schedule: Schedule::Periodic,
            tau: default_tau(),
            pulse: PulseMode::Ideal,
            spacing: PulseSpacing::Packed,
            t_final: default_t_final(),
            dt: None,
            initial_state: InitialState::Label(state.to_string()),
            samples: MIN_SAMPLES,
        }
    }

    pub fn max_step(&self) -> f64 {
        (self.tau / 20.0).min(0.005 / self.omega)
    }

    pub fn step(&self) -> f64 {
        self.dt.unwrap_or_else(|| self.max_step())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn n_sites(&self) -> usize {
        if self.cycle.kind() == Some(CycleKind::Optimal) && self.n_qubits % 2 == 1 {
            self.n_qubits + 1
        } else {
            self.n_qubits
        }
    }

    fn bath_for(&self, site: usize) -> Option<BathSpec> {
        let spec = if site >= self.n_qubits {
            self.ancilla_bath.then(|| self.baths[0].clone())?
        } else if self.baths.len() == 1 {
            self.baths[0].clone()
        } else {
            self.baths[site].clone()
        };
        spec.enabled.then_some(spec)
    }

    fn default_n_max(&self) -> usize {
        if self.n_qubits <= 2 {
            2
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > 12 {
            return config_err(format!("n_qubits must lie in 1..=12, got {}", self.n_qubits));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return config_err("omega must be positive");
        }
        if self.baths.is_empty() || (self.baths.len() != 1 && self.baths.len() != self.n_qubits) {
            return config_err(format!(
                "baths must hold 1 or {} entries, got {}",
                self.n_qubits,
                self.baths.len()
            ));
        }
        for b in &self.baths {
            b.validate()?;
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return config_err("tau must be positive");
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return config_err("t_final must be positive");
        }
        let dt = self.step();
        if !(dt > 0.0) || dt > self.max_step() * (1.0 + 1e-12) {
            return config_err(format!(
                "dt = {dt} exceeds min(tau/20, 0.005/omega) = {}",
                self.max_step()
            ));
        }
        if self.samples == 0 {
            return config_err("samples must be >= 1");
        }
        if self.cycle == ControlCycle::Original4 && self.n_qubits != 4 {
            return config_err("the original scheme needs n_qubits = 4");
        }
        self.initial_vector()?;
        Ok(())
    }

    /// Initial state on the physical qubits.
    pub fn initial_vector(&self) -> Result<StateVector> {
        let psi = match &self.initial_state {
            InitialState::Label(l) => match named_state(l) {
                Some(s) => s,
                None => return config_err(format!("unknown state label '{l}'")),
            },
            InitialState::Amplitudes { amplitudes } => {
                let amps = amplitudes.iter().map(|[re, im]| C64::new(*re, *im)).collect();
                let dims = vec![2; self.n_qubits];
                match StateVector::new(dims, amps).ok().and_then(|s| s.normalized()) {
                    Some(s) => s,
                    None => {
                        return config_err(format!(
                            "expected {} nonzero amplitudes",
                            1usize << self.n_qubits
                        ))
                    }
                }
            }
        };
        if psi.len() != 1 << self.n_qubits {
            return config_err(format!(
                "initial state has {} amplitudes, {} qubits need {}",
                psi.len(),
                self.n_qubits,
                1usize << self.n_qubits
            ));
        }
        Ok(psi)
    }

    /// Cycle on the simulated sites, if any.
    pub fn decoupling_cycle(&self) -> Result<Option<DecouplingCycle>> {
        Ok(match self.cycle.kind() {
            None => None,
            Some(kind) => Some(DecouplingCycle::build(kind, self.n_qubits)?),
        })
    }

    /// One repeating block of the schedule and the number of repeats covering `t_final`.
    pub fn block_timeline(&self) -> Result<Option<(PulseTimeline, usize)>> {
        let Some(cycle) = self.decoupling_cycle()? else {
            return Ok(None);
        };
        let block = match self.schedule {
            Schedule::Periodic => schedule_periodic(&cycle, 1, self.tau, self.pulse, self.spacing)?,
            Schedule::Concatenated => schedule_concatenated(&cycle, self.tau, self.pulse, self.spacing)?,
        };
        let period = block.total_duration();
        let repeats = (self.t_final / period).round();
        if repeats < 1.0 || (repeats * period - self.t_final).abs() > TIME_EPS * self.t_final.max(1.0) {
            return config_err(format!(
                "t_final = {} is not a multiple of the block duration {period}",
                self.t_final
            ));
        }
        Ok(Some((block, repeats as usize)))
    }
}

/// Pseudomode attached to one or more qubits.
#[derive(Clone, Debug)]
pub struct ModeInfo {
    pub factor: usize,
    pub sites: Vec<usize>,
    pub axis: PauliAxis,
    pub coupling: f64,
    pub damping: f64,
    pub dim: usize,
}

/// Qubits and pseudomodes with the structured Lindblad generator.
#[derive(Clone, Debug)]
pub struct Model {
    pub layout: FactorLayout,
    pub n_physical: usize,
    pub n_sites: usize,
    pub omega: f64,
    pub modes: Vec<ModeInfo>,
    generator: Generator,
}

fn lowering(dim: usize) -> OperatorMatrix {
    OperatorMatrix::from_fn(&[dim], |r, c| {
        if c == r + 1 {
            C64::new((c as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

pub fn build_model(config: &SimulationConfig) -> Result<Model> {
    config.validate()?;
    let n_sites = config.n_sites();
    let n_max = |b: &BathSpec| b.n_max.unwrap_or_else(|| config.default_n_max());
    let mut mode_specs: Vec<(Vec<usize>, BathSpec)> = Vec::new();
    match config.bath_topology {
        BathTopology::Independent => {
            for site in 0..n_sites {
                if let Some(b) = config.bath_for(site) {
                    mode_specs.push((vec![site], b));
                }
            }
        }
        BathTopology::Collective => {
            let b = config.baths[0].clone();
            if b.enabled {
                mode_specs.push(((0..config.n_qubits).collect(), b));
            }
        }
    }
    let mut dims = vec![2; n_sites];
    dims.extend(mode_specs.iter().map(|(_, b)| n_max(b) + 1));
    let side: usize = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).unwrap_or(usize::MAX);
    if side > DEFAULT_MAX_SIDE {
        return Err(LinalgError::Capacity {
            side,
            max: DEFAULT_MAX_SIDE,
        }
        .into());
    }
    let layout = FactorLayout::new(dims);
    let modes: Vec<ModeInfo> = mode_specs
        .into_iter()
        .enumerate()
        .map(|(k, (sites, b))| ModeInfo {
            factor: n_sites + k,
            sites,
            axis: b.axis,
            coupling: b.mode_coupling(),
            damping: 2.0 * b.memory_rate,
            dim: n_max(&b) + 1,
        })
        .collect();

    let half = config.omega / 2.0;
    let diagonal: Vec<C64> = (0..layout.total())
        .map(|r| {
            let mut re = 0.0;
            for q in 0..n_sites {
                re += if layout.digit(r, q) == 0 { half } else { -half };
            }
            let mut im = 0.0;
            for m in &modes {
                im -= m.damping / 2.0 * layout.digit(r, m.factor) as f64;
            }
            C64::new(re, im)
        })
        .collect();

    let mut terms = Vec::new();
    let mut jumps = Vec::new();
    for m in &modes {
        let a = lowering(m.dim);
        let x = (&a + &a.adjoint())?;
        let local = m.axis.matrix().kron(&x)?;
        for &s in &m.sites {
            terms.push((
                C64::new(m.coupling, 0.0),
                LocalOperator::new(&layout, &[s, m.factor], &local)?,
            ));
        }
        jumps.push(Jump {
            rate: m.damping,
            lower: LocalOperator::new(&layout, &[m.factor], &a)?,
            raise: LocalOperator::new(&layout, &[m.factor], &a.adjoint())?,
        });
    }
    Ok(Model {
        layout,
        n_physical: config.n_qubits,
        n_sites,
        omega: config.omega,
        modes,
        generator: Generator::new(diagonal, terms, jumps),
    })
}

impl Model {
    pub fn side(&self) -> usize {
        self.layout.total()
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    /// Dense `H_total`.
    pub fn hamiltonian(&self) -> Result<OperatorMatrix> {
        let dims = self.layout.dims();
        let mut h = OperatorMatrix::zeros(dims);
        for r in 0..self.side() {
            let mut d = 0.0;
            for q in 0..self.n_sites {
                d += if self.layout.digit(r, q) == 0 { 0.5 } else { -0.5 } * self.omega;
            }
            h.set(r, r, C64::new(d, 0.0));
        }
        for m in &self.modes {
            let a = lowering(m.dim);
            let local = m.axis.matrix().kron(&(&a + &a.adjoint())?)?;
            for &s in &m.sites {
                LocalOperator::new(&self.layout, &[s, m.factor], &local)?
                    .add_to_dense(C64::new(m.coupling, 0.0), h.data_mut());
            }
        }
        Ok(h)
    }

    /// Dense collapse operators `sqrt(2γ) a`.
    pub fn lindblad_operators(&self) -> Result<Vec<OperatorMatrix>> {
        self.modes
            .iter()
            .map(|m| {
                let op = LocalOperator::new(&self.layout, &[m.factor], &lowering(m.dim))?;
                Ok(op.to_dense(&self.layout).scale_real(m.damping.sqrt()))
            })
            .collect()
    }

    /// Control terms `J Σ_{pairs} h_{ij}` of one exchange layer.
    fn control_terms(
        &self,
        pairs: &[(usize, usize)],
        coupling: f64,
        generator: crate::qubit_ops::ExchangeGenerator,
    ) -> Result<Vec<(C64, LocalOperator)>> {
        let local = generator.local_matrix();
        pairs
            .iter()
            .map(|&(i, j)| {
                Ok((
                    C64::new(coupling, 0.0),
                    LocalOperator::new(&self.layout, &[i, j], &local)?,
                ))
            })
            .collect()
    }

    /// `|ψ ⊗ 0_ancilla><..| ⊗ |vac><vac|`.
    fn initial_density(&self, psi: &StateVector) -> Vec<C64> {
        let n = self.side();
        let rest = n >> self.n_sites;
        let shift = self.n_sites - self.n_physical;
        let mut rho = vec![C64::new(0.0, 0.0); n * n];
        let amps = psi.amplitudes();
        for (a, &x) in amps.iter().enumerate() {
            for (b, &y) in amps.iter().enumerate() {
                let r = (a << shift) * rest;
                let c = (b << shift) * rest;
                rho[r * n + c] = x * y.conj();
            }
        }
        rho
    }
}

/// One sample of a fidelity trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceSample {
    pub t: f64,
    pub fidelity: f64,
    /// Taken at a point where every qubit is back on its own site.
    pub boundary: bool,
}

/// Run statistics shared by every observer.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub steps: usize,
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FidelityTrace {
    pub samples: Vec<TraceSample>,
    pub fingerprint: String,
    pub stats: RunStats,
}

/// `%.12g`-style formatting.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}{:02}", trim(mant.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(format!("{:.*}", decimals, x))
    }
}

impl FidelityTrace {
    pub fn final_fidelity(&self) -> f64 {
        self.samples.last().map_or(f64::NAN, |s| s.fidelity)
    }

    /// Fidelity at the sample closest to `t`.
    pub fn fidelity_at(&self, t: f64) -> f64 {
        self.samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .map_or(f64::NAN, |s| s.fidelity)
    }

    pub fn boundary_samples(&self) -> impl Iterator<Item = &TraceSample> {
        self.samples.iter().filter(|s| s.boundary)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,fidelity\n");
        for p in &self.samples {
            s.push_str(&format_sig(p.t, 12));
            s.push(',');
            s.push_str(&format_sig(p.fidelity, 12));
            s.push('\n');
        }
        s
    }
}

/// Sample request: time and whether it is a cycle boundary.
fn sample_times(t_final: f64, uniform: usize, boundaries: &[f64]) -> Vec<(f64, bool)> {
    let mut out: Vec<(f64, bool)> = (0..=uniform)
        .map(|k| (t_final * k as f64 / uniform as f64, false))
        .collect();
    out.extend(boundaries.iter().map(|&t| (t, true)));
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, bool)> = Vec::with_capacity(out.len());
    for (t, b) in out {
        match merged.last_mut() {
            Some(last) if (last.0 - t).abs() < TIME_EPS => last.1 |= b,
            _ => merged.push((t, b)),
        }
    }
    merged
}

/// Largest `J h` accepted inside a control window.
const CONTROL_PHASE_STEP: f64 = 0.02;

enum Segment {
    Evolve {
        duration: f64,
        generator: Generator,
        max_step: f64,
        /// Dense `H` of a closed segment, propagated exactly.
        closed: Option<OperatorMatrix>,
    },
    Permute(Vec<usize>),
}

impl Segment {
    fn evolve(generator: Generator, duration: f64, max_step: f64, dims: &[usize]) -> Self {
        let closed = generator.closed_hamiltonian(dims);
        Segment::Evolve {
            duration,
            generator,
            max_step,
            closed,
        }
    }
}

/// Advance `rho` by `duration`; returns the number of steps taken.
fn propagate(
    rk: &mut Rk4,
    generator: &Generator,
    closed: Option<&OperatorMatrix>,
    rho: &mut Vec<C64>,
    duration: f64,
    max_step: f64,
) -> Result<usize> {
    let Some(h) = closed else {
        return Ok(rk.advance(generator, rho, duration, max_step));
    };
    if duration <= 0.0 {
        return Ok(0);
    }
    let u = h.expm_hermitian(duration)?;
    let state = OperatorMatrix::new(h.dims().to_vec(), std::mem::take(rho))?;
    *rho = u.matmul(&state)?.matmul(&u.adjoint())?.into_data();
    Ok(1)
}

/// Integrate the configuration, calling `observe(t, boundary, ρ_S)` at every sample.
pub fn evolve_with<F>(config: &SimulationConfig, mut observe: F) -> Result<RunStats>
where
    F: FnMut(f64, bool, &OperatorMatrix) -> Result<()>,
{
    let model = build_model(config)?;
    let psi = config.initial_vector()?;
    let n = model.side();
    let dt = config.step();
    let rest = n >> model.n_sites;
    let dims = model.layout.dims();

    let mut block: Vec<(f64, Segment)> = Vec::new();
    let mut boundaries = Vec::new();
    let repeats;
    match config.block_timeline()? {
        None => {
            repeats = 1;
            block.push((
                0.0,
                Segment::evolve(model.generator().clone(), config.t_final, dt, dims),
            ));
        }
        Some((timeline, reps)) => {
            repeats = reps;
            let period = timeline.total_duration();
            for r in 0..reps {
                let offset = r as f64 * period;
                boundaries.extend(timeline.cycle_boundaries().iter().map(|b| b + offset));
            }
            for e in timeline.events() {
                let seg = match &e.kind {
                    EventKind::Free => Segment::evolve(model.generator().clone(), e.duration, dt, dims),
                    EventKind::Instant(p) => Segment::Permute(p.lifted_basis_map(rest)),
                    EventKind::Control {
                        layer,
                        coupling,
                        generator,
                    } => Segment::evolve(
                        model
                            .generator()
                            .with_terms(model.control_terms(layer.pairs(), *coupling, *generator)?),
                        e.duration,
                        dt.min(CONTROL_PHASE_STEP / coupling.abs()),
                        dims,
                    ),
                };
                block.push((e.start, seg));
            }
        }
    }
    let period = if repeats == 0 { config.t_final } else { config.t_final / repeats as f64 };
    let samples = sample_times(config.t_final, config.samples.max(MIN_SAMPLES), &boundaries);

    let keep: Vec<usize> = (0..model.n_physical).collect();
    let mut rho = model.initial_density(&psi);
    let mut rk = Rk4::new(n);
    let mut stats = RunStats {
        steps: 0,
        max_trace_drift: 0.0,
        min_eigenvalue: f64::INFINITY,
    };
    let mut next = 0usize;

    let mut record = |t: f64, rho: &[C64], stats: &mut RunStats, boundary: bool| -> Result<()> {
        let trace: C64 = (0..n).map(|i| rho[i * n + i]).sum();
        let drift = (trace - C64::new(1.0, 0.0)).norm();
        stats.max_trace_drift = stats.max_trace_drift.max(drift);
        if drift > TRACE_TOL {
            return Err(DynamicsError::Integrator {
                t,
                reason: format!("trace drift {drift:.3e}"),
            });
        }
        let full = OperatorMatrix::new(model.layout.dims().to_vec(), rho.to_vec())?;
        let reduced = full.partial_trace(&keep)?;
        let sym = (&reduced + &reduced.adjoint())?.scale_real(0.5);
        let lowest = hermitian_eigen(&sym)?
            .values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        stats.min_eigenvalue = stats.min_eigenvalue.min(lowest);
        if lowest < -POSITIVITY_TOL {
            return Err(DynamicsError::Integrator {
                t,
                reason: format!("reduced state eigenvalue {lowest:.3e}"),
            });
        }
        observe(t, boundary, &sym)
    };

    // t = 0
    while next < samples.len() && samples[next].0 < TIME_EPS {
        record(samples[next].0, &rho, &mut stats, samples[next].1)?;
        next += 1;
    }
    for r in 0..repeats {
        let offset = r as f64 * period;
        for (idx, (start, seg)) in block.iter().enumerate() {
            let t0 = offset + start;
            let t_end = match seg {
                Segment::Evolve {
                    duration,
                    generator,
                    max_step,
                    closed,
                } => {
                    let t1 = t0 + duration;
                    let mut t = t0;
                    while next < samples.len() && samples[next].0 < t1 - TIME_EPS {
                        let ts = samples[next].0;
                        if ts > t + TIME_EPS {
                            stats.steps +=
                                propagate(&mut rk, generator, closed.as_ref(), &mut rho, ts - t, *max_step)?;
                            t = ts;
                        }
                        record(ts, &rho, &mut stats, samples[next].1)?;
                        next += 1;
                    }
                    stats.steps += propagate(&mut rk, generator, closed.as_ref(), &mut rho, t1 - t, *max_step)?;
                    t1
                }
                Segment::Permute(map) => {
                    rk.permute(map, &mut rho);
                    t0
                }
            };
            let instant_follows = match block.get(idx + 1) {
                Some((s, Segment::Permute(_))) => (offset + s - t_end).abs() < TIME_EPS,
                _ => false,
            };
            if !instant_follows {
                while next < samples.len() && samples[next].0 <= t_end + TIME_EPS {
                    record(samples[next].0, &rho, &mut stats, samples[next].1)?;
                    next += 1;
                }
            }
        }
    }
    Ok(stats)
}

pub fn evolve(config: &SimulationConfig) -> Result<FidelityTrace> {
    let psi = config.initial_vector()?;
    let mut samples = Vec::new();
    let stats = evolve_with(config, |t, boundary, rho_s| {
        let fidelity = state_fidelity(&psi, rho_s)?;
        if let Some(last) = samples.last() {
            let last: &TraceSample = last;
            if t <= last.t {
                return Err(DynamicsError::Integrator {
                    t,
                    reason: "sample times not increasing".into(),
                });
            }
        }
        samples.push(TraceSample {
            t,
            fidelity,
            boundary,
        });
        Ok(())
    })?;
    Ok(FidelityTrace {
        samples,
        fingerprint: config.fingerprint(),
        stats,
    })
}

/// Closed-form correlation and the pseudomode prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CorrelationPoint {
    pub t: f64,
    pub closed_form: f64,
    pub pseudomode: f64,
}

pub fn bath_correlation_oracle(strength: f64, rate: f64, times: &[f64]) -> Vec<CorrelationPoint> {
    let g = BathSpec {
        strength,
        memory_rate: rate,
        ..BathSpec::default()
    }
    .mode_coupling();
    times
        .iter()
        .map(|&t| CorrelationPoint {
            t,
            closed_form: strength * rate / 2.0 * (-rate * t.abs()).exp(),
            pseudomode: g * g * (-rate * t.abs()).exp(),
        })
        .collect()
}

/// Normalised coherence `2|ρ_01(t)|` of a qubit under pure dephasing, starting from `|+>`.
///
/// The dephasing exponent is `4 ∫_0^t ds_1 ∫_0^{s_1} ds_2 α(s_1 - s_2)`, with the
/// double integral equal to `(Γ/2)[t - (1 - e^{-γt})/γ]`.
pub fn dephasing_oracle(strength: f64, rate: f64, times: &[f64]) -> Vec<f64> {
    times
        .iter()
        .map(|&t| {
            let d = strength / 2.0 * (t - (1.0 - (-rate * t).exp()) / rate);
            (-4.0 * d).exp()
        })
        .collect()
}

/// Coherence `2|ρ_01|` from the pseudomode simulation of the dephasing model.
pub fn simulate_dephasing(
    strength: f64,
    rate: f64,
    n_max: usize,
    t_final: f64,
    samples: usize,
) -> Result<Vec<(f64, f64)>> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut config = SimulationConfig::new(1, "");
    config.initial_state = InitialState::Amplitudes {
        amplitudes: vec![[h, 0.0], [h, 0.0]],
    };
    config.baths = vec![BathSpec {
        axis: PauliAxis::Z,
        strength,
        memory_rate: rate,
        n_max: Some(n_max),
        enabled: true,
    }];
    config.t_final = t_final;
    config.samples = samples;
    let mut out = Vec::new();
    evolve_with(&config, |t, _, rho| {
        out.push((t, 2.0 * rho.get(0, 1).norm()));
        Ok(())
    })?;
    Ok(out)
}

/// Exchange window for coupling `J`.
pub fn exchange_window(coupling: f64) -> f64 {
    PI / (4.0 * coupling)
}

#[cfg(test)]
mod tests;
