//! Decoupling cycles built from two-qubit exchanges, and their expansion
//! into concrete pulse timelines.
//!
//! A cycle with `m` intervals holds the cumulative controllers
//! `g_0 = I, g_1, ..., g_{m-1}` together with the exchange pulses that move
//! between them. `g_{k+1} = pulse_k ∘ g_k`, and the closing pulse returns
//! `g_{m-1}` to the identity.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qubit_ops::{ExchangeGenerator, QubitError, QubitPermutation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequenceError {
    #[error("a decoupling cycle needs at least 2 qubits, got {0}")]
    TooFewQubits(usize),
    #[error("interval tau must be positive and finite, got {0}")]
    BadInterval(f64),
    #[error("exchange coupling J must be positive and finite, got {0}")]
    BadCoupling(f64),
    #[error("control windows need {needed:.6} but the interval is only {tau:.6}")]
    WindowExceedsInterval { needed: f64, tau: f64 },
    #[error("layer {0:?} reuses a qubit")]
    OverlappingLayer(Vec<(usize, usize)>),
    #[error("cycle invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Qubit(#[from] QubitError),
}

/// Set of disjoint exchanges fired simultaneously.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PulseLayer(Vec<(usize, usize)>);

impl PulseLayer {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self, SequenceError> {
        let mut used = Vec::new();
        for &(i, j) in &pairs {
            if i == j || used.contains(&i) || used.contains(&j) {
                return Err(SequenceError::OverlappingLayer(pairs));
            }
            used.push(i);
            used.push(j);
        }
        let mut norm: Vec<_> = pairs.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
        norm.sort_unstable();
        Ok(Self(norm))
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn gate_count(&self) -> usize {
        self.0.len()
    }

    pub fn permutation(&self, n: usize) -> Result<QubitPermutation, QubitError> {
        QubitPermutation::from_exchanges(&self.0, n)
    }
}

impl fmt::Display for PulseLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(i, j)| format!("E{},{}", i + 1, j + 1))
            .collect();
        write!(f, "{{{}}}", parts.join(" "))
    }
}

/// Exchange layers fired one after another (first layer first).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pulse {
    layers: Vec<PulseLayer>,
}

impl Pulse {
    pub fn new(layers: Vec<PulseLayer>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[PulseLayer] {
        &self.layers
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(PulseLayer::gate_count).sum()
    }

    pub fn permutation(&self, n: usize) -> Result<QubitPermutation, QubitError> {
        let mut p = QubitPermutation::identity(n);
        for layer in &self.layers {
            p = layer.permutation(n)?.compose(&p);
        }
        Ok(p)
    }

    /// Inverse pulse: layers are involutions, so reverse their order.
    pub fn inverse(&self) -> Self {
        Self {
            layers: self.layers.iter().rev().cloned().collect(),
        }
    }

    /// Concatenate and drop adjacent identical layers, which cancel.
    pub fn then_cancelled(&self, next: &Pulse) -> Self {
        let mut stack: Vec<PulseLayer> = Vec::new();
        for layer in self.layers.iter().chain(&next.layers) {
            if stack.last() == Some(layer) {
                stack.pop();
            } else {
                stack.push(layer.clone());
            }
        }
        Self { layers: stack }
    }
}

impl fmt::Display for Pulse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.layers.iter().map(|l| l.to_string()).collect();
        f.write_str(&parts.join(" -> "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CycleKind {
    /// Alternating nearest-neighbour pair layers on a ring.
    Optimal,
    /// Powers of the ring shift, each shift built from `n-1` sequential exchanges.
    Cyclic,
    /// Four-qubit ring shift realised as `E34`, `E23`, `E12` one by one.
    Original4,
}

impl fmt::Display for CycleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CycleKind::Optimal => "optimal",
            CycleKind::Cyclic => "cyclic",
            CycleKind::Original4 => "original4",
        })
    }
}

/// Gate and layer totals of one closed cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StepCount {
    /// Sequential exchange layers per closed cycle, closing pulse included.
    pub parallel_layers: usize,
    /// Two-qubit exchanges per closed cycle, closing pulse included.
    pub two_qubit_gates: usize,
    /// Two-qubit exchanges needed to step through `g_1 .. g_{m-1}` (closing pulse excluded).
    pub controller_gates: usize,
}

/// Permutation operators used versus state moves achieved over one cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MoveCount {
    pub ops: usize,
    pub moves: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingCycle {
    kind: CycleKind,
    /// Physical qubits requested by the caller.
    n_logical: usize,
    /// Sites the cycle acts on, ancilla included.
    n_qubits: usize,
    ancilla: bool,
    controllers: Vec<QubitPermutation>,
    pulses: Vec<Pulse>,
    closing: Pulse,
}

impl DecouplingCycle {
    fn from_pulses(
        kind: CycleKind,
        n_logical: usize,
        n_qubits: usize,
        mut all: Vec<Pulse>,
    ) -> Result<Self, SequenceError> {
        let closing = all.pop().expect("at least one pulse");
        let mut controllers = vec![QubitPermutation::identity(n_qubits)];
        for p in &all {
            let next = p.permutation(n_qubits)?.compose(controllers.last().unwrap());
            controllers.push(next);
        }
        let cycle = Self {
            kind,
            n_logical,
            n_qubits,
            ancilla: n_qubits > n_logical,
            controllers,
            pulses: all,
            closing,
        };
        cycle.validate()?;
        Ok(cycle)
    }

    /// Nearest-neighbour cycle: `P1 = E12 E34 ...`, `P2 = E_{N,1} E23 ...`, alternating.
    /// Odd `n` gets an ancilla appended after the last qubit.
    pub fn optimal(n: usize) -> Result<Self, SequenceError> {
        if n < 2 {
            return Err(SequenceError::TooFewQubits(n));
        }
        let sites = if n % 2 == 0 { n } else { n + 1 };
        let p1 = PulseLayer::new((0..sites / 2).map(|k| (2 * k, 2 * k + 1)).collect())?;
        let p2 = if sites == 2 {
            p1.clone()
        } else {
            let mut pairs = vec![(sites - 1, 0)];
            pairs.extend((0..sites / 2 - 1).map(|k| (2 * k + 1, 2 * k + 2)));
            PulseLayer::new(pairs)?
        };
        let all = (0..sites)
            .map(|k| Pulse::new(vec![if k % 2 == 0 { p1.clone() } else { p2.clone() }]))
            .collect();
        Self::from_pulses(CycleKind::Optimal, n, sites, all)
    }

    /// Powers of the ring shift `P0 = E_{1,N} ... E_{1,3} E_{1,2}` (rightmost first).
    pub fn cyclic(n: usize) -> Result<Self, SequenceError> {
        if n < 2 {
            return Err(SequenceError::TooFewQubits(n));
        }
        let shift = Pulse::new(
            (1..n)
                .map(|j| PulseLayer::new(vec![(0, j)]))
                .collect::<Result<_, _>>()?,
        );
        Self::from_pulses(CycleKind::Cyclic, n, n, vec![shift; n])
    }

    /// Four-qubit ring shift `P0 = E12 E23 E34`, exchanges fired one at a time.
    pub fn original4() -> Result<Self, SequenceError> {
        let shift = Pulse::new(vec![
            PulseLayer::new(vec![(2, 3)])?,
            PulseLayer::new(vec![(1, 2)])?,
            PulseLayer::new(vec![(0, 1)])?,
        ]);
        Self::from_pulses(CycleKind::Original4, 4, 4, vec![shift; 4])
    }

    pub fn build(kind: CycleKind, n: usize) -> Result<Self, SequenceError> {
        match kind {
            CycleKind::Optimal => Self::optimal(n),
            CycleKind::Cyclic => Self::cyclic(n),
            CycleKind::Original4 if n == 4 => Self::original4(),
            CycleKind::Original4 => Err(SequenceError::Invariant(format!(
                "the original scheme is defined for 4 qubits, not {n}"
            ))),
        }
    }

    pub fn kind(&self) -> CycleKind {
        self.kind
    }

    pub fn n_logical(&self) -> usize {
        self.n_logical
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn has_ancilla(&self) -> bool {
        self.ancilla
    }

    pub fn intervals(&self) -> usize {
        self.controllers.len()
    }

    pub fn controllers(&self) -> &[QubitPermutation] {
        &self.controllers
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn closing_pulse(&self) -> &Pulse {
        &self.closing
    }

    /// Pulse ending interval `k`; the last interval ends with the closing pulse.
    pub fn pulse_after(&self, k: usize) -> &Pulse {
        if k + 1 == self.intervals() {
            &self.closing
        } else {
            &self.pulses[k]
        }
    }

    /// Layers realising `g_k` from the identity.
    pub fn controller_pulse(&self, k: usize) -> Pulse {
        Pulse::new(
            self.pulses[..k]
                .iter()
                .flat_map(|p| p.layers().iter().cloned())
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        let n = self.n_qubits;
        if !self.controllers[0].is_identity() {
            return Err(SequenceError::Invariant("g_0 is not the identity".into()));
        }
        for (k, p) in self.pulses.iter().enumerate() {
            let next = p.permutation(n)?.compose(&self.controllers[k]);
            if next != self.controllers[k + 1] {
                return Err(SequenceError::Invariant(format!(
                    "g_{} != pulse_{k} ∘ g_{k}",
                    k + 1
                )));
            }
        }
        let closed = self
            .closing
            .permutation(n)?
            .compose(self.controllers.last().unwrap());
        if !closed.is_identity() {
            return Err(SequenceError::Invariant(
                "closing pulse does not return to the identity".into(),
            ));
        }
        Ok(())
    }

    pub fn step_count(&self) -> StepCount {
        let all = self.pulses.iter().chain(std::iter::once(&self.closing));
        let (mut layers, mut gates) = (0, 0);
        for p in all {
            layers += p.layers().len();
            gates += p.gate_count();
        }
        StepCount {
            parallel_layers: layers,
            two_qubit_gates: gates,
            controller_gates: self.pulses.iter().map(Pulse::gate_count).sum(),
        }
    }

    /// Counts the relocations of every pulse's net permutation over a closed cycle.
    pub fn move_count(&self) -> MoveCount {
        let n = self.n_qubits;
        let all = self.pulses.iter().chain(std::iter::once(&self.closing));
        let mut moves = 0;
        let mut ops = 0;
        for p in all {
            let perm = p.permutation(n).expect("validated");
            if !perm.is_identity() {
                ops += 1;
                moves += perm.moved_sites();
            }
        }
        MoveCount { ops, moves }
    }

    /// Whether every state visits every site exactly once per cycle.
    pub fn visits_every_site_once(&self) -> bool {
        let n = self.n_qubits;
        (0..n).all(|token| {
            let mut seen = vec![false; n];
            for g in &self.controllers {
                let site = g.apply(token);
                if seen[site] {
                    return false;
                }
                seen[site] = true;
            }
            seen.iter().all(|&s| s)
        })
    }

    /// Whether `{g_k}` is closed under composition and inverse.
    pub fn controllers_form_group(&self) -> bool {
        let set = &self.controllers;
        set.iter().all(|a| {
            set.contains(&a.inverse()) && set.iter().all(|b| set.contains(&a.compose(b)))
        })
    }

    /// Human-readable listing of controllers and pulses.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "cycle {} on {} qubits{} with {} intervals",
            self.kind,
            self.n_logical,
            if self.ancilla { " (+1 ancilla)" } else { "" },
            self.intervals()
        );
        for (k, g) in self.controllers.iter().enumerate() {
            let _ = writeln!(s, "  g_{k} = {g}   then {}", self.pulse_after(k));
        }
        s
    }
}

/// How exchange pulses are realised in time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PulseMode {
    /// Instantaneous, phase-free permutations.
    Ideal,
    /// Rectangular exchange windows of strength `coupling` and area pi/4.
    Finite {
        coupling: f64,
        #[serde(default)]
        generator: ExchangeGenerator,
    },
}

impl PulseMode {
    pub fn finite(coupling: f64) -> Self {
        PulseMode::Finite {
            coupling,
            generator: ExchangeGenerator::Heisenberg,
        }
    }

    /// Duration of one exchange window, zero for ideal pulses.
    pub fn window(&self) -> f64 {
        match *self {
            PulseMode::Ideal => 0.0,
            PulseMode::Finite { coupling, .. } => PI / (4.0 * coupling),
        }
    }
}

/// Placement of the layers inside a multi-layer pulse.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseSpacing {
    /// All layers of a pulse sit at the end of one interval.
    #[default]
    Packed,
    /// Every layer gets its own slot of length tau, so adjoining exchanges are tau apart.
    Slotted,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    Free,
    Instant(QubitPermutation),
    Control {
        layer: PulseLayer,
        coupling: f64,
        generator: ExchangeGenerator,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimelineEvent {
    pub start: f64,
    pub duration: f64,
    pub kind: EventKind,
}

/// Contiguous schedule of free evolution, instantaneous pulses and control windows.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseTimeline {
    n_qubits: usize,
    events: Vec<TimelineEvent>,
    total: f64,
    boundaries: Vec<f64>,
}

/// Time grid comparisons.
const TIME_EPS: f64 = 1e-12;

struct TimelineBuilder {
    n: usize,
    mode: PulseMode,
    spacing: PulseSpacing,
    tau: f64,
    events: Vec<TimelineEvent>,
    clock: f64,
    frame: QubitPermutation,
    boundaries: Vec<f64>,
}

impl TimelineBuilder {
    fn new(n: usize, tau: f64, mode: PulseMode, spacing: PulseSpacing) -> Result<Self, SequenceError> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(SequenceError::BadInterval(tau));
        }
        if let PulseMode::Finite { coupling, .. } = mode {
            if !(coupling > 0.0 && coupling.is_finite()) {
                return Err(SequenceError::BadCoupling(coupling));
            }
        }
        Ok(Self {
            n,
            mode,
            spacing,
            tau,
            events: Vec::new(),
            clock: 0.0,
            frame: QubitPermutation::identity(n),
            boundaries: vec![0.0],
        })
    }

    fn push(&mut self, duration: f64, kind: EventKind) {
        if duration <= TIME_EPS && matches!(kind, EventKind::Free) {
            return;
        }
        self.events.push(TimelineEvent {
            start: self.clock,
            duration,
            kind,
        });
        self.clock += duration;
    }

    fn control(&mut self, layer: &PulseLayer, w: f64) {
        if let PulseMode::Finite {
            coupling,
            generator,
        } = self.mode
        {
            self.push(
                w,
                EventKind::Control {
                    layer: layer.clone(),
                    coupling,
                    generator,
                },
            );
        }
    }

    /// One interval of free evolution followed by `pulse`.
    fn interval(&mut self, pulse: &Pulse) -> Result<(), SequenceError> {
        let tau = self.tau;
        let w = self.mode.window();
        match (self.mode, self.spacing) {
            (PulseMode::Ideal, PulseSpacing::Packed) => {
                self.push(tau, EventKind::Free);
                let p = pulse.permutation(self.n)?;
                if !p.is_identity() {
                    self.push(0.0, EventKind::Instant(p));
                }
            }
            (PulseMode::Ideal, PulseSpacing::Slotted) => {
                if pulse.layers().is_empty() {
                    self.push(tau, EventKind::Free);
                }
                for layer in pulse.layers() {
                    self.push(tau, EventKind::Free);
                    self.push(0.0, EventKind::Instant(layer.permutation(self.n)?));
                }
            }
            (PulseMode::Finite { .. }, PulseSpacing::Packed) => {
                let needed = w * pulse.layers().len() as f64;
                if needed > tau * (1.0 + 1e-12) {
                    return Err(SequenceError::WindowExceedsInterval { needed, tau });
                }
                self.push(tau - needed, EventKind::Free);
                for layer in pulse.layers() {
                    self.control(layer, w);
                }
            }
            (PulseMode::Finite { .. }, PulseSpacing::Slotted) => {
                if w > tau * (1.0 + 1e-12) {
                    return Err(SequenceError::WindowExceedsInterval { needed: w, tau });
                }
                if pulse.layers().is_empty() {
                    self.push(tau, EventKind::Free);
                }
                for layer in pulse.layers() {
                    self.push(tau - w, EventKind::Free);
                    self.control(layer, w);
                }
            }
        }
        self.frame = pulse.permutation(self.n)?.compose(&self.frame);
        if self.frame.is_identity() {
            self.boundaries.push(self.clock);
        }
        Ok(())
    }

    fn finish(self) -> PulseTimeline {
        PulseTimeline {
            n_qubits: self.n,
            events: self.events,
            total: self.clock,
            boundaries: self.boundaries,
        }
    }
}

/// `repeats` back-to-back copies of the cycle.
pub fn schedule_periodic(
    cycle: &DecouplingCycle,
    repeats: usize,
    tau: f64,
    mode: PulseMode,
    spacing: PulseSpacing,
) -> Result<PulseTimeline, SequenceError> {
    let mut b = TimelineBuilder::new(cycle.n_qubits(), tau, mode, spacing)?;
    for _ in 0..repeats {
        for k in 0..cycle.intervals() {
            b.interval(cycle.pulse_after(k))?;
        }
    }
    Ok(b.finish())
}

/// One level of concatenation: block `k` is the whole cycle conjugated by `g_k`.
/// The trailing `g_k^dag` of each block merges with the next block's `g_{k+1}`.
pub fn schedule_concatenated(
    cycle: &DecouplingCycle,
    tau: f64,
    mode: PulseMode,
    spacing: PulseSpacing,
) -> Result<PulseTimeline, SequenceError> {
    let m = cycle.intervals();
    let mut b = TimelineBuilder::new(cycle.n_qubits(), tau, mode, spacing)?;
    for outer in 0..m {
        for inner in 0..m {
            if inner + 1 < m {
                b.interval(cycle.pulse_after(inner))?;
                continue;
            }
            let mut merged = cycle
                .closing_pulse()
                .then_cancelled(&cycle.controller_pulse(outer).inverse());
            if outer + 1 < m {
                merged = merged.then_cancelled(&cycle.controller_pulse(outer + 1));
            }
            b.interval(&merged)?;
        }
    }
    Ok(b.finish())
}

impl PulseTimeline {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn events(&self) -> &[TimelineEvent] {
        &self.events
    }

    pub fn total_duration(&self) -> f64 {
        self.total
    }

    /// Times at which the qubits are back in their home frame.
    pub fn cycle_boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Product of every pulse (instantaneous or windowed) in time order.
    pub fn net_permutation(&self) -> QubitPermutation {
        let n = self.n_qubits;
        self.events
            .iter()
            .fold(QubitPermutation::identity(n), |acc, e| match &e.kind {
                EventKind::Free => acc,
                EventKind::Instant(p) => p.compose(&acc),
                EventKind::Control { layer, .. } => {
                    layer.permutation(n).expect("valid layer").compose(&acc)
                }
            })
    }

    pub fn pulse_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| !matches!(e.kind, EventKind::Free))
            .count()
    }

    /// Events are contiguous and start times never decrease.
    pub fn is_contiguous(&self) -> bool {
        let mut t = 0.0;
        for e in &self.events {
            if (e.start - t).abs() > 1e-9 || e.duration < 0.0 {
                return false;
            }
            t = e.start + e.duration;
        }
        (t - self.total).abs() < 1e-9
    }

    /// One event per line: `start kind payload`.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# n_qubits={} total={:.12} events={}\n",
            self.n_qubits,
            self.total,
            self.events.len()
        );
        for e in &self.events {
            let _ = match &e.kind {
                EventKind::Free => writeln!(s, "{:.12} free duration={:.12}", e.start, e.duration),
                EventKind::Instant(p) => writeln!(s, "{:.12} pulse perm={}", e.start, p),
                EventKind::Control {
                    layer,
                    coupling,
                    generator,
                } => writeln!(
                    s,
                    "{:.12} control duration={:.12} coupling={:.12} generator={} pairs={}",
                    e.start,
                    e.duration,
                    coupling,
                    match generator {
                        ExchangeGenerator::Heisenberg => "heisenberg",
                        ExchangeGenerator::Xy => "xy",
                    },
                    layer
                        .pairs()
                        .iter()
                        .map(|(i, j)| format!("{}-{}", i + 1, j + 1))
                        .collect::<Vec<_>>()
                        .join(",")
                ),
            };
        }
        s
    }
}
