//! Named run bundles.

use std::f64::consts::PI;

use super::{BathSpec, ControlCycle, Schedule, SimulationConfig};
use crate::sequences::{PulseMode, PulseSpacing};

pub const PRESETS: [&str; 4] = ["fig3a", "fig4", "fig5", "table1"];

/// Time steps of the schedule comparison, in units of 1/ω.
pub const TABLE1_TAUS: [f64; 3] = [1.0 / 20.0, 1.0 / 100.0, 1.0 / 250.0];

/// Exchange coupling of the finite-pulse runs.
pub const FINITE_COUPLING: f64 = PI;

fn finite(mut c: SimulationConfig) -> SimulationConfig {
    c.cycle = ControlCycle::Optimal;
    c.pulse = PulseMode::finite(FINITE_COUPLING);
    c
}

fn ideal(mut c: SimulationConfig) -> SimulationConfig {
    c.cycle = ControlCycle::Optimal;
    c.pulse = PulseMode::Ideal;
    c
}

/// Uncontrolled, finite and ideal runs on `n` qubits.
fn bundle(n: usize, state: &str) -> Vec<(String, SimulationConfig)> {
    let base = SimulationConfig::new(n, state);
    vec![
        ("none".into(), base.clone()),
        ("finite".into(), finite(base.clone())),
        ("ideal".into(), ideal(base)),
    ]
}

/// Optimal against the original four-qubit scheme, finite and ideal.
pub fn fig5() -> Vec<(String, SimulationConfig)> {
    let mut base = SimulationConfig::new(4, "psi2");
    base.spacing = PulseSpacing::Slotted;
    // durations 4τ and 3τ; 24 τ = 6 at τ = 0.25
    base.t_final = 6.0;
    let mut out = Vec::new();
    for (label, mode) in [
        ("finite", PulseMode::finite(FINITE_COUPLING)),
        ("ideal", PulseMode::Ideal),
    ] {
        for cycle in [ControlCycle::Optimal, ControlCycle::Original4] {
            let mut c = base.clone();
            c.cycle = cycle;
            c.pulse = mode;
            out.push((format!("{label}-{}", serde_json::to_value(cycle).unwrap().as_str().unwrap()), c));
        }
    }
    out
}

/// Periodic and concatenated runs, one super-cycle each.
pub fn table1() -> Vec<(String, SimulationConfig)> {
    let mut out = Vec::new();
    for tau in TABLE1_TAUS {
        for schedule in [Schedule::Periodic, Schedule::Concatenated] {
            let mut c = ideal(SimulationConfig::new(4, "psi2"));
            c.tau = tau;
            c.schedule = schedule;
            c.t_final = 16.0 * tau;
            let name = match schedule {
                Schedule::Periodic => "periodic",
                Schedule::Concatenated => "concatenated",
            };
            out.push((format!("tau={tau}-{name}"), c));
        }
    }
    out
}

pub fn preset(name: &str) -> Option<Vec<(String, SimulationConfig)>> {
    match name {
        "fig3a" => Some(bundle(2, "psi1")),
        "fig4" => Some(bundle(4, "psi2")),
        "fig5" => Some(fig5()),
        "table1" => Some(table1()),
        _ => None,
    }
}

/// Per-qubit baths with the default parameters.
pub fn uniform_baths() -> Vec<BathSpec> {
    vec![BathSpec::default()]
}
