use serde::Serialize;

use super::{evolve, Result, Schedule, SimulationConfig};
use crate::par;
use crate::sequences::{schedule_periodic, DecouplingCycle, PulseMode, PulseSpacing};
use super::{ControlCycle, presets::FINITE_COUPLING};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub tau: f64,
    pub t_final: f64,
    pub periodic: f64,
    pub concatenated: f64,
}

impl ScheduleRow {
    pub fn periodic_wins(&self) -> bool {
        self.periodic > self.concatenated
    }
}

/// Ideal-pulse periodic and concatenated runs over `supercycles · m²τ` for each τ.
pub fn compare_schedules(base: &SimulationConfig, taus: &[f64], supercycles: usize) -> Result<Vec<ScheduleRow>> {
    let m = DecouplingCycle::optimal(base.n_qubits)?.intervals() as f64;
    let jobs: Vec<SimulationConfig> = taus
        .iter()
        .flat_map(|&tau| {
            [Schedule::Periodic, Schedule::Concatenated].map(|schedule| {
                let mut c = base.clone();
                c.cycle = ControlCycle::Optimal;
                c.pulse = PulseMode::Ideal;
                c.schedule = schedule;
                c.tau = tau;
                c.dt = None;
                c.t_final = supercycles as f64 * m * m * tau;
                c
            })
        })
        .collect();
    let results = par::map(&jobs, |c| evolve(c).map(|t| t.final_fidelity()));
    let mut rows = Vec::new();
    for (k, &tau) in taus.iter().enumerate() {
        rows.push(ScheduleRow {
            tau,
            t_final: jobs[2 * k].t_final,
            periodic: results[2 * k].as_ref().map_err(clone_err)?.to_owned(),
            concatenated: results[2 * k + 1].as_ref().map_err(clone_err)?.to_owned(),
        });
    }
    Ok(rows)
}

fn clone_err(e: &super::DynamicsError) -> super::DynamicsError {
    super::DynamicsError::Config(e.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CycleRow {
    pub pulse: String,
    pub t_final: f64,
    pub optimal: f64,
    pub original: f64,
}

impl CycleRow {
    pub fn optimal_wins(&self) -> bool {
        self.optimal >= self.original
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Optimal against original four-qubit cycle, finite (`J = π`) and ideal, slotted.
///
/// The horizon is the smallest common multiple of both cycle durations not below `base.t_final`.
pub fn compare_cycles(base: &SimulationConfig) -> Result<Vec<CycleRow>> {
    let modes = [
        ("finite", PulseMode::finite(FINITE_COUPLING)),
        ("ideal", PulseMode::Ideal),
    ];
    let mut jobs = Vec::new();
    let mut horizons = Vec::new();
    for (_, mode) in modes {
        let mut pair = [ControlCycle::Optimal, ControlCycle::Original4].map(|cycle| {
            let mut c = base.clone();
            c.cycle = cycle;
            c.pulse = mode;
            c.spacing = PulseSpacing::Slotted;
            c.schedule = Schedule::Periodic;
            c
        });
        // block durations in units of τ
        let mut lens = Vec::new();
        for c in &pair {
            let mut one = c.clone();
            one.t_final = 1.0;
            let cycle = one.decoupling_cycle()?.expect("cycle set");
            let d = schedule_periodic(&cycle, 1, c.tau, c.pulse, c.spacing)?.total_duration();
            lens.push((d / c.tau).round() as u64);
        }
        let lcm = lens[0] / gcd(lens[0], lens[1]) * lens[1];
        let unit = lcm as f64 * base.tau;
        let t_final = (base.t_final / unit - 1e-9).ceil().max(1.0) * unit;
        for c in &mut pair {
            c.t_final = t_final;
        }
        horizons.push(t_final);
        jobs.extend(pair);
    }
    let results = par::map(&jobs, |c| evolve(c).map(|t| t.final_fidelity()));
    let mut rows = Vec::new();
    for (k, (label, _)) in modes.iter().enumerate() {
        rows.push(CycleRow {
            pulse: label.to_string(),
            t_final: horizons[k],
            optimal: *results[2 * k].as_ref().map_err(clone_err)?,
            original: *results[2 * k + 1].as_ref().map_err(clone_err)?,
        });
    }
    Ok(rows)
}
