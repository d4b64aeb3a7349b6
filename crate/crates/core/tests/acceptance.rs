//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.

use std::io::Write;
use std::time::{Duration, Instant};

use dfstransfer_core::avg_ham::{
    average_hamiltonian, bch_residual, collective_decompose, conjugate, SystemBathHamiltonian,
};
use dfstransfer_core::dfs::{contains, dark_subspace, dfs_dimension, named_state};
use dfstransfer_core::dynamics::{
    compare_cycles, compare_schedules, dephasing_oracle, evolve, presets, simulate_dephasing,
    BathTopology, ControlCycle, SimulationConfig,
};
use dfstransfer_core::linalg::OperatorMatrix;
use dfstransfer_core::sequences::{DecouplingCycle, PulseMode};

/// Written straight to stdout so the line survives the test harness capture.
fn verdict(n: u32, ok: bool, detail: String) {
    let line = format!("criterion {n}: {} {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(ok, "criterion {n} failed: {detail}");
}

fn model(n: usize, seed: u64) -> (SystemBathHamiltonian, DecouplingCycle) {
    let cycle = DecouplingCycle::optimal(n).unwrap();
    let mut h = SystemBathHamiltonian::random_independent(n, 2, seed).unwrap();
    if cycle.has_ancilla() {
        h = h.with_ancilla().unwrap();
    }
    (h, cycle)
}

#[test]
fn criterion_01_collectivity() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for n in 2..=6 {
        let (h, cycle) = model(n, 100 + n as u64);
        let avg = average_hamiltonian(&h, &cycle).unwrap();
        let target = h.collective_coupling().unwrap();
        worst = worst.max(avg.distance(&target).unwrap());
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        worst < 1e-10 && elapsed < Duration::from_secs(10),
        format!("max error {worst:.2e}, {:.1}s", elapsed.as_secs_f64()),
    );
}

#[test]
fn criterion_02_controller_equivalence() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for n in [2, 4, 6] {
        let h = SystemBathHamiltonian::random_independent(n, 2, 200 + n as u64).unwrap();
        let opt = average_hamiltonian(&h, &DecouplingCycle::optimal(n).unwrap()).unwrap();
        let cyc = average_hamiltonian(&h, &DecouplingCycle::cyclic(n).unwrap()).unwrap();
        worst = worst.max(opt.distance(&cyc).unwrap());
    }
    let elapsed = start.elapsed();
    verdict(
        2,
        worst < 1e-10 && elapsed < Duration::from_secs(10),
        format!("max difference {worst:.2e}, {:.1}s", elapsed.as_secs_f64()),
    );
}

#[test]
fn criterion_03_noncollective_elimination() {
    let n = 4;
    let h = SystemBathHamiltonian::random_independent(n, 2, 300).unwrap();
    let cycle = DecouplingCycle::optimal(n).unwrap();
    let decomposition = collective_decompose(&h).unwrap();
    let mut worst: f64 = 0.0;
    let mut actual: f64 = 0.0;
    for j in 2..=n {
        let component = decomposition.component(j).unwrap();
        let mut summed = OperatorMatrix::zeros(component.dims());
        for g in cycle.controllers() {
            summed += &conjugate(&component, g).unwrap();
        }
        let claimed = decomposition.collective_multiple(j, (n - 1) as f64).unwrap();
        worst = worst.max(summed.distance(&claimed).unwrap());
        let exact = decomposition
            .collective_multiple(j, (cycle.intervals() - 2) as f64)
            .unwrap();
        actual = actual.max(summed.distance(&exact).unwrap());
    }
    verdict(
        3,
        worst < 1e-10,
        format!("deviation from (N-1) S.B {worst:.2e}; from (N-2) S.B {actual:.2e}"),
    );
}

#[test]
fn criterion_04_dfs_structure() {
    let dims: Vec<usize> = [2, 4, 6, 3, 5].iter().map(|&n| dfs_dimension(n).unwrap()).collect();
    let mut deficit: f64 = 0.0;
    for (label, n) in [("psi1", 2), ("psi2", 4), ("psi3", 4)] {
        let basis = dark_subspace(n).unwrap();
        let psi = named_state(label).unwrap();
        deficit = deficit.max(1.0 - contains(&basis, &psi).unwrap());
    }
    verdict(
        4,
        dims == [1, 2, 5, 0, 0] && deficit < 1e-9,
        format!("dimensions {dims:?} for n = 2, 4, 6, 3, 5; projection deficit {deficit:.2e}"),
    );
}

#[test]
fn criterion_05_step_counts() {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [4, 6, 8] {
        let opt = DecouplingCycle::optimal(n).unwrap().step_count().parallel_layers;
        let cyc = DecouplingCycle::cyclic(n).unwrap().step_count().controller_gates;
        ok &= opt == n && cyc == (n - 1) * (n - 1);
        parts.push(format!("n={n}: {opt} vs {cyc}"));
    }
    let five = DecouplingCycle::optimal(5).unwrap().step_count().parallel_layers;
    ok &= five == 6;
    verdict(5, ok, format!("{}; optimal(5) {five}", parts.join(", ")));
}

#[test]
fn criterion_06_bch_scaling() {
    let start = Instant::now();
    let h = SystemBathHamiltonian::random_independent(2, 2, 600).unwrap();
    let cycle = DecouplingCycle::optimal(2).unwrap();
    let norm = h.assemble().unwrap().frobenius_norm();
    let taus = [0.04 / norm, 0.02 / norm, 0.01 / norm];
    let rep = bch_residual(&h, &cycle, &taus).unwrap();
    let ratios: Vec<(f64, f64)> = rep
        .residuals
        .windows(2)
        .map(|w| (w[0].r2 / w[1].r2, w[0].r3 / w[1].r3))
        .collect();
    let r2_ok = ratios.iter().all(|r| (6.8..=9.2).contains(&r.0));
    let r3_ok = ratios.iter().all(|r| (13.0..=19.0).contains(&r.1));
    let elapsed = start.elapsed();
    verdict(
        6,
        r2_ok && r3_ok && elapsed < Duration::from_secs(30),
        format!(
            "r2 ratios {:?} (band 6.8-9.2), r3 ratios {:?} (band 13-19), {:.1}s",
            ratios.iter().map(|r| format!("{:.3}", r.0)).collect::<Vec<_>>(),
            ratios.iter().map(|r| format!("{:.3}", r.1)).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    );
}

fn final_fidelity(n: usize, state: &str, pulse: Option<PulseMode>) -> f64 {
    let mut c = SimulationConfig::new(n, state);
    if let Some(p) = pulse {
        c.cycle = ControlCycle::Optimal;
        c.pulse = p;
    }
    evolve(&c).unwrap().final_fidelity()
}

#[test]
fn criterion_07_fidelity_floors() {
    let finite = PulseMode::finite(presets::FINITE_COUPLING);
    let two = final_fidelity(2, "psi1", Some(finite));
    let two_none = final_fidelity(2, "psi1", None);
    let four = final_fidelity(4, "psi2", Some(finite));
    let four_none = final_fidelity(4, "psi2", None);
    let ok = two >= 0.99 && four >= 0.95 && two - two_none >= 0.02 && four - four_none >= 0.02;
    verdict(
        7,
        ok,
        format!("n=2 {two:.6} (none {two_none:.6}), n=4 {four:.6} (none {four_none:.6})"),
    );
}

#[test]
fn criterion_08_schedule_crossover() {
    let rows = compare_schedules(&SimulationConfig::new(4, "psi2"), &presets::TABLE1_TAUS, 1).unwrap();
    let printed = [(0.999765, 0.999745), (0.999896, 0.999895), (0.999900, 0.999901)];
    for (r, (p, c)) in rows.iter().zip(printed) {
        println!(
            "  tau={:.4} periodic {:.9} concatenated {:.9} (diagnostic offsets {:+.2e} {:+.2e})",
            r.tau,
            r.periodic,
            r.concatenated,
            r.periodic - p,
            r.concatenated - c
        );
    }
    let floors = rows.iter().all(|r| r.periodic >= 0.999 && r.concatenated >= 0.999);
    let coarse = rows[0].periodic > rows[0].concatenated;
    let fine = rows[2].concatenated >= rows[2].periodic;
    verdict(
        8,
        floors && coarse && fine,
        format!(
            "tau=1/20 periodic-concatenated {:+.3e}, tau=1/250 concatenated-periodic {:+.3e}, floors {floors}",
            rows[0].periodic - rows[0].concatenated,
            rows[2].concatenated - rows[2].periodic
        ),
    );
}

#[test]
fn criterion_09_cycle_comparison() {
    let rows = compare_cycles(&SimulationConfig::new(4, "psi2")).unwrap();
    let ok = rows.iter().all(|r| r.optimal_wins());
    let detail = rows
        .iter()
        .map(|r| format!("{} optimal {:.6} original {:.6} at t={}", r.pulse, r.optimal, r.original, r.t_final))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(9, ok, detail);
}

#[test]
fn criterion_10_pseudomode_validity() {
    let run = simulate_dephasing(0.1, 1.0, 2, 4.0, 200).unwrap();
    let times: Vec<f64> = run.iter().map(|p| p.0).collect();
    let exact = dephasing_oracle(0.1, 1.0, &times);
    let dephasing = run
        .iter()
        .zip(&exact)
        .map(|(p, e)| (p.1 - e).abs())
        .fold(0.0, f64::max);

    let mut c = SimulationConfig::new(4, "psi2");
    c.bath_topology = BathTopology::Collective;
    let trace = evolve(&c).unwrap();
    let dfs = trace
        .samples
        .iter()
        .map(|s| (1.0 - s.fidelity).abs())
        .fold(0.0, f64::max);
    verdict(
        10,
        dephasing < 1e-4 && dfs < 1e-6,
        format!("dephasing deviation {dephasing:.2e} at n_max=2, collective DFS deviation {dfs:.2e}"),
    );
}
