//! Command-line driver for cycle synthesis, property checks and simulations.

mod report;
mod run_config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dfstransfer_core::avg_ham::{
    self, average_hamiltonian, bch_residual, collective_decompose, eliminate_noncollective,
    verify_collectivity, AvgHamError, SystemBathHamiltonian,
};
use dfstransfer_core::dfs::{self, dark_subspace, named_state};
use dfstransfer_core::dynamics::{self, presets, DynamicsError, SimulationConfig};
use dfstransfer_core::sequences::{
    schedule_concatenated, schedule_periodic, CycleKind, DecouplingCycle, PulseMode, PulseSpacing,
};

use report::{Failure, Report};
use run_config::RunConfig;

#[derive(Parser)]
#[command(name = "dfstransfer", version, about = "Dynamical decoupling by qubit state transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a cycle, its pulses and step counts.
    Sequence(SequenceArgs),
    /// Run the average-Hamiltonian property suites on random models.
    Verify(VerifyArgs),
    /// Integrate a configuration or preset and write fidelity traces.
    Simulate(SimulateArgs),
    /// Periodic against concatenated final fidelities.
    Table1(Table1Args),
    /// Dark-subspace basis of the collective spin.
    Dfs(DfsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PulseArg {
    Ideal,
    Finite,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Periodic,
    Concatenated,
}

#[derive(Args)]
struct SequenceArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value = "optimal")]
    cycle: CycleArg,
    #[arg(long, default_value_t = 0.25)]
    tau: f64,
    #[arg(long, value_enum, default_value = "ideal")]
    pulse: PulseArg,
    /// Exchange coupling J of finite pulses.
    #[arg(long, default_value_t = std::f64::consts::PI)]
    coupling: f64,
    #[arg(long, value_enum, default_value = "periodic")]
    schedule: ScheduleArg,
    #[arg(long)]
    slotted: bool,
    /// Also print the event timeline.
    #[arg(long)]
    dump_timeline: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum CycleArg {
    Optimal,
    Cyclic,
    Original4,
}

impl From<CycleArg> for CycleKind {
    fn from(c: CycleArg) -> Self {
        match c {
            CycleArg::Optimal => CycleKind::Optimal,
            CycleArg::Cyclic => CycleKind::Cyclic,
            CycleArg::Original4 => CycleKind::Original4,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    All,
    Collectivity,
    Equivalence,
    Elimination,
    Dfs,
    Bch,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    /// Bath dimension per qubit.
    #[arg(long, default_value_t = 2)]
    bath_dim: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_parser = presets::PRESETS)]
    preset: Option<String>,
    /// Override a config entry, e.g. `tau=0.125` or `baths.0.strength=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output file (single run) or directory (preset bundle).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the pulse timeline of each run.
    #[arg(long)]
    dump_timeline: bool,
}

#[derive(Args)]
struct Table1Args {
    /// Super-cycles per run.
    #[arg(long, default_value_t = 1)]
    supercycles: usize,
    /// Interval lengths; defaults to 1/20, 1/100, 1/250.
    #[arg(long, value_delimiter = ',')]
    taus: Vec<f64>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DfsArgs {
    #[arg(long)]
    n: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sequence(a) => cmd_sequence(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Table1(a) => cmd_table1(&a),
        Command::Dfs(a) => cmd_dfs(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn cmd_sequence(a: &SequenceArgs) -> Result<(), Failure> {
    let cycle = DecouplingCycle::build(a.cycle.into(), a.n).map_err(Failure::config)?;
    print!("{}", cycle.describe());
    if cycle.has_ancilla() {
        println!("ancilla: site {} added to reach an even register", cycle.n_qubits());
    }
    let steps = cycle.step_count();
    let moves = cycle.move_count();
    println!("intervals: {}", cycle.intervals());
    println!("parallel_steps: {}", steps.parallel_layers);
    println!("two_qubit_gates: {}", steps.two_qubit_gates);
    println!("controller_gates: {}", steps.controller_gates);
    println!("moves: {} ops, {} moves", moves.ops, moves.moves);
    if a.dump_timeline {
        let mode = match a.pulse {
            PulseArg::Ideal => PulseMode::Ideal,
            PulseArg::Finite => PulseMode::finite(a.coupling),
        };
        let spacing = if a.slotted {
            PulseSpacing::Slotted
        } else {
            PulseSpacing::Packed
        };
        let timeline = match a.schedule {
            ScheduleArg::Periodic => schedule_periodic(&cycle, 1, a.tau, mode, spacing),
            ScheduleArg::Concatenated => schedule_concatenated(&cycle, a.tau, mode, spacing),
        }
        .map_err(Failure::config)?;
        print!("{}", timeline.to_text());
    }
    Ok(())
}

fn avg_failure(e: AvgHamError) -> Failure {
    match e {
        AvgHamError::PropertyViolation { .. } => Failure::property(e),
        other => Failure::config(other),
    }
}

fn verify_model(n: usize, bath_dim: usize, seed: u64) -> Result<(SystemBathHamiltonian, DecouplingCycle), Failure> {
    let cycle = DecouplingCycle::optimal(n).map_err(Failure::config)?;
    let mut h = SystemBathHamiltonian::random_independent(n, bath_dim, seed).map_err(avg_failure)?;
    if cycle.has_ancilla() {
        h = h.with_ancilla().map_err(avg_failure)?;
    }
    Ok((h, cycle))
}

fn cmd_verify(a: &VerifyArgs) -> Result<(), Failure> {
    let (h, cycle) = verify_model(a.n, a.bath_dim, a.seed)?;
    let sites = cycle.n_qubits();
    let mut report = Report::default();
    let wants = |s: Suite| a.suite == Suite::All || a.suite == s;
    println!(
        "# n={} sites={} seed={} intervals={}",
        a.n,
        sites,
        a.seed,
        cycle.intervals()
    );
    let avg = average_hamiltonian(&h, &cycle).map_err(avg_failure)?;

    if wants(Suite::Collectivity) {
        let target = h.collective_coupling().map_err(avg_failure)?;
        let dev = avg.distance(&target).map_err(Failure::config)?;
        report.check("collectivity.environment_average", dev, 1e-10);
        let rep = verify_collectivity(&avg, sites, h.bath_dims()).map_err(avg_failure)?;
        report.check("collectivity.transposition_invariance", rep.max_violation, 1e-10);
    }
    if wants(Suite::Equivalence) {
        let cyclic = DecouplingCycle::cyclic(sites).map_err(Failure::config)?;
        let other = average_hamiltonian(&h, &cyclic).map_err(avg_failure)?;
        let dev = avg.distance(&other).map_err(Failure::config)?;
        report.check("equivalence.optimal_vs_cyclic", dev, 1e-10);
    }
    if wants(Suite::Elimination) {
        let decomposition = collective_decompose(&h).map_err(avg_failure)?;
        for j in 2..=sites {
            match eliminate_noncollective(&decomposition, j, &cycle) {
                Ok(e) => report.check(&format!("elimination.component_{j}"), e.deviation, avg_ham::ELIMINATION_TOL),
                Err(AvgHamError::PropertyViolation { deviation, tolerance, .. }) => {
                    report.check(&format!("elimination.component_{j}"), deviation, tolerance)
                }
                Err(e) => return Err(avg_failure(e)),
            }
        }
    }
    if wants(Suite::Dfs) {
        let basis = dark_subspace(sites).map_err(Failure::config)?;
        println!("INFO dfs.dimension {}", basis.dimension());
        let leak = avg_ham::dark_leakage(&avg, &basis.vectors, h.rest_dim()).map_err(avg_failure)?;
        report.check("dfs.darkness", leak, 1e-10);
    }
    if wants(Suite::Bch) {
        let norm = h.assemble().map_err(avg_failure)?.frobenius_norm();
        let taus: Vec<f64> = (0..3).map(|k| 0.02 / norm / f64::powi(2.0, k)).collect();
        let rep = bch_residual(&h, &cycle, &taus).map_err(avg_failure)?;
        for w in rep.residuals.windows(2) {
            let r2 = w[0].r2 / w[1].r2;
            let r3 = w[0].r3 / w[1].r3;
            report.band(&format!("bch.r2_ratio[tau={:.3e}]", w[0].tau), r2, 7.2, 8.8);
            println!("INFO bch.r3_ratio[tau={:.3e}] {r3:.4}", w[0].tau);
        }
    }
    report.finish()
}

fn write_or_print(out: Option<&Path>, name: &str, bundle: bool, csv: &str) -> Result<(), Failure> {
    match out {
        None if !bundle => {
            print!("{csv}");
            Ok(())
        }
        None => Ok(()),
        Some(p) => {
            let path = if bundle {
                fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
                p.join(format!("{name}.csv"))
            } else {
                p.to_path_buf()
            };
            fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let (runs, preset): (Vec<(String, RunConfig)>, Option<&str>) = match (&a.config, &a.preset) {
        (Some(path), None) => {
            let rc = RunConfig::load(path, &a.overrides).map_err(Failure::config)?;
            (vec![(rc.name.clone().unwrap_or_else(|| "run".into()), rc)], None)
        }
        (None, Some(p)) => {
            let bundle = presets::preset(p).ok_or_else(|| Failure::config(anyhow!("unknown preset {p}")))?;
            let runs = bundle
                .into_iter()
                .map(|(name, sim)| {
                    RunConfig::from_simulation(sim, &a.overrides).map(|rc| (name, rc))
                })
                .collect::<anyhow::Result<_>>()
                .map_err(Failure::config)?;
            (runs, Some(p.as_str()))
        }
        _ => return Err(Failure::config(anyhow!("pass exactly one of --config or --preset"))),
    };
    let bundle = preset.is_some();
    let sims: Vec<SimulationConfig> = runs.iter().map(|(_, rc)| rc.simulation.clone()).collect();
    for sim in &sims {
        sim.validate().map_err(dyn_failure)?;
    }
    if a.dump_timeline {
        for ((name, _), sim) in runs.iter().zip(&sims) {
            if let Some((t, repeats)) = sim.block_timeline().map_err(dyn_failure)? {
                println!("# {name}: block repeated {repeats} times");
                print!("{}", t.to_text());
            }
        }
    }
    let traces = dfstransfer_core::par::map(&sims, dynamics::evolve);
    let mut finals = Vec::new();
    for ((name, rc), trace) in runs.iter().zip(traces) {
        let trace = trace.map_err(dyn_failure)?;
        let out = a.out.as_deref().or(rc.output.as_deref());
        write_or_print(out, name, bundle, &trace.to_csv())?;
        let f = trace.final_fidelity();
        eprintln!(
            "final_fidelity {name} {} fingerprint {}",
            dynamics::format_sig(f, 12),
            &trace.fingerprint[..16]
        );
        finals.push((name.clone(), f));
    }
    let get = |n: &str| finals.iter().find(|(k, _)| k == n).map(|x| x.1);
    let mut report = Report::default();
    match preset {
        Some("fig3a") | Some("fig4") => {
            let none = get("none").unwrap_or(f64::NAN);
            for k in ["finite", "ideal"] {
                if let Some(f) = get(k) {
                    report.order(&format!("{k}_above_none"), f, none);
                }
            }
        }
        Some("fig5") => {
            for k in ["finite", "ideal"] {
                if let (Some(o), Some(r)) = (get(&format!("{k}-optimal")), get(&format!("{k}-original4"))) {
                    report.order(&format!("{k}.optimal_vs_original"), o, r);
                }
            }
        }
        _ => {}
    }
    if report.is_empty() {
        Ok(())
    } else {
        report.finish()
    }
}

fn dyn_failure(e: DynamicsError) -> Failure {
    match e {
        DynamicsError::Integrator { .. } => Failure::property(e),
        other => Failure::config(other),
    }
}

fn cmd_table1(a: &Table1Args) -> Result<(), Failure> {
    let taus = if a.taus.is_empty() {
        presets::TABLE1_TAUS.to_vec()
    } else {
        a.taus.clone()
    };
    let base = RunConfig::from_simulation(SimulationConfig::new(4, "psi2"), &a.overrides)
        .map_err(Failure::config)?
        .simulation;
    let rows = dynamics::compare_schedules(&base, &taus, a.supercycles).map_err(dyn_failure)?;
    let mut csv = String::from("tau,t_final,periodic,concatenated\n");
    println!("{:>10} {:>10} {:>14} {:>14}  higher", "tau", "t_final", "periodic", "concatenated");
    for r in &rows {
        println!(
            "{:>10.6} {:>10.6} {:>14.6} {:>14.6}  {}",
            r.tau,
            r.t_final,
            r.periodic,
            r.concatenated,
            if r.periodic_wins() { "periodic" } else { "concatenated" }
        );
        csv.push_str(&format!(
            "{},{},{},{}\n",
            dynamics::format_sig(r.tau, 12),
            dynamics::format_sig(r.t_final, 12),
            dynamics::format_sig(r.periodic, 12),
            dynamics::format_sig(r.concatenated, 12)
        ));
    }
    if let Some(p) = &a.out {
        fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?;
    }
    let mut report = Report::default();
    let find = |t: f64| rows.iter().find(|r| (r.tau - t).abs() < 1e-12);
    if let Some(r) = find(presets::TABLE1_TAUS[0]) {
        report.order("periodic_above_concatenated[tau=0.05]", r.periodic, r.concatenated);
    }
    if let Some(r) = find(presets::TABLE1_TAUS[2]) {
        report.at_least("concatenated_vs_periodic[tau=0.004]", r.concatenated, r.periodic);
    }
    for r in &rows {
        report.at_least(&format!("periodic_floor[tau={}]", r.tau), r.periodic, 0.999);
        report.at_least(&format!("concatenated_floor[tau={}]", r.tau), r.concatenated, 0.999);
    }
    report.finish()
}

fn cmd_dfs(a: &DfsArgs) -> Result<(), Failure> {
    let basis = dark_subspace(a.n).map_err(Failure::config)?;
    print!("{}", dfs::describe(&basis));
    for label in ["psi1", "psi2", "psi3"] {
        let psi = named_state(label).expect("known label");
        if psi.len() == 1 << a.n {
            let overlap = dfs::contains(&basis, &psi).map_err(Failure::config)?;
            println!("{label}: projection norm {overlap:.12}");
        }
    }
    Ok(())
}
