//! Hot kernels under the compiled backend. Run once as is and once with
//! `--no-default-features` to compare rayon against the sequential fallback;
//! with `parallel` on, each kernel is also timed inside a one-thread pool.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dfstransfer_core::avg_ham::{average_hamiltonian, bch_residual, SystemBathHamiltonian};
use dfstransfer_core::dynamics::{build_model, Rk4, SimulationConfig};
use dfstransfer_core::linalg::C64;
use dfstransfer_core::par;
use dfstransfer_core::sequences::DecouplingCycle;

const BACKEND: &str = if cfg!(feature = "parallel") { "rayon" } else { "sequential" };

fn single_thread<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("pool")
            .install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        f()
    }
}

fn lindblad_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("rk4_step");
    for (n, state) in [(2, "psi1"), (4, "psi2")] {
        let config = SimulationConfig::new(n, state);
        let model = build_model(&config).unwrap();
        let side = model.side();
        let mut rho = vec![C64::new(0.0, 0.0); side * side];
        rho[0] = C64::new(1.0, 0.0);
        let mut rk = Rk4::new(side);
        group.bench_with_input(BenchmarkId::new(BACKEND, side), &side, |b, _| {
            b.iter(|| rk.step(model.generator(), black_box(&mut rho), 1e-3))
        });
        if cfg!(feature = "parallel") {
            group.bench_with_input(BenchmarkId::new("one-thread-pool", side), &side, |b, _| {
                single_thread(|| b.iter(|| rk.step(model.generator(), black_box(&mut rho), 1e-3)))
            });
        }
    }
    group.finish();
}

fn averaging(c: &mut Criterion) {
    let mut group = c.benchmark_group("average_hamiltonian");
    group.sample_size(10);
    for n in [4, 5] {
        let cycle = DecouplingCycle::optimal(n).unwrap();
        let mut h = SystemBathHamiltonian::random_independent(n, 2, 1).unwrap();
        if cycle.has_ancilla() {
            h = h.with_ancilla().unwrap();
        }
        group.bench_with_input(BenchmarkId::new(BACKEND, n), &n, |b, _| {
            b.iter(|| average_hamiltonian(black_box(&h), &cycle).unwrap())
        });
    }
    group.finish();
}

fn sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("tau_ladder");
    group.sample_size(10);
    let h = SystemBathHamiltonian::random_independent(2, 2, 3).unwrap();
    let cycle = DecouplingCycle::optimal(2).unwrap();
    let taus: Vec<f64> = (0..8).map(|k| 0.05 / f64::powi(2.0, k)).collect();
    group.bench_function(BACKEND, |b| b.iter(|| bch_residual(&h, &cycle, black_box(&taus)).unwrap()));
    if cfg!(feature = "parallel") {
        group.bench_function("one-thread-pool", |b| {
            single_thread(|| b.iter(|| bch_residual(&h, &cycle, black_box(&taus)).unwrap()))
        });
    }
    let items: Vec<u64> = (0..64).collect();
    group.bench_function(format!("{BACKEND}/par_map"), |b| {
        b.iter(|| par::map(&items, |&x| (0..20_000u64).fold(x, |a, k| a.wrapping_mul(31).wrapping_add(k))))
    });
    group.finish();
}

criterion_group!(benches, lindblad_step, averaging, sweeps);
criterion_main!(benches);
