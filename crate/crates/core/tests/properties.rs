use proptest::prelude::*;

use dfstransfer_core::avg_ham::{average_hamiltonian, conjugate, error_hamiltonians, SystemBathHamiltonian};
use dfstransfer_core::dfs::dark_subspace;
use dfstransfer_core::dynamics::format_sig;
use dfstransfer_core::linalg::C64;
use dfstransfer_core::qubit_ops::{collective_spin, PauliAxis};
use dfstransfer_core::sequences::{
    schedule_concatenated, schedule_periodic, CycleKind, DecouplingCycle, EventKind, PulseMode, PulseSpacing,
};

fn kind() -> impl Strategy<Value = CycleKind> {
    prop_oneof![Just(CycleKind::Optimal), Just(CycleKind::Cyclic)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cycles_visit_once_and_close(n in 2usize..=10, k in kind()) {
        let c = DecouplingCycle::build(k, n).unwrap();
        c.validate().unwrap();
        prop_assert!(c.visits_every_site_once());
        prop_assert!(c.controllers_form_group());
        prop_assert_eq!(c.intervals(), c.n_qubits());
    }

    #[test]
    fn step_counts(n in 2usize..=10) {
        let opt = DecouplingCycle::optimal(n).unwrap();
        let even = n + n % 2;
        prop_assert_eq!(opt.step_count().parallel_layers, even);
        prop_assert_eq!(opt.has_ancilla(), n % 2 == 1);
        let cyc = DecouplingCycle::cyclic(n).unwrap();
        prop_assert_eq!(cyc.step_count().controller_gates, (n - 1) * (n - 1));
    }

    #[test]
    fn ideal_timelines_are_gauge_closed(
        n in 2usize..=7,
        repeats in 1usize..=3,
        tau in 0.01f64..1.0,
        concatenated in any::<bool>(),
    ) {
        let c = DecouplingCycle::optimal(n).unwrap();
        let t = if concatenated {
            schedule_concatenated(&c, tau, PulseMode::Ideal, PulseSpacing::Packed).unwrap()
        } else {
            schedule_periodic(&c, repeats, tau, PulseMode::Ideal, PulseSpacing::Packed).unwrap()
        };
        prop_assert!(t.net_permutation().is_identity());
        prop_assert!(t.is_contiguous());
        let m = c.intervals() as f64;
        let expect = if concatenated { m * m * tau } else { repeats as f64 * m * tau };
        prop_assert!((t.total_duration() - expect).abs() < 1e-9 * expect.max(1.0));
        for w in t.cycle_boundaries().windows(2) {
            prop_assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn finite_windows_have_quarter_turn_area(n in 2usize..=6, coupling in 2.0f64..50.0) {
        let c = DecouplingCycle::optimal(n).unwrap();
        let mode = PulseMode::finite(coupling);
        let t = schedule_periodic(&c, 1, 0.5, mode, PulseSpacing::Packed).unwrap();
        for e in t.events() {
            if let EventKind::Control { coupling: j, .. } = e.kind {
                prop_assert!((e.duration * j - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn format_sig_round_trips(x in -1e6f64..1e6) {
        let s = format_sig(x, 12);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - x).abs() <= 1e-11 * x.abs().max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn averages_agree_and_symmetrised_error_is_invariant(n in prop_oneof![Just(2usize), Just(4)], seed in any::<u64>()) {
        let h = SystemBathHamiltonian::random_independent(n, 2, seed).unwrap();
        let opt = DecouplingCycle::optimal(n).unwrap();
        let cyc = DecouplingCycle::cyclic(n).unwrap();
        let a = average_hamiltonian(&h, &opt).unwrap();
        let b = average_hamiltonian(&h, &cyc).unwrap();
        prop_assert!(a.distance(&b).unwrap() < 1e-10);
        prop_assert!(a.distance(&h.collective_coupling().unwrap()).unwrap() < 1e-10);
        let rep = error_hamiltonians(&h, &opt).unwrap();
        for g in opt.controllers() {
            let moved = conjugate(&rep.h_p_symmetrized, g).unwrap();
            prop_assert!(moved.distance(&rep.h_p_symmetrized).unwrap() < 1e-10);
        }
    }

    #[test]
    fn dark_vectors_stay_dark_under_averaged_coupling(n in prop_oneof![Just(2usize), Just(4)], seed in any::<u64>()) {
        let h = SystemBathHamiltonian::random_independent(n, 2, seed).unwrap();
        let avg = average_hamiltonian(&h, &DecouplingCycle::optimal(n).unwrap()).unwrap();
        let basis = dark_subspace(n).unwrap();
        let leak = dfstransfer_core::avg_ham::dark_leakage(&avg, &basis.vectors, h.rest_dim()).unwrap();
        prop_assert!(leak < 1e-9);
    }
}

#[test]
fn collective_spins_close_an_algebra() {
    for n in 1..=4 {
        let [x, y, z] = PauliAxis::ALL.map(|a| collective_spin(a, n).unwrap());
        let lhs = x.commutator(&y).unwrap();
        let rhs = z.scale(C64::new(0.0, 2.0));
        assert!(lhs.distance(&rhs).unwrap() < 1e-12);
    }
}
