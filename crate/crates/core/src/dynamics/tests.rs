use super::*;

fn dense_lindblad(h: &OperatorMatrix, ls: &[OperatorMatrix], rho: &OperatorMatrix) -> OperatorMatrix {
    let i = C64::new(0.0, 1.0);
    let mut out = h.commutator(rho).unwrap().scale(-i);
    for l in ls {
        let ld = l.adjoint();
        let ldl = ld.matmul(l).unwrap();
        out += &l.matmul(rho).unwrap().matmul(&ld).unwrap();
        out += &ldl.matmul(rho).unwrap().scale_real(-0.5);
        out += &rho.matmul(&ldl).unwrap().scale_real(-0.5);
    }
    out
}

fn random_density(dims: &[usize], seed: u64) -> OperatorMatrix {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let side: usize = dims.iter().product();
    let a = OperatorMatrix::from_fn(dims, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let p = a.matmul(&a.adjoint()).unwrap();
    let tr = p.trace().re;
    assert!(side > 0);
    p.scale_real(1.0 / tr)
}

#[test]
fn structured_generator_matches_dense_master_equation() {
    let mut c = SimulationConfig::new(2, "psi1");
    c.baths = vec![
        BathSpec::default(),
        BathSpec {
            axis: PauliAxis::Y,
            strength: 0.3,
            memory_rate: 0.7,
            n_max: Some(1),
            enabled: true,
        },
    ];
    c.omega = 1.3;
    let model = build_model(&c).unwrap();
    assert_eq!(model.layout.dims(), &[2, 2, 3, 2]);
    let rho = random_density(model.layout.dims(), 5);
    let n = model.side();
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    let mut tmp = out.clone();
    model.generator().derivative(rho.data(), &mut out, &mut tmp);
    let expect = dense_lindblad(&model.hamiltonian().unwrap(), &model.lindblad_operators().unwrap(), &rho);
    let dev = expect
        .data()
        .iter()
        .zip(&out)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(dev < 1e-12, "{dev}");
}

#[test]
fn control_terms_match_dense_exchange() {
    let mut c = SimulationConfig::new(2, "psi1");
    c.baths[0].n_max = Some(1);
    let model = build_model(&c).unwrap();
    let gen = crate::qubit_ops::ExchangeGenerator::Heisenberg;
    let g = model
        .generator()
        .with_terms(model.control_terms(&[(0, 1)], 2.0, gen).unwrap());
    let mut h = model.hamiltonian().unwrap();
    LocalOperator::new(&model.layout, &[0, 1], &gen.local_matrix())
        .unwrap()
        .add_to_dense(C64::new(2.0, 0.0), h.data_mut());
    let rho = random_density(model.layout.dims(), 9);
    let n = model.side();
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    let mut tmp = out.clone();
    g.derivative(rho.data(), &mut out, &mut tmp);
    let expect = dense_lindblad(&h, &model.lindblad_operators().unwrap(), &rho);
    let dev = OperatorMatrix::new(rho.dims().to_vec(), out).unwrap().distance(&expect).unwrap();
    assert!(dev < 1e-12, "{dev}");
}

#[test]
fn model_dimensions_and_coupling() {
    let c = SimulationConfig::new(2, "psi1");
    let m = build_model(&c).unwrap();
    assert_eq!(m.side(), 36);
    assert!((m.modes[0].coupling - 0.05f64.sqrt()).abs() < 1e-15);
    assert!((m.modes[0].coupling - 0.223_606_797_749_979).abs() < 1e-12);
    assert_eq!(m.modes[0].damping, 2.0);

    let four = build_model(&SimulationConfig::new(4, "psi2")).unwrap();
    assert_eq!(four.side(), 256);

    let mut odd = SimulationConfig::new(3, "psi1");
    odd.initial_state = InitialState::Amplitudes {
        amplitudes: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
    };
    odd.cycle = ControlCycle::Optimal;
    let m = build_model(&odd).unwrap();
    assert_eq!(m.n_sites, 4);
    assert_eq!(m.modes.len(), 3);
    odd.ancilla_bath = true;
    assert_eq!(build_model(&odd).unwrap().modes.len(), 4);

    let mut collective = SimulationConfig::new(4, "psi2");
    collective.bath_topology = BathTopology::Collective;
    let m = build_model(&collective).unwrap();
    assert_eq!(m.modes.len(), 1);
    assert_eq!(m.modes[0].sites, vec![0, 1, 2, 3]);
}

#[test]
fn capacity_error() {
    let mut c = SimulationConfig::new(6, "psi1");
    c.initial_state = InitialState::Amplitudes {
        amplitudes: vec![[1.0, 0.0]; 64],
    };
    c.baths[0].n_max = Some(2);
    assert!(matches!(
        build_model(&c),
        Err(DynamicsError::Linalg(LinalgError::Capacity { .. }))
    ));
}

#[test]
fn config_validation() {
    let good = SimulationConfig::new(2, "psi1");
    good.validate().unwrap();
    let bad = |f: &dyn Fn(&mut SimulationConfig)| {
        let mut c = good.clone();
        f(&mut c);
        matches!(c.validate(), Err(DynamicsError::Config(_)))
    };
    assert!(bad(&|c| c.baths[0].memory_rate = 0.0));
    assert!(bad(&|c| c.baths[0].strength = -0.1));
    assert!(bad(&|c| c.baths[0].n_max = Some(0)));
    assert!(bad(&|c| c.dt = Some(0.1)));
    assert!(bad(&|c| c.initial_state = InitialState::Label("psi2".into())));
    assert!(bad(&|c| c.initial_state = InitialState::Label("nope".into())));
    assert!(bad(&|c| c.baths = vec![BathSpec::default(); 3]));
    assert!(bad(&|c| c.cycle = ControlCycle::Original4));
    let mut c = good.clone();
    c.cycle = ControlCycle::Optimal;
    c.t_final = 0.3;
    assert!(matches!(c.block_timeline(), Err(DynamicsError::Config(_))));
    c.t_final = 1.5;
    assert_eq!(c.block_timeline().unwrap().unwrap().1, 3);
}

#[test]
fn config_json_round_trip_and_unknown_keys() {
    let json = r#"{"n_qubits": 2, "initial_state": "psi1", "cycle": "optimal",
        "pulse": {"type": "finite", "coupling": 3.14159, "generator": "heisenberg"},
        "baths": [{"axis": "z", "strength": 0.2}]}"#;
    let c: SimulationConfig = serde_json::from_str(json).unwrap();
    assert_eq!(c.baths[0].axis, PauliAxis::Z);
    assert_eq!(c.baths[0].memory_rate, 1.0);
    assert_eq!(c.cycle, ControlCycle::Optimal);
    let back: SimulationConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.fingerprint(), c.fingerprint());
    assert_eq!(c.fingerprint().len(), 64);
    let mut other = c.clone();
    other.tau = 0.125;
    assert_ne!(other.fingerprint(), c.fingerprint());

    let unknown = r#"{"n_qubits": 2, "initial_state": "psi1", "colour": 1}"#;
    assert!(serde_json::from_str::<SimulationConfig>(unknown).is_err());
    let amps = r#"{"n_qubits": 1, "initial_state": {"amplitudes": [[1, 0], [0, 1]]}}"#;
    let c: SimulationConfig = serde_json::from_str(amps).unwrap();
    let psi = c.initial_vector().unwrap();
    assert!((psi.amplitudes()[1] - C64::new(0.0, std::f64::consts::FRAC_1_SQRT_2)).norm() < 1e-15);
}

#[test]
fn correlation_oracle() {
    let grid: Vec<f64> = (0..100).map(|k| k as f64 * 0.05).collect();
    let pts = bath_correlation_oracle(0.1, 1.0, &grid);
    assert!((pts[0].closed_form - 0.05).abs() < 1e-15);
    assert!((pts[20].closed_form / pts[0].closed_form - (-1.0f64).exp()).abs() < 1e-14);
    let dev = pts
        .iter()
        .map(|p| (p.closed_form - p.pseudomode).abs())
        .fold(0.0, f64::max);
    assert!(dev < 1e-14);
}

#[test]
fn dephasing_law() {
    let v = dephasing_oracle(0.1, 1.0, &[0.0, 4.0]);
    assert_eq!(v[0], 1.0);
    // frozen from an independent quadrature of the double integral
    assert!((v[1] - 0.546_804_946_569).abs() < 1e-9, "{}", v[1]);
    assert!(dephasing_oracle(0.0, 1.0, &[0.5, 3.0]).iter().all(|&x| x == 1.0));
}

#[test]
fn format_significant_digits() {
    assert_eq!(format_sig(0.0, 12), "0");
    assert_eq!(format_sig(1.0, 12), "1");
    assert_eq!(format_sig(0.02, 12), "0.02");
    assert_eq!(format_sig(1.0 / 3.0, 12), "0.333333333333");
    assert_eq!(format_sig(0.999765123456789, 12), "0.999765123457");
    assert_eq!(format_sig(4.0, 12), "4");
    assert_eq!(format_sig(1.5e-7, 12), "1.5e-07");
}

#[test]
fn uncoupled_trace_is_constant() {
    let mut c = SimulationConfig::new(2, "psi1");
    c.baths[0].strength = 0.0;
    c.t_final = 0.5;
    let tr = evolve(&c).unwrap();
    assert!(tr.samples.len() >= 201);
    assert!(tr.samples.iter().all(|s| (s.fidelity - 1.0).abs() < 1e-9));
    assert!(tr.samples.windows(2).all(|w| w[0].t < w[1].t));
    let csv = tr.to_csv();
    assert!(csv.starts_with("t,fidelity\n0,1\n"));
    assert_eq!(csv.lines().count(), tr.samples.len() + 1);
}

#[test]
fn boundaries_are_sampled_after_pulses() {
    let mut c = SimulationConfig::new(2, "psi1");
    c.cycle = ControlCycle::Optimal;
    c.tau = 0.25;
    c.t_final = 1.0;
    c.baths[0].n_max = Some(1);
    let tr = evolve(&c).unwrap();
    let b: Vec<f64> = tr.boundary_samples().map(|s| s.t).collect();
    assert_eq!(b.len(), 3);
    assert!(b[0] == 0.0 && (b[1] - 0.5).abs() < 1e-12 && (b[2] - 1.0).abs() < 1e-12);
    assert!(tr.stats.max_trace_drift < 1e-7);
    assert!(tr.stats.min_eigenvalue > -1e-7);
}
