use ddsim::engine::{disorder_rng, run_rng};
use ddsim::linalg::{expm_hermitian, DenseOperator};
use ddsim::{
    build_hamiltonian, evolve, evolve_embedded_fast, initial_coherent_state, monte_carlo, propagate,
    sample_params, CouplingGraph, DecouplingCycle, DeltaMode, PauliString, PauliSumHamiltonian,
    PropagatorCache, SchemeSpec, StateVector,
};
use num_complex::Complex64 as C64;

fn plus() -> StateVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::new(vec![C64::new(s, 0.0), C64::new(s, 0.0)]).unwrap()
}

fn lattice_h(bound: f64, seed: u64) -> PauliSumHamiltonian {
    let graph = CouplingGraph::grid(2, 2);
    let params = sample_params(&mut disorder_rng(seed), bound, &graph, DeltaMode::Sample).unwrap();
    build_hamiltonian(&params, &graph).unwrap()
}

fn random_cycle(n: usize, len: usize, seed: u64) -> DecouplingCycle {
    let mut rng = run_rng(seed, 99);
    let frames = (0..len).map(|_| PauliString::sample_uniform(&mut rng, n)).collect();
    DecouplingCycle::new(frames, 1.0).unwrap()
}

#[test]
fn parec_single_qubit_random_walk() {
    let delta = 0.01;
    let h = PauliSumHamiltonian::new(1, vec![(delta, "Z".parse().unwrap())]).unwrap();
    let cache = PropagatorCache::from_hamiltonian(&h, 1.0).unwrap();
    let t = monte_carlo(&cache, &SchemeSpec::parec(1, 1.0), &plus(), 1000, 50, 200, 11).unwrap();
    assert_eq!(t.n_runs, 200);
    for i in 1..t.len() {
        let n = t.times[i] as i32;
        let expected = 0.5 * (1.0 + (2.0 * delta).cos().powi(n));
        let dev = (t.mean_fidelity[i] - expected).abs();
        assert!(dev <= 3.0 * t.std_error[i], "t = {n}: {} vs {expected}", t.mean_fidelity[i]);
    }
}

#[test]
fn fast_embedded_path_matches_stepwise() {
    let h = lattice_h(0.05, 3);
    let cycle = random_cycle(4, 6, 3);
    let cache = PropagatorCache::from_hamiltonian(&h, 1.0).unwrap().with_cycle(&cycle).unwrap();
    let psi = initial_coherent_state(4).unwrap();
    let spec = SchemeSpec::embedded(cycle.clone());
    let slow = evolve(&cache, &spec, &psi, 6 * 50, 6, &mut run_rng(5, 0)).unwrap();
    let fast = evolve_embedded_fast(&cache, &psi, 50, &mut run_rng(5, 0)).unwrap();
    assert_eq!(slow.times, fast.times);
    for (a, b) in slow.mean_fidelity.iter().zip(&fast.mean_fidelity) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    // monte_carlo picks the fast path; stride 3 forces stepwise.
    let mc_fast = monte_carlo(&cache, &spec, &psi, 60, 6, 7, 2).unwrap();
    let mc_slow = monte_carlo(&cache, &spec, &psi, 60, 3, 7, 2).unwrap();
    for (i, t) in mc_fast.times.iter().enumerate() {
        let j = mc_slow.index_of(*t).unwrap();
        assert!((mc_fast.mean_fidelity[i] - mc_slow.mean_fidelity[j]).abs() < 1e-10);
    }
}

#[test]
fn norm_is_preserved_over_long_runs() {
    let h = lattice_h(0.05, 4);
    let cache = PropagatorCache::from_hamiltonian(&h, 1.0).unwrap();
    let psi = initial_coherent_state(4).unwrap();
    let end = propagate(&cache, &SchemeSpec::parec(4, 1.0), &psi, 100_000, &mut run_rng(1, 0)).unwrap();
    assert!((end.norm() - 1.0).abs() < 1e-10);
}

#[test]
fn global_phase_does_not_change_fidelity() {
    let h = lattice_h(0.05, 5);
    let mut shifted_terms = h.terms().to_vec();
    shifted_terms.push((0.37, PauliString::identity(4)));
    let shifted = PauliSumHamiltonian::new(4, shifted_terms).unwrap();
    let psi = initial_coherent_state(4).unwrap();
    let a = PropagatorCache::from_hamiltonian(&h, 1.0).unwrap();
    let b = PropagatorCache::from_hamiltonian(&shifted, 1.0).unwrap();
    let spec = SchemeSpec::parec(4, 1.0);
    let ta = monte_carlo(&a, &spec, &psi, 200, 10, 5, 8).unwrap();
    let tb = monte_carlo(&b, &spec, &psi, 200, 10, 5, 8).unwrap();
    for (x, y) in ta.mean_fidelity.iter().zip(&tb.mean_fidelity) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn bang_bang_follows_residual_hamiltonian() {
    let h = lattice_h(0.05, 6);
    let cycle = random_cycle(4, 5, 6);
    let cache = PropagatorCache::from_hamiltonian(&h, 1.0).unwrap().with_cycle(&cycle).unwrap();
    let psi = initial_coherent_state(4).unwrap();
    let t = evolve(&cache, &SchemeSpec::bang_bang(cycle.clone()), &psi, 5 * 40, 5, &mut run_rng(0, 0)).unwrap();
    let hbar = cache.residual().unwrap();
    for (time, f) in t.times.iter().zip(&t.mean_fidelity) {
        let u = expm_hermitian(hbar, *time).unwrap();
        let moved = ddsim::linalg::matvec(&u, &psi).unwrap();
        assert!((psi.fidelity(&moved) - f).abs() < 1e-9, "t = {time}");
    }
}

#[test]
fn embedded_equals_parec_on_residual() {
    let h = lattice_h(0.05, 7);
    let cycle = random_cycle(4, 4, 7);
    let cache = PropagatorCache::from_hamiltonian(&h, 1.0).unwrap().with_cycle(&cycle).unwrap();
    let psi = initial_coherent_state(4).unwrap();
    let embedded = monte_carlo(&cache, &SchemeSpec::embedded(cycle.clone()), &psi, 4 * 60, 4, 9, 21).unwrap();

    let t_c = cycle.cycle_time();
    let hbar: DenseOperator = cache.residual().unwrap().clone();
    let coarse = PropagatorCache::new(&hbar, t_c).unwrap();
    let parec = monte_carlo(&coarse, &SchemeSpec::parec(4, t_c), &psi, 60, 1, 9, 21).unwrap();
    assert_eq!(embedded.times, parec.times);
    for (a, b) in embedded.mean_fidelity.iter().zip(&parec.mean_fidelity) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let h = lattice_h(0.05, 8);
    let cache = PropagatorCache::from_hamiltonian(&h, 1.0).unwrap();
    let psi = initial_coherent_state(4).unwrap();
    let spec = SchemeSpec::parec(4, 1.0);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| monte_carlo(&cache, &spec, &psi, 40, 4, 130, 3).unwrap())
    };
    let one = run(1);
    assert_eq!(one.to_csv_string(), run(3).to_csv_string());
    let other_seed = monte_carlo(&cache, &spec, &psi, 40, 4, 130, 4).unwrap();
    assert_ne!(one.mean_fidelity, other_seed.mean_fidelity);
}

#[test]
fn stochastic_error_bars_shrink_with_runs() {
    let h = lattice_h(0.05, 9);
    let cache = PropagatorCache::from_hamiltonian(&h, 1.0).unwrap();
    let psi = initial_coherent_state(4).unwrap();
    let spec = SchemeSpec::parec(4, 1.0);
    let few = monte_carlo(&cache, &spec, &psi, 100, 100, 20, 1).unwrap();
    let many = monte_carlo(&cache, &spec, &psi, 100, 100, 320, 1).unwrap();
    assert!(few.std_error[0] < 1e-15);
    let ratio = few.std_error[1] / many.std_error[1];
    assert!((2.5..6.0).contains(&ratio), "{ratio}");
}
