use map_replica::replica::transition;
use map_replica::solver::{entropy_zero_t, free_energy_zero_t, solve};
use map_replica::{ModelConfig, Quadrature, ReplicaState, SolverConfig, SourcePrior, SpectralEnsemble, Utility};
use proptest::prelude::*;

// The LASSO/ridge benchmark: α = 0.1, r = 2, 10 dB.
fn benchmark(projector: bool, u: Utility, lambda: f64) -> ModelConfig {
    let prior = SourcePrior::sparse_gaussian(0.1).unwrap();
    let lambda0 = prior.lambda0_for_snr_db(10.0);
    let ens = if projector { SpectralEnsemble::projector(2.0) } else { SpectralEnsemble::marcenko_pastur(2.0) }.unwrap();
    ModelConfig::new(ens, prior, u, lambda, lambda0).unwrap()
}

fn max_diff(a: &ReplicaState, b: &ReplicaState) -> f64 {
    a.coords().iter().zip(b.coords()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn damping_does_not_move_the_fixed_point() {
    let quad = Quadrature::default();
    for projector in [false, true] {
        for (u, lambda) in [(Utility::half_square(), 0.1), (Utility::l1(), 0.05), (Utility::l1(), 0.3)] {
            let cfg = benchmark(projector, u, lambda);
            let states: Vec<ReplicaState> = [0.3, 0.5, 0.8]
                .iter()
                .map(|&eta| {
                    let mut sc = SolverConfig::for_model(&cfg, 0);
                    sc.damping = eta;
                    let rep = solve(&cfg, 0, &sc, &quad).unwrap();
                    assert_eq!(rep.solutions.len(), 1, "η = {eta}");
                    rep.selected().unwrap().state.clone()
                })
                .collect();
            for s in &states[1..] {
                assert!(max_diff(s, &states[0]) < 1e-8, "{s:?} vs {:?}", states[0]);
            }
        }
    }
}

#[test]
fn converged_solutions_are_steady_and_consistent() {
    let quad = Quadrature::default();
    for projector in [false, true] {
        for (u, lambda) in [(Utility::half_square(), 0.2), (Utility::l1(), 0.1), (Utility::l0(), 0.5)] {
            let cfg = benchmark(projector, u, lambda);
            let sc = SolverConfig::for_model(&cfg, 0);
            let rep = solve(&cfg, 0, &sc, &quad).unwrap();
            assert!(!rep.solutions.is_empty());
            for sol in rep.solutions.iter().filter(|s| s.converged) {
                assert!(sol.residual <= sc.tol);
                let (t, _) = transition(&sol.state, &cfg, &quad).unwrap();
                assert!(max_diff(&t, &sol.state) < 10.0 * sc.tol);
                assert_eq!(sol.entropy, entropy_zero_t(sol.state.chi, &cfg).unwrap());
            }
            for d in rep.diagnostics.iter().filter(|d| d.converged) {
                assert!(d.residual <= sc.tol);
            }
        }
    }
}

#[test]
fn free_energy_is_path_independent() {
    let quad = Quadrature::default();
    let cfg = benchmark(false, Utility::l1(), 0.1);
    let mut sc = SolverConfig::for_model(&cfg, 0);
    let first = solve(&cfg, 0, &sc, &quad).unwrap().selected().unwrap().clone();
    // Start right next to the solution instead of from the grid.
    sc.starts = vec![ReplicaState::rs(first.state.chi * 1.3, first.state.q * 0.7)];
    sc.damping = 0.8;
    let second = solve(&cfg, 0, &sc, &quad).unwrap().selected().unwrap().clone();
    assert!(max_diff(&first.state, &second.state) < 1e-8);
    assert!((first.free_energy - second.free_energy).abs() < 1e-9);
    let direct = free_energy_zero_t(&first.state, &cfg, &quad).unwrap();
    assert!((direct - first.free_energy).abs() < 1e-12);
}

proptest! {
    #[test]
    fn entropy_depends_on_chi_alone(
        projector in any::<bool>(),
        rate in 1.0f64..4.0,
        lambda in 0.05f64..1.0,
        chi in 0.0f64..2.0,
        q in 0.0f64..1.0,
        p in 0.0f64..0.5,
    ) {
        let ens = if projector { SpectralEnsemble::projector(rate) } else { SpectralEnsemble::marcenko_pastur(rate) }.unwrap();
        let a = ModelConfig::new(ens.clone(), SourcePrior::sparse_gaussian(0.1).unwrap(), Utility::l1(), lambda, 0.01).unwrap();
        let b = ModelConfig::new(ens, SourcePrior::sparse_alphabet(0.3, 1.0, 2).unwrap(), Utility::l0(), lambda, q + p).unwrap();
        let h = entropy_zero_t(chi, &a).unwrap();
        prop_assert_eq!(h, entropy_zero_t(chi, &b).unwrap());
        prop_assert!(h <= 1e-15);
    }
}
