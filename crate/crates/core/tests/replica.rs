use map_replica::replica::{effective_channel, transition, Decoupled};
use map_replica::solver::free_energy_zero_t;
use map_replica::{ModelConfig, Quadrature, ReplicaState, SourcePrior, SpectralEnsemble, Utility};
use proptest::prelude::*;

fn utility(i: usize) -> Utility {
    match i {
        0 => Utility::half_square(),
        1 => Utility::l1(),
        2 => Utility::l0(),
        _ => Utility::l0().on_alphabet(vec![-1.0, 0.0, 1.0]).unwrap(),
    }
}

fn model(projector: bool, rate: f64, u: usize, lambda: f64, lambda0: f64) -> ModelConfig {
    let ensemble = if projector {
        SpectralEnsemble::projector(rate).unwrap()
    } else {
        SpectralEnsemble::marcenko_pastur(rate).unwrap()
    };
    let prior = if u == 3 { SourcePrior::sparse_alphabet(0.2, 1.0, 1).unwrap() } else { SourcePrior::sparse_gaussian(0.2).unwrap() };
    ModelConfig::new(ensemble, prior, utility(u), lambda, lambda0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn one_step_rsb_with_zero_p_is_replica_symmetric(
        projector in any::<bool>(),
        rate in 1.0f64..4.0,
        u in 0usize..4,
        lambda in 0.05f64..1.0,
        lambda0 in 1e-3f64..0.1,
        chi in 0.01f64..1.0,
        q in 1e-3f64..0.2,
        mu in 0.1f64..10.0,
    ) {
        let cfg = model(projector, rate, u, lambda, lambda0);
        let quad = Quadrature::default();
        let rs = ReplicaState::rs(chi, q);
        let rsb = ReplicaState::rsb(chi, q, vec![0.0], vec![mu]).unwrap();
        let (a, _) = transition(&rs, &cfg, &quad).unwrap();
        let (b, _) = transition(&rsb, &cfg, &quad).unwrap();
        prop_assert!((a.chi - b.chi).abs() < 1e-9, "chi {} vs {}", a.chi, b.chi);
        prop_assert!((a.q - b.q).abs() < 1e-9, "q {} vs {}", a.q, b.q);
        prop_assert!(b.p[0].abs() < 1e-9);
        let fa = free_energy_zero_t(&rs, &cfg, &quad).unwrap();
        let fb = free_energy_zero_t(&rsb, &cfg, &quad).unwrap();
        prop_assert!((fa - fb).abs() < 1e-8, "free energy {} vs {}", fa, fb);
    }
}

proptest! {
    #[test]
    fn linear_chi_update_is_closed_form(
        projector in any::<bool>(),
        rate in 1.0f64..4.0,
        lambda in 0.05f64..1.0,
        chi in 0.01f64..1.0,
        q in 1e-3f64..0.2,
    ) {
        let cfg = model(projector, rate, 0, lambda, 0.01);
        let s = ReplicaState::rs(chi, q);
        let ls = effective_channel(&s, &cfg).unwrap().lambda_s;
        let (next, _) = transition(&s, &cfg, &Quadrature::default()).unwrap();
        prop_assert!((next.chi - ls / (1.0 + ls)).abs() < 1e-10);
    }

    #[test]
    fn empty_source_without_noise_is_exact(projector in any::<bool>(), rate in 1.0f64..4.0, chi in 0.01f64..1.0, mu in 0.1f64..10.0) {
        let ensemble = if projector { SpectralEnsemble::projector(rate) } else { SpectralEnsemble::marcenko_pastur(rate) }.unwrap();
        let cfg = ModelConfig::new(ensemble, SourcePrior::sparse_gaussian(0.0).unwrap(), Utility::l0(), 0.2, 0.0).unwrap();
        let quad = Quadrature::default();
        for s in [ReplicaState::rs(chi, 0.0), ReplicaState::rsb(chi, 0.0, vec![0.0], vec![mu]).unwrap()] {
            let st = Decoupled::new(&s, &cfg, &quad).unwrap().stats(None).unwrap();
            prop_assert_eq!(st.mse, 0.0);
            for c in &st.corr {
                prop_assert_eq!(*c, 0.0);
            }
        }
    }

    #[test]
    fn effective_channel_is_lipschitz(
        projector in any::<bool>(),
        rate in 1.0f64..4.0,
        lambda in 0.05f64..1.0,
        chi in 0.01f64..1.0,
        q in 1e-3f64..0.2,
        p in 0.0f64..0.1,
        mu in 0.1f64..10.0,
    ) {
        let cfg = model(projector, rate, 1, lambda, 0.01);
        let s = ReplicaState::rsb(chi, q, vec![p], vec![mu]).unwrap();
        let base = effective_channel(&s, &cfg).unwrap();
        let c = s.coords();
        for j in 0..c.len() {
            for h in [1e-4, 1e-6] {
                let mut d = c.clone();
                d[j] += h;
                let moved = effective_channel(&s.with_coords(&d), &cfg).unwrap();
                let diff = (moved.lambda_s - base.lambda_s).abs()
                    .max((moved.lambda0_s - base.lambda0_s).abs())
                    .max((moved.lambda_k[0] - base.lambda_k[0]).abs());
                prop_assert!(diff <= 1e3 * h, "coordinate {}, h = {}: moved by {}", j, h, diff);
            }
        }
    }
}
