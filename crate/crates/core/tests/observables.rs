use map_replica::observables::{conditional_pmf_state, predict_state, Distortion};
use map_replica::{ModelConfig, Quadrature, ReplicaState, SourcePrior, SpectralEnsemble, Utility};
use proptest::prelude::*;

fn alphabet_model(projector: bool, kappa: usize, u: usize, lambda: f64) -> ModelConfig {
    let points: Vec<f64> = (-(kappa as i32)..=kappa as i32).map(f64::from).collect();
    let utility = match u {
        0 => Utility::l0(),
        1 => Utility::l1(),
        _ => Utility::half_square(),
    }
    .on_alphabet(points)
    .unwrap();
    let ens = if projector { SpectralEnsemble::projector(2.0) } else { SpectralEnsemble::marcenko_pastur(2.0) }.unwrap();
    ModelConfig::new(ens, SourcePrior::sparse_alphabet(0.2, 1.0, kappa).unwrap(), utility, lambda, 0.02).unwrap()
}

fn state(b1: bool, chi: f64, q: f64, p: f64, mu: f64) -> ReplicaState {
    if b1 {
        ReplicaState::rsb(chi, q, vec![p], vec![mu]).unwrap()
    } else {
        ReplicaState::rs(chi, q)
    }
}

proptest! {
    #[test]
    fn pmf_rows_are_stochastic_and_match_moments(
        projector in any::<bool>(),
        kappa in 1usize..3,
        u in 0usize..3,
        lambda in 0.05f64..1.0,
        b1 in any::<bool>(),
        chi in 0.01f64..0.5,
        q in 1e-3f64..0.1,
        p in 1e-4f64..0.05,
        mu in 0.2f64..5.0,
    ) {
        let cfg = alphabet_model(projector, kappa, u, lambda);
        let quad = Quadrature::default();
        let s = state(b1, chi, q, p, mu);
        let pmf = conditional_pmf_state(&s, &cfg, &quad).unwrap();
        for row in &pmf.probs {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        let masses = cfg.prior.masses().unwrap();
        let mut via_pmf = 0.0;
        for (i, &x) in pmf.inputs.iter().enumerate() {
            for (j, &xh) in pmf.outputs.iter().enumerate() {
                via_pmf += x * xh * masses[i] * pmf.probs[i][j];
            }
        }
        let jm = |k, l| predict_state(&s, &cfg, &Distortion::JointMoment(k, l), &quad).unwrap();
        prop_assert!((jm(1, 1) - via_pmf).abs() < 1e-9, "{} vs {}", jm(1, 1), via_pmf);
        let mse = predict_state(&s, &cfg, &Distortion::SquaredError, &quad).unwrap();
        prop_assert!((mse - (jm(2, 0) - 2.0 * jm(1, 1) + jm(0, 2))).abs() < 1e-10);
    }

    #[test]
    fn symmetric_pmf_is_sign_flip_invariant(projector in any::<bool>(), lambda in 0.05f64..1.0, chi in 0.01f64..0.5, q in 1e-3f64..0.1) {
        let cfg = alphabet_model(projector, 2, 0, lambda);
        let pmf = conditional_pmf_state(&ReplicaState::rs(chi, q), &cfg, &Quadrature::default()).unwrap();
        let n = pmf.inputs.len();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((pmf.probs[i][j] - pmf.probs[n - 1 - i][n - 1 - j]).abs() < 1e-12);
            }
        }
    }
}
