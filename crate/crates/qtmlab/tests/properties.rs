//! Randomized invariants.

use num_complex::Complex64;
use proptest::prelude::*;
use std::collections::BTreeMap;

use qtmlab::circuits::{embed_apply, RegisterState};
use qtmlab::linalg::{decompose_simple_form, operator_norm, random_unitary};
use qtmlab::spinboson::EigenSystem;
use qtmlab::turing::{lift_classical, qtm_step, ClassicalTM, Configuration, Move, QTMState};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decompose_recomposes_within_bound(seed in 0u64..5000, dpow in 1usize..4) {
        let d = 1usize << dpow;
        let u = random_unitary(d, seed);
        let r = decompose_simple_form(&u).unwrap();
        prop_assert!(r.residual < 1e-10);
        prop_assert!(r.factor_count() <= 2 * d * d - d);
        let diff = operator_norm(&u.sub(&r.product(d)));
        prop_assert!(diff < 1e-10);
    }

    #[test]
    fn qtm_step_preserves_norm_of_lifted_reversible(bits in proptest::collection::vec(0usize..2, 1..6), steps in 1usize..6) {
        // Symbol-flipping right mover: a configuration bijection.
        let delta = std::collections::HashMap::from([
            ((0usize, 0usize), (0usize, 1usize, Move::R)),
            ((0, 1), (0, 0, Move::R)),
        ]);
        let tm = ClassicalTM::new(
            vec!["go".into(), "done".into()],
            vec!["_".into(), "1".into()],
            0, 1, 0, delta,
        ).unwrap();
        let rule = lift_classical(&tm);
        // A two-configuration superposition with unequal weights.
        let c1 = Configuration::with_input(0, &bits, 0);
        let mut c2 = Configuration::with_input(0, &bits, 0);
        c2.head = vec![1];
        let mut amps = BTreeMap::new();
        amps.insert(c1, Complex64::new(0.6, 0.0));
        amps.insert(c2, Complex64::new(0.0, -0.8));
        let mut psi = QTMState::from_amplitudes(amps);
        let n0 = psi.norm();
        for _ in 0..steps {
            psi = qtm_step(&rule, &psi);
        }
        prop_assert!((psi.norm() - n0).abs() < 1e-12);
    }

    #[test]
    fn embed_preserves_norm(seed in 0u64..5000, site in 1usize..5) {
        let u = random_unitary(2, seed);
        let psi = uniform_state(4);
        let out = embed_apply(&u, &[site], &psi).unwrap();
        prop_assert!((out.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigensystem_mu_product(delta in 0.01f64..10.0, epsilon in -10.0f64..10.0) {
        let es = EigenSystem::new(delta, epsilon).unwrap();
        prop_assert!((es.mu_plus * es.mu_minus + 1.0).abs() < 1e-10);
        let c = es.epsilon / (es.nu * es.delta);
        prop_assert!((c * c + 1.0 / (es.nu * es.nu) - 1.0).abs() < 1e-10);
    }
}

fn uniform_state(l: usize) -> RegisterState {
    let dim = 1usize << l;
    let w = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
    RegisterState::from_dense(l, vec![w; dim])
}
