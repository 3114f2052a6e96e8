use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;

use taylor_lab::cross_section::{build_spectrum, CrossSectionSpec, Profile};
use taylor_lab::hypocoercivity::{build_certificate, phi};
use taylor_lab::linalg::{self, random_unit_complex};
use taylor_lab::modal_operator::{
    assemble, evaluate, nu_factorization_check, propagator, ModalOperator,
};

fn op(nu: f64) -> ModalOperator {
    let s = build_spectrum(&CrossSectionSpec::interval(8)).unwrap();
    assemble(&Profile::cosine2().field(&s).unwrap(), &s, nu).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagator_contracts(kappa in -20.0f64..20.0, t in 0.0f64..5.0, seed in any::<u64>()) {
        let o = op(0.1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let w = random_unit_complex(9, &mut rng);
        let out = propagator(&o, kappa, t) * &w;
        prop_assert!(out.norm() <= (-0.01 * kappa * kappa * t).exp() + 1e-12);
    }

    #[test]
    fn conjugate_symmetry(kappa in -10.0f64..10.0) {
        let o = op(0.05);
        let d = evaluate(&o, -kappa) - evaluate(&o, kappa).map(|z| z.conj());
        prop_assert!(d.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn nu_scalar_factor(kappa in -4.0f64..4.0, t in 0.0f64..3.0, nu in 0.01f64..0.3) {
        prop_assert!(nu_factorization_check(&op(nu), kappa, t) <= 1e-10);
    }

    #[test]
    fn phi_is_equivalent_to_the_norm(frac in 0.0f64..1.0, seed in any::<u64>()) {
        let o = op(0.05);
        let cert = build_certificate(&o, None, 0.1, 1.0).unwrap();
        let k = cert.band.0 * (cert.band.1 / cert.band.0).powf(frac);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let w = random_unit_complex(9, &mut rng);
        let p = phi(&cert, k, &w);
        prop_assert!(p >= 0.5 && p <= cert.m_check);
        let g = cert.metric(k);
        prop_assert!((p - linalg::inner(&w, &(g * &w)).re).abs() < 1e-13);
    }
}
