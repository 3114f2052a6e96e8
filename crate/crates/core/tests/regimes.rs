use rand::SeedableRng;
use taylor_lab::cross_section::{build_spectrum, CrossSectionSpec, Profile};
use taylor_lab::evolution::{
    evolve_series, initialize, regime_decay_check, uniform_schedule, InitialDatum, WavenumberGrid,
};
use taylor_lab::hypocoercivity::{
    build_certificate, norm_decay_conclusion, norm_equivalence, phi_decay_check,
};
use taylor_lab::linalg::random_unit_complex;
use taylor_lab::modal_operator::assemble;

#[test]
fn three_regimes_decay_as_certified() {
    let s = build_spectrum(&CrossSectionSpec::interval(16)).unwrap();
    let f = Profile::cosine().field(&s).unwrap();
    let op = assemble(&f, &s, 0.05).unwrap();
    let cert = build_certificate(&op, None, 0.1, 1.0).unwrap();
    let grid = WavenumberGrid::new(60.0, 1024, 0.05, cert.kappa0, 1.0).unwrap();
    let init = initialize(
        &InitialDatum::Modulated {
            mass: 1.0,
            width: 1.0,
            amplitude: 0.5,
        },
        &grid,
        16,
    )
    .unwrap();
    let series = evolve_series(&init, &op, &grid, &uniform_schedule(4.0, 40)).unwrap();
    let r = regime_decay_check(&series, &grid, &op, &cert).unwrap();
    println!(
        "{:?} high {} mid {} low {} <= {}",
        r.counts, r.high_margin, r.intermediate_margin, r.low_slope, r.low_bound
    );
    assert!(r.counts.iter().all(|c| *c > 0));
    assert!(r.pass, "{:?}", &r.violations[..r.violations.len().min(5)]);
}

#[test]
fn band_sweep_across_viscosities() {
    let s = build_spectrum(&CrossSectionSpec::interval(16)).unwrap();
    let f = Profile::cosine().field(&s).unwrap();
    let mut rates = Vec::new();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for nu in [0.02, 0.05, 0.1] {
        let op = assemble(&f, &s, nu).unwrap();
        let cert = build_certificate(&op, None, 0.1, 1.0).unwrap();
        rates.push(cert.m_tilde);
        for k in cert.band_samples(32) {
            let w = random_unit_complex(17, &mut rng);
            let r = phi_decay_check(&op, &cert, k, &w, 50.0, 50).unwrap();
            assert!(r.pass, "nu={nu} {:?}", r.offending);
            assert!(norm_decay_conclusion(&r).pass);
            assert!(norm_equivalence(&cert, k, 1000, &mut rng).pass);
        }
    }
    assert!(rates.windows(2).all(|w| w[0] == w[1]));
}
