use std::f64::consts::PI;
use std::time::Instant;

use taylor_lab::cross_section::{build_spectrum, CrossSectionSpec, Profile};
use taylor_lab::evolution::{run_dispersion, DispersionConfig};
use taylor_lab::modal_operator::assemble;

#[test]
fn cosine_shear_enhances_diffusion() {
    let s = build_spectrum(&CrossSectionSpec::interval(16)).unwrap();
    let f = Profile::cosine().field(&s).unwrap();
    let op = assemble(&f, &s, 0.1).unwrap();
    let start = Instant::now();
    let cfg = DispersionConfig {
        t_max: 50.0,
        ..Default::default()
    };
    let a = run_dispersion(&op, &f, &cfg).unwrap();
    println!("T=50 run {:?}", start.elapsed());
    assert!((a.nu_td - (0.01 + 1.0 / (2.0 * PI * PI))).abs() < 1e-12);
    println!(
        "asymptote {} nu_td {} rel {}",
        a.diffusivity.asymptote, a.nu_td, a.d_eff_rel_error
    );
    assert!(a.d_eff_pass());
    assert!(a.invariants_pass(), "{} {}", a.mass_drift, a.reality_defect);

    let full = run_dispersion(&op, &f, &DispersionConfig::default()).unwrap();
    println!(
        "gauss slope {:?} rem {:?} {}",
        full.gauss_slope, full.remainder.slope, full.remainder.bound
    );
    assert!(full.remainder.pass);
    println!(
        "T=0 remainder moments {}",
        full.remainder.samples[0].moment_max
    );
    assert!(full.remainder.samples[0].moment_max <= 1e-7);
    assert!(full.gauss_pass());

    let b = run_dispersion(
        &op,
        &f,
        &DispersionConfig {
            nu: 0.05,
            t_max: 50.0,
            ..Default::default()
        },
    )
    .unwrap();
    let shift = a.diffusivity.asymptote - b.diffusivity.asymptote;
    println!("shift {shift}");
    assert!((shift - 0.0075).abs() / 0.0075 < 0.02);
}
