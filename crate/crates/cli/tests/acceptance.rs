use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taylor_lab::cross_section::{
    build_spectrum, dispersion_r, CrossSectionSpec, CrossSectionSpectrum, Profile, ShearField,
};
use taylor_lab::evolution::{
    evolve_series, initialize, regime_decay_check, run_dispersion, uniform_schedule,
    DispersionConfig, InitialDatum, WavenumberGrid,
};
use taylor_lab::hypocoercivity::{
    build_certificate, dissipation_margin, norm_decay_conclusion, norm_equivalence, phi_decay_check,
};
use taylor_lab::linalg::{random_unit_complex, random_unit_real};
use taylor_lab::manifold::{
    attraction_test, compute_coefficients, invariance_residual, random_state, reduced_decay_test,
    ManifoldSystem,
};
use taylor_lab::modal_operator::{assemble, evaluate, nu_factorization_check, ModalOperator};
use taylor_lab::par::with_threads;
use taylor_lab::spectral::{
    default_kappa0, eigenvalues, perturbation_coefficients, separation_check, symmetric_grid,
};

struct Line {
    id: usize,
    pass: bool,
    detail: String,
}

fn setup(profile: Profile, m: usize, nu: f64) -> (CrossSectionSpectrum, ShearField, ModalOperator) {
    let s = build_spectrum(&CrossSectionSpec::interval(m)).unwrap();
    let f = profile.field(&s).unwrap();
    let op = assemble(&f, &s, nu).unwrap();
    (s, f, op)
}

fn criterion1() -> Line {
    let (_, f, op) = setup(Profile::cosine(), 16, 0.1);
    let start = Instant::now();
    let a = with_threads(1, || {
        run_dispersion(
            &op,
            &f,
            &DispersionConfig {
                t_max: 50.0,
                ..Default::default()
            },
        )
    })
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
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
    let expected_td = 0.01 + 1.0 / (2.0 * PI * PI);
    let shift = a.diffusivity.asymptote - b.diffusivity.asymptote;
    let shift_rel = (shift - 0.0075).abs() / 0.0075;
    let pass = (a.nu_td - expected_td).abs() < 1e-12
        && a.d_eff_rel_error <= 0.02
        && secs <= 60.0
        && shift_rel <= 0.02;
    Line {
        id: 1,
        pass,
        detail: format!(
            "D_eff {:.8} vs nu_td {:.8} (rel {:.1e}), single-thread K=1024 run {secs:.1} s, shift {shift:.6} vs 0.0075 (rel {shift_rel:.1e})",
            a.diffusivity.asymptote, a.nu_td, a.d_eff_rel_error
        ),
    }
}

fn criterion2() -> Line {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, profile) in [
        ("cosine", Profile::cosine()),
        ("cosine2", Profile::cosine2()),
    ] {
        let (s, f, op) = setup(profile, 16, 0.1);
        let r = dispersion_r(&f, &s);
        let p = perturbation_coefficients(&op, &f, r, None).unwrap();
        pass &= p.quadratic_error <= 1e-6 && p.cubic_error <= 1e-6;
        parts.push(format!(
            "{name}: r = {r:.6e}, quadratic err {:.1e}, cubic err {:.1e}",
            p.quadratic_error, p.cubic_error
        ));
    }
    Line {
        id: 2,
        pass,
        detail: parts.join("; "),
    }
}

fn criterion3() -> Line {
    let start = Instant::now();
    let (_, _, op) = setup(Profile::cosine(), 16, 0.1);
    let k0 = default_kappa0(&op);
    let sep = separation_check(&op, k0, 64).unwrap();
    let nu2 = op.nu * op.nu;
    let mut abscissa = f64::INFINITY;
    for k in symmetric_grid(4.0 * k0, 64) {
        for z in eigenvalues(&evaluate(&op, k)).unwrap() {
            abscissa = abscissa.min(-nu2 * k * k - z.re);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = sep.passed && sep.abscissa_margin >= -1e-9 && abscissa >= -1e-9 && secs <= 5.0;
    Line {
        id: 3,
        pass,
        detail: format!(
            "kappa0 {k0:.4}: leading margin {:.3}, rest margin {:.3}, abscissa margin {:.2e} (wide sweep {abscissa:.2e}), {secs:.2} s",
            sep.leading_margin, sep.rest_margin, sep.abscissa_margin
        ),
    }
}

fn criterion4() -> Line {
    let (_, _, op) = setup(Profile::cosine2(), 16, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let worst = (0..20)
        .map(|_| {
            let k = rng.gen_range(-10.0..10.0);
            let t = rng.gen_range(0.0..5.0);
            nu_factorization_check(&op, k, t)
        })
        .fold(0.0f64, f64::max);
    Line {
        id: 4,
        pass: worst <= 1e-10,
        detail: format!("max factorization defect {worst:.2e} over 20 pairs"),
    }
}

fn criterion5() -> Line {
    let (_, _, op) = setup(Profile::cosine(), 16, 0.1);
    let sys = ManifoldSystem::from_operator(&op);
    let c = compute_coefficients(&sys, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let worst = (0..100)
        .map(|_| {
            let a = random_unit_real(6, &mut rng);
            let sigma = rng.gen_range(0.05..1.0);
            invariance_residual(&c, &sys, a.as_slice(), sigma)
        })
        .fold(0.0f64, f64::max);
    let table = |nu: f64| -> Vec<u8> {
        let c = compute_coefficients(&ManifoldSystem::from_operator(&op.with_nu(nu)), 5).unwrap();
        c.table
            .iter()
            .flatten()
            .flatten()
            .flat_map(|x| x.to_le_bytes())
            .collect()
    };
    let identical = table(0.05) == table(0.2);
    Line {
        id: 5,
        pass: worst <= 1e-9 && identical,
        detail: format!("max residual {worst:.2e} over 100 probes at N = 5, tables byte-identical across nu: {identical}"),
    }
}

fn criterion6() -> Line {
    let start = Instant::now();
    let (_, _, op) = setup(Profile::cosine(), 16, 0.1);
    let sys = ManifoldSystem::from_operator(&op);
    let c = compute_coefficients(&sys, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = random_state(5, 16, &mut rng);
    let att = attraction_test(&sys, &c, &s, 40.0 / sys.mu[0], 80).unwrap();
    let a0 = random_unit_real(6, &mut rng);
    let dec = reduced_decay_test(&sys, &c, a0.as_slice(), 40.0).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rates_ok = dec.rates.iter().all(|e| e.pass);
    let pass = att.bounded && rates_ok && dec.closed_form_error <= 1e-8 && secs <= 30.0;
    let slopes: Vec<String> = dec
        .rates
        .iter()
        .map(|e| {
            format!(
                "k{}:{}",
                e.k,
                e.slope
                    .map(|x| format!("{x:.3}"))
                    .unwrap_or_else(|| "0".into())
            )
        })
        .collect();
    Line {
        id: 6,
        pass,
        detail: format!(
            "envelope sup {:.3} (second half {:.1e}), slopes [{}], closed forms {:.1e}, {secs:.1} s",
            att.sup_ratio.iter().fold(0.0f64, |m, x| m.max(*x)),
            att.second_half_sup.iter().fold(0.0f64, |m, x| m.max(*x)),
            slopes.join(" "),
            dec.closed_form_error
        ),
    }
}

/// Also returns μ₁/M̌ and its worst dissipation margin over the same band samples.
fn criterion7() -> (Line, f64, f64) {
    let start = Instant::now();
    let s = build_spectrum(&CrossSectionSpec::interval(16)).unwrap();
    let f = Profile::cosine().field(&s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rates = Vec::new();
    let mut pass = true;
    let mut printed_worst = f64::NEG_INFINITY;
    let mut printed_rate = 0.0;
    for nu in [0.02, 0.05, 0.1] {
        let op = assemble(&f, &s, nu).unwrap();
        let cert = build_certificate(&op, None, 0.1, 1.0).unwrap();
        rates.push(cert.m_tilde);
        printed_rate = cert.m_tilde_printed;
        for k in cert.band_samples(32) {
            let w = random_unit_complex(17, &mut rng);
            let r = phi_decay_check(&op, &cert, k, &w, 50.0, 50).unwrap();
            pass &= r.pass && norm_decay_conclusion(&r).pass;
            pass &= norm_equivalence(&cert, k, 1000, &mut rng).pass;
            printed_worst =
                printed_worst.max(dissipation_margin(&op, &cert, k, cert.m_tilde_printed));
        }
    }
    let same = rates.windows(2).all(|w| w[0].to_bits() == w[1].to_bits());
    let secs = start.elapsed().as_secs_f64();
    let line = Line {
        id: 7,
        pass: pass && same && secs <= 60.0,
        detail: format!("rate {:.6e} identical across nu: {same}, 96 band samples and 1000-probe equivalence, {secs:.1} s", rates[0]),
    };
    (line, printed_rate, printed_worst)
}

fn criterion8() -> Line {
    let (_, f, op) = setup(Profile::cosine(), 16, 0.1);
    let rep = run_dispersion(&op, &f, &DispersionConfig::default()).unwrap();
    let t_end = rep.samples.last().unwrap().t;
    let scaled: Vec<f64> = rep
        .samples
        .iter()
        .filter(|s| s.t >= t_end / 10.0)
        .map(|s| s.gauss_distance * (1.0 + s.t).powf(0.75))
        .collect();
    let bounded = scaled.iter().all(|x| *x <= scaled[0] * (1.0 + 1e-9));
    let m0 = rep.remainder.samples[0].moment_max;
    let pass = bounded && rep.gauss_pass() && rep.remainder.pass && m0 <= 1e-7;
    Line {
        id: 8,
        pass,
        detail: format!(
            "Gaussian distance x (1+T)^(3/4) on final decade in [{:.3e}, {:.3e}], slope {:.3}; remainder slope {:.3} <= {:.3}; T=0 moments {m0:.1e}",
            scaled.iter().fold(f64::INFINITY, |m, x| m.min(*x)),
            scaled.iter().fold(0.0f64, |m, x| m.max(*x)),
            rep.gauss_slope.unwrap_or(f64::NAN),
            rep.remainder.slope.unwrap_or(f64::NAN),
            rep.remainder.bound
        ),
    }
}

fn criterion9() -> Line {
    let (_, _, op) = setup(Profile::cosine(), 16, 0.05);
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
    Line {
        id: 9,
        pass: r.pass && r.counts.iter().all(|c| *c > 0),
        detail: format!(
            "nodes {:?}; high margin {:.1e}, intermediate margin {:.2}, low slope {:.3} <= {:.3}",
            r.counts, r.high_margin, r.intermediate_margin, r.low_slope, r.low_bound
        ),
    }
}

fn csv_files(dir: &Path, out: &mut Vec<std::path::PathBuf>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            csv_files(&p, out);
        } else if p.extension().is_some_and(|x| x == "csv") {
            out.push(p);
        }
    }
}

fn criterion10() -> Line {
    let root = std::env::temp_dir().join(format!("taylor-lab-acceptance-{}", std::process::id()));
    let _ = fs::remove_dir_all(&root);
    fs::create_dir_all(&root).unwrap();
    let cfg = root.join("config.toml");
    fs::write(
        &cfg,
        "seed = 11\n[grid]\nk = 256\nt_max = 10.0\nregime_t_max = 2.0\nregime_steps = 10\n",
    )
    .unwrap();
    let mut files = Vec::new();
    for tag in ["a", "b"] {
        let status = Command::new(env!("CARGO_BIN_EXE_taylor-lab"))
            .args([
                "all",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                root.join(tag).to_str().unwrap(),
            ])
            .env_remove("TAYLOR_LAB_OUT")
            .output()
            .unwrap()
            .status;
        assert_ne!(status.code(), Some(2));
        let mut f = Vec::new();
        csv_files(&root.join(tag), &mut f);
        f.sort();
        files.push(f);
    }
    let mut identical = files[0].len() == files[1].len() && !files[0].is_empty();
    for (a, b) in files[0].iter().zip(&files[1]) {
        identical &=
            a.strip_prefix(root.join("a")).unwrap() == b.strip_prefix(root.join("b")).unwrap();
        identical &= fs::read(a).unwrap() == fs::read(b).unwrap();
    }
    let n = files[0].len();
    fs::remove_dir_all(&root).unwrap();
    Line {
        id: 10,
        pass: identical,
        detail: format!("{n} CSV files from two `all` runs compared byte for byte"),
    }
}

#[test]
fn acceptance() {
    let mut lines = vec![
        criterion1(),
        criterion2(),
        criterion3(),
        criterion4(),
        criterion5(),
        criterion6(),
    ];
    let (c7, printed_rate, printed_worst) = criterion7();
    lines.push(c7);
    lines.extend([criterion8(), criterion9(), criterion10()]);
    println!();
    for l in &lines {
        println!(
            "criterion {:>2} {}: {}",
            l.id,
            if l.pass { "PASS" } else { "FAIL" },
            l.detail
        );
    }
    println!(
        "criterion  7 at rate mu1/M_check = {printed_rate:.4} {}: worst dissipation margin {printed_worst:.3} (the certified rate is rho0/M_check)",
        if printed_worst <= 0.0 { "PASS" } else { "FAIL" }
    );
    let failed: Vec<usize> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    assert!(failed.is_empty(), "failed criteria {failed:?}");
}
