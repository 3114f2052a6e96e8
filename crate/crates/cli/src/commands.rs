use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use taylor_lab::cross_section::{
    build_spectrum, dispersion_r, dispersion_r_unweighted, taylor_viscosity, CrossSectionSpectrum,
    ShearField,
};
use taylor_lab::evolution::{
    evolve_series, initialize, regime_decay_check, run_dispersion, uniform_schedule,
    DispersionConfig, DispersionReport, WavenumberGrid,
};
use taylor_lab::hypocoercivity::{
    build_certificate, dissipation_margin, norm_decay_conclusion, norm_equivalence,
    phi_decay_check, HypoCertificate,
};
use taylor_lab::linalg::{random_unit_complex, random_unit_real};
use taylor_lab::manifold::{
    attraction_test, compute_coefficients, invariance_residual, random_state, reduced_decay_test,
    ManifoldCoefficients, ManifoldSystem,
};
use taylor_lab::modal_operator::{assemble, evaluate, ModalOperator};
use taylor_lab::spectral::{
    default_kappa0, eigenvalues, perturbation_coefficients, separation_check, symmetric_grid,
};
use taylor_lab::{par, LabError};

use crate::config::RunConfig;
use crate::output::RunDir;
use crate::svg::{Plot, Series};

pub const INVARIANCE_TOL: f64 = 1e-9;
pub const PERTURBATION_TOL: f64 = 1e-6;
pub const ABSCISSA_TOL: f64 = 1e-9;
pub const CLOSED_FORM_TOL: f64 = 1e-8;
pub const CROSS_CHECK_TOL: f64 = 1e-6;
pub const MOMENT_TOL: f64 = 1e-7;
pub const SHIFT_REL_TOL: f64 = 0.02;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Lab(LabError),
    Io(io::Error),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "invalid config: {m}"),
            Failure::Lab(e) => write!(f, "{e}"),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Invalid(m) | LabError::Dimension(m) => Failure::Config(m),
            other => Failure::Lab(other),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

pub type Outcome = Result<(), Failure>;

/// Cross-section, shear and operator at the configured viscosity.
pub struct Setup {
    pub spectrum: CrossSectionSpectrum,
    pub field: ShearField,
    pub op: ModalOperator,
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self, Failure> {
        let spectrum = build_spectrum(&cfg.cross_section_spec())?;
        let field = cfg.shear.field(&spectrum)?;
        let op = assemble(&field, &spectrum, cfg.nu)?;
        Ok(Setup {
            spectrum,
            field,
            op,
        })
    }

    fn kappa0(&self, cfg: &RunConfig) -> f64 {
        cfg.kappa0_override()
            .unwrap_or_else(|| default_kappa0(&self.op))
    }

    fn common_constants(&self, run: &mut RunDir, cfg: &RunConfig) {
        run.constant("nu", cfg.nu);
        run.constant("nu_td", taylor_viscosity(cfg.nu, &self.field));
        run.constant("A", self.field.a);
        run.constant("mu1", self.op.mu1());
        run.constant("chi_sup", self.op.chi_sup);
        run.constant("kappa0", self.kappa0(cfg));
    }
}

fn nu_tag(nu: f64) -> String {
    format!("{nu}").replace('.', "p")
}

fn viscosities(first: f64, rest: &[f64]) -> Vec<f64> {
    let mut out = vec![first];
    for v in rest {
        if !out.iter().any(|x| x.to_bits() == v.to_bits()) {
            out.push(*v);
        }
    }
    out
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

pub fn spectrum(cfg: &RunConfig, run: &mut RunDir) -> Outcome {
    let s = Setup::new(cfg)?;
    s.common_constants(run, cfg);
    let op = &s.op;
    let nu_td = taylor_viscosity(cfg.nu, &s.field);
    let kappa0 = s.kappa0(cfg);
    let r = dispersion_r(&s.field, &s.spectrum);
    run.constant("r", r);

    let grid = symmetric_grid(cfg.spectrum.extent * kappa0, cfg.spectrum.points);
    let sweep = par::map_range(grid.len(), |i| {
        let mut ev = eigenvalues(&evaluate(op, grid[i])).ok_or(LabError::Eigensolver(grid[i]))?;
        ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
        Ok::<_, LabError>(ev)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let dim = op.dim();
    let mut header: Vec<String> = vec!["kappa".into()];
    for j in 0..dim {
        header.push(format!("re_lambda_{j}"));
        header.push(format!("im_lambda_{j}"));
    }
    header.push("gap".into());
    let mut abscissa = f64::INFINITY;
    let rows: Vec<Vec<f64>> = grid
        .iter()
        .zip(&sweep)
        .map(|(k, ev)| {
            let mut row = vec![*k];
            for z in ev {
                row.push(z.re);
                row.push(z.im);
                abscissa = abscissa.min(-cfg.nu * cfg.nu * k * k - z.re);
            }
            row.push(if ev.len() > 1 {
                ev[0].re - ev[1].re
            } else {
                f64::NAN
            });
            row
        })
        .collect();
    let header_ref: Vec<&str> = header.iter().map(|h| h.as_str()).collect();
    run.csv("eigenvalues.csv", &header_ref, &rows)?;
    run.verdict(
        "abscissa_bound",
        abscissa >= -ABSCISSA_TOL,
        format!("min over sweep of -nu^2 kappa^2 - Re lambda = {abscissa:.3e}"),
    );

    let sep = separation_check(op, kappa0, cfg.spectrum.points)?;
    run.json("separation.json", &sep)?;
    run.verdict(
        "spectral_separation",
        sep.passed && sep.abscissa_margin >= -ABSCISSA_TOL,
        format!(
            "leading margin {:.4e}, rest margin {:.4e}",
            sep.leading_margin, sep.rest_margin
        ),
    );
    run.note(
        "separation_with_nu_shift",
        sep.leading_margin_nu >= 0.0,
        format!(
            "leading margin with the nu kappa^2 shift {:.4e}",
            sep.leading_margin_nu
        ),
    );

    #[derive(Serialize)]
    struct Perturbation<'a> {
        status: &'a str,
        r_closed_form: f64,
        r_unweighted: f64,
        report: Option<taylor_lab::spectral::PerturbationReport>,
    }
    if s.field.is_trivial() {
        run.json(
            "perturbation.json",
            &Perturbation {
                status: "degenerate: no shear",
                r_closed_form: r,
                r_unweighted: dispersion_r_unweighted(&s.field, &s.spectrum),
                report: None,
            },
        )?;
        run.note("perturbation", true, "degenerate: no shear".into());
    } else {
        let p = perturbation_coefficients(op, &s.field, r, None)?;
        run.verdict(
            "quadratic_coefficient",
            p.quadratic_error <= PERTURBATION_TOL,
            format!("fitted {:.12e} vs -nu_td {:.12e}", p.quadratic, -nu_td),
        );
        run.verdict(
            "cubic_coefficient",
            p.cubic_error <= PERTURBATION_TOL,
            format!("fitted {:.12e} vs r {:.12e}", p.gamma3_imag, r),
        );
        run.json(
            "perturbation.json",
            &Perturbation {
                status: "ok",
                r_closed_form: r,
                r_unweighted: dispersion_r_unweighted(&s.field, &s.spectrum),
                report: Some(p),
            },
        )?;
    }

    let shown = cfg.spectrum.eigenvalues.min(dim);
    let mut series: Vec<Series> = (0..shown)
        .map(|j| {
            Series::line(
                &format!("Re lambda_{j}"),
                grid.iter()
                    .zip(&sweep)
                    .map(|(k, ev)| (*k, ev[j].re))
                    .collect(),
            )
        })
        .collect();
    series.push(Series::reference(
        "-nu_td kappa^2",
        grid.iter().map(|k| (*k, -nu_td * k * k)).collect(),
    ));
    run.svg(
        "spectrum.svg",
        &Plot {
            title: format!("Leading eigenvalues, nu = {}", cfg.nu),
            x_label: "kappa".into(),
            y_label: "Re lambda".into(),
            series,
            ..Default::default()
        },
    )?;
    Ok(())
}

fn reference_curve(t: &[f64], anchor: (f64, f64), power: f64) -> Vec<f64> {
    t.iter()
        .map(|x| anchor.1 * ((1.0 + x) / (1.0 + anchor.0)).powf(power))
        .collect()
}

pub fn dispersion(cfg: &RunConfig, run: &mut RunDir) -> Outcome {
    let s = Setup::new(cfg)?;
    s.common_constants(run, cfg);
    let kappa0 = s.kappa0(cfg);
    let nus = viscosities(cfg.nu, &cfg.grid.extra_nu);
    let gauss_power = -0.75;
    let rem_power = -(cfg.order as f64 / 6.0 + 1.0 / 12.0);
    let mut reports: Vec<DispersionReport> = Vec::new();
    for &nu in &nus {
        let dc = DispersionConfig {
            nu,
            order: cfg.order,
            k: cfg.grid.k,
            length: (cfg.grid.length > 0.0).then_some(cfg.grid.length),
            t0: cfg.grid.t0,
            rho: cfg.grid.rho,
            t_max: cfg.grid.t_max,
            kappa0,
            kappa1: cfg.hypo.kappa1,
            datum: cfg.datum.clone(),
        };
        let rep = run_dispersion(&s.op, &s.field, &dc)?;
        let tag = nu_tag(nu);
        let t: Vec<f64> = rep.samples.iter().map(|x| x.t).collect();
        let last = rep.samples.last().expect("schedule is nonempty");
        let gref = reference_curve(&t, (last.t, last.gauss_distance), gauss_power);
        let rref = reference_curve(&t, (last.t, last.remainder), rem_power);
        let rows: Vec<Vec<f64>> = rep
            .samples
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let d = if i >= 1 && i <= rep.diffusivity.d_eff.len() {
                    rep.diffusivity.d_eff[i - 1]
                } else {
                    f64::NAN
                };
                vec![
                    x.t,
                    x.mass,
                    x.mean,
                    x.variance,
                    x.variance_fd,
                    d,
                    rep.nu_td,
                    x.gauss_distance,
                    x.gauss_distance * (1.0 + x.t).powf(-gauss_power),
                    gref[i],
                    x.remainder,
                    rref[i],
                    x.top_mode_fraction,
                ]
            })
            .collect();
        run.csv(
            &format!("series_nu{tag}.csv"),
            &[
                "T_scaled",
                "mass",
                "mean_X",
                "variance_X",
                "variance_fd_X",
                "d_eff",
                "nu_td",
                "gauss_distance",
                "gauss_distance_times_(1+T)^(3/4)",
                "gauss_reference_(1+T)^(-3/4)",
                "remainder_norm",
                "remainder_reference_(1+T)^(-N/6-1/12)",
                "top_mode_fraction",
            ],
            &rows,
        )?;
        let rem_rows: Vec<Vec<f64>> = rep
            .remainder
            .samples
            .iter()
            .map(|r| {
                let mut row = vec![r.t, r.norm, r.moment_max];
                row.extend(&r.alpha);
                row
            })
            .collect();
        let mut rem_header: Vec<String> = vec![
            "T_scaled".into(),
            "remainder_norm".into(),
            "moment_max".into(),
        ];
        rem_header.extend((0..=cfg.order).map(|k| format!("alpha_{k}")));
        let rem_ref: Vec<&str> = rem_header.iter().map(|h| h.as_str()).collect();
        run.csv(&format!("remainder_nu{tag}.csv"), &rem_ref, &rem_rows)?;

        run.verdict(
            &format!("d_eff_nu{tag}"),
            rep.d_eff_pass(),
            format!(
                "asymptote {:.8e} vs nu_td {:.8e}, rel error {:.3e}",
                rep.diffusivity.asymptote, rep.nu_td, rep.d_eff_rel_error
            ),
        );
        run.verdict(
            &format!("gauss_rate_nu{tag}"),
            rep.gauss_pass(),
            format!("final-decade slope {:?}", rep.gauss_slope),
        );
        run.verdict(
            &format!("remainder_rate_nu{tag}"),
            rep.remainder.pass,
            format!(
                "slope {:?} vs bound {:.4} {}",
                rep.remainder.slope, rep.remainder.bound, rep.remainder.note
            ),
        );
        run.verdict(
            &format!("invariants_nu{tag}"),
            rep.invariants_pass(),
            format!(
                "mass drift {:.3e}, reality defect {:.3e}",
                rep.mass_drift, rep.reality_defect
            ),
        );
        let m0 = rep
            .remainder
            .samples
            .first()
            .map(|x| x.moment_max)
            .unwrap_or(f64::NAN);
        run.verdict(
            &format!("initial_remainder_moments_nu{tag}"),
            m0 <= MOMENT_TOL,
            format!("max |moment| {m0:.3e}"),
        );
        run.constant(&format!("nu_td_nu{tag}"), rep.nu_td);
        run.constant(
            &format!("d_eff_asymptote_nu{tag}"),
            rep.diffusivity.asymptote,
        );
        run.constant(&format!("length_nu{tag}"), rep.length);
        reports.push(rep);
    }

    let base = &reports[0];
    let mut cmp_rows = Vec::new();
    for rep in &reports {
        let shift = base.diffusivity.asymptote - rep.diffusivity.asymptote;
        let expected = base.nu * base.nu - rep.nu * rep.nu;
        let rel = if expected == 0.0 {
            0.0
        } else {
            (shift - expected).abs() / expected.abs()
        };
        cmp_rows.push(vec![
            rep.nu,
            rep.nu_td,
            rep.diffusivity.asymptote,
            rep.d_eff_rel_error,
            shift,
            expected,
            rel,
        ]);
        if expected != 0.0 {
            run.verdict(
                &format!("nu_shift_nu{}", nu_tag(rep.nu)),
                rel <= SHIFT_REL_TOL,
                format!("measured shift {shift:.6e} vs nu^2 difference {expected:.6e}"),
            );
        }
    }
    run.csv(
        "comparison.csv",
        &[
            "nu",
            "nu_td",
            "d_eff_asymptote",
            "d_eff_rel_error",
            "shift_from_first",
            "nu_sq_difference",
            "shift_rel_error",
        ],
        &cmp_rows,
    )?;

    let cert = build_certificate(
        &s.op,
        cfg.kappa0_override(),
        cfg.hypo.delta,
        cfg.hypo.kappa1,
    )?;
    let grid = WavenumberGrid::new(
        base.length,
        cfg.grid.k,
        cfg.nu,
        cert.kappa0,
        cfg.hypo.kappa1,
    )?;
    let init = initialize(&cfg.datum, &grid, s.op.dim() - 1)?;
    let series = evolve_series(
        &init,
        &s.op,
        &grid,
        &uniform_schedule(cfg.grid.regime_t_max, cfg.grid.regime_steps),
    )?;
    let mut reg = regime_decay_check(&series, &grid, &s.op, &cert)?;
    run.verdict(
        "regime_decay",
        reg.pass && reg.counts.iter().all(|c| *c > 0),
        format!(
            "counts {:?}, high margin {:.3e}, intermediate margin {:.3e}, low slope {:.4} <= {:.4}",
            reg.counts, reg.high_margin, reg.intermediate_margin, reg.low_slope, reg.low_bound
        ),
    );
    reg.violations.truncate(20);
    run.json("regimes.json", &reg)?;

    let mut d_series = Vec::new();
    let mut g_series = Vec::new();
    let mut r_series = Vec::new();
    for rep in &reports {
        let tag = format!("nu = {}", rep.nu);
        d_series.push(Series::line(
            &format!("D_eff, {tag}"),
            rep.diffusivity
                .times
                .iter()
                .copied()
                .zip(rep.diffusivity.d_eff.iter().copied())
                .collect(),
        ));
        let t_end = rep.samples.last().map(|x| x.t).unwrap_or(1.0);
        d_series.push(Series::reference(
            &format!("nu_td, {tag}"),
            vec![(cfg.grid.t0, rep.nu_td), (t_end, rep.nu_td)],
        ));
        let pts = |f: &dyn Fn(&taylor_lab::evolution::DispersionSample) -> f64| -> Vec<(f64, f64)> {
            rep.samples.iter().map(|x| (x.t, f(x))).collect()
        };
        g_series.push(Series::line(
            &format!("Gaussian distance, {tag}"),
            pts(&|x| x.gauss_distance),
        ));
        r_series.push(Series::line(
            &format!("remainder, {tag}"),
            pts(&|x| x.remainder),
        ));
    }
    let t: Vec<f64> = base.samples.iter().map(|x| x.t).collect();
    let last = base.samples.last().expect("schedule is nonempty");
    g_series.push(Series::reference(
        "(1+T)^(-3/4)",
        t.iter()
            .copied()
            .zip(reference_curve(
                &t,
                (last.t, last.gauss_distance),
                gauss_power,
            ))
            .collect(),
    ));
    r_series.push(Series::reference(
        "(1+T)^(-N/6-1/12)",
        t.iter()
            .copied()
            .zip(reference_curve(&t, (last.t, last.remainder), rem_power))
            .collect(),
    ));
    run.svg(
        "d_eff.svg",
        &Plot {
            title: "Effective diffusivity".into(),
            x_label: "T (scaled)".into(),
            y_label: "D_eff".into(),
            log_x: true,
            series: d_series,
            ..Default::default()
        },
    )?;
    run.svg(
        "gauss_distance.svg",
        &Plot {
            title: "Distance to the Gaussian".into(),
            x_label: "T (scaled)".into(),
            y_label: "L2 distance".into(),
            log_x: true,
            log_y: true,
            series: g_series,
        },
    )?;
    run.svg(
        "remainder.svg",
        &Plot {
            title: format!("Remainder beyond order N = {}", cfg.order),
            x_label: "T (scaled)".into(),
            y_label: "||u_rem||".into(),
            log_x: true,
            log_y: true,
            series: r_series,
        },
    )?;
    Ok(())
}

fn table_bits(c: &ManifoldCoefficients) -> Vec<u64> {
    c.table
        .iter()
        .flatten()
        .flatten()
        .map(|x| x.to_bits())
        .collect()
}

pub fn manifold(cfg: &RunConfig, run: &mut RunDir) -> Outcome {
    let s = Setup::new(cfg)?;
    s.common_constants(run, cfg);
    let order = cfg.order;
    let sys = ManifoldSystem::from_operator(&s.op);
    let coeffs = compute_coefficients(&sys, order)?;
    run.json("coefficients.json", &coeffs)?;

    run.seed("probes", cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::with_capacity(cfg.manifold.probes);
    for i in 0..cfg.manifold.probes {
        let a = random_unit_real(order + 1, &mut rng);
        let sigma = rng.gen_range(0.05..1.0);
        let r = invariance_residual(&coeffs, &sys, a.as_slice(), sigma);
        let mut row = vec![i as f64, sigma, r];
        row.extend(a.iter());
        rows.push(row);
    }
    let worst = max_of(rows.iter().map(|r| r[2]));
    let mut header: Vec<String> = vec!["probe".into(), "sigma".into(), "residual".into()];
    header.extend((0..=order).map(|k| format!("a_{k}")));
    let h: Vec<&str> = header.iter().map(|x| x.as_str()).collect();
    run.csv("invariance.csv", &h, &rows)?;
    run.verdict(
        "invariance",
        worst <= INVARIANCE_TOL,
        format!("max residual {worst:.3e} over {} probes", rows.len()),
    );

    let [nu_a, nu_b] = cfg.manifold.nu_pair;
    let ca = compute_coefficients(&ManifoldSystem::from_operator(&s.op.with_nu(nu_a)), order)?;
    let cb = compute_coefficients(&ManifoldSystem::from_operator(&s.op.with_nu(nu_b)), order)?;
    let same = table_bits(&ca) == table_bits(&cb) && table_bits(&ca) == table_bits(&coeffs);
    run.verdict(
        "nu_independent_tables",
        same,
        format!("tables at nu = {nu_a} and nu = {nu_b} compared bitwise"),
    );

    let attraction_seed = cfg.seed.wrapping_add(1);
    run.seed("attraction", attraction_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(attraction_seed);
    let state = random_state(order, sys.modes(), &mut rng);
    let t_max = cfg.manifold.t_factor / sys.mu[0];
    let att = attraction_test(&sys, &coeffs, &state, t_max, cfg.manifold.samples)?;
    let rows: Vec<Vec<f64>> = att
        .times
        .iter()
        .zip(&att.ratios)
        .map(|(t, r)| {
            let mut row = vec![*t];
            row.extend(r);
            row
        })
        .collect();
    let mut header: Vec<String> = vec!["T_scaled".into()];
    header.extend((1..=order).map(|k| format!("ratio_k{k}")));
    let h: Vec<&str> = header.iter().map(|x| x.as_str()).collect();
    run.csv("attraction.csv", &h, &rows)?;
    run.verdict(
        "attraction_envelope",
        att.bounded,
        format!(
            "first-half sup {:?}, second-half sup {:?}",
            att.first_half_sup, att.second_half_sup
        ),
    );
    run.verdict(
        "attraction_cross_check",
        att.cross_check_error <= CROSS_CHECK_TOL,
        format!(
            "relative deviation between direct and rescaled integration {:.3e}",
            att.cross_check_error
        ),
    );
    run.verdict(
        "attraction_closed_forms",
        att.closed_form_error <= CLOSED_FORM_TOL,
        format!(
            "sigma and gamma against closed forms {:.3e}",
            att.closed_form_error
        ),
    );
    run.note(
        "envelope_exponents",
        true,
        format!("fitted exponents {:?}", att.empirical_exponent),
    );

    let reduced_seed = cfg.seed.wrapping_add(2);
    run.seed("reduced", reduced_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(reduced_seed);
    let a0 = random_unit_real(order + 1, &mut rng);
    let dec = reduced_decay_test(&sys, &coeffs, a0.as_slice(), cfg.manifold.tau_max)?;
    let rows: Vec<Vec<f64>> = dec
        .taus
        .iter()
        .zip(&dec.trajectories)
        .map(|(t, y)| {
            let mut row = vec![*t];
            row.extend(y);
            row
        })
        .collect();
    let mut header: Vec<String> = vec!["tau".into()];
    header.extend((0..=order).map(|k| format!("a_{k}")));
    let h: Vec<&str> = header.iter().map(|x| x.as_str()).collect();
    run.csv("reduced.csv", &h, &rows)?;
    let rate_rows: Vec<Vec<String>> = dec
        .rates
        .iter()
        .map(|e| {
            vec![
                e.k.to_string(),
                e.j.to_string(),
                e.n.to_string(),
                e.slope
                    .map(|x| format!("{x}"))
                    .unwrap_or_else(|| "identically_zero".into()),
                format!("{}", e.bound),
                e.pass.to_string(),
            ]
        })
        .collect();
    run.csv_text(
        "reduced_rates.csv",
        &["k", "j", "n", "slope_per_tau", "bound_per_tau", "pass"],
        &rate_rows,
    )?;
    run.verdict(
        "reduced_rates",
        dec.rates.iter().all(|e| e.pass),
        dec.rates
            .iter()
            .map(|e| format!("k={} slope {:?} <= {:.3}", e.k, e.slope, e.bound))
            .collect::<Vec<_>>()
            .join("; "),
    );
    run.verdict(
        "reduced_closed_forms",
        dec.closed_form_error <= CLOSED_FORM_TOL,
        format!(
            "a_0, a_1, a_2 against closed forms {:.3e}",
            dec.closed_form_error
        ),
    );

    let series: Vec<Series> = (1..=order)
        .map(|k| {
            Series::line(
                &format!("k = {k}"),
                rows_for(&att.times, &att.ratios, k - 1),
            )
        })
        .collect();
    run.svg(
        "attraction.svg",
        &Plot {
            title: "Envelope ratio ||B_k|| e^(mu1 T) (1+T)^(-1-k/2)".into(),
            x_label: "T (scaled)".into(),
            y_label: "ratio".into(),
            log_y: true,
            series,
            ..Default::default()
        },
    )?;
    Ok(())
}

fn rows_for(t: &[f64], table: &[Vec<f64>], col: usize) -> Vec<(f64, f64)> {
    t.iter().zip(table).map(|(t, r)| (*t, r[col])).collect()
}

pub fn hypo(cfg: &RunConfig, run: &mut RunDir) -> Outcome {
    let s = Setup::new(cfg)?;
    s.common_constants(run, cfg);
    let nus = viscosities(cfg.nu, &cfg.hypo.nus);
    run.seed("probes", cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut certs: Vec<HypoCertificate> = Vec::new();
    let mut sweep = Vec::new();
    let mut traces = Vec::new();
    let mut plot = Vec::new();
    for &nu in &nus {
        let op = s.op.with_nu(nu);
        let cert = build_certificate(&op, cfg.kappa0_override(), cfg.hypo.delta, cfg.hypo.kappa1)?;
        let tag = nu_tag(nu);
        run.json(&format!("certificate_nu{tag}.json"), &cert)?;
        let (mut all_pass, mut all_norm, mut all_equiv) = (true, true, true);
        let mut printed_worst = f64::NEG_INFINITY;
        let samples = cert.band_samples(cfg.hypo.samples);
        for (i, &k) in samples.iter().enumerate() {
            let w = random_unit_complex(op.dim(), &mut rng);
            let r = phi_decay_check(&op, &cert, k, &w, cfg.hypo.t_max, cfg.hypo.steps)?;
            let nd = norm_decay_conclusion(&r);
            let eq = norm_equivalence(&cert, k, cfg.hypo.probes, &mut rng);
            let corrected = dissipation_margin(&op, &cert, k, cert.m_tilde);
            let printed = dissipation_margin(&op, &cert, k, cert.m_tilde_printed);
            printed_worst = printed_worst.max(printed);
            all_pass &= r.pass;
            all_norm &= nd.pass;
            all_equiv &= eq.pass;
            sweep.push(vec![
                nu,
                k,
                r.phi_margin,
                r.deriv_margin,
                if r.pass { 1.0 } else { 0.0 },
                r.naive_ratio,
                corrected,
                printed,
                eq.min_ratio,
                eq.max_ratio,
            ]);
            for j in 0..r.times.len() {
                traces.push(vec![nu, k, r.times[j], r.phi[j], r.bound[j], r.norm_sq[j]]);
            }
            if nu.to_bits() == cfg.nu.to_bits() && (i == 0 || i + 1 == samples.len()) {
                let phi0 = r.phi[0];
                let edge = if i == 0 { "lower edge" } else { "upper edge" };
                plot.push(Series::line(
                    &format!("Phi/Phi(0), {edge}"),
                    r.times
                        .iter()
                        .zip(&r.phi)
                        .map(|(t, p)| (*t, p / phi0))
                        .collect(),
                ));
                if i == 0 {
                    plot.push(Series::reference(
                        "e^(-M T)",
                        r.times
                            .iter()
                            .zip(&r.bound)
                            .map(|(t, b)| (*t, b / phi0))
                            .collect(),
                    ));
                }
            }
        }
        run.verdict(
            &format!("phi_decay_nu{tag}"),
            all_pass,
            format!("{} band samples, rate {:.6e}", samples.len(), cert.m_tilde),
        );
        run.verdict(
            &format!("norm_decay_nu{tag}"),
            all_norm,
            "||W||^2 <= 4 e^(-M T) ||W(0)||^2".into(),
        );
        run.verdict(
            &format!("norm_equivalence_nu{tag}"),
            all_equiv,
            format!("{} probes per sample", cfg.hypo.probes),
        );
        run.note(
            &format!("printed_rate_nu{tag}"),
            printed_worst <= 0.0,
            format!(
                "rate mu1/M_check = {:.6e}: worst dissipation margin {printed_worst:.3e}",
                cert.m_tilde_printed
            ),
        );
        run.constant(&format!("m_tilde_nu{tag}"), cert.m_tilde);
        certs.push(cert);
    }
    let c0 = &certs[0];
    run.constant("m_tilde", c0.m_tilde);
    run.constant("m_check", c0.m_check);
    run.constant("rho0", c0.rho0);
    run.constant("m_tilde_printed", c0.m_tilde_printed);
    run.constant("c", c0.c);
    let same = certs
        .iter()
        .all(|c| c.m_tilde.to_bits() == c0.m_tilde.to_bits());
    run.verdict(
        "rate_independent_of_nu",
        same,
        format!("M = {:.10e} at every viscosity", c0.m_tilde),
    );
    run.note(
        "second_display_binds",
        !c0.second_display_binds,
        format!(
            "c = {:.6e} is set by bound {}",
            c0.c,
            if c0.second_display_binds {
                "2"
            } else {
                "other than 2"
            }
        ),
    );
    run.csv(
        "band_sweep.csv",
        &[
            "nu",
            "kappa",
            "phi_margin",
            "deriv_margin",
            "pass",
            "naive_ratio",
            "dissipation_margin_corrected_rate",
            "dissipation_margin_printed_rate",
            "equiv_min_ratio",
            "equiv_max_ratio",
        ],
        &sweep,
    )?;
    run.csv(
        "phi_traces.csv",
        &["nu", "kappa", "T_scaled", "phi", "bound", "norm_sq"],
        &traces,
    )?;
    run.svg(
        "phi_decay.svg",
        &Plot {
            title: format!("Functional decay at the band edges, nu = {}", cfg.nu),
            x_label: "T (scaled)".into(),
            y_label: "Phi / Phi(0)".into(),
            log_y: true,
            series: plot,
            ..Default::default()
        },
    )?;
    Ok(())
}
