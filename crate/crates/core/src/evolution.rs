use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cross_section::ShearField;
use crate::error::{LabError, Result};
use crate::fourier::{self, UniformGrid};
use crate::hypocoercivity::HypoCertificate;
use crate::linalg;
use crate::modal_operator::{evaluate, expm, ModalOperator};
use crate::par;
use crate::similarity::{self, HermiteBasis};
use crate::spectral::spectrum_at;
use crate::CVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    Low,
    Intermediate,
    High,
}

/// Wavenumber nodes dual to a periodic X-grid, in FFT order.
#[derive(Clone, Debug, Serialize)]
pub struct WavenumberGrid {
    pub x_grid: UniformGrid,
    pub kappas: Vec<f64>,
    pub dkappa: f64,
    pub kappa_max: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub nu: f64,
}

impl WavenumberGrid {
    /// K points on [−L/2, L/2); Δκ·L = 2π.
    pub fn new(length: f64, k: usize, nu: f64, kappa0: f64, kappa1: f64) -> Result<Self> {
        if k < 8 || k % 2 != 0 {
            return Err(LabError::Invalid(format!(
                "K must be even and at least 8, got {k}"
            )));
        }
        if !(length > 0.0) {
            return Err(LabError::Invalid(format!(
                "extent must be positive, got {length}"
            )));
        }
        let x_grid = UniformGrid::centered(length, k);
        let kappas: Vec<f64> = (0..k).map(|j| x_grid.wavenumber(j)).collect();
        let kappa_max = std::f64::consts::PI * k as f64 / length;
        if kappa_max <= kappa1 / nu {
            return Err(LabError::UnderResolved(format!(
                "kappa_max = {kappa_max:.3} does not exceed kappa1/nu = {:.3}; the high band is empty",
                kappa1 / nu
            )));
        }
        Ok(WavenumberGrid {
            x_grid,
            kappas,
            dkappa: 2.0 * std::f64::consts::PI / length,
            kappa_max,
            kappa0,
            kappa1,
            nu,
        })
    }

    pub fn len(&self) -> usize {
        self.kappas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappas.is_empty()
    }

    pub fn nyquist(&self) -> usize {
        self.len() / 2
    }

    pub fn regime(&self, j: usize) -> Regime {
        let k = self.kappas[j].abs();
        if k <= self.kappa0 {
            Regime::Low
        } else if k <= self.kappa1 / self.nu {
            Regime::Intermediate
        } else {
            Regime::High
        }
    }

    /// FFT bin of the node −κ_j.
    pub fn mirror(&self, j: usize) -> usize {
        (self.len() - j) % self.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDatum {
    /// Gaussian in X, constant across the section.
    Blob {
        mass: f64,
        width: f64,
    },
    /// g(X)(1 + amplitude·ψ₁(y)).
    Modulated {
        mass: f64,
        width: f64,
        amplitude: f64,
    },
    Shifted {
        mass: f64,
        width: f64,
        center: f64,
    },
}

impl InitialDatum {
    pub fn width(&self) -> f64 {
        match self {
            InitialDatum::Blob { width, .. }
            | InitialDatum::Modulated { width, .. }
            | InitialDatum::Shifted { width, .. } => *width,
        }
    }

    /// Modal rows u_n(X), n = 0..=M.
    pub fn modal(&self, grid: &UniformGrid, modes: usize) -> Vec<Vec<f64>> {
        let (mass, width, center, amp) = match *self {
            InitialDatum::Blob { mass, width } => (mass, width, 0.0, 0.0),
            InitialDatum::Modulated {
                mass,
                width,
                amplitude,
            } => (mass, width, 0.0, amplitude),
            InitialDatum::Shifted {
                mass,
                width,
                center,
            } => (mass, width, center, 0.0),
        };
        let norm = mass / (2.0 * std::f64::consts::PI * width * width).sqrt();
        let g: Vec<f64> = grid
            .points()
            .iter()
            .map(|x| norm * (-(x - center).powi(2) / (2.0 * width * width)).exp())
            .collect();
        let mut out = vec![vec![0.0; grid.n]; modes + 1];
        if modes >= 1 && amp != 0.0 {
            out[1] = g.iter().map(|v| amp * v).collect();
        }
        out[0] = g;
        out
    }
}

/// Modal Fourier coefficients Û(κ_j, T), j in FFT order.
#[derive(Clone, Debug)]
pub struct FieldState {
    pub t: f64,
    pub coeffs: Vec<CVector>,
    /// C₁ = ∫∫u dX dy of the initial datum.
    pub mass: f64,
}

/// û_j = dx·(−1)^j·FFT(u)_j; the (−1)^j accounts for X₀ = −L/2.
fn forward(f: &[f64], grid: &UniformGrid) -> Vec<Complex64> {
    let mut c: Vec<Complex64> = f.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    fourier::fft(&mut c);
    for (j, z) in c.iter_mut().enumerate() {
        let s = if j % 2 == 0 { grid.dx } else { -grid.dx };
        *z *= s;
    }
    c
}

fn backward(c: &[Complex64], grid: &UniformGrid) -> (Vec<f64>, f64) {
    let mut z: Vec<Complex64> = c
        .iter()
        .enumerate()
        .map(|(j, v)| if j % 2 == 0 { *v } else { -*v })
        .collect();
    fourier::ifft(&mut z);
    let l = grid.length();
    let imag = z.iter().fold(0.0f64, |s, v| s.max(v.im.abs())) / l;
    (z.iter().map(|v| v.re / l).collect(), imag)
}

pub fn transform(u: &[Vec<f64>], grid: &WavenumberGrid, t: f64, mass: f64) -> FieldState {
    let k = grid.len();
    let rows: Vec<Vec<Complex64>> = u.iter().map(|f| forward(f, &grid.x_grid)).collect();
    let nyq = grid.nyquist();
    let coeffs = (0..k)
        .map(|j| {
            if j == nyq {
                CVector::zeros(u.len())
            } else {
                CVector::from_fn(u.len(), |n, _| rows[n][j])
            }
        })
        .collect();
    FieldState { t, coeffs, mass }
}

pub const BOUNDARY_TOL: f64 = 1e-10;
pub const SPECTRAL_TAIL_TOL: f64 = 1e-10;

pub fn initialize(datum: &InitialDatum, grid: &WavenumberGrid, modes: usize) -> Result<FieldState> {
    let u = datum.modal(&grid.x_grid, modes);
    let peak = u.iter().flatten().fold(0.0f64, |s, x| s.max(x.abs()));
    let edge = u
        .iter()
        .map(|f| f[0].abs().max(f[f.len() - 1].abs()))
        .fold(0.0f64, f64::max);
    if peak == 0.0 || edge > BOUNDARY_TOL * peak {
        return Err(LabError::NotLocalized(if peak == 0.0 {
            f64::INFINITY
        } else {
            edge / peak
        }));
    }
    let mass = grid.x_grid.integrate(&u[0]);
    let state = transform(&u, grid, 0.0, mass);
    let tail = spectral_tail(&state, grid);
    if tail > SPECTRAL_TAIL_TOL {
        return Err(LabError::UnderResolved(format!(
            "initial spectrum at |kappa| = kappa_max is {tail:.3e} of its peak; refine K or widen the datum"
        )));
    }
    Ok(state)
}

/// Largest coefficient norm over the outer 5% of nodes, relative to the largest overall.
pub fn spectral_tail(state: &FieldState, grid: &WavenumberGrid) -> f64 {
    let peak = state.coeffs.iter().fold(0.0f64, |s, c| s.max(c.norm()));
    if peak == 0.0 {
        return 0.0;
    }
    let cut = 0.95 * grid.kappa_max;
    state
        .coeffs
        .iter()
        .zip(&grid.kappas)
        .filter(|(_, k)| k.abs() >= cut)
        .fold(0.0f64, |s, (c, _)| s.max(c.norm()))
        / peak
}

/// Û(κ,T′) = e^{B(−κ)(T′−T)}Û(κ,T): with û(κ) = ∫e^{−iκX}u the X-derivative maps to
/// multiplication by iκ, which is B evaluated at −κ.
pub fn evolve(
    state: &FieldState,
    op: &ModalOperator,
    grid: &WavenumberGrid,
    t_target: f64,
) -> Result<FieldState> {
    evolve_with(state, op, grid, t_target, true)
}

pub fn evolve_sequential(
    state: &FieldState,
    op: &ModalOperator,
    grid: &WavenumberGrid,
    t_target: f64,
) -> Result<FieldState> {
    evolve_with(state, op, grid, t_target, false)
}

fn evolve_with(
    state: &FieldState,
    op: &ModalOperator,
    grid: &WavenumberGrid,
    t_target: f64,
    parallel: bool,
) -> Result<FieldState> {
    if t_target < state.t {
        return Err(LabError::Invalid(format!(
            "cannot evolve backwards from {} to {t_target}",
            state.t
        )));
    }
    if state.coeffs.len() != grid.len() || state.coeffs.iter().any(|c| c.len() != op.dim()) {
        return Err(LabError::Dimension(
            "state does not match grid or operator".into(),
        ));
    }
    let dt = t_target - state.t;
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let step = |j: usize| {
        let c = &state.coeffs[j];
        if c.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
            return c.clone();
        }
        expm(&evaluate(op, -grid.kappas[j]), dt) * c
    };
    let coeffs = if parallel {
        par::map_range(grid.len(), step)
    } else {
        par::map_range_seq(grid.len(), step)
    };
    Ok(FieldState {
        t: t_target,
        coeffs,
        mass: state.mass,
    })
}

/// Evolves through a schedule (first entry must equal the state's time).
pub fn evolve_series(
    initial: &FieldState,
    op: &ModalOperator,
    grid: &WavenumberGrid,
    times: &[f64],
) -> Result<Vec<FieldState>> {
    let mut out = Vec::with_capacity(times.len());
    let mut cur = initial.clone();
    for &t in times {
        cur = evolve(&cur, op, grid, t)?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// Modal rows u_n(X_i, T) and the largest discarded imaginary part.
pub fn reconstruct(state: &FieldState, grid: &WavenumberGrid) -> (Vec<Vec<f64>>, f64) {
    let modes = state.coeffs.first().map(|c| c.len()).unwrap_or(0);
    let mut rows = Vec::with_capacity(modes);
    let mut imag: f64 = 0.0;
    for n in 0..modes {
        let c: Vec<Complex64> = state.coeffs.iter().map(|v| v[n]).collect();
        let (r, im) = backward(&c, &grid.x_grid);
        imag = imag.max(im);
        rows.push(r);
    }
    (rows, imag)
}

/// max_j ‖Û(−κ_j) − conj Û(κ_j)‖.
pub fn reality_defect(state: &FieldState, grid: &WavenumberGrid) -> f64 {
    (0..grid.len())
        .map(|j| {
            let m = grid.mirror(j);
            (&state.coeffs[m] - state.coeffs[j].map(|z| z.conj())).norm()
        })
        .fold(0.0f64, f64::max)
}

pub fn zero_mode_mass(state: &FieldState) -> Complex64 {
    state.coeffs[0][0]
}

/// T = 0 followed by T₀ρ^j below T_max and T_max itself.
pub fn geometric_schedule(t0: f64, rho: f64, t_max: f64) -> Result<Vec<f64>> {
    if !(t0 > 0.0 && rho > 1.0 && t_max > t0) {
        return Err(LabError::Invalid(format!(
            "bad schedule t0={t0} rho={rho} t_max={t_max}"
        )));
    }
    let mut times = vec![0.0];
    let mut t = t0;
    while t < t_max * (1.0 - 1e-12) {
        times.push(t);
        t *= rho;
    }
    times.push(t_max);
    Ok(times)
}

pub fn uniform_schedule(t_max: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|i| t_max * i as f64 / steps as f64)
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Moments {
    pub t: f64,
    pub mass: f64,
    pub mean: f64,
    pub variance: f64,
    /// Same variance from 5-point differences of Û₀ at κ = 0.
    pub variance_fd: f64,
}

/// Physical-space moments of u₀ (trapezoid on the periodic grid) and the κ-difference cross-check.
pub fn moments(state: &FieldState, grid: &WavenumberGrid) -> Moments {
    let (u, _) = reconstruct(state, grid);
    let m = similarity::moments(&u[0], &grid.x_grid, 2);
    let mean = m[1] / m[0];
    let variance = m[2] / m[0] - mean * mean;
    let k = grid.len();
    let f = |j: i64| state.coeffs[((j + k as i64) % k as i64) as usize][0];
    let h = grid.dkappa;
    let d1 = (-f(2) + f(1) * 8.0 - f(-1) * 8.0 + f(-2)) / (12.0 * h);
    let d2 = (-f(2) + f(1) * 16.0 - f(0) * 30.0 + f(-1) * 16.0 - f(-2)) / (12.0 * h * h);
    let m0 = f(0).re;
    let m1 = (Complex64::new(0.0, 1.0) * d1).re;
    let m2 = -d2.re;
    Moments {
        t: state.t,
        mass: m[0],
        mean,
        variance,
        variance_fd: m2 / m0 - (m1 / m0).powi(2),
    }
}

/// Second-order centered derivative on a nonuniform grid at interior points.
pub fn centered_derivative(t: &[f64], y: &[f64]) -> Vec<f64> {
    (1..t.len().saturating_sub(1))
        .map(|i| {
            let hm = t[i] - t[i - 1];
            let hp = t[i + 1] - t[i];
            (hm * hm * y[i + 1] - hp * hp * y[i - 1] + (hp * hp - hm * hm) * y[i])
                / (hm * hp * (hm + hp))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Diffusivity {
    /// Interior sample times.
    pub times: Vec<f64>,
    pub d_eff: Vec<f64>,
    pub asymptote: f64,
}

pub const VARIANCE_MONOTONE_TOL: f64 = 1e-10;

/// D_eff = ½dVar/dT; asymptote is the mean over the last 20% of samples.
pub fn effective_diffusivity(moments: &[Moments]) -> Result<Diffusivity> {
    if moments.len() < 10 {
        return Err(LabError::Invalid(format!(
            "need at least 10 samples, got {}",
            moments.len()
        )));
    }
    let t: Vec<f64> = moments.iter().map(|m| m.t).collect();
    let pos: Vec<f64> = t.iter().copied().filter(|x| *x > 0.0).collect();
    if pos.is_empty() || pos[pos.len() - 1] < 10.0 * pos[0] {
        return Err(LabError::Invalid(
            "samples must span at least one decade".into(),
        ));
    }
    let var: Vec<f64> = moments.iter().map(|m| m.variance).collect();
    for i in 1..var.len() {
        if var[i] < var[i - 1] - VARIANCE_MONOTONE_TOL * var[i - 1].abs().max(1.0) {
            return Err(LabError::UnderResolved(format!(
                "variance decreases between T = {} and T = {}",
                t[i - 1],
                t[i]
            )));
        }
    }
    let d: Vec<f64> = centered_derivative(&t, &var)
        .iter()
        .map(|x| 0.5 * x)
        .collect();
    let n = d.len();
    let tail = (n / 5).max(1);
    let asymptote = d[n - tail..].iter().sum::<f64>() / tail as f64;
    Ok(Diffusivity {
        times: t[1..t.len() - 1].to_vec(),
        d_eff: d,
        asymptote,
    })
}

/// ‖u(T) − C₁(4πν_td(T+1))^{−1/2}e^{−X²/(4ν_td(T+1))}‖ over ℝ×Ω.
pub fn gaussian_distance(u: &[Vec<f64>], grid: &UniformGrid, t: f64, mass: f64, nu_td: f64) -> f64 {
    let s = 4.0 * nu_td * (t + 1.0);
    let norm = mass / (std::f64::consts::PI * s).sqrt();
    let mut acc: f64 = u[0]
        .iter()
        .zip(grid.points())
        .map(|(v, x)| (v - norm * (-x * x / s).exp()).powi(2))
        .sum();
    for row in &u[1..] {
        acc += row.iter().map(|v| v * v).sum::<f64>();
    }
    (acc * grid.dx).sqrt()
}

pub fn gaussian_compare(state: &FieldState, grid: &WavenumberGrid, nu_td: f64) -> Result<f64> {
    if state.t <= 0.0 {
        return Err(LabError::Invalid("comparison needs T > 0".into()));
    }
    let (u, _) = reconstruct(state, grid);
    Ok(gaussian_distance(
        &u,
        &grid.x_grid,
        state.t,
        state.mass,
        nu_td,
    ))
}

/// Distance in the unscaled frame x = X/ν, t = T/ν: ‖f(ν·)‖_{L²(dx)} = ν^{−1/2}‖f‖_{L²(dX)}.
pub fn unscaled_distance(distance: f64, nu: f64) -> f64 {
    distance / nu.sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct RemainderSample {
    pub t: f64,
    pub norm: f64,
    pub alpha: Vec<f64>,
    /// max over modes and j ≤ N of |∫X^j u_rem,n dX|.
    pub moment_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RemainderFit {
    pub order: usize,
    pub samples: Vec<RemainderSample>,
    pub window: (f64, f64),
    /// None when the remainder sits at the noise floor throughout the window.
    pub slope: Option<f64>,
    pub bound: f64,
    pub pass: bool,
    pub note: String,
}

pub const RATE_SLACK: f64 = 0.1;

/// ‖u − u_app‖ at one sample, with the projected α.
pub fn remainder_at(
    state: &FieldState,
    grid: &WavenumberGrid,
    basis: &HermiteBasis,
) -> Result<RemainderSample> {
    let (u, _) = reconstruct(state, grid);
    let field = similarity::to_similarity(&u, &grid.x_grid, state.t, basis.nu_td)?;
    let d = similarity::decompose(&field, basis);
    let app = similarity::assemble_uapp(&d.alpha, &d.beta, &d.gamma, basis, state.t, &grid.x_grid);
    let rem: Vec<Vec<f64>> = u
        .iter()
        .zip(&app)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    let moment_max = rem
        .iter()
        .flat_map(|r| similarity::moments(r, &grid.x_grid, basis.order))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(RemainderSample {
        t: state.t,
        norm: similarity::modal_l2(&rem, &grid.x_grid),
        alpha: d.alpha,
        moment_max,
    })
}

/// Fits log‖u_rem‖ against log(1+T) over the final decade; asserts slope ≤ −(N/6+1/12) + 0.1.
pub fn remainder_decay(samples: Vec<RemainderSample>, order: usize, scale: f64) -> RemainderFit {
    let bound = -(order as f64 / 6.0 + 1.0 / 12.0) + RATE_SLACK;
    let t_end = samples.last().map(|s| s.t).unwrap_or(0.0);
    let window = (t_end / 10.0, t_end);
    let floor = 10.0 * f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let sel: Vec<&RemainderSample> = samples
        .iter()
        .filter(|s| s.t >= window.0 && s.t > 0.0)
        .collect();
    let resolved: Vec<&&RemainderSample> = sel.iter().filter(|s| s.norm > floor).collect();
    let (slope, pass, note) = if resolved.len() < 3 {
        let ok = sel.iter().all(|s| s.norm <= floor * 10.0);
        (None, ok, "rate unresolvable, decay confirmed".to_string())
    } else {
        let x: Vec<f64> = resolved.iter().map(|s| (1.0 + s.t).ln()).collect();
        let y: Vec<f64> = resolved.iter().map(|s| s.norm.ln()).collect();
        let p = linalg::slope(&x, &y);
        (Some(p), p <= bound, String::new())
    };
    RemainderFit {
        order,
        samples,
        window,
        slope,
        bound,
        pass,
        note,
    }
}

/// Log-log slope over the final decade, or None with fewer than three samples.
pub fn final_decade_slope(t: &[f64], y: &[f64]) -> Option<f64> {
    let t_end = *t.last()?;
    let (x, v): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(y)
        .filter(|(t, y)| **t >= t_end / 10.0 && **y > 0.0)
        .map(|(t, y)| ((1.0 + t).ln(), y.ln()))
        .unzip();
    if x.len() < 3 {
        return None;
    }
    Some(linalg::slope(&x, &v))
}

#[derive(Clone, Debug, Serialize)]
pub struct RegimeViolation {
    pub regime: Regime,
    pub kappa: f64,
    pub t: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegimeReport {
    pub counts: [usize; 3],
    /// max over high nodes of ‖Û(T)‖/(‖Û(0)‖e^{−κ₁²T}) − 1.
    pub high_margin: f64,
    /// max over intermediate nodes of ‖Û(T)‖/(2e^{−M̃T/2}‖Û(0)‖) − 1.
    pub intermediate_margin: f64,
    /// max over low nodes of the fitted slope of log‖Q₀Û‖.
    pub low_slope: f64,
    pub low_bound: f64,
    pub violations: Vec<RegimeViolation>,
    pub pass: bool,
}

pub const LOW_FLOOR: f64 = 1e-11;

/// Per-regime decay assertions over an evolved series (index 0 is T = 0).
pub fn regime_decay_check(
    series: &[FieldState],
    grid: &WavenumberGrid,
    op: &ModalOperator,
    cert: &HypoCertificate,
) -> Result<RegimeReport> {
    if series.len() < 3 || series[0].t != 0.0 {
        return Err(LabError::Invalid(
            "series must start at T = 0 with at least three samples".into(),
        ));
    }
    let mu1 = op.mu1();
    let nyq = grid.nyquist();
    let k1sq = grid.kappa1 * grid.kappa1;
    let per_node = |j: usize| -> Result<(Regime, f64, Option<f64>, Vec<RegimeViolation>)> {
        let regime = grid.regime(j);
        let kappa = grid.kappas[j];
        let n0 = series[0].coeffs[j].norm();
        let mut viol = Vec::new();
        if j == nyq || n0 == 0.0 {
            return Ok((regime, f64::NEG_INFINITY, None, viol));
        }
        match regime {
            Regime::High | Regime::Intermediate => {
                let mut worst = f64::NEG_INFINITY;
                for s in series {
                    let bound = if regime == Regime::High {
                        n0 * (-k1sq * s.t).exp() * (1.0 + 1e-8) + 1e-14 * n0
                    } else {
                        2.0 * (-0.5 * cert.m_tilde * s.t).exp() * n0
                    };
                    let m = s.coeffs[j].norm() / bound - 1.0;
                    worst = worst.max(m);
                    if m > 0.0 {
                        viol.push(RegimeViolation {
                            regime,
                            kappa,
                            t: s.t,
                            margin: m,
                        });
                    }
                }
                Ok((regime, worst, None, viol))
            }
            Regime::Low => {
                let slice = spectrum_at(op, -kappa)?;
                let q = CVector::zeros(op.dim());
                let qn: Vec<f64> = series
                    .iter()
                    .map(|s| {
                        let c = &s.coeffs[j];
                        (c - &slice.projection * c + &q).norm()
                    })
                    .collect();
                let floor = LOW_FLOOR * n0;
                let (x, y): (Vec<f64>, Vec<f64>) = series
                    .iter()
                    .zip(&qn)
                    .filter(|(_, v)| **v > floor)
                    .map(|(s, v)| (s.t, v.ln()))
                    .unzip();
                if x.len() < 3 {
                    return Ok((regime, f64::NEG_INFINITY, None, viol));
                }
                let slope = linalg::slope(&x, &y);
                if slope > -0.5 * mu1 {
                    viol.push(RegimeViolation {
                        regime,
                        kappa,
                        t: x[x.len() - 1],
                        margin: slope + 0.5 * mu1,
                    });
                }
                Ok((regime, f64::NEG_INFINITY, Some(slope), viol))
            }
        }
    };
    let results = par::map_range(grid.len(), per_node);
    let mut rep = RegimeReport {
        counts: [0; 3],
        high_margin: f64::NEG_INFINITY,
        intermediate_margin: f64::NEG_INFINITY,
        low_slope: f64::NEG_INFINITY,
        low_bound: -0.5 * mu1,
        violations: Vec::new(),
        pass: true,
    };
    for r in results {
        let (regime, margin, slope, viol) = r?;
        match regime {
            Regime::Low => {
                rep.counts[0] += 1;
                if let Some(s) = slope {
                    rep.low_slope = rep.low_slope.max(s);
                }
            }
            Regime::Intermediate => {
                rep.counts[1] += 1;
                rep.intermediate_margin = rep.intermediate_margin.max(margin);
            }
            Regime::High => {
                rep.counts[2] += 1;
                rep.high_margin = rep.high_margin.max(margin);
            }
        }
        rep.violations.extend(viol);
    }
    rep.pass = rep.violations.is_empty();
    Ok(rep)
}

/// Γ(d+½) = (2d)!√π/(4^d d!).
pub fn gamma_half(d: u32) -> f64 {
    let mut v = std::f64::consts::PI.sqrt();
    for k in 0..d {
        v *= k as f64 + 0.5;
    }
    v
}

#[derive(Clone, Debug, Serialize)]
pub struct GaussMomentCheck {
    pub d: u32,
    pub t: f64,
    pub quadrature: f64,
    pub closed_form: f64,
    pub rel_error: f64,
}

/// ‖κ^d e^{−ν_td κ²(1+T)}‖_{L²(dκ)} on the grid against Γ(d+½)^{1/2}(2ν_td)^{−d/2−1/4}(1+T)^{−d/2−1/4}.
pub fn gauss_moment_check(grid: &WavenumberGrid, nu_td: f64, d: u32, t: f64) -> GaussMomentCheck {
    let s = nu_td * (1.0 + t);
    let q: f64 = grid
        .kappas
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != grid.nyquist())
        .map(|(_, k)| (k.powi(d as i32) * (-s * k * k).exp()).powi(2))
        .sum::<f64>()
        * grid.dkappa;
    let quadrature = q.sqrt();
    let c = (gamma_half(d) / (2.0 * nu_td).powf(d as f64 + 0.5)).sqrt();
    let closed_form = c * (1.0 + t).powf(-0.5 * d as f64 - 0.25);
    GaussMomentCheck {
        d,
        t,
        quadrature,
        closed_form,
        rel_error: (quadrature - closed_form).abs() / closed_form,
    }
}

/// Extent covering ±8 standard deviations of the spread datum at T_max.
pub fn auto_length(width: f64, nu_td: f64, t_max: f64) -> f64 {
    16.0 * (width * width + 2.0 * nu_td * (t_max + 1.0)).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct DispersionConfig {
    pub nu: f64,
    pub order: usize,
    pub k: usize,
    pub length: Option<f64>,
    pub t0: f64,
    pub rho: f64,
    pub t_max: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub datum: InitialDatum,
}

impl Default for DispersionConfig {
    fn default() -> Self {
        DispersionConfig {
            nu: 0.1,
            order: 4,
            k: 1024,
            length: None,
            t0: 0.1,
            rho: 1.25,
            t_max: 100.0,
            kappa0: 1.0,
            kappa1: 1.0,
            datum: InitialDatum::Modulated {
                mass: 1.0,
                width: 1.0,
                amplitude: 0.5,
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DispersionSample {
    pub t: f64,
    pub mass: f64,
    pub mean: f64,
    pub variance: f64,
    pub variance_fd: f64,
    pub gauss_distance: f64,
    pub remainder: f64,
    pub top_mode_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DispersionReport {
    pub nu: f64,
    pub nu_td: f64,
    pub length: f64,
    pub samples: Vec<DispersionSample>,
    pub diffusivity: Diffusivity,
    pub d_eff_rel_error: f64,
    pub mass_drift: f64,
    pub reality_defect: f64,
    pub max_imag: f64,
    pub gauss_slope: Option<f64>,
    pub remainder: RemainderFit,
}

pub const D_EFF_REL_TOL: f64 = 0.02;
pub const GAUSS_RATE: f64 = -0.75;

impl DispersionReport {
    pub fn d_eff_pass(&self) -> bool {
        self.d_eff_rel_error <= D_EFF_REL_TOL
    }

    pub fn gauss_pass(&self) -> bool {
        self.gauss_slope
            .is_some_and(|s| s <= GAUSS_RATE + RATE_SLACK)
    }

    pub fn invariants_pass(&self) -> bool {
        self.mass_drift <= 1e-10 && self.reality_defect <= 1e-10
    }
}

pub fn run_dispersion(
    op: &ModalOperator,
    field: &ShearField,
    cfg: &DispersionConfig,
) -> Result<DispersionReport> {
    let nu_td = crate::cross_section::taylor_viscosity(cfg.nu, field);
    let op = op.with_nu(cfg.nu);
    let length = cfg
        .length
        .unwrap_or_else(|| auto_length(cfg.datum.width(), nu_td, cfg.t_max));
    let grid = WavenumberGrid::new(length, cfg.k, cfg.nu, cfg.kappa0, cfg.kappa1)?;
    let init = initialize(&cfg.datum, &grid, op.dim() - 1)?;
    let times = geometric_schedule(cfg.t0, cfg.rho, cfg.t_max)?;
    let series = evolve_series(&init, &op, &grid, &times)?;
    let basis = HermiteBasis::new(nu_td, cfg.order)?;
    let m0 = zero_mode_mass(&init);
    let mut samples = Vec::with_capacity(series.len());
    let mut moms = Vec::with_capacity(series.len());
    let mut rems = Vec::with_capacity(series.len());
    let (mut drift, mut real, mut imag) = (0.0f64, 0.0f64, 0.0f64);
    for s in &series {
        let mo = moments(s, &grid);
        let (u, im) = reconstruct(s, &grid);
        imag = imag.max(im);
        drift = drift.max((zero_mode_mass(s) - m0).norm());
        real = real.max(reality_defect(s, &grid));
        let gd = if s.t > 0.0 {
            gaussian_distance(&u, &grid.x_grid, s.t, s.mass, nu_td)
        } else {
            f64::NAN
        };
        let rem = remainder_at(s, &grid, &basis)?;
        let top = s
            .coeffs
            .iter()
            .map(crate::modal_operator::top_mode_fraction)
            .fold(0.0f64, f64::max);
        samples.push(DispersionSample {
            t: s.t,
            mass: mo.mass,
            mean: mo.mean,
            variance: mo.variance,
            variance_fd: mo.variance_fd,
            gauss_distance: gd,
            remainder: rem.norm,
            top_mode_fraction: top,
        });
        moms.push(mo);
        rems.push(rem);
    }
    let diffusivity = effective_diffusivity(&moms)?;
    let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let gd: Vec<f64> = samples.iter().map(|s| s.gauss_distance).collect();
    let scale = similarity::modal_l2(&reconstruct(&init, &grid).0, &grid.x_grid);
    Ok(DispersionReport {
        nu: cfg.nu,
        nu_td,
        length,
        d_eff_rel_error: (diffusivity.asymptote - nu_td).abs() / nu_td,
        diffusivity,
        mass_drift: drift,
        reality_defect: real,
        max_imag: imag,
        gauss_slope: final_decade_slope(&t[1..], &gd[1..]),
        remainder: remainder_decay(rems, cfg.order, scale),
        samples,
    })
}
