use serde::Serialize;
use std::f64::consts::PI;

use crate::cross_section::CrossSectionSpectrum;
use crate::error::{LabError, Result};
use crate::fourier::{self, UniformGrid};

/// Boundary-to-peak ratio above which a field counts as not localized.
pub const LOCALIZATION_TOL: f64 = 1e-10;

/// Eigenfunctions φ_k = ∂^k φ₀ of L_td and their adjoint polynomials H_k,
/// both evaluated through the physicists' Hermite recurrence in x = ξ/(2√ν_td).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HermiteBasis {
    pub nu_td: f64,
    pub order: usize,
}

fn hermite_phys(x: f64, kmax: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(kmax + 1);
    h.push(1.0);
    if kmax >= 1 {
        h.push(2.0 * x);
    }
    for k in 1..kmax {
        let next = 2.0 * x * h[k] - 2.0 * k as f64 * h[k - 1];
        h.push(next);
    }
    h
}

impl HermiteBasis {
    pub fn new(nu_td: f64, order: usize) -> Result<Self> {
        if !(nu_td > 0.0) || !nu_td.is_finite() {
            return Err(LabError::Invalid(format!(
                "nu_td must be positive, got {nu_td}"
            )));
        }
        Ok(HermiteBasis { nu_td, order })
    }

    pub fn phi0(&self, xi: f64) -> f64 {
        (-xi * xi / (4.0 * self.nu_td)).exp() / (4.0 * PI * self.nu_td).sqrt()
    }

    /// φ₀..φ_kmax at ξ.
    pub fn phi_upto(&self, xi: f64, kmax: usize) -> Vec<f64> {
        let s = self.nu_td.sqrt();
        let h = hermite_phys(xi / (2.0 * s), kmax);
        let p0 = self.phi0(xi);
        let step = -1.0 / (2.0 * s);
        let mut scale = 1.0;
        h.iter()
            .map(|hk| {
                let v = p0 * scale * hk;
                scale *= step;
                v
            })
            .collect()
    }

    /// H₀..H_kmax at ξ.
    pub fn h_upto(&self, xi: f64, kmax: usize) -> Vec<f64> {
        let s = self.nu_td.sqrt();
        let h = hermite_phys(xi / (2.0 * s), kmax);
        let mut scale = 1.0;
        h.iter()
            .enumerate()
            .map(|(k, hk)| {
                if k > 0 {
                    scale *= -s / k as f64;
                }
                scale * hk
            })
            .collect()
    }

    pub fn phi(&self, k: usize, xi: f64) -> f64 {
        self.phi_upto(xi, k)[k]
    }

    pub fn h(&self, k: usize, xi: f64) -> f64 {
        self.h_upto(xi, k)[k]
    }

    /// φ_k sampled on a grid, one row per k = 0..=kmax.
    pub fn phi_table(&self, grid: &UniformGrid, kmax: usize) -> Vec<Vec<f64>> {
        transpose(
            grid.points()
                .iter()
                .map(|x| self.phi_upto(*x, kmax))
                .collect(),
            kmax + 1,
        )
    }

    pub fn h_table(&self, grid: &UniformGrid, kmax: usize) -> Vec<Vec<f64>> {
        transpose(
            grid.points()
                .iter()
                .map(|x| self.h_upto(*x, kmax))
                .collect(),
            kmax + 1,
        )
    }
}

fn transpose(rows: Vec<Vec<f64>>, k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect()
}

/// A modal field in similarity variables with the γ_n/V_n split applied.
#[derive(Clone, Debug)]
pub struct SimilarityField {
    pub t: f64,
    pub tau: f64,
    pub nu_td: f64,
    /// ξ-grid; the image of the X-grid under ξ = X/√(T+1).
    pub grid: UniformGrid,
    pub x_grid: UniformGrid,
    pub w0: Vec<f64>,
    pub gamma: Vec<f64>,
    /// V_n = w_n − γ_nφ₀, with zero mean.
    pub v: Vec<Vec<f64>>,
}

impl SimilarityField {
    pub fn w(&self, n: usize) -> Vec<f64> {
        let b = HermiteBasis {
            nu_td: self.nu_td,
            order: 0,
        };
        self.grid
            .points()
            .iter()
            .zip(&self.v[n])
            .map(|(x, v)| self.gamma[n] * b.phi0(*x) + v)
            .collect()
    }
}

fn check_localized(u: &[Vec<f64>]) -> Result<()> {
    let peak = u.iter().flatten().fold(0.0f64, |s, x| s.max(x.abs()));
    if peak == 0.0 {
        return Ok(());
    }
    let edge = u
        .iter()
        .filter(|f| !f.is_empty())
        .map(|f| f[0].abs().max(f[f.len() - 1].abs()))
        .fold(0.0f64, f64::max);
    if edge > LOCALIZATION_TOL * peak {
        return Err(LabError::NotLocalized(edge / peak));
    }
    Ok(())
}

/// w₀(ξ) = √(T+1)u₀, w_n(ξ) = (T+1)u_n with ξ = X/√(T+1), then split off γ_nφ₀.
pub fn to_similarity(
    u: &[Vec<f64>],
    x_grid: &UniformGrid,
    t: f64,
    nu_td: f64,
) -> Result<SimilarityField> {
    if t < 0.0 {
        return Err(LabError::Invalid(format!(
            "time must be nonnegative, got {t}"
        )));
    }
    if u.is_empty() || u.iter().any(|f| f.len() != x_grid.n) {
        return Err(LabError::Dimension(
            "modal field does not match the X-grid".into(),
        ));
    }
    check_localized(u)?;
    let s = (1.0 + t).sqrt();
    let grid = x_grid.scaled(1.0 / s);
    let basis = HermiteBasis::new(nu_td, 0)?;
    let phi0: Vec<f64> = grid.points().iter().map(|x| basis.phi0(*x)).collect();
    let w0 = u[0].iter().map(|x| s * x).collect();
    let mut gamma = Vec::with_capacity(u.len() - 1);
    let mut v = Vec::with_capacity(u.len() - 1);
    for un in &u[1..] {
        let wn: Vec<f64> = un.iter().map(|x| (1.0 + t) * x).collect();
        let g = grid.integrate(&wn);
        v.push(wn.iter().zip(&phi0).map(|(w, p)| w - g * p).collect());
        gamma.push(g);
    }
    Ok(SimilarityField {
        t,
        tau: (1.0 + t).ln(),
        nu_td,
        grid,
        x_grid: *x_grid,
        w0,
        gamma,
        v,
    })
}

/// Inverse of [`to_similarity`] on the originating X-grid.
pub fn from_similarity(field: &SimilarityField) -> Vec<Vec<f64>> {
    let s = (1.0 + field.t).sqrt();
    let mut out = vec![field.w0.iter().map(|x| x / s).collect::<Vec<f64>>()];
    for n in 0..field.gamma.len() {
        out.push(field.w(n).iter().map(|x| x / (1.0 + field.t)).collect());
    }
    out
}

/// Trigonometric interpolation of a grid function onto other ξ points.
pub fn resample(f: &[f64], from: &UniformGrid, points: &[f64]) -> Vec<f64> {
    fourier::resample(f, from, points)
}

/// γ_n(τ) = γ_n(0)e^{τ/2 − μ_n(e^τ − 1)}.
pub fn gamma_evolution(gamma0: &[f64], tau: f64, mu: &[f64]) -> Vec<f64> {
    gamma0
        .iter()
        .zip(mu)
        .map(|(g, m)| g * (0.5 * tau - m * tau.exp_m1()).exp())
        .collect()
}

/// Coefficients ⟨f, H_k⟩ for k = 0..=N and the remainder f − Σ c_kφ_k.
pub fn project_low(f: &[f64], grid: &UniformGrid, basis: &HermiteBasis) -> (Vec<f64>, Vec<f64>) {
    let h = basis.h_table(grid, basis.order);
    let phi = basis.phi_table(grid, basis.order);
    project_with(f, grid, &h[..], &phi[..])
}

fn project_with(
    f: &[f64],
    grid: &UniformGrid,
    h: &[Vec<f64>],
    phi: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>) {
    let coeffs: Vec<f64> = h
        .iter()
        .map(|hk| hk.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() * grid.dx)
        .collect();
    let mut rem = f.to_vec();
    for (c, p) in coeffs.iter().zip(phi) {
        for (r, v) in rem.iter_mut().zip(p) {
            *r -= c * v;
        }
    }
    (coeffs, rem)
}

/// Low-mode coordinates (α, β, γ) and the strong-stable remainders of a field.
#[derive(Clone, Debug, Serialize)]
pub struct Decomposition {
    pub t: f64,
    pub alpha: Vec<f64>,
    /// beta[n−1][k] = β_k^n = ⟨v_n, H_k⟩ = ⟨V_n, H_{k+1}⟩.
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    #[serde(skip)]
    pub w0_rem: Vec<f64>,
    /// ∂_ξv_n^s = V_n − Σ_k β_k^n φ_{k+1}.
    #[serde(skip)]
    pub v_rem: Vec<Vec<f64>>,
}

pub fn decompose(field: &SimilarityField, basis: &HermiteBasis) -> Decomposition {
    let n = basis.order;
    let h = basis.h_table(&field.grid, n + 1);
    let phi = basis.phi_table(&field.grid, n + 1);
    let (alpha, w0_rem) = project_with(&field.w0, &field.grid, &h[..=n], &phi[..=n]);
    let mut beta = Vec::with_capacity(field.v.len());
    let mut v_rem = Vec::with_capacity(field.v.len());
    for vn in &field.v {
        let (b, r) = project_with(vn, &field.grid, &h[1..=n + 1], &phi[1..=n + 1]);
        beta.push(b);
        v_rem.push(r);
    }
    Decomposition {
        t: field.t,
        alpha,
        beta,
        gamma: field.gamma.clone(),
        w0_rem,
        v_rem,
    }
}

/// u_app on the X-grid, one row per cross-section mode 0..=M.
pub fn assemble_uapp(
    alpha: &[f64],
    beta: &[Vec<f64>],
    gamma: &[f64],
    basis: &HermiteBasis,
    t: f64,
    x_grid: &UniformGrid,
) -> Vec<Vec<f64>> {
    let s = (1.0 + t).sqrt();
    let kmax = basis.order + 1;
    let rows: Vec<Vec<f64>> = x_grid
        .points()
        .iter()
        .map(|x| basis.phi_upto(x / s, kmax))
        .collect();
    let mut out = Vec::with_capacity(gamma.len() + 1);
    out.push(
        rows.iter()
            .map(|p| alpha.iter().zip(p).map(|(a, v)| a * v).sum::<f64>() / s)
            .collect(),
    );
    for (g, b) in gamma.iter().zip(beta) {
        out.push(
            rows.iter()
                .map(|p| {
                    (g * p[0] + b.iter().zip(&p[1..]).map(|(c, v)| c * v).sum::<f64>()) / (1.0 + t)
                })
                .collect(),
        );
    }
    out
}

/// u_rem on the X-grid from the similarity-frame remainders.
pub fn assemble_urem(w0_rem: &[f64], v_rem: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    let s = (1.0 + t).sqrt();
    let mut out = vec![w0_rem.iter().map(|x| x / s).collect::<Vec<f64>>()];
    for r in v_rem {
        out.push(r.iter().map(|x| x / (1.0 + t)).collect());
    }
    out
}

/// ‖u‖_{L²(ℝ×Ω)} of a modal field (Parseval over the cross-section basis).
pub fn modal_l2(u: &[Vec<f64>], grid: &UniformGrid) -> f64 {
    u.iter()
        .map(|f| f.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
        * grid.dx.sqrt()
}

/// ∫X^j u dX for j = 0..=jmax.
pub fn moments(f: &[f64], grid: &UniformGrid, jmax: usize) -> Vec<f64> {
    let x = grid.points();
    (0..=jmax)
        .map(|j| {
            x.iter()
                .zip(f)
                .map(|(x, v)| x.powi(j as i32) * v)
                .sum::<f64>()
                * grid.dx
        })
        .collect()
}

/// Physical field u(X_i, q) on the cross-section quadrature nodes.
pub fn physical(u: &[Vec<f64>], spectrum: &CrossSectionSpectrum) -> Vec<Vec<f64>> {
    let nx = u[0].len();
    (0..nx)
        .map(|i| {
            let c: Vec<f64> = u.iter().map(|f| f[i]).collect();
            spectrum.synthesize(&c)
        })
        .collect()
}
