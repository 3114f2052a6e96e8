use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linalg::{self, I};
use crate::modal_operator::{evaluate, expm, ModalOperator};
use crate::spectral::{admissible_kappa0, default_kappa0};
use crate::{CMatrix, CVector};

#[derive(Clone, Debug, Serialize)]
pub struct CBound {
    pub label: &'static str,
    /// 1 for the mid-proof display, 2 for the closing one.
    pub display: u8,
    pub value: f64,
    /// value − c.
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypoCertificate {
    pub nu: f64,
    pub a: f64,
    pub kappa0: f64,
    pub delta: f64,
    pub kappa1: f64,
    pub zeta0: f64,
    pub mu1: f64,
    pub chi: Vec<f64>,
    pub mu: Vec<f64>,
    pub chi_l2: f64,
    pub chi_mu_sq: f64,
    pub chi_sup: f64,
    pub c_bounds: Vec<CBound>,
    pub c: f64,
    pub second_display_binds: bool,
    pub q1_sq: f64,
    pub q2_sq: f64,
    pub q3_sq: f64,
    pub m_check: f64,
    /// μ₁/M̌, the rate as stated.
    pub m_tilde_printed: f64,
    /// Dissipation constant actually delivered by the constant choices.
    pub rho0: f64,
    /// ρ₀/M̌, the rate the functional certifies.
    pub m_tilde: f64,
    pub band: (f64, f64),
}

pub const C_FACTOR: f64 = 0.9;

/// Builds the certificate for the operator's shear; `kappa0 = None` takes the spectral default.
pub fn build_certificate(
    op: &ModalOperator,
    kappa0: Option<f64>,
    delta: f64,
    kappa1: f64,
) -> Result<HypoCertificate> {
    if !(delta > 0.0 && delta < 0.25) {
        return Err(LabError::Invalid(format!(
            "delta must lie in (0, 1/4), got {delta}"
        )));
    }
    let m = op.dim() - 1;
    let chi: Vec<f64> = (0..m).map(|n| op.s1[(0, n + 1)]).collect();
    let mu: Vec<f64> = (0..m).map(|n| -op.b0[n + 1]).collect();
    let chi_mu_sq: f64 = chi.iter().zip(&mu).map(|(c, u)| c * c / u).sum();
    if chi_mu_sq == 0.0 || op.a == 0.0 {
        return Err(LabError::DegenerateFunctional);
    }
    let k0 = kappa0.unwrap_or_else(|| default_kappa0(op));
    if !(k0 > 0.0 && k0 < admissible_kappa0(op)) {
        return Err(LabError::Invalid(format!(
            "kappa0 = {k0} outside (0, {})",
            admissible_kappa0(op)
        )));
    }
    let lo = k0 * (1.0 - delta);
    if !(kappa1 > op.nu * lo) {
        return Err(LabError::Invalid(format!(
            "kappa1 = {kappa1} must exceed nu*kappa0*(1-delta) = {}",
            op.nu * lo
        )));
    }
    let a = op.a.abs();
    let mu1 = mu[0];
    let chi_l2 = chi.iter().map(|c| c * c).sum::<f64>().sqrt();
    let chi_mu = chi_mu_sq.sqrt();
    let sup = op.chi_sup;
    let raw = [
        ("(1-d)/|chi|_mu^2", 1, (1.0 - delta) / chi_mu_sq),
        (
            "mu1/(|chi||chi|_mu + |chi|_inf^2 + 2|chi|^2/(3A^2k0^2|chi|_mu^2))",
            1,
            mu1 / (chi_l2 * chi_mu
                + sup * sup
                + 2.0 * chi_l2 * chi_l2 / (3.0 * a * a * k0 * k0 * chi_mu_sq)),
        ),
        ("A^2k0^2(1-d)", 1, a * a * k0 * k0 * (1.0 - delta)),
        ("12mu1/|chi|_mu^2", 1, 12.0 * mu1 / chi_mu_sq),
        ("Ak0(1-d)", 2, a * k0 * (1.0 - delta)),
        ("Ak0(1-d)/|chi|_mu^2", 2, a * k0 * (1.0 - delta) / chi_mu_sq),
    ];
    let min = raw.iter().fold(f64::INFINITY, |s, r| s.min(r.2));
    let c = C_FACTOR * min;
    let binding = raw.iter().find(|r| r.2 == min).map(|r| r.1).unwrap_or(1);
    let c_bounds = raw
        .iter()
        .map(|(label, display, value)| CBound {
            label,
            display: *display,
            value: *value,
            margin: value - c,
        })
        .collect();
    let m_check = 1.0 + 0.5 * a * k0 * chi_mu_sq.max(1.0);
    let rho0 = mu1.min(c * chi_mu_sq * (0.75 - 0.5 / (1.0 - delta)));
    Ok(HypoCertificate {
        nu: op.nu,
        a: op.a,
        kappa0: k0,
        delta,
        kappa1,
        zeta0: 1.0,
        mu1,
        chi,
        mu,
        chi_l2,
        chi_mu_sq,
        chi_sup: sup,
        c_bounds,
        c,
        second_display_binds: binding == 2,
        q1_sq: 1.0 / (a * k0 * chi_mu_sq),
        q2_sq: 1.0 / (a * k0 * chi_mu_sq),
        q3_sq: 2.0 / chi_mu_sq,
        m_check,
        m_tilde_printed: mu1 / m_check,
        rho0,
        m_tilde: rho0 / m_check,
        band: (lo, kappa1 / op.nu),
    })
}

impl HypoCertificate {
    /// σ_m(κ) = −cχ_m/(2Aκμ_m).
    pub fn sigma(&self, kappa: f64) -> Vec<f64> {
        self.chi
            .iter()
            .zip(&self.mu)
            .map(|(c, u)| -self.c * c / (2.0 * self.a * kappa * u))
            .collect()
    }

    /// Hermitian matrix G with Φ(W) = W*GW.
    pub fn metric(&self, kappa: f64) -> CMatrix {
        let s = self.sigma(kappa);
        let n = s.len() + 1;
        let mut g = CMatrix::identity(n, n) * Complex64::new(self.zeta0, 0.0);
        for (m, sm) in s.iter().enumerate() {
            g[(0, m + 1)] = -I * *sm;
            g[(m + 1, 0)] = I * *sm;
        }
        g
    }

    pub fn in_band(&self, kappa: f64) -> bool {
        let k = kappa.abs();
        k >= self.band.0 * (1.0 - 1e-12) && k <= self.band.1 * (1.0 + 1e-12)
    }

    /// Log-spaced sample of the band including both edges.
    pub fn band_samples(&self, points: usize) -> Vec<f64> {
        let (lo, hi) = (self.band.0.ln(), self.band.1.ln());
        if points < 2 {
            return vec![self.band.0];
        }
        (0..points)
            .map(|i| {
                if i == 0 {
                    self.band.0
                } else if i == points - 1 {
                    self.band.1
                } else {
                    (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp()
                }
            })
            .collect()
    }
}

/// Φ = ζ₀|u|² + ζ₀‖v‖² + 2Re(iu Σσ_m conj(v_m)).
pub fn phi(cert: &HypoCertificate, kappa: f64, w: &CVector) -> f64 {
    let s = cert.sigma(kappa);
    let u = w[0];
    let mut cross = Complex64::new(0.0, 0.0);
    for (m, sm) in s.iter().enumerate() {
        cross += w[m + 1].conj() * *sm;
    }
    cert.zeta0 * w.norm_squared() + 2.0 * (I * u * cross).re
}

/// dΦ/dT = 2Re⟨W, G B(κ) W⟩ along W′ = B(κ)W.
pub fn phi_derivative(cert: &HypoCertificate, b: &CMatrix, kappa: f64, w: &CVector) -> f64 {
    let g = cert.metric(kappa);
    2.0 * linalg::inner(w, &(g * (b * w))).re
}

/// Largest value of (dΦ/dT + rate·Φ)/‖W‖² over all states: the exact worst case at κ.
pub fn dissipation_margin(
    op: &ModalOperator,
    cert: &HypoCertificate,
    kappa: f64,
    rate: f64,
) -> f64 {
    let g = cert.metric(kappa);
    let b = evaluate(op, kappa);
    let h = &g * &b + b.adjoint() * &g + &g * Complex64::new(rate, 0.0);
    linalg::max_eig_hermitian(&h)
}

/// max over states of (dΦ/dT)/‖W‖² + ρ + ν²κ², the sharpened dissipation inequality with constant ρ.
pub fn sharpened_margin(op: &ModalOperator, cert: &HypoCertificate, kappa: f64, rho: f64) -> f64 {
    let g = cert.metric(kappa);
    let b = evaluate(op, kappa);
    let h = &g * &b + b.adjoint() * &g;
    linalg::max_eig_hermitian(&h) + rho + op.nu * op.nu * kappa * kappa
}

#[derive(Clone, Debug, Serialize)]
pub struct PhiDecayReport {
    pub kappa: f64,
    pub rate: f64,
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    pub bound: Vec<f64>,
    pub norm_sq: Vec<f64>,
    pub dphi: Vec<f64>,
    /// max of Φ(T) − Φ(0)e^{−rT}(1+10⁻⁸).
    pub phi_margin: f64,
    /// max of dΦ/dT + rΦ − 10⁻⁸.
    pub deriv_margin: f64,
    pub pass: bool,
    /// (κ, T, margin) of the worst violation.
    pub offending: Option<(f64, f64, f64)>,
    /// e^{−rT_max}/e^{−ν²κ²T_max}; below 1 means the certified rate beats pure molecular decay.
    pub naive_ratio: f64,
}

pub const PHI_REL_TOL: f64 = 1e-8;
pub const DERIV_TOL: f64 = 1e-8;

pub fn phi_decay_check(
    op: &ModalOperator,
    cert: &HypoCertificate,
    kappa: f64,
    initial: &CVector,
    t_max: f64,
    samples: usize,
) -> Result<PhiDecayReport> {
    phi_decay_check_at_rate(op, cert, kappa, initial, t_max, samples, cert.m_tilde)
}

/// Same check against an arbitrary rate (used to test the rate as stated).
pub fn phi_decay_check_at_rate(
    op: &ModalOperator,
    cert: &HypoCertificate,
    kappa: f64,
    initial: &CVector,
    t_max: f64,
    samples: usize,
    rate: f64,
) -> Result<PhiDecayReport> {
    if !cert.in_band(kappa) {
        return Err(LabError::Invalid(format!(
            "kappa = {kappa} outside the certified band [{}, {}]",
            cert.band.0, cert.band.1
        )));
    }
    if initial.len() != op.dim() {
        return Err(LabError::Dimension(format!(
            "state has {} entries, operator {}",
            initial.len(),
            op.dim()
        )));
    }
    if samples == 0 || !(t_max > 0.0) {
        return Err(LabError::Invalid(
            "need positive T_max and at least one sample".into(),
        ));
    }
    let b = evaluate(op, kappa);
    let dt = t_max / samples as f64;
    let step = expm(&b, dt);
    let mut w = initial.clone();
    let phi0 = phi(cert, kappa, &w);
    let mut rep = PhiDecayReport {
        kappa,
        rate,
        times: Vec::with_capacity(samples + 1),
        phi: Vec::with_capacity(samples + 1),
        bound: Vec::with_capacity(samples + 1),
        norm_sq: Vec::with_capacity(samples + 1),
        dphi: Vec::with_capacity(samples + 1),
        phi_margin: f64::NEG_INFINITY,
        deriv_margin: f64::NEG_INFINITY,
        pass: true,
        offending: None,
        naive_ratio: (-(rate - op.nu * op.nu * kappa * kappa) * t_max).exp(),
    };
    let mut worst = f64::NEG_INFINITY;
    for j in 0..=samples {
        let t = j as f64 * dt;
        if j > 0 {
            w = &step * &w;
        }
        let p = phi(cert, kappa, &w);
        let d = phi_derivative(cert, &b, kappa, &w);
        let bound = phi0 * (-rate * t).exp();
        let pm = p - bound * (1.0 + PHI_REL_TOL);
        let dm = d + rate * p - DERIV_TOL;
        rep.phi_margin = rep.phi_margin.max(pm);
        rep.deriv_margin = rep.deriv_margin.max(dm);
        let m = pm.max(dm);
        if m > 0.0 && m > worst {
            worst = m;
            rep.offending = Some((kappa, t, m));
        }
        rep.times.push(t);
        rep.phi.push(p);
        rep.bound.push(bound);
        rep.norm_sq.push(w.norm_squared());
        rep.dphi.push(d);
    }
    rep.pass = rep.offending.is_none();
    Ok(rep)
}

#[derive(Clone, Debug, Serialize)]
pub struct NormDecay {
    pub rate: f64,
    /// max of ‖W(T)‖² − 4e^{−rT}‖W(0)‖².
    pub worst_margin: f64,
    pub pass: bool,
}

/// ‖W(T)‖² ≤ 2Φ(T) ≤ 2e^{−rT}Φ(0) ≤ 4e^{−rT}‖W(0)‖² along a checked trajectory.
pub fn norm_decay_conclusion(report: &PhiDecayReport) -> NormDecay {
    let w0 = report.norm_sq.first().copied().unwrap_or(0.0);
    let worst = report
        .times
        .iter()
        .zip(&report.norm_sq)
        .map(|(t, n)| n - 4.0 * (-report.rate * t).exp() * w0 * (1.0 + PHI_REL_TOL))
        .fold(f64::NEG_INFINITY, f64::max);
    NormDecay {
        rate: report.rate,
        worst_margin: worst,
        pass: worst <= 0.0,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Equivalence {
    pub kappa: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub pass: bool,
}

/// Checks ½‖W‖² ≤ Φ(W) ≤ M̌‖W‖² on random unit states.
pub fn norm_equivalence<R: Rng>(
    cert: &HypoCertificate,
    kappa: f64,
    probes: usize,
    rng: &mut R,
) -> Equivalence {
    let n = cert.chi.len() + 1;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..probes {
        let w = linalg::random_unit_complex(n, rng);
        let p = phi(cert, kappa, &w);
        lo = lo.min(p);
        hi = hi.max(p);
    }
    Equivalence {
        kappa,
        min_ratio: lo,
        max_ratio: hi,
        pass: lo >= 0.5 && hi <= cert.m_check,
    }
}
