use nalgebra::Schur;
use num_complex::Complex64;
use serde::Serialize;

use crate::cross_section::ShearField;
use crate::error::{LabError, Result};
use crate::linalg;
use crate::modal_operator::{evaluate, ModalOperator};
use crate::par;
use crate::{CMatrix, CVector};

/// Number of right-most eigenvalues considered when matching the leading branch.
const CANDIDATES: usize = 3;

#[derive(Clone, Debug)]
pub struct SpectralSlice {
    pub kappa: f64,
    /// Sorted by descending real part.
    pub eigenvalues: Vec<Complex64>,
    pub leading: Complex64,
    pub leading_index: usize,
    pub right: CVector,
    /// Left eigenvector scaled so that ⟨left, right⟩ = 1.
    pub left: CVector,
    pub projection: CMatrix,
    pub gap: f64,
    pub condition: f64,
}

impl SpectralSlice {
    pub fn rest_max_re(&self) -> f64 {
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.leading_index)
            .map(|(_, z)| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn eigenvalues(b: &CMatrix) -> Option<Vec<Complex64>> {
    let schur = Schur::try_new(b.clone(), 1e-15, 100_000)?;
    let mut ev: Vec<Complex64> = schur.eigenvalues()?.iter().copied().collect();
    ev.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap()
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    Some(ev)
}

fn inverse_iteration(b: &CMatrix, lambda: Complex64) -> CVector {
    let n = b.nrows();
    let scale = 1.0 + b.camax();
    let shift = lambda + Complex64::new(1e-12 * scale, 1e-12 * scale);
    let mut shifted = b.clone();
    for i in 0..n {
        shifted[(i, i)] -= shift;
    }
    let lu = shifted.lu();
    let mut x = CVector::from_fn(n, |i, _| Complex64::new(1.0 / (1.0 + i as f64), 0.25));
    for _ in 0..3 {
        x = match lu.solve(&x) {
            Some(y) => y,
            None => break,
        };
        let nx = x.norm();
        if !nx.is_finite() || nx == 0.0 {
            break;
        }
        x /= Complex64::new(nx, 0.0);
    }
    x
}

fn overlap(a: &CVector, b: &CVector) -> f64 {
    linalg::inner(a, b).norm() / (a.norm() * b.norm())
}

struct Raw {
    kappa: f64,
    b: CMatrix,
    eigenvalues: Vec<Complex64>,
    vectors: Vec<CVector>,
}

fn raw_slice(op: &ModalOperator, kappa: f64) -> Result<Raw> {
    let b = evaluate(op, kappa);
    let ev = eigenvalues(&b).ok_or(LabError::Eigensolver(kappa))?;
    let k = CANDIDATES.min(ev.len());
    let vectors = (0..k).map(|i| inverse_iteration(&b, ev[i])).collect();
    Ok(Raw {
        kappa,
        b,
        eigenvalues: ev,
        vectors,
    })
}

fn finish_slice(raw: Raw, reference: &CVector) -> Result<SpectralSlice> {
    let overlaps: Vec<f64> = raw.vectors.iter().map(|v| overlap(reference, v)).collect();
    let mut order: Vec<usize> = (0..overlaps.len()).collect();
    order.sort_by(|&i, &j| overlaps[j].partial_cmp(&overlaps[i]).unwrap());
    let best = order[0];
    if order.len() > 1 && (overlaps[best] - overlaps[order[1]]).abs() < 1e-6 {
        return Err(LabError::Branch(format!(
            "overlap ambiguity at kappa = {}: candidates {} and {} (overlap {:.3e})",
            raw.kappa, raw.eigenvalues[best], raw.eigenvalues[order[1]], overlaps[best]
        )));
    }
    let right = raw.vectors[best].clone();
    let lambda = raw.eigenvalues[best];
    let left0 = inverse_iteration(&raw.b.adjoint(), lambda.conj());
    let lr = linalg::inner(&left0, &right);
    let condition = left0.norm() * right.norm() / lr.norm();
    if !condition.is_finite() || condition > 1e8 {
        return Err(LabError::Branch(format!(
            "near-defective leading pair at kappa = {} (condition {condition:.3e})",
            raw.kappa
        )));
    }
    let left = left0 / lr.conj();
    // Rayleigh refinement of the eigenvalue
    let refined = linalg::inner(&left, &(&raw.b * &right));
    let mut eigenvalues = raw.eigenvalues;
    eigenvalues[best] = refined;
    let projection = &right * left.adjoint();
    let rest = eigenvalues
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != best)
        .map(|(_, z)| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SpectralSlice {
        kappa: raw.kappa,
        leading: refined,
        leading_index: best,
        gap: refined.re - rest,
        eigenvalues,
        right,
        left,
        projection,
        condition,
    })
}

fn e0(n: usize) -> CVector {
    let mut v = CVector::zeros(n);
    v[0] = Complex64::new(1.0, 0.0);
    v
}

/// Full spectrum at κ; the leading branch is the eigenvector closest to ψ₀.
pub fn spectrum_at(op: &ModalOperator, kappa: f64) -> Result<SpectralSlice> {
    finish_slice(raw_slice(op, kappa)?, &e0(op.dim()))
}

/// Tracks λ₀ along a grid by eigenvector continuation, starting from the
/// node of smallest |κ| and moving outward.
pub fn leading_branch(op: &ModalOperator, grid: &[f64]) -> Result<Vec<SpectralSlice>> {
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    let raws = par::map_range(grid.len(), |i| raw_slice(op, grid[i]));
    let mut raws: Vec<Option<Raw>> = raws
        .into_iter()
        .map(|r| r.map(Some))
        .collect::<Result<_>>()?;
    let start = (0..grid.len())
        .min_by(|&i, &j| grid[i].abs().partial_cmp(&grid[j].abs()).unwrap())
        .unwrap();
    let mut out: Vec<Option<SpectralSlice>> = (0..grid.len()).map(|_| None).collect();
    let first = finish_slice(raws[start].take().unwrap(), &e0(op.dim()))?;
    let seed = first.right.clone();
    out[start] = Some(first);
    let mut reference = seed.clone();
    for i in start + 1..grid.len() {
        let s = finish_slice(raws[i].take().unwrap(), &reference)?;
        reference = s.right.clone();
        out[i] = Some(s);
    }
    reference = seed;
    for i in (0..start).rev() {
        let s = finish_slice(raws[i].take().unwrap(), &reference)?;
        reference = s.right.clone();
        out[i] = Some(s);
    }
    Ok(out.into_iter().map(|s| s.unwrap()).collect())
}

/// 0.9·μ₁/(2A‖χ‖_∞): the admissible small-wavenumber bound with a 10% margin.
pub fn default_kappa0(op: &ModalOperator) -> f64 {
    let adv = op.a.abs() * op.chi_sup;
    if adv == 0.0 {
        op.mu1()
    } else {
        0.9 * op.mu1() / (2.0 * adv)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationReport {
    /// Quadratic coefficient of Re λ₀, compared against −ν_td.
    pub quadratic: f64,
    /// Quadratic coefficient with the molecular part ν² removed (≈ −D_td).
    pub gamma2: f64,
    pub gamma3_imag: f64,
    pub c4: f64,
    pub c5: f64,
    pub fit_residual: f64,
    pub kappa_fit: f64,
    pub nu_td: f64,
    pub r: f64,
    pub quadratic_error: f64,
    pub cubic_error: f64,
}

/// Fits Re λ₀ = q κ² + c₄κ⁴ + c₆κ⁶ and Im λ₀ = g κ³ + c₅κ⁵ + c₇κ⁷ on (0, κ_fit].
pub fn perturbation_coefficients(
    op: &ModalOperator,
    field: &ShearField,
    r: f64,
    kappa_fit: Option<f64>,
) -> Result<PerturbationReport> {
    if field.is_trivial() {
        return Err(LabError::Invalid("degenerate: no shear".into()));
    }
    let nu_td = op.nu * op.nu + field.d_td;
    let mut kf = kappa_fit.unwrap_or(0.05 * default_kappa0(op));
    let points = 24;
    for _ in 0..8 {
        let grid: Vec<f64> = (1..=points)
            .map(|i| kf * i as f64 / points as f64)
            .collect();
        let slices = leading_branch(op, &grid)?;
        let re: Vec<f64> = slices.iter().map(|s| s.leading.re).collect();
        let im: Vec<f64> = slices.iter().map(|s| s.leading.im).collect();
        let (cr, res_r) = linalg::power_fit(&grid, &re, &[2, 4, 6]);
        let (ci, res_i) = linalg::power_fit(&grid, &im, &[3, 5, 7]);
        let scale = re
            .iter()
            .chain(&im)
            .fold(0.0f64, |s, v| s.max(v.abs()))
            .max(1e-300);
        let resid = res_r.max(res_i) / scale;
        if resid <= 1e-5 {
            return Ok(PerturbationReport {
                quadratic: cr[0],
                gamma2: cr[0] + op.nu * op.nu,
                gamma3_imag: ci[0],
                c4: cr[1],
                c5: ci[1],
                fit_residual: resid,
                kappa_fit: kf,
                nu_td,
                r,
                quadratic_error: (cr[0] + nu_td).abs(),
                cubic_error: (ci[0] - r).abs(),
            });
        }
        kf *= 0.5;
    }
    Err(LabError::FitResidual(kf))
}

#[derive(Clone, Debug, Serialize)]
pub struct SeparationReport {
    pub kappa0: f64,
    pub points: usize,
    pub threshold_leading: f64,
    pub threshold_rest: f64,
    /// min over the sweep of √2μ₁/2 − |λ₀ + ν²κ²|.
    pub leading_margin: f64,
    /// Same with the νκ² shift as printed in the separation statement.
    pub leading_margin_nu: f64,
    /// min over the sweep of −μ₁/2 − max Re(rest).
    pub rest_margin: f64,
    /// min over all eigenvalues of −ν²κ² − Re λ (abscissa bound).
    pub abscissa_margin: f64,
    /// min of |κ|A‖χ‖_∞ − |Im λ|.
    pub imag_margin: f64,
    pub passed: bool,
    pub offending: Option<(f64, f64, f64)>,
}

pub fn admissible_kappa0(op: &ModalOperator) -> f64 {
    let adv = op.a.abs() * op.chi_sup;
    if adv == 0.0 {
        f64::INFINITY
    } else {
        op.mu1() / (2.0 * adv)
    }
}

pub fn symmetric_grid(extent: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|i| -extent + 2.0 * extent * i as f64 / (points - 1) as f64)
        .collect()
}

/// Checks spectral separation on a sweep of |κ| ≤ κ₀.
pub fn separation_check(
    op: &ModalOperator,
    kappa0: f64,
    points: usize,
) -> Result<SeparationReport> {
    if kappa0 >= admissible_kappa0(op) {
        return Err(LabError::Invalid(format!(
            "kappa0 = {kappa0} violates kappa0 < mu1/(2A|chi|_inf) = {}",
            admissible_kappa0(op)
        )));
    }
    let grid = symmetric_grid(kappa0, points);
    let slices = leading_branch(op, &grid)?;
    let mu1 = op.mu1();
    let nu2 = op.nu * op.nu;
    let threshold_leading = std::f64::consts::SQRT_2 * mu1 / 2.0;
    let threshold_rest = -mu1 / 2.0;
    let mut rep = SeparationReport {
        kappa0,
        points: grid.len(),
        threshold_leading,
        threshold_rest,
        leading_margin: f64::INFINITY,
        leading_margin_nu: f64::INFINITY,
        rest_margin: f64::INFINITY,
        abscissa_margin: f64::INFINITY,
        imag_margin: f64::INFINITY,
        passed: true,
        offending: None,
    };
    for s in &slices {
        let k = s.kappa;
        let lead = threshold_leading - (s.leading + Complex64::new(nu2 * k * k, 0.0)).norm();
        let lead_nu = threshold_leading - (s.leading + Complex64::new(op.nu * k * k, 0.0)).norm();
        let rest = threshold_rest - s.rest_max_re();
        rep.leading_margin = rep.leading_margin.min(lead);
        rep.leading_margin_nu = rep.leading_margin_nu.min(lead_nu);
        rep.rest_margin = rep.rest_margin.min(rest);
        for z in &s.eigenvalues {
            rep.abscissa_margin = rep.abscissa_margin.min(-nu2 * k * k - z.re);
            rep.imag_margin = rep
                .imag_margin
                .min(k.abs() * op.a.abs() * op.chi_sup - z.im.abs());
        }
        if (lead < 0.0 || rest < 0.0) && rep.offending.is_none() {
            rep.offending = Some((k, s.leading.re, s.leading.im));
        }
    }
    rep.passed = rep.leading_margin >= 0.0 && rep.rest_margin >= 0.0;
    Ok(rep)
}
