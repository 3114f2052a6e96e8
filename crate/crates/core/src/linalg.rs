use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{CMatrix, CVector};

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Operator 2-norm.
pub fn norm2(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |s, x| s.max(*x))
}

/// ⟨x, y⟩ = Σ conj(x_i) y_i.
pub fn inner(x: &CVector, y: &CVector) -> Complex64 {
    x.dotc(y)
}

/// Largest eigenvalue of a Hermitian matrix (given as full complex storage).
pub fn max_eig_hermitian(h: &CMatrix) -> f64 {
    // symmetrize against round-off before the Hermitian solver
    let hs = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    hs.symmetric_eigenvalues()
        .iter()
        .fold(f64::NEG_INFINITY, |s, x| s.max(*x))
}

/// Componentwise standard normal, scaled to unit norm.
pub fn random_unit_complex<R: Rng>(n: usize, rng: &mut R) -> CVector {
    let v = CVector::from_fn(n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let nv = v.norm();
    v / Complex64::new(nv, 0.0)
}

pub fn random_unit_real<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let nv = v.norm();
    v / nv
}

/// Least squares fit y ≈ Σ_j c_j x^{p_j}; returns (coefficients, max residual).
pub fn power_fit(x: &[f64], y: &[f64], powers: &[i32]) -> (Vec<f64>, f64) {
    let n = x.len();
    let k = powers.len();
    // column scaling keeps the normal problem well conditioned
    let scale: Vec<f64> = powers
        .iter()
        .map(|&p| {
            x.iter()
                .fold(0.0f64, |s, v| s.max(v.abs().powi(p)))
                .max(1e-300)
        })
        .collect();
    let a = DMatrix::from_fn(n, k, |i, j| x[i].powi(powers[j]) / scale[j]);
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let c = svd.solve(&b, 1e-15).expect("svd solve");
    let resid = (&a * &c - &b).amax();
    let coeffs = c.iter().zip(&scale).map(|(c, s)| c / s).collect();
    (coeffs, resid)
}

/// Ordinary least squares slope of y against x.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
