use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::cross_section::{CrossSectionSpectrum, ShearField};
use crate::error::{LabError, Result};
use crate::linalg::{self, I};
use crate::{CMatrix, CVector};

/// Truncated generator B(κ) = B₀ + κB₁ + κ²B₂ on span{ψ₀, …, ψ_M}.
#[derive(Clone, Debug)]
pub struct ModalOperator {
    pub nu: f64,
    pub a: f64,
    pub chi_sup: f64,
    /// Diagonal of B₀: (0, −μ₁, …, −μ_M).
    pub b0: DVector<f64>,
    /// Real symmetric table S with B₁ = iA·S.
    pub s1: DMatrix<f64>,
    pub b1: CMatrix,
    /// Scalar of B₂ = b2·I, equal to −ν².
    pub b2: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OperatorTables {
    pub nu: f64,
    pub b0: Vec<f64>,
    pub b1_imag: Vec<Vec<f64>>,
    pub b2: f64,
}

pub fn assemble(
    field: &ShearField,
    spectrum: &CrossSectionSpectrum,
    nu: f64,
) -> Result<ModalOperator> {
    if nu <= 0.0 || !nu.is_finite() {
        return Err(LabError::Invalid(format!(
            "viscosity must be positive, got {nu}"
        )));
    }
    let m = spectrum.modes();
    if field.modes() != m {
        return Err(LabError::Dimension(format!(
            "shear field has {} modes, spectrum has {m}",
            field.modes()
        )));
    }
    let mut b0 = DVector::zeros(m + 1);
    for n in 0..m {
        b0[n + 1] = -spectrum.mu[n];
    }
    let mut s1 = DMatrix::zeros(m + 1, m + 1);
    for n in 0..m {
        s1[(0, n + 1)] = field.chi[n];
        s1[(n + 1, 0)] = field.chi[n];
        for k in 0..m {
            s1[(n + 1, k + 1)] = field.coupling[n][k];
        }
    }
    let b1 = s1.map(|x| I * (field.a * x));
    Ok(ModalOperator {
        nu,
        a: field.a,
        chi_sup: field.chi_sup,
        b0,
        s1,
        b1,
        b2: -nu * nu,
    })
}

impl ModalOperator {
    pub fn dim(&self) -> usize {
        self.b0.len()
    }

    pub fn mu1(&self) -> f64 {
        -self.b0[1]
    }

    /// Same shear, different viscosity.
    pub fn with_nu(&self, nu: f64) -> ModalOperator {
        ModalOperator {
            nu,
            b2: -nu * nu,
            ..self.clone()
        }
    }

    pub fn tables(&self) -> OperatorTables {
        let n = self.dim();
        OperatorTables {
            nu: self.nu,
            b0: self.b0.iter().copied().collect(),
            b1_imag: (0..n)
                .map(|i| (0..n).map(|j| self.b1[(i, j)].im).collect())
                .collect(),
            b2: self.b2,
        }
    }
}

/// B(κ) = B₀ + κB₁ + κ²B₂.
pub fn evaluate(op: &ModalOperator, kappa: f64) -> CMatrix {
    let mut b = &op.b1 * Complex64::new(kappa, 0.0);
    let shift = op.b2 * kappa * kappa;
    for i in 0..op.dim() {
        b[(i, i)] += Complex64::new(op.b0[i] + shift, 0.0);
    }
    b
}

/// C(κ) = B₀ + κB₁, the ν-free part.
pub fn evaluate_c(op: &ModalOperator, kappa: f64) -> CMatrix {
    let mut b = &op.b1 * Complex64::new(kappa, 0.0);
    for i in 0..op.dim() {
        b[(i, i)] += Complex64::new(op.b0[i], 0.0);
    }
    b
}

/// Hermitian part B₀ + κ²B₂ and anti-Hermitian part κB₁.
pub fn split_symmetric(op: &ModalOperator, kappa: f64) -> (CMatrix, CMatrix) {
    let n = op.dim();
    let s = CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(op.b0[i] + op.b2 * kappa * kappa, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    (s, &op.b1 * Complex64::new(kappa, 0.0))
}

/// e^{B(κ)T} by scaling and squaring with Padé approximants.
pub fn propagator(op: &ModalOperator, kappa: f64, t: f64) -> CMatrix {
    expm(&evaluate(op, kappa), t)
}

pub fn expm(b: &CMatrix, t: f64) -> CMatrix {
    if t == 0.0 {
        return CMatrix::identity(b.nrows(), b.ncols());
    }
    (b * Complex64::new(t, 0.0)).exp()
}

/// ‖e^{B(κ)T} − e^{−ν²κ²T}e^{C(κ)T}‖₂.
pub fn nu_factorization_check(op: &ModalOperator, kappa: f64, t: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    let full = propagator(op, kappa, t);
    let scalar = (-op.nu * op.nu * kappa * kappa * t).exp();
    let fact = expm(&evaluate_c(op, kappa), t) * Complex64::new(scalar, 0.0);
    linalg::norm2(&(full - fact))
}

/// Fraction of ℓ² mass carried by the highest retained mode.
pub fn top_mode_fraction(w: &CVector) -> f64 {
    let total = w.norm_squared();
    if total == 0.0 {
        return 0.0;
    }
    w[w.len() - 1].norm_sqr() / total
}

pub const TOP_MODE_WARN: f64 = 1e-6;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cross_section::{build_spectrum, CrossSectionSpec, Profile};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::{PI, SQRT_2};

    fn setup(profile: Profile, m: usize, nu: f64) -> ModalOperator {
        let s = build_spectrum(&CrossSectionSpec::interval(m)).unwrap();
        let f = profile.field(&s).unwrap();
        assemble(&f, &s, nu).unwrap()
    }

    #[test]
    fn invariants_by_construction() {
        let op = setup(Profile::cosine2(), 8, 0.1);
        assert_eq!(op.b0[0], 0.0);
        assert!(op.b0.iter().skip(1).all(|x| *x < 0.0));
        let anti = &op.b1 + op.b1.adjoint();
        assert_eq!(anti.camax(), 0.0);
        assert!((op.b2 + 0.01).abs() < 1e-15);
    }

    #[test]
    fn cosine_b1_oracle() {
        let op = setup(Profile::cosine(), 2, 0.1);
        let expect = [
            [0.0, 1.0 / SQRT_2, 0.0],
            [1.0 / SQRT_2, 0.0, 0.5],
            [0.0, 0.5, 0.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!(op.b1[(i, j)].re == 0.0);
                assert!((op.b1[(i, j)].im - expect[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn evaluate_cases() {
        let op = setup(Profile::cosine(), 4, 0.1);
        let b = evaluate(&op, 0.0);
        for i in 0..5 {
            for j in 0..5 {
                let e = if i == j { op.b0[i] } else { 0.0 };
                assert_eq!(b[(i, j)], Complex64::new(e, 0.0));
            }
        }
        let bp = evaluate(&op, 0.7);
        let bm = evaluate(&op, -0.7);
        assert!((bp.map(|z| z.conj()) - bm).camax() < 1e-15);

        let plug = setup(Profile::Plug { value: 1.0 }, 1, 0.1);
        let b = evaluate(&plug, 1.0);
        assert!((b[(0, 0)].re + 0.01).abs() < 1e-15);
        assert!((b[(1, 1)].re + 0.01 + PI * PI).abs() < 1e-12);
        assert!(b[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn split_parts() {
        let op = setup(Profile::cosine2(), 8, 0.1);
        let (s, a) = split_symmetric(&op, 0.4);
        assert_eq!((&s - s.adjoint()).camax(), 0.0);
        assert_eq!((&a + a.adjoint()).camax(), 0.0);
        assert_eq!((&s + &a - evaluate(&op, 0.4)).camax(), 0.0);
        let (_, a0) = split_symmetric(&op, 0.0);
        assert_eq!(a0.camax(), 0.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let w = linalg::random_unit_complex(9, &mut rng);
            let q = linalg::inner(&w, &(&a * &w));
            assert!(q.re.abs() < 1e-12);
        }
    }

    #[test]
    fn propagator_basics() {
        let op = setup(Profile::Plug { value: 1.0 }, 3, 0.1);
        let p0 = propagator(&op, 0.5, 0.0);
        assert_eq!(p0, CMatrix::identity(4, 4));
        let (k, t) = (0.8, 2.0);
        let p = propagator(&op, k, t);
        for i in 0..4 {
            let e = ((op.b0[i] - 0.01 * k * k) * t).exp();
            assert!((p[(i, i)].re - e).abs() < 1e-14);
        }
    }

    #[test]
    fn semigroup_and_contraction() {
        let op = setup(Profile::cosine2(), 8, 0.1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let k = rng.gen_range(-5.0..5.0);
            let t1 = rng.gen_range(0.0..2.0);
            let t2 = rng.gen_range(0.0..2.0);
            let lhs = propagator(&op, k, t1 + t2);
            let rhs = propagator(&op, k, t1) * propagator(&op, k, t2);
            assert!((lhs - rhs).camax() < 1e-10);
            assert!(linalg::norm2(&propagator(&op, k, t1)) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn abscissa_bound_random_probes() {
        let op = setup(Profile::cosine2(), 8, 0.1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let k: f64 = rng.gen_range(-20.0..20.0);
            let w = linalg::random_unit_complex(9, &mut rng);
            let q = linalg::inner(&w, &(evaluate(&op, k) * &w));
            assert!(q.re <= -0.01 * k * k + 1e-12);
        }
    }

    #[test]
    fn nu_factorization() {
        let op = setup(Profile::cosine(), 8, 0.1);
        assert_eq!(nu_factorization_check(&op, 0.0, 3.0), 0.0);
        let plug = setup(Profile::Plug { value: 1.0 }, 4, 0.1);
        assert!(nu_factorization_check(&plug, 1.3, 2.0) < 1e-12);
        assert!(nu_factorization_check(&op, 0.3, 5.0) < 1e-10);
    }

    #[test]
    fn pure_advection_conserves_norm() {
        let op = setup(Profile::cosine2(), 8, 0.1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let w = linalg::random_unit_complex(9, &mut rng);
        let u = expm(&(&op.b1 * Complex64::new(0.9, 0.0)), 3.0) * &w;
        assert!((u.norm() - 1.0).abs() < 1e-12);
    }
}
