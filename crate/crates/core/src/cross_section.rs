use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::quadrature;

/// Tabulated cross-section eigenfunctions, unit-measure normalization.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExplicitData {
    pub mu: Vec<f64>,
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// `values[n][q]` is ψ_{n+1} at node q.
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Family {
    Interval,
    /// Rectangle of width `aspect` and height `1/aspect`.
    Rectangle {
        aspect: f64,
    },
    Explicit(ExplicitData),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossSectionSpec {
    pub family: Family,
    pub modes: usize,
    pub resolution: usize,
}

impl CrossSectionSpec {
    pub fn interval(modes: usize) -> Self {
        CrossSectionSpec {
            family: Family::Interval,
            modes,
            resolution: default_resolution(modes),
        }
    }

    pub fn square(modes: usize) -> Self {
        CrossSectionSpec {
            family: Family::Rectangle { aspect: 1.0 },
            modes,
            resolution: default_resolution(modes),
        }
    }
}

pub fn default_resolution(modes: usize) -> usize {
    (16 * modes).max(64)
}

/// Neumann eigenpairs with the quadrature used to represent them.
/// The constant mode ψ₀ ≡ 1 is implicit.
#[derive(Clone, Debug)]
pub struct CrossSectionSpectrum {
    pub mu: Vec<f64>,
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Row n holds ψ_{n+1} on the nodes.
    pub psi: DMatrix<f64>,
    /// Mode multi-indices (for the rectangle), `(n, 0)` on the interval.
    pub labels: Vec<(usize, usize)>,
    /// Side lengths of the domain (second entry 0 on the interval).
    pub extent: [f64; 2],
}

impl CrossSectionSpectrum {
    pub fn modes(&self) -> usize {
        self.mu.len()
    }

    pub fn mu1(&self) -> f64 {
        self.mu[0]
    }

    pub fn has_quadrature(&self) -> bool {
        !self.nodes.is_empty()
    }

    /// Spectrum known only through its eigenvalues (explicit spectral data).
    pub fn from_eigenvalues(mu: Vec<f64>) -> Result<Self> {
        check_ascending(&mu)?;
        let m = mu.len();
        Ok(CrossSectionSpectrum {
            mu,
            nodes: Vec::new(),
            weights: Vec::new(),
            psi: DMatrix::zeros(m, 0),
            labels: (1..=m).map(|n| (n, 0)).collect(),
            extent: [1.0, 0.0],
        })
    }

    /// Largest |⟨ψ_i, ψ_j⟩ − δ_ij| over i, j = 0..M.
    pub fn gram_defect(&self) -> f64 {
        gram_defect(&self.psi, &self.weights)
    }

    /// Evaluates Σ_n c_n ψ_n on the nodes (c includes the constant mode at index 0).
    pub fn synthesize(&self, c: &[f64]) -> Vec<f64> {
        let nq = self.weights.len();
        (0..nq)
            .map(|q| {
                c[0] + (0..self.modes())
                    .map(|n| c[n + 1] * self.psi[(n, q)])
                    .sum::<f64>()
            })
            .collect()
    }
}

fn gram_defect(psi: &DMatrix<f64>, weights: &[f64]) -> f64 {
    let m = psi.nrows();
    let nq = weights.len();
    let mut worst: f64 = 0.0;
    let total: f64 = weights.iter().sum();
    worst = worst.max((total - 1.0).abs());
    for i in 0..m {
        let mean: f64 = (0..nq).map(|q| weights[q] * psi[(i, q)]).sum();
        worst = worst.max(mean.abs());
        for j in i..m {
            let g: f64 = (0..nq)
                .map(|q| weights[q] * psi[(i, q)] * psi[(j, q)])
                .sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}

fn check_ascending(mu: &[f64]) -> Result<()> {
    if mu.is_empty() {
        return Err(LabError::Invalid(
            "need at least one nonconstant mode".into(),
        ));
    }
    if mu[0] <= 0.0 {
        return Err(LabError::NotAscending(0));
    }
    for i in 1..mu.len() {
        if mu[i] < mu[i - 1] {
            return Err(LabError::NotAscending(i));
        }
    }
    Ok(())
}

pub fn build_spectrum(spec: &CrossSectionSpec) -> Result<CrossSectionSpectrum> {
    let m = spec.modes;
    if m == 0 {
        return Err(LabError::Invalid("truncation M must be at least 1".into()));
    }
    if spec.resolution < 4 * m {
        return Err(LabError::Invalid(format!(
            "quadrature resolution {} below 4*M = {}",
            spec.resolution,
            4 * m
        )));
    }
    match &spec.family {
        Family::Interval => {
            let (x, w) = quadrature::composite(0.0, 1.0, spec.resolution);
            let mu = (1..=m).map(|n| (n as f64 * PI).powi(2)).collect();
            let psi = DMatrix::from_fn(m, x.len(), |n, q| {
                SQRT_2 * ((n + 1) as f64 * PI * x[q]).cos()
            });
            Ok(CrossSectionSpectrum {
                mu,
                nodes: x.iter().map(|&x| [x, 0.0]).collect(),
                weights: w,
                psi,
                labels: (1..=m).map(|n| (n, 0)).collect(),
                extent: [1.0, 0.0],
            })
        }
        Family::Rectangle { aspect } => rectangle(*aspect, m, spec.resolution),
        Family::Explicit(data) => {
            check_ascending(&data.mu)?;
            if data.mu.len() != m || data.values.len() != m {
                return Err(LabError::Dimension(format!(
                    "explicit data has {} eigenvalues and {} eigenfunctions, expected {m}",
                    data.mu.len(),
                    data.values.len()
                )));
            }
            let nq = data.weights.len();
            if data.nodes.len() != nq || data.values.iter().any(|v| v.len() != nq) {
                return Err(LabError::Dimension(
                    "node/weight/value lengths differ".into(),
                ));
            }
            let psi = DMatrix::from_fn(m, nq, |n, q| data.values[n][q]);
            let defect = gram_defect(&psi, &data.weights);
            if defect > 1e-8 {
                return Err(LabError::NotOrthonormal(defect));
            }
            let extent = [
                data.nodes.iter().fold(0.0f64, |s, p| s.max(p[0])),
                data.nodes.iter().fold(0.0f64, |s, p| s.max(p[1])),
            ];
            Ok(CrossSectionSpectrum {
                mu: data.mu.clone(),
                nodes: data.nodes.clone(),
                weights: data.weights.clone(),
                psi,
                labels: (1..=m).map(|n| (n, 0)).collect(),
                extent,
            })
        }
    }
}

fn rectangle(aspect: f64, m: usize, resolution: usize) -> Result<CrossSectionSpectrum> {
    if aspect <= 0.0 {
        return Err(LabError::Invalid(
            "rectangle aspect must be positive".into(),
        ));
    }
    let (lx, ly) = (aspect, 1.0 / aspect);
    let mut cands = Vec::new();
    let side = m + 1;
    for p in 0..=side {
        for q in 0..=side {
            if p + q == 0 {
                continue;
            }
            let mu = PI * PI * ((p as f64 / lx).powi(2) + (q as f64 / ly).powi(2));
            cands.push((mu, p, q));
        }
    }
    // stable sort keeps lexicographic (p, q) order inside degenerate groups
    cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    cands.truncate(m);

    let (gx, gwx) = quadrature::composite(0.0, lx, resolution);
    let (gy, gwy) = quadrature::composite(0.0, ly, resolution);
    let mut nodes = Vec::with_capacity(gx.len() * gy.len());
    let mut weights = Vec::with_capacity(gx.len() * gy.len());
    for (x, wx) in gx.iter().zip(&gwx) {
        for (y, wy) in gy.iter().zip(&gwy) {
            nodes.push([*x, *y]);
            weights.push(wx * wy);
        }
    }
    let norm = |k: usize| if k == 0 { 1.0 } else { SQRT_2 };
    let psi = DMatrix::from_fn(m, nodes.len(), |n, i| {
        let (_, p, q) = cands[n];
        let [x, y] = nodes[i];
        norm(p) * norm(q) * (p as f64 * PI * x / lx).cos() * (q as f64 * PI * y / ly).cos()
    });
    Ok(CrossSectionSpectrum {
        mu: cands.iter().map(|c| c.0).collect(),
        nodes,
        weights,
        psi,
        labels: cands.iter().map(|c| (c.1, c.2)).collect(),
        extent: [lx, ly],
    })
}

/// Shear decomposition V = A(1 + χ) against the cross-section basis.
#[derive(Clone, Debug, Serialize)]
pub struct ShearField {
    pub a: f64,
    pub chi: Vec<f64>,
    pub coupling: Vec<Vec<f64>>,
    pub mu_norm_sq: f64,
    pub d_td: f64,
    pub chi_sup: f64,
}

impl ShearField {
    pub fn modes(&self) -> usize {
        self.chi.len()
    }

    pub fn chi_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.chi)
    }

    pub fn coupling_matrix(&self) -> DMatrix<f64> {
        let m = self.modes();
        DMatrix::from_fn(m, m, |i, j| self.coupling[i][j])
    }

    pub fn is_trivial(&self) -> bool {
        self.chi.iter().all(|c| *c == 0.0)
    }

    /// Builds a field from explicit spectral data (no eigenfunctions needed).
    pub fn from_spectral(
        a: f64,
        chi: Vec<f64>,
        coupling: Vec<Vec<f64>>,
        chi_sup: f64,
        spectrum: &CrossSectionSpectrum,
    ) -> Result<Self> {
        let m = spectrum.modes();
        if chi.len() != m || coupling.len() != m || coupling.iter().any(|r| r.len() != m) {
            return Err(LabError::Dimension(format!(
                "spectral data must have {m} modes"
            )));
        }
        if a.abs() < 1e-12 {
            return Err(LabError::ZeroMean);
        }
        for i in 0..m {
            for j in 0..i {
                if (coupling[i][j] - coupling[j][i]).abs() > 1e-12 {
                    return Err(LabError::Invalid(format!(
                        "coupling not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(finish(a, chi, coupling, chi_sup, spectrum))
    }
}

fn finish(
    a: f64,
    chi: Vec<f64>,
    coupling: Vec<Vec<f64>>,
    chi_sup: f64,
    spectrum: &CrossSectionSpectrum,
) -> ShearField {
    let mu_norm_sq: f64 = chi.iter().zip(&spectrum.mu).map(|(c, mu)| c * c / mu).sum();
    ShearField {
        a,
        chi,
        coupling,
        mu_norm_sq,
        d_td: a * a * mu_norm_sq,
        chi_sup,
    }
}

pub const SHEAR_FLOOR: f64 = 1e-13;

/// Decomposes a velocity profile given on the spectrum's quadrature nodes.
pub fn decompose_shear(profile: &[f64], spectrum: &CrossSectionSpectrum) -> Result<ShearField> {
    let nq = spectrum.weights.len();
    if profile.len() != nq {
        return Err(LabError::Dimension(format!(
            "profile has {} values, quadrature has {nq} nodes",
            profile.len()
        )));
    }
    let a: f64 = profile
        .iter()
        .zip(&spectrum.weights)
        .map(|(v, w)| v * w)
        .sum();
    if a.abs() < 1e-12 {
        return Err(LabError::ZeroMean);
    }
    let mut chi_nodes: Vec<f64> = profile.iter().map(|v| v / a - 1.0).collect();
    // a constant profile leaves only quadrature rounding in χ
    if chi_nodes.iter().all(|c| c.abs() <= SHEAR_FLOOR) {
        chi_nodes.iter_mut().for_each(|c| *c = 0.0);
    }
    let m = spectrum.modes();
    let psi = &spectrum.psi;
    let w = &spectrum.weights;
    let chi: Vec<f64> = (0..m)
        .map(|n| (0..nq).map(|q| w[q] * chi_nodes[q] * psi[(n, q)]).sum())
        .collect();
    let mut coupling = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let s: f64 = (0..nq)
                .map(|q| w[q] * chi_nodes[q] * psi[(i, q)] * psi[(j, q)])
                .sum();
            coupling[i][j] = s;
            coupling[j][i] = s;
        }
    }
    let chi_sup = chi_nodes.iter().fold(0.0f64, |s, c| s.max(c.abs()));
    Ok(finish(a, chi, coupling, chi_sup, spectrum))
}

/// Built-in shear profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// V ≡ value.
    Plug { value: f64 },
    /// V = mean + Σ_k amps[k-1]·cos(kπ y) along the first coordinate.
    Cosines { mean: f64, amps: Vec<f64> },
    /// Plane Poiseuille flow V = 6·mean·y(1−y).
    Poiseuille { mean: f64 },
}

impl Profile {
    /// V = 1 + cos(πy).
    pub fn cosine() -> Self {
        Profile::Cosines {
            mean: 1.0,
            amps: vec![1.0],
        }
    }

    /// V = 1 + cos(πy) + ½cos(2πy); has nonzero cubic dispersion.
    pub fn cosine2() -> Self {
        Profile::Cosines {
            mean: 1.0,
            amps: vec![1.0, 0.5],
        }
    }

    pub fn eval(&self, p: [f64; 2], width: f64) -> f64 {
        let y = p[0] / width;
        match self {
            Profile::Plug { value } => *value,
            Profile::Cosines { mean, amps } => {
                mean + amps
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * ((k + 1) as f64 * PI * y).cos())
                    .sum::<f64>()
            }
            Profile::Poiseuille { mean } => 6.0 * mean * y * (1.0 - y),
        }
    }

    /// Decomposes against `spectrum`, with ‖χ‖_∞ from a dense sample.
    pub fn field(&self, spectrum: &CrossSectionSpectrum) -> Result<ShearField> {
        let width = spectrum.extent[0];
        let values: Vec<f64> = spectrum
            .nodes
            .iter()
            .map(|p| self.eval(*p, width))
            .collect();
        let mut field = decompose_shear(&values, spectrum)?;
        if field.is_trivial() {
            return Ok(field);
        }
        let dense = 4096;
        let sup = (0..=dense)
            .map(|i| {
                let y = width * i as f64 / dense as f64;
                (self.eval([y, 0.0], width) / field.a - 1.0).abs()
            })
            .fold(field.chi_sup, f64::max);
        field.chi_sup = sup;
        Ok(field)
    }
}

/// ν_td = ν² + A²‖χ‖_μ².
pub fn taylor_viscosity(nu: f64, field: &ShearField) -> f64 {
    nu * nu + field.d_td
}

/// Υ⁻¹χ̌.
pub fn upsilon_inv_chi(field: &ShearField, spectrum: &CrossSectionSpectrum) -> DVector<f64> {
    DVector::from_iterator(
        field.modes(),
        field.chi.iter().zip(&spectrum.mu).map(|(c, mu)| c / mu),
    )
}

/// Cubic dispersion coefficient r in λ₀(κ) = −ν_td κ² + i r κ³ + O(κ⁴).
pub fn dispersion_r(field: &ShearField, spectrum: &CrossSectionSpectrum) -> f64 {
    let y = upsilon_inv_chi(field, spectrum);
    let cy = field.coupling_matrix() * &y;
    -field.a.powi(3) * y.dot(&cy)
}

/// The contraction −A³ χ̌·[χ̃∗(Υ⁻¹χ̌)] without the outer Υ⁻¹; kept for comparison.
pub fn dispersion_r_unweighted(field: &ShearField, spectrum: &CrossSectionSpectrum) -> f64 {
    let y = upsilon_inv_chi(field, spectrum);
    let cy = field.coupling_matrix() * &y;
    -field.a.powi(3) * field.chi_vec().dot(&cy)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct NormBounds {
    pub upsilon_inv: f64,
    pub chi_conv: f64,
}

/// Returns (1/μ₁, ‖χ̃‖₂) and checks ‖χ̃‖₂ ≤ ‖χ‖_∞.
pub fn operator_norm_bounds(
    field: &ShearField,
    spectrum: &CrossSectionSpectrum,
) -> Result<NormBounds> {
    let c = field.coupling_matrix();
    let chi_conv = if c.nrows() == 0 {
        0.0
    } else {
        c.symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |s, e| s.max(e.abs()))
    };
    if chi_conv > field.chi_sup + 1e-8 {
        return Err(LabError::Invalid(format!(
            "coupling norm {chi_conv:.6e} exceeds sup norm {:.6e}: inconsistent shear decomposition",
            field.chi_sup
        )));
    }
    Ok(NormBounds {
        upsilon_inv: 1.0 / spectrum.mu1(),
        chi_conv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(m: usize) -> CrossSectionSpectrum {
        build_spectrum(&CrossSectionSpec::interval(m)).unwrap()
    }

    #[test]
    fn interval_eigenvalues() {
        let s = interval(3);
        for (n, mu) in s.mu.iter().enumerate() {
            let e = ((n + 1) as f64 * PI).powi(2);
            assert!((mu - e).abs() < 1e-12);
        }
        assert!(s.gram_defect() < 1e-10);
    }

    #[test]
    fn square_degeneracy() {
        let s = build_spectrum(&CrossSectionSpec::square(3)).unwrap();
        let pi2 = PI * PI;
        assert!((s.mu[0] - pi2).abs() < 1e-12);
        assert!((s.mu[1] - pi2).abs() < 1e-12);
        assert!((s.mu[2] - 2.0 * pi2).abs() < 1e-12);
        assert_eq!(s.labels, vec![(0, 1), (1, 0), (1, 1)]);
        assert!(s.gram_defect() < 1e-10);
    }

    #[test]
    fn explicit_non_orthonormal_rejected() {
        let base = interval(2);
        let nq = base.weights.len();
        let mut values: Vec<Vec<f64>> = (0..2)
            .map(|n| (0..nq).map(|q| base.psi[(n, q)]).collect())
            .collect();
        // shift ψ₂ toward ψ₁ so that ⟨ψ₁,ψ₂⟩ = 0.01
        for q in 0..nq {
            values[1][q] += 0.01 * base.psi[(0, q)];
        }
        let spec = CrossSectionSpec {
            family: Family::Explicit(ExplicitData {
                mu: base.mu.clone(),
                nodes: base.nodes.clone(),
                weights: base.weights.clone(),
                values,
            }),
            modes: 2,
            resolution: 64,
        };
        assert!(matches!(
            build_spectrum(&spec),
            Err(LabError::NotOrthonormal(_))
        ));
    }

    #[test]
    fn explicit_descending_rejected() {
        assert!(matches!(
            CrossSectionSpectrum::from_eigenvalues(vec![4.0, 1.0]),
            Err(LabError::NotAscending(1))
        ));
    }

    #[test]
    fn plug_flow_has_no_shear() {
        let s = interval(4);
        let f = Profile::Plug { value: 2.0 }.field(&s).unwrap();
        assert!((f.a - 2.0).abs() < 1e-13);
        assert!(f.is_trivial());
        assert_eq!((f.d_td, f.chi_sup), (0.0, 0.0));
    }

    #[test]
    fn zero_mean_rejected() {
        let s = interval(4);
        let v = vec![0.0; s.weights.len()];
        assert!(matches!(decompose_shear(&v, &s), Err(LabError::ZeroMean)));
    }

    #[test]
    fn cosine_profile_oracle() {
        let s = interval(8);
        let f = Profile::cosine().field(&s).unwrap();
        assert!((f.a - 1.0).abs() < 1e-13);
        assert!((f.chi[0] - 1.0 / SQRT_2).abs() < 1e-12);
        for n in 1..8 {
            assert!(f.chi[n].abs() < 1e-12);
        }
        for i in 0..8usize {
            for j in 0..8 {
                let expect = if i.abs_diff(j) == 1 { 0.5 } else { 0.0 };
                assert!((f.coupling[i][j] - expect).abs() < 1e-12, "({i},{j})");
            }
        }
        assert!((f.mu_norm_sq - 1.0 / (2.0 * PI * PI)).abs() < 1e-12);
        assert!((taylor_viscosity(0.1, &f) - (0.01 + 1.0 / (2.0 * PI * PI))).abs() < 1e-12);
        assert!(dispersion_r(&f, &s).abs() < 1e-14);
        let b = operator_norm_bounds(&f, &s).unwrap();
        assert!((b.upsilon_inv - 1.0 / (PI * PI)).abs() < 1e-15);
        assert!((b.chi_conv - (PI / 9.0).cos()).abs() < 1e-12);
        assert!((f.chi_sup - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine2_coupling_oracle() {
        let s = interval(8);
        let f = Profile::cosine2().field(&s).unwrap();
        for i in 1..=8usize {
            for j in 1..=8usize {
                let mut e = 0.0;
                if i.abs_diff(j) == 1 {
                    e += 0.5;
                }
                if i.abs_diff(j) == 2 {
                    e += 0.25;
                }
                if i + j == 2 {
                    e += 0.25;
                }
                assert!((f.coupling[i - 1][j - 1] - e).abs() < 1e-12, "({i},{j})");
            }
        }
        // brute-force triple contraction
        let mut r = 0.0;
        for n in 0..8 {
            for m in 0..8 {
                r += f.chi[n] / s.mu[n] * f.coupling[n][m] * f.chi[m] / s.mu[m];
            }
        }
        assert!((dispersion_r(&f, &s) + r).abs() < 1e-15);
        assert!(dispersion_r(&f, &s).abs() > 1e-4);
    }

    #[test]
    fn viscosity_split_is_additive() {
        let s = interval(8);
        let f = Profile::cosine().field(&s).unwrap();
        let d = taylor_viscosity(0.1, &f) - taylor_viscosity(0.05, &f);
        assert!((d - (0.01 - 0.0025)).abs() < 1e-15);
    }

    #[test]
    fn resynthesis_reproduces_profile() {
        let s = interval(8);
        let p = Profile::cosine2();
        let f = p.field(&s).unwrap();
        let mut c = vec![1.0];
        c.extend(f.chi.iter());
        let chi_nodes = s.synthesize(&c);
        for (q, node) in s.nodes.iter().enumerate() {
            let v = p.eval(*node, 1.0);
            assert!((f.a * chi_nodes[q] - v).abs() < 1e-6);
        }
    }

    #[test]
    fn truncation_convergence_poiseuille() {
        let a = Profile::Poiseuille { mean: 1.0 }
            .field(&interval(16))
            .unwrap();
        let b = Profile::Poiseuille { mean: 1.0 }
            .field(&interval(32))
            .unwrap();
        assert!((a.mu_norm_sq - b.mu_norm_sq).abs() < 1e-6);
    }

    #[test]
    fn parseval_bound_random() {
        use rand::{Rng, SeedableRng};
        let s = interval(16);
        let f = Profile::Poiseuille { mean: 1.0 }.field(&s).unwrap();
        let c = f.coupling_matrix();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let y = DVector::from_fn(16, |_, _| rng.gen_range(-1.0..1.0));
            assert!((&c * &y).norm() <= f.chi_sup * y.norm() + 1e-8);
        }
    }
}
