use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

/// Periodic uniform grid x_i = x0 + i·dx, i = 0..n.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UniformGrid {
    pub x0: f64,
    pub dx: f64,
    pub n: usize,
}

impl UniformGrid {
    /// Centered grid on [−L/2, L/2) with n points.
    pub fn centered(length: f64, n: usize) -> Self {
        UniformGrid {
            x0: -0.5 * length,
            dx: length / n as f64,
            n,
        }
    }

    pub fn length(&self) -> f64 {
        self.dx * self.n as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        UniformGrid {
            x0: self.x0 * s,
            dx: self.dx * s,
            n: self.n,
        }
    }

    /// Wavenumber of FFT bin j (Nyquist bin reported as negative).
    pub fn wavenumber(&self, j: usize) -> f64 {
        let l = self.length();
        let jj = if j < self.n / 2 {
            j as f64
        } else {
            j as f64 - self.n as f64
        };
        2.0 * std::f64::consts::PI * jj / l
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.dx
    }
}

pub fn fft(data: &mut [Complex64]) {
    FftPlanner::new().plan_fft_forward(data.len()).process(data);
}

/// Unnormalized inverse transform.
pub fn ifft(data: &mut [Complex64]) {
    FftPlanner::new().plan_fft_inverse(data.len()).process(data);
}

fn spectrum(f: &[f64]) -> Vec<Complex64> {
    let mut c: Vec<Complex64> = f.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    fft(&mut c);
    c
}

/// Spectral derivative of order `order` of a localized function sampled on `grid`.
pub fn derivative(f: &[f64], grid: &UniformGrid, order: u32) -> Vec<f64> {
    let n = f.len();
    let mut c = spectrum(f);
    for (j, z) in c.iter_mut().enumerate() {
        if n % 2 == 0 && j == n / 2 && order % 2 == 1 {
            *z = Complex64::new(0.0, 0.0);
            continue;
        }
        let ik = Complex64::new(0.0, grid.wavenumber(j));
        *z *= ik.powu(order);
    }
    ifft(&mut c);
    c.iter().map(|z| z.re / n as f64).collect()
}

/// Trigonometric interpolation of a localized function onto arbitrary points;
/// points outside the source period evaluate to zero.
pub fn resample(f: &[f64], from: &UniformGrid, points: &[f64]) -> Vec<f64> {
    let n = f.len();
    let c = spectrum(f);
    let lo = from.x0;
    let hi = from.x0 + from.length();
    let half = n / 2;
    points
        .iter()
        .map(|&x| {
            if x < lo - 1e-12 || x > hi - from.dx + 1e-12 {
                return 0.0;
            }
            let s = x - from.x0;
            let mut acc = c[0].re;
            for j in 1..half {
                let k = 2.0 * std::f64::consts::PI * j as f64 / from.length();
                let e = Complex64::from_polar(1.0, k * s);
                acc += 2.0 * (c[j] * e).re;
            }
            if n % 2 == 0 {
                let k = std::f64::consts::PI * n as f64 / from.length();
                acc += c[half].re * (k * s).cos();
            } else {
                let k = 2.0 * std::f64::consts::PI * half as f64 / from.length();
                acc += 2.0 * (c[half] * Complex64::from_polar(1.0, k * s)).re;
            }
            acc / n as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(x: f64) -> f64 {
        (-x * x).exp()
    }

    #[test]
    fn derivative_of_gaussian() {
        let g = UniformGrid::centered(20.0, 256);
        let f: Vec<f64> = g.points().iter().map(|x| gauss(*x)).collect();
        let d = derivative(&f, &g, 1);
        let d2 = derivative(&f, &g, 2);
        for (i, x) in g.points().iter().enumerate() {
            assert!((d[i] + 2.0 * x * gauss(*x)).abs() < 1e-12);
            assert!((d2[i] - (4.0 * x * x - 2.0) * gauss(*x)).abs() < 1e-11);
        }
    }

    #[test]
    fn resample_round_trip() {
        let g = UniformGrid::centered(20.0, 255);
        let f: Vec<f64> = g.points().iter().map(|x| gauss(*x - 0.3)).collect();
        let targets: Vec<f64> = (0..101).map(|i| -4.0 + 0.0793 * i as f64).collect();
        let r = resample(&f, &g, &targets);
        for (x, v) in targets.iter().zip(&r) {
            assert!((v - gauss(x - 0.3)).abs() < 1e-12);
        }
        let g2 = UniformGrid::centered(20.0, 256);
        let f2: Vec<f64> = g2.points().iter().map(|x| gauss(*x)).collect();
        let back = resample(&f2, &g2, &g2.points());
        for (a, b) in back.iter().zip(&f2) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn wavenumbers_are_symmetric() {
        let g = UniformGrid::centered(2.0 * std::f64::consts::PI, 8);
        let k: Vec<f64> = (0..8).map(|j| g.wavenumber(j)).collect();
        assert_eq!(k, vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
    }
}
