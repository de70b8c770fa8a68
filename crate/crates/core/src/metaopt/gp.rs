//! Small Gaussian-process regressor on the unit cube: isotropic Matérn 5/2
//! kernel with unit signal variance, lengthscale chosen by marginal
//! likelihood over a fixed grid.

use alloc::vec;
use alloc::vec::Vec;

const SQRT5: f64 = 2.236_067_977_499_79;
const LENGTHSCALES: [f64; 9] = [0.05, 0.1, 0.15, 0.25, 0.4, 0.6, 1.0, 1.6, 2.5];
const NOISE: f64 = 1e-6;

fn matern52(r: f64, lengthscale: f64) -> f64 {
    let s = SQRT5 * r / lengthscale;
    (1.0 + s + s * s / 3.0) * libm::exp(-s)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Lower-triangular Cholesky factor of the row-major `n x n` matrix `a`.
pub(crate) fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = libm::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L y = b` in place.
fn forward(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `L^T x = b` in place.
fn backward(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

pub(crate) struct Gp {
    x: Vec<Vec<f64>>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    lengthscale: f64,
}

impl Gp {
    fn fit_with(x: &[Vec<f64>], y: &[f64], lengthscale: f64) -> Option<(Self, f64)> {
        let n = x.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] = matern52(dist(&x[i], &x[j]), lengthscale);
            }
            k[i * n + i] += NOISE;
        }
        let chol = cholesky(&k, n)?;
        let mut alpha = y.to_vec();
        forward(&chol, n, &mut alpha);
        let fit: f64 = alpha.iter().map(|v| v * v).sum();
        backward(&chol, n, &mut alpha);
        let log_det: f64 = (0..n).map(|i| libm::log(chol[i * n + i])).sum();
        let lml = -0.5 * fit - log_det - 0.5 * n as f64 * libm::log(2.0 * core::f64::consts::PI);
        Some((Self { x: x.to_vec(), chol, alpha, lengthscale }, lml))
    }

    /// Fits to standardized targets `y`, picking the most likely lengthscale.
    pub(crate) fn fit(x: &[Vec<f64>], y: &[f64]) -> Option<Self> {
        let mut best: Option<(Self, f64)> = None;
        for &ls in &LENGTHSCALES {
            if let Some((gp, lml)) = Self::fit_with(x, y, ls) {
                if best.as_ref().map_or(true, |(_, b)| lml > *b) {
                    best = Some((gp, lml));
                }
            }
        }
        best.map(|(gp, _)| gp)
    }

    /// Posterior mean and standard deviation at `p`.
    pub(crate) fn predict(&self, p: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let mut k: Vec<f64> = self.x.iter().map(|x| matern52(dist(x, p), self.lengthscale)).collect();
        let mean = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        forward(&self.chol, n, &mut k);
        let var = 1.0 - k.iter().map(|v| v * v).sum::<f64>();
        (mean, libm::sqrt(var.max(0.0)))
    }

    pub(crate) fn lengthscale(&self) -> f64 {
        self.lengthscale
    }
}

fn normal_pdf(z: f64) -> f64 {
    libm::exp(-0.5 * z * z) / libm::sqrt(2.0 * core::f64::consts::PI)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// Expected improvement over `best` for a maximization problem.
pub(crate) fn expected_improvement(mean: f64, sd: f64, best: f64, xi: f64) -> f64 {
    let gain = mean - best - xi;
    if sd <= 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / sd;
    gain * normal_cdf(z) + sd * normal_pdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs_the_matrix() {
        let a = [4.0, 12.0, -16.0, 12.0, 37.0, -43.0, -16.0, -43.0, 98.0];
        let l = cholesky(&a, 3).unwrap();
        assert_eq!(l, vec![2.0, 0.0, 0.0, 6.0, 1.0, 0.0, -8.0, 5.0, 3.0]);
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn triangular_solves_invert_the_factor() {
        let a = [4.0, 12.0, -16.0, 12.0, 37.0, -43.0, -16.0, -43.0, 98.0];
        let l = cholesky(&a, 3).unwrap();
        let mut x = [1.0, 2.0, 3.0];
        forward(&l, 3, &mut x);
        backward(&l, 3, &mut x);
        for i in 0..3 {
            let row: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((row - [1.0, 2.0, 3.0][i]).abs() < 1e-9);
        }
    }

    #[test]
    fn posterior_interpolates_observations() {
        let x = vec![vec![0.1], vec![0.5], vec![0.9]];
        let y = [-1.0, 1.0, 0.0];
        let gp = Gp::fit(&x, &y).unwrap();
        for (p, t) in x.iter().zip(y) {
            let (m, s) = gp.predict(p);
            assert!((m - t).abs() < 1e-2, "{m} vs {t}");
            assert!(s < 0.05);
        }
        let (_, far) = gp.predict(&[0.3]);
        assert!(far > 0.0);
    }

    #[test]
    fn kernel_and_normal_helpers() {
        assert_eq!(matern52(0.0, 0.3), 1.0);
        assert!(matern52(0.5, 0.3) < matern52(0.1, 0.3));
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
        assert!((expected_improvement(0.0, 1.0, 0.0, 0.0) - normal_pdf(0.0)).abs() < 1e-15);
        assert_eq!(expected_improvement(2.0, 0.0, 1.0, 0.0), 1.0);
    }
}
