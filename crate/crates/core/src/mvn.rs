//! Multivariate normal probabilities of hyper-rectangles.
//!
//! Separation of variables: with `Sigma = L L'` the rectangle probability
//! becomes an integral over the unit cube of a product of one-dimensional
//! normal interval probabilities, each conditioned on the variables before
//! it. The last variable is integrated in closed form, and the remaining
//! `d - 1` dimensions are estimated with a randomly shifted Richtmyer
//! sequence and the baker's (tent) periodization. The spread across shifts
//! gives the error estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{PmdError, Result};

/// Pivots below this are treated as zero conditional variance.
const ZERO_PIVOT: f64 = 1e-12;
/// Pivots below `-NEGATIVE_PIVOT` mean the matrix is not positive
/// semidefinite.
const NEGATIVE_PIVOT: f64 = 1e-10;
/// Multiplier on the standard error of the mean across shifts.
const ERROR_FACTOR: f64 = 3.0;
const INITIAL_POINTS: usize = 64;

/// Axis-aligned box; edges may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Rectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(PmdError::Dimension(format!(
                "rectangle bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(j) = (0..lower.len()).find(|&j| !(lower[j] <= upper[j])) {
            return Err(PmdError::InvalidArgument(format!(
                "rectangle lower bound {} exceeds upper bound {} on axis {j}",
                lower[j], upper[j]
            )));
        }
        Ok(Self { lower, upper })
    }

    /// Unit-width cell centered on an integer point.
    pub fn cell(center: &[usize]) -> Self {
        Self {
            lower: center.iter().map(|&c| c as f64 - 0.5).collect(),
            upper: center.iter().map(|&c| c as f64 + 0.5).collect(),
        }
    }

    /// Lower orthant `(-inf, x + 0.5]` per axis.
    pub fn orthant(corner: &[usize]) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; corner.len()],
            upper: corner.iter().map(|&c| c as f64 + 0.5).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnOptions {
    /// Target absolute error.
    pub tol: f64,
    /// Number of independent random shifts.
    pub shifts: usize,
    /// Largest number of sequence points per shift.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for MvnOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            shifts: 8,
            max_points: 1 << 14,
            seed: 0,
        }
    }
}

/// A probability with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnEstimate {
    pub value: f64,
    pub error: f64,
    /// False when the point budget ran out before `error <= tol`.
    pub converged: bool,
    /// True when a zero-variance direction was collapsed.
    pub degenerate: bool,
}

/// A normal law with its Cholesky factor, reusable across rectangles.
#[derive(Debug, Clone)]
pub struct MvnModel {
    mu: Vec<f64>,
    dim: usize,
    /// Row-major lower-triangular factor; zero diagonal marks a collapsed
    /// direction.
    chol: Vec<f64>,
    degenerate: bool,
}

impl MvnModel {
    /// `sigma` is row-major `d x d`.
    pub fn new(mu: &[f64], sigma: &[f64]) -> Result<Self> {
        let d = mu.len();
        if sigma.len() != d * d {
            return Err(PmdError::Dimension(format!(
                "covariance has {} entries, expected {}",
                sigma.len(),
                d * d
            )));
        }
        let scale = (0..d).map(|j| sigma[j * d + j].abs()).fold(1.0, f64::max);
        for j in 0..d {
            for k in 0..j {
                if (sigma[j * d + k] - sigma[k * d + j]).abs() > 1e-10 * scale {
                    return Err(PmdError::Covariance(format!(
                        "not symmetric at ({j}, {k})"
                    )));
                }
            }
        }
        let mut chol = vec![0.0f64; d * d];
        let mut degenerate = false;
        for k in 0..d {
            let pivot = sigma[k * d + k] - (0..k).map(|l| chol[k * d + l].powi(2)).sum::<f64>();
            if pivot < -NEGATIVE_PIVOT * scale {
                return Err(PmdError::Covariance(format!(
                    "not positive semidefinite (pivot {pivot:e} at {k})"
                )));
            }
            if pivot < ZERO_PIVOT {
                degenerate = true;
                continue;
            }
            let diag = pivot.sqrt();
            chol[k * d + k] = diag;
            for i in k + 1..d {
                let s = sigma[i * d + k]
                    - (0..k).map(|l| chol[i * d + l] * chol[k * d + l]).sum::<f64>();
                chol[i * d + k] = s / diag;
            }
        }
        Ok(Self {
            mu: mu.to_vec(),
            dim: d,
            chol,
            degenerate,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// `P(Z in rect)`.
    pub fn rect_prob(&self, rect: &Rectangle, opts: &MvnOptions) -> Result<MvnEstimate> {
        if rect.dim() != self.dim {
            return Err(PmdError::Dimension(format!(
                "rectangle has {} axes, normal has {}",
                rect.dim(),
                self.dim
            )));
        }
        let d = self.dim;
        let a: Vec<f64> = rect.lower.iter().zip(&self.mu).map(|(l, m)| l - m).collect();
        let b: Vec<f64> = rect.upper.iter().zip(&self.mu).map(|(u, m)| u - m).collect();

        // Sampled directions: every non-collapsed axis except a trailing one,
        // which is integrated exactly.
        let mut sampled: Vec<usize> = (0..d).filter(|&k| self.chol[k * d + k] > 0.0).collect();
        if sampled.last() == Some(&(d - 1)) {
            sampled.pop();
        }
        let ns = sampled.len();
        let estimate = |value: f64, error: f64, converged: bool| MvnEstimate {
            value: value.clamp(0.0, 1.0),
            error,
            converged,
            degenerate: self.degenerate,
        };
        if ns == 0 {
            let v = self.integrand(&a, &b, &[], &mut vec![0.0; d]);
            return Ok(estimate(v, 0.0, true));
        }

        let gen: Vec<f64> = first_primes(ns).iter().map(|&p| (p as f64).sqrt().fract()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let shifts: Vec<Vec<f64>> = (0..opts.shifts.max(2))
            .map(|_| (0..ns).map(|_| rng.random::<f64>()).collect())
            .collect();
        let mut sums = vec![0.0; shifts.len()];
        let mut w = vec![0.0; ns];
        let mut y = vec![0.0; d];
        let mut done = 0usize;
        let mut target = INITIAL_POINTS.min(opts.max_points.max(1));
        loop {
            for (s, shift) in shifts.iter().enumerate() {
                for k in done + 1..=target {
                    for (t, wt) in w.iter_mut().enumerate() {
                        let u = (k as f64 * gen[t] + shift[t]).fract();
                        *wt = 1.0 - (2.0 * u - 1.0).abs();
                    }
                    sums[s] += self.integrand(&a, &b, &w, &mut y);
                }
            }
            done = target;
            let means: Vec<f64> = sums.iter().map(|s| s / done as f64).collect();
            let r = means.len() as f64;
            let mean = means.iter().sum::<f64>() / r;
            let var = means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
            let error = ERROR_FACTOR * (var / r).sqrt();
            if error <= opts.tol {
                return Ok(estimate(mean, error, true));
            }
            if done >= opts.max_points {
                return Ok(estimate(mean, error, false));
            }
            target = (2 * done).min(opts.max_points);
        }
    }

    /// Product of conditional interval probabilities for one point `w` of
    /// the unit cube (one coordinate per sampled axis).
    fn integrand(&self, a: &[f64], b: &[f64], w: &[f64], y: &mut [f64]) -> f64 {
        let d = self.dim;
        let mut f = 1.0;
        let mut next = 0;
        for k in 0..d {
            let row = &self.chol[k * d..k * d + k];
            let t: f64 = row.iter().zip(&y[..k]).map(|(c, v)| c * v).sum();
            let diag = self.chol[k * d + k];
            if diag == 0.0 {
                if t < a[k] || t > b[k] {
                    return 0.0;
                }
                y[k] = 0.0;
                continue;
            }
            let lo = phi((a[k] - t) / diag);
            let hi = phi((b[k] - t) / diag);
            let e = hi - lo;
            if e <= 0.0 {
                return 0.0;
            }
            f *= e;
            if next < w.len() {
                y[k] = phi_inv(lo + w[next] * e);
                next += 1;
            }
        }
        f
    }
}

/// `P(Z in rect)` for `Z ~ N(mu, sigma)`.
pub fn mvn_rect_prob(
    mu: &[f64],
    sigma: &[f64],
    rect: &Rectangle,
    opts: &MvnOptions,
) -> Result<MvnEstimate> {
    MvnModel::new(mu, sigma)?.rect_prob(rect, opts)
}

/// Standard normal cdf.
pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal quantile, clamped away from `0` and `1`.
pub fn phi_inv(p: f64) -> f64 {
    let p = p.clamp(1e-300, 1.0 - 1e-16);
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut k = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|&&p| p * p <= k).all(|&p| k % p != 0) {
            primes.push(k);
        }
        k += 1;
    }
    primes
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn central_interval_1d() {
        let r = Rectangle::new(vec![-1.96], vec![1.96]).unwrap();
        let e = mvn_rect_prob(&[0.0], &[1.0], &r, &MvnOptions::default()).unwrap();
        assert_abs_diff_eq!(e.value, 0.95, epsilon = 1e-3);
        assert!(e.converged);
        assert_eq!(e.error, 0.0);
    }

    #[test]
    fn diagonal_factorizes() {
        let r = Rectangle::new(vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap();
        let e = mvn_rect_prob(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0], &r, &MvnOptions::default())
            .unwrap();
        let one = phi(0.5) - phi(-0.5);
        assert_abs_diff_eq!(one, 0.382924922548026, epsilon = 1e-12);
        assert_abs_diff_eq!(e.value, one * one, epsilon = 1e-6);
    }

    #[test]
    fn correlated_orthant() {
        let r = Rectangle::new(vec![0.0, 0.0], vec![INF, INF]).unwrap();
        let e = mvn_rect_prob(&[0.0, 0.0], &[1.0, 0.5, 0.5, 1.0], &r, &MvnOptions::default())
            .unwrap();
        let expect = 0.25 + 0.5f64.asin() / (2.0 * std::f64::consts::PI);
        assert_abs_diff_eq!(e.value, expect, epsilon = 1e-4);
        assert_abs_diff_eq!(expect, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn trivariate_orthant() {
        // P(all > 0) for equicorrelation rho: 1/8 + 3 asin(rho) / (4 pi).
        let rho: f64 = 0.3;
        let s = [1.0, rho, rho, rho, 1.0, rho, rho, rho, 1.0];
        let r = Rectangle::new(vec![0.0; 3], vec![INF; 3]).unwrap();
        let e = mvn_rect_prob(&[0.0; 3], &s, &r, &MvnOptions::default()).unwrap();
        let expect = 0.125 + 3.0 * rho.asin() / (4.0 * std::f64::consts::PI);
        assert_abs_diff_eq!(e.value, expect, epsilon = 1e-5);
    }

    #[test]
    fn zero_variance_collapses() {
        let s = [1.0, 0.0, 0.0, 0.0];
        let inside = Rectangle::new(vec![-INF, 1.5], vec![0.0, 2.5]).unwrap();
        let e = mvn_rect_prob(&[0.0, 2.0], &s, &inside, &MvnOptions::default()).unwrap();
        assert!(e.degenerate);
        assert_abs_diff_eq!(e.value, 0.5, epsilon = 1e-12);
        let outside = Rectangle::new(vec![-INF, 2.5], vec![0.0, 3.5]).unwrap();
        let e = mvn_rect_prob(&[0.0, 2.0], &s, &outside, &MvnOptions::default()).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn perfectly_correlated_pair() {
        // Z2 = Z1: P(Z1 in [-1, 1], Z2 in [0, 2]) = P(0 <= Z1 <= 1).
        let s = [1.0, 1.0, 1.0, 1.0];
        let r = Rectangle::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let opts = MvnOptions {
            tol: 1e-4,
            ..MvnOptions::default()
        };
        let e = mvn_rect_prob(&[0.0, 0.0], &s, &r, &opts).unwrap();
        assert!(e.degenerate);
        assert_abs_diff_eq!(e.value, phi(1.0) - 0.5, epsilon = 1e-3);
    }

    #[test]
    fn rejects_bad_covariances() {
        let r = Rectangle::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let o = MvnOptions::default();
        assert!(matches!(
            mvn_rect_prob(&[0.0, 0.0], &[1.0, 0.2, 0.3, 1.0], &r, &o),
            Err(PmdError::Covariance(_))
        ));
        assert!(matches!(
            mvn_rect_prob(&[0.0, 0.0], &[1.0, 2.0, 2.0, 1.0], &r, &o),
            Err(PmdError::Covariance(_))
        ));
        assert!(matches!(
            mvn_rect_prob(&[0.0], &[1.0, 0.0, 0.0, 1.0], &r, &o),
            Err(PmdError::Dimension(_))
        ));
        assert!(Rectangle::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn split_rectangle_is_additive() {
        let s = [2.0, -0.7, 0.3, -0.7, 1.5, 0.2, 0.3, 0.2, 1.0];
        let mu = [0.1, -0.2, 0.3];
        let o = MvnOptions::default();
        let whole = Rectangle::new(vec![-1.0, -1.0, -0.5], vec![1.0, 0.5, 1.0]).unwrap();
        let left = Rectangle::new(vec![-1.0, -1.0, -0.5], vec![0.2, 0.5, 1.0]).unwrap();
        let right = Rectangle::new(vec![0.2, -1.0, -0.5], vec![1.0, 0.5, 1.0]).unwrap();
        let w = mvn_rect_prob(&mu, &s, &whole, &o).unwrap();
        let l = mvn_rect_prob(&mu, &s, &left, &o).unwrap();
        let r = mvn_rect_prob(&mu, &s, &right, &o).unwrap();
        assert_abs_diff_eq!(w.value, l.value + r.value, epsilon = 2.0 * o.tol);
    }

    #[test]
    fn same_seed_same_answer() {
        let s = [1.0, 0.4, 0.4, 1.0];
        let r = Rectangle::new(vec![-0.3, -1.0], vec![0.8, 0.4]).unwrap();
        let o = MvnOptions {
            seed: 11,
            ..MvnOptions::default()
        };
        let a = mvn_rect_prob(&[0.0; 2], &s, &r, &o).unwrap();
        let b = mvn_rect_prob(&[0.0; 2], &s, &r, &o).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.77, 0.999] {
            assert_abs_diff_eq!(phi(phi_inv(p)), p, epsilon = 1e-12 + 1e-9 * p);
        }
    }
}
