//! Weighted Gaussian kernel density estimation of a particle law.
//!
//! `μ̂(x) = Σ_i w_i N(x; c_i, h² I)`. Evaluation is exact O(N) per query
//! point, carried out in log space so that `log μ̂` and `∇log μ̂` stay finite
//! far from the particles.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::Ensemble;
use crate::real::{density_floor, log_sum_exp, Real};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule<F> {
    /// `h = σ̂ (4 / ((d + 2) N))^{1/(d+4)}`, σ̂ the weighted per-coordinate
    /// standard deviation averaged over coordinates.
    #[default]
    Silverman,
    Fixed(F),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeEstimator<F> {
    dim: usize,
    centers: Vec<F>,
    log_weights: Vec<F>,
    bandwidth: F,
    bandwidth_fallback: bool,
}

/// `log μ̂(x)` and `∇log μ̂(x)` at one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeEval<F> {
    pub log_density: F,
    pub grad_log: Vec<F>,
}

impl<F: Real> KdeEstimator<F> {
    /// Estimator with explicit centres (row-major `N × dim`), weights and bandwidth.
    pub fn new(centers: Vec<F>, dim: usize, weights: &[F], bandwidth: F) -> Result<Self> {
        if dim == 0 || centers.is_empty() || centers.len() != weights.len() * dim {
            return Err(Error::InvalidInput(format!(
                "{} centre coordinates for {} weights in dimension {dim}",
                centers.len(),
                weights.len()
            )));
        }
        if !(bandwidth > F::zero()) || !bandwidth.is_finite() {
            return Err(Error::InvalidInput(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        if weights.iter().any(|&w| !(w >= F::zero())) {
            return Err(Error::InvalidInput("kernel weights must be non-negative".into()));
        }
        let total: F = weights.iter().copied().sum();
        if (total - F::one()).abs() > F::lit(1e-9) {
            return Err(Error::InvalidInput(format!("kernel weights sum to {total}, not 1")));
        }
        Ok(Self {
            dim,
            centers,
            log_weights: weights.iter().map(|w| (*w / total).ln()).collect(),
            bandwidth,
            bandwidth_fallback: false,
        })
    }

    /// Fits to an ensemble using its normalised weights.
    pub fn fit(ens: &Ensemble<F>, rule: BandwidthRule<F>) -> Result<Self> {
        let (bandwidth, fallback) = match rule {
            BandwidthRule::Fixed(h) => (h, false),
            BandwidthRule::Silverman => {
                let d = F::from_usize(ens.dim()).unwrap();
                let n = F::from_usize(ens.len()).unwrap();
                let sigma = ens.weighted_var().iter().map(|v| v.max(F::zero()).sqrt()).sum::<F>() / d;
                let two = F::lit(2.0);
                let four = F::lit(4.0);
                if sigma > F::zero() && sigma.is_finite() {
                    (sigma * (four / ((d + two) * n)).powf((d + four).recip()), false)
                } else {
                    warn!("zero particle spread; Silverman bandwidth falls back to h = 1");
                    (F::one(), true)
                }
            }
        };
        let mut est = Self::new(ens.positions().to_vec(), ens.dim(), &ens.weights(), bandwidth)?;
        est.log_weights = ens.log_weights().to_vec();
        est.bandwidth_fallback = fallback;
        Ok(est)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn bandwidth(&self) -> F {
        self.bandwidth
    }

    /// True when the Silverman rule met zero spread and fell back to `h = 1`.
    #[inline]
    pub fn bandwidth_fallback(&self) -> bool {
        self.bandwidth_fallback
    }

    pub fn weights(&self) -> Vec<F> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    fn log_normaliser(&self) -> F {
        let d = F::from_usize(self.dim).unwrap();
        -F::lit(0.5) * d * (F::lit(2.0) * F::PI() * self.bandwidth * self.bandwidth).ln()
    }

    fn check(&self, x: &[F]) -> Result<()> {
        if x.len() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            })
        }
    }

    /// `log w_i − |x − c_i|² / (2h²)` for every centre.
    fn kernel_exponents(&self, x: &[F]) -> Vec<F> {
        let inv = (F::lit(2.0) * self.bandwidth * self.bandwidth).recip();
        self.centers
            .chunks_exact(self.dim)
            .zip(&self.log_weights)
            .map(|(c, &lw)| {
                let sq: F = c.iter().zip(x).map(|(&a, &b)| (a - b) * (a - b)).sum();
                lw - sq * inv
            })
            .collect()
    }

    pub fn log_density(&self, x: &[F]) -> Result<F> {
        self.check(x)?;
        Ok(log_sum_exp(&self.kernel_exponents(x)) + self.log_normaliser())
    }

    /// `μ̂(x)`, never below [`density_floor`] even where `exp` underflows.
    pub fn density(&self, x: &[F]) -> Result<F> {
        Ok(self.log_density(x)?.exp().max(density_floor()))
    }

    /// `log μ̂(x)` together with `∇log μ̂(x) = Σ_i r_i (c_i − x) / h²`, where `r_i`
    /// are the kernel responsibilities at `x`.
    pub fn evaluate(&self, x: &[F]) -> Result<KdeEval<F>> {
        self.check(x)?;
        let exps = self.kernel_exponents(x);
        let lse = log_sum_exp(&exps);
        let inv_h2 = (self.bandwidth * self.bandwidth).recip();
        let mut grad_log = vec![F::zero(); self.dim];
        for (c, &e) in self.centers.chunks_exact(self.dim).zip(&exps) {
            let r = (e - lse).exp();
            if r == F::zero() {
                continue;
            }
            for ((g, &ci), &xi) in grad_log.iter_mut().zip(c).zip(x) {
                *g = *g + r * (ci - xi) * inv_h2;
            }
        }
        Ok(KdeEval {
            log_density: lse + self.log_normaliser(),
            grad_log,
        })
    }

    /// `∇μ̂(x) = μ̂(x) ∇log μ̂(x)`.
    pub fn grad(&self, x: &[F]) -> Result<Vec<F>> {
        let eval = self.evaluate(x)?;
        let density = eval.log_density.exp();
        Ok(eval.grad_log.iter().map(|&g| density * g).collect())
    }

    pub fn grad_log(&self, x: &[F]) -> Result<Vec<F>> {
        Ok(self.evaluate(x)?.grad_log)
    }

    /// [`evaluate`](Self::evaluate) at every point of a row-major buffer.
    pub fn evaluate_batch(&self, points: &[F]) -> Result<Vec<KdeEval<F>>> {
        if !points.len().is_multiple_of(self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: points.len() % self.dim,
            });
        }
        points.par_chunks_exact(self.dim).map(|x| self.evaluate(x)).collect()
    }

    /// `log μ̂` at every point of a row-major buffer.
    pub fn log_density_batch(&self, points: &[F]) -> Result<Vec<F>> {
        if !points.len().is_multiple_of(self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: points.len() % self.dim,
            });
        }
        points.par_chunks_exact(self.dim).map(|x| self.log_density(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::GaussianLaw;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    const INV_ROOT_TWO_PI: f64 = 0.398_942_280_401_432_7;

    fn fixed(centers: Vec<f64>, dim: usize, weights: &[f64], h: f64) -> KdeEstimator<f64> {
        KdeEstimator::new(centers, dim, weights, h).unwrap()
    }

    #[test]
    fn single_kernel_at_its_centre() {
        let ens = Ensemble::from_positions(vec![0.0], 1, 0).unwrap();
        let est = KdeEstimator::fit(&ens, BandwidthRule::Fixed(1.0)).unwrap();
        assert_abs_diff_eq!(est.density(&[0.0]).unwrap(), 0.398942, epsilon = 1e-6);
        assert_abs_diff_eq!(est.density(&[0.0]).unwrap(), INV_ROOT_TWO_PI, epsilon = 1e-15);
        // derivative of the standard normal pdf at 1
        let g = est.grad(&[1.0]).unwrap();
        assert_abs_diff_eq!(g[0], -0.241971, epsilon = 1e-6);
        assert_abs_diff_eq!(g[0], -INV_ROOT_TWO_PI * (-0.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn two_symmetric_kernels() {
        let ens = Ensemble::from_positions(vec![-1.0, 1.0], 1, 0).unwrap();
        let est = KdeEstimator::fit(&ens, BandwidthRule::Fixed(1.0)).unwrap();
        assert_abs_diff_eq!(est.density(&[0.0]).unwrap(), 0.241971, epsilon = 1e-6);
        assert_abs_diff_eq!(est.grad(&[0.0]).unwrap()[0], 0.0, epsilon = 1e-16);
        for x in [0.3, 1.2, 4.0] {
            assert_abs_diff_eq!(est.density(&[x]).unwrap(), est.density(&[-x]).unwrap(), epsilon = 1e-16);
        }
    }

    #[test]
    fn silverman_on_standard_normal_sample() {
        let law = GaussianLaw::univariate(0.0, 1.0).unwrap();
        let ens = Ensemble::sample_gaussian(&law, 10_000, 11).unwrap();
        let est = KdeEstimator::fit(&ens, BandwidthRule::Silverman).unwrap();
        assert!(!est.bandwidth_fallback());
        // 1.06 N^{-1/5} for unit spread
        assert!((est.bandwidth() - 1.06 * 10_000f64.powf(-0.2)).abs() < 0.01);
        assert_abs_diff_eq!(est.density(&[0.0]).unwrap(), 0.39894, epsilon = 0.03);
    }

    #[test]
    fn zero_spread_falls_back_to_unit_bandwidth() {
        let ens = Ensemble::from_positions(vec![2.0, 2.0, 2.0], 1, 0).unwrap();
        let est = KdeEstimator::fit(&ens, BandwidthRule::Silverman).unwrap();
        assert!(est.bandwidth_fallback());
        assert_eq!(est.bandwidth(), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(KdeEstimator::new(vec![0.0, 1.0], 1, &[0.5, 0.5], 0.0).is_err());
        assert!(KdeEstimator::new(vec![0.0, 1.0], 1, &[0.5, 0.4], 1.0).is_err());
        assert!(KdeEstimator::new(vec![0.0, 1.0], 1, &[1.0], 1.0).is_err());
        let est = fixed(vec![0.0, 1.0], 2, &[1.0], 1.0);
        assert!(matches!(est.density(&[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn integrates_to_one_and_is_positive() {
        let est = fixed(vec![-2.0, 0.5, 3.0], 1, &[0.2, 0.5, 0.3], 0.4);
        let n = 40_001;
        let (lo, hi) = (-20.0, 20.0);
        let h = (hi - lo) / (n - 1) as f64;
        let mut total = 0.0;
        for i in 0..n {
            let d = est.density(&[lo + i as f64 * h]).unwrap();
            assert!(d > 0.0);
            total += if i == 0 || i == n - 1 { 0.5 * d } else { d };
        }
        assert_abs_diff_eq!(total * h, 1.0, epsilon = 1e-10);
        // far tails stay finite in log space
        let far = est.evaluate(&[1e3]).unwrap();
        assert!(far.log_density.is_finite());
        assert_abs_diff_eq!(far.grad_log[0], (3.0 - 1e3) / 0.16, epsilon = 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let centers: Vec<f64> = (0..40).map(|_| rng.random_range(-3.0..3.0)).collect();
        let raw: Vec<f64> = (0..20).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let est = fixed(centers, 2, &weights, 0.7);
        let h = 1e-4;
        for _ in 0..50 {
            let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
            let g = est.grad(&x).unwrap();
            let gl = est.grad_log(&x).unwrap();
            let dens = est.density(&x).unwrap();
            for k in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let fd = (est.density(&xp).unwrap() - est.density(&xm).unwrap()) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6, "{fd} vs {}", g[k]);
                assert_abs_diff_eq!(gl[k], g[k] / dens, epsilon = 1e-9 * (1.0 + gl[k].abs()));
            }
        }
    }

    #[test]
    fn shift_equivariance() {
        let centers = vec![-1.3, 0.2, 0.4, 2.2, 1.1, -0.7];
        let weights = [0.2, 0.3, 0.5];
        let est = fixed(centers.clone(), 1, &[0.1, 0.2, 0.3, 0.1, 0.2, 0.1], 0.5);
        let est2 = fixed(centers.clone(), 2, &weights, 0.5);
        let shift = [3.7, -1.9];
        let moved1 = fixed(
            centers.iter().map(|c| c + shift[0]).collect(),
            1,
            &[0.1, 0.2, 0.3, 0.1, 0.2, 0.1],
            0.5,
        );
        let moved2 = fixed(
            centers
                .chunks(2)
                .flat_map(|c| [c[0] + shift[0], c[1] + shift[1]])
                .collect(),
            2,
            &weights,
            0.5,
        );
        for x in [-2.0, 0.0, 0.9, 2.5] {
            assert_abs_diff_eq!(
                est.density(&[x]).unwrap(),
                moved1.density(&[x + shift[0]]).unwrap(),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                est.grad(&[x]).unwrap()[0],
                moved1.grad(&[x + shift[0]]).unwrap()[0],
                epsilon = 1e-12
            );
            let y = [x, -x / 2.0];
            let ys = [y[0] + shift[0], y[1] + shift[1]];
            assert_abs_diff_eq!(est2.density(&y).unwrap(), moved2.density(&ys).unwrap(), epsilon = 1e-12);
            let (a, b) = (est2.grad(&y).unwrap(), moved2.grad(&ys).unwrap());
            assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-12);
            assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn batch_matches_pointwise() {
        let est = fixed(vec![-1.0, 0.0, 2.0], 1, &[0.3, 0.3, 0.4], 0.8);
        let pts = [-3.0, 0.1, 1.5, 9.0];
        let batch = est.evaluate_batch(&pts).unwrap();
        let logs = est.log_density_batch(&pts).unwrap();
        for ((p, b), l) in pts.iter().zip(&batch).zip(&logs) {
            assert_eq!(*b, est.evaluate(&[*p]).unwrap());
            assert_eq!(*l, b.log_density);
        }
    }
}
