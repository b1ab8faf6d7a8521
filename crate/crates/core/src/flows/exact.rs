//! Closed-form Fisher–Rao flow of the KL divergence between Gaussians.
//!
//! The flow is geometric tempering, `μ_t ∝ π^λ μ_0^(1−λ)` with `λ = 1 − e^{−t}`,
//! so precisions mix linearly: `Τ_t = λ Τ_π + (1−λ) Τ_0` and
//! `m_t = Τ_t⁻¹ (λ Τ_π m_π + (1−λ) Τ_0 m_0)`.

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw<F> {
    mean: Vec<F>,
    cov: Matrix<F>,
}

impl<F: Real> GaussianLaw<F> {
    pub fn new(mean: Vec<F>, cov: Matrix<F>) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: cov.dim(),
            });
        }
        Cholesky::new(&cov)?;
        Ok(Self { mean, cov })
    }

    pub fn univariate(mean: F, var: F) -> Result<Self> {
        if !(var > F::zero()) {
            return Err(Error::InvalidInput(format!("variance must be positive, got {var}")));
        }
        Self::new(vec![mean], Matrix::diagonal(&[var]))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[F] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix<F> {
        &self.cov
    }

    pub fn var(&self) -> Vec<F> {
        self.cov.diag()
    }
}

/// Exact Fisher–Rao KL flow from `mu0` towards `pi` after time `t`.
pub fn exact_fr_gaussian<F: Real>(mu0: &GaussianLaw<F>, pi: &GaussianLaw<F>, t: F) -> Result<GaussianLaw<F>> {
    if !(t >= F::zero()) {
        return Err(Error::InvalidInput(format!("time must be >= 0, got {t}")));
    }
    if mu0.dim() != pi.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu0.dim(),
            got: pi.dim(),
        });
    }
    if t == F::zero() {
        return Ok(mu0.clone());
    }
    let lambda = -(-t).exp_m1();
    let keep = F::one() - lambda;
    let prec0 = Cholesky::new(&mu0.cov)?.inverse();
    let prec_pi = Cholesky::new(&pi.cov)?.inverse();
    let prec_t = prec_pi.scale(lambda).add(&prec0.scale(keep));
    let rhs: Vec<F> = prec_pi
        .mul_vec(&pi.mean)
        .iter()
        .zip(prec0.mul_vec(&mu0.mean))
        .map(|(&a, b)| lambda * a + keep * b)
        .collect();
    let chol_t = Cholesky::new(&prec_t)?;
    let mean = chol_t.solve(&rhs);
    GaussianLaw::new(mean, chol_t.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn law(m: f64, v: f64) -> GaussianLaw<f64> {
        GaussianLaw::univariate(m, v).unwrap()
    }

    #[test]
    fn endpoints() {
        let mu0 = law(0.0, 1.0);
        let pi = law(2.0, 0.5);
        assert_eq!(exact_fr_gaussian(&mu0, &pi, 0.0).unwrap(), mu0);
        let late = exact_fr_gaussian(&mu0, &pi, 50.0).unwrap();
        assert_abs_diff_eq!(late.mean()[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(late.var()[0], 0.5, epsilon = 1e-12);
        assert!(exact_fr_gaussian(&mu0, &pi, -1.0).is_err());
        assert!(GaussianLaw::univariate(0.0, 0.0).is_err());
    }

    #[test]
    fn half_way_by_completing_the_square() {
        let mid = exact_fr_gaussian(&law(0.0, 1.0), &law(2.0, 1.0), 2f64.ln()).unwrap();
        assert_abs_diff_eq!(mid.mean()[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(mid.var()[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn matches_numerically_normalised_tempered_density() {
        // π^λ μ0^(1−λ) tabulated and normalised on a grid, moments by quadrature.
        let (m0, v0, mp, vp) = (-1.0, 2.0, 1.5, 0.3);
        for t in [0.2, 1.0, 3.0] {
            let lambda = 1.0 - f64::exp(-t);
            let n = 20_001;
            let (lo, hi) = (-15.0, 15.0);
            let h = (hi - lo) / (n - 1) as f64;
            let mut mass = 0.0;
            let mut first = 0.0;
            let mut second = 0.0;
            for i in 0..n {
                let x = lo + i as f64 * h;
                let log_pi = -0.5 * (x - mp) * (x - mp) / vp - 0.5 * vp.ln();
                let log_mu = -0.5 * (x - m0) * (x - m0) / v0 - 0.5 * v0.ln();
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                let d = w * (lambda * log_pi + (1.0 - lambda) * log_mu).exp();
                mass += d;
                first += d * x;
                second += d * x * x;
            }
            let mean = first / mass;
            let var = second / mass - mean * mean;
            let exact = exact_fr_gaussian(&law(m0, v0), &law(mp, vp), t).unwrap();
            assert_abs_diff_eq!(exact.mean()[0], mean, epsilon = 1e-9);
            assert_abs_diff_eq!(exact.var()[0], var, epsilon = 1e-9);
        }
    }

    #[test]
    fn semigroup_property() {
        let mu0 = law(-0.7, 2.3);
        let pi = law(1.9, 0.4);
        for (t, s) in [(0.3, 0.9), (1.0, 1.0), (0.05, 4.0)] {
            let direct = exact_fr_gaussian(&mu0, &pi, t + s).unwrap();
            let composed = exact_fr_gaussian(&exact_fr_gaussian(&mu0, &pi, t).unwrap(), &pi, s).unwrap();
            assert_abs_diff_eq!(direct.mean()[0], composed.mean()[0], epsilon = 1e-12);
            assert_abs_diff_eq!(direct.var()[0], composed.var()[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn full_covariance() {
        let c0 = Matrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
        let cp = Matrix::from_rows(&[vec![0.5, -0.1], vec![-0.1, 0.8]]).unwrap();
        let mu0 = GaussianLaw::new(vec![0.0, 1.0], c0).unwrap();
        let pi = GaussianLaw::new(vec![2.0, -1.0], cp).unwrap();
        let direct = exact_fr_gaussian(&mu0, &pi, 1.7).unwrap();
        let composed = exact_fr_gaussian(&exact_fr_gaussian(&mu0, &pi, 0.4).unwrap(), &pi, 1.3).unwrap();
        for k in 0..2 {
            assert_abs_diff_eq!(direct.mean()[k], composed.mean()[k], epsilon = 1e-12);
            for j in 0..2 {
                assert_abs_diff_eq!(direct.cov().get(k, j), composed.cov().get(k, j), epsilon = 1e-12);
            }
        }
    }
}
