use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flows::{check_gamma, Ensemble};
use crate::real::Real;
use crate::targets::LogDensity;

/// Explicit-Euler step of the Stein variational gradient descent ODE with the
/// RBF kernel `k(x, y) = exp(−|x − y|² / (2ℓ²))`:
///
/// `x_i += γ/N Σ_j [k(x_i, x_j) ∇log π(x_j) + ∇_1 k(x_j, x_i)]`.
///
/// All particles are updated from the same pre-step snapshot; weights are
/// treated as uniform and left untouched.
pub fn svgd_step<F: Real, T: LogDensity<F>>(ens: &mut Ensemble<F>, target: &T, gamma: F, lengthscale: F) -> Result<()> {
    ens.check_dim(target.dim())?;
    check_gamma(gamma)?;
    if !(lengthscale > F::zero()) || !lengthscale.is_finite() {
        return Err(Error::InvalidInput(format!(
            "kernel lengthscale must be positive, got {lengthscale}"
        )));
    }
    let d = ens.dim();
    let scores: Vec<F> = ens
        .positions()
        .par_chunks_exact(d)
        .enumerate()
        .map(|(i, x)| {
            let g = target.grad_log_density(x);
            if g.iter().all(|v| v.is_finite()) {
                Ok(g)
            } else {
                Err(Error::NonFinite(format!("score at particle {i}")))
            }
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    let inv_2l2 = (F::lit(2.0) * lengthscale * lengthscale).recip();
    let inv_l2 = (lengthscale * lengthscale).recip();
    let inv_n = F::from_usize(ens.len()).unwrap().recip();
    let snapshot = ens.positions();
    let moved: Vec<F> = snapshot
        .par_chunks_exact(d)
        .flat_map_iter(|xi| {
            let mut phi = vec![F::zero(); d];
            for (xj, sj) in snapshot.chunks_exact(d).zip(scores.chunks_exact(d)) {
                let sq: F = xi.iter().zip(xj).map(|(&a, &b)| (a - b) * (a - b)).sum();
                let k = (-sq * inv_2l2).exp();
                for (((p, &s), &a), &b) in phi.iter_mut().zip(sj).zip(xi).zip(xj) {
                    // ∇_1 k(x_j, x_i) = −(x_j − x_i)/ℓ² k
                    *p = *p + k * s + (a - b) * inv_l2 * k;
                }
            }
            xi.iter()
                .zip(phi)
                .map(|(&x, p)| x + gamma * inv_n * p)
                .collect::<Vec<_>>()
        })
        .collect();
    ens.positions_mut().copy_from_slice(&moved);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::targets::{gaussian_target, ScaledTarget};

    #[test]
    fn single_particle_follows_the_score() {
        let target = gaussian_target(vec![1.0, -2.0], Matrix::diagonal(&[2.0, 0.5])).unwrap();
        let mut ens = Ensemble::from_positions(vec![0.3, 0.4], 2, 0).unwrap();
        let g = target.grad_log_density(&[0.3, 0.4]);
        svgd_step(&mut ens, &target, 0.1, 1.0).unwrap();
        assert_eq!(ens.positions(), &[0.3 + 0.1 * g[0], 0.4 + 0.1 * g[1]]);
    }

    #[test]
    fn symmetric_pair_stays_symmetric() {
        let target = gaussian_target(vec![0.0], Matrix::identity(1)).unwrap();
        let mut ens = Ensemble::from_positions(vec![-0.8, 0.8], 1, 0).unwrap();
        for _ in 0..10 {
            svgd_step(&mut ens, &target, 0.2, 0.7).unwrap();
            let p = ens.positions();
            assert_eq!(p[0], -p[1]);
        }
    }

    #[test]
    fn scale_invariant_update() {
        let target = gaussian_target(vec![0.0], Matrix::identity(1)).unwrap();
        let scaled = ScaledTarget::new(target.clone(), 10.0).unwrap();
        let mut a = Ensemble::from_positions(vec![-1.0, 0.2, 2.5, 3.0], 1, 0).unwrap();
        let mut b = a.clone();
        svgd_step(&mut a, &target, 0.3, 1.0).unwrap();
        svgd_step(&mut b, &scaled, 0.3, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_lengthscale() {
        let target = gaussian_target(vec![0.0], Matrix::identity(1)).unwrap();
        let mut ens = Ensemble::from_positions(vec![0.0], 1, 0).unwrap();
        assert!(svgd_step(&mut ens, &target, 0.1, 0.0).is_err());
        assert!(svgd_step(&mut ens, &target, 0.1, f64::NAN).is_err());
    }
}
