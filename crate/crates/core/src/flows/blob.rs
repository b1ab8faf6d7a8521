//! Deterministic Wasserstein transport with a kernel density estimate of the
//! particle law ("blob" method).

use rayon::prelude::*;

use crate::bregman::BetaGenerator;
use crate::density::KdeEstimator;
use crate::error::{Error, Result};
use crate::flows::fisher_rao::DensityClamps;
use crate::flows::{check_gamma, clamp_log_density, Ensemble, Reference};
use crate::real::Real;
use crate::targets::LogDensity;

/// Moves every particle by `−γ ∇_x [Φ'(μ̂) − Φ'(π̃)]`, i.e.
/// `x += γ (π̃^{β−1} ∇log π − μ̂^{β−1} ∇log μ̂)`.
///
/// For β = 1 the velocity is `∇log π − ∇log μ̂` and reads neither `π̃` nor its
/// normaliser. Weights are untouched; the KDE is evaluated at the pre-move
/// positions.
pub fn wasserstein_blob_step<F: Real, T: LogDensity<F>>(
    ens: &mut Ensemble<F>,
    gen: &BetaGenerator<F>,
    target: &T,
    reference: Reference<F>,
    gamma: F,
    kde: &KdeEstimator<F>,
) -> Result<DensityClamps> {
    ens.check_dim(target.dim())?;
    ens.check_dim(kde.dim())?;
    check_gamma(gamma)?;
    let d = ens.dim();
    let shift = reference.log_norm();
    let evals = kde.evaluate_batch(ens.positions())?;
    let moved: Vec<(Vec<F>, usize)> = ens
        .positions()
        .par_chunks_exact(d)
        .zip(evals.par_iter())
        .enumerate()
        .map(|(i, (x, mu))| {
            let mut clamped = 0;
            let score = target.grad_log_density(x);
            let log_mu = clamp_log_density(mu.log_density, &mut clamped);
            let mu_factor = gen.t_phi_second_from_log(log_mu);
            let pi_factor = if gen.is_kl() {
                F::one()
            } else {
                let log_pi = clamp_log_density(target.log_density(x) - shift, &mut clamped);
                gen.t_phi_second_from_log(log_pi)
            };
            let next: Vec<F> = x
                .iter()
                .zip(&score)
                .zip(&mu.grad_log)
                .map(|((&xi, &gp), &gm)| xi + gamma * (pi_factor * gp - mu_factor * gm))
                .collect();
            if next.iter().all(|v| v.is_finite()) {
                Ok((next, clamped))
            } else {
                Err(Error::NonFinite(format!("blob velocity at particle {i}")))
            }
        })
        .collect::<Result<_>>()?;
    let mut clamps = DensityClamps::default();
    for (dst, (src, c)) in ens.positions_mut().chunks_exact_mut(d).zip(moved) {
        dst.copy_from_slice(&src);
        clamps.clamped += c;
    }
    Ok(clamps)
}
