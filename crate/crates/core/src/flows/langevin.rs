//! Euler–Maruyama discretisation of the overdamped Langevin diffusion,
//! with and without a Metropolis–Hastings correction.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flows::{check_gamma, Ensemble};
use crate::real::Real;
use crate::rng::Purpose;
use crate::targets::LogDensity;

/// Acceptance counts of one MALA sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MalaStats {
    pub accepted: usize,
    pub proposed: usize,
}

impl MalaStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

fn finite_score<F: Real, T: LogDensity<F>>(target: &T, x: &[F], i: usize) -> Result<Vec<F>> {
    let g = target.grad_log_density(x);
    if g.iter().all(|v| v.is_finite()) {
        Ok(g)
    } else {
        Err(Error::NonFinite(format!("score at particle {i}: {g:?}")))
    }
}

/// Langevin proposal `x + γ ∇log π(x) + √(2γ) z` for particle `i`.
fn propose<F: Real>(x: &[F], score: &[F], gamma: F, noise: &[f64]) -> Vec<F> {
    let scale = (F::lit(2.0) * gamma).sqrt();
    x.iter()
        .zip(score)
        .zip(noise)
        .map(|((&xi, &gi), &zi)| xi + gamma * gi + scale * F::lit(zi))
        .collect()
}

/// One ULA move of every particle. Weights are untouched; noise comes from the
/// `Diffusion` stream at the ensemble's current step.
pub fn ula_step<F: Real, T: LogDensity<F>>(ens: &mut Ensemble<F>, target: &T, gamma: F) -> Result<()> {
    ens.check_dim(target.dim())?;
    check_gamma(gamma)?;
    let (step, rng, d) = (ens.step_index(), *ens.rng(), ens.dim());
    let moved: Vec<Vec<F>> = ens
        .positions()
        .par_chunks_exact(d)
        .enumerate()
        .map(|(i, x)| {
            let score = finite_score(target, x, i)?;
            let mut z = vec![0.0; d];
            rng.normals(step, i as u64, Purpose::Diffusion, &mut z);
            Ok(propose(x, &score, gamma, &z))
        })
        .collect::<Result<_>>()?;
    for (dst, src) in ens.positions_mut().chunks_exact_mut(d).zip(moved) {
        dst.copy_from_slice(&src);
    }
    Ok(())
}

/// `log q(to | from)` up to a constant shared by both directions.
fn log_proposal<F: Real>(to: &[F], from: &[F], score_from: &[F], gamma: F) -> F {
    let sq: F = to
        .iter()
        .zip(from)
        .zip(score_from)
        .map(|((&t, &f), &g)| {
            let r = t - f - gamma * g;
            r * r
        })
        .sum();
    -sq / (F::lit(4.0) * gamma)
}

/// `log [γ(y) q(x|y)] − log [γ(x) q(y|x)]`, the Metropolis–Hastings log-ratio
/// for a Langevin proposal `x → y`. Only unnormalised densities enter.
pub fn mala_log_acceptance<F: Real, T: LogDensity<F>>(target: &T, x: &[F], y: &[F], gamma: F) -> F {
    let gx = target.grad_log_density(x);
    let gy = target.grad_log_density(y);
    target.log_density(y) - target.log_density(x) + log_proposal(x, y, &gy, gamma) - log_proposal(y, x, &gx, gamma)
}

/// One MALA sweep: every particle proposes a ULA move and accepts it with
/// probability `min(1, exp(mala_log_acceptance))`.
pub fn mala_step<F: Real, T: LogDensity<F>>(ens: &mut Ensemble<F>, target: &T, gamma: F) -> Result<MalaStats> {
    ens.check_dim(target.dim())?;
    check_gamma(gamma)?;
    let n = ens.len();
    if gamma == F::zero() {
        return Ok(MalaStats {
            accepted: n,
            proposed: n,
        });
    }
    let (step, rng, d) = (ens.step_index(), *ens.rng(), ens.dim());
    let outcome: Vec<Option<Vec<F>>> = ens
        .positions()
        .par_chunks_exact(d)
        .enumerate()
        .map(|(i, x)| {
            let score = finite_score(target, x, i)?;
            let mut z = vec![0.0; d];
            rng.normals(step, i as u64, Purpose::Proposal, &mut z);
            let y = propose(x, &score, gamma, &z);
            let score_y = target.grad_log_density(&y);
            let log_alpha = target.log_density(&y) - target.log_density(x) + log_proposal(x, &y, &score_y, gamma)
                - log_proposal(&y, x, &score, gamma);
            let u = rng.uniform(step, i as u64, Purpose::Accept);
            // a NaN ratio (non-finite proposal) is a rejection
            Ok((F::lit(u.ln()) < log_alpha).then_some(y))
        })
        .collect::<Result<_>>()?;
    let mut stats = MalaStats {
        accepted: 0,
        proposed: n,
    };
    for (dst, y) in ens.positions_mut().chunks_exact_mut(d).zip(outcome) {
        if let Some(y) = y {
            dst.copy_from_slice(&y);
            stats.accepted += 1;
        }
    }
    Ok(stats)
}
