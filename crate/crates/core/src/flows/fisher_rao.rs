//! Fisher–Rao reweighting: particles stay put, weights move.

use rayon::prelude::*;

use crate::bregman::BetaGenerator;
use crate::density::KdeEstimator;
use crate::error::{Error, Result};
use crate::flows::{check_gamma, clamp_log_density, Ensemble, Reference};
use crate::real::Real;
use crate::targets::LogDensity;

fn log_target_batch<F: Real, T: LogDensity<F>>(ens: &Ensemble<F>, target: &T) -> Result<Vec<F>> {
    ens.positions()
        .par_chunks_exact(ens.dim())
        .enumerate()
        .map(|(i, x)| {
            let v = target.log_density(x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite(format!("log-density at particle {i}")))
            }
        })
        .collect()
}

fn check_kde<F: Real>(ens: &Ensemble<F>, kde: &KdeEstimator<F>) -> Result<()> {
    ens.check_dim(kde.dim())
}

/// KL reweighting with the exponential-integrator exponent:
/// `log w += (1 − e^{−γ}) (log γ(x) − log μ̂(x))`, then renormalise.
///
/// Any constant in `log γ` is removed by the renormalisation.
pub fn fr_kl_reweight_step<F: Real, T: LogDensity<F>>(
    ens: &mut Ensemble<F>,
    target: &T,
    gamma: F,
    kde: &KdeEstimator<F>,
) -> Result<()> {
    ens.check_dim(target.dim())?;
    check_kde(ens, kde)?;
    check_gamma(gamma)?;
    let lambda = -(-gamma).exp_m1();
    if lambda == F::zero() {
        return Ok(());
    }
    let log_pi = log_target_batch(ens, target)?;
    let log_mu = kde.log_density_batch(ens.positions())?;
    for ((lw, &lp), &lm) in ens.log_weights_mut().iter_mut().zip(&log_pi).zip(&log_mu) {
        *lw = *lw + lambda * (lp - lm);
    }
    ens.normalise()
}

/// Diagnostics of a Bregman reweighting or transport step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DensityClamps {
    /// Number of density evaluations raised to the density floor.
    pub clamped: usize,
}

/// Explicit-Euler Fisher–Rao step for a β-Bregman objective:
/// `log w −= γ (V − ⟨V⟩_w)` with `V = Φ'(μ̂) − Φ'(π̃)`, then renormalise.
///
/// `π̃` is the unnormalised `γ` or the normalised `π` depending on `reference`.
/// Only the KL generator makes the two choices agree.
pub fn fr_bregman_reweight_step<F: Real, T: LogDensity<F>>(
    ens: &mut Ensemble<F>,
    gen: &BetaGenerator<F>,
    target: &T,
    reference: Reference<F>,
    gamma: F,
    kde: &KdeEstimator<F>,
) -> Result<DensityClamps> {
    ens.check_dim(target.dim())?;
    check_kde(ens, kde)?;
    check_gamma(gamma)?;
    let shift = reference.log_norm();
    let log_pi = log_target_batch(ens, target)?;
    let log_mu = kde.log_density_batch(ens.positions())?;
    let mut clamps = DensityClamps::default();
    let potential: Vec<F> = log_mu
        .iter()
        .zip(&log_pi)
        .map(|(&lm, &lp)| {
            let lm = clamp_log_density(lm, &mut clamps.clamped);
            let lp = clamp_log_density(lp - shift, &mut clamps.clamped);
            gen.phi_prime_from_log(lm) - gen.phi_prime_from_log(lp)
        })
        .collect();
    if let Some(i) = potential.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("first variation is not finite at particle {i}")));
    }
    let centre: F = ens
        .log_weights()
        .iter()
        .zip(&potential)
        .map(|(&lw, &v)| lw.exp() * v)
        .sum();
    for (lw, &v) in ens.log_weights_mut().iter_mut().zip(&potential) {
        *lw = *lw - gamma * (v - centre);
    }
    ens.normalise()?;
    Ok(clamps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::BandwidthRule;
    use crate::flows::GaussianLaw;
    use crate::linalg::Matrix;
    use crate::targets::{gaussian_target, KnownNormaliser, ScaledTarget, Target};

    fn setup() -> (Ensemble<f64>, Target<f64>) {
        let law = GaussianLaw::univariate(0.0, 1.0).unwrap();
        let ens = Ensemble::sample_gaussian(&law, 400, 21).unwrap();
        let target = gaussian_target(vec![1.0], Matrix::identity(1)).unwrap();
        (ens, target)
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_step_leaves_weights() {
        let (mut ens, target) = setup();
        let kde = KdeEstimator::fit(&ens, BandwidthRule::Silverman).unwrap();
        let before = ens.clone();
        fr_kl_reweight_step(&mut ens, &target, 0.0, &kde).unwrap();
        assert_eq!(ens, before);
        fr_bregman_reweight_step(
            &mut ens,
            &BetaGenerator::new(2.0).unwrap(),
            &target,
            Reference::Unnormalised,
            0.0,
            &kde,
        )
        .unwrap();
        assert!(max_abs_diff(ens.log_weights(), before.log_weights()) < 1e-14);
    }

    /// A "target" whose unnormalised density is the KDE itself (times a constant).
    struct KdeTarget(KdeEstimator<f64>, f64);

    impl LogDensity<f64> for KdeTarget {
        fn dim(&self) -> usize {
            1
        }
        fn log_density(&self, x: &[f64]) -> f64 {
            self.0.log_density(x).unwrap() + self.1
        }
        fn grad_log_density_into(&self, x: &[f64], out: &mut [f64]) {
            out.copy_from_slice(&self.0.grad_log(x).unwrap());
        }
    }

    #[test]
    fn proportional_densities_keep_uniform_weights() {
        let (mut ens, _) = setup();
        let kde = KdeEstimator::fit(&ens, BandwidthRule::Silverman).unwrap();
        let before = ens.clone();
        fr_kl_reweight_step(&mut ens, &KdeTarget(kde.clone(), 3.3), 0.7, &kde).unwrap();
        assert!(max_abs_diff(ens.log_weights(), before.log_weights()) < 1e-12);
        for beta in [0.0, 0.5, 1.0, 2.0] {
            let mut e = before.clone();
            let gen = BetaGenerator::new(beta).unwrap();
            fr_bregman_reweight_step(
                &mut e,
                &gen,
                &KdeTarget(kde.clone(), 0.0),
                Reference::Unnormalised,
                0.3,
                &kde,
            )
            .unwrap();
            assert!(max_abs_diff(e.log_weights(), before.log_weights()) < 1e-12, "β={beta}");
        }
    }

    #[test]
    fn kl_weights_ignore_target_scale() {
        let (ens, target) = setup();
        let kde = KdeEstimator::fit(&ens, BandwidthRule::Silverman).unwrap();
        for c in [0.5, 2.0, 10.0] {
            let scaled = ScaledTarget::new(target.clone(), c).unwrap();
            let mut a = ens.clone();
            let mut b = ens.clone();
            fr_kl_reweight_step(&mut a, &target, 0.2, &kde).unwrap();
            fr_kl_reweight_step(&mut b, &scaled, 0.2, &kde).unwrap();
            assert!(max_abs_diff(a.log_weights(), b.log_weights()) <= 1e-12);
            assert!(a.log_weight_total().abs() < 1e-10);
        }
    }

    #[test]
    fn euler_kl_agrees_with_exponential_integrator_to_first_order() {
        let (ens, target) = setup();
        let kde = KdeEstimator::fit(&ens, BandwidthRule::Silverman).unwrap();
        let kl = BetaGenerator::kl();
        let mut errs = Vec::new();
        for gamma in [1e-3, 5e-4] {
            let mut a = ens.clone();
            let mut b = ens.clone();
            fr_kl_reweight_step(&mut a, &target, gamma, &kde).unwrap();
            fr_bregman_reweight_step(&mut b, &kl, &target, Reference::Unnormalised, gamma, &kde).unwrap();
            let err = max_abs_diff(a.log_weights(), b.log_weights());
            let moved = max_abs_diff(a.log_weights(), ens.log_weights());
            assert!(
                err < 10.0 * gamma * gamma * (1.0 + moved / gamma),
                "γ={gamma} err={err}"
            );
            errs.push(err);
        }
        // halving γ divides the discrepancy by about four
        let ratio = errs[0] / errs[1];
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn l2_weights_depend_on_target_scale() {
        let (ens, target) = setup();
        let kde = KdeEstimator::fit(&ens, BandwidthRule::Silverman).unwrap();
        let two = BetaGenerator::new(2.0).unwrap();
        let scaled = ScaledTarget::new(target.clone(), 2.0).unwrap();
        let mut a = ens.clone();
        let mut b = ens.clone();
        fr_bregman_reweight_step(&mut a, &two, &target, Reference::Unnormalised, 0.5, &kde).unwrap();
        fr_bregman_reweight_step(&mut b, &two, &scaled, Reference::Unnormalised, 0.5, &kde).unwrap();
        assert!(max_abs_diff(a.log_weights(), b.log_weights()) > 0.01);
        // with the normaliser supplied, the two agree again
        let mut c = ens.clone();
        let mut d = ens.clone();
        let ra = Reference::Normalised(target.log_norm().unwrap());
        let rb = Reference::Normalised(scaled.log_norm().unwrap());
        fr_bregman_reweight_step(&mut c, &two, &target, ra, 0.5, &kde).unwrap();
        fr_bregman_reweight_step(&mut d, &two, &scaled, rb, 0.5, &kde).unwrap();
        assert!(max_abs_diff(c.log_weights(), d.log_weights()) < 1e-12);
    }
}
