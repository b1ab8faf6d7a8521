use crate::flows::Ensemble;
use crate::real::Real;
use crate::rng::Purpose;

/// Effective sample size `1 / Σ w_i²` of the normalised weights.
pub fn ess<F: Real>(ens: &Ensemble<F>) -> F {
    let sum_sq: F = ens.log_weights().iter().map(|&lw| (lw + lw).exp()).sum();
    sum_sq.recip()
}

/// Systematic resampling: `N` equally weighted particles, with the single
/// uniform offset drawn from the `Resample` stream at the current step.
pub fn resample_systematic<F: Real>(ens: &mut Ensemble<F>) {
    let n = ens.len();
    let d = ens.dim();
    let u = ens.rng().uniform(ens.step_index(), 0, Purpose::Resample);
    let weights = ens.weights();
    let total: f64 = weights.iter().map(|w| w.to_f64_lossless()).sum();
    let step = total / n as f64;
    let mut positions = Vec::with_capacity(n * d);
    let mut cumulative = weights[0].to_f64_lossless();
    let mut j = 0;
    for k in 0..n {
        let point = (u + k as f64) * step;
        while cumulative < point && j + 1 < n {
            j += 1;
            cumulative += weights[j].to_f64_lossless();
        }
        positions.extend_from_slice(ens.particle(j));
    }
    ens.replace_particles(positions);
}

/// Resamples when `ess < threshold · N`; returns whether it did.
pub fn resample_if_degenerate<F: Real>(ens: &mut Ensemble<F>, threshold: F) -> bool {
    let n = F::from_usize(ens.len()).unwrap();
    if ess(ens) < threshold * n {
        resample_systematic(ens);
        true
    } else {
        false
    }
}
