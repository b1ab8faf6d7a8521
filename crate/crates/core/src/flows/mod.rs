//! Particle discretisations of gradient flows over probability measures.
//!
//! | metric        | β = 1 (KL)                                  | β ≠ 1                              |
//! |---------------|---------------------------------------------|------------------------------------|
//! | Wasserstein   | ULA / MALA (or blob transport)              | blob transport                     |
//! | Fisher–Rao    | exponential-integrator reweighting          | explicit-Euler reweighting         |
//! | WFR           | Langevin move, reweight, resample           | blob move, Euler reweight, resample|
//! | Stein         | SVGD                                        | not provided                       |
//!
//! Steps read the target only through [`LogDensity`]. Non-KL objectives need a
//! density for π; [`Reference`] says whether that is the unnormalised `γ` (what
//! a practitioner has) or the normalised `π` (available only to verification
//! code through [`KnownNormaliser`]).

mod blob;
mod ensemble;
pub mod exact;
mod fisher_rao;
mod langevin;
mod resample;
mod svgd;

use serde::{Deserialize, Serialize};

pub use blob::wasserstein_blob_step;
pub use ensemble::Ensemble;
pub use exact::{exact_fr_gaussian, GaussianLaw};
pub use fisher_rao::{fr_bregman_reweight_step, fr_kl_reweight_step, DensityClamps};
pub use langevin::{mala_log_acceptance, mala_step, ula_step, MalaStats};
pub use resample::{ess, resample_if_degenerate, resample_systematic};
pub use svgd::svgd_step;

use crate::bregman::BetaGenerator;
use crate::density::{BandwidthRule, KdeEstimator};
use crate::error::{Error, Result};
use crate::real::{density_floor, Real};
use crate::targets::{KnownNormaliser, LogDensity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Wasserstein,
    FisherRao,
    Wfr,
    Stein,
}

/// Particle move used for the Wasserstein part of a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    /// Langevin for β = 1, blob otherwise.
    #[default]
    Auto,
    Langevin,
    Mala,
    Blob,
}

/// Which density plays π in a non-KL first variation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference<F> {
    /// The unnormalised `γ`.
    Unnormalised,
    /// `γ / Z` with the given `log Z`.
    Normalised(F),
}

impl<F: Real> Reference<F> {
    pub fn for_target<T: KnownNormaliser<F> + ?Sized>(target: &T, use_normalised: bool) -> Result<Self> {
        if use_normalised {
            target.log_norm().map(Self::Normalised).ok_or(Error::MissingLogNorm)
        } else {
            Ok(Self::Unnormalised)
        }
    }

    pub(crate) fn log_norm(&self) -> F {
        match self {
            Self::Unnormalised => F::zero(),
            Self::Normalised(z) => *z,
        }
    }
}

pub(crate) fn check_gamma<F: Real>(gamma: F) -> Result<()> {
    if gamma >= F::zero() && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("step size must be >= 0, got {gamma}")))
    }
}

/// Raises a log-density to `log(density_floor)`, counting the clamps.
pub(crate) fn clamp_log_density<F: Real>(log_density: F, clamped: &mut usize) -> F {
    let floor = density_floor::<F>().ln();
    if log_density < floor {
        *clamped += 1;
        floor
    } else {
        log_density
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig<F> {
    pub metric: Metric,
    pub beta: F,
    /// Time step γ.
    pub gamma: F,
    pub n_steps: usize,
    pub n_particles: usize,
    pub bandwidth: BandwidthRule<F>,
    /// RBF lengthscale ℓ of the Stein kernel.
    pub kernel_lengthscale: F,
    /// Resample when ESS < threshold · N.
    pub resample_threshold: F,
    pub transport: Transport,
    /// Let non-KL flows divide by the true normaliser (verification only).
    pub use_normalised: bool,
    pub seed: u64,
}

impl<F: Real> Default for FlowConfig<F> {
    fn default() -> Self {
        Self {
            metric: Metric::Wfr,
            beta: F::one(),
            gamma: F::lit(0.05),
            n_steps: 100,
            n_particles: 1000,
            bandwidth: BandwidthRule::Silverman,
            kernel_lengthscale: F::one(),
            resample_threshold: F::lit(0.5),
            transport: Transport::Auto,
            use_normalised: false,
            seed: 0,
        }
    }
}

impl<F: Real> FlowConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > F::zero()) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.resample_threshold >= F::zero() && self.resample_threshold <= F::one()) {
            return Err(Error::Config(format!(
                "resample_threshold must lie in [0, 1], got {}",
                self.resample_threshold
            )));
        }
        if self.n_particles == 0 {
            return Err(Error::Config("n_particles must be >= 1".into()));
        }
        if !(self.kernel_lengthscale > F::zero()) {
            return Err(Error::Config("kernel_lengthscale must be > 0".into()));
        }
        if let BandwidthRule::Fixed(h) = self.bandwidth {
            if !(h > F::zero()) || !h.is_finite() {
                return Err(Error::Config(format!("fixed bandwidth must be > 0, got {h}")));
            }
        }
        let gen = BetaGenerator::new(self.beta).map_err(|e| Error::Config(e.to_string()))?;
        if !gen.is_kl() {
            if self.metric == Metric::Stein {
                return Err(Error::Config("the Stein flow is only available for beta = 1".into()));
            }
            if matches!(self.transport, Transport::Langevin | Transport::Mala)
                && matches!(self.metric, Metric::Wasserstein | Metric::Wfr)
            {
                return Err(Error::Config(
                    "Langevin transport only discretises the KL flow; use transport = \"blob\"".into(),
                ));
            }
        }
        Ok(())
    }

    fn resolved_transport(&self) -> Transport {
        match self.transport {
            Transport::Auto if self.beta == F::one() => Transport::Langevin,
            Transport::Auto => Transport::Blob,
            t => t,
        }
    }
}

/// Per-step summary emitted by [`FlowRunner::run`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<F> {
    pub step: u64,
    pub time: F,
    pub ess: F,
    pub mean: Vec<F>,
    pub var: Vec<F>,
    /// MALA acceptance rate of the step, when MALA ran.
    pub acceptance_rate: Option<f64>,
    pub resampled: bool,
    /// Density evaluations raised to the floor during the step.
    pub clamped: usize,
}

impl<F: Real> StepRecord<F> {
    fn observe(ens: &Ensemble<F>, gamma: F, outcome: StepOutcome) -> Self {
        Self {
            step: ens.step_index(),
            time: F::from_u64(ens.step_index()).unwrap() * gamma,
            ess: ess(ens),
            mean: ens.weighted_mean(),
            var: ens.weighted_var(),
            acceptance_rate: outcome.mala.map(|m| m.rate()),
            resampled: outcome.resampled,
            clamped: outcome.clamped,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepOutcome {
    pub mala: Option<MalaStats>,
    pub resampled: bool,
    pub clamped: usize,
}

/// Runs one configured flow against a target.
#[derive(Debug, Clone)]
pub struct FlowRunner<'t, F, T> {
    config: FlowConfig<F>,
    gen: BetaGenerator<F>,
    target: &'t T,
    reference: Reference<F>,
}

impl<'t, F: Real, T: LogDensity<F>> FlowRunner<'t, F, T> {
    pub fn new(config: FlowConfig<F>, target: &'t T, reference: Reference<F>) -> Result<Self> {
        config.validate()?;
        let gen = BetaGenerator::new(config.beta)?;
        Ok(Self {
            config,
            gen,
            target,
            reference,
        })
    }

    pub fn config(&self) -> &FlowConfig<F> {
        &self.config
    }

    /// Initial ensemble of `n_particles` draws from `law`.
    pub fn initial_ensemble(&self, law: &GaussianLaw<F>) -> Result<Ensemble<F>> {
        if law.dim() != self.target.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.target.dim(),
                got: law.dim(),
            });
        }
        Ensemble::sample_gaussian(law, self.config.n_particles, self.config.seed)
    }

    fn kde(&self, ens: &Ensemble<F>) -> Result<KdeEstimator<F>> {
        KdeEstimator::fit(ens, self.config.bandwidth)
    }

    fn transport(&self, ens: &mut Ensemble<F>, kde: Option<&KdeEstimator<F>>) -> Result<StepOutcome> {
        let gamma = self.config.gamma;
        let mut out = StepOutcome::default();
        match self.config.resolved_transport() {
            Transport::Langevin | Transport::Auto => ula_step(ens, self.target, gamma)?,
            Transport::Mala => out.mala = Some(mala_step(ens, self.target, gamma)?),
            Transport::Blob => {
                let fitted;
                let kde = match kde {
                    Some(k) => k,
                    None => {
                        fitted = self.kde(ens)?;
                        &fitted
                    }
                };
                out.clamped = wasserstein_blob_step(ens, &self.gen, self.target, self.reference, gamma, kde)?.clamped;
            }
        }
        Ok(out)
    }

    fn reweight(&self, ens: &mut Ensemble<F>, kde: &KdeEstimator<F>) -> Result<usize> {
        let gamma = self.config.gamma;
        if self.gen.is_kl() {
            fr_kl_reweight_step(ens, self.target, gamma, kde)?;
            Ok(0)
        } else {
            Ok(fr_bregman_reweight_step(ens, &self.gen, self.target, self.reference, gamma, kde)?.clamped)
        }
    }

    /// One composite step. The KDE is fitted once, right before the first
    /// sub-step that needs it; the random stream then advances.
    pub fn step(&self, ens: &mut Ensemble<F>) -> Result<StepOutcome> {
        ens.check_dim(self.target.dim())?;
        let threshold = self.config.resample_threshold;
        let outcome = match self.config.metric {
            Metric::Wasserstein => self.transport(ens, None)?,
            Metric::Stein => {
                svgd_step(ens, self.target, self.config.gamma, self.config.kernel_lengthscale)?;
                StepOutcome::default()
            }
            Metric::FisherRao => {
                let kde = self.kde(ens)?;
                let clamped = self.reweight(ens, &kde)?;
                StepOutcome {
                    mala: None,
                    resampled: resample_if_degenerate(ens, threshold),
                    clamped,
                }
            }
            Metric::Wfr => {
                let mut out;
                let kde = if self.config.resolved_transport() == Transport::Blob {
                    let kde = self.kde(ens)?;
                    out = self.transport(ens, Some(&kde))?;
                    kde
                } else {
                    out = self.transport(ens, None)?;
                    self.kde(ens)?
                };
                out.clamped += self.reweight(ens, &kde)?;
                out.resampled = resample_if_degenerate(ens, threshold);
                out
            }
        };
        ens.advance();
        Ok(outcome)
    }

    /// Runs `n_steps` steps, returning the initial record followed by one
    /// record per step. `observer` sees each record as it is produced.
    pub fn run(
        &self,
        ens: &mut Ensemble<F>,
        mut observer: impl FnMut(&StepRecord<F>, &Ensemble<F>),
    ) -> Result<Vec<StepRecord<F>>> {
        let gamma = self.config.gamma;
        let mut records = Vec::with_capacity(self.config.n_steps + 1);
        let first = StepRecord::observe(ens, gamma, StepOutcome::default());
        observer(&first, ens);
        records.push(first);
        for _ in 0..self.config.n_steps {
            let outcome = self.step(ens)?;
            let record = StepRecord::observe(ens, gamma, outcome);
            observer(&record, ens);
            records.push(record);
        }
        Ok(records)
    }
}
