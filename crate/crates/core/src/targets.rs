//! Target distributions known up to a normalising constant.
//!
//! Samplers only ever see a [`LogDensity`]: the unnormalised log-density
//! `log γ(x)` and the score `∇log γ(x) = ∇log π(x)`. The log-normaliser
//! `log Z` lives behind the separate [`KnownNormaliser`] trait, which only
//! verification code asks for.

use crate::bregman::GridDensity;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::real::{log_sum_exp, Real};

/// What a sampler may read from a target.
pub trait LogDensity<F: Real>: Send + Sync {
    fn dim(&self) -> usize;

    /// `log γ(x)`, with `π = γ / Z` for an unknown `Z`.
    fn log_density(&self, x: &[F]) -> F;

    /// Writes `∇log γ(x)` into `out`.
    fn grad_log_density_into(&self, x: &[F], out: &mut [F]);

    fn grad_log_density(&self, x: &[F]) -> Vec<F> {
        let mut out = vec![F::zero(); self.dim()];
        self.grad_log_density_into(x, &mut out);
        out
    }
}

/// Verification-only view: `log Z` when it is known analytically.
pub trait KnownNormaliser<F> {
    fn log_norm(&self) -> Option<F>;
}

impl<F: Real, T: LogDensity<F> + ?Sized> LogDensity<F> for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn log_density(&self, x: &[F]) -> F {
        (**self).log_density(x)
    }

    fn grad_log_density_into(&self, x: &[F], out: &mut [F]) {
        (**self).grad_log_density_into(x, out)
    }
}

impl<F, T: KnownNormaliser<F> + ?Sized> KnownNormaliser<F> for &T {
    fn log_norm(&self) -> Option<F> {
        (**self).log_norm()
    }
}

/// Mean and covariance of a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams<F> {
    pub mean: Vec<F>,
    pub cov: Matrix<F>,
}

impl<F: Real> GaussianParams<F> {
    pub fn new(mean: Vec<F>, cov: Matrix<F>) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: cov.dim(),
            });
        }
        Ok(Self { mean, cov })
    }

    pub fn isotropic(mean: Vec<F>, var: F) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, Matrix::diagonal(&vec![var; d]))
    }
}

/// `γ(x) = exp(−(x−m)ᵀ Σ⁻¹ (x−m) / 2)`; the `(2π)^{d/2} |Σ|^{1/2}` factor is
/// carried separately as `log Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTarget<F> {
    mean: Vec<F>,
    precision: Matrix<F>,
    log_norm: F,
}

impl<F: Real> GaussianTarget<F> {
    pub fn new(params: &GaussianParams<F>) -> Result<Self> {
        let chol = Cholesky::new(&params.cov)?;
        let d = F::from_usize(params.mean.len()).unwrap();
        let log_norm = F::lit(0.5) * d * (F::lit(2.0) * F::PI()).ln() + F::lit(0.5) * chol.log_det();
        Ok(Self {
            mean: params.mean.clone(),
            precision: chol.inverse(),
            log_norm,
        })
    }

    pub fn mean(&self) -> &[F] {
        &self.mean
    }

    fn quadratic(&self, x: &[F]) -> F {
        let diff: Vec<F> = x.iter().zip(&self.mean).map(|(&a, &b)| a - b).collect();
        let pd = self.precision.mul_vec(&diff);
        diff.iter().zip(&pd).map(|(&a, &b)| a * b).sum()
    }
}

impl<F: Real> LogDensity<F> for GaussianTarget<F> {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &[F]) -> F {
        -F::lit(0.5) * self.quadratic(x)
    }

    fn grad_log_density_into(&self, x: &[F], out: &mut [F]) {
        let diff: Vec<F> = x.iter().zip(&self.mean).map(|(&a, &b)| b - a).collect();
        for (o, v) in out.iter_mut().zip(self.precision.mul_vec(&diff)) {
            *o = v;
        }
    }
}

impl<F: Real> KnownNormaliser<F> for GaussianTarget<F> {
    fn log_norm(&self) -> Option<F> {
        Some(self.log_norm)
    }
}

/// Finite Gaussian mixture `γ(x) = e^κ Σ_k w_k N(x; m_k, Σ_k)`.
///
/// `κ = Σ_k w_k log Z_k` (weighted mean of the component normalisers), so a
/// single-component mixture coincides with [`GaussianTarget`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTarget<F> {
    log_weights: Vec<F>,
    components: Vec<GaussianTarget<F>>,
    kappa: F,
}

impl<F: Real> MixtureTarget<F> {
    pub fn new(weights: &[F], components: &[GaussianParams<F>]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("mixture needs at least one component".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|&w| !(w > F::zero())) {
            return Err(Error::InvalidInput("mixture weights must be positive".into()));
        }
        let total: F = weights.iter().copied().sum();
        if (total - F::one()).abs() > F::lit(1e-9) {
            return Err(Error::InvalidInput(format!("mixture weights sum to {total}, not 1")));
        }
        let dim = components[0].mean.len();
        let components = components
            .iter()
            .map(|c| {
                if c.mean.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: c.mean.len(),
                    });
                }
                GaussianTarget::new(c)
            })
            .collect::<Result<Vec<_>>>()?;
        let kappa = weights.iter().zip(&components).map(|(&w, c)| w * c.log_norm).sum();
        Ok(Self {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            components,
            kappa,
        })
    }

    /// Per-component `log w_k + log N(x; m_k, Σ_k)`.
    fn component_terms(&self, x: &[F]) -> Vec<F> {
        self.log_weights
            .iter()
            .zip(&self.components)
            .map(|(&lw, c)| lw - c.log_norm + c.log_density(x))
            .collect()
    }
}

impl<F: Real> LogDensity<F> for MixtureTarget<F> {
    fn dim(&self) -> usize {
        self.components[0].dim()
    }

    fn log_density(&self, x: &[F]) -> F {
        self.kappa + log_sum_exp(&self.component_terms(x))
    }

    fn grad_log_density_into(&self, x: &[F], out: &mut [F]) {
        let terms = self.component_terms(x);
        let lse = log_sum_exp(&terms);
        out.iter_mut().for_each(|o| *o = F::zero());
        let mut score = vec![F::zero(); out.len()];
        for (t, c) in terms.iter().zip(&self.components) {
            let r = (*t - lse).exp();
            c.grad_log_density_into(x, &mut score);
            for (o, &s) in out.iter_mut().zip(&score) {
                *o = *o + r * s;
            }
        }
    }
}

impl<F: Real> KnownNormaliser<F> for MixtureTarget<F> {
    fn log_norm(&self) -> Option<F> {
        Some(self.kappa)
    }
}

/// The target zoo.
#[derive(Debug, Clone, PartialEq)]
pub enum Target<F> {
    Gaussian(GaussianTarget<F>),
    Mixture(MixtureTarget<F>),
}

/// Gaussian target with the normaliser dropped from `γ`.
pub fn gaussian_target<F: Real>(mean: Vec<F>, cov: Matrix<F>) -> Result<Target<F>> {
    Ok(Target::Gaussian(GaussianTarget::new(&GaussianParams::new(mean, cov)?)?))
}

pub fn mixture_target<F: Real>(weights: &[F], components: &[GaussianParams<F>]) -> Result<Target<F>> {
    Ok(Target::Mixture(MixtureTarget::new(weights, components)?))
}

impl<F: Real> LogDensity<F> for Target<F> {
    fn dim(&self) -> usize {
        match self {
            Self::Gaussian(t) => t.dim(),
            Self::Mixture(t) => t.dim(),
        }
    }

    fn log_density(&self, x: &[F]) -> F {
        match self {
            Self::Gaussian(t) => t.log_density(x),
            Self::Mixture(t) => t.log_density(x),
        }
    }

    fn grad_log_density_into(&self, x: &[F], out: &mut [F]) {
        match self {
            Self::Gaussian(t) => t.grad_log_density_into(x, out),
            Self::Mixture(t) => t.grad_log_density_into(x, out),
        }
    }
}

impl<F: Real> KnownNormaliser<F> for Target<F> {
    fn log_norm(&self) -> Option<F> {
        match self {
            Self::Gaussian(t) => t.log_norm(),
            Self::Mixture(t) => t.log_norm(),
        }
    }
}

/// `c · γ`: same score, log-density shifted by `log c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledTarget<F, T> {
    base: T,
    log_c: F,
}

impl<F: Real, T> ScaledTarget<F, T> {
    pub fn new(base: T, c: F) -> Result<Self> {
        if !(c > F::zero()) || !c.is_finite() {
            return Err(Error::InvalidInput(format!("scale c must be in (0, inf), got {c}")));
        }
        Ok(Self { base, log_c: c.ln() })
    }

    pub fn with_log_scale(base: T, log_c: F) -> Self {
        Self { base, log_c }
    }

    pub fn base(&self) -> &T {
        &self.base
    }

    pub fn log_c(&self) -> F {
        self.log_c
    }
}

impl<F: Real, T: LogDensity<F>> LogDensity<F> for ScaledTarget<F, T> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn log_density(&self, x: &[F]) -> F {
        self.base.log_density(x) + self.log_c
    }

    fn grad_log_density_into(&self, x: &[F], out: &mut [F]) {
        self.base.grad_log_density_into(x, out)
    }
}

impl<F: Real, T: KnownNormaliser<F>> KnownNormaliser<F> for ScaledTarget<F, T> {
    fn log_norm(&self) -> Option<F> {
        self.base.log_norm().map(|z| z + self.log_c)
    }
}

/// How [`to_grid`] scales the tabulated density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridNormalisation {
    /// Tabulate `γ` as is.
    Unnormalised,
    /// Divide by `Z` from the target's `log_norm`; error when it is absent.
    Exact,
    /// Divide by `Z` when known, otherwise by the trapezoidal mass.
    ExactOrNumerical,
}

/// Tabulates a one-dimensional target on `n` points of `[lo, hi]`.
///
/// The declared mass is 1 for the normalised variants and `Z` (analytic when
/// known, numerical otherwise) for the unnormalised one.
pub fn to_grid<F, T>(target: &T, lo: F, hi: F, n: usize, normalisation: GridNormalisation) -> Result<GridDensity<F>>
where
    F: Real,
    T: LogDensity<F> + KnownNormaliser<F>,
{
    if target.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: target.dim(),
        });
    }
    let log_norm = target.log_norm();
    let shift = match normalisation {
        GridNormalisation::Unnormalised => F::zero(),
        GridNormalisation::Exact => log_norm.ok_or(Error::MissingLogNorm)?,
        GridNormalisation::ExactOrNumerical => log_norm.unwrap_or(F::zero()),
    };
    let grid = GridDensity::from_fn(lo, hi, n, |x| (target.log_density(&[x]) - shift).exp())?;
    Ok(match (normalisation, log_norm) {
        (GridNormalisation::Unnormalised, Some(z)) => grid.with_mass(z.exp()),
        (GridNormalisation::Unnormalised, None) => grid,
        (GridNormalisation::ExactOrNumerical, None) => {
            let mass = grid.integral();
            GridDensity::new(lo, hi, grid.values().iter().map(|&v| v / mass).collect())?.with_mass(F::one())
        }
        _ => grid.with_mass(F::one()),
    })
}
