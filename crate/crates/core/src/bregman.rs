//! The β-divergence family of Bregman generators and quadrature on gridded
//! densities.
//!
//! The generator is
//!
//! ```text
//! Φ(t) = t log t − t + 1                    β = 1
//!        t − log t − 1                      β = 0
//!        (β − 1 + t^β − β t) / (β (β − 1))  otherwise
//! ```
//!
//! normalised so that `Φ(1) = Φ'(1) = 0`, with `Φ''(t) = t^(β−2)` for every β.
//! β = 1 yields the Kullback–Leibler divergence and β = 2 half the squared L²
//! distance. The two special cases are selected by exact comparison on β.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{density_floor, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    KullbackLeibler,
    ItakuraSaito,
    Power,
}

/// Convex generator Φ of a β-divergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaGenerator<F> {
    beta: F,
}

impl<F: Real> BetaGenerator<F> {
    pub fn new(beta: F) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::InvalidInput(format!("beta must be finite, got {beta}")));
        }
        Ok(Self { beta })
    }

    /// The Kullback–Leibler generator, β = 1.
    pub fn kl() -> Self {
        Self { beta: F::one() }
    }

    #[inline]
    pub fn beta(&self) -> F {
        self.beta
    }

    #[inline]
    pub fn is_kl(&self) -> bool {
        self.branch() == Branch::KullbackLeibler
    }

    #[inline]
    fn branch(&self) -> Branch {
        if self.beta == F::one() {
            Branch::KullbackLeibler
        } else if self.beta == F::zero() {
            Branch::ItakuraSaito
        } else {
            Branch::Power
        }
    }

    fn check_non_negative(t: F) -> Result<()> {
        if t.is_nan() || t < F::zero() {
            Err(Error::InvalidInput(format!("density argument must be >= 0, got {t}")))
        } else {
            Ok(())
        }
    }

    /// Φ(t). At `t = 0` the right limit is returned when it is finite (β > 0)
    /// and a domain error otherwise.
    pub fn phi(&self, t: F) -> Result<F> {
        Self::check_non_negative(t)?;
        let beta = self.beta;
        let one = F::one();
        if t == F::zero() {
            return match self.branch() {
                Branch::KullbackLeibler => Ok(one),
                Branch::Power if beta > F::zero() => Ok((beta - one) / (beta * (beta - one))),
                _ => Err(Error::Domain(format!("Φ(0) is infinite for β = {beta}"))),
            };
        }
        Ok(self.phi_positive(t))
    }

    #[inline]
    fn phi_positive(&self, t: F) -> F {
        let one = F::one();
        match self.branch() {
            Branch::KullbackLeibler => t * t.ln() - t + one,
            Branch::ItakuraSaito => t - t.ln() - one,
            Branch::Power => {
                let beta = self.beta;
                (beta - one + t.powf(beta) - beta * t) / (beta * (beta - one))
            }
        }
    }

    /// Φ'(t). At `t = 0` only β > 1 has a finite value, `−1/(β−1)`.
    pub fn phi_prime(&self, t: F) -> Result<F> {
        Self::check_non_negative(t)?;
        if t == F::zero() {
            return if self.beta > F::one() {
                Ok(-F::one() / (self.beta - F::one()))
            } else {
                Err(Error::Domain(format!("Φ'(0) is infinite for β = {}", self.beta)))
            };
        }
        Ok(self.phi_prime_positive(t))
    }

    #[inline]
    fn phi_prime_positive(&self, t: F) -> F {
        let one = F::one();
        match self.branch() {
            Branch::KullbackLeibler => t.ln(),
            Branch::ItakuraSaito => one - t.recip(),
            Branch::Power => (t.powf(self.beta - one) - one) / (self.beta - one),
        }
    }

    /// Φ'(t) evaluated from `log t`; avoids underflow when `t` comes from a
    /// log-density.
    #[inline]
    pub fn phi_prime_from_log(&self, log_t: F) -> F {
        let one = F::one();
        match self.branch() {
            Branch::KullbackLeibler => log_t,
            Branch::ItakuraSaito => one - (-log_t).exp(),
            Branch::Power => (((self.beta - one) * log_t).exp() - one) / (self.beta - one),
        }
    }

    /// Φ''(t) = t^(β−2), for t > 0.
    pub fn phi_second(&self, t: F) -> Result<F> {
        if !(t > F::zero()) {
            return Err(Error::InvalidInput(format!("Φ'' needs t > 0, got {t}")));
        }
        Ok(t.powf(self.beta - F::lit(2.0)))
    }

    /// `t Φ''(t) = t^(β−1)` from `log t`. Exactly one for the KL generator, so
    /// the normalising constant of π cancels bitwise in particle velocities.
    #[inline]
    pub fn t_phi_second_from_log(&self, log_t: F) -> F {
        match self.branch() {
            Branch::KullbackLeibler => F::one(),
            _ => ((self.beta - F::one()) * log_t).exp(),
        }
    }
}

/// First variation of `μ ↦ B_Φ(μ|π)` at a point: `Φ'(μ(x)) − Φ'(π(x))`.
/// For β = 1 this is `log(μ(x)/π(x))`.
pub fn first_variation<F: Real>(gen: &BetaGenerator<F>, mu_x: F, pi_x: F) -> Result<F> {
    require_positive(mu_x, "mu_x")?;
    require_positive(pi_x, "pi_x")?;
    Ok(gen.phi_prime_positive(mu_x) - gen.phi_prime_positive(pi_x))
}

/// Spatial gradient of the first variation by the chain rule:
/// `Φ''(μ) ∇μ − Φ''(π) π ∇log π`.
///
/// π enters through its score `∇log π`, so for β = 1 the result
/// `∇μ/μ − ∇log π` never sees the normalising constant.
pub fn first_variation_gradient<F: Real>(
    gen: &BetaGenerator<F>,
    mu_x: F,
    grad_mu: &[F],
    pi_x: F,
    grad_log_pi: &[F],
) -> Result<Vec<F>> {
    require_positive(mu_x, "mu_x")?;
    require_positive(pi_x, "pi_x")?;
    if grad_mu.len() != grad_log_pi.len() {
        return Err(Error::DimensionMismatch {
            expected: grad_mu.len(),
            got: grad_log_pi.len(),
        });
    }
    let mu_curv = gen.phi_second(mu_x)?;
    let pi_term = gen.t_phi_second_from_log(pi_x.ln());
    Ok(grad_mu
        .iter()
        .zip(grad_log_pi)
        .map(|(&gm, &gp)| mu_curv * gm - pi_term * gp)
        .collect())
}

fn require_positive<F: Real>(v: F, name: &str) -> Result<()> {
    if v > F::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be a positive finite density, got {v}"
        )))
    }
}

/// A density tabulated at `n` uniformly spaced points of `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity<F> {
    lo: F,
    hi: F,
    values: Vec<F>,
    mass: F,
}

impl<F: Real> GridDensity<F> {
    /// Wraps tabulated values. The declared mass defaults to the trapezoidal
    /// integral.
    pub fn new(lo: F, hi: F, values: Vec<F>) -> Result<Self> {
        validate_grid(lo, hi, values.len())?;
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= F::zero()) || !v.is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "density value at index {i} must be finite and >= 0, got {v}"
            )));
        }
        let mass = trapezoid(lo, hi, &values);
        Ok(Self { lo, hi, values, mass })
    }

    /// Tabulates `f` at the grid points.
    pub fn from_fn(lo: F, hi: F, n: usize, f: impl Fn(F) -> F) -> Result<Self> {
        validate_grid(lo, hi, n)?;
        let step = (hi - lo) / F::from_usize(n - 1).unwrap();
        let values = (0..n).map(|i| f(lo + F::from_usize(i).unwrap() * step)).collect();
        Self::new(lo, hi, values)
    }

    /// Replaces the declared mass (1 for normalised densities, `c` for scaled ones).
    pub fn with_mass(mut self, mass: F) -> Self {
        self.mass = mass;
        self
    }

    #[inline]
    pub fn lo(&self) -> F {
        self.lo
    }

    #[inline]
    pub fn hi(&self) -> F {
        self.hi
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[F] {
        &self.values
    }

    #[inline]
    pub fn mass(&self) -> F {
        self.mass
    }

    pub fn spacing(&self) -> F {
        (self.hi - self.lo) / F::from_usize(self.len() - 1).unwrap()
    }

    pub fn point(&self, i: usize) -> F {
        self.lo + F::from_usize(i).unwrap() * self.spacing()
    }

    /// Trapezoidal integral over `[lo, hi]`.
    pub fn integral(&self) -> F {
        trapezoid(self.lo, self.hi, &self.values)
    }

    /// `c · self`, with the declared mass scaled accordingly.
    pub fn scaled(&self, c: F) -> Result<Self> {
        if !(c > F::zero()) || !c.is_finite() {
            return Err(Error::InvalidInput(format!("scale must be positive, got {c}")));
        }
        Ok(Self {
            lo: self.lo,
            hi: self.hi,
            values: self.values.iter().map(|&v| c * v).collect(),
            mass: c * self.mass,
        })
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.len() == other.len()
    }
}

fn validate_grid<F: Real>(lo: F, hi: F, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("grid needs at least 2 points, got {n}")));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInput(format!("grid needs lo < hi, got [{lo}, {hi}]")));
    }
    Ok(())
}

/// Trapezoidal rule on a uniform grid.
pub(crate) fn trapezoid<F: Real>(lo: F, hi: F, values: &[F]) -> F {
    let n = values.len();
    let h = (hi - lo) / F::from_usize(n - 1).unwrap();
    let interior: F = values.iter().copied().sum();
    h * (interior - F::lit(0.5) * (values[0] + values[n - 1]))
}

/// `B_Φ(μ|π) = ∫ [Φ(μ) − Φ(π)] dx − ∫ (μ − π) Φ'(π) dx` by trapezoidal quadrature.
///
/// Both densities are clamped at [`density_floor`] before Φ and Φ' are
/// evaluated. For β ≤ 1, a grid point with `π = 0` and `μ > 0` makes the
/// integrand diverge and is rejected.
pub fn bregman_divergence<F: Real>(gen: &BetaGenerator<F>, mu: &GridDensity<F>, pi: &GridDensity<F>) -> Result<F> {
    if !mu.same_grid(pi) {
        return Err(Error::GridMismatch(format!(
            "mu on [{}, {}] x {} vs pi on [{}, {}] x {}",
            mu.lo,
            mu.hi,
            mu.len(),
            pi.lo,
            pi.hi,
            pi.len()
        )));
    }
    let floor = density_floor::<F>();
    let diverges_at_zero = gen.beta() <= F::one();
    let mut integrand = Vec::with_capacity(mu.len());
    for (i, (&m, &p)) in mu.values.iter().zip(&pi.values).enumerate() {
        if diverges_at_zero && p == F::zero() && m > F::zero() {
            return Err(Error::Domain(format!(
                "pi vanishes at grid index {i} where mu > 0 (Φ' diverges for β = {})",
                gen.beta()
            )));
        }
        let m = m.max(floor);
        let p = p.max(floor);
        let value = gen.phi_positive(m) - gen.phi_positive(p) - (m - p) * gen.phi_prime_positive(p);
        integrand.push(value);
    }
    Ok(trapezoid(mu.lo, mu.hi, &integrand))
}
