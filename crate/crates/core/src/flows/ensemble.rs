use crate::error::{Error, Result};
use crate::flows::exact::GaussianLaw;
use crate::linalg::Cholesky;
use crate::real::{log_sum_exp, Real};
use crate::rng::{CounterRng, Purpose};

/// `N` weighted particles in `R^d` representing the current law.
///
/// Log-weights are kept normalised (`log Σ exp = 0`). The random stream is
/// addressed by `step_index`, which the flow driver advances once per
/// composite step.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<F> {
    dim: usize,
    positions: Vec<F>,
    log_weights: Vec<F>,
    step_index: u64,
    rng: CounterRng,
}

impl<F: Real> Ensemble<F> {
    /// Equally weighted particles from a flat row-major `N × dim` buffer.
    pub fn from_positions(positions: Vec<F>, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 || positions.is_empty() || !positions.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} coordinates do not form particles of dimension {dim}",
                positions.len()
            )));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial particle position".into()));
        }
        let n = positions.len() / dim;
        let lw = -F::from_usize(n).unwrap().ln();
        Ok(Self {
            dim,
            positions,
            log_weights: vec![lw; n],
            step_index: 0,
            rng: CounterRng::new(seed),
        })
    }

    /// `n` i.i.d. draws from a Gaussian law, from the `Init` stream of `seed`.
    pub fn sample_gaussian(law: &GaussianLaw<F>, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("ensemble needs at least one particle".into()));
        }
        let chol = Cholesky::new(law.cov())?;
        let rng = CounterRng::new(seed);
        let d = law.dim();
        let mut z = vec![0.0; d];
        let mut positions = Vec::with_capacity(n * d);
        for i in 0..n {
            rng.normals(0, i as u64, Purpose::Init, &mut z);
            let zf: Vec<F> = z.iter().map(|&v| F::lit(v)).collect();
            let coloured = chol.mul_lower(&zf);
            positions.extend(coloured.iter().zip(law.mean()).map(|(&c, &m)| m + c));
        }
        Self::from_positions(positions, d, seed)
    }

    /// Replaces the log-weights (normalising them).
    pub fn with_log_weights(mut self, log_weights: Vec<F>) -> Result<Self> {
        if log_weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: log_weights.len(),
            });
        }
        self.log_weights = log_weights;
        self.normalise()?;
        Ok(self)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    #[inline]
    pub fn positions(&self) -> &[F] {
        &self.positions
    }

    #[inline]
    pub(crate) fn positions_mut(&mut self) -> &mut [F] {
        &mut self.positions
    }

    #[inline]
    pub fn particle(&self, i: usize) -> &[F] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn particles(&self) -> std::slice::ChunksExact<'_, F> {
        self.positions.chunks_exact(self.dim)
    }

    #[inline]
    pub fn log_weights(&self) -> &[F] {
        &self.log_weights
    }

    #[inline]
    pub(crate) fn log_weights_mut(&mut self) -> &mut [F] {
        &mut self.log_weights
    }

    pub fn weights(&self) -> Vec<F> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    #[inline]
    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    #[inline]
    pub fn rng(&self) -> &CounterRng {
        &self.rng
    }

    pub fn advance(&mut self) {
        self.step_index += 1;
    }

    pub(crate) fn replace_particles(&mut self, positions: Vec<F>) {
        debug_assert_eq!(positions.len(), self.positions.len());
        self.positions = positions;
        let lw = -F::from_usize(self.len()).unwrap().ln();
        self.log_weights.iter_mut().for_each(|w| *w = lw);
    }

    /// `log Σ exp(log_weights)`; zero for a normalised ensemble.
    pub fn log_weight_total(&self) -> F {
        log_sum_exp(&self.log_weights)
    }

    /// Subtracts the log-sum-exp so the weights sum to one.
    pub fn normalise(&mut self) -> Result<()> {
        let total = self.log_weight_total();
        if !total.is_finite() {
            return Err(Error::NonFinite("log-weight normaliser".into()));
        }
        self.log_weights.iter_mut().for_each(|w| *w = *w - total);
        Ok(())
    }

    pub fn has_uniform_weights(&self) -> bool {
        let first = self.log_weights[0];
        self.log_weights.iter().all(|&w| w == first)
    }

    pub fn weighted_mean(&self) -> Vec<F> {
        let mut mean = vec![F::zero(); self.dim];
        for (x, &lw) in self.particles().zip(&self.log_weights) {
            let w = lw.exp();
            for (m, &v) in mean.iter_mut().zip(x) {
                *m = *m + w * v;
            }
        }
        mean
    }

    /// Weighted per-coordinate variance (the covariance diagonal).
    pub fn weighted_var(&self) -> Vec<F> {
        let mean = self.weighted_mean();
        let mut var = vec![F::zero(); self.dim];
        for (x, &lw) in self.particles().zip(&self.log_weights) {
            let w = lw.exp();
            for ((v, &xi), &m) in var.iter_mut().zip(x).zip(&mean) {
                *v = *v + w * (xi - m) * (xi - m);
            }
        }
        var
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if dim == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                got: dim,
            })
        }
    }
}
