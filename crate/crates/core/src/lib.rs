//! Particle gradient flows for sampling, over the β-family of Bregman
//! divergences and four metrics on probability measures (Wasserstein,
//! Fisher–Rao, Wasserstein–Fisher–Rao, Stein), together with a numerical check
//! that the Kullback–Leibler divergence is the only member of the family whose
//! flows are unaffected by rescaling the target density.
//!
//! Every numerical type is generic over [`Real`] (`f32` or `f64`); the `*F64`
//! aliases below name the double-precision instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bregman;
pub mod density;
pub mod error;
pub mod flows;
pub mod invariance;
pub mod linalg;
pub mod real;
pub mod rng;
pub mod targets;

pub use bregman::{bregman_divergence, first_variation, first_variation_gradient, BetaGenerator, GridDensity};
pub use density::{BandwidthRule, KdeEstimator};
pub use error::{Error, Result};
pub use flows::{
    exact_fr_gaussian, Ensemble, FlowConfig, FlowRunner, GaussianLaw, Metric, Reference, StepRecord, Transport,
};
pub use invariance::{constancy_defect, divergence_shift, first_variation_shift, scan, InvarianceReport};
pub use linalg::Matrix;
pub use real::Real;
pub use targets::{
    gaussian_target, mixture_target, to_grid, GaussianParams, GridNormalisation, KnownNormaliser, LogDensity,
    ScaledTarget, Target,
};

pub type BetaGeneratorF64 = BetaGenerator<f64>;
pub type GridDensityF64 = GridDensity<f64>;
pub type KdeEstimatorF64 = KdeEstimator<f64>;
pub type EnsembleF64 = Ensemble<f64>;
pub type FlowConfigF64 = FlowConfig<f64>;
pub type GaussianLawF64 = GaussianLaw<f64>;
pub type TargetF64 = Target<f64>;
pub type MatrixF64 = Matrix<f64>;
pub type InvarianceReportF64 = InvarianceReport<f64>;

pub type BetaGeneratorF32 = BetaGenerator<f32>;
pub type EnsembleF32 = Ensemble<f32>;
pub type TargetF32 = Target<f32>;
