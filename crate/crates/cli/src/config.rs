//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use bregflow::invariance::GridSpec;
use bregflow::{gaussian_target, mixture_target, FlowConfig, GaussianLaw, GaussianParams, Matrix, Target};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    #[default]
    Flow,
    Invariance,
    OracleCompare,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Flow => "flow",
            Self::Invariance => "invariance",
            Self::OracleCompare => "oracle-compare",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Overrides `flow.seed` when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub output: OutputSpec,
    pub target: TargetSpec,
    /// Law of the initial particles.
    pub init: GaussianSpec,
    pub flow: FlowConfig<f64>,
    pub invariance: InvarianceSpec,
    pub oracle: OracleSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Flow,
            seed: None,
            output: OutputSpec::default(),
            target: TargetSpec::default(),
            init: GaussianSpec::standard(1),
            flow: FlowConfig::default(),
            invariance: InvarianceSpec::default(),
            oracle: OracleSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Also write SVG plots.
    pub plots: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            plots: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    StandardNormal,
    #[default]
    Gaussian,
    Mixture,
}

/// Gaussian given by its mean and either a full covariance or a diagonal.
/// With neither, the covariance is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var: Option<Vec<f64>>,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self::standard(1)
    }
}

impl GaussianSpec {
    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            cov: None,
            var: None,
        }
    }

    pub fn diagonal(mean: Vec<f64>, var: Vec<f64>) -> Self {
        Self {
            mean,
            cov: None,
            var: Some(var),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> Result<Matrix<f64>, String> {
        let d = self.dim();
        if d == 0 {
            return Err("mean must not be empty".into());
        }
        match (&self.cov, &self.var) {
            (Some(_), Some(_)) => Err("give either cov or var, not both".into()),
            (Some(rows), None) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(format!("cov must be {d}x{d}"));
                }
                Matrix::from_rows(rows).map_err(|e| e.to_string())
            }
            (None, Some(v)) => {
                if v.len() != d {
                    return Err(format!("var must have {d} entries, got {}", v.len()));
                }
                Ok(Matrix::diagonal(v))
            }
            (None, None) => Ok(Matrix::identity(d)),
        }
    }

    pub fn params(&self) -> Result<GaussianParams<f64>, String> {
        GaussianParams::new(self.mean.clone(), self.covariance()?).map_err(|e| e.to_string())
    }

    pub fn law(&self) -> Result<GaussianLaw<f64>, String> {
        GaussianLaw::new(self.mean.clone(), self.covariance()?).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSpec {
    pub kind: TargetKind,
    /// Dimension of `standard_normal`.
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<GaussianSpec>>,
    /// The flow sees `scale · γ(x)`.
    pub scale: f64,
    /// Second run on `compare_scale · γ(x)`, diffed against the first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare_scale: Option<f64>,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self {
            kind: TargetKind::Gaussian,
            dim: 1,
            mean: Some(vec![2.0]),
            cov: None,
            var: None,
            weights: None,
            components: None,
            scale: 1.0,
            compare_scale: None,
        }
    }
}

impl TargetSpec {
    fn gaussian_part(&self) -> Result<GaussianSpec, String> {
        let mean = self.mean.clone().ok_or("a gaussian target needs `mean`")?;
        Ok(GaussianSpec {
            mean,
            cov: self.cov.clone(),
            var: self.var.clone(),
        })
    }

    /// The unscaled target.
    pub fn build(&self) -> Result<Target<f64>, String> {
        match self.kind {
            TargetKind::StandardNormal => {
                if self.dim == 0 {
                    return Err("dim must be >= 1".into());
                }
                gaussian_target(vec![0.0; self.dim], Matrix::identity(self.dim)).map_err(|e| e.to_string())
            }
            TargetKind::Gaussian => {
                let g = self.gaussian_part()?;
                gaussian_target(g.mean.clone(), g.covariance()?).map_err(|e| e.to_string())
            }
            TargetKind::Mixture => {
                let weights = self.weights.as_ref().ok_or("a mixture target needs `weights`")?;
                let comps = self.components.as_ref().ok_or("a mixture target needs `components`")?;
                let params = comps.iter().map(GaussianSpec::params).collect::<Result<Vec<_>, _>>()?;
                mixture_target(weights, &params).map_err(|e| e.to_string())
            }
        }
    }

    /// Mean and covariance when the target is a single Gaussian.
    pub fn as_gaussian(&self) -> Option<GaussianSpec> {
        match self.kind {
            TargetKind::StandardNormal => Some(GaussianSpec::standard(self.dim)),
            TargetKind::Gaussian => self.gaussian_part().ok(),
            TargetKind::Mixture => None,
        }
    }

    /// Per-component (mean, sd) of the first coordinate.
    fn components_1d(&self) -> Vec<(f64, f64)> {
        let one = |g: &GaussianSpec| -> Option<(f64, f64)> {
            let c = g.covariance().ok()?;
            Some((*g.mean.first()?, c.get(0, 0).sqrt()))
        };
        match self.kind {
            TargetKind::Mixture => self.components.iter().flatten().filter_map(one).collect(),
            _ => self.as_gaussian().as_ref().and_then(one).into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvarianceSpec {
    pub betas: Vec<f64>,
    pub cs: Vec<f64>,
    /// Defaults to 1001 points over ±5 sd around every component of π and every μ.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec<f64>>,
    /// Densities μ for the divergence shift.
    pub mus: Vec<GaussianSpec>,
}

impl Default for InvarianceSpec {
    fn default() -> Self {
        Self {
            betas: vec![0.0, 0.5, 1.0, 2.0, 3.0],
            cs: vec![0.5, 2.0, 10.0],
            grid: None,
            mus: vec![
                GaussianSpec::diagonal(vec![0.0], vec![1.0]),
                GaussianSpec::diagonal(vec![1.0], vec![1.0]),
            ],
        }
    }
}

impl InvarianceSpec {
    pub fn resolved_grid(&self, target: &TargetSpec) -> GridSpec<f64> {
        if let Some(g) = self.grid {
            return g;
        }
        let mut comps = target.components_1d();
        comps.extend(
            self.mus
                .iter()
                .filter_map(|m| Some((*m.mean.first()?, m.covariance().ok()?.get(0, 0).sqrt()))),
        );
        let lo = comps.iter().map(|(m, s)| m - 5.0 * s).fold(f64::INFINITY, f64::min);
        let hi = comps.iter().map(|(m, s)| m + 5.0 * s).fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi.is_finite() {
            GridSpec { lo, hi, n: 1001 }
        } else {
            GridSpec {
                lo: -5.0,
                hi: 5.0,
                n: 1001,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    /// Comparison times; each must be a multiple of `flow.gamma`.
    pub times: Vec<f64>,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            times: vec![0.0, 0.5, 1.0, 2.0, 3.0],
        }
    }
}

/// A parsed configuration together with its source, for error locations.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    source: Option<(PathBuf, String)>,
}

impl LoadedConfig {
    /// Defaults for `experiment`; oracle-compare runs the Fisher–Rao KL flow.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut config = RunConfig {
            experiment,
            ..RunConfig::default()
        };
        if experiment == Experiment::OracleCompare {
            config.flow.metric = bregflow::Metric::FisherRao;
        }
        Self { config, source: None }
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let config = parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self {
            config,
            source: Some((path.to_path_buf(), text)),
        })
    }

    pub fn parse_str(text: &str) -> Result<Self, CliError> {
        let config = parse(text).map_err(CliError::Config)?;
        Ok(Self {
            config,
            source: Some((PathBuf::from("<config>"), text.to_string())),
        })
    }

    /// Configuration error pointing at the line where `key` is set, if any.
    pub fn error_at(&self, key: &str, msg: impl std::fmt::Display) -> CliError {
        match &self.source {
            Some((path, text)) => match locate(text, key) {
                Some(line) => CliError::Config(format!("{}:{line}: {msg}", path.display())),
                None => CliError::Config(format!("{}: {msg}", path.display())),
            },
            None => CliError::Config(msg.to_string()),
        }
    }

    /// Checks everything that does not need a run to find out.
    pub fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        let target = c.target.build().map_err(|e| self.error_at("kind", e))?;
        if !(c.target.scale > 0.0 && c.target.scale.is_finite()) {
            return Err(self.error_at("scale", "scale must be > 0"));
        }
        if let Some(s) = c.target.compare_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(self.error_at("compare_scale", "compare_scale must be > 0"));
            }
        }
        c.flow
            .validate()
            .map_err(|e| self.error_at(flow_key(&e.to_string()), e))?;
        match c.experiment {
            Experiment::Flow => {
                let law = c.init.law().map_err(|e| self.error_at("mean", format!("init: {e}")))?;
                check_dim(self, law.dim(), &target)?;
            }
            Experiment::Invariance => {
                if bregflow::LogDensity::dim(&target) != 1 {
                    return Err(self.error_at("kind", "the invariance experiment needs a 1-d target"));
                }
                let g = c.invariance.resolved_grid(&c.target);
                if g.n < 2 || g.lo >= g.hi || g.lo.is_nan() || g.hi.is_nan() {
                    return Err(self.error_at("grid", "grid needs lo < hi and n >= 2"));
                }
                for mu in &c.invariance.mus {
                    if mu.dim() != 1 {
                        return Err(self.error_at("mus", "every mu must be 1-d"));
                    }
                    mu.law().map_err(|e| self.error_at("mus", e))?;
                }
            }
            Experiment::OracleCompare => {
                let g = c
                    .target
                    .as_gaussian()
                    .ok_or_else(|| self.error_at("kind", "oracle-compare needs a Gaussian target"))?;
                if g.dim() != 1 || c.init.dim() != 1 {
                    return Err(self.error_at("kind", "oracle-compare needs 1-d target and init"));
                }
                c.init.law().map_err(|e| self.error_at("mean", format!("init: {e}")))?;
                for &t in &c.oracle.times {
                    oracle_step(t, c.flow.gamma).map_err(|e| self.error_at("times", e))?;
                }
            }
        }
        Ok(())
    }
}

fn check_dim(cfg: &LoadedConfig, init_dim: usize, target: &Target<f64>) -> Result<(), CliError> {
    let d = bregflow::LogDensity::dim(target);
    if init_dim != d {
        return Err(cfg.error_at("mean", format!("init has dimension {init_dim}, target has {d}")));
    }
    Ok(())
}

/// Step index of an oracle time.
pub fn oracle_step(t: f64, gamma: f64) -> Result<u64, String> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(format!("time {t} must be >= 0"));
    }
    let k = (t / gamma).round();
    if (k * gamma - t).abs() > 1e-9 * t.max(1.0) {
        return Err(format!("time {t} is not a multiple of gamma = {gamma}"));
    }
    Ok(k as u64)
}

fn flow_key(msg: &str) -> &'static str {
    for key in [
        "resample_threshold",
        "kernel_lengthscale",
        "n_particles",
        "bandwidth",
        "gamma",
        "transport",
    ] {
        if msg.contains(key) {
            return key;
        }
    }
    if msg.contains("Stein") {
        "metric"
    } else {
        "beta"
    }
}

fn parse(text: &str) -> Result<RunConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

/// 1-based line of the first `key = ...` assignment.
fn locate(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|line| {
            let line = line.trim_start();
            line.strip_prefix(key)
                .map(|rest| rest.trim_start().starts_with('='))
                .unwrap_or(false)
        })
        .map(|i| i + 1)
}

impl RunConfig {
    /// Seed used by the run: `seed` if set, else `flow.seed`.
    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(self.flow.seed)
    }

    /// Folds the top-level seed into `flow.seed`.
    pub fn resolve(mut self) -> Self {
        let seed = self.effective_seed();
        self.seed = Some(seed);
        self.flow.seed = seed;
        self
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Runtime(format!("config echo: {e}")))
    }
}
