//! Experiment drivers.

use std::path::Path;
use std::time::Instant;

use bregflow::{
    constancy_defect, divergence_shift, exact_fr_gaussian, first_variation_shift, gaussian_target, scan, to_grid,
    BetaGenerator, Ensemble, FlowRunner, GaussianLaw, GridNormalisation, InvarianceReport, KnownNormaliser, LogDensity,
    Matrix, Metric, Reference, ScaledTarget, StepRecord,
};
use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{oracle_step, Experiment, RunConfig};
use crate::error::CliError;
use crate::output::{cell, to_json, write_file, Csv};
use crate::plot::{line_chart, Series};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub step: u64,
    pub time: f64,
    pub ess: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl From<&StepRecord<f64>> for Moments {
    fn from(r: &StepRecord<f64>) -> Self {
        Self {
            step: r.step,
            time: r.time,
            ess: r.ess,
            mean: r.mean.clone(),
            var: r.var.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDiff {
    pub scale: f64,
    pub compare_scale: f64,
    pub max_abs_position_diff: f64,
    pub max_abs_log_weight_diff: f64,
    pub max_abs_mean_diff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowSummary {
    pub experiment: Experiment,
    pub seed: u64,
    pub scale: f64,
    pub wall_time_s: f64,
    pub n_steps: usize,
    pub n_particles: usize,
    pub initial: Moments,
    #[serde(rename = "final")]
    pub last: Moments,
    pub resample_count: usize,
    pub clamped_total: usize,
    pub mean_acceptance_rate: Option<f64>,
    pub paired: Option<PairedDiff>,
    pub config: RunConfig,
}

struct Trajectory {
    ensemble: Ensemble<f64>,
    records: Vec<StepRecord<f64>>,
}

fn simulate<T>(cfg: &RunConfig, target: &T) -> Result<Trajectory, CliError>
where
    T: LogDensity<f64> + KnownNormaliser<f64>,
{
    let reference = Reference::for_target(target, cfg.flow.use_normalised)?;
    let runner = FlowRunner::new(cfg.flow.clone(), target, reference)?;
    let law = cfg.init.law().map_err(CliError::Config)?;
    let mut ensemble = runner.initial_ensemble(&law)?;
    let every = (cfg.flow.n_steps / 10).max(1) as u64;
    let records = runner.run(&mut ensemble, |r, _| {
        if r.step % every == 0 {
            debug!("step {} t={:.4} ess={:.1} mean={:?}", r.step, r.time, r.ess, r.mean);
        }
    })?;
    Ok(Trajectory { ensemble, records })
}

fn trajectory_csv(records: &[StepRecord<f64>], dim: usize) -> Csv {
    let mut header = vec!["step".to_string(), "time".into(), "ess".into()];
    header.extend((0..dim).map(|k| format!("mean_{k}")));
    header.extend((0..dim).map(|k| format!("var_{k}")));
    header.extend(["acceptance_rate".into(), "resampled".into(), "clamped".into()]);
    let mut csv = Csv::new(header);
    for r in records {
        let mut row = vec![r.step.to_string(), cell(r.time), cell(r.ess)];
        row.extend(r.mean.iter().map(|&m| cell(m)));
        row.extend(r.var.iter().map(|&v| cell(v)));
        row.push(r.acceptance_rate.map(cell).unwrap_or_default());
        row.push(u8::from(r.resampled).to_string());
        row.push(r.clamped.to_string());
        csv.push(&row);
    }
    csv
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs a flow; writes `trajectory.csv`, `summary.json` and optionally `trajectory.svg`.
pub fn run_flow(cfg: &RunConfig, out: &Path) -> Result<FlowSummary, CliError> {
    let cfg = cfg.clone().resolve();
    let start = Instant::now();
    let base = cfg.target.build().map_err(CliError::Config)?;
    let target = ScaledTarget::new(&base, cfg.target.scale)?;
    info!(
        "flow: metric={:?} beta={} gamma={} N={} steps={} seed={}",
        cfg.flow.metric, cfg.flow.beta, cfg.flow.gamma, cfg.flow.n_particles, cfg.flow.n_steps, cfg.flow.seed
    );
    let run = simulate(&cfg, &target)?;

    let paired = match cfg.target.compare_scale {
        Some(c) => {
            let other = simulate(&cfg, &ScaledTarget::new(&base, c)?)?;
            let mean_diff = run
                .records
                .iter()
                .zip(&other.records)
                .map(|(a, b)| max_abs_diff(&a.mean, &b.mean))
                .fold(0.0, f64::max);
            Some(PairedDiff {
                scale: cfg.target.scale,
                compare_scale: c,
                max_abs_position_diff: max_abs_diff(run.ensemble.positions(), other.ensemble.positions()),
                max_abs_log_weight_diff: max_abs_diff(run.ensemble.log_weights(), other.ensemble.log_weights()),
                max_abs_mean_diff: mean_diff,
            })
        }
        None => None,
    };

    std::fs::create_dir_all(out)?;
    let dim = run.ensemble.dim();
    trajectory_csv(&run.records, dim).write(&out.join("trajectory.csv"))?;
    if cfg.output.plots {
        let mut series = Vec::new();
        for k in 0..dim {
            series.push(Series::new(
                format!("mean_{k}"),
                run.records.iter().map(|r| (r.time, r.mean[k])).collect(),
            ));
            series.push(Series::new(
                format!("var_{k}"),
                run.records.iter().map(|r| (r.time, r.var[k])).collect(),
            ));
        }
        let title = format!("{:?} flow, beta = {}", cfg.flow.metric, cfg.flow.beta);
        write_file(
            &out.join("trajectory.svg"),
            line_chart(&title, "time", &series).as_bytes(),
        )?;
    }

    let rates: Vec<f64> = run.records.iter().filter_map(|r| r.acceptance_rate).collect();
    let summary = FlowSummary {
        experiment: Experiment::Flow,
        seed: cfg.flow.seed,
        scale: cfg.target.scale,
        wall_time_s: start.elapsed().as_secs_f64(),
        n_steps: cfg.flow.n_steps,
        n_particles: cfg.flow.n_particles,
        initial: Moments::from(run.records.first().expect("initial record")),
        last: Moments::from(run.records.last().expect("initial record")),
        resample_count: run.records.iter().filter(|r| r.resampled).count(),
        clamped_total: run.records.iter().map(|r| r.clamped).sum(),
        mean_acceptance_rate: (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
        paired,
        config: cfg,
    };
    write_file(&out.join("summary.json"), to_json(&summary)?.as_bytes())?;
    info!("flow finished in {:.2}s", summary.wall_time_s);
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceRow {
    pub beta: f64,
    pub c: f64,
    pub constancy_defect: f64,
    pub mean_shift: f64,
    pub divergence_shift: Option<f64>,
    pub divergence_spread: Option<f64>,
}

impl From<&InvarianceReport<f64>> for InvarianceRow {
    fn from(r: &InvarianceReport<f64>) -> Self {
        Self {
            beta: r.beta,
            c: r.c,
            constancy_defect: r.constancy_defect,
            mean_shift: r.mean_shift,
            divergence_shift: r.divergence_shift,
            divergence_spread: r.divergence_spread,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceSummary {
    pub experiment: Experiment,
    pub wall_time_s: f64,
    pub grid: bregflow::invariance::GridSpec<f64>,
    pub rows: Vec<InvarianceRow>,
    pub config: RunConfig,
}

/// Scans (β, c); writes `invariance.csv` and `summary.json`.
pub fn run_invariance(cfg: &RunConfig, out: &Path) -> Result<InvarianceSummary, CliError> {
    let cfg = cfg.clone().resolve();
    let start = Instant::now();
    if cfg.target.scale != 1.0 {
        warn!("invariance uses the normalised target; target.scale is ignored");
    }
    let target = cfg.target.build().map_err(CliError::Config)?;
    let g = cfg.invariance.resolved_grid(&cfg.target);
    let pi = to_grid(&target, g.lo, g.hi, g.n, GridNormalisation::Exact)?;
    let mus = cfg
        .invariance
        .mus
        .iter()
        .map(|m| {
            let t = gaussian_target(m.mean.clone(), m.covariance().map_err(CliError::Config)?)?;
            Ok(to_grid(&t, g.lo, g.hi, g.n, GridNormalisation::Exact)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    info!(
        "invariance: {} betas x {} scales on [{}, {}] with {} points",
        cfg.invariance.betas.len(),
        cfg.invariance.cs.len(),
        g.lo,
        g.hi,
        g.n
    );
    let reports = scan(&cfg.invariance.betas, &cfg.invariance.cs, &pi, &mus)?;

    std::fs::create_dir_all(out)?;
    let mut csv = Csv::new([
        "beta",
        "c",
        "constancy_defect",
        "mean_shift",
        "divergence_shift",
        "divergence_spread",
    ]);
    let opt = |x: Option<f64>| x.map(cell).unwrap_or_default();
    for r in &reports {
        csv.push(&[
            cell(r.beta),
            cell(r.c),
            cell(r.constancy_defect),
            cell(r.mean_shift),
            opt(r.divergence_shift),
            opt(r.divergence_spread),
        ]);
    }
    csv.write(&out.join("invariance.csv"))?;
    let summary = InvarianceSummary {
        experiment: Experiment::Invariance,
        wall_time_s: start.elapsed().as_secs_f64(),
        grid: g,
        rows: reports.iter().map(InvarianceRow::from).collect(),
        config: cfg,
    };
    write_file(&out.join("summary.json"), to_json(&summary)?.as_bytes())?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub time: f64,
    pub step: u64,
    pub particle_mean: f64,
    pub particle_var: f64,
    pub oracle_mean: f64,
    pub oracle_var: f64,
    pub abs_err_mean: f64,
    pub abs_err_var: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSummary {
    pub experiment: Experiment,
    pub seed: u64,
    pub wall_time_s: f64,
    /// Error of the initial sample against μ_0.
    pub initial_mc_error_mean: f64,
    pub initial_mc_error_var: f64,
    pub max_abs_err_mean: f64,
    pub max_abs_err_var: f64,
    pub rows: Vec<OracleRow>,
    pub config: RunConfig,
}

/// Particle flow against the exact Fisher–Rao path; writes `oracle.csv` and `summary.json`.
pub fn run_oracle_compare(cfg: &RunConfig, out: &Path) -> Result<OracleSummary, CliError> {
    let mut cfg = cfg.clone().resolve();
    let start = Instant::now();
    let g = cfg
        .target
        .as_gaussian()
        .ok_or_else(|| CliError::Config("oracle-compare needs a Gaussian target".into()))?;
    if g.dim() != 1 || cfg.init.dim() != 1 {
        return Err(CliError::Config("oracle-compare needs 1-d target and init".into()));
    }
    if cfg.flow.metric != Metric::FisherRao || cfg.flow.beta != 1.0 {
        warn!(
            "the oracle is the Fisher-Rao KL path; this run uses {:?} with beta {}",
            cfg.flow.metric, cfg.flow.beta
        );
    }
    let steps = cfg
        .oracle
        .times
        .iter()
        .map(|&t| oracle_step(t, cfg.flow.gamma).map_err(CliError::Config))
        .collect::<Result<Vec<_>, _>>()?;
    cfg.flow.n_steps = steps.iter().copied().max().unwrap_or(0) as usize;

    let pi_law = g.law().map_err(CliError::Config)?;
    let mu0 = cfg.init.law().map_err(CliError::Config)?;
    let base = cfg.target.build().map_err(CliError::Config)?;
    let run = simulate(&cfg, &ScaledTarget::new(&base, cfg.target.scale)?)?;

    let mut rows = Vec::new();
    for (&t, &k) in cfg.oracle.times.iter().zip(&steps) {
        let rec = &run.records[k as usize];
        let exact = exact_fr_gaussian(&mu0, &pi_law, t)?;
        let (om, ov) = (exact.mean()[0], exact.var()[0]);
        rows.push(OracleRow {
            time: t,
            step: k,
            particle_mean: rec.mean[0],
            particle_var: rec.var[0],
            oracle_mean: om,
            oracle_var: ov,
            abs_err_mean: (rec.mean[0] - om).abs(),
            abs_err_var: (rec.var[0] - ov).abs(),
        });
    }

    std::fs::create_dir_all(out)?;
    let mut csv = Csv::new([
        "time",
        "step",
        "particle_mean",
        "particle_var",
        "oracle_mean",
        "oracle_var",
        "abs_err_mean",
        "abs_err_var",
    ]);
    for r in &rows {
        csv.push(&[
            cell(r.time),
            r.step.to_string(),
            cell(r.particle_mean),
            cell(r.particle_var),
            cell(r.oracle_mean),
            cell(r.oracle_var),
            cell(r.abs_err_mean),
            cell(r.abs_err_var),
        ]);
    }
    csv.write(&out.join("oracle.csv"))?;
    if cfg.output.plots {
        let curve = |f: fn(&OracleRow) -> f64| rows.iter().map(|r| (r.time, f(r))).collect::<Vec<_>>();
        let series = [
            Series::new("particle mean", curve(|r| r.particle_mean)),
            Series::new("exact mean", curve(|r| r.oracle_mean)),
            Series::new("particle var", curve(|r| r.particle_var)),
            Series::new("exact var", curve(|r| r.oracle_var)),
        ];
        write_file(
            &out.join("oracle.svg"),
            line_chart("particle flow vs exact Fisher-Rao path", "time", &series).as_bytes(),
        )?;
    }

    let init = &run.records[0];
    let summary = OracleSummary {
        experiment: Experiment::OracleCompare,
        seed: cfg.flow.seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        initial_mc_error_mean: (init.mean[0] - mu0.mean()[0]).abs(),
        initial_mc_error_var: (init.var[0] - mu0.var()[0]).abs(),
        max_abs_err_mean: rows.iter().map(|r| r.abs_err_mean).fold(0.0, f64::max),
        max_abs_err_var: rows.iter().map(|r| r.abs_err_var).fold(0.0, f64::max),
        rows,
        config: cfg,
    };
    write_file(&out.join("summary.json"), to_json(&summary)?.as_bytes())?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct SelfCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// A few fast checks of the installed build.
pub fn selftest() -> Vec<SelfCheck> {
    let mut checks = Vec::new();
    let mut add = |name: &'static str, outcome: Result<(bool, String), bregflow::Error>| {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, e.to_string()));
        checks.push(SelfCheck { name, passed, detail });
    };
    let normal = |m: f64| gaussian_target(vec![m], Matrix::diagonal(&[1.0]));

    add(
        "KL shift is constant",
        (|| {
            let pi = to_grid(&normal(0.0)?, -5.0, 5.0, 1001, GridNormalisation::Exact)?;
            let d = constancy_defect(&first_variation_shift(&BetaGenerator::kl(), 2.0, &pi)?);
            Ok((d <= 1e-10, format!("defect {d:.2e}")))
        })(),
    );
    add(
        "beta = 2 shift is not constant",
        (|| {
            let pi = to_grid(&normal(0.0)?, -5.0, 5.0, 1001, GridNormalisation::Exact)?;
            let d = constancy_defect(&first_variation_shift(&BetaGenerator::new(2.0)?, 2.0, &pi)?);
            Ok(((d - 0.398941).abs() < 1e-5, format!("defect {d:.6}")))
        })(),
    );
    add(
        "KL divergence shift",
        (|| {
            let pi = to_grid(&normal(0.0)?, -10.0, 10.0, 4001, GridNormalisation::Exact)?;
            let mu = to_grid(&normal(1.0)?, -10.0, 10.0, 4001, GridNormalisation::Exact)?;
            let s = divergence_shift(&BetaGenerator::kl(), 2.0, &mu, &pi)?;
            Ok(((s - (1.0 - 2f64.ln())).abs() < 1e-8, format!("shift {s:.9}")))
        })(),
    );
    add(
        "exact Fisher-Rao path",
        (|| {
            let e = exact_fr_gaussian(
                &GaussianLaw::univariate(0.0, 1.0)?,
                &GaussianLaw::univariate(2.0, 1.0)?,
                2f64.ln(),
            )?;
            let ok = (e.mean()[0] - 1.0).abs() < 1e-12 && (e.var()[0] - 1.0).abs() < 1e-12;
            Ok((ok, format!("N({:.12}, {:.12})", e.mean()[0], e.var()[0])))
        })(),
    );
    add(
        "KL flow replay under scaling",
        (|| {
            let base = normal(2.0)?;
            let cfg = bregflow::FlowConfig {
                metric: Metric::Wfr,
                n_steps: 10,
                n_particles: 200,
                seed: 1,
                ..Default::default()
            };
            let law = GaussianLaw::univariate(0.0, 1.0)?;
            let a = replay(&cfg, &base, &law)?;
            let b = replay(&cfg, &ScaledTarget::new(&base, 10.0)?, &law)?;
            let dx = max_abs_diff(a.positions(), b.positions());
            let dw = max_abs_diff(a.log_weights(), b.log_weights());
            Ok((dx == 0.0 && dw <= 1e-12, format!("max dx {dx:e}, max dlogw {dw:.1e}")))
        })(),
    );
    checks
}

fn replay<T: LogDensity<f64>>(
    cfg: &bregflow::FlowConfig<f64>,
    target: &T,
    law: &GaussianLaw<f64>,
) -> Result<Ensemble<f64>, bregflow::Error> {
    let runner = FlowRunner::new(cfg.clone(), target, Reference::Unnormalised)?;
    let mut ens = runner.initial_ensemble(law)?;
    runner.run(&mut ens, |_, _| {})?;
    Ok(ens)
}
