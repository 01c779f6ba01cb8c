//! Simulation study: a two-arm trial drawn from a known trivariate normal,
//! imputed under a grid of partial correlations, and scored against the
//! true potential outcomes.
//!
//! `(Y0, Y1, X)` are jointly normal with means `(0, 1, 2)`, unit variances,
//! `Cov(Y0, Y1) = 0.8` and `Cov(Y0, X) = Cov(Y1, X) = 0.5`, so the true
//! partial correlation of the outcomes given `X` is `0.55 / 0.75`. The first
//! half of the units are observed under arm 0, the second half under arm 1.
//!
//! No doubly-robust or machine-learning comparator is included; the `ρ = 0`
//! run is the conditional-independence reference.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{Assignment, Covariate, Execution, RhoSpec, SpcConfig, TrialFrame};
use crate::engine::{multiply_impute, ImputationSet};
use crate::error::{Result, SpcError};
use crate::exec::try_map_indexed;
use crate::numerics::{cholesky, draw_mvn_factored, RngStream, SymMatrix, PSD_TOL};
use crate::pooling::{
    ate, covariance_estimate, ite_posterior, mean_estimate, pool_estimates, variance_estimate, Contrast,
    IntervalMethod, ItePosterior, PooledEstimate,
};

pub const MEANS: [f64; 3] = [0.0, 1.0, 2.0];
pub const COVARIANCE: [[f64; 3]; 3] = [[1.0, 0.8, 0.5], [0.8, 1.0, 0.5], [0.5, 0.5, 1.0]];

/// Partial correlation of `Y0` and `Y1` given `X` under [`COVARIANCE`].
pub fn true_partial_correlation() -> f64 {
    let (r01, r0x, r1x) = (COVARIANCE[0][1], COVARIANCE[0][2], COVARIANCE[1][2]);
    (r01 - r0x * r1x) / ((1.0 - r0x * r0x).sqrt() * (1.0 - r1x * r1x).sqrt())
}

/// True potential outcomes behind a generated trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub unit_ids: Vec<String>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub x: Vec<f64>,
    pub tau: Vec<f64>,
}

/// Draws `n` units; arm 0 observed for the first `n/2`, arm 1 for the rest.
pub fn generate_trial(n: usize, stream: RngStream) -> Result<(TrialFrame, SimTruth)> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(SpcError::InvalidArgument(format!(
            "number of units must be positive and even, got {n}"
        )));
    }
    let cov = SymMatrix::from_lower_fn(3, |i, j| COVARIANCE[i][j]);
    let factor = cholesky(&cov, PSD_TOL)?;
    let mean = DVector::from_row_slice(&MEANS);
    let mut rng = stream.rng();
    let mut truth = SimTruth {
        unit_ids: (1..=n).map(|i| i.to_string()).collect(),
        y0: Vec::with_capacity(n),
        y1: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        tau: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let d = draw_mvn_factored(&mean, &factor, &mut rng);
        truth.y0.push(d[0]);
        truth.y1.push(d[1]);
        truth.x.push(d[2]);
        truth.tau.push(d[1] - d[0]);
    }
    let half = n / 2;
    let assignment = (0..n).map(|i| Assignment::Arm(usize::from(i >= half))).collect();
    let outcome = (0..n)
        .map(|i| Some(if i < half { truth.y0[i] } else { truth.y1[i] }))
        .collect();
    let frame = TrialFrame::new(
        truth.unit_ids.clone(),
        assignment,
        outcome,
        vec![Covariate::complete("x", truth.x.clone())],
        vec!["0".into(), "1".into()],
    )?
    .with_column_names("arm", "y");
    Ok((frame, truth))
}

/// Accuracy of individual effect posteriors against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IteMetrics {
    /// Mean over units of `mean_m(τ̂ᵢ) - τᵢ`.
    pub mean_bias: f64,
    /// Sample variance over units of the same bias.
    pub variance_of_bias: f64,
    /// Fraction of units whose 95% interval contains `τᵢ`.
    pub coverage: f64,
    /// Mean over units of `|mean_m(τ̂ᵢ) - τᵢ|`.
    pub mean_distance: f64,
}

pub fn ite_metrics_from_posteriors(posteriors: &[ItePosterior], truth: &SimTruth) -> Result<IteMetrics> {
    let in_sample: Vec<&ItePosterior> = posteriors
        .iter()
        .filter(|p| p.assignment != Assignment::OutOfSample)
        .collect();
    if in_sample.len() != truth.tau.len() {
        return Err(SpcError::Misaligned(in_sample.len().min(truth.tau.len())));
    }
    let mut bias = Vec::with_capacity(in_sample.len());
    let mut covered = 0usize;
    for (i, (p, id)) in in_sample.iter().zip(&truth.unit_ids).enumerate() {
        if &p.unit_id != id {
            return Err(SpcError::Misaligned(i));
        }
        bias.push(p.mean - truth.tau[i]);
        covered += usize::from(p.covers(truth.tau[i]));
    }
    let n = bias.len() as f64;
    let mean_bias = bias.iter().sum::<f64>() / n;
    Ok(IteMetrics {
        mean_bias,
        variance_of_bias: bias.iter().map(|b| (b - mean_bias).powi(2)).sum::<f64>() / (n - 1.0),
        coverage: covered as f64 / n,
        mean_distance: bias.iter().map(|b| b.abs()).sum::<f64>() / n,
    })
}

pub fn ite_metrics(set: &ImputationSet, truth: &SimTruth, method: IntervalMethod) -> Result<IteMetrics> {
    ite_metrics_from_posteriors(&ite_posterior(set, Contrast::default(), method)?, truth)
}

/// A potential-outcome distribution parameter scored for bias and interval
/// coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Parameter {
    MeanY0,
    MeanY1,
    VarY0,
    VarY1,
    CovY0Y1,
    CovY0X,
    CovY1X,
}

impl Parameter {
    pub const ALL: [Parameter; 7] = [
        Parameter::MeanY0,
        Parameter::MeanY1,
        Parameter::VarY0,
        Parameter::VarY1,
        Parameter::CovY0Y1,
        Parameter::CovY0X,
        Parameter::CovY1X,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Parameter::MeanY0 => "E(y0)",
            Parameter::MeanY1 => "E(y1)",
            Parameter::VarY0 => "Var(y0)",
            Parameter::VarY1 => "Var(y1)",
            Parameter::CovY0Y1 => "Cov(y0,y1)",
            Parameter::CovY0X => "Cov(y0,x)",
            Parameter::CovY1X => "Cov(y1,x)",
        }
    }

    pub fn truth(self) -> f64 {
        match self {
            Parameter::MeanY0 => MEANS[0],
            Parameter::MeanY1 => MEANS[1],
            Parameter::VarY0 => COVARIANCE[0][0],
            Parameter::VarY1 => COVARIANCE[1][1],
            Parameter::CovY0Y1 => COVARIANCE[0][1],
            Parameter::CovY0X => COVARIANCE[0][2],
            Parameter::CovY1X => COVARIANCE[1][2],
        }
    }
}

/// Pools each [`Parameter`] over the completed datasets, using the
/// normal-theory complete-data variances and `n - 1` complete-data df.
pub fn pooled_parameters(set: &ImputationSet) -> Result<Vec<(Parameter, PooledEstimate)>> {
    let rows: Vec<usize> = (0..set.frame.n_units())
        .filter(|&i| set.frame.assignment()[i] != Assignment::OutOfSample)
        .collect();
    let complete_df = Some(rows.len() as f64 - 1.0);
    Parameter::ALL
        .iter()
        .map(|&p| {
            let per = set
                .datasets
                .iter()
                .map(|d| {
                    let col = |a: usize| rows.iter().map(|&i| d.outcome(i, a)).collect::<Vec<f64>>();
                    let x = || rows.iter().map(|&i| d.covariates[(i, 0)]).collect::<Vec<f64>>();
                    match p {
                        Parameter::MeanY0 => mean_estimate(&col(0)),
                        Parameter::MeanY1 => mean_estimate(&col(1)),
                        Parameter::VarY0 => variance_estimate(&col(0)),
                        Parameter::VarY1 => variance_estimate(&col(1)),
                        Parameter::CovY0Y1 => covariance_estimate(&col(0), &col(1)),
                        Parameter::CovY0X => covariance_estimate(&col(0), &x()),
                        Parameter::CovY1X => covariance_estimate(&col(1), &x()),
                    }
                })
                .collect::<Vec<_>>();
            Ok((p, pool_estimates(&per, complete_df)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Units per simulated trial.
    pub n: usize,
    /// Imputations per trial and correlation.
    pub m: usize,
    pub replications: usize,
    pub rho_grid: Vec<f64>,
    pub seed: u64,
    pub fcs_iterations: usize,
    pub interval: IntervalMethod,
    /// Every `ite_stride`-th unit of the first replication has its effect
    /// draws kept for plotting.
    pub ite_stride: usize,
    #[serde(skip)]
    pub execution: Execution,
}

impl StudyConfig {
    /// Replications used at desk scale; the Monte Carlo error on a coverage
    /// rate near 0.95 is then about 0.015.
    pub const DEFAULT_REPLICATIONS: usize = 200;

    pub fn new(n: usize, m: usize, replications: usize, rho_grid: Vec<f64>, seed: u64) -> Self {
        Self {
            n,
            m,
            replications,
            rho_grid,
            seed,
            fcs_iterations: SpcConfig::DEFAULT_FCS_ITERATIONS,
            interval: IntervalMethod::default(),
            ite_stride: 100,
            execution: Execution::default(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(SpcError::InvalidArgument("at least one replication is required".into()));
        }
        if self.rho_grid.is_empty() {
            return Err(SpcError::InvalidArgument("correlation grid is empty".into()));
        }
        if let Some(&bad) = self.rho_grid.iter().find(|r| !(-1.0..=1.0).contains(*r)) {
            return Err(SpcError::OutOfRange(bad));
        }
        if self.ite_stride == 0 {
            return Err(SpcError::InvalidArgument("ite_stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParameterResult {
    pub parameter: Parameter,
    pub estimate: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub covered: bool,
}

/// Outcome of one (correlation, replication) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationResult {
    pub rho: f64,
    pub replication: usize,
    pub ate_bias: f64,
    pub parameters: Vec<ParameterResult>,
    pub ite: IteMetrics,
}

/// Effect draws of one unit kept for plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IteDrawRecord {
    pub rho: f64,
    pub unit_id: String,
    pub observed_arm: usize,
    pub tau_true: f64,
    pub draws: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub config: StudyConfig,
    /// Sorted by (position in the grid, replication).
    pub results: Vec<ReplicationResult>,
    pub ite_draws: Vec<IteDrawRecord>,
}

struct ReplicationOutput {
    results: Vec<ReplicationResult>,
    draws: Vec<IteDrawRecord>,
}

fn run_replication(config: &StudyConfig, r: usize, inner: Execution) -> Result<ReplicationOutput> {
    let stream = RngStream::root(config.seed).substream(r as u64);
    let (frame, truth) = generate_trial(config.n, stream.substream(0))?;
    // The same imputation streams are reused across the grid so that
    // correlations are compared on common random numbers.
    let imputation_seed = stream.substream(1).derived_seed();
    let true_ate = MEANS[1] - MEANS[0];
    let mut results = Vec::with_capacity(config.rho_grid.len());
    let mut draws = Vec::new();
    for &rho in &config.rho_grid {
        let mut spc = SpcConfig::new(config.m, imputation_seed, RhoSpec::two_arm(rho)?).with_execution(inner);
        spc.fcs_iterations = config.fcs_iterations;
        let set = multiply_impute(&frame, &spc)?;
        let posteriors = ite_posterior(&set, Contrast::default(), config.interval)?;
        let ite = ite_metrics_from_posteriors(&posteriors, &truth)?;
        let parameters = pooled_parameters(&set)?
            .into_iter()
            .map(|(parameter, p)| ParameterResult {
                parameter,
                estimate: p.estimate,
                ci_lower: p.ci_lower,
                ci_upper: p.ci_upper,
                covered: p.covers(parameter.truth()),
            })
            .collect();
        let ate_bias = ate(&set, Contrast::default())?.estimate - true_ate;
        if r == 0 {
            draws.extend(
                posteriors
                    .into_iter()
                    .enumerate()
                    .step_by(config.ite_stride)
                    .map(|(i, p)| IteDrawRecord {
                        rho,
                        unit_id: p.unit_id,
                        observed_arm: p.assignment.arm().unwrap_or(0),
                        tau_true: truth.tau[i],
                        draws: p.draws,
                    }),
            );
        }
        results.push(ReplicationResult {
            rho,
            replication: r,
            ate_bias,
            parameters,
            ite,
        });
    }
    Ok(ReplicationOutput { results, draws })
}

/// Fresh trial per replication, imputed under every correlation in the grid.
pub fn replication_study(config: &StudyConfig) -> Result<MetricReport> {
    config.check()?;
    // Replications are the parallel unit; imputations inside run in order.
    let outputs = try_map_indexed(config.replications, config.execution, |r| {
        run_replication(config, r, Execution::Sequential)
    })?;
    let mut results = Vec::with_capacity(config.replications * config.rho_grid.len());
    let mut ite_draws = Vec::new();
    for out in outputs {
        results.extend(out.results);
        ite_draws.extend(out.draws);
    }
    let grid_pos = |rho: f64| config.rho_grid.iter().position(|&g| g == rho).unwrap_or(usize::MAX);
    results.sort_by_key(|r| (grid_pos(r.rho), r.replication));
    ite_draws.sort_by_key(|d| grid_pos(d.rho));
    Ok(MetricReport {
        config: config.clone(),
        results,
        ite_draws,
    })
}

/// Mean and Monte Carlo standard error of a per-replication quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McSummary {
    pub mean: f64,
    pub se: f64,
}

impl McSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub rho: f64,
    pub mean_bias: McSummary,
    pub variance_of_bias: McSummary,
    pub coverage: McSummary,
    pub mean_distance: McSummary,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2Row {
    pub rho: f64,
    pub parameter: Parameter,
    pub truth: f64,
    pub estimate: f64,
    pub coverage: f64,
    pub replications: usize,
}

impl MetricReport {
    pub fn results_for(&self, rho: f64) -> impl Iterator<Item = &ReplicationResult> {
        self.results.iter().filter(move |r| r.rho == rho)
    }

    pub fn table1(&self) -> Vec<Table1Row> {
        self.config
            .rho_grid
            .iter()
            .map(|&rho| {
                let rows: Vec<&ReplicationResult> = self.results_for(rho).collect();
                let summary =
                    |f: fn(&IteMetrics) -> f64| McSummary::of(&rows.iter().map(|r| f(&r.ite)).collect::<Vec<_>>());
                Table1Row {
                    rho,
                    mean_bias: summary(|m| m.mean_bias),
                    variance_of_bias: summary(|m| m.variance_of_bias),
                    coverage: summary(|m| m.coverage),
                    mean_distance: summary(|m| m.mean_distance),
                    replications: rows.len(),
                }
            })
            .collect()
    }

    pub fn table2(&self) -> Vec<Table2Row> {
        let mut out = Vec::new();
        for &rho in &self.config.rho_grid {
            let rows: Vec<&ReplicationResult> = self.results_for(rho).collect();
            let reps = rows.len() as f64;
            for (k, &parameter) in Parameter::ALL.iter().enumerate() {
                let estimate = rows.iter().map(|r| r.parameters[k].estimate).sum::<f64>() / reps;
                let covered = rows.iter().filter(|r| r.parameters[k].covered).count() as f64;
                out.push(Table2Row {
                    rho,
                    parameter,
                    truth: parameter.truth(),
                    estimate,
                    coverage: covered / reps,
                    replications: rows.len(),
                });
            }
        }
        out
    }

    /// Mean and standard error over replications of `f(rho_a) - f(rho_b)`,
    /// paired by replication.
    pub fn paired_difference(&self, rho_a: f64, rho_b: f64, f: fn(&IteMetrics) -> f64) -> McSummary {
        let a: Vec<&ReplicationResult> = self.results_for(rho_a).collect();
        let b: Vec<&ReplicationResult> = self.results_for(rho_b).collect();
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| f(&x.ite) - f(&y.ite)).collect();
        McSummary::of(&diffs)
    }

    pub fn write_table1_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "rho",
            "mean_bias",
            "mean_bias_se",
            "variance_of_bias",
            "variance_of_bias_se",
            "coverage",
            "coverage_se",
            "mean_distance",
            "mean_distance_se",
            "replications",
        ])?;
        for r in self.table1() {
            w.write_record([
                fmt(r.rho),
                fmt(r.mean_bias.mean),
                fmt(r.mean_bias.se),
                fmt(r.variance_of_bias.mean),
                fmt(r.variance_of_bias.se),
                fmt(r.coverage.mean),
                fmt(r.coverage.se),
                fmt(r.mean_distance.mean),
                fmt(r.mean_distance.se),
                r.replications.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_table2_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "rho",
            "parameter",
            "truth",
            "estimate",
            "bias",
            "coverage",
            "replications",
        ])?;
        for r in self.table2() {
            w.write_record([
                fmt(r.rho),
                r.parameter.label().to_string(),
                fmt(r.truth),
                fmt(r.estimate),
                fmt(r.estimate - r.truth),
                fmt(r.coverage),
                r.replications.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_ite_draws_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["rho", "unit_id", "observed_arm", "tau_true", "imputation", "tau_draw"])?;
        for d in &self.ite_draws {
            for (k, v) in d.draws.iter().enumerate() {
                w.write_record([
                    fmt(d.rho),
                    d.unit_id.clone(),
                    d.observed_arm.to_string(),
                    fmt(d.tau_true),
                    (k + 1).to_string(),
                    fmt(*v),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.6}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityPoint {
    pub rho: f64,
    pub coverage: McSummary,
    pub mean_distance: McSummary,
    pub variance_of_bias: McSummary,
    pub mean_bias: McSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityCurve {
    pub points: Vec<SensitivityPoint>,
    pub report: MetricReport,
}

/// Coverage and mean distance of the individual effects at each grid value.
pub fn sensitivity_sweep(config: &StudyConfig) -> Result<SensitivityCurve> {
    let report = replication_study(config)?;
    let points = report
        .table1()
        .into_iter()
        .map(|r| SensitivityPoint {
            rho: r.rho,
            coverage: r.coverage,
            mean_distance: r.mean_distance,
            variance_of_bias: r.variance_of_bias,
            mean_bias: r.mean_bias,
        })
        .collect();
    Ok(SensitivityCurve { points, report })
}

impl SensitivityCurve {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "rho",
            "coverage",
            "coverage_se",
            "mean_distance",
            "mean_distance_se",
            "variance_of_bias",
            "mean_bias",
            "replications",
        ])?;
        let reps = self.report.config.replications.to_string();
        for p in &self.points {
            w.write_record([
                fmt(p.rho),
                fmt(p.coverage.mean),
                fmt(p.coverage.se),
                fmt(p.mean_distance.mean),
                fmt(p.mean_distance.se),
                fmt(p.variance_of_bias.mean),
                fmt(p.mean_bias.mean),
                reps.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
