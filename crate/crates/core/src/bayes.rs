//! Bayesian normal linear regression under the Jeffreys prior, and the
//! chained-equation (FCS) step that fills incomplete covariates.
//!
//! Under the Jeffreys prior the posterior of a regression of `y` on a design
//! with `p` columns (intercept included) factors as
//!
//! ```text
//! σ² | y      ~ RSS / χ²(n - p)
//! β | σ², y   ~ N(β̂, σ² (XᵀX)⁻¹)
//! ```
//!
//! Fits are computed by sweeping the centred cross-product matrix, so the
//! intercept never enters the pivots and collinear columns are detected one
//! at a time.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::{Assignment, TrialFrame};
use crate::error::{Result, SpcError};
use crate::numerics::{cholesky, draw_scaled_inv_chisq, standard_normal, standard_normal_vector, sweep, SymMatrix};

/// Relative pivot tolerance for rank detection.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Intercept first, then one slope per covariate.
    pub beta_hat: DVector<f64>,
    pub rss: f64,
    pub xtx_inv: SymMatrix,
    pub df: u64,
    xtx_inv_factor: DMatrix<f64>,
}

impl OlsFit {
    pub fn n_params(&self) -> usize {
        self.beta_hat.len()
    }

    /// `β̂ᵀ (1, x)`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        linear_predictor(&self.beta_hat, x)
    }
}

/// `β₀ + Σ βⱼ xⱼ` for a coefficient vector with the intercept first.
pub fn linear_predictor(beta: &DVector<f64>, x: &[f64]) -> f64 {
    debug_assert_eq!(beta.len(), x.len() + 1);
    beta[0] + x.iter().zip(beta.iter().skip(1)).map(|(a, b)| a * b).sum::<f64>()
}

/// Least-squares fit of `y` on an intercept plus the columns of
/// `covariates` (`n × k`). `names` label the columns in error messages.
pub fn fit_ols(covariates: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<OlsFit> {
    let n = covariates.nrows();
    let k = covariates.ncols();
    let p = k + 1;
    if y.len() != n {
        return Err(SpcError::InvalidArgument(format!(
            "outcome has {} rows, covariates have {n}",
            y.len()
        )));
    }
    if n < p + 2 {
        return Err(SpcError::TooFewRows { rows: n, columns: p });
    }
    let nf = n as f64;
    let x_mean: Vec<f64> = (0..k).map(|j| covariates.column(j).sum() / nf).collect();
    let y_mean = y.sum() / nf;

    // Augmented centred cross-products [[XcᵀXc, Xcᵀyc], [ycᵀXc, ycᵀyc]].
    let mut cross = DMatrix::<f64>::zeros(p, p);
    let mut centred = vec![0.0; p];
    for i in 0..n {
        for j in 0..k {
            centred[j] = covariates[(i, j)] - x_mean[j];
        }
        centred[k] = y[i] - y_mean;
        for a in 0..p {
            for b in 0..=a {
                cross[(a, b)] += centred[a] * centred[b];
            }
        }
    }
    let mut aug = SymMatrix::from_lower_fn(p, |a, b| cross[(a, b)]);
    for j in 0..k {
        let original = cross[(j, j)];
        let pivot = aug.get(j, j);
        if original <= 0.0 || pivot <= RANK_TOL * original {
            return Err(SpcError::RankDeficient {
                column: names.get(j).cloned().unwrap_or_else(|| format!("#{j}")),
            });
        }
        aug = sweep(&aug, &[j], 0.0)?;
    }

    let slopes: Vec<f64> = (0..k).map(|j| aug.get(j, k)).collect();
    let rss = aug.get(k, k).max(0.0);
    let mut beta_hat = DVector::zeros(p);
    beta_hat[0] = y_mean - slopes.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    for j in 0..k {
        beta_hat[j + 1] = slopes[j];
    }

    // Inverse of the uncentred design [1, X]ᵀ[1, X] from C⁻¹ = (XcᵀXc)⁻¹:
    // [[1/n + x̄ᵀC⁻¹x̄, -x̄ᵀC⁻¹], [-C⁻¹x̄, C⁻¹]].
    let c_inv = |a: usize, b: usize| -aug.get(a, b);
    let c_inv_mean: Vec<f64> = (0..k).map(|a| (0..k).map(|b| c_inv(a, b) * x_mean[b]).sum()).collect();
    let corner = 1.0 / nf + c_inv_mean.iter().zip(&x_mean).map(|(a, b)| a * b).sum::<f64>();
    let xtx_inv = SymMatrix::from_lower_fn(p, |a, b| match (a, b) {
        (0, 0) => corner,
        (a, 0) => -c_inv_mean[a - 1],
        (a, b) => c_inv(a - 1, b - 1),
    });
    let xtx_inv_factor = cholesky(&xtx_inv, 0.0)?;
    Ok(OlsFit {
        beta_hat,
        rss,
        xtx_inv,
        df: (n - p) as u64,
        xtx_inv_factor,
    })
}

/// One posterior draw of a single regression's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmDraw {
    pub beta: DVector<f64>,
    pub sigma2: f64,
}

impl ArmDraw {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn mean_at(&self, x: &[f64]) -> f64 {
        linear_predictor(&self.beta, x)
    }
}

/// Posterior draws `(β*_a, σ*²_a)` for every arm, all from one imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraw {
    pub arms: Vec<ArmDraw>,
}

/// `σ*² = RSS / χ²(df)`, then `β* ~ N(β̂, σ*² (XᵀX)⁻¹)`. A perfect fit
/// (`RSS = 0`) returns `(β̂, 0)`.
pub fn draw_posterior<R: Rng + ?Sized>(fit: &OlsFit, rng: &mut R) -> Result<ArmDraw> {
    if fit.rss == 0.0 {
        return Ok(ArmDraw {
            beta: fit.beta_hat.clone(),
            sigma2: 0.0,
        });
    }
    let sigma2 = draw_scaled_inv_chisq(fit.df, fit.rss, rng)?;
    let z = standard_normal_vector(fit.n_params(), rng);
    let beta = &fit.beta_hat + sigma2.sqrt() * (&fit.xtx_inv_factor * z);
    Ok(ArmDraw { beta, sigma2 })
}

/// Naive starting values for chained equations: every missing cell gets a
/// random draw from its column's observed values.
pub fn fcs_initialize<R: Rng + ?Sized>(frame: &TrialFrame, rng: &mut R) -> Result<DMatrix<f64>> {
    let n = frame.n_units();
    let mut fills = DMatrix::zeros(n, frame.n_covariates());
    for (j, c) in frame.covariates().iter().enumerate() {
        let observed: Vec<f64> = c.values.iter().flatten().copied().collect();
        if observed.is_empty() {
            return Err(SpcError::AllMissing(c.name.clone()));
        }
        for (i, v) in c.values.iter().enumerate() {
            fills[(i, j)] = match v {
                Some(x) => *x,
                None => observed[rng.random_range(0..observed.len())],
            };
        }
    }
    Ok(fills)
}

/// Predictor row used to impute covariate `j` for an in-sample unit: the
/// other covariates, indicators for arms `1..=w`, and the observed outcome.
fn in_sample_predictors(frame: &TrialFrame, fills: &DMatrix<f64>, j: usize, row: usize, arm: usize) -> Vec<f64> {
    let k = fills.ncols();
    let mut out: Vec<f64> = (0..k).filter(|&c| c != j).map(|c| fills[(row, c)]).collect();
    out.extend((1..frame.n_arms()).map(|a| if a == arm { 1.0 } else { 0.0 }));
    out.push(frame.outcome()[row].expect("in-sample units have an outcome"));
    out
}

fn other_covariates(fills: &DMatrix<f64>, j: usize, row: usize) -> Vec<f64> {
    (0..fills.ncols())
        .filter(|&c| c != j)
        .map(|c| fills[(row, c)])
        .collect()
}

fn fit_rows(rows: &[Vec<f64>], y: &[f64], names: &[String]) -> Result<OlsFit> {
    let p = rows.first().map_or(0, Vec::len);
    let x = DMatrix::from_fn(rows.len(), p, |i, c| rows[i][c]);
    fit_ols(&x, &DVector::from_column_slice(y), names)
}

/// One chained-equation update of covariate `j` given the current fills of
/// everything else. Observed cells are copied through unchanged; missing
/// cells get posterior-predictive draws from a Bayesian linear model fitted
/// on the in-sample units where `j` is observed.
///
/// Out-of-sample units have no outcome, so their missing cells come from a
/// second model on the other covariates alone, fitted on the same rows.
pub fn fcs_impute_column<R: Rng + ?Sized>(
    j: usize,
    frame: &TrialFrame,
    fills: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let column = &frame.covariates()[j];
    let mut out: Vec<f64> = (0..frame.n_units()).map(|i| fills[(i, j)]).collect();
    if column.is_complete() {
        return Ok(out);
    }
    if column.n_missing() == frame.n_units() {
        return Err(SpcError::AllMissing(column.name.clone()));
    }
    let assignment = frame.assignment();
    let missing_in = |oos: bool| {
        (0..frame.n_units())
            .filter(|&i| column.values[i].is_none() && (assignment[i] == Assignment::OutOfSample) == oos)
            .collect::<Vec<_>>()
    };
    let training: Vec<usize> = (0..frame.n_units())
        .filter(|&i| column.values[i].is_some() && assignment[i] != Assignment::OutOfSample)
        .collect();
    let target: Vec<f64> = training.iter().map(|&i| fills[(i, j)]).collect();
    let mut names: Vec<String> = frame
        .covariates()
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != j)
        .map(|(_, c)| c.name.clone())
        .collect();
    let covariate_names = names.clone();

    let in_sample_missing = missing_in(false);
    if !in_sample_missing.is_empty() {
        names.extend((1..frame.n_arms()).map(|a| format!("arm[{}]", frame.arm_labels()[a])));
        names.push(frame.outcome_name().to_string());
        let rows: Vec<Vec<f64>> = training
            .iter()
            .map(|&i| in_sample_predictors(frame, fills, j, i, assignment[i].arm().unwrap_or(0)))
            .collect();
        let fit = fit_rows(&rows, &target, &names)?;
        let draw = draw_posterior(&fit, rng)?;
        let sigma = draw.sigma();
        for i in in_sample_missing {
            let arm = assignment[i].arm().unwrap_or(0);
            let x = in_sample_predictors(frame, fills, j, i, arm);
            out[i] = draw.mean_at(&x) + sigma * standard_normal(rng);
        }
    }

    let oos_missing = missing_in(true);
    if !oos_missing.is_empty() {
        let rows: Vec<Vec<f64>> = training.iter().map(|&i| other_covariates(fills, j, i)).collect();
        let fit = fit_rows(&rows, &target, &covariate_names)?;
        let draw = draw_posterior(&fit, rng)?;
        let sigma = draw.sigma();
        for i in oos_missing {
            out[i] = draw.mean_at(&other_covariates(fills, j, i)) + sigma * standard_normal(rng);
        }
    }
    Ok(out)
}

/// One full cycle of chained equations over every incomplete covariate,
/// updating `fills` in place.
pub fn fcs_cycle<R: Rng + ?Sized>(frame: &TrialFrame, fills: &mut DMatrix<f64>, rng: &mut R) -> Result<()> {
    for j in 0..frame.n_covariates() {
        if frame.covariates()[j].is_complete() {
            continue;
        }
        let column = fcs_impute_column(j, frame, fills, rng)?;
        for (i, v) in column.into_iter().enumerate() {
            fills[(i, j)] = v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Covariate;
    use crate::numerics::RngStream;
    use approx::assert_abs_diff_eq;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn exact_fit() {
        let x = DMatrix::from_column_slice(5, 1, &[0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = DVector::from_iterator(5, x.column(0).iter().map(|v| 1.0 + 2.0 * v));
        let fit = fit_ols(&x, &y, &names(1)).unwrap();
        assert_abs_diff_eq!(fit.beta_hat[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.beta_hat[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.rss, 0.0, epsilon = 1e-20);
        assert_eq!(fit.df, 3);
    }

    #[test]
    fn xtx_inverse_matches_explicit() {
        let x = DMatrix::from_row_slice(6, 2, &[1.0, 0.3, 2.0, -1.0, 0.5, 0.5, 3.0, 2.0, -1.0, 0.0, 0.0, 1.5]);
        let y = DVector::from_vec(vec![1.0, 2.0, 0.5, 4.0, -1.0, 1.0]);
        let fit = fit_ols(&x, &y, &names(2)).unwrap();
        let design = DMatrix::from_fn(6, 3, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
        let gram = design.transpose() * &design;
        let inv = gram.clone().try_inverse().unwrap();
        assert!((fit.xtx_inv.as_matrix() - &inv).amax() < 1e-10);
        let beta = inv * design.transpose() * &y;
        assert!((&fit.beta_hat - &beta).amax() < 1e-10);
        let resid = &y - &design * &beta;
        assert_abs_diff_eq!(fit.rss, resid.norm_squared(), epsilon = 1e-10);
    }

    #[test]
    fn duplicated_column_is_named() {
        let col = [0.0, 1.0, 3.0, 2.0, 5.0, 4.0];
        let x = DMatrix::from_fn(6, 3, |i, j| if j == 1 { (i as f64).sin() } else { col[i] });
        let y = DVector::from_vec(vec![1.0, 2.0, 0.5, 4.0, -1.0, 1.0]);
        match fit_ols(&x, &y, &names(3)) {
            Err(SpcError::RankDeficient { column }) => assert_eq!(column, "x2"),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn constant_column_is_rank_deficient() {
        let x = DMatrix::from_element(6, 1, 3.0);
        let y = DVector::from_vec(vec![1.0, 2.0, 0.5, 4.0, -1.0, 1.0]);
        assert!(matches!(
            fit_ols(&x, &y, &names(1)),
            Err(SpcError::RankDeficient { .. })
        ));
    }

    #[test]
    fn too_few_rows() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 4.0]);
        assert!(matches!(fit_ols(&x, &y, &names(1)), Err(SpcError::TooFewRows { .. })));
    }

    #[test]
    fn perfect_fit_posterior_is_deterministic() {
        let x = DMatrix::from_column_slice(5, 1, &[0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = DVector::from_iterator(5, x.column(0).iter().map(|v| 1.0 + 2.0 * v));
        let mut fit = fit_ols(&x, &y, &names(1)).unwrap();
        fit.rss = 0.0;
        let d = draw_posterior(&fit, &mut RngStream::root(3).rng()).unwrap();
        assert_eq!(d.sigma2, 0.0);
        assert_eq!(d.beta, fit.beta_hat);
    }

    #[test]
    fn posterior_draw_reproducible() {
        let x = DMatrix::from_column_slice(6, 1, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = DVector::from_vec(vec![0.1, 1.2, 1.9, 3.3, 3.8, 5.1]);
        let fit = fit_ols(&x, &y, &names(1)).unwrap();
        let a = draw_posterior(&fit, &mut RngStream::new(11, 2).rng()).unwrap();
        let b = draw_posterior(&fit, &mut RngStream::new(11, 2).rng()).unwrap();
        assert_eq!(a, b);
    }

    fn incomplete_frame() -> TrialFrame {
        let n = 12;
        let x1: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
        // x2 = 2 x1 + 1 exactly; one cell missing.
        let x2: Vec<Option<f64>> = x1
            .iter()
            .enumerate()
            .map(|(i, v)| if i == 4 { None } else { Some(2.0 * v + 1.0) })
            .collect();
        TrialFrame::new(
            (0..n).map(|i| i.to_string()).collect(),
            (0..n).map(|i| Assignment::Arm(i % 2)).collect(),
            (0..n).map(|i| Some((i as f64 * 1.7).cos())).collect(),
            vec![Covariate::complete("x1", x1), Covariate::new("x2", x2)],
            vec!["0".into(), "1".into()],
        )
        .unwrap()
    }

    #[test]
    fn complete_column_unchanged() {
        let frame = incomplete_frame();
        let fills = fcs_initialize(&frame, &mut RngStream::root(1).rng()).unwrap();
        let col = fcs_impute_column(0, &frame, &fills, &mut RngStream::root(2).rng()).unwrap();
        assert_eq!(col, fills.column(0).iter().copied().collect::<Vec<_>>());
    }

    #[test]
    fn determined_cell_gets_prediction() {
        let frame = incomplete_frame();
        let fills = fcs_initialize(&frame, &mut RngStream::root(1).rng()).unwrap();
        let col = fcs_impute_column(1, &frame, &fills, &mut RngStream::root(2).rng()).unwrap();
        assert_abs_diff_eq!(col[4], 2.0 * 2.0 + 1.0, epsilon = 1e-6);
        for (i, v) in frame.covariates()[1].values.iter().enumerate() {
            if let Some(v) = v {
                assert_eq!(col[i].to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn all_missing_column() {
        let n = 6;
        let frame = TrialFrame::new(
            (0..n).map(|i| i.to_string()).collect(),
            (0..n).map(|i| Assignment::Arm(i % 2)).collect(),
            vec![Some(1.0); n],
            vec![Covariate::new("x", vec![None; n])],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        assert!(matches!(
            fcs_initialize(&frame, &mut RngStream::root(1).rng()),
            Err(SpcError::AllMissing(_))
        ));
        let fills = DMatrix::zeros(n, 1);
        assert!(matches!(
            fcs_impute_column(0, &frame, &fills, &mut RngStream::root(1).rng()),
            Err(SpcError::AllMissing(_))
        ));
    }
}
