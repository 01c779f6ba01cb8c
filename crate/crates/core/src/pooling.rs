//! Complete-data analyses over an [`ImputationSet`] and their combination
//! by Rubin's rules.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::bayes::fit_ols;
use crate::data::Assignment;
use crate::engine::{CompletedDataset, ImputationSet};
use crate::error::{Result, SpcError};

/// Degrees of freedom above which the t quantile is replaced by the normal one.
const NORMAL_DF: f64 = 1e7;

/// Two-sided quantile `q` with `P(|T| <= q) = level` for `T ~ t(df)`.
pub fn t_quantile(df: f64, level: f64) -> f64 {
    let p = 0.5 + level / 2.0;
    if !df.is_finite() || df > NORMAL_DF {
        Normal::standard().inverse_cdf(p)
    } else {
        StudentsT::new(0.0, 1.0, df)
            .expect("positive degrees of freedom")
            .inverse_cdf(p)
    }
}

/// One estimate with its sampling variance from a single completed dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompleteDataEstimate {
    pub estimate: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PooledEstimate {
    pub m: usize,
    /// `Q̄`, the mean of the per-imputation estimates.
    pub estimate: f64,
    /// `Ū`, the mean within-imputation variance.
    pub within: f64,
    /// `B`, the between-imputation variance.
    pub between: f64,
    /// `T = Ū + (1 + 1/m) B`.
    pub total: f64,
    pub df: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl PooledEstimate {
    pub fn covers(&self, value: f64) -> bool {
        self.ci_lower <= value && value <= self.ci_upper
    }

    pub fn std_error(&self) -> f64 {
        self.total.sqrt()
    }
}

/// Combines `m >= 2` complete-data estimates and their variances.
///
/// Degrees of freedom follow Barnard and Rubin when the complete-data
/// degrees of freedom are known; `None` means a large-sample complete-data
/// analysis, in which case the classical `(m-1)/λ²` is used. A 95% interval
/// is attached.
pub fn rubin_pool(estimates: &[f64], variances: &[f64], complete_df: Option<f64>) -> Result<PooledEstimate> {
    let m = estimates.len();
    if m < 2 || variances.len() != m {
        return Err(SpcError::InvalidArgument(format!(
            "pooling needs at least two estimates with matching variances, got {m} and {}",
            variances.len()
        )));
    }
    if variances.iter().any(|v| v.is_nan() || *v < 0.0) {
        return Err(SpcError::InvalidArgument("variances must be non-negative".into()));
    }
    let mf = m as f64;
    let estimate = estimates.iter().sum::<f64>() / mf;
    let within = variances.iter().sum::<f64>() / mf;
    let between = estimates.iter().map(|q| (q - estimate).powi(2)).sum::<f64>() / (mf - 1.0);
    let total = within + (1.0 + 1.0 / mf) * between;
    let lambda = if total > 0.0 {
        (1.0 + 1.0 / mf) * between / total
    } else {
        0.0
    };
    let df_old = if lambda > 0.0 {
        (mf - 1.0) / (lambda * lambda)
    } else {
        f64::INFINITY
    };
    let df = match complete_df {
        Some(nu) => {
            let df_obs = (nu + 1.0) / (nu + 3.0) * nu * (1.0 - lambda);
            if df_old.is_infinite() {
                df_obs
            } else {
                df_old * df_obs / (df_old + df_obs)
            }
        }
        None => df_old,
    };
    let half = t_quantile(df, 0.95) * total.sqrt();
    Ok(PooledEstimate {
        m,
        estimate,
        within,
        between,
        total,
        df,
        ci_lower: estimate - half,
        ci_upper: estimate + half,
    })
}

/// Pools one complete-data estimate per imputation.
pub fn pool_estimates(estimates: &[CompleteDataEstimate], complete_df: Option<f64>) -> Result<PooledEstimate> {
    let q: Vec<f64> = estimates.iter().map(|e| e.estimate).collect();
    let u: Vec<f64> = estimates.iter().map(|e| e.variance).collect();
    rubin_pool(&q, &u, complete_df)
}

/// Sample mean with variance `s²/n`.
pub fn mean_estimate(values: &[f64]) -> CompleteDataEstimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let s2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    CompleteDataEstimate {
        estimate: mean,
        variance: s2 / n,
    }
}

/// Sample covariance with its normal-theory variance
/// `(s_aa s_bb + s_ab²) / (n - 1)`.
pub fn covariance_estimate(a: &[f64], b: &[f64]) -> CompleteDataEstimate {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
        sab += (x - ma) * (y - mb);
    }
    let (saa, sbb, sab) = (saa / (n - 1.0), sbb / (n - 1.0), sab / (n - 1.0));
    CompleteDataEstimate {
        estimate: sab,
        variance: (saa * sbb + sab * sab) / (n - 1.0),
    }
}

/// Sample variance with its normal-theory variance `2 s⁴ / (n - 1)`.
pub fn variance_estimate(values: &[f64]) -> CompleteDataEstimate {
    covariance_estimate(values, values)
}

/// Which potential outcomes an individual effect contrasts:
/// `τ = Y(treated) - Y(control)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Contrast {
    pub treated: usize,
    pub control: usize,
}

impl Default for Contrast {
    fn default() -> Self {
        Self { treated: 1, control: 0 }
    }
}

impl Contrast {
    pub fn check(&self, n_arms: usize) -> Result<()> {
        if self.treated >= n_arms || self.control >= n_arms || self.treated == self.control {
            return Err(SpcError::InvalidArgument(format!(
                "contrast {} - {} is invalid for {n_arms} arms",
                self.treated, self.control
            )));
        }
        Ok(())
    }

    pub fn effect(&self, dataset: &CompletedDataset, unit: usize) -> f64 {
        dataset.outcome(unit, self.treated) - dataset.outcome(unit, self.control)
    }
}

/// How the 95% interval of an individual effect is formed from its `m` draws.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    /// Normal prediction interval for one more draw:
    /// `mean ± t(m-1) · sd · √(1 + 1/m)`.
    #[default]
    Predictive,
    /// Empirical 2.5% and 97.5% quantiles (linear interpolation).
    Empirical,
}

/// Posterior of one unit's treatment effect, one draw per imputation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItePosterior {
    pub unit_id: String,
    pub assignment: Assignment,
    pub draws: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ItePosterior {
    pub fn from_draws(unit_id: String, assignment: Assignment, draws: Vec<f64>, method: IntervalMethod) -> Self {
        let m = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / m;
        let variance = if draws.len() > 1 {
            draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        let (lower, upper) = match method {
            IntervalMethod::Predictive => {
                let half = if draws.len() > 1 {
                    t_quantile(m - 1.0, 0.95) * (variance * (1.0 + 1.0 / m)).sqrt()
                } else {
                    0.0
                };
                (mean - half, mean + half)
            }
            IntervalMethod::Empirical => {
                let mut sorted = draws.clone();
                sorted.sort_by(f64::total_cmp);
                (quantile_sorted(&sorted, 0.025), quantile_sorted(&sorted, 0.975))
            }
        };
        Self {
            unit_id,
            assignment,
            draws,
            mean,
            variance,
            lower,
            upper,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Individual effect posteriors for every unit, in and out of sample.
pub fn ite_posterior(set: &ImputationSet, contrast: Contrast, method: IntervalMethod) -> Result<Vec<ItePosterior>> {
    contrast.check(set.frame.n_arms())?;
    let frame = &set.frame;
    Ok((0..frame.n_units())
        .map(|i| {
            let draws = set.datasets.iter().map(|d| contrast.effect(d, i)).collect();
            ItePosterior::from_draws(frame.unit_ids()[i].clone(), frame.assignment()[i], draws, method)
        })
        .collect())
}

/// Posteriors ordered by ascending mean effect.
pub fn sort_by_mean(posteriors: &mut [ItePosterior]) {
    posteriors.sort_by(|a, b| a.mean.total_cmp(&b.mean));
}

/// Fraction of each unit's draws strictly above `threshold`.
pub fn positive_effect_probability(posteriors: &[ItePosterior], threshold: f64) -> Vec<f64> {
    posteriors
        .iter()
        .map(|p| p.draws.iter().filter(|&&d| d > threshold).count() as f64 / p.draws.len() as f64)
        .collect()
}

fn in_sample_rows(set: &ImputationSet) -> Vec<usize> {
    (0..set.frame.n_units())
        .filter(|&i| set.frame.assignment()[i] != Assignment::OutOfSample)
        .collect()
}

/// Average treatment effect over the in-sample units. Each completed
/// dataset contributes `mean(Y(t)) - mean(Y(c))` with the two-sample
/// variance `s_t²/n + s_c²/n`.
pub fn ate(set: &ImputationSet, contrast: Contrast) -> Result<PooledEstimate> {
    contrast.check(set.frame.n_arms())?;
    let rows = in_sample_rows(set);
    let n = rows.len() as f64;
    let per: Vec<CompleteDataEstimate> = set
        .datasets
        .iter()
        .map(|d| {
            let t: Vec<f64> = rows.iter().map(|&i| d.outcome(i, contrast.treated)).collect();
            let c: Vec<f64> = rows.iter().map(|&i| d.outcome(i, contrast.control)).collect();
            let (et, ec) = (mean_estimate(&t), mean_estimate(&c));
            CompleteDataEstimate {
                estimate: et.estimate - ec.estimate,
                variance: et.variance + ec.variance,
            }
        })
        .collect();
    pool_estimates(&per, Some(2.0 * n - 2.0))
}

/// Split of treatment-effect variance in one completed dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionComponents {
    /// `Var(τ)`.
    pub total: f64,
    /// `Var(Xᵀβ)` of the OLS fit of `τ` on the covariates.
    pub systematic: f64,
    /// `Var(ε)` of the residuals.
    pub idiosyncratic: f64,
    /// `Cov(ε(t), ε(c))` implied by `Var(ε) = Var ε(t) + Var ε(c) - 2 Cov`,
    /// from the residuals of each potential outcome on the covariates.
    pub residual_covariance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceDecomposition {
    /// Components averaged over imputations.
    pub mean: DecompositionComponents,
    pub per_imputation: Vec<DecompositionComponents>,
}

fn sample_var(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

fn residuals(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<(Vec<f64>, Vec<f64>)> {
    let fit = fit_ols(x, &DVector::from_column_slice(y), names)?;
    let fitted: Vec<f64> = (0..x.nrows())
        .map(|i| fit.predict(&x.row(i).iter().copied().collect::<Vec<_>>()))
        .collect();
    let resid = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Ok((fitted, resid))
}

/// Regresses each unit's effect on its covariates in every completed
/// dataset and splits `Var(τ)` into explained and residual parts.
pub fn variance_decomposition(set: &ImputationSet, contrast: Contrast) -> Result<VarianceDecomposition> {
    contrast.check(set.frame.n_arms())?;
    let rows = in_sample_rows(set);
    let names: Vec<String> = set.frame.covariate_names().iter().map(|s| s.to_string()).collect();
    let per_imputation = set
        .datasets
        .iter()
        .map(|d| {
            let x = d.covariates.select_rows(&rows);
            let tau: Vec<f64> = rows.iter().map(|&i| contrast.effect(d, i)).collect();
            let yt: Vec<f64> = rows.iter().map(|&i| d.outcome(i, contrast.treated)).collect();
            let yc: Vec<f64> = rows.iter().map(|&i| d.outcome(i, contrast.control)).collect();
            let (fitted, resid) = residuals(&x, &tau, &names)?;
            let (_, et) = residuals(&x, &yt, &names)?;
            let (_, ec) = residuals(&x, &yc, &names)?;
            let idiosyncratic = sample_var(&resid);
            Ok(DecompositionComponents {
                total: sample_var(&tau),
                systematic: sample_var(&fitted),
                idiosyncratic,
                residual_covariance: (sample_var(&et) + sample_var(&ec) - idiosyncratic) / 2.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let m = per_imputation.len() as f64;
    let avg = |f: fn(&DecompositionComponents) -> f64| per_imputation.iter().map(f).sum::<f64>() / m;
    Ok(VarianceDecomposition {
        mean: DecompositionComponents {
            total: avg(|c| c.total),
            systematic: avg(|c| c.systematic),
            idiosyncratic: avg(|c| c.idiosyncratic),
            residual_covariance: avg(|c| c.residual_covariance),
        },
        per_imputation,
    })
}
