//! Imputation of missing potential outcomes under a specified partial
//! correlation.
//!
//! Each imputation runs three steps on top of the covariate fills:
//!
//! 1. draw `(β*_a, σ*²_a)` for every arm from the Jeffreys posterior of that
//!    arm's outcome regression on the covariates;
//! 2. assemble the joint normal of all potential outcomes of a unit with mean
//!    `(β*_0ᵀx, …, β*_wᵀx)` and covariance `Σ_ab = ρ_ab σ*_a σ*_b`;
//! 3. draw each unit's missing outcomes from the conditional normal given its
//!    observed one. Out-of-sample units draw every arm from the joint.
//!
//! The conditional parameters are obtained by sweeping `Σ` on the observed
//! arm. Because `Σ` depends on the draw but not on `x`, the sweep and the
//! Cholesky factor of each conditional covariance are computed once per
//! imputation and observed arm.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::{draw_posterior, fcs_cycle, fcs_initialize, fit_ols, PosteriorDraw};
use crate::data::{validate, Assignment, RhoInput, RhoSpec, SpcConfig, TrialFrame};
use crate::error::{Result, SpcError};
use crate::exec::try_map_indexed;
use crate::numerics::{cholesky, conditional_by_sweep, draw_mvn_factored, Conditional, RngStream, SymMatrix, PSD_TOL};

fn check_single_covariate(rho_y0x: &[f64], rho_y1x: &[f64]) -> Result<(f64, f64)> {
    if rho_y0x.len() != 1 || rho_y1x.len() != 1 {
        return Err(SpcError::InvalidArgument(
            "correlation conversion supports exactly one covariate".into(),
        ));
    }
    let (a, b) = (rho_y0x[0], rho_y1x[0]);
    for v in [a, b] {
        if !(v > -1.0 && v < 1.0) {
            return Err(SpcError::OutOfRange(v));
        }
    }
    Ok((a, b))
}

fn check_result(r: f64) -> Result<f64> {
    if (-1.0..=1.0).contains(&r) {
        Ok(r)
    } else {
        Err(SpcError::OutOfRange(r))
    }
}

/// Partial correlation of two outcomes given one covariate, from their
/// marginal correlation and their correlations with the covariate:
/// `(ρ₀₁ - ρ₀ₓρ₁ₓ) / (√(1-ρ₀ₓ²) √(1-ρ₁ₓ²))`.
pub fn rho_partial_from_marginal(rho_marginal: f64, rho_y0x: &[f64], rho_y1x: &[f64]) -> Result<f64> {
    let (a, b) = check_single_covariate(rho_y0x, rho_y1x)?;
    if !(-1.0..=1.0).contains(&rho_marginal) {
        return Err(SpcError::OutOfRange(rho_marginal));
    }
    check_result((rho_marginal - a * b) / ((1.0 - a * a).sqrt() * (1.0 - b * b).sqrt()))
}

/// Inverse of [`rho_partial_from_marginal`].
pub fn rho_marginal_from_partial(rho_partial: f64, rho_y0x: &[f64], rho_y1x: &[f64]) -> Result<f64> {
    let (a, b) = check_single_covariate(rho_y0x, rho_y1x)?;
    if !(-1.0..=1.0).contains(&rho_partial) {
        return Err(SpcError::OutOfRange(rho_partial));
    }
    check_result(rho_partial * (1.0 - a * a).sqrt() * (1.0 - b * b).sqrt() + a * b)
}

fn sample_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
        sab += (x - ma) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Canonical (partial) correlations for `frame`. Marginal specifications are
/// converted with each arm's observed outcome-covariate correlation, which
/// requires a single complete covariate.
pub fn resolve_rho(frame: &TrialFrame, input: &RhoInput) -> Result<RhoSpec> {
    let spec = input.spec();
    if spec.n_arms() != frame.n_arms() {
        return Err(SpcError::InvalidArgument(format!(
            "correlations given for {} arms but the trial has {}",
            spec.n_arms(),
            frame.n_arms()
        )));
    }
    let resolved = match input {
        RhoInput::Partial(s) => s.clone(),
        RhoInput::Marginal(s) => {
            if frame.n_covariates() != 1 || frame.has_missing_covariates() {
                return Err(SpcError::InvalidArgument(
                    "marginal correlations can only be converted with one complete covariate".into(),
                ));
            }
            let x = &frame.covariates()[0].values;
            let rho_x: Vec<f64> = (0..frame.n_arms())
                .map(|a| {
                    let rows = frame.arm_rows(a);
                    let y: Vec<f64> = rows.iter().map(|&i| frame.outcome()[i].unwrap_or(f64::NAN)).collect();
                    let xs: Vec<f64> = rows.iter().map(|&i| x[i].unwrap_or(f64::NAN)).collect();
                    sample_correlation(&y, &xs)
                })
                .collect();
            let mut pairs = Vec::new();
            for a in 0..frame.n_arms() {
                for b in (a + 1)..frame.n_arms() {
                    let p = rho_partial_from_marginal(s.get(a, b), &[rho_x[a]], &[rho_x[b]])?;
                    pairs.push((a, b, p));
                }
            }
            RhoSpec::from_pairs(frame.n_arms(), &pairs)?
        }
    };
    resolved.check_feasible()?;
    if resolved.has_negative() {
        warn!("negative partial correlation between potential outcomes: imputations may be implausible");
    }
    Ok(resolved)
}

/// `Σ_ab = ρ_ab σ*_a σ*_b`. Feasibility of `rho` is checked on the
/// correlation matrix, where the scale of the outcomes does not matter.
pub fn outcome_covariance(draw: &PosteriorDraw, rho: &RhoSpec) -> Result<SymMatrix> {
    if rho.n_arms() != draw.arms.len() {
        return Err(SpcError::InvalidArgument(format!(
            "correlations given for {} arms, posterior draw has {}",
            rho.n_arms(),
            draw.arms.len()
        )));
    }
    rho.check_feasible()?;
    let sd: Vec<f64> = draw.arms.iter().map(|a| a.sigma()).collect();
    Ok(SymMatrix::from_lower_fn(sd.len(), |a, b| {
        if a == b {
            draw.arms[a].sigma2
        } else {
            rho.get(a, b) * sd[a] * sd[b]
        }
    }))
}

/// Joint normal of one unit's potential outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct JointOutcomeModel {
    pub arm_means: DVector<f64>,
    pub sigma: SymMatrix,
}

pub fn build_joint_model(draw: &PosteriorDraw, rho: &RhoSpec, x: &[f64]) -> Result<JointOutcomeModel> {
    let sigma = outcome_covariance(draw, rho)?;
    cholesky(&sigma, PSD_TOL * sigma.scale())?;
    let arm_means = DVector::from_iterator(draw.arms.len(), draw.arms.iter().map(|a| a.mean_at(x)));
    Ok(JointOutcomeModel { arm_means, sigma })
}

/// Conditional mean and covariance of the unobserved arms (in arm order,
/// skipping `obs_arm`) given `y_obs`, obtained by sweeping `Σ`.
pub fn conditional_moments(model: &JointOutcomeModel, obs_arm: usize, y_obs: f64) -> Result<(DVector<f64>, SymMatrix)> {
    let cond = observed_arm_conditional(&model.sigma, obs_arm)?;
    Ok((cond.mean(&model.arm_means, &[y_obs]), cond.covariance))
}

fn observed_arm_conditional(sigma: &SymMatrix, obs_arm: usize) -> Result<Conditional> {
    if obs_arm >= sigma.dim() {
        return Err(SpcError::InvalidArgument(format!(
            "observed arm {obs_arm} out of range for {} arms",
            sigma.dim()
        )));
    }
    let variance = sigma.get(obs_arm, obs_arm);
    if variance <= PSD_TOL * sigma.scale() {
        return Err(SpcError::SingularObservedBlock { arm: obs_arm, variance });
    }
    conditional_by_sweep(sigma, &[obs_arm], 0.0)
}

/// Draws the `w` missing potential outcomes of a unit observed under
/// `obs_arm`, in arm order skipping the observed one.
pub fn conditional_impute_unit<R: Rng + ?Sized>(
    model: &JointOutcomeModel,
    obs_arm: usize,
    y_obs: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (mean, cov) = conditional_moments(model, obs_arm, y_obs)?;
    let factor = cholesky(&cov, PSD_TOL * model.sigma.scale())?;
    Ok(draw_mvn_factored(&mean, &factor, rng))
}

/// Draws every potential outcome of a unit outside the trial from the joint
/// model at `x_new`.
pub fn predict_out_of_sample<R: Rng + ?Sized>(
    draw: &PosteriorDraw,
    rho: &RhoSpec,
    x_new: &[f64],
    rng: &mut R,
) -> Result<DVector<f64>> {
    let model = build_joint_model(draw, rho, x_new)?;
    let factor = cholesky(&model.sigma, PSD_TOL * model.sigma.scale())?;
    Ok(draw_mvn_factored(&model.arm_means, &factor, rng))
}

/// Per-imputation cache of everything in the outcome model that does not
/// depend on the unit.
struct OutcomeSampler {
    joint_factor: DMatrix<f64>,
    by_arm: Vec<(Conditional, DMatrix<f64>)>,
}

impl OutcomeSampler {
    fn new(draw: &PosteriorDraw, rho: &RhoSpec) -> Result<Self> {
        let sigma = outcome_covariance(draw, rho)?;
        let tol = PSD_TOL * sigma.scale();
        let joint_factor = cholesky(&sigma, tol)?;
        let by_arm = (0..sigma.dim())
            .map(|a| {
                let cond = observed_arm_conditional(&sigma, a)?;
                let factor = cholesky(&cond.covariance, tol)?;
                Ok((cond, factor))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { joint_factor, by_arm })
    }
}

/// One completed copy of the trial: observed cells kept, every missing
/// potential outcome and covariate filled.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedDataset {
    pub index: usize,
    /// `n × (w+1)`; column `a` holds `Y(a)`.
    pub outcomes: DMatrix<f64>,
    /// `n × k` completed covariates.
    pub covariates: DMatrix<f64>,
    pub draw: PosteriorDraw,
}

impl CompletedDataset {
    pub fn outcome(&self, unit: usize, arm: usize) -> f64 {
        self.outcomes[(unit, arm)]
    }

    pub fn covariate_row(&self, unit: usize) -> Vec<f64> {
        self.covariates.row(unit).iter().copied().collect()
    }
}

/// Runs one imputation of `frame` on `stream`.
///
/// Incomplete covariates are filled by `fcs_iterations` cycles of chained
/// equations first. The outcome block (posterior draw, joint model,
/// conditional draws) then runs on the final covariate fills.
pub fn impute_once(
    frame: &TrialFrame,
    config: &SpcConfig,
    rho: &RhoSpec,
    index: usize,
    stream: RngStream,
) -> Result<CompletedDataset> {
    validate(frame)?;
    let mut rng = stream.rng();
    let covariates = if frame.has_missing_covariates() {
        let mut fills = fcs_initialize(frame, &mut rng)?;
        for _ in 0..config.fcs_iterations {
            fcs_cycle(frame, &mut fills, &mut rng)?;
        }
        fills
    } else {
        frame.covariate_matrix()?
    };

    let names: Vec<String> = frame.covariate_names().iter().map(|s| s.to_string()).collect();
    let arms = (0..frame.n_arms())
        .map(|a| {
            let rows = frame.arm_rows(a);
            let x = covariates.select_rows(&rows);
            let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| frame.outcome()[i].unwrap_or(f64::NAN)));
            let fit = fit_ols(&x, &y, &names)?;
            draw_posterior(&fit, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let draw = PosteriorDraw { arms };
    let sampler = OutcomeSampler::new(&draw, rho)?;

    let n = frame.n_units();
    let w1 = frame.n_arms();
    let mut outcomes = DMatrix::zeros(n, w1);
    let mut x = vec![0.0; frame.n_covariates()];
    for i in 0..n {
        for (j, v) in x.iter_mut().enumerate() {
            *v = covariates[(i, j)];
        }
        let means = DVector::from_iterator(w1, draw.arms.iter().map(|a| a.mean_at(&x)));
        match frame.assignment()[i] {
            Assignment::Arm(a) => {
                let y = frame.outcome()[i].expect("in-sample units have an outcome");
                let (cond, factor) = &sampler.by_arm[a];
                let imputed = draw_mvn_factored(&cond.mean(&means, &[y]), factor, &mut rng);
                outcomes[(i, a)] = y;
                for (slot, &arm) in cond.rest.iter().enumerate() {
                    outcomes[(i, arm)] = imputed[slot];
                }
            }
            Assignment::OutOfSample => {
                let drawn = draw_mvn_factored(&means, &sampler.joint_factor, &mut rng);
                outcomes.row_mut(i).copy_from(&drawn.transpose());
            }
        }
    }
    Ok(CompletedDataset {
        index,
        outcomes,
        covariates,
        draw,
    })
}

/// `m` completed datasets that share the observed data.
#[derive(Debug, Clone)]
pub struct ImputationSet {
    pub frame: TrialFrame,
    pub config: SpcConfig,
    /// The partial correlations actually used.
    pub rho: RhoSpec,
    pub datasets: Vec<CompletedDataset>,
}

impl ImputationSet {
    pub fn m(&self) -> usize {
        self.datasets.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputationStreams {
    pub seed: u64,
}

impl ImputationStreams {
    /// Stream of imputation `index`; independent of `m` and of scheduling.
    pub fn stream(&self, index: usize) -> RngStream {
        RngStream::root(self.seed).substream(index as u64)
    }
}

/// Runs `config.m` independent imputations, one stream each.
pub fn multiply_impute(frame: &TrialFrame, config: &SpcConfig) -> Result<ImputationSet> {
    config.check()?;
    validate(frame)?;
    let rho = resolve_rho(frame, &config.rho)?;
    let streams = ImputationStreams { seed: config.seed };
    let datasets = try_map_indexed(config.m, config.execution, |i| {
        impute_once(frame, config, &rho, i, streams.stream(i))
    })?;
    Ok(ImputationSet {
        frame: frame.clone(),
        config: config.clone(),
        rho,
        datasets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::ArmDraw;
    use crate::data::Covariate;
    use approx::assert_abs_diff_eq;

    fn two_arm_draw(s0: f64, s1: f64, mean0: f64, mean1: f64) -> PosteriorDraw {
        // Intercept-only models so that mean_at(&[]) returns the intercept.
        PosteriorDraw {
            arms: vec![
                ArmDraw {
                    beta: DVector::from_vec(vec![mean0]),
                    sigma2: s0 * s0,
                },
                ArmDraw {
                    beta: DVector::from_vec(vec![mean1]),
                    sigma2: s1 * s1,
                },
            ],
        }
    }

    #[test]
    fn partial_from_marginal_simulation_values() {
        let p = rho_partial_from_marginal(0.8, &[0.5], &[0.5]).unwrap();
        assert_abs_diff_eq!(p, 0.55 / 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(p, 0.7333, epsilon = 1e-4);
        assert_eq!(rho_partial_from_marginal(0.3, &[0.0], &[0.0]).unwrap(), 0.3);
        assert_abs_diff_eq!(
            rho_marginal_from_partial(0.0, &[0.5], &[0.5]).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        let back = rho_marginal_from_partial(p, &[0.5], &[0.5]).unwrap();
        assert_abs_diff_eq!(back, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn inconsistent_marginals_out_of_range() {
        assert!(matches!(
            rho_partial_from_marginal(-0.9, &[0.9], &[0.9]),
            Err(SpcError::OutOfRange(_))
        ));
        assert!(rho_partial_from_marginal(0.5, &[0.5, 0.1], &[0.5]).is_err());
    }

    #[test]
    fn joint_model_two_arms() {
        let draw = two_arm_draw(1.0, 1.0, 0.0, 1.0);
        let m = build_joint_model(&draw, &RhoSpec::two_arm(0.73).unwrap(), &[]).unwrap();
        assert_eq!(m.arm_means.as_slice(), &[0.0, 1.0]);
        assert_eq!(m.sigma.get(0, 1), 0.73);
        assert_eq!(m.sigma.get(1, 1), 1.0);
    }

    #[test]
    fn joint_model_boundary_and_infeasible() {
        let draw = two_arm_draw(1.0, 1.0, 0.0, 1.0);
        assert!(build_joint_model(&draw, &RhoSpec::two_arm(1.0).unwrap(), &[]).is_ok());
        let mut three = two_arm_draw(1.0, 1.0, 0.0, 1.0);
        three.arms.push(three.arms[0].clone());
        let rho = RhoSpec::from_pairs(3, &[(0, 1, 0.9), (0, 2, 0.9), (1, 2, -0.9)]).unwrap();
        assert!(matches!(
            build_joint_model(&three, &rho, &[]),
            Err(SpcError::InfeasibleRho { .. })
        ));
    }

    #[test]
    fn conditional_matches_closed_form() {
        let draw = two_arm_draw(1.0, 1.0, 0.0, 1.0);
        let m = build_joint_model(&draw, &RhoSpec::two_arm(0.73).unwrap(), &[]).unwrap();
        let (mean, cov) = conditional_moments(&m, 1, 2.0).unwrap();
        assert_abs_diff_eq!(mean[0], 0.73, epsilon = 1e-14);
        assert_abs_diff_eq!(cov.get(0, 0), 1.0 - 0.73 * 0.73, epsilon = 1e-14);
        assert_abs_diff_eq!(cov.get(0, 0), 0.4671, epsilon = 1e-12);
    }

    #[test]
    fn independence_ignores_observed_outcome() {
        let draw = two_arm_draw(0.8, 1.3, 0.2, 1.0);
        let m = build_joint_model(&draw, &RhoSpec::two_arm(0.0).unwrap(), &[]).unwrap();
        for y in [-5.0, 0.0, 7.5] {
            let (mean, cov) = conditional_moments(&m, 0, y).unwrap();
            assert_eq!(mean[0], 1.0);
            assert_abs_diff_eq!(cov.get(0, 0), 1.69, epsilon = 1e-14);
        }
    }

    #[test]
    fn homogeneity_limit_is_constant_shift() {
        let draw = two_arm_draw(1.0, 1.0, 0.5, 2.0);
        let m = build_joint_model(&draw, &RhoSpec::two_arm(1.0).unwrap(), &[]).unwrap();
        let mut rng = RngStream::root(4).rng();
        for y0 in [-1.0, 0.3, 2.0] {
            let y1 = conditional_impute_unit(&m, 0, y0, &mut rng).unwrap()[0];
            assert_abs_diff_eq!(y1, 2.0 + (y0 - 0.5), epsilon = 1e-12);
        }
        let pred = predict_out_of_sample(&draw, &RhoSpec::two_arm(1.0).unwrap(), &[], &mut rng).unwrap();
        assert_abs_diff_eq!(pred[1] - pred[0], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn singular_observed_block() {
        let draw = two_arm_draw(0.0, 1.0, 0.0, 0.0);
        let m = JointOutcomeModel {
            arm_means: DVector::zeros(2),
            sigma: outcome_covariance(&draw, &RhoSpec::two_arm(0.5).unwrap()).unwrap(),
        };
        assert!(matches!(
            conditional_impute_unit(&m, 0, 1.0, &mut RngStream::root(0).rng()),
            Err(SpcError::SingularObservedBlock { arm: 0, .. })
        ));
    }

    #[test]
    fn conditional_variance_shrinks_with_rho() {
        let draw = two_arm_draw(1.1, 0.9, 0.0, 0.0);
        let mut last = f64::INFINITY;
        for step in 0..=20 {
            let rho = step as f64 / 20.0;
            let m = build_joint_model(&draw, &RhoSpec::two_arm(rho).unwrap(), &[]).unwrap();
            let v = conditional_moments(&m, 0, 0.0).unwrap().1.get(0, 0);
            assert!(v <= last + 1e-15);
            last = v;
        }
    }

    fn small_frame(n_per_arm: usize) -> TrialFrame {
        let n = 2 * n_per_arm;
        let x: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 / 3.0).collect();
        let y: Vec<Option<f64>> = (0..n).map(|i| Some(x[i] * 0.5 + ((i * 13) % 7) as f64 / 5.0)).collect();
        TrialFrame::new(
            (0..n).map(|i| format!("u{i}")).collect(),
            (0..n).map(|i| Assignment::Arm(usize::from(i >= n_per_arm))).collect(),
            y,
            vec![Covariate::complete("x", x)],
            vec!["0".into(), "1".into()],
        )
        .unwrap()
    }

    #[test]
    fn observed_cells_are_preserved() {
        let frame = small_frame(20);
        let config = SpcConfig::new(3, 99, RhoSpec::two_arm(0.5).unwrap());
        let set = multiply_impute(&frame, &config).unwrap();
        for d in &set.datasets {
            for i in 0..frame.n_units() {
                let a = frame.assignment()[i].arm().unwrap();
                assert_eq!(d.outcome(i, a).to_bits(), frame.outcome()[i].unwrap().to_bits());
            }
        }
    }

    #[test]
    fn rejects_rho_for_wrong_arm_count() {
        let frame = small_frame(10);
        let config = SpcConfig::new(2, 1, RhoSpec::uniform(3, 0.5).unwrap());
        assert!(multiply_impute(&frame, &config).is_err());
    }
}
