use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpcError};
use crate::numerics::{cholesky, SymMatrix, PSD_TOL};

/// Analyst-specified partial correlations between potential outcomes,
/// one value per unordered pair of arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoSpec {
    n_arms: usize,
    /// Upper triangle in row order: (0,1), (0,2), …, (1,2), …
    pairs: Vec<f64>,
}

fn pair_index(n_arms: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    a * (2 * n_arms - a - 1) / 2 + (b - a - 1)
}

impl RhoSpec {
    /// Same correlation for every pair of arms.
    pub fn uniform(n_arms: usize, rho: f64) -> Result<Self> {
        check_range(rho)?;
        if n_arms < 2 {
            return Err(SpcError::InvalidArgument("need at least two arms".into()));
        }
        Ok(Self {
            n_arms,
            pairs: vec![rho; n_arms * (n_arms - 1) / 2],
        })
    }

    pub fn two_arm(rho: f64) -> Result<Self> {
        Self::uniform(2, rho)
    }

    /// Every pair must be given exactly once, in either order.
    pub fn from_pairs(n_arms: usize, pairs: &[(usize, usize, f64)]) -> Result<Self> {
        if n_arms < 2 {
            return Err(SpcError::InvalidArgument("need at least two arms".into()));
        }
        let mut values = vec![None; n_arms * (n_arms - 1) / 2];
        for &(a, b, rho) in pairs {
            if a == b || a >= n_arms || b >= n_arms {
                return Err(SpcError::InvalidArgument(format!(
                    "invalid arm pair ({a}, {b}) for {n_arms} arms"
                )));
            }
            check_range(rho)?;
            let slot = &mut values[pair_index(n_arms, a, b)];
            if slot.is_some() {
                return Err(SpcError::InvalidArgument(format!("pair ({a}, {b}) given twice")));
            }
            *slot = Some(rho);
        }
        let pairs = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| SpcError::InvalidArgument(format!("correlation pair #{i} not specified"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n_arms, pairs })
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        if a == b {
            1.0
        } else {
            self.pairs[pair_index(self.n_arms, a, b)]
        }
    }

    pub fn has_negative(&self) -> bool {
        self.pairs.iter().any(|&r| r < 0.0)
    }

    /// The implied `(w+1) × (w+1)` correlation matrix with unit diagonal.
    pub fn correlation_matrix(&self) -> SymMatrix {
        SymMatrix::from_lower_fn(self.n_arms, |i, j| self.get(i, j))
    }

    /// Fails with the most negative eigenpair when the pairwise values
    /// cannot form a correlation matrix.
    pub fn check_feasible(&self) -> Result<()> {
        let r = self.correlation_matrix();
        if cholesky(&r, PSD_TOL).is_ok() {
            return Ok(());
        }
        let eig = SymmetricEigen::new(r.as_matrix().clone());
        let (idx, &eigenvalue) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty spectrum");
        Err(SpcError::InfeasibleRho {
            eigenvalue,
            direction: eig.eigenvectors.column(idx).iter().copied().collect(),
        })
    }
}

fn check_range(rho: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(SpcError::OutOfRange(rho))
    }
}

/// Whether the analyst's correlations are partial (given the covariates) or
/// marginal. Marginal values are converted to partial ones from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rho", rename_all = "snake_case")]
pub enum RhoInput {
    Partial(RhoSpec),
    Marginal(RhoSpec),
}

impl RhoInput {
    pub fn spec(&self) -> &RhoSpec {
        match self {
            RhoInput::Partial(s) | RhoInput::Marginal(s) => s,
        }
    }
}

/// Univariate imputation model for an incomplete covariate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateMethod {
    /// Bayesian normal linear regression under the Jeffreys prior.
    #[default]
    Normal,
}

/// How independent work units (imputations, replications) are scheduled.
/// Results do not depend on the choice.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    /// Rayon work stealing; falls back to sequential without the `parallel`
    /// feature.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpcConfig {
    pub m: usize,
    pub fcs_iterations: usize,
    pub seed: u64,
    pub rho: RhoInput,
    /// Per-covariate method; a missing entry means [`CovariateMethod::Normal`].
    #[serde(default)]
    pub covariate_method: Vec<CovariateMethod>,
    #[serde(default, skip_serializing)]
    pub execution: Execution,
}

impl SpcConfig {
    pub const DEFAULT_FCS_ITERATIONS: usize = 10;

    pub fn new(m: usize, seed: u64, rho: RhoSpec) -> Self {
        Self {
            m,
            fcs_iterations: Self::DEFAULT_FCS_ITERATIONS,
            seed,
            rho: RhoInput::Partial(rho),
            covariate_method: Vec::new(),
            execution: Execution::default(),
        }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn check(&self) -> Result<()> {
        if self.m < 2 {
            return Err(SpcError::InvalidArgument(format!(
                "number of imputations must be at least 2, got {}",
                self.m
            )));
        }
        if self.fcs_iterations < 1 {
            return Err(SpcError::InvalidArgument("fcs_iterations must be at least 1".into()));
        }
        Ok(())
    }
}
