use std::fmt;

use serde::Serialize;

use super::frame::TrialFrame;
use crate::error::{Result, SpcError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub label: String,
    pub units: usize,
    /// Residual degrees of freedom of the arm's outcome regression,
    /// `units - (covariates + 1)`.
    pub df: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariateSummary {
    pub name: String,
    pub missing_rate: f64,
    /// Incomplete columns are filled by chained equations before the
    /// outcome block.
    pub needs_fcs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub arms: Vec<ArmSummary>,
    pub covariates: Vec<CovariateSummary>,
    pub out_of_sample: usize,
    pub assumptions: Vec<&'static str>,
}

pub const ASSUMPTIONS: [&str; 3] = [
    "stable unit treatment value: a unit's potential outcomes do not depend on other units' assignments",
    "ignorable assignment: treatment is independent of the missing potential outcomes given the observed data",
    "the cross-arm partial correlation is not identified by the data and is taken as given",
];

/// Summarises arm sizes and covariate missingness, and rejects frames in
/// which some arm cannot support a posterior draw (df < 2).
pub fn validate(frame: &TrialFrame) -> Result<ValidationReport> {
    let k = frame.n_covariates();
    let arms: Vec<ArmSummary> = frame
        .arm_counts()
        .into_iter()
        .zip(frame.arm_labels())
        .map(|(units, label)| ArmSummary {
            label: label.clone(),
            units,
            df: units as i64 - (k as i64 + 1),
        })
        .collect();
    if let Some(bad) = arms.iter().find(|a| a.df < 2) {
        return Err(SpcError::InsufficientArm {
            arm: bad.label.clone(),
            units: bad.units,
            covariates: k,
            df: bad.df,
        });
    }
    let n = frame.n_units().max(1) as f64;
    let covariates = frame
        .covariates()
        .iter()
        .map(|c| {
            let missing = c.n_missing();
            CovariateSummary {
                name: c.name.clone(),
                missing_rate: missing as f64 / n,
                needs_fcs: missing > 0,
            }
        })
        .collect();
    Ok(ValidationReport {
        arms,
        covariates,
        out_of_sample: frame.n_out_of_sample(),
        assumptions: ASSUMPTIONS.to_vec(),
    })
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "arms:")?;
        for a in &self.arms {
            writeln!(f, "  {:<12} units={:<6} df={}", a.label, a.units, a.df)?;
        }
        if self.out_of_sample > 0 {
            writeln!(f, "out-of-sample units: {}", self.out_of_sample)?;
        }
        if !self.covariates.is_empty() {
            writeln!(f, "covariates:")?;
            for c in &self.covariates {
                let flag = if c.needs_fcs { "  (imputed by FCS)" } else { "" };
                writeln!(f, "  {:<12} missing={:>6.2}%{}", c.name, 100.0 * c.missing_rate, flag)?;
            }
        }
        writeln!(f, "assumed:")?;
        for a in &self.assumptions {
            writeln!(f, "  - {a}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Assignment, Covariate};

    fn frame(n0: usize, n1: usize, k: usize, missing_first: usize) -> TrialFrame {
        let n = n0 + n1;
        let assignment = (0..n).map(|i| Assignment::Arm(usize::from(i >= n0))).collect();
        let covariates = (0..k)
            .map(|j| {
                Covariate::new(
                    format!("x{j}"),
                    (0..n)
                        .map(|i| {
                            if j == 0 && i < missing_first {
                                None
                            } else {
                                Some(i as f64)
                            }
                        })
                        .collect(),
                )
            })
            .collect();
        TrialFrame::new(
            (0..n).map(|i| i.to_string()).collect(),
            assignment,
            vec![Some(0.0); n],
            covariates,
            vec!["0".into(), "1".into()],
        )
        .unwrap()
    }

    #[test]
    fn arm_at_boundary_is_rejected() {
        let k = 3;
        let err = validate(&frame(k + 1, 10, k, 0)).unwrap_err();
        assert!(matches!(err, SpcError::InsufficientArm { df: 0, .. }));
        assert!(validate(&frame(k + 3, 10, k, 0)).is_ok());
    }

    #[test]
    fn complete_simulation_sized_frame() {
        let r = validate(&frame(2500, 2500, 1, 0)).unwrap();
        assert!(r.arms.iter().all(|a| a.df == 2500 - 1 - 1));
        assert_eq!(r.covariates[0].missing_rate, 0.0);
        assert!(!r.covariates[0].needs_fcs);
    }

    #[test]
    fn flags_incomplete_column() {
        let r = validate(&frame(50, 50, 2, 30)).unwrap();
        assert!((r.covariates[0].missing_rate - 0.3).abs() < 1e-12);
        assert!(r.covariates[0].needs_fcs);
        assert!(!r.covariates[1].needs_fcs);
        assert!(r.to_string().contains("imputed by FCS"));
    }
}
