use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpcError};

/// Treatment status of a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Assignment {
    /// In-sample unit with its outcome observed under this arm (`0..=w`).
    Arm(usize),
    /// Unit outside the trial; every potential outcome is predicted.
    OutOfSample,
}

impl Assignment {
    pub fn arm(self) -> Option<usize> {
        match self {
            Assignment::Arm(a) => Some(a),
            Assignment::OutOfSample => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

impl Covariate {
    pub fn new(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }

    pub fn complete(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self::new(name, values.into_iter().map(Some).collect())
    }

    pub fn n_missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }
}

/// Long-format trial data: one row per unit with its arm, its observed
/// outcome, and (possibly incomplete) baseline covariates.
///
/// Every in-sample unit carries exactly one observed potential outcome, the
/// one for its own arm. Out-of-sample units carry none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFrame {
    unit_ids: Vec<String>,
    assignment: Vec<Assignment>,
    outcome: Vec<Option<f64>>,
    covariates: Vec<Covariate>,
    arm_labels: Vec<String>,
    treatment_name: String,
    outcome_name: String,
}

impl TrialFrame {
    pub fn new(
        unit_ids: Vec<String>,
        assignment: Vec<Assignment>,
        outcome: Vec<Option<f64>>,
        covariates: Vec<Covariate>,
        arm_labels: Vec<String>,
    ) -> Result<Self> {
        let n = unit_ids.len();
        if assignment.len() != n || outcome.len() != n {
            return Err(SpcError::InvalidArgument(format!(
                "column lengths differ: {} ids, {} assignments, {} outcomes",
                n,
                assignment.len(),
                outcome.len()
            )));
        }
        if let Some(c) = covariates.iter().find(|c| c.values.len() != n) {
            return Err(SpcError::InvalidArgument(format!(
                "covariate `{}` has {} values for {} units",
                c.name,
                c.values.len(),
                n
            )));
        }
        if arm_labels.len() < 2 {
            return Err(SpcError::InvalidArgument(format!(
                "need at least two treatment arms, got {}",
                arm_labels.len()
            )));
        }
        let mut counts = vec![0usize; arm_labels.len()];
        for (i, (&a, y)) in assignment.iter().zip(&outcome).enumerate() {
            match a {
                Assignment::Arm(arm) => {
                    if arm >= arm_labels.len() {
                        return Err(SpcError::InvalidArgument(format!(
                            "unit `{}` has arm code {arm} but only {} arms are labelled",
                            unit_ids[i],
                            arm_labels.len()
                        )));
                    }
                    match y {
                        Some(v) if v.is_finite() => counts[arm] += 1,
                        _ => {
                            return Err(SpcError::MissingOutcome {
                                line: i + 1,
                                arm: arm_labels[arm].clone(),
                            })
                        }
                    }
                }
                Assignment::OutOfSample => {
                    if y.is_some() {
                        return Err(SpcError::InvalidArgument(format!(
                            "out-of-sample unit `{}` carries an observed outcome",
                            unit_ids[i]
                        )));
                    }
                }
            }
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(SpcError::EmptyArm(arm_labels[empty].clone()));
        }
        Ok(Self {
            unit_ids,
            assignment,
            outcome,
            covariates,
            arm_labels,
            treatment_name: "treatment".into(),
            outcome_name: "outcome".into(),
        })
    }

    pub fn with_column_names(mut self, treatment: impl Into<String>, outcome: impl Into<String>) -> Self {
        self.treatment_name = treatment.into();
        self.outcome_name = outcome.into();
        self
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_arms(&self) -> usize {
        self.arm_labels.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn assignment(&self) -> &[Assignment] {
        &self.assignment
    }

    pub fn outcome(&self) -> &[Option<f64>] {
        &self.outcome
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    pub fn covariate_names(&self) -> Vec<&str> {
        self.covariates.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn arm_labels(&self) -> &[String] {
        &self.arm_labels
    }

    pub fn treatment_name(&self) -> &str {
        &self.treatment_name
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn arm_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_arms()];
        for a in self.assignment.iter().filter_map(|a| a.arm()) {
            counts[a] += 1;
        }
        counts
    }

    pub fn n_out_of_sample(&self) -> usize {
        self.assignment
            .iter()
            .filter(|a| matches!(a, Assignment::OutOfSample))
            .count()
    }

    /// Row indices of units observed under `arm`.
    pub fn arm_rows(&self, arm: usize) -> Vec<usize> {
        (0..self.n_units())
            .filter(|&i| self.assignment[i] == Assignment::Arm(arm))
            .collect()
    }

    pub fn has_missing_covariates(&self) -> bool {
        self.covariates.iter().any(|c| !c.is_complete())
    }

    /// Covariates as an `n × k` matrix. Fails if any cell is missing.
    pub fn covariate_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.n_units();
        let k = self.n_covariates();
        let mut m = DMatrix::zeros(n, k);
        for (j, c) in self.covariates.iter().enumerate() {
            for (i, v) in c.values.iter().enumerate() {
                m[(i, j)] = v.ok_or_else(|| {
                    SpcError::InvalidArgument(format!(
                        "covariate `{}` is missing for unit {}",
                        c.name, self.unit_ids[i]
                    ))
                })?;
            }
        }
        Ok(m)
    }

    /// Appends out-of-sample units. Their covariate columns must match.
    pub fn with_out_of_sample(mut self, unit_ids: Vec<String>, covariates: Vec<Covariate>) -> Result<Self> {
        if covariates.len() != self.covariates.len() {
            return Err(SpcError::SchemaMismatch(format!(
                "out-of-sample rows have {} covariates, trial has {}",
                covariates.len(),
                self.covariates.len()
            )));
        }
        let extra = unit_ids.len();
        for (mine, theirs) in self.covariates.iter_mut().zip(covariates) {
            if mine.name != theirs.name || theirs.values.len() != extra {
                return Err(SpcError::SchemaMismatch(format!(
                    "out-of-sample covariate `{}` does not match trial covariate `{}`",
                    theirs.name, mine.name
                )));
            }
            mine.values.extend(theirs.values);
        }
        self.unit_ids.extend(unit_ids);
        self.assignment
            .extend(std::iter::repeat_n(Assignment::OutOfSample, extra));
        self.outcome.extend(std::iter::repeat_n(None, extra));
        Ok(self)
    }

    /// Row index keyed by unit id.
    pub fn index_by_id(&self) -> BTreeMap<&str, usize> {
        self.unit_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    #[test]
    fn minimal_frame() {
        let f = TrialFrame::new(
            ids(4),
            vec![
                Assignment::Arm(0),
                Assignment::Arm(1),
                Assignment::Arm(0),
                Assignment::Arm(1),
            ],
            vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)],
            vec![Covariate::complete("x", vec![0.1, 0.2, 0.3, 0.4])],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        assert_eq!(f.arm_counts(), vec![2, 2]);
        assert_eq!(f.arm_rows(1), vec![1, 3]);
    }

    #[test]
    fn in_sample_unit_needs_outcome() {
        let err = TrialFrame::new(
            ids(2),
            vec![Assignment::Arm(0), Assignment::Arm(1)],
            vec![Some(1.0), None],
            vec![],
            vec!["a".into(), "b".into()],
        )
        .unwrap_err();
        assert!(matches!(err, SpcError::MissingOutcome { line: 2, .. }));
    }

    #[test]
    fn empty_arm_rejected() {
        let err = TrialFrame::new(
            ids(2),
            vec![Assignment::Arm(0), Assignment::Arm(0)],
            vec![Some(1.0), Some(2.0)],
            vec![],
            vec!["a".into(), "b".into()],
        )
        .unwrap_err();
        assert!(matches!(err, SpcError::EmptyArm(ref a) if a == "b"));
    }

    #[test]
    fn appends_out_of_sample() {
        let f = TrialFrame::new(
            ids(2),
            vec![Assignment::Arm(0), Assignment::Arm(1)],
            vec![Some(1.0), Some(2.0)],
            vec![Covariate::complete("x", vec![0.0, 1.0])],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
        .with_out_of_sample(vec!["new".into()], vec![Covariate::new("x", vec![None])])
        .unwrap();
        assert_eq!(f.n_units(), 3);
        assert_eq!(f.n_out_of_sample(), 1);
        assert!(f.has_missing_covariates());
    }
}
