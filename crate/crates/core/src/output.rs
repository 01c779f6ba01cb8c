//! Files written by an imputation run, and the manifest that replays it.
//!
//! An `impute` run writes `imputation_001.csv` … one per completed dataset,
//! `ite_summary.csv` and `manifest.json`. A `predict` run writes
//! `predictions.csv` for the out-of-sample units instead of the completed
//! datasets. Floats are written in shortest round-trip form, so a replay
//! with the same manifest produces byte-identical files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_out_of_sample_csv, load_trial_csv, Assignment, RhoSpec, Schema, SpcConfig, TrialFrame};
use crate::engine::{multiply_impute, ImputationSet};
use crate::error::{Result, SpcError};
use crate::pooling::{ite_posterior, positive_effect_probability, Contrast, IntervalMethod, ItePosterior};

pub const SPEC_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ITE_SUMMARY_FILE: &str = "ite_summary.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

/// Kind of run recorded in a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Impute,
    Predict,
}

/// Where the data came from and how effects are summarised.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub input: Option<PathBuf>,
    pub out_of_sample_input: Option<PathBuf>,
    pub schema: Option<Schema>,
    pub contrast: Contrast,
    pub interval: IntervalMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec_version: u32,
    pub kind: RunKind,
    pub seed: u64,
    pub config: SpcConfig,
    /// Partial correlations after any marginal-to-partial conversion.
    pub resolved_rho: RhoSpec,
    pub arm_labels: Vec<String>,
    pub provenance: Provenance,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let manifest: Manifest = serde_json::from_reader(File::open(path)?)?;
        if manifest.spec_version != SPEC_VERSION {
            return Err(SpcError::SchemaMismatch(format!(
                "manifest version {} is not supported (expected {SPEC_VERSION})",
                manifest.spec_version
            )));
        }
        Ok(manifest)
    }

    /// Reloads the recorded inputs.
    pub fn load_frame(&self) -> Result<TrialFrame> {
        let p = &self.provenance;
        let (Some(input), Some(schema)) = (&p.input, &p.schema) else {
            return Err(SpcError::InvalidArgument(
                "manifest does not record an input file and schema".into(),
            ));
        };
        let frame = load_trial_csv(input, schema)?;
        match &p.out_of_sample_input {
            Some(oos) => load_out_of_sample_csv(oos, schema, frame),
            None => Ok(frame),
        }
    }

    /// Re-runs the recorded imputation and writes it to `dir`.
    pub fn replay(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let set = multiply_impute(&self.load_frame()?, &self.config)?;
        match self.kind {
            RunKind::Impute => write_imputation_set(&set, dir, &self.provenance),
            RunKind::Predict => write_prediction_set(&set, dir, &self.provenance),
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn treatment_cell(assignment: Assignment, labels: &[String], provenance: &Provenance) -> String {
    match assignment {
        Assignment::Arm(a) => labels[a].clone(),
        Assignment::OutOfSample => provenance
            .schema
            .as_ref()
            .and_then(|s| s.out_of_sample_code.first().cloned())
            .unwrap_or_default(),
    }
}

fn outcome_headers(frame: &TrialFrame) -> Vec<String> {
    frame
        .arm_labels()
        .iter()
        .map(|l| format!("{}_{l}", frame.outcome_name()))
        .collect()
}

/// One completed dataset: id, treatment, one outcome column per arm and
/// the completed covariates.
pub fn write_completed_csv<W: Write>(
    set: &ImputationSet,
    index: usize,
    provenance: &Provenance,
    writer: W,
) -> Result<()> {
    let frame = &set.frame;
    let dataset = set
        .datasets
        .get(index)
        .ok_or_else(|| SpcError::InvalidArgument(format!("no imputation {index}")))?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), frame.treatment_name().to_string()];
    header.extend(outcome_headers(frame));
    header.extend(frame.covariate_names().iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for i in 0..frame.n_units() {
        let mut row = vec![
            frame.unit_ids()[i].clone(),
            treatment_cell(frame.assignment()[i], frame.arm_labels(), provenance),
        ];
        row.extend((0..frame.n_arms()).map(|a| fmt(dataset.outcome(i, a))));
        row.extend((0..frame.n_covariates()).map(|j| fmt(dataset.covariates[(i, j)])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-unit effect summary in unit order; sort on `tau_mean` for the
/// ascending-effect view.
pub fn write_ite_summary<W: Write>(
    posteriors: &[ItePosterior],
    labels: &[String],
    provenance: &Provenance,
    writer: W,
) -> Result<()> {
    let prob = positive_effect_probability(posteriors, 0.0);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "id",
        "treatment",
        "tau_mean",
        "tau_sd",
        "tau_lower",
        "tau_upper",
        "prob_positive",
    ])?;
    for (p, pr) in posteriors.iter().zip(prob) {
        w.write_record([
            p.unit_id.clone(),
            treatment_cell(p.assignment, labels, provenance),
            fmt(p.mean),
            fmt(p.variance.sqrt()),
            fmt(p.lower),
            fmt(p.upper),
            fmt(pr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Joint outcome draws of the out-of-sample units, one row per unit and
/// imputation.
pub fn write_predictions<W: Write>(set: &ImputationSet, contrast: Contrast, writer: W) -> Result<()> {
    let frame = &set.frame;
    contrast.check(frame.n_arms())?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "imputation".to_string()];
    header.extend(outcome_headers(frame));
    header.push("tau".into());
    w.write_record(&header)?;
    for i in (0..frame.n_units()).filter(|&i| frame.assignment()[i] == Assignment::OutOfSample) {
        for d in &set.datasets {
            let mut row = vec![frame.unit_ids()[i].clone(), (d.index + 1).to_string()];
            row.extend((0..frame.n_arms()).map(|a| fmt(d.outcome(i, a))));
            row.push(fmt(contrast.effect(d, i)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn imputation_file_name(index: usize) -> String {
    format!("imputation_{:03}.csv", index + 1)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_manifest(
    set: &ImputationSet,
    dir: &Path,
    kind: RunKind,
    provenance: &Provenance,
    files: &[String],
) -> Result<()> {
    let manifest = Manifest {
        spec_version: SPEC_VERSION,
        kind,
        seed: set.config.seed,
        config: set.config.clone(),
        resolved_rho: set.rho.clone(),
        arm_labels: set.frame.arm_labels().to_vec(),
        provenance: provenance.clone(),
        files: files.to_vec(),
    };
    let mut w = create(dir, MANIFEST_FILE)?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Completed datasets, effect summary and manifest. Returns the paths
/// written, manifest last.
pub fn write_imputation_set(
    set: &ImputationSet,
    dir: impl AsRef<Path>,
    provenance: &Provenance,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(set.m() + 2);
    for index in 0..set.m() {
        let name = imputation_file_name(index);
        let mut w = create(dir, &name)?;
        write_completed_csv(set, index, provenance, &mut w)?;
        w.flush()?;
        files.push(name);
    }
    let posteriors = ite_posterior(set, provenance.contrast, provenance.interval)?;
    let mut w = create(dir, ITE_SUMMARY_FILE)?;
    write_ite_summary(&posteriors, set.frame.arm_labels(), provenance, &mut w)?;
    w.flush()?;
    files.push(ITE_SUMMARY_FILE.into());
    write_manifest(set, dir, RunKind::Impute, provenance, &files)?;
    files.push(MANIFEST_FILE.into());
    Ok(files.iter().map(|f| dir.join(f)).collect())
}

/// Out-of-sample draws, their effect summary and manifest.
pub fn write_prediction_set(
    set: &ImputationSet,
    dir: impl AsRef<Path>,
    provenance: &Provenance,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    if set.frame.n_out_of_sample() == 0 {
        return Err(SpcError::InvalidArgument("no out-of-sample units to predict".into()));
    }
    fs::create_dir_all(dir)?;
    let mut w = create(dir, PREDICTIONS_FILE)?;
    write_predictions(set, provenance.contrast, &mut w)?;
    w.flush()?;
    let posteriors: Vec<ItePosterior> = ite_posterior(set, provenance.contrast, provenance.interval)?
        .into_iter()
        .filter(|p| p.assignment == Assignment::OutOfSample)
        .collect();
    let mut w = create(dir, ITE_SUMMARY_FILE)?;
    write_ite_summary(&posteriors, set.frame.arm_labels(), provenance, &mut w)?;
    w.flush()?;
    let mut files = vec![PREDICTIONS_FILE.to_string(), ITE_SUMMARY_FILE.to_string()];
    write_manifest(set, dir, RunKind::Predict, provenance, &files)?;
    files.push(MANIFEST_FILE.into());
    Ok(files.iter().map(|f| dir.join(f)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{read_trial_csv, Schema};

    const TRIAL: &str = "id,arm,y,x\n\
        a,0,1.0,0.5\nb,0,2.0,1.5\nc,0,2.5,2.0\nd,0,4.1,3.0\ne,0,4.4,3.5\n\
        f,1,3.0,0.4\ng,1,3.9,1.0\nh,1,5.2,2.2\ni,1,6.1,3.1\nj,1,6.8,3.9\n\
        k,9,,2.0\n";

    fn schema() -> Schema {
        let mut s = Schema::new("arm", "y", vec!["x".into()]);
        s.id = Some("id".into());
        s.out_of_sample_code = vec!["9".into()];
        s
    }

    fn set(m: usize) -> ImputationSet {
        let frame = read_trial_csv(TRIAL.as_bytes(), &schema()).unwrap();
        multiply_impute(&frame, &SpcConfig::new(m, 17, RhoSpec::two_arm(0.5).unwrap())).unwrap()
    }

    #[test]
    fn file_count() {
        let dir = tempfile::tempdir().unwrap();
        let prov = Provenance {
            schema: Some(schema()),
            ..Provenance::default()
        };
        let files = write_imputation_set(&set(2), dir.path(), &prov).unwrap();
        assert_eq!(files.len(), 4);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 4);
        let m = Manifest::read(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(m.spec_version, 1);
        assert_eq!(m.seed, 17);
        let first = fs::read_to_string(dir.path().join("imputation_001.csv")).unwrap();
        assert!(first.starts_with("id,arm,y_0,y_1,x\na,0,1,"));
        assert!(first.contains("\nk,9,"));
    }

    #[test]
    fn observed_outcomes_written_verbatim() {
        let s = set(2);
        let mut buf = Vec::new();
        write_completed_csv(&s, 1, &Provenance::default(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let f_row = text.lines().find(|l| l.starts_with("f,")).unwrap();
        assert_eq!(f_row.split(',').nth(3), Some("3"));
    }

    #[test]
    fn predictions_cover_out_of_sample_only() {
        let s = set(3);
        let mut buf = Vec::new();
        write_predictions(&s, Contrast::default(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3);
        assert!(text.lines().skip(1).all(|l| l.starts_with("k,")));
    }

    #[test]
    fn replay_is_byte_identical() {
        let data_dir = tempfile::tempdir().unwrap();
        let input = data_dir.path().join("trial.csv");
        fs::write(&input, TRIAL).unwrap();
        let prov = Provenance {
            input: Some(input),
            schema: Some(schema()),
            ..Provenance::default()
        };
        let first = tempfile::tempdir().unwrap();
        let paths = write_imputation_set(&set(3), first.path(), &prov).unwrap();
        let second = tempfile::tempdir().unwrap();
        Manifest::read(first.path().join(MANIFEST_FILE))
            .unwrap()
            .replay(second.path())
            .unwrap();
        for p in paths {
            let name = p.file_name().unwrap();
            assert_eq!(
                fs::read(&p).unwrap(),
                fs::read(second.path().join(name)).unwrap(),
                "{name:?}"
            );
        }
    }

    #[test]
    fn rejects_future_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write_imputation_set(&set(2), dir.path(), &Provenance::default()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("\"spec_version\": 1", "\"spec_version\": 2");
        fs::write(&path, text).unwrap();
        assert!(matches!(Manifest::read(&path), Err(SpcError::SchemaMismatch(_))));
    }
}
