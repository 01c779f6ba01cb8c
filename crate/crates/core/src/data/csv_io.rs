use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use super::frame::{Assignment, Covariate, TrialFrame};
use crate::error::{Result, SpcError};

/// Maps CSV columns to their roles.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub treatment: String,
    pub outcome: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Column holding unit ids; row numbers are used when absent.
    #[serde(default)]
    pub id: Option<String>,
    /// Treatment codes marking units outside the trial. Accepts a single
    /// string or a list in JSON.
    #[serde(default, deserialize_with = "one_or_many")]
    pub out_of_sample_code: Vec<String>,
    /// Pins the arm coding: `arm_codes[a]` is the treatment code of arm `a`.
    /// Without it arms are numbered in order of first appearance.
    #[serde(default)]
    pub arm_codes: Option<Vec<String>>,
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
    }
    Ok(match Option::<OneOrMany>::deserialize(d)? {
        None => Vec::new(),
        Some(OneOrMany::One(s)) => vec![s],
        Some(OneOrMany::Many(v)) => v,
    })
}

impl Schema {
    pub fn new(treatment: impl Into<String>, outcome: impl Into<String>, covariates: Vec<String>) -> Self {
        Self {
            treatment: treatment.into(),
            outcome: outcome.into(),
            covariates,
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn is_out_of_sample(&self, code: &str) -> bool {
        self.out_of_sample_code.iter().any(|c| c == code)
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

fn parse_cell(cell: &str, column: &str, line: usize) -> Result<Option<f64>> {
    let cell = cell.trim();
    if is_missing(cell) {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(SpcError::NonNumeric {
            column: column.to_string(),
            line,
            value: cell.to_string(),
        }),
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| SpcError::SchemaMismatch(format!("column `{name}` not found in header")))
}

pub fn load_trial_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<TrialFrame> {
    let file = std::fs::File::open(path)?;
    read_trial_csv(file, schema)
}

/// Parses a trial from CSV text. Empty cells and `NA` are missing.
pub fn read_trial_csv<R: Read>(reader: R, schema: &Schema) -> Result<TrialFrame> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let t_col = column_index(&headers, &schema.treatment)?;
    let y_col = column_index(&headers, &schema.outcome)?;
    let id_col = schema.id.as_deref().map(|c| column_index(&headers, c)).transpose()?;
    let x_cols = schema
        .covariates
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;

    let mut codes: Vec<String> = schema.arm_codes.clone().unwrap_or_default();
    let pinned = schema.arm_codes.is_some();
    let mut code_index: HashMap<String, usize> = codes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();

    let mut ids = Vec::new();
    let mut assignment = Vec::new();
    let mut outcome = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); x_cols.len()];

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row + 2, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("");
        let code = field(t_col);
        if is_missing(code) {
            return Err(SpcError::MissingTreatment { line });
        }
        let a = if schema.is_out_of_sample(code) {
            Assignment::OutOfSample
        } else {
            let idx = match code_index.get(code) {
                Some(&i) => i,
                None if pinned => {
                    return Err(SpcError::SchemaMismatch(format!(
                        "treatment code `{code}` on line {line} is not among the pinned arm codes"
                    )))
                }
                None => {
                    codes.push(code.to_string());
                    code_index.insert(code.to_string(), codes.len() - 1);
                    codes.len() - 1
                }
            };
            Assignment::Arm(idx)
        };
        let y = match a {
            Assignment::Arm(arm) => match parse_cell(field(y_col), &schema.outcome, line)? {
                Some(v) => Some(v),
                None => {
                    return Err(SpcError::MissingOutcome {
                        line,
                        arm: codes[arm].clone(),
                    })
                }
            },
            // Outcomes recorded under other treatments are not potential
            // outcomes of any modelled arm.
            Assignment::OutOfSample => None,
        };
        for (col, &xi) in columns.iter_mut().zip(&x_cols) {
            col.push(parse_cell(field(xi), &headers[xi], line)?);
        }
        ids.push(match id_col {
            Some(c) => field(c).to_string(),
            None => (row + 1).to_string(),
        });
        assignment.push(a);
        outcome.push(y);
    }

    let covariates = schema
        .covariates
        .iter()
        .zip(columns)
        .map(|(name, values)| Covariate::new(name.clone(), values))
        .collect();
    Ok(TrialFrame::new(ids, assignment, outcome, covariates, codes)?
        .with_column_names(schema.treatment.clone(), schema.outcome.clone()))
}

/// Reads units outside the trial from a separate file and appends them.
/// Only the id and covariate columns are read.
pub fn load_out_of_sample_csv(path: impl AsRef<Path>, schema: &Schema, frame: TrialFrame) -> Result<TrialFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(std::fs::File::open(path)?);
    let headers = rdr.headers()?.clone();
    let id_col = schema.id.as_deref().map(|c| column_index(&headers, c)).transpose()?;
    let x_cols = schema
        .covariates
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let offset = frame.n_units();
    let mut ids = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); x_cols.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row + 2, |p| p.line() as usize);
        for (col, &xi) in columns.iter_mut().zip(&x_cols) {
            col.push(parse_cell(record.get(xi).unwrap_or(""), &headers[xi], line)?);
        }
        ids.push(match id_col {
            Some(c) => record.get(c).unwrap_or("").to_string(),
            None => (offset + row + 1).to_string(),
        });
    }
    let covariates = schema
        .covariates
        .iter()
        .zip(columns)
        .map(|(name, values)| Covariate::new(name.clone(), values))
        .collect();
    frame.with_out_of_sample(ids, covariates)
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Writes the frame in the same long format it is read from, with an `id`
/// column first. Out-of-sample rows carry `out_of_sample_label` as their
/// treatment code.
pub fn write_trial_csv<W: Write>(frame: &TrialFrame, out_of_sample_label: &str, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id", frame.treatment_name(), frame.outcome_name()];
    header.extend(frame.covariate_names());
    w.write_record(&header)?;
    for i in 0..frame.n_units() {
        let mut row = vec![frame.unit_ids()[i].clone()];
        row.push(match frame.assignment()[i] {
            Assignment::Arm(a) => frame.arm_labels()[a].clone(),
            Assignment::OutOfSample => out_of_sample_label.to_string(),
        });
        row.push(fmt_cell(frame.outcome()[i]));
        row.extend(frame.covariates().iter().map(|c| fmt_cell(c.values[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// The schema that reads back a file produced by [`write_trial_csv`].
pub fn schema_for_written(frame: &TrialFrame, out_of_sample_label: &str) -> Schema {
    Schema {
        treatment: frame.treatment_name().to_string(),
        outcome: frame.outcome_name().to_string(),
        covariates: frame.covariate_names().iter().map(|s| s.to_string()).collect(),
        id: Some("id".into()),
        out_of_sample_code: vec![out_of_sample_label.to_string()],
        arm_codes: Some(frame.arm_labels().to_vec()),
    }
}
