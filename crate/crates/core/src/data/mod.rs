//! Trial data, configuration, CSV ingestion and validation.

mod config;
mod csv_io;
mod frame;
mod validate;

pub use config::{CovariateMethod, Execution, RhoInput, RhoSpec, SpcConfig};
pub use csv_io::{load_out_of_sample_csv, load_trial_csv, read_trial_csv, schema_for_written, write_trial_csv, Schema};
pub use frame::{Assignment, Covariate, TrialFrame};
pub use validate::{validate, ArmSummary, CovariateSummary, ValidationReport, ASSUMPTIONS};
