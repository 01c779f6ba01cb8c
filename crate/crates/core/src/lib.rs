//! Multiple imputation of unobserved potential outcomes under an
//! analyst-specified partial correlation between treatment arms.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: symmetric matrices, Cholesky, the sweep operator, samplers;
//! * [`data`]: trial frames, CSV ingestion, configuration, validation;
//! * [`bayes`]: Jeffreys-prior linear regression and chained-equation covariate imputation;
//! * [`engine`]: the joint outcome model and the imputation driver;
//! * [`pooling`]: Rubin's rules, average and individual treatment effects;
//! * [`simulation`]: the trivariate-normal simulation study and its metrics;
//! * [`output`]: CSV and manifest writers.
//!
//! Independent imputations and replications run on rayon when the `parallel`
//! feature is enabled (the default). Every work unit draws from its own
//! [`numerics::RngStream`], so results are identical with or without it.

pub mod bayes;
pub mod data;
pub mod engine;
pub mod error;
mod exec;
pub mod numerics;
pub mod output;
pub mod pooling;
pub mod simulation;

pub use error::{Result, SpcError};
