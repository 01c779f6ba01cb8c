//! Command-line front end. Every subcommand parses its arguments into the
//! library's configuration types and calls the matching library operation.
//!
//! Exit codes: 0 on success, 2 for invalid input or configuration, 1 for
//! any other failure.

use std::ffi::OsString;
use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Deserialize;

use spc_core::data::{
    load_out_of_sample_csv, load_trial_csv, validate, Execution, RhoInput, RhoSpec, Schema, SpcConfig, TrialFrame,
};
use spc_core::engine::multiply_impute;
use spc_core::output::{write_imputation_set, write_prediction_set, Manifest, Provenance, MANIFEST_FILE};
use spc_core::pooling::{ate, pool_estimates, CompleteDataEstimate, Contrast, IntervalMethod};
use spc_core::simulation::{replication_study, sensitivity_sweep, StudyConfig};
use spc_core::SpcError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

/// A fault in the user's arguments or configuration.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(
    name = "spc",
    version,
    about = "Multiple imputation of potential outcomes under a chosen partial correlation"
)]
pub struct Cli {
    /// Worker threads for imputations and replications (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Impute every unobserved potential outcome and write the completed datasets.
    Impute(ImputeArgs),
    /// Draw both potential outcomes for out-of-sample units.
    Predict(PredictArgs),
    /// Pool per-imputation estimates with Rubin's rules.
    Pool(PoolArgs),
    /// Run the simulation study.
    Simulate(SimulateArgs),
    /// Sweep the partial correlation and report effect coverage and accuracy.
    Sensitivity(SensitivityArgs),
    /// Re-run an imputation from its manifest.
    Replay(ReplayArgs),
}

/// One `--rho` value: a scalar for every pair, or `a,b=value` for one pair
/// of arm labels.
#[derive(Debug, Clone, PartialEq)]
pub enum RhoArg {
    All(f64),
    Pair(String, String, f64),
}

impl FromStr for RhoArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |v: &str| -> Result<f64, String> {
            let v: f64 = v.trim().parse().map_err(|_| format!("'{v}' is not a number"))?;
            if (-1.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(format!("correlation {v} is outside [-1, 1]"))
            }
        };
        match s.split_once('=') {
            None => parse(s).map(RhoArg::All),
            Some((pair, v)) => {
                let (a, b) = pair
                    .split_once(',')
                    .ok_or_else(|| format!("expected 'a,b=value', got '{s}'"))?;
                Ok(RhoArg::Pair(a.trim().into(), b.trim().into(), parse(v)?))
            }
        }
    }
}

impl<'de> Deserialize<'de> for RhoArg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => RhoArg::from_str(&v.to_string()),
            Raw::Text(s) => RhoArg::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalArg {
    Predictive,
    Empirical,
}

impl From<IntervalArg> for IntervalMethod {
    fn from(v: IntervalArg) -> Self {
        match v {
            IntervalArg::Predictive => IntervalMethod::Predictive,
            IntervalArg::Empirical => IntervalMethod::Empirical,
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Trial CSV.
    #[arg(long = "in", value_name = "CSV")]
    pub input: Option<PathBuf>,
    /// Treatment column.
    #[arg(long)]
    pub treatment: Option<String>,
    /// Outcome column.
    #[arg(long)]
    pub outcome: Option<String>,
    /// Covariate columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Unit id column (default: row number).
    #[arg(long)]
    pub id: Option<String>,
    /// Treatment code marking out-of-sample rows; repeatable.
    #[arg(long = "out-of-sample-code")]
    pub out_of_sample_code: Vec<String>,
    /// Treatment codes in arm order, comma separated (default: order of appearance).
    #[arg(long, value_delimiter = ',')]
    pub arm_codes: Option<Vec<String>>,
    /// Extra out-of-sample units (covariates only) in a second CSV.
    #[arg(long, value_name = "CSV")]
    pub oos_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// JSON configuration file; flags take precedence.
    #[arg(long, value_name = "JSON")]
    pub config: Option<PathBuf>,
    /// Partial correlation: `v` for every pair of arms, or `a,b=v` per pair.
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Vec<RhoArg>,
    /// Read `--rho` as marginal correlations and convert them.
    #[arg(long)]
    pub rho_marginal: bool,
    /// Number of imputations.
    #[arg(long)]
    pub m: Option<usize>,
    /// Chained-equation cycles for incomplete covariates.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Random seed (drawn and printed when omitted).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Interval for individual effects.
    #[arg(long, value_enum)]
    pub interval: Option<IntervalArg>,
    /// Effect contrast as `treated,control` arm labels.
    #[arg(long)]
    pub contrast: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// CSV with `estimate` and `variance` columns, one row per imputation.
    #[arg(long = "in", value_name = "CSV")]
    pub input: PathBuf,
    /// Complete-data degrees of freedom (default: large sample).
    #[arg(long)]
    pub df: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Units per simulated trial.
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    /// Imputations per trial.
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    /// Replications.
    #[arg(long, default_value_t = StudyConfig::DEFAULT_REPLICATIONS)]
    pub reps: usize,
    /// Use 1000 replications.
    #[arg(long, conflicts_with = "reps")]
    pub full: bool,
    /// Random seed (drawn and printed when omitted).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Chained-equation cycles.
    #[arg(long, default_value_t = SpcConfig::DEFAULT_FCS_ITERATIONS)]
    pub iterations: usize,
    /// Interval for individual effects.
    #[arg(long, value_enum, default_value = "predictive")]
    pub interval: IntervalArg,
    /// Keep effect draws for every n-th unit of the first replication.
    #[arg(long, default_value_t = 100)]
    pub ite_stride: usize,
    /// Output directory.
    #[arg(long, default_value = "spc_simulation")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Partial correlations to impute under, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0.0, 0.73, 0.99])]
    pub rho: Vec<f64>,
    #[command(flatten)]
    pub study: StudyArgs,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    /// Grid of partial correlations, comma separated (default 0, 0.1, ..., 1).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub study: StudyArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest of the run to repeat (or its directory).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Settings accepted in a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub oos_file: Option<PathBuf>,
    pub schema: Option<Schema>,
    pub rho: Option<Vec<RhoArg>>,
    pub rho_marginal: Option<bool>,
    pub m: Option<usize>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub interval: Option<IntervalArg>,
    pub contrast: Option<String>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    fn read(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }
}

/// Everything an imputation run needs, after merging file and flags.
#[derive(Debug)]
pub struct ImputeJob {
    pub frame: TrialFrame,
    pub config: SpcConfig,
    pub provenance: Provenance,
    pub out: PathBuf,
}

fn resolve_schema(data: &DataArgs, file: &FileConfig) -> anyhow::Result<Schema> {
    let mut schema = file.schema.clone().unwrap_or_default();
    if let Some(t) = &data.treatment {
        schema.treatment = t.clone();
    }
    if let Some(o) = &data.outcome {
        schema.outcome = o.clone();
    }
    if let Some(c) = &data.covariates {
        schema.covariates = c.clone();
    }
    if data.id.is_some() {
        schema.id = data.id.clone();
    }
    if !data.out_of_sample_code.is_empty() {
        schema.out_of_sample_code = data.out_of_sample_code.clone();
    }
    if data.arm_codes.is_some() {
        schema.arm_codes = data.arm_codes.clone();
    }
    if schema.treatment.is_empty() || schema.outcome.is_empty() {
        bail!(usage("--treatment and --outcome are required"));
    }
    Ok(schema)
}

fn arm_index(frame: &TrialFrame, label: &str) -> anyhow::Result<usize> {
    frame
        .arm_labels()
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| usage(format!("unknown arm '{label}'; arms are {:?}", frame.arm_labels())))
}

/// Builds the correlation spec from `--rho` values against the frame's arms.
pub fn rho_spec(frame: &TrialFrame, args: &[RhoArg]) -> anyhow::Result<RhoSpec> {
    let w = frame.n_arms();
    match args {
        [] => bail!(usage(
            "--rho is required: the correlation between potential outcomes is not identified by the data"
        )),
        [RhoArg::All(v)] => Ok(RhoSpec::uniform(w, *v)?),
        _ => {
            let mut pairs = Vec::with_capacity(args.len());
            for a in args {
                let RhoArg::Pair(x, y, v) = a else {
                    bail!(usage("mix of scalar and per-pair --rho values"));
                };
                pairs.push((arm_index(frame, x)?, arm_index(frame, y)?, *v));
            }
            Ok(RhoSpec::from_pairs(w, &pairs)?)
        }
    }
}

fn contrast(frame: &TrialFrame, spec: Option<&str>) -> anyhow::Result<Contrast> {
    match spec {
        None => Ok(Contrast::default()),
        Some(s) => {
            let (t, c) = s
                .split_once(',')
                .ok_or_else(|| usage(format!("--contrast expects 'treated,control', got '{s}'")))?;
            Ok(Contrast {
                treated: arm_index(frame, t.trim())?,
                control: arm_index(frame, c.trim())?,
            })
        }
    }
}

fn absolute(path: &Path) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

/// Merges the config file with flags (flags win) and loads the data.
pub fn impute_job(data: &DataArgs, model: &ModelArgs, default_out: &str) -> anyhow::Result<ImputeJob> {
    let file = match &model.config {
        Some(p) => FileConfig::read(p)?,
        None => FileConfig::default(),
    };
    let schema = resolve_schema(data, &file)?;
    let input = data
        .input
        .clone()
        .or(file.input.clone())
        .ok_or_else(|| usage("--in is required"))?;
    let oos_file = data.oos_file.clone().or(file.oos_file.clone());

    let mut frame = load_trial_csv(&input, &schema)?;
    if let Some(oos) = &oos_file {
        frame = load_out_of_sample_csv(oos, &schema, frame)?;
    }

    let rho_args = if model.rho.is_empty() {
        file.rho.clone().unwrap_or_default()
    } else {
        model.rho.clone()
    };
    let spec = rho_spec(&frame, &rho_args)?;
    let seed = model.seed.or(file.seed).unwrap_or_else(rand::random);
    let mut config = SpcConfig::new(model.m.or(file.m).unwrap_or(20), seed, spec.clone());
    if model.rho_marginal || file.rho_marginal.unwrap_or(false) {
        config.rho = RhoInput::Marginal(spec);
    }
    config.fcs_iterations = model.iterations.or(file.iterations).unwrap_or(config.fcs_iterations);
    config.check()?;

    let interval = model.interval.or(file.interval).map(Into::into).unwrap_or_default();
    let contrast = contrast(&frame, model.contrast.as_deref().or(file.contrast.as_deref()))?;
    let provenance = Provenance {
        input: Some(absolute(&input)),
        out_of_sample_input: oos_file.as_deref().map(absolute),
        schema: Some(schema),
        contrast,
        interval,
    };
    let out = model.out.clone().or(file.out).unwrap_or_else(|| default_out.into());
    Ok(ImputeJob {
        frame,
        config,
        provenance,
        out,
    })
}

fn run_impute(args: &ImputeArgs) -> anyhow::Result<()> {
    let job = impute_job(&args.data, &args.model, "spc_output")?;
    println!("seed: {}", job.config.seed);
    println!("{}", validate(&job.frame)?);
    let set = multiply_impute(&job.frame, &job.config)?;
    let effect = ate(&set, job.provenance.contrast)?;
    println!(
        "ATE {:.4} (95% CI {:.4} to {:.4}, df {:.1})",
        effect.estimate, effect.ci_lower, effect.ci_upper, effect.df
    );
    let files = write_imputation_set(&set, &job.out, &job.provenance)?;
    println!("wrote {} files to {}", files.len(), job.out.display());
    Ok(())
}

fn run_predict(args: &PredictArgs) -> anyhow::Result<()> {
    let job = impute_job(&args.data, &args.model, "spc_prediction")?;
    println!("seed: {}", job.config.seed);
    if job.frame.n_out_of_sample() == 0 {
        bail!(usage("no out-of-sample units: pass --oos-file or --out-of-sample-code"));
    }
    let set = multiply_impute(&job.frame, &job.config)?;
    let files = write_prediction_set(&set, &job.out, &job.provenance)?;
    println!(
        "predicted {} out-of-sample units; wrote {} files to {}",
        job.frame.n_out_of_sample(),
        files.len(),
        job.out.display()
    );
    Ok(())
}

/// Reads an `estimate,variance` CSV.
pub fn read_estimates(path: &Path) -> anyhow::Result<Vec<CompleteDataEstimate>> {
    #[derive(Deserialize)]
    struct Row {
        estimate: f64,
        variance: f64,
    }
    let mut reader = csv::Reader::from_path(path).map_err(SpcError::from)?;
    reader
        .deserialize::<Row>()
        .map(|r| {
            let r = r.map_err(SpcError::from)?;
            Ok(CompleteDataEstimate {
                estimate: r.estimate,
                variance: r.variance,
            })
        })
        .collect()
}

fn run_pool(args: &PoolArgs) -> anyhow::Result<()> {
    let estimates = read_estimates(&args.input)?;
    let p = pool_estimates(&estimates, args.df)?;
    println!("m: {}", p.m);
    println!("estimate: {}", p.estimate);
    println!("within: {}", p.within);
    println!("between: {}", p.between);
    println!("total: {}", p.total);
    println!("df: {}", p.df);
    println!("ci_lower: {}", p.ci_lower);
    println!("ci_upper: {}", p.ci_upper);
    Ok(())
}

fn study_config(args: &StudyArgs, grid: Vec<f64>) -> anyhow::Result<StudyConfig> {
    if let Some(bad) = grid.iter().find(|r| !(-1.0..=1.0).contains(*r)) {
        bail!(usage(format!("correlation {bad} is outside [-1, 1]")));
    }
    let seed = args.seed.unwrap_or_else(rand::random);
    let reps = if args.full { 1000 } else { args.reps };
    let mut config = StudyConfig::new(args.n, args.m, reps, grid, seed);
    config.fcs_iterations = args.iterations;
    config.interval = args.interval.into();
    config.ite_stride = args.ite_stride;
    config.execution = Execution::Parallel;
    Ok(config)
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn run_simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let config = study_config(&args.study, args.rho.clone())?;
    println!("seed: {}", config.seed);
    info!(
        "{} replications of n={} over rho {:?}",
        config.replications, config.n, config.rho_grid
    );
    let report = replication_study(&config)?;
    let out = &args.study.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    report.write_table1_csv(create(out, "table1.csv")?)?;
    report.write_table2_csv(create(out, "table2.csv")?)?;
    report.write_ite_draws_csv(create(out, "ite_draws.csv")?)?;
    println!("rho\tmean_bias\tvar_bias\tcoverage\tmean_distance");
    for r in report.table1() {
        println!(
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            r.rho, r.mean_bias.mean, r.variance_of_bias.mean, r.coverage.mean, r.mean_distance.mean
        );
    }
    println!("wrote table1.csv, table2.csv, ite_draws.csv to {}", out.display());
    Ok(())
}

fn run_sensitivity(args: &SensitivityArgs) -> anyhow::Result<()> {
    let grid = args
        .grid
        .clone()
        .unwrap_or_else(|| (0..=10).map(|i| f64::from(i) / 10.0).collect());
    let config = study_config(&args.study, grid)?;
    println!("seed: {}", config.seed);
    let curve = sensitivity_sweep(&config)?;
    let out = &args.study.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    curve.write_csv(create(out, "sensitivity.csv")?)?;
    curve.report.write_ite_draws_csv(create(out, "ite_draws.csv")?)?;
    println!("rho\tcoverage\tmean_distance");
    for p in &curve.points {
        println!("{}\t{:.4}\t{:.4}", p.rho, p.coverage.mean, p.mean_distance.mean);
    }
    println!("wrote sensitivity.csv, ite_draws.csv to {}", out.display());
    Ok(())
}

fn run_replay(args: &ReplayArgs) -> anyhow::Result<()> {
    let path = if args.manifest.is_dir() {
        args.manifest.join(MANIFEST_FILE)
    } else {
        args.manifest.clone()
    };
    let manifest = Manifest::read(&path)?;
    println!("seed: {}", manifest.seed);
    let files = manifest.replay(&args.out)?;
    println!("wrote {} files to {}", files.len(), args.out.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Impute(a) => run_impute(a),
        Command::Predict(a) => run_predict(a),
        Command::Pool(a) => run_pool(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Sensitivity(a) => run_sensitivity(a),
        Command::Replay(a) => run_replay(a),
    }
}

/// Exit code for an error: 2 when the input or configuration is at fault.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<SpcError>() {
            return if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            };
        }
    }
    EXIT_RUNTIME
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::from_default_env().filter_level(level).try_init();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_VALIDATION;
        }
        pool = pool.num_threads(n);
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| dispatch(&cli)),
        Err(e) => Err(anyhow::Error::new(e).context("starting worker threads")),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_arguments() {
        assert_eq!("0.7".parse::<RhoArg>(), Ok(RhoArg::All(0.7)));
        assert_eq!("-0.2".parse::<RhoArg>(), Ok(RhoArg::All(-0.2)));
        assert_eq!(
            "a, b=0.5".parse::<RhoArg>(),
            Ok(RhoArg::Pair("a".into(), "b".into(), 0.5))
        );
        assert!("1.5".parse::<RhoArg>().is_err());
        assert!("a=0.5".parse::<RhoArg>().is_err());
        assert!("x".parse::<RhoArg>().is_err());
    }

    #[test]
    fn rho_in_config_file() {
        let c: FileConfig = serde_json::from_str(r#"{"rho": [0.4], "m": 3}"#).unwrap();
        assert_eq!(c.rho, Some(vec![RhoArg::All(0.4)]));
        let c: FileConfig = serde_json::from_str(r#"{"rho": ["0,1=0.2", "0,2=0.3", "1,2=0.4"]}"#).unwrap();
        assert_eq!(c.rho.unwrap().len(), 3);
        assert!(serde_json::from_str::<FileConfig>(r#"{"mm": 3}"#).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&usage("x")), EXIT_VALIDATION);
        assert_eq!(exit_code(&SpcError::OutOfRange(2.0).into()), EXIT_VALIDATION);
        let io = SpcError::Io(std::io::Error::other("disk"));
        assert_eq!(exit_code(&anyhow::Error::from(io).context("writing")), EXIT_RUNTIME);
    }
}
