//! Argument parsing and the five commands.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mprfrail_core::estimation::{fit, FitSettings, ModelFit};
use mprfrail_core::inference::{frailty_estimates, Component};
use mprfrail_core::selection::{frailty_lrt, SelectionReport};
use mprfrail_core::simulation::ScenarioSpec;
use mprfrail_core::{build_design, BaselineFamily, Dataset, Error, Structure};
use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};
use crate::{parallel, report};

#[derive(Debug, Parser)]
#[command(
    name = "mprfrail",
    version,
    about = "Multi-parameter regression survival models with scale and shape frailties"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one frailty structure and print the coefficient table.
    Fit(FitArgs),
    /// Fit several structures and rank them by rAIC and cAIC.
    Compare(CompareArgs),
    /// Run a simulation scenario described by a JSON file.
    Simulate(SimulateArgs),
    /// Hazard ratio of a binary covariate over time, with bootstrap bands.
    Hr(HrArgs),
    /// Per-cluster frailty estimates with 95% intervals.
    Frailties(FrailtiesArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// CSV with header `cluster,time,status,<covariates...>`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "weibull")]
    pub family: BaselineFamily,
    /// Comma-separated scale covariates (default: every covariate in the file).
    #[arg(long, value_delimiter = ',')]
    pub scale_covariates: Option<Vec<String>>,
    /// Comma-separated shape covariates (default: the scale covariates).
    #[arg(long, value_delimiter = ',')]
    pub shape_covariates: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "ScF")]
    pub structure: Structure,
    /// Directory for `fit.json` and `fit.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "NF,BVNF,IF,CF,ScF,ShF")]
    pub structure: Vec<Structure>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Structure to fit (default: the file's `structure`, else BVNF).
    #[arg(long)]
    pub structure: Option<Structure>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Where a fit comes from: a saved `fit.json`, or a dataset fitted on the spot.
#[derive(Debug, Args)]
pub struct SourceArgs {
    #[arg(long, conflicts_with = "data")]
    pub fit: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "ScF")]
    pub structure: Structure,
}

#[derive(Debug, Args)]
pub struct HrArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Binary covariate whose hazard ratio is reported.
    #[arg(long)]
    pub covariate: String,
    /// Comma-separated times (default: 50 points up to the largest observed time).
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// Bootstrap replicates; 0 skips the bands.
    #[arg(long, default_value_t = 1000)]
    pub boot: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FrailtiesArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value = "scale")]
    pub component: Component,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Scenario file: the scenario itself plus optional run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(flatten)]
    pub spec: ScenarioSpec,
    #[serde(default)]
    pub structure: Option<Structure>,
    #[serde(default)]
    pub label: Option<String>,
}

/// A failed command: exit code, message, and whatever was produced before failing.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
    pub output: Option<String>,
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_SIMULATION: u8 = 4;

/// Exit code for a model error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidData(_)
        | Error::UnknownCovariate(_)
        | Error::Dimension(_)
        | Error::Structure(_)
        | Error::UnsupportedCovariate(_)
        | Error::Domain { .. } => EXIT_USAGE,
        Error::NonConvergence { .. } | Error::OptimizerNonConvergence { .. } => EXIT_NOT_CONVERGED,
        Error::Calibration { .. } | Error::Scenario { .. } => EXIT_SIMULATION,
        Error::Overflow(_)
        | Error::Evaluation { .. }
        | Error::Diverged { .. }
        | Error::Curvature
        | Error::InconsistentFits(_)
        | Error::Bootstrap(_) => EXIT_NUMERICAL,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self { code: exit_code(&e), message: e.to_string(), output: None }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Model(m) => m.into(),
            other => Self { code: EXIT_USAGE, message: other.to_string(), output: None },
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError { code: EXIT_USAGE, message: message.into(), output: None }
}

type CliResult<T> = Result<T, CliError>;

/// Runs a parsed command and returns what it prints on success.
pub fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Hr(a) => cmd_hr(a),
        Command::Frailties(a) => cmd_frailties(a),
    }
}

fn load(model: &ModelArgs) -> CliResult<(Dataset, Vec<String>, Vec<String>)> {
    let path = model.data.as_ref().ok_or_else(|| usage("--data is required"))?;
    let data = io::read_dataset_path(path)?;
    let scale = model.scale_covariates.clone().unwrap_or_else(|| data.covariate_names().to_vec());
    let shape = model.shape_covariates.clone().unwrap_or_else(|| scale.clone());
    Ok((data, scale, shape))
}

fn write(dir: &Option<PathBuf>, name: &str, contents: &str) -> CliResult<()> {
    if let Some(d) = dir {
        io::write_file(&d.join(name), contents)?;
    }
    Ok(())
}

fn fit_model(model: &ModelArgs, structure: Structure) -> CliResult<ModelFit> {
    let (data, scale, shape) = load(model)?;
    let design = build_design(&data, &scale, &shape)?;
    Ok(fit(model.family, &design, structure, &FitSettings::default())?)
}

pub fn cmd_fit(a: &FitArgs) -> CliResult<String> {
    let f = fit_model(&a.model, a.structure)?;
    let text = report::fit_table(&f);
    write(&a.out, "fit.json", &io::to_json(&f)?)?;
    write(&a.out, "fit.txt", &text)?;
    if !f.converged {
        return Err(CliError { code: EXIT_NOT_CONVERGED, message: "fit did not converge".into(), output: Some(text) });
    }
    Ok(text)
}

pub fn cmd_compare(a: &CompareArgs) -> CliResult<String> {
    if a.structure.len() < 2 {
        return Err(usage("compare needs at least two structures"));
    }
    let (data, scale, shape) = load(&a.model)?;
    let design = build_design(&data, &scale, &shape)?;
    let pool = parallel::pool(a.threads);
    let results = parallel::fit_structures(&pool, a.model.family, &design, &a.structure, &FitSettings::default());

    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for (st, r) in a.structure.iter().zip(results) {
        match r {
            Ok(f) if f.converged => {
                write(&a.out, &format!("fit_{}.json", st.code()), &io::to_json(&f)?)?;
                fits.push(f);
            }
            Ok(_) => failures.push((st.code().to_string(), "did not converge".to_string())),
            Err(e) => failures.push((st.code().to_string(), e.to_string())),
        }
    }
    if fits.is_empty() {
        let msg = failures.iter().map(|(m, w)| format!("{m}: {w}")).collect::<Vec<_>>().join("; ");
        return Err(CliError {
            code: EXIT_NOT_CONVERGED,
            message: format!("no structure converged ({msg})"),
            output: None,
        });
    }
    let rep = SelectionReport::from_fits(&fits)?;
    let mut lrts = Vec::new();
    if let Some(null) = fits.iter().find(|f| f.structure == Structure::None) {
        for alt in fits.iter().filter(|f| matches!(f.structure, Structure::Scale | Structure::Shape)) {
            match frailty_lrt(null, alt) {
                Ok(t) => lrts.push((format!("NF vs {}", alt.structure), t)),
                Err(e) => failures.push((format!("LRT NF vs {}", alt.structure), e.to_string())),
            }
        }
    }
    let text = report::selection_table(&rep, &failures, &lrts);
    write(&a.out, "selection.csv", &io::selection_csv(&rep)?)?;
    write(&a.out, "selection.txt", &text)?;
    write(&a.out, "selection.json", &io::to_json(&rep)?)?;
    Ok(text)
}

pub fn load_scenario(path: &Path) -> CliResult<ScenarioFile> {
    Ok(io::read_json(path)?)
}

fn scenario_label(spec: &ScenarioSpec) -> String {
    match &spec.n_i {
        mprfrail_core::simulation::ClusterSizes::Fixed(n) => format!("q{}_n{}", spec.q, n),
        mprfrail_core::simulation::ClusterSizes::Mixture { .. } => format!("q{}_mixture", spec.q),
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<String> {
    let mut file = load_scenario(&a.scenario)?;
    if let Some(r) = a.replicates {
        file.spec.replicates = r;
    }
    if let Some(s) = a.seed {
        file.spec.seed = s;
    }
    let structure = a.structure.or(file.structure).unwrap_or(Structure::Bivariate);
    let label = file.label.clone().unwrap_or_else(|| scenario_label(&file.spec));
    let pool = parallel::pool(a.threads);
    let summary = parallel::run_scenario(&pool, &file.spec, structure, &FitSettings::default())?;
    let text = report::summary_table(&label, &summary);
    write(&a.out, "summary.csv", &io::summary_csv(&label, &summary)?)?;
    write(&a.out, "summary.json", &io::to_json(&summary)?)?;
    Ok(text)
}

fn resolve_fit(s: &SourceArgs) -> CliResult<ModelFit> {
    match &s.fit {
        Some(p) => Ok(io::read_json(p)?),
        None => fit_model(&s.model, s.structure),
    }
}

/// Default grid: 50 evenly spaced times up to the largest observed time.
pub fn default_times(fit: &ModelFit) -> Vec<f64> {
    let top = if fit.time_max > 0.0 { fit.time_max } else { 1.0 };
    (1..=50).map(|k| top * k as f64 / 50.0).collect()
}

pub fn cmd_hr(a: &HrArgs) -> CliResult<String> {
    let f = resolve_fit(&a.source)?;
    let times = a.times.clone().unwrap_or_else(|| default_times(&f));
    let curve = if a.boot == 0 {
        mprfrail_core::inference::hazard_ratio_curve(&f, &a.covariate, &times)?
    } else {
        let pool = parallel::pool(a.threads);
        parallel::bootstrap_hr_ci(&pool, &f, &a.covariate, &times, a.boot, a.seed)?
    };
    let csv = io::hr_csv(&curve)?;
    write(&a.out, "hr.csv", &csv)?;
    write(&a.out, "hr.json", &io::to_json(&curve)?)?;
    Ok(csv)
}

pub fn cmd_frailties(a: &FrailtiesArgs) -> CliResult<String> {
    let f = resolve_fit(&a.source)?;
    let intervals = frailty_estimates(&f, a.component)?;
    let csv = io::frailties_csv(&intervals)?;
    let stem = match a.component {
        Component::Scale => "frailties_scale",
        Component::Shape => "frailties_shape",
    };
    write(&a.out, &format!("{stem}.csv"), &csv)?;
    write(&a.out, &format!("{stem}.json"), &io::to_json(&intervals)?)?;
    Ok(csv)
}
