//! Command-line front end for `gagfit`.
//!
//! Exit codes: 0 success, 2 invalid input, 3 fit did not converge,
//! 64 usage error, 1 output failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use gagfit::eb::{fit_prior, prior_from_fit};
use gagfit::io::{emit_json, format_rate_table, parse_strata_csv, write_observed_csv};
use gagfit::jackknife::ParamValues;
use gagfit::{
    breslow_day, emit_result_json, fit_em, fit_emb, jackknife_variance, lrt_crime_margins_with,
    mh_common_odds_ratio, parse_observed_csv, parse_result_json, sample_observed, FitConfig,
    Fitter, GagSharing, InitPolicy, ModelParams, ObservedTable, OmegaMode, OmegaModel,
    ParsedObserved, PriorSpec, ResultDocument, SamplingUnitSeries, SimConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OUTPUT: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "gagfit",
    version,
    about = "Gag-factor response-bias models for collapsed survey tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Maximum-likelihood fit by EM.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Empirical-Bayes fit (EMB) with a prior from an earlier period.
    FitEb {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Fit an earlier-period table and write the prior as JSON.
    Prior {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Delete-one jackknife over sampling units.
    Jackknife {
        /// CSV with a `unit` column, or a directory of per-unit CSV files.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Em)]
        method: MethodArg,
        #[command(flatten)]
        prior: OptionalPriorArgs,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Draw an observed table from known parameters.
    Simulate {
        /// Parameter JSON: `{pi, tau, rho, delta, omega}` or a result document.
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Homogeneity diagnostics.
    Diagnose {
        #[command(subcommand)]
        test: Diagnose,
    },
    /// Print original versus fitted rates per 1000 from a result document.
    Report {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum Diagnose {
    /// Breslow–Day test of a common odds ratio across strata.
    BreslowDay {
        /// CSV with header `stratum,a,b,c,d`.
        #[arg(long)]
        strata: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Likelihood-ratio test that two periods share crime margins.
    Lrt {
        #[arg(long)]
        data_a: PathBuf,
        #[arg(long)]
        data_b: PathBuf,
        #[arg(long, value_enum, default_value_t = GagArg::Shared)]
        gag: GagArg,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long, value_enum, default_value_t = OmegaArg::Independence)]
    omega: OmegaArg,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct PriorArgs {
    /// Earlier-period table; the prior is its EM fit.
    #[arg(long)]
    prior_data: Option<PathBuf>,
    /// Prior JSON as written by `gagfit prior`.
    #[arg(long)]
    prior: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = false, multiple = false)]
struct OptionalPriorArgs {
    #[arg(long)]
    prior_data: Option<PathBuf>,
    #[arg(long)]
    prior: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OmegaArg {
    Independence,
    Saturated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Em,
    Emb,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GagArg {
    Shared,
    PerPeriod,
}

#[derive(Debug)]
enum CliError {
    Fit(gagfit::Error),
    Input(String),
    Usage(String),
    Output(String),
}

impl From<gagfit::Error> for CliError {
    fn from(e: gagfit::Error) -> Self {
        CliError::Fit(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Fit(e) if !e.is_validation() => EXIT_NOT_CONVERGED,
            CliError::Fit(_) | CliError::Input(_) => EXIT_INVALID,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Output(_) => EXIT_OUTPUT,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Fit(e) => e.to_string(),
            CliError::Input(m) | CliError::Usage(m) | CliError::Output(m) => m.clone(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.exit_code()
        }
    }
}

/// Hashes every input in order, each prefixed with its role and length.
#[derive(Default)]
struct InputDigest(Sha256);

impl InputDigest {
    fn add(&mut self, role: &str, bytes: &[u8]) {
        self.0.update(role.as_bytes());
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
    }

    fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn in_file(path: &Path, e: gagfit::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn read_table(path: &Path, digest: &mut InputDigest, role: &str) -> CliResult<ObservedTable> {
    let bytes = read(path)?;
    digest.add(role, &bytes);
    match parse_observed_csv(&bytes).map_err(|e| in_file(path, e))? {
        ParsedObserved::Single(t) => Ok(t),
        ParsedObserved::Units(_) => Err(CliError::Input(format!(
            "{}: expected a single table, found a `unit` column",
            path.display()
        ))),
    }
}

fn read_series(path: &Path, digest: &mut InputDigest) -> CliResult<SamplingUnitSeries> {
    if !path.is_dir() {
        let bytes = read(path)?;
        digest.add("data", &bytes);
        return match parse_observed_csv(&bytes).map_err(|e| in_file(path, e))? {
            ParsedObserved::Single(_) => Err(CliError::Input(format!(
                "{}: jackknife needs a `unit` column or a directory of unit files",
                path.display()
            ))),
            units => units.into_series().map_err(|e| in_file(path, e)),
        };
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    files.sort();
    let mut labels = Vec::new();
    let mut tables = Vec::new();
    for file in &files {
        let label = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let bytes = read(file)?;
        digest.add(&format!("unit:{label}"), &bytes);
        match parse_observed_csv(&bytes) {
            Ok(ParsedObserved::Single(t)) => tables.push(t),
            // A sparse unit may be all zeros; only the pooled table must be non-empty.
            Err(gagfit::Error::EmptyTable) => tables.push(ObservedTable::zeros()),
            Ok(ParsedObserved::Units(_)) => {
                return Err(CliError::Input(format!(
                    "{}: unit files must not carry a `unit` column",
                    file.display()
                )))
            }
            Err(e) => return Err(in_file(file, e)),
        }
        labels.push(label);
    }
    SamplingUnitSeries::with_labels(labels, tables).map_err(|e| in_file(path, e))
}

fn fit_config(args: &FitArgs) -> FitConfig {
    FitConfig {
        tolerance: args.tol,
        max_iterations: args.max_iter,
        omega_mode: match args.omega {
            OmegaArg::Independence => OmegaMode::Independence,
            OmegaArg::Saturated => OmegaMode::Saturated,
        },
        init: InitPolicy::default(),
    }
}

fn load_prior(
    prior_data: Option<&Path>,
    prior: Option<&Path>,
    config: &FitConfig,
    digest: &mut InputDigest,
) -> CliResult<Option<PriorSpec>> {
    if let Some(path) = prior_data {
        let table = read_table(path, digest, "prior-data")?;
        let fit = fit_em(&table, config)?;
        return Ok(Some(prior_from_fit(&fit, provenance(path))));
    }
    if let Some(path) = prior {
        let bytes = read(path)?;
        digest.add("prior", &bytes);
        let spec = PriorSpec::from_json(&bytes).map_err(|e| in_file(path, e))?;
        spec.validate().map_err(|e| in_file(path, e))?;
        return Ok(Some(spec));
    }
    Ok(None)
}

fn provenance(path: &Path) -> String {
    let name = path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    );
    format!("EM fit to {name}")
}

fn emit(out: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, bytes)
            .map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display()))),
        None => stdout
            .write_all(bytes)
            .map_err(|e| CliError::Output(format!("cannot write output: {e}"))),
    }
}

/// Accepts bare parameters or any document with a `params` field.
fn read_params(path: &Path) -> CliResult<ModelParams> {
    let bytes = read(path)?;
    let bad = |m: String| CliError::Input(format!("{}: {m}", path.display()));
    let mut value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| bad(e.to_string()))?;
    if let Some(inner) = value.get_mut("params") {
        value = inner.take();
    }
    let v: ParamValues = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
    let params = ModelParams {
        pi: v.pi,
        tau: v.tau,
        rho: v.rho,
        delta: v.delta,
        omega: OmegaModel::Saturated { omega: v.omega },
    };
    params.validate().map_err(|e| in_file(path, e))?;
    Ok(params)
}

#[derive(Serialize)]
struct BreslowDayDoc {
    tool_version: String,
    input_digest: String,
    strata: Vec<String>,
    common_odds_ratio: f64,
    statistic: f64,
    df: u32,
    p_value: f64,
}

#[derive(Serialize)]
struct LrtDoc {
    tool_version: String,
    input_digest: String,
    gag_sharing: GagSharing,
    statistic: f64,
    df: u32,
    p_value: f64,
    restricted_loglik: f64,
    full_loglik: f64,
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> CliResult<()> {
    let mut digest = InputDigest::default();
    match command {
        Command::Fit { data, fit } => {
            let config = fit_config(&fit);
            let table = read_table(&data, &mut digest, "data")?;
            let result = fit_em(&table, &config)?;
            let doc =
                ResultDocument::from_fit(&result, Some(&table), None, VERSION, &digest.finish());
            emit(fit.out.as_deref(), &emit_result_json(&doc)?, stdout)
        }
        Command::FitEb { data, prior, fit } => {
            let config = fit_config(&fit);
            let table = read_table(&data, &mut digest, "data")?;
            let spec = load_prior(
                prior.prior_data.as_deref(),
                prior.prior.as_deref(),
                &config,
                &mut digest,
            )?
            .expect("clap requires one prior source");
            let result = fit_emb(&table, &spec, &config)?;
            let doc = ResultDocument::from_fit(
                &result,
                Some(&table),
                Some(&spec),
                VERSION,
                &digest.finish(),
            );
            emit(fit.out.as_deref(), &emit_result_json(&doc)?, stdout)
        }
        Command::Prior { data, fit } => {
            let config = fit_config(&fit);
            let table = read_table(&data, &mut digest, "data")?;
            let mut spec = fit_prior(&table, &config)?;
            spec.provenance = provenance(&data);
            emit(fit.out.as_deref(), &emit_json(&spec)?, stdout)
        }
        Command::Jackknife {
            data,
            method,
            prior,
            fit,
        } => {
            let config = fit_config(&fit);
            let series = read_series(&data, &mut digest)?;
            let spec = load_prior(
                prior.prior_data.as_deref(),
                prior.prior.as_deref(),
                &config,
                &mut digest,
            )?;
            let fitter = match (method, spec.clone()) {
                (MethodArg::Em, None) => Fitter::Em,
                (MethodArg::Emb, Some(spec)) => Fitter::Emb(spec),
                (MethodArg::Em, Some(_)) => {
                    return Err(CliError::Usage("--method em does not take a prior".into()))
                }
                (MethodArg::Emb, None) => {
                    return Err(CliError::Usage(
                        "--method emb needs --prior-data or --prior".into(),
                    ))
                }
            };
            let pooled = series.pooled();
            let point = match &fitter {
                Fitter::Em => fit_em(pooled, &config)?,
                Fitter::Emb(spec) => fit_emb(pooled, spec, &config)?,
            };
            let jk = jackknife_variance(&series, &fitter, &config)?;
            let doc = ResultDocument::from_fit(
                &point,
                Some(pooled),
                spec.as_ref(),
                VERSION,
                &digest.finish(),
            )
            .with_jackknife(series.labels(), &jk);
            emit(fit.out.as_deref(), &emit_result_json(&doc)?, stdout)
        }
        Command::Simulate {
            params,
            n,
            seed,
            out,
        } => {
            let params = read_params(&params)?;
            let table = sample_observed(&SimConfig { params, n, seed })?;
            emit(
                out.as_deref(),
                write_observed_csv(&table).as_bytes(),
                stdout,
            )
        }
        Command::Diagnose { test } => diagnose(test, &mut digest, stdout),
        Command::Report { result, out } => {
            let bytes = read(&result)?;
            let doc = parse_result_json(&bytes).map_err(|e| in_file(&result, e))?;
            emit(out.as_deref(), format_rate_table(&doc).as_bytes(), stdout)
        }
    }
}

fn diagnose(test: Diagnose, digest: &mut InputDigest, stdout: &mut dyn Write) -> CliResult<()> {
    match test {
        Diagnose::BreslowDay { strata, out } => {
            let bytes = read(&strata)?;
            digest.add("strata", &bytes);
            let rows = parse_strata_csv(&bytes).map_err(|e| in_file(&strata, e))?;
            let tables: Vec<_> = rows.iter().map(|(_, s)| *s).collect();
            let ratio = mh_common_odds_ratio(&tables)?;
            let test = breslow_day(&tables)?;
            let doc = BreslowDayDoc {
                tool_version: VERSION.to_string(),
                input_digest: std::mem::take(digest).finish(),
                strata: rows.into_iter().map(|(label, _)| label).collect(),
                common_odds_ratio: ratio,
                statistic: test.statistic,
                df: test.df,
                p_value: test.p_value,
            };
            emit(out.as_deref(), &emit_json(&doc)?, stdout)
        }
        Diagnose::Lrt {
            data_a,
            data_b,
            gag,
            tol,
            max_iter,
            out,
        } => {
            let a = read_table(&data_a, digest, "data-a")?;
            let b = read_table(&data_b, digest, "data-b")?;
            let config = FitConfig {
                tolerance: tol,
                max_iterations: max_iter,
                ..FitConfig::default()
            };
            let sharing = match gag {
                GagArg::Shared => GagSharing::Shared,
                GagArg::PerPeriod => GagSharing::PerPeriod,
            };
            let outcome = lrt_crime_margins_with(&a, &b, &config, sharing)?;
            let doc = LrtDoc {
                tool_version: VERSION.to_string(),
                input_digest: std::mem::take(digest).finish(),
                gag_sharing: sharing,
                statistic: outcome.test.statistic,
                df: outcome.test.df,
                p_value: outcome.test.p_value,
                restricted_loglik: outcome.restricted.loglik,
                full_loglik: outcome.full.loglik,
            };
            emit(out.as_deref(), &emit_json(&doc)?, stdout)
        }
    }
}
