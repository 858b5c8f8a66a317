//! Gag-factor response-bias models for collapsed survey contingency tables.
//!
//! Survey respondents may withhold a victimization when the interview is by
//! telephone or when a spouse is present. This crate models the latent
//! 30-cell table of true crime status and reason for non-report, fits it to
//! the 15 observed cells by EM, optionally shrinks the gag parameters toward
//! estimates from an earlier period with empirical Bayes (EMB), and provides
//! jackknife variances plus homogeneity diagnostics.
//!
//! ```
//! use gagfit::{fit_em, fixtures, FitConfig};
//!
//! let fit = fit_em(&fixtures::early(), &FitConfig::precise()).unwrap();
//! assert!((fit.params.tau - 0.53).abs() < 0.005);
//! ```

pub mod diagnostics;
pub mod eb;
pub mod em;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod jackknife;
pub mod model;
pub mod simulate;

pub use diagnostics::{
    breslow_day, chi2_upper_tail, lrt_crime_margins, lrt_crime_margins_with, mh_common_odds_ratio,
    GagSharing, LrtOutcome, Stratum2x2, TestResult,
};
pub use eb::{b_step, fit_emb, fit_prior, khat, shrink, Concentration, PriorSpec, ShrinkageRecord};
pub use em::{
    e_step, fit_em, m_step, observed_loglik, run_fit, FitConfig, FitMethod, FitResult,
    GagParameter, InitPolicy, PseudoCounts,
};
pub use error::{Error, Result};
pub use io::{
    emit_result_json, parse_observed_csv, parse_result_json, ParsedObserved, ResultDocument,
};
pub use jackknife::{
    jackknife_variance, leave_one_out_tables, Fitter, JackknifeResult, SamplingUnitSeries,
};
pub use model::{
    cell_probability, collapse, complete_probabilities, crime_rates, observed_probabilities,
    validate_observed, CompleteCellId, CompleteTable, CrimeCategory, Mode, ModelParams,
    ObservedCellId, ObservedTable, OmegaMode, OmegaModel, RateBasis, RateReport, ReportStatus,
    SpouseState,
};
pub use simulate::{sample_complete, sample_observed, SimConfig};
