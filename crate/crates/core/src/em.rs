//! Maximum-likelihood fitting by EM, and the shared iteration loop that the
//! empirical-Bayes fitter plugs its B-step into.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::eb::{b_step, PriorSpec, ShrinkageRecord};
use crate::error::{Error, Result};
use crate::model::{
    complete_probabilities, observed_probabilities, CompleteCellId, CompleteTable, CrimeCategory,
    Mode, ModelParams, ObservedCellId, ObservedTable, OmegaMode, OmegaModel, ReportStatus,
    SpouseState,
};

/// Floor for the denominator of the relative-change convergence metric.
pub const RELATIVE_CHANGE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub omega_mode: OmegaMode,
    pub init: InitPolicy,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_iterations: 10_000,
            omega_mode: OmegaMode::Independence,
            init: InitPolicy::default(),
        }
    }
}

impl FitConfig {
    /// Tight tolerance so that six-decimal estimates are stable.
    pub fn precise() -> Self {
        Self {
            tolerance: 1e-10,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.init.gag_start) {
            return Err(Error::InvalidConfig(format!(
                "initial gag probability must be in [0, 1], got {}",
                self.init.gag_start
            )));
        }
        Ok(())
    }
}

/// Starting point for the iteration: every gag parameter at `gag_start`, the
/// crime-by-spouse distribution from the raw proportions (gagged mass ignored).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitPolicy {
    pub gag_start: f64,
}

impl Default for InitPolicy {
    fn default() -> Self {
        Self { gag_start: 0.5 }
    }
}

impl InitPolicy {
    pub fn initial_params(&self, observed: &ObservedTable, mode: OmegaMode) -> ModelParams {
        let total = observed.total();
        let crime = observed.crime_totals().map(|c| c / total);
        let personal = observed.personal_total();
        let spouse = if personal > 0.0 {
            let present: f64 = observed.personal.iter().map(|r| r[0]).sum();
            [present / personal, 1.0 - present / personal]
        } else {
            [0.5, 0.5]
        };
        let omega = match mode {
            OmegaMode::Independence => OmegaModel::Independence { crime, spouse },
            OmegaMode::Saturated => OmegaModel::Saturated {
                omega: crime.map(|c| [c * spouse[0], c * spouse[1]]),
            },
        };
        ModelParams {
            pi: observed.telephone_total() / total,
            tau: self.gag_start,
            rho: self.gag_start,
            delta: self.gag_start,
            omega,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GagParameter {
    Rho,
    Delta,
    Tau,
}

impl GagParameter {
    pub const ALL: [GagParameter; 3] = [GagParameter::Rho, GagParameter::Delta, GagParameter::Tau];

    pub fn get(self, params: &ModelParams) -> f64 {
        match self {
            GagParameter::Rho => params.rho,
            GagParameter::Delta => params.delta,
            GagParameter::Tau => params.tau,
        }
    }

    pub fn set(self, params: &mut ModelParams, value: f64) {
        match self {
            GagParameter::Rho => params.rho = value,
            GagParameter::Delta => params.delta = value,
            GagParameter::Tau => params.tau = value,
        }
    }
}

impl fmt::Display for GagParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GagParameter::Rho => "rho",
            GagParameter::Delta => "delta",
            GagParameter::Tau => "tau",
        })
    }
}

/// Expected complete-data sufficient statistics for the gag parameters.
///
/// `a1`/`a2` count rapes with a spouse present that were / were not kept
/// from being reported by the spouse, `b1`/`b2` the same for domestic
/// violence, and `c1`/`c2` phone-gaggable telephone crimes (not suppressed by
/// a spouse) that were / were not reported.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PseudoCounts {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl PseudoCounts {
    pub fn from_complete(complete: &CompleteTable) -> Self {
        let mut pc = PseudoCounts::default();
        for (cell, y) in complete.iter() {
            let present = cell.spouse() == SpouseState::Present;
            match (cell.crime(), cell.status()) {
                (CrimeCategory::Rape, ReportStatus::GaggedSpouse) => pc.a2 += y,
                (CrimeCategory::DomesticViolence, ReportStatus::GaggedSpouse) => pc.b2 += y,
                (CrimeCategory::Rape, _) if present => pc.a1 += y,
                (CrimeCategory::DomesticViolence, _) if present => pc.b1 += y,
                _ => {}
            }
            if cell.mode() == Mode::Telephone && cell.crime().phone_gaggable() {
                match cell.status() {
                    ReportStatus::Reported => pc.c1 += y,
                    ReportStatus::GaggedPhone => pc.c2 += y,
                    ReportStatus::GaggedSpouse => {}
                }
            }
        }
        pc
    }

    /// `(successes, failures)` for one gag parameter.
    pub fn pair(&self, parameter: GagParameter) -> (f64, f64) {
        match parameter {
            GagParameter::Rho => (self.a1, self.a2),
            GagParameter::Delta => (self.b1, self.b2),
            GagParameter::Tau => (self.c1, self.c2),
        }
    }
}

/// Result of one E-step: the expected complete table, plus the observed cells
/// whose constituents all had zero probability under the current parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EStep {
    pub complete: CompleteTable,
    pub zero_weight: Vec<ObservedCellId>,
}

/// Cell that receives an observed count when every constituent has zero
/// probability: the reported cell of the partition, spouse absent where the
/// partition has both spouse states.
fn fallback_cell(cell: ObservedCellId) -> CompleteCellId {
    let spouse = cell.spouse().unwrap_or(SpouseState::Absent);
    CompleteCellId::new(cell.mode(), cell.crime(), ReportStatus::Reported, spouse)
        .expect("reported cells are always valid")
}

/// Allocates each observed count over its complete-data cells in proportion
/// to their current probabilities.
pub fn e_step(observed: &ObservedTable, params: &ModelParams) -> EStep {
    let probs = complete_probabilities(params);
    let mut complete = CompleteTable::zeros();
    let mut zero_weight = Vec::new();
    for (cell, x) in observed.cells() {
        let weight: f64 = cell.constituents().map(|c| probs[c]).sum();
        if weight > 0.0 {
            for c in cell.constituents() {
                complete[c] = x * probs[c] / weight;
            }
        } else {
            complete[fallback_cell(cell)] = x;
            if x > 0.0 {
                zero_weight.push(cell);
            }
        }
    }
    EStep {
        complete,
        zero_weight,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MStep {
    pub params: ModelParams,
    pub pseudo_counts: PseudoCounts,
    /// Gag parameters whose pseudo-sample was empty; they keep their
    /// previous value.
    pub unidentified: Vec<GagParameter>,
}

/// Closed-form complete-data maximum-likelihood estimates.
pub fn m_step(
    complete: &CompleteTable,
    omega_mode: OmegaMode,
    previous: &ModelParams,
) -> Result<MStep> {
    let total = complete.total();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::EmptyTable);
    }
    let joint = complete.crime_spouse_totals();
    let omega = match omega_mode {
        OmegaMode::Independence => OmegaModel::Independence {
            crime: joint.map(|row| (row[0] + row[1]) / total),
            spouse: std::array::from_fn(|s| joint.iter().map(|row| row[s]).sum::<f64>() / total),
        },
        OmegaMode::Saturated => OmegaModel::Saturated {
            omega: joint.map(|row| row.map(|y| y / total)),
        },
    };
    let pseudo_counts = PseudoCounts::from_complete(complete);
    let mut params = ModelParams {
        pi: complete.mode_total(Mode::Telephone) / total,
        omega,
        ..*previous
    };
    let mut unidentified = Vec::new();
    for parameter in GagParameter::ALL {
        let (hit, miss) = pseudo_counts.pair(parameter);
        if hit + miss > 0.0 {
            parameter.set(&mut params, hit / (hit + miss));
        } else {
            unidentified.push(parameter);
        }
    }
    Ok(MStep {
        params,
        pseudo_counts,
        unidentified,
    })
}

/// Multinomial log-likelihood of the observed table, constants dropped.
///
/// Cells with zero count contribute nothing; a positive count on a
/// zero-probability cell gives negative infinity.
pub fn observed_loglik(observed: &ObservedTable, params: &ModelParams) -> f64 {
    let probs = observed_probabilities(params);
    observed
        .cells()
        .filter(|(_, x)| *x > 0.0)
        .map(|(id, x)| {
            let p = probs.get(id);
            if p > 0.0 {
                x * p.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .sum()
}

/// The probabilities monitored for convergence: pi, tau, rho, delta and the
/// ten crime-by-spouse entries.
pub fn monitored_values(params: &ModelParams) -> [f64; 14] {
    let w = params.omega.matrix();
    let mut out = [0.0; 14];
    out[0] = params.pi;
    out[1] = params.tau;
    out[2] = params.rho;
    out[3] = params.delta;
    for (i, v) in w.iter().flatten().enumerate() {
        out[4 + i] = *v;
    }
    out
}

/// Sum of relative changes of all monitored probabilities.
pub fn convergence_metric(old: &ModelParams, new: &ModelParams) -> f64 {
    monitored_values(old)
        .iter()
        .zip(monitored_values(new))
        .map(|(o, n)| (n - o).abs() / o.max(RELATIVE_CHANGE_FLOOR))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Em,
    Emb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: FitMethod,
    pub params: ModelParams,
    pub iterations: usize,
    pub converged: bool,
    pub loglik: f64,
    /// Pseudo-counts from the final E-step.
    pub pseudo_counts: PseudoCounts,
    pub unidentified: Vec<GagParameter>,
    /// Present for empirical-Bayes fits.
    pub shrinkage: Option<[ShrinkageRecord; 3]>,
    /// Observed log-likelihood of the starting point and after each iteration.
    pub loglik_trace: Vec<f64>,
    /// Observed cells that hit the zero-weight fallback in the final E-step.
    pub zero_weight: Vec<ObservedCellId>,
}

/// Runs E/M (and, with a prior, B) steps until the convergence metric drops
/// below the tolerance or the iteration budget runs out. Non-convergence is
/// reported through `converged`, not as an error.
pub fn run_fit(
    observed: &ObservedTable,
    prior: Option<&PriorSpec>,
    config: &FitConfig,
) -> Result<FitResult> {
    observed.validate()?;
    config.validate()?;
    if let Some(prior) = prior {
        prior.validate()?;
    }

    let mut params = config.init.initial_params(observed, config.omega_mode);
    let mut loglik_trace = vec![observed_loglik(observed, &params)];
    let mut last = None;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let e = e_step(observed, &params);
        let m = m_step(&e.complete, config.omega_mode, &params)?;
        let mut next = m.params;
        let mut unidentified = m.unidentified;
        let mut shrinkage = None;
        if let Some(prior) = prior {
            let b = b_step(&m.pseudo_counts, prior);
            next.rho = b.rho;
            next.delta = b.delta;
            next.tau = b.tau;
            unidentified = b.flagged;
            shrinkage = Some(b.records);
        }
        let metric = convergence_metric(&params, &next);
        params = next;
        loglik_trace.push(observed_loglik(observed, &params));
        last = Some((m.pseudo_counts, unidentified, shrinkage, e.zero_weight));
        if metric < config.tolerance {
            converged = true;
            break;
        }
    }

    let (pseudo_counts, unidentified, shrinkage, zero_weight) =
        last.expect("at least one iteration runs");
    Ok(FitResult {
        method: if prior.is_some() {
            FitMethod::Emb
        } else {
            FitMethod::Em
        },
        params,
        iterations,
        converged,
        loglik: *loglik_trace.last().expect("trace is never empty"),
        pseudo_counts,
        unidentified,
        shrinkage,
        loglik_trace,
        zero_weight,
    })
}

pub(crate) fn require_converged(result: FitResult) -> Result<FitResult> {
    if result.converged {
        Ok(result)
    } else {
        Err(Error::NotConverged {
            iterations: result.iterations,
            params: Box::new(result.params),
        })
    }
}

/// Maximum-likelihood fit by EM.
pub fn fit_em(observed: &ObservedTable, config: &FitConfig) -> Result<FitResult> {
    require_converged(run_fit(observed, None, config)?)
}
