//! Pre-analysis checks: homogeneity of spouse-presence odds ratios across
//! periods (Breslow–Day) and a likelihood-ratio test for a change in crime
//! rates between periods.

use serde::{Deserialize, Serialize};

use crate::em::{
    convergence_metric, e_step, m_step, observed_loglik, FitConfig, GagParameter, PseudoCounts,
};
use crate::error::{Error, Result};
use crate::model::{ModelParams, ObservedTable, OmegaMode, OmegaModel};

/// A 2x2 table: rows are reported yes/no, columns spouse present/absent.
///
/// ```text
///          present  absent
/// yes         a        b
/// no          c        d
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stratum2x2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Stratum2x2 {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let s = Self { a, b, c, d };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let cells = [self.a, self.b, self.c, self.d];
        if cells.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::DegenerateStrata(format!(
                "cells must be finite and >= 0: {cells:?}"
            )));
        }
        if self.total() <= 0.0 {
            return Err(Error::DegenerateStrata(
                "stratum has no observations".into(),
            ));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.a + self.b + self.c + self.d
    }

    /// Swaps the two outcome columns.
    pub fn swap_columns(&self) -> Self {
        Self {
            a: self.b,
            b: self.a,
            c: self.d,
            d: self.c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
}

impl TestResult {
    pub fn new(statistic: f64, df: u32) -> Self {
        Self {
            statistic,
            df,
            p_value: chi2_upper_tail(statistic.max(0.0), df),
        }
    }
}

/// Mantel–Haenszel common odds ratio `Σ(a d / n) / Σ(b c / n)`.
pub fn mh_common_odds_ratio(strata: &[Stratum2x2]) -> Result<f64> {
    if strata.is_empty() {
        return Err(Error::DegenerateStrata("no strata".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for s in strata {
        s.validate()?;
        let n = s.total();
        num += s.a * s.d / n;
        den += s.b * s.c / n;
    }
    if den == 0.0 || num == 0.0 {
        return Err(Error::DegenerateStrata(
            "Mantel-Haenszel sums vanish; common odds ratio undefined".into(),
        ));
    }
    Ok(num / den)
}

/// Expected `a` cell of a stratum with its margins fixed and odds ratio `ratio`.
fn expected_a(s: &Stratum2x2, ratio: f64, stratum: usize) -> Result<f64> {
    let n = s.total();
    let r1 = s.a + s.b;
    let c1 = s.a + s.c;
    let lo = (r1 + c1 - n).max(0.0);
    let hi = r1.min(c1);
    // A (n - r1 - c1 + A) = R (r1 - A)(c1 - A)
    let qa = 1.0 - ratio;
    let qb = n - r1 - c1 + ratio * (r1 + c1);
    let qc = -ratio * r1 * c1;
    let slack = 1e-9 * n.max(1.0);
    let admissible = |x: f64| x.is_finite() && x >= lo - slack && x <= hi + slack;

    let roots: Vec<f64> = if qa.abs() < 1e-12 {
        vec![-qc / qb]
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return Err(Error::NoAdmissibleRoot { stratum });
        }
        let q = -0.5 * (qb + qb.signum() * disc.sqrt());
        vec![q / qa, qc / q]
    };
    roots
        .into_iter()
        .find(|x| admissible(*x))
        .map(|x| x.clamp(lo, hi))
        .ok_or(Error::NoAdmissibleRoot { stratum })
}

/// Breslow–Day test that all strata share one odds ratio (no Tarone
/// correction). Degrees of freedom: number of strata minus one.
pub fn breslow_day(strata: &[Stratum2x2]) -> Result<TestResult> {
    if strata.len() < 2 {
        return Err(Error::DegenerateStrata(format!(
            "need at least two strata, got {}",
            strata.len()
        )));
    }
    let ratio = mh_common_odds_ratio(strata)?;
    let mut statistic = 0.0;
    for (k, s) in strata.iter().enumerate() {
        let n = s.total();
        let r1 = s.a + s.b;
        let c1 = s.a + s.c;
        let e = expected_a(s, ratio, k)?;
        let cells = [e, r1 - e, c1 - e, n - r1 - c1 + e];
        if cells.iter().any(|v| *v <= 0.0) {
            return Err(Error::DegenerateStrata(format!(
                "stratum {k} has an empty fitted cell"
            )));
        }
        let variance = 1.0 / cells.iter().map(|v| 1.0 / v).sum::<f64>();
        statistic += (s.a - e).powi(2) / variance;
    }
    Ok(TestResult::new(statistic, (strata.len() - 1) as u32))
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos approximation).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;

/// Regularised upper incomplete gamma `Q(a, x)`: series below `a + 1`,
/// Lentz continued fraction above.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return 1.0;
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                break;
            }
        }
        (1.0 - sum * log_prefactor.exp()).clamp(0.0, 1.0)
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        (log_prefactor.exp() * h).clamp(0.0, 1.0)
    }
}

/// Upper-tail probability of a chi-square distribution with `df` degrees of freedom.
pub fn chi2_upper_tail(x: f64, df: u32) -> f64 {
    assert!(df >= 1, "chi-square needs at least one degree of freedom");
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(df as f64 / 2.0, x / 2.0)
}

/// How the gag parameters are treated across the two periods in the
/// crime-margin likelihood-ratio test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GagSharing {
    /// One rho, delta, tau for both periods, in both models.
    #[default]
    Shared,
    /// Separate gag parameters per period, in both models.
    PerPeriod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodFit {
    pub params: [ModelParams; 2],
    pub loglik: f64,
    pub iterations: usize,
}

/// Joint EM fit of two periods under the independence model. With
/// `share_crime` the crime margins are common to both periods; spouse margins
/// and pi always belong to each period.
pub fn fit_periods(
    tables: [&ObservedTable; 2],
    share_crime: bool,
    gag: GagSharing,
    config: &FitConfig,
) -> Result<PeriodFit> {
    config.validate()?;
    for t in tables {
        t.validate()?;
    }
    let mut params = tables.map(|t| config.init.initial_params(t, OmegaMode::Independence));
    if share_crime {
        let pooled = tables[0].zip_with(tables[1], |a, b| a + b);
        let start = config.init.initial_params(&pooled, OmegaMode::Independence);
        for p in params.iter_mut() {
            set_crime_margin(p, start.omega.crime_marginals());
        }
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        let mut next = params;
        let mut pseudo = [PseudoCounts::default(); 2];
        let mut crime_mass = [0.0; 5];
        let mut total_mass = 0.0;
        for k in 0..2 {
            let e = e_step(tables[k], &params[k]);
            let m = m_step(&e.complete, OmegaMode::Independence, &params[k])?;
            next[k] = m.params;
            pseudo[k] = m.pseudo_counts;
            for (slot, row) in crime_mass.iter_mut().zip(e.complete.crime_spouse_totals()) {
                *slot += row[0] + row[1];
            }
            total_mass += e.complete.total();
        }
        if share_crime {
            let shared = crime_mass.map(|m| m / total_mass);
            for p in next.iter_mut() {
                set_crime_margin(p, shared);
            }
        }
        if gag == GagSharing::Shared {
            for parameter in GagParameter::ALL {
                let (hit, miss) = pseudo
                    .iter()
                    .map(|pc| pc.pair(parameter))
                    .fold((0.0, 0.0), |acc, (h, m)| (acc.0 + h, acc.1 + m));
                let value = if hit + miss > 0.0 {
                    hit / (hit + miss)
                } else {
                    parameter.get(&params[0])
                };
                for p in next.iter_mut() {
                    parameter.set(p, value);
                }
            }
        }
        let metric: f64 = (0..2)
            .map(|k| convergence_metric(&params[k], &next[k]))
            .sum();
        params = next;
        if metric < config.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            params: Box::new(params[1]),
        });
    }
    let loglik = (0..2).map(|k| observed_loglik(tables[k], &params[k])).sum();
    Ok(PeriodFit {
        params,
        loglik,
        iterations,
    })
}

fn set_crime_margin(params: &mut ModelParams, crime: [f64; 5]) {
    let spouse = match params.omega {
        OmegaModel::Independence { spouse, .. } => spouse,
        OmegaModel::Saturated { omega } => {
            let present: f64 = omega.iter().map(|r| r[0]).sum();
            [present, 1.0 - present]
        }
    };
    params.omega = OmegaModel::Independence { crime, spouse };
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrtOutcome {
    pub test: TestResult,
    /// Common crime margins.
    pub restricted: PeriodFit,
    /// Crime margins free per period.
    pub full: PeriodFit,
}

/// Likelihood-ratio test of a common crime distribution across two periods.
/// G² = 2 (loglik free − loglik common), 4 degrees of freedom. Gag
/// parameters are shared across the periods.
pub fn lrt_crime_margins(
    period_a: &ObservedTable,
    period_b: &ObservedTable,
    config: &FitConfig,
) -> Result<TestResult> {
    Ok(lrt_crime_margins_with(period_a, period_b, config, GagSharing::Shared)?.test)
}

pub fn lrt_crime_margins_with(
    period_a: &ObservedTable,
    period_b: &ObservedTable,
    config: &FitConfig,
    gag: GagSharing,
) -> Result<LrtOutcome> {
    let restricted = fit_periods([period_a, period_b], true, gag, config)?;
    let full = fit_periods([period_a, period_b], false, gag, config)?;
    let g2 = 2.0 * (full.loglik - restricted.loglik);
    Ok(LrtOutcome {
        test: TestResult::new(g2, 4),
        restricted,
        full,
    })
}
