//! Empirical-Bayes shrinkage of the gag parameters toward a prior period.
//!
//! Each gag parameter is the success probability of a two-category
//! multinomial whose expected counts come from the current E-step. A
//! Dirichlet prior with mean `Λ` (taken from an EM fit to earlier data) and
//! concentration `k` gives the posterior mean
//!
//! ```text
//! P* = n/(n+k) · X/n + k/(n+k) · Λ
//! ```
//!
//! and `k` is chosen to minimise the estimated squared-error risk:
//!
//! ```text
//! k̂ = (n² − Σ x_i²) / Σ (x_i − n λ_i)²
//! ```

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::em::{
    fit_em, require_converged, run_fit, FitConfig, FitResult, GagParameter, PseudoCounts,
};
use crate::error::{Error, Result};
use crate::model::ObservedTable;

/// Prior means for the gag parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub lambda_tau: f64,
    pub lambda_rho: f64,
    pub lambda_delta: f64,
    #[serde(default)]
    pub provenance: String,
}

impl PriorSpec {
    pub fn lambda(&self, parameter: GagParameter) -> f64 {
        match parameter {
            GagParameter::Rho => self.lambda_rho,
            GagParameter::Delta => self.lambda_delta,
            GagParameter::Tau => self.lambda_tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in GagParameter::ALL {
            let v = self.lambda(p);
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParams(format!(
                    "prior mean for {p} = {v} is not in [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let prior: PriorSpec = serde_json::from_slice(bytes)?;
        prior.validate()?;
        Ok(prior)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Dirichlet concentration `k̂`. Infinite when the sample proportions equal
/// the prior mean exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Concentration {
    Finite(f64),
    Infinite,
}

impl Concentration {
    /// Weight `k/(n+k)` placed on the prior mean.
    pub fn prior_weight(self, n: f64) -> f64 {
        match self {
            Concentration::Infinite => 1.0,
            Concentration::Finite(k) if n + k > 0.0 => k / (n + k),
            // n = k = 0: nothing to shrink, the caller keeps the prior mean
            Concentration::Finite(_) => 1.0,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Concentration::Finite(k) => k,
            Concentration::Infinite => f64::INFINITY,
        }
    }
}

impl Serialize for Concentration {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Concentration::Finite(k) => serializer.serialize_f64(*k),
            Concentration::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Concentration {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(k) => Ok(Concentration::Finite(k)),
            Raw::Text(s) if s == "inf" => Ok(Concentration::Infinite),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageRecord {
    pub parameter: GagParameter,
    /// Pseudo-sample size.
    pub n: f64,
    pub k_hat: Concentration,
    /// `k̂/(n+k̂)`, the share of the estimate taken from the prior.
    pub weight: f64,
}

fn check_sample(x: &[f64], lambda: &[f64]) -> Result<f64> {
    if x.len() != lambda.len() {
        return Err(Error::LengthMismatch {
            counts: x.len(),
            prior: lambda.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParams(format!(
            "counts must be finite and >= 0: {x:?}"
        )));
    }
    let n: f64 = x.iter().sum();
    if n <= 0.0 {
        return Err(Error::EmptySample);
    }
    Ok(n)
}

/// Risk-minimising Dirichlet concentration for counts `x` and prior mean `lambda`.
pub fn khat(x: &[f64], lambda: &[f64]) -> Result<Concentration> {
    let n = check_sample(x, lambda)?;
    let sum_sq: f64 = x.iter().map(|v| v * v).sum();
    let numerator = (n * n - sum_sq).max(0.0);
    let denominator: f64 = x
        .iter()
        .zip(lambda)
        .map(|(xi, li)| (xi - n * li).powi(2))
        .sum();
    if denominator == 0.0 {
        Ok(Concentration::Infinite)
    } else {
        Ok(Concentration::Finite(numerator / denominator))
    }
}

/// Posterior mean of the cell probabilities for concentration `k`.
pub fn shrink(x: &[f64], lambda: &[f64], k: Concentration) -> Result<Vec<f64>> {
    let n = check_sample(x, lambda)?;
    if let Concentration::Finite(k) = k {
        if k.is_nan() || k < 0.0 {
            return Err(Error::InvalidParams(format!(
                "concentration must be >= 0, got {k}"
            )));
        }
    }
    let w = k.prior_weight(n);
    Ok(x.iter()
        .zip(lambda)
        .map(|(xi, li)| (1.0 - w) * (xi / n) + w * li)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BStep {
    pub rho: f64,
    pub delta: f64,
    pub tau: f64,
    /// In `rho, delta, tau` order.
    pub records: [ShrinkageRecord; 3],
    /// Parameters with an empty pseudo-sample, set to their prior mean.
    pub flagged: Vec<GagParameter>,
}

/// Replaces the gag-parameter MLEs with their empirical-Bayes estimates.
pub fn b_step(pseudo_counts: &PseudoCounts, prior: &PriorSpec) -> BStep {
    let mut flagged = Vec::new();
    let mut estimates = [0.0; 3];
    let records = GagParameter::ALL.map(|parameter| {
        let (hit, miss) = pseudo_counts.pair(parameter);
        let lambda = prior.lambda(parameter);
        let x = [hit, miss];
        let n = hit + miss;
        match khat(&x, &[lambda, 1.0 - lambda]) {
            Ok(k) => {
                let p = shrink(&x, &[lambda, 1.0 - lambda], k).expect("sample already checked");
                estimates[parameter as usize] = p[0];
                ShrinkageRecord {
                    parameter,
                    n,
                    k_hat: k,
                    weight: k.prior_weight(n),
                }
            }
            Err(_) => {
                flagged.push(parameter);
                estimates[parameter as usize] = lambda;
                ShrinkageRecord {
                    parameter,
                    n: 0.0,
                    k_hat: Concentration::Infinite,
                    weight: 1.0,
                }
            }
        }
    });
    BStep {
        rho: estimates[GagParameter::Rho as usize],
        delta: estimates[GagParameter::Delta as usize],
        tau: estimates[GagParameter::Tau as usize],
        records,
        flagged,
    }
}

/// Builds prior means from an EM fit to an earlier period.
pub fn fit_prior(prior_observed: &ObservedTable, config: &FitConfig) -> Result<PriorSpec> {
    let fit = fit_em(prior_observed, config)?;
    Ok(prior_from_fit(&fit, "EM fit to prior-period table"))
}

pub fn prior_from_fit(fit: &FitResult, provenance: impl Into<String>) -> PriorSpec {
    PriorSpec {
        lambda_tau: fit.params.tau,
        lambda_rho: fit.params.rho,
        lambda_delta: fit.params.delta,
        provenance: provenance.into(),
    }
}

/// EM with a B-step: after each M-step, rho, delta and tau are shrunk toward
/// the prior means. pi and the crime-by-spouse distribution stay at their MLEs.
pub fn fit_emb(
    observed: &ObservedTable,
    prior: &PriorSpec,
    config: &FitConfig,
) -> Result<FitResult> {
    require_converged(run_fit(observed, Some(prior), config)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn khat_two_cell_example() {
        // (16 - 10) / (1 + 1)
        assert_eq!(
            khat(&[3.0, 1.0], &[0.5, 0.5]).unwrap(),
            Concentration::Finite(3.0)
        );
        assert_eq!(
            khat(&[2.0, 6.0], &[0.25, 0.75]).unwrap(),
            Concentration::Infinite
        );
        assert!(matches!(
            khat(&[0.0, 0.0], &[0.5, 0.5]),
            Err(Error::EmptySample)
        ));
        assert!(matches!(
            khat(&[1.0, 0.0, 2.0], &[0.5, 0.5]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn shrink_examples() {
        let x = [3.0, 1.0];
        let l = [0.5, 0.5];
        let mle = shrink(&x, &l, Concentration::Finite(0.0)).unwrap();
        assert_eq!(mle, vec![0.75, 0.25]);
        let p = shrink(&x, &l, Concentration::Finite(3.0)).unwrap();
        assert_relative_eq!(p[0], 4.5 / 7.0, epsilon = 1e-12);
        assert_relative_eq!(p[1], 2.5 / 7.0, epsilon = 1e-12);
        assert_eq!(
            shrink(&x, &l, Concentration::Infinite).unwrap(),
            vec![0.5, 0.5]
        );
        assert!(shrink(&x, &l, Concentration::Finite(-1.0)).is_err());
    }

    #[test]
    fn b_step_fallback_and_idempotence() {
        let prior = PriorSpec {
            lambda_tau: 0.5,
            lambda_rho: 0.2,
            lambda_delta: 0.1,
            provenance: String::new(),
        };
        let pc = PseudoCounts {
            a1: 0.0,
            a2: 0.0,
            b1: 1.0,
            b2: 9.0,
            c1: 30.0,
            c2: 10.0,
        };
        let b = b_step(&pc, &prior);
        assert_eq!(b.rho, 0.2);
        assert_eq!(b.flagged, vec![GagParameter::Rho]);
        assert_eq!(b.records[0].weight, 1.0);
        // MLE equals the prior mean: no movement
        assert_relative_eq!(b.delta, 0.1, epsilon = 1e-15);
        assert_eq!(b.records[1].k_hat, Concentration::Infinite);
        assert!(b.tau > 0.5 && b.tau < 0.75);
    }

    #[test]
    fn concentration_json() {
        let r = ShrinkageRecord {
            parameter: GagParameter::Tau,
            n: 4.0,
            k_hat: Concentration::Infinite,
            weight: 1.0,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"inf\""));
        let back: ShrinkageRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn prior_json_schema() {
        let p = PriorSpec::from_json(
            br#"{"lambda_tau":0.53,"lambda_rho":0.14,"lambda_delta":0.07,"provenance":"x"}"#,
        )
        .unwrap();
        assert_eq!(p.lambda_rho, 0.14);
        assert!(
            PriorSpec::from_json(br#"{"lambda_tau":1.2,"lambda_rho":0.1,"lambda_delta":0.1}"#)
                .is_err()
        );
        let again = PriorSpec::from_json(p.to_json().unwrap().as_bytes()).unwrap();
        assert_eq!(again, p);
    }

    proptest! {
        #[test]
        fn khat_is_non_negative(x in prop::collection::vec(0.0f64..1e4, 2..6), raw in prop::collection::vec(0.01f64..1.0, 6)) {
            prop_assume!(x.iter().sum::<f64>() > 0.0);
            let t = x.len();
            let s: f64 = raw[..t].iter().sum();
            let lambda: Vec<f64> = raw[..t].iter().map(|v| v / s).collect();
            let k = khat(&x, &lambda).unwrap();
            prop_assert!(k.as_f64() >= 0.0);
        }

        #[test]
        fn shrink_is_convex_and_on_simplex(
            x in prop::collection::vec(0.0f64..1e4, 2..6),
            raw in prop::collection::vec(0.01f64..1.0, 6),
            k in prop::option::of(0.0f64..1e5),
        ) {
            prop_assume!(x.iter().sum::<f64>() > 0.0);
            let t = x.len();
            let s: f64 = raw[..t].iter().sum();
            let lambda: Vec<f64> = raw[..t].iter().map(|v| v / s).collect();
            let k = k.map_or(Concentration::Infinite, Concentration::Finite);
            let n: f64 = x.iter().sum();
            let p = shrink(&x, &lambda, k).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for ((pi, xi), li) in p.iter().zip(&x).zip(&lambda) {
                let lo = (xi / n).min(*li) - 1e-12;
                let hi = (xi / n).max(*li) + 1e-12;
                prop_assert!(*pi >= lo && *pi <= hi);
            }
        }

        #[test]
        fn prior_weight_shrinks_with_sample_size(k in 0.1f64..1e4, n in 1.0f64..1e5, grow in 1.01f64..100.0) {
            let c = Concentration::Finite(k);
            prop_assert!(c.prior_weight(n * grow) < c.prior_weight(n));
        }
    }
}
