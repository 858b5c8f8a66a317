//! Delete-one jackknife over sampling units (for example, survey quarters).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eb::PriorSpec;
use crate::em::{run_fit, FitConfig};
use crate::error::{Error, Result};
use crate::model::{ModelParams, ObservedTable};

/// Per-unit observed tables and their elementwise sum.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingUnitSeries {
    labels: Vec<String>,
    units: Vec<ObservedTable>,
    pooled: ObservedTable,
}

impl SamplingUnitSeries {
    pub fn new(units: Vec<ObservedTable>) -> Result<Self> {
        let labels = (1..=units.len()).map(|i| i.to_string()).collect();
        Self::with_labels(labels, units)
    }

    pub fn with_labels(labels: Vec<String>, units: Vec<ObservedTable>) -> Result<Self> {
        assert_eq!(labels.len(), units.len(), "one label per unit");
        if units.len() < 2 {
            return Err(Error::TooFewUnits(units.len()));
        }
        for (unit, table) in units.iter().enumerate() {
            // Individual units may legitimately be sparse but not malformed.
            if let Err(e) = table.validate() {
                return Err(Error::InvalidUnit {
                    unit,
                    source: Box::new(e),
                });
            }
        }
        let pooled = units.iter().fold(ObservedTable::zeros(), |acc, t| {
            acc.zip_with(t, |a, b| a + b)
        });
        pooled.validate()?;
        Ok(Self {
            labels,
            units,
            pooled,
        })
    }

    pub fn units(&self) -> &[ObservedTable] {
        &self.units
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn pooled(&self) -> &ObservedTable {
        &self.pooled
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Pooled table with unit `index` removed.
pub fn leave_one_out_tables(series: &SamplingUnitSeries, index: usize) -> Result<ObservedTable> {
    let unit = series.units.get(index).ok_or(Error::IndexOutOfRange {
        index,
        len: series.len(),
    })?;
    // Subtraction can leave -0.0 or tiny negative rounding residue.
    Ok(series.pooled.zip_with(unit, |p, u| (p - u).max(0.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fitter {
    Em,
    /// The same prior is used for every replicate.
    Emb(PriorSpec),
}

impl Fitter {
    fn prior(&self) -> Option<&PriorSpec> {
        match self {
            Fitter::Em => None,
            Fitter::Emb(prior) => Some(prior),
        }
    }
}

/// Scalar estimates tracked by the jackknife, laid out like the model
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamValues {
    pub pi: f64,
    pub tau: f64,
    pub rho: f64,
    pub delta: f64,
    /// Indexed `[crime][spouse]`.
    pub omega: [[f64; 2]; 5],
}

impl From<&ModelParams> for ParamValues {
    fn from(p: &ModelParams) -> Self {
        Self {
            pi: p.pi,
            tau: p.tau,
            rho: p.rho,
            delta: p.delta,
            omega: p.omega.matrix(),
        }
    }
}

impl ParamValues {
    fn to_vec(self) -> Vec<f64> {
        let mut v = vec![self.pi, self.tau, self.rho, self.delta];
        v.extend(self.omega.iter().flatten());
        v
    }

    fn from_slice(v: &[f64]) -> Self {
        let mut omega = [[0.0; 2]; 5];
        for (i, row) in omega.iter_mut().enumerate() {
            *row = [v[4 + 2 * i], v[5 + 2 * i]];
        }
        Self {
            pi: v[0],
            tau: v[1],
            rho: v[2],
            delta: v[3],
            omega,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JackknifeResult {
    /// Estimates from the pooled fit.
    pub point: ParamValues,
    /// One fit per deleted unit, in unit order.
    pub replicates: Vec<ParamValues>,
    pub variance: ParamValues,
    pub point_iterations: usize,
    pub replicate_iterations: Vec<usize>,
}

/// `((S-1)/S) Σ (m_i - m)²`, centred on the full-sample estimate `m`.
pub fn jackknife_variance_of(point: f64, replicates: &[f64]) -> f64 {
    let s = replicates.len() as f64;
    (s - 1.0) / s * replicates.iter().map(|m| (m - point).powi(2)).sum::<f64>()
}

/// Delete-one jackknife variance of every model parameter. Replicates run in
/// parallel; any replicate that fails to converge aborts the run.
pub fn jackknife_variance(
    series: &SamplingUnitSeries,
    fitter: &Fitter,
    config: &FitConfig,
) -> Result<JackknifeResult> {
    let prior = fitter.prior();
    let full = run_fit(series.pooled(), prior, config)?;
    if !full.converged {
        return Err(Error::NotConverged {
            iterations: full.iterations,
            params: Box::new(full.params),
        });
    }

    let fits: Vec<_> = (0..series.len())
        .into_par_iter()
        .map(|i| {
            let table = leave_one_out_tables(series, i)?;
            let fit = run_fit(&table, prior, config)?;
            if fit.converged {
                Ok((ParamValues::from(&fit.params), fit.iterations))
            } else {
                Err(Error::ReplicateNotConverged {
                    replicate: i,
                    iterations: fit.iterations,
                })
            }
        })
        .collect::<Result<_>>()?;

    let point = ParamValues::from(&full.params);
    let point_vec = point.to_vec();
    let replicate_vecs: Vec<Vec<f64>> = fits.iter().map(|(p, _)| p.to_vec()).collect();
    let variance: Vec<f64> = point_vec
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let column: Vec<f64> = replicate_vecs.iter().map(|r| r[j]).collect();
            jackknife_variance_of(*m, &column)
        })
        .collect();

    Ok(JackknifeResult {
        point,
        replicates: fits.iter().map(|(p, _)| *p).collect(),
        variance: ParamValues::from_slice(&variance),
        point_iterations: full.iterations,
        replicate_iterations: fits.iter().map(|(_, it)| *it).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn two_replicate_variance() {
        // (1/2)((4-5)^2 + (6-5)^2)
        assert_eq!(jackknife_variance_of(5.0, &[4.0, 6.0]), 1.0);
        let s28: Vec<f64> = (0..28).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        assert_eq!(jackknife_variance_of(0.0, &s28), 27.0 / 28.0);
    }

    #[test]
    fn leave_one_out_identities() {
        let t = fixtures::late();
        let half = t.map(|v| v / 2.0);
        let s = SamplingUnitSeries::new(vec![half, half]).unwrap();
        assert_eq!(leave_one_out_tables(&s, 0).unwrap(), half);
        assert!(matches!(
            leave_one_out_tables(&s, 2),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));

        let units = vec![t.map(|v| v * 0.2), t.map(|v| v * 0.3), t.map(|v| v * 0.5)];
        let s = SamplingUnitSeries::new(units.clone()).unwrap();
        let total: f64 = (0..3)
            .map(|i| leave_one_out_tables(&s, i).unwrap().total())
            .sum();
        assert!((total - 2.0 * s.pooled().total()).abs() < 1e-6);
        let back = leave_one_out_tables(&s, 1)
            .unwrap()
            .zip_with(&units[1], |a, b| a + b);
        for ((_, a), (_, b)) in back.cells().zip(s.pooled().cells()) {
            assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
    }

    #[test]
    fn too_few_units() {
        assert!(matches!(
            SamplingUnitSeries::new(vec![fixtures::late()]),
            Err(Error::TooFewUnits(1))
        ));
    }
}
