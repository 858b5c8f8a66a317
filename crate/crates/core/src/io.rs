//! CSV ingestion of observed tables and strata, and the JSON result document.
//!
//! Observed-table CSV:
//!
//! ```text
//! mode,crime,spouse,count[,unit]
//! personal,rape,present,9
//! telephone,no_crime,na,409726
//! ```
//!
//! Every (mode, crime, spouse) combination must appear exactly once per unit.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagnostics::Stratum2x2;
use crate::eb::{PriorSpec, ShrinkageRecord};
use crate::em::{FitMethod, FitResult, GagParameter, PseudoCounts};
use crate::error::{Error, Result, UnitLabel};
use crate::jackknife::{JackknifeResult, ParamValues, SamplingUnitSeries};
use crate::model::{
    crime_rates, observed_rates, CrimeCategory, ObservedCellId, ObservedTable, OmegaMode,
    RateReport, SpouseState,
};

/// Contents of an observed-table CSV.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedObserved {
    Single(ObservedTable),
    /// One table per distinct `unit` value, in order of first appearance.
    Units(Vec<(String, ObservedTable)>),
}

impl ParsedObserved {
    /// The single table, or the elementwise sum of all units.
    pub fn pooled(&self) -> ObservedTable {
        match self {
            ParsedObserved::Single(t) => *t,
            ParsedObserved::Units(units) => {
                units.iter().fold(ObservedTable::zeros(), |acc, (_, t)| {
                    acc.zip_with(t, |a, b| a + b)
                })
            }
        }
    }

    pub fn into_series(self) -> Result<SamplingUnitSeries> {
        match self {
            ParsedObserved::Single(_) => Err(Error::TooFewUnits(1)),
            ParsedObserved::Units(units) => {
                let (labels, tables) = units.into_iter().unzip();
                SamplingUnitSeries::with_labels(labels, tables)
            }
        }
    }
}

struct Columns {
    mode: usize,
    crime: usize,
    spouse: usize,
    count: usize,
    unit: Option<usize>,
}

fn observed_columns(headers: &csv::StringRecord) -> Result<Columns> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let required = |name: &str| {
        find(name).ok_or_else(|| Error::BadHeader {
            line: 1,
            message: format!("expected mode,crime,spouse,count[,unit]; missing `{name}`"),
        })
    };
    let cols = Columns {
        mode: required("mode")?,
        crime: required("crime")?,
        spouse: required("spouse")?,
        count: required("count")?,
        unit: find("unit"),
    };
    let expected = 4 + usize::from(cols.unit.is_some());
    if headers.len() != expected {
        return Err(Error::BadHeader {
            line: 1,
            message: format!(
                "unexpected columns in header {:?}",
                headers.iter().collect::<Vec<_>>()
            ),
        });
    }
    Ok(cols)
}

fn parse_cell(line: u64, mode: &str, crime: &str, spouse: &str) -> Result<ObservedCellId> {
    let crime_id = CrimeCategory::from_label(crime).ok_or_else(|| Error::BadEnum {
        line,
        field: "crime",
        value: crime.to_string(),
    })?;
    let bad_spouse = || Error::BadEnum {
        line,
        field: "spouse",
        value: spouse.to_string(),
    };
    match mode {
        "personal" => {
            let s = match spouse {
                "present" => SpouseState::Present,
                "absent" => SpouseState::Absent,
                _ => return Err(bad_spouse()),
            };
            Ok(ObservedCellId::Personal(crime_id, s))
        }
        "telephone" => {
            if spouse != "na" {
                return Err(bad_spouse());
            }
            Ok(ObservedCellId::Telephone(crime_id))
        }
        _ => Err(Error::BadEnum {
            line,
            field: "mode",
            value: mode.to_string(),
        }),
    }
}

fn parse_count(line: u64, raw: &str) -> Result<f64> {
    let value: f64 = raw.parse().map_err(|_| Error::BadNumber {
        line,
        value: raw.to_string(),
    })?;
    if !value.is_finite() {
        return Err(Error::BadNumber {
            line,
            value: raw.to_string(),
        });
    }
    Ok(value)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Parses an observed-table CSV. With a `unit` column, returns one table per unit.
pub fn parse_observed_csv(bytes: &[u8]) -> Result<ParsedObserved> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let cols = observed_columns(reader.headers()?)?;

    let mut order: Vec<String> = Vec::new();
    let mut tables: HashMap<String, ObservedTable> = HashMap::new();
    let mut seen: HashMap<(String, ObservedCellId), u64> = HashMap::new();

    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        let cell = parse_cell(
            line,
            &record[cols.mode],
            &record[cols.crime],
            &record[cols.spouse],
        )?;
        let count = parse_count(line, &record[cols.count])?;
        if count < 0.0 {
            return Err(Error::InvalidRow {
                line,
                source: Box::new(Error::NegativeCell { cell, value: count }),
            });
        }
        let unit = cols
            .unit
            .map_or_else(String::new, |i| record[i].to_string());
        if let Some(first_line) = seen.insert((unit.clone(), cell), line) {
            return Err(Error::DuplicateCell {
                first_line,
                second_line: line,
            });
        }
        let table = tables.entry(unit.clone()).or_insert_with(|| {
            order.push(unit.clone());
            ObservedTable::zeros()
        });
        *table.get_mut(cell) = count;
    }

    if order.is_empty() {
        // header only: report the first expected cell as missing
        order.push(String::new());
    }
    for unit in &order {
        for cell in ObservedCellId::all() {
            if !seen.contains_key(&(unit.clone(), cell)) {
                return Err(Error::MissingCell {
                    mode: cell.mode().label().to_string(),
                    crime: cell.crime().label().to_string(),
                    spouse: cell.spouse().map_or("na", |s| s.label()).to_string(),
                    unit: UnitLabel(cols.unit.map(|_| unit.clone())),
                });
            }
        }
    }

    if cols.unit.is_none() {
        let table = tables.remove("").expect("single table present");
        table.validate()?;
        Ok(ParsedObserved::Single(table))
    } else {
        let units = order
            .into_iter()
            .map(|u| {
                let t = tables.remove(&u).expect("unit present");
                (u, t)
            })
            .collect();
        Ok(ParsedObserved::Units(units))
    }
}

/// Serializes a table in the ingestion schema (no unit column).
pub fn write_observed_csv(table: &ObservedTable) -> String {
    let mut out = String::from("mode,crime,spouse,count\n");
    for (cell, count) in table.cells() {
        let spouse = cell.spouse().map_or("na", |s| s.label());
        writeln!(out, "{},{},{},{}", cell.mode(), cell.crime(), spouse, count)
            .expect("writing to a String cannot fail");
    }
    out
}

/// Serializes sampling units with a `unit` column.
pub fn write_units_csv(units: &[(String, ObservedTable)]) -> String {
    let mut out = String::from("mode,crime,spouse,count,unit\n");
    for (label, table) in units {
        for (cell, count) in table.cells() {
            let spouse = cell.spouse().map_or("na", |s| s.label());
            writeln!(
                out,
                "{},{},{},{},{}",
                cell.mode(),
                cell.crime(),
                spouse,
                count,
                label
            )
            .expect("writing to a String cannot fail");
        }
    }
    out
}

/// Parses a strata CSV with header `stratum,a,b,c,d`.
pub fn parse_strata_csv(bytes: &[u8]) -> Result<Vec<(String, Stratum2x2)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers != ["stratum", "a", "b", "c", "d"] {
        return Err(Error::BadHeader {
            line: 1,
            message: format!("expected stratum,a,b,c,d, got {}", headers.join(",")),
        });
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        let v: Vec<f64> = (1..5)
            .map(|i| parse_count(line, &record[i]))
            .collect::<Result<_>>()?;
        let stratum = Stratum2x2::new(v[0], v[1], v[2], v[3]).map_err(|e| Error::InvalidRow {
            line,
            source: Box::new(e),
        })?;
        out.push((record[0].to_string(), stratum));
    }
    Ok(out)
}

/// Rates per 1000 interviews, keyed by crime label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatesDoc {
    pub rape: f64,
    pub domestic_violence: f64,
    pub other_assault: f64,
    pub personal_larceny: f64,
    pub no_crime: f64,
}

impl From<RateReport> for RatesDoc {
    fn from(r: RateReport) -> Self {
        let v = r.per_thousand;
        Self {
            rape: v[0],
            domestic_violence: v[1],
            other_assault: v[2],
            personal_larceny: v[3],
            no_crime: v[4],
        }
    }
}

impl RatesDoc {
    pub fn get(&self, crime: CrimeCategory) -> f64 {
        match crime {
            CrimeCategory::Rape => self.rape,
            CrimeCategory::DomesticViolence => self.domestic_violence,
            CrimeCategory::OtherAssault => self.other_assault,
            CrimeCategory::PersonalLarceny => self.personal_larceny,
            CrimeCategory::NoCrime => self.no_crime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JackknifeDoc {
    pub units: Vec<String>,
    pub replicates: Vec<ParamValues>,
    pub variance: ParamValues,
    pub replicate_iterations: Vec<usize>,
}

/// Serialized output of a fit (and optionally a jackknife run).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub tool_version: String,
    pub input_digest: String,
    pub method: FitMethod,
    pub omega_mode: OmegaMode,
    pub params: ParamValues,
    pub rates: RatesDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_rates: Option<RatesDoc>,
    pub iterations: usize,
    pub converged: bool,
    pub loglik: f64,
    pub pseudo_counts: PseudoCounts,
    pub unidentified: Vec<GagParameter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shrinkage: Option<Vec<ShrinkageRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jackknife: Option<JackknifeDoc>,
}

impl ResultDocument {
    pub fn from_fit(
        fit: &FitResult,
        observed: Option<&ObservedTable>,
        prior: Option<&PriorSpec>,
        tool_version: &str,
        input_digest: &str,
    ) -> Self {
        Self {
            tool_version: tool_version.to_string(),
            input_digest: input_digest.to_string(),
            method: fit.method,
            omega_mode: fit.params.omega.mode(),
            params: ParamValues::from(&fit.params),
            rates: crime_rates(&fit.params.omega).into(),
            observed_rates: observed.map(|t| observed_rates(t).into()),
            iterations: fit.iterations,
            converged: fit.converged,
            loglik: fit.loglik,
            pseudo_counts: fit.pseudo_counts,
            unidentified: fit.unidentified.clone(),
            prior: prior.cloned(),
            shrinkage: fit.shrinkage.map(|r| r.to_vec()),
            jackknife: None,
        }
    }

    pub fn with_jackknife(mut self, labels: &[String], jk: &JackknifeResult) -> Self {
        self.jackknife = Some(JackknifeDoc {
            units: labels.to_vec(),
            replicates: jk.replicates.clone(),
            variance: jk.variance,
            replicate_iterations: jk.replicate_iterations.clone(),
        });
        self
    }
}

fn first_null(value: &Value, path: &mut String) -> bool {
    match value {
        Value::Null => true,
        Value::Array(items) => items.iter().enumerate().any(|(i, v)| {
            let len = path.len();
            write!(path, "[{i}]").expect("infallible");
            let found = first_null(v, path);
            if !found {
                path.truncate(len);
            }
            found
        }),
        Value::Object(map) => map.iter().any(|(k, v)| {
            let len = path.len();
            if !path.is_empty() {
                path.push('.');
            }
            path.push_str(k);
            let found = first_null(v, path);
            if !found {
                path.truncate(len);
            }
            found
        }),
        _ => false,
    }
}

/// Any serializable result as pretty JSON. Fails if a number is not finite.
pub fn emit_json<T: Serialize>(result: &T) -> Result<Vec<u8>> {
    // serde_json writes non-finite floats as null; absent options are
    // skipped, so any null marks a non-finite number.
    let value = serde_json::to_value(result)?;
    let mut path = String::new();
    if first_null(&value, &mut path) {
        return Err(Error::NonFiniteResult(path));
    }
    let mut bytes = serde_json::to_vec_pretty(&value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn emit_result_json(doc: &ResultDocument) -> Result<Vec<u8>> {
    emit_json(doc)
}

pub fn parse_result_json(bytes: &[u8]) -> Result<ResultDocument> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Text table of original versus fitted rates per 1000 interviews.
pub fn format_rate_table(doc: &ResultDocument) -> String {
    let mut out = String::new();
    let fitted_header = match doc.method {
        FitMethod::Em => "Fitted (EM)",
        FitMethod::Emb => "Fitted (EMB)",
    };
    writeln!(out, "Crime rates (incidents per 1000 interviews)").expect("infallible");
    writeln!(
        out,
        "{:<20}{:>12}{:>14}",
        "Crime", "Original", fitted_header
    )
    .expect("infallible");
    for crime in CrimeCategory::ALL {
        let original = doc
            .observed_rates
            .map_or_else(|| "-".to_string(), |r| format!("{:.2}", r.get(crime)));
        writeln!(
            out,
            "{:<20}{:>12}{:>14.2}",
            crime.label(),
            original,
            doc.rates.get(crime)
        )
        .expect("infallible");
    }
    out
}
