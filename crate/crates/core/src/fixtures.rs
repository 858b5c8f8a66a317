//! Bundled NCVS tables (1993–1997 prior period, 1998–2004 analysis period).

use crate::diagnostics::Stratum2x2;
use crate::io::{parse_observed_csv, parse_strata_csv, ParsedObserved};
use crate::model::ObservedTable;

/// 1998–2004, unweighted counts.
pub const LATE_CSV: &str = include_str!("../fixtures/ncvs_1998_2004.csv");
/// 1998–2004, weight-adjusted counts.
pub const LATE_WEIGHTED_CSV: &str = include_str!("../fixtures/ncvs_1998_2004_weighted.csv");
/// 1993–1997, unweighted counts.
pub const EARLY_CSV: &str = include_str!("../fixtures/ncvs_1993_1997.csv");
/// 1993–1997, weight-adjusted counts.
pub const EARLY_WEIGHTED_CSV: &str = include_str!("../fixtures/ncvs_1993_1997_weighted.csv");
/// Rape reports by spouse presence, one stratum per period.
pub const STRATA_RAPE_CSV: &str = include_str!("../fixtures/spouse_strata_rape.csv");
/// Domestic-violence reports by spouse presence, built from the personal
/// interview margins of the two unweighted tables.
pub const STRATA_DOMESTIC_VIOLENCE_CSV: &str =
    include_str!("../fixtures/spouse_strata_domestic_violence.csv");

fn table(csv: &str) -> ObservedTable {
    match parse_observed_csv(csv.as_bytes()).expect("bundled fixture parses") {
        ParsedObserved::Single(t) => t,
        ParsedObserved::Units(_) => unreachable!("bundled fixtures have no unit column"),
    }
}

fn strata(csv: &str) -> Vec<Stratum2x2> {
    parse_strata_csv(csv.as_bytes())
        .expect("bundled fixture parses")
        .into_iter()
        .map(|(_, s)| s)
        .collect()
}

pub fn late() -> ObservedTable {
    table(LATE_CSV)
}

pub fn late_weighted() -> ObservedTable {
    table(LATE_WEIGHTED_CSV)
}

pub fn early() -> ObservedTable {
    table(EARLY_CSV)
}

pub fn early_weighted() -> ObservedTable {
    table(EARLY_WEIGHTED_CSV)
}

pub fn strata_rape() -> Vec<Stratum2x2> {
    strata(STRATA_RAPE_CSV)
}

pub fn strata_domestic_violence() -> Vec<Stratum2x2> {
    strata(STRATA_DOMESTIC_VIOLENCE_CSV)
}
