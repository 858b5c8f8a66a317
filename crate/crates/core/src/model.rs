//! The gag-factor model: cell layout, parameters, the complete-data
//! probability map and the collapse from complete to observed cells.
//!
//! A respondent is interviewed either in person or by telephone. In person the
//! interviewer records whether a spouse was present; by telephone that is
//! unknown. Two "gag" mechanisms suppress reporting:
//!
//! * a present spouse gags rape (reported with probability `rho`) and domestic
//!   violence (`delta`);
//! * a telephone interview gags every crime except personal larceny (`tau`).
//!
//! Spouse presence dominates the telephone gag, so a crime suppressed by the
//! spouse is never counted as suppressed by the telephone. Every suppressed
//! crime is recorded as "no crime".

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that probability vectors lie on a simplex.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrimeCategory {
    Rape,
    DomesticViolence,
    OtherAssault,
    PersonalLarceny,
    NoCrime,
}

impl CrimeCategory {
    pub const ALL: [CrimeCategory; 5] = [
        CrimeCategory::Rape,
        CrimeCategory::DomesticViolence,
        CrimeCategory::OtherAssault,
        CrimeCategory::PersonalLarceny,
        CrimeCategory::NoCrime,
    ];

    /// Zero-based position in the fixed category order.
    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Label used in CSV files and result documents.
    pub const fn label(self) -> &'static str {
        match self {
            CrimeCategory::Rape => "rape",
            CrimeCategory::DomesticViolence => "domestic_violence",
            CrimeCategory::OtherAssault => "other_assault",
            CrimeCategory::PersonalLarceny => "personal_larceny",
            CrimeCategory::NoCrime => "no_crime",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == label)
    }

    /// Crimes a present spouse can keep the respondent from reporting.
    pub const fn spouse_gaggable(self) -> bool {
        matches!(self, CrimeCategory::Rape | CrimeCategory::DomesticViolence)
    }

    /// Crimes a telephone interview can keep the respondent from reporting.
    pub const fn phone_gaggable(self) -> bool {
        matches!(
            self,
            CrimeCategory::Rape | CrimeCategory::DomesticViolence | CrimeCategory::OtherAssault
        )
    }
}

impl fmt::Display for CrimeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpouseState {
    Present,
    Absent,
}

impl SpouseState {
    pub const ALL: [SpouseState; 2] = [SpouseState::Present, SpouseState::Absent];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn label(self) -> &'static str {
        match self {
            SpouseState::Present => "present",
            SpouseState::Absent => "absent",
        }
    }
}

impl fmt::Display for SpouseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Personal,
    Telephone,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Personal, Mode::Telephone];

    pub const fn label(self) -> &'static str {
        match self {
            Mode::Personal => "personal",
            Mode::Telephone => "telephone",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Reported,
    /// Not reported because a spouse was present.
    GaggedSpouse,
    /// Not reported because the interview was by telephone.
    GaggedPhone,
}

impl fmt::Display for ReportStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportStatus::Reported => "reported",
            ReportStatus::GaggedSpouse => "gagged_spouse",
            ReportStatus::GaggedPhone => "gagged_phone",
        })
    }
}

/// One of the 30 cells of the latent complete-data table.
///
/// Only the valid combinations can be constructed; see [`CompleteCellId::new`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CompleteCellId {
    mode: Mode,
    crime: CrimeCategory,
    status: ReportStatus,
    spouse: SpouseState,
}

pub const COMPLETE_CELLS: usize = 30;
pub const OBSERVED_CELLS: usize = 15;

const fn is_valid_cell(
    mode: Mode,
    crime: CrimeCategory,
    status: ReportStatus,
    spouse: SpouseState,
) -> bool {
    match status {
        ReportStatus::Reported => true,
        ReportStatus::GaggedSpouse => {
            crime.spouse_gaggable() && matches!(spouse, SpouseState::Present)
        }
        ReportStatus::GaggedPhone => crime.phone_gaggable() && matches!(mode, Mode::Telephone),
    }
}

const fn build_cells() -> [CompleteCellId; COMPLETE_CELLS] {
    const STATUSES: [ReportStatus; 3] = [
        ReportStatus::Reported,
        ReportStatus::GaggedSpouse,
        ReportStatus::GaggedPhone,
    ];
    let mut out = [CompleteCellId {
        mode: Mode::Personal,
        crime: CrimeCategory::Rape,
        status: ReportStatus::Reported,
        spouse: SpouseState::Present,
    }; COMPLETE_CELLS];
    let mut n = 0;
    let mut m = 0;
    while m < 2 {
        let mut c = 0;
        while c < 5 {
            let mut st = 0;
            while st < 3 {
                let mut sp = 0;
                while sp < 2 {
                    let cell = CompleteCellId {
                        mode: Mode::ALL[m],
                        crime: CrimeCategory::ALL[c],
                        status: STATUSES[st],
                        spouse: SpouseState::ALL[sp],
                    };
                    if is_valid_cell(cell.mode, cell.crime, cell.status, cell.spouse) {
                        out[n] = cell;
                        n += 1;
                    }
                    sp += 1;
                }
                st += 1;
            }
            c += 1;
        }
        m += 1;
    }
    assert!(n == COMPLETE_CELLS);
    out
}

/// All complete-data cells in canonical order (mode, crime, status, spouse).
pub static ALL_COMPLETE_CELLS: [CompleteCellId; COMPLETE_CELLS] = build_cells();

impl CompleteCellId {
    pub fn new(
        mode: Mode,
        crime: CrimeCategory,
        status: ReportStatus,
        spouse: SpouseState,
    ) -> Result<Self> {
        if is_valid_cell(mode, crime, status, spouse) {
            Ok(Self {
                mode,
                crime,
                status,
                spouse,
            })
        } else {
            Err(Error::InvalidCell {
                mode,
                crime,
                status,
                spouse,
            })
        }
    }

    pub fn all() -> &'static [CompleteCellId; COMPLETE_CELLS] {
        &ALL_COMPLETE_CELLS
    }

    pub fn mode(self) -> Mode {
        self.mode
    }

    pub fn crime(self) -> CrimeCategory {
        self.crime
    }

    pub fn status(self) -> ReportStatus {
        self.status
    }

    pub fn spouse(self) -> SpouseState {
        self.spouse
    }

    /// Position in [`ALL_COMPLETE_CELLS`].
    pub fn index(self) -> usize {
        ALL_COMPLETE_CELLS
            .iter()
            .position(|c| *c == self)
            .expect("constructed cells are always in the canonical list")
    }

    /// The observed cell this complete cell is recorded in.
    ///
    /// Reported crimes keep their category (telephone interviews lose the
    /// spouse dimension); every suppressed crime is recorded as no crime.
    pub fn observed_cell(self) -> ObservedCellId {
        let crime = match self.status {
            ReportStatus::Reported => self.crime,
            ReportStatus::GaggedSpouse | ReportStatus::GaggedPhone => CrimeCategory::NoCrime,
        };
        match self.mode {
            Mode::Personal => {
                let spouse = match self.status {
                    ReportStatus::Reported => self.spouse,
                    _ => SpouseState::Present,
                };
                ObservedCellId::Personal(crime, spouse)
            }
            Mode::Telephone => ObservedCellId::Telephone(crime),
        }
    }
}

impl fmt::Display for CompleteCellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.mode, self.crime, self.status, self.spouse
        )
    }
}

/// One of the 15 cells the survey actually records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObservedCellId {
    Personal(CrimeCategory, SpouseState),
    Telephone(CrimeCategory),
}

impl ObservedCellId {
    pub fn all() -> impl Iterator<Item = ObservedCellId> {
        let personal = CrimeCategory::ALL.into_iter().flat_map(|c| {
            SpouseState::ALL
                .into_iter()
                .map(move |s| ObservedCellId::Personal(c, s))
        });
        personal.chain(
            CrimeCategory::ALL
                .into_iter()
                .map(ObservedCellId::Telephone),
        )
    }

    pub fn index(self) -> usize {
        match self {
            ObservedCellId::Personal(c, s) => 2 * c.index() + s.index(),
            ObservedCellId::Telephone(c) => 10 + c.index(),
        }
    }

    pub fn mode(self) -> Mode {
        match self {
            ObservedCellId::Personal(..) => Mode::Personal,
            ObservedCellId::Telephone(_) => Mode::Telephone,
        }
    }

    pub fn crime(self) -> CrimeCategory {
        match self {
            ObservedCellId::Personal(c, _) | ObservedCellId::Telephone(c) => c,
        }
    }

    pub fn spouse(self) -> Option<SpouseState> {
        match self {
            ObservedCellId::Personal(_, s) => Some(s),
            ObservedCellId::Telephone(_) => None,
        }
    }

    /// Complete-data cells that collapse into this observed cell.
    pub fn constituents(self) -> impl Iterator<Item = CompleteCellId> {
        ALL_COMPLETE_CELLS
            .iter()
            .copied()
            .filter(move |c| c.observed_cell() == self)
    }
}

impl fmt::Display for ObservedCellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservedCellId::Personal(c, s) => write!(f, "(personal, {c}, {s})"),
            ObservedCellId::Telephone(c) => write!(f, "(telephone, {c}, na)"),
        }
    }
}

/// The 15-cell observed table. Counts are real-valued so that weight-adjusted
/// tables can be analysed directly.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservedTable {
    /// Indexed `[crime][spouse]`.
    pub personal: [[f64; 2]; 5],
    /// Indexed `[crime]`.
    pub telephone: [f64; 5],
}

impl ObservedTable {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn get(&self, cell: ObservedCellId) -> f64 {
        match cell {
            ObservedCellId::Personal(c, s) => self.personal[c.index()][s.index()],
            ObservedCellId::Telephone(c) => self.telephone[c.index()],
        }
    }

    pub fn get_mut(&mut self, cell: ObservedCellId) -> &mut f64 {
        match cell {
            ObservedCellId::Personal(c, s) => &mut self.personal[c.index()][s.index()],
            ObservedCellId::Telephone(c) => &mut self.telephone[c.index()],
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (ObservedCellId, f64)> + '_ {
        ObservedCellId::all().map(move |id| (id, self.get(id)))
    }

    pub fn to_array(&self) -> [f64; OBSERVED_CELLS] {
        let mut out = [0.0; OBSERVED_CELLS];
        for (id, v) in self.cells() {
            out[id.index()] = v;
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.personal_total() + self.telephone_total()
    }

    pub fn personal_total(&self) -> f64 {
        self.personal.iter().flatten().sum()
    }

    pub fn telephone_total(&self) -> f64 {
        self.telephone.iter().sum()
    }

    /// Observed count per crime category, summed over mode and spouse state.
    pub fn crime_totals(&self) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.personal[i][0] + self.personal[i][1] + self.telephone[i];
        }
        out
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let mut out = *self;
        out.personal.iter_mut().flatten().for_each(|v| *v = f(*v));
        out.telephone.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn zip_with(&self, other: &Self, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut out = *self;
        for id in ObservedCellId::all() {
            *out.get_mut(id) = f(self.get(id), other.get(id));
        }
        out
    }

    /// Checks that every cell is finite and non-negative and the total is positive.
    pub fn validate(&self) -> Result<()> {
        for (cell, value) in self.cells() {
            if !value.is_finite() {
                return Err(Error::NonFiniteCell { cell });
            }
            if value < 0.0 {
                return Err(Error::NegativeCell { cell, value });
            }
        }
        if self.total() <= 0.0 {
            return Err(Error::EmptyTable);
        }
        Ok(())
    }
}

/// Returns the table unchanged if it can be fitted.
pub fn validate_observed(table: ObservedTable) -> Result<ObservedTable> {
    table.validate()?;
    Ok(table)
}

/// Counts (or probabilities) over the 30 complete-data cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompleteTable {
    cells: [f64; COMPLETE_CELLS],
}

impl Default for CompleteTable {
    fn default() -> Self {
        Self::zeros()
    }
}

impl CompleteTable {
    pub fn zeros() -> Self {
        Self {
            cells: [0.0; COMPLETE_CELLS],
        }
    }

    /// Builds a table from values in [`ALL_COMPLETE_CELLS`] order.
    pub fn from_array(cells: [f64; COMPLETE_CELLS]) -> Self {
        Self { cells }
    }

    pub fn as_array(&self) -> &[f64; COMPLETE_CELLS] {
        &self.cells
    }

    pub fn iter(&self) -> impl Iterator<Item = (CompleteCellId, f64)> + '_ {
        ALL_COMPLETE_CELLS
            .iter()
            .copied()
            .zip(self.cells.iter().copied())
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (cell, v) in self.iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "complete cell {cell} has invalid count {v}"
                )));
            }
        }
        Ok(())
    }

    /// Total mass for interview mode `mode`.
    pub fn mode_total(&self, mode: Mode) -> f64 {
        self.iter()
            .filter(|(c, _)| c.mode() == mode)
            .map(|(_, v)| v)
            .sum()
    }

    /// True crime-by-spouse totals `y_{+c+s}`, indexed `[crime][spouse]`.
    pub fn crime_spouse_totals(&self) -> [[f64; 2]; 5] {
        let mut out = [[0.0; 2]; 5];
        for (cell, v) in self.iter() {
            out[cell.crime().index()][cell.spouse().index()] += v;
        }
        out
    }
}

impl Index<CompleteCellId> for CompleteTable {
    type Output = f64;

    fn index(&self, cell: CompleteCellId) -> &f64 {
        &self.cells[cell.index()]
    }
}

impl IndexMut<CompleteCellId> for CompleteTable {
    fn index_mut(&mut self, cell: CompleteCellId) -> &mut f64 {
        &mut self.cells[cell.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaMode {
    #[default]
    Independence,
    Saturated,
}

impl fmt::Display for OmegaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OmegaMode::Independence => "independence",
            OmegaMode::Saturated => "saturated",
        })
    }
}

/// Joint distribution of true crime status and spouse presence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaModel {
    /// `omega(i, j) = crime[i] * spouse[j]`.
    Independence { crime: [f64; 5], spouse: [f64; 2] },
    /// Free 5x2 joint distribution, indexed `[crime][spouse]`.
    Saturated { omega: [[f64; 2]; 5] },
}

impl OmegaModel {
    pub fn uniform() -> Self {
        OmegaModel::Independence {
            crime: [0.2; 5],
            spouse: [0.5; 2],
        }
    }

    pub fn mode(&self) -> OmegaMode {
        match self {
            OmegaModel::Independence { .. } => OmegaMode::Independence,
            OmegaModel::Saturated { .. } => OmegaMode::Saturated,
        }
    }

    pub fn omega(&self, crime: CrimeCategory, spouse: SpouseState) -> f64 {
        match self {
            OmegaModel::Independence {
                crime: c,
                spouse: s,
            } => c[crime.index()] * s[spouse.index()],
            OmegaModel::Saturated { omega } => omega[crime.index()][spouse.index()],
        }
    }

    pub fn matrix(&self) -> [[f64; 2]; 5] {
        let mut out = [[0.0; 2]; 5];
        for c in CrimeCategory::ALL {
            for s in SpouseState::ALL {
                out[c.index()][s.index()] = self.omega(c, s);
            }
        }
        out
    }

    /// Marginal probability of each crime category.
    pub fn crime_marginals(&self) -> [f64; 5] {
        let m = self.matrix();
        std::array::from_fn(|i| m[i][0] + m[i][1])
    }

    pub fn validate(&self) -> Result<()> {
        fn check_simplex(name: &str, v: &[f64]) -> Result<()> {
            if v.iter().any(|p| !p.is_finite() || !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidParams(format!(
                    "{name} entries must lie in [0, 1]: {v:?}"
                )));
            }
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(Error::InvalidParams(format!(
                    "{name} must sum to 1, got {sum}"
                )));
            }
            Ok(())
        }
        match self {
            OmegaModel::Independence { crime, spouse } => {
                check_simplex("crime margin", crime)?;
                check_simplex("spouse margin", spouse)
            }
            OmegaModel::Saturated { omega } => {
                let flat: Vec<f64> = omega.iter().flatten().copied().collect();
                check_simplex("omega", &flat)
            }
        }
    }
}

/// Full parameter set of the gag-factor model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Probability of a telephone interview.
    pub pi: f64,
    /// Probability a phone-gaggable crime is reported by telephone.
    pub tau: f64,
    /// Probability rape is reported when the spouse is present.
    pub rho: f64,
    /// Probability domestic violence is reported when the spouse is present.
    pub delta: f64,
    pub omega: OmegaModel,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pi", self.pi),
            ("tau", self.tau),
            ("rho", self.rho),
            ("delta", self.delta),
        ] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParams(format!(
                    "{name} = {v} is not in [0, 1]"
                )));
            }
        }
        self.omega.validate()
    }

    /// Probability that a crime committed with the given spouse state is not
    /// suppressed by the spouse.
    pub fn spouse_report_probability(&self, crime: CrimeCategory, spouse: SpouseState) -> f64 {
        match (crime, spouse) {
            (CrimeCategory::Rape, SpouseState::Present) => self.rho,
            (CrimeCategory::DomesticViolence, SpouseState::Present) => self.delta,
            _ => 1.0,
        }
    }
}

/// Probability of one complete-data cell.
pub fn cell_probability(params: &ModelParams, cell: CompleteCellId) -> f64 {
    let crime = cell.crime();
    let spouse = cell.spouse();
    let omega = params.omega.omega(crime, spouse);
    let g = params.spouse_report_probability(crime, spouse);
    let mode = match cell.mode() {
        Mode::Personal => 1.0 - params.pi,
        Mode::Telephone => params.pi,
    };
    let phone_gaggable = cell.mode() == Mode::Telephone && crime.phone_gaggable();
    let reporting = match cell.status() {
        ReportStatus::Reported if phone_gaggable => g * params.tau,
        ReportStatus::Reported => g,
        ReportStatus::GaggedSpouse => 1.0 - g,
        ReportStatus::GaggedPhone => g * (1.0 - params.tau),
    };
    mode * reporting * omega
}

pub fn complete_probabilities(params: &ModelParams) -> CompleteTable {
    CompleteTable::from_array(std::array::from_fn(|i| {
        cell_probability(params, ALL_COMPLETE_CELLS[i])
    }))
}

/// Sums complete-data cells into the observed cells they are recorded in.
pub fn collapse(complete: &CompleteTable) -> ObservedTable {
    let mut out = ObservedTable::zeros();
    for (cell, v) in complete.iter() {
        *out.get_mut(cell.observed_cell()) += v;
    }
    out
}

pub fn observed_probabilities(params: &ModelParams) -> ObservedTable {
    collapse(&complete_probabilities(params))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateBasis {
    ObservedRaw,
    ModelFitted,
}

/// Incidents per 1000 interviews for each crime category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub per_thousand: [f64; 5],
    pub basis: RateBasis,
}

impl RateReport {
    pub fn rate(&self, crime: CrimeCategory) -> f64 {
        self.per_thousand[crime.index()]
    }
}

/// Model-based rates per 1000 interviews.
pub fn crime_rates(omega: &OmegaModel) -> RateReport {
    RateReport {
        per_thousand: omega.crime_marginals().map(|p| 1000.0 * p),
        basis: RateBasis::ModelFitted,
    }
}

/// Raw rates per 1000 interviews, taking every reported count at face value.
pub fn observed_rates(table: &ObservedTable) -> RateReport {
    let total = table.total();
    RateReport {
        per_thousand: table.crime_totals().map(|c| 1000.0 * c / total),
        basis: RateBasis::ObservedRaw,
    }
}
