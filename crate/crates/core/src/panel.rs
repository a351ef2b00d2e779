//! Long-format panel ingestion, validation and indexing.
//!
//! A [`PanelDataset`] is a balanced panel stored unit by unit: every unit
//! carries its time-invariant attributes (group `A`, cohort `C`) and one
//! outcome / treatment / instrument value per period. Units are kept sorted
//! by identifier, so two datasets built from the same rows in any order are
//! identical.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cohort label. In staggered designs `Finite(c)` is the first exposed
/// period; in two-period designs the cohort is the exposed-group flag
/// (`Finite(0)` or `Finite(1)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Cohort {
    Finite(u32),
    Never,
}

impl Cohort {
    pub fn is_never(self) -> bool {
        matches!(self, Cohort::Never)
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            Cohort::Finite(c) => Some(c),
            Cohort::Never => None,
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cohort::Finite(c) => write!(f, "{c}"),
            Cohort::Never => f.write_str("inf"),
        }
    }
}

impl FromStr for Cohort {
    type Err = String;

    /// `inf` (any case) and the empty string denote the never-exposed cohort.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("inf") {
            return Ok(Cohort::Never);
        }
        s.parse::<u32>()
            .map(Cohort::Finite)
            .map_err(|_| format!("expected a non-negative integer cohort or `inf`, got {s:?}"))
    }
}

impl From<Cohort> for String {
    fn from(c: Cohort) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for Cohort {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TwoPeriod,
    Staggered,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::TwoPeriod => "two_period",
            Mode::Staggered => "staggered",
        })
    }
}

/// One unit-period observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRecord {
    pub unit_id: String,
    pub time: i64,
    pub outcome: f64,
    pub treatment: u32,
    /// `None` when the instrument is to be derived from the design.
    pub instrument: Option<bool>,
    pub group_a: bool,
    pub cohort: Cohort,
}

/// A unit's full path through the panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub id: String,
    pub group_a: bool,
    pub cohort: Cohort,
    pub outcome: Vec<f64>,
    pub treatment: Vec<u32>,
    pub instrument: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    mode: Mode,
    periods: Vec<i64>,
    max_treatment: u32,
    units: Vec<Unit>,
}

/// First period in which a unit in `cohort` with `A = 1` is exposed.
pub fn exposure_date(mode: Mode, cohort: Cohort) -> Option<i64> {
    match (mode, cohort) {
        (Mode::TwoPeriod, Cohort::Finite(1)) => Some(1),
        (Mode::TwoPeriod, _) => None,
        (Mode::Staggered, Cohort::Finite(c)) => Some(i64::from(c)),
        (Mode::Staggered, Cohort::Never) => None,
    }
}

/// The instrument implied by the design: on for `A = 1` units from their
/// cohort's exposure date onwards.
pub fn design_instrument(mode: Mode, group_a: bool, cohort: Cohort, time: i64) -> bool {
    group_a && exposure_date(mode, cohort).is_some_and(|e| time >= e)
}

fn check_cohort(mode: Mode, cohort: Cohort, last_period: i64) -> std::result::Result<(), String> {
    match (mode, cohort) {
        (Mode::TwoPeriod, Cohort::Finite(0 | 1)) => Ok(()),
        (Mode::TwoPeriod, c) => Err(format!("two-period cohort must be 0 or 1, got {c}")),
        (Mode::Staggered, Cohort::Never) => Ok(()),
        (Mode::Staggered, Cohort::Finite(c)) if c >= 2 && i64::from(c) <= last_period => Ok(()),
        (Mode::Staggered, Cohort::Finite(c)) => Err(format!(
            "staggered cohort must lie in 2..={last_period} or be `inf`, got {c}"
        )),
    }
}

fn check_periods(mode: Mode, periods: &[i64]) -> Result<()> {
    match mode {
        Mode::TwoPeriod if periods != [0, 1] => Err(Error::InvalidPanel(format!(
            "two-period mode requires periods {{0, 1}}, found {periods:?}"
        ))),
        Mode::Staggered => {
            let t = periods.len() as i64;
            if t < 2 || periods.iter().copied().ne(1..=t) {
                return Err(Error::InvalidPanel(format!(
                    "staggered mode requires periods 1..=T with T >= 2, found {periods:?}"
                )));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

impl PanelDataset {
    /// Builds and validates a balanced panel from unit-period records.
    ///
    /// If every record lacks an instrument value the instrument is derived
    /// from the design; mixing present and absent values is rejected.
    pub fn from_records(records: Vec<PanelRecord>, mode: Mode, max_treatment: u32) -> Result<Self> {
        if max_treatment == 0 {
            return Err(Error::InvalidPanel("maximum treatment level must be at least 1".into()));
        }
        if records.is_empty() {
            return Err(Error::InvalidPanel("no records".into()));
        }
        let periods: Vec<i64> = records
            .iter()
            .map(|r| r.time)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        check_periods(mode, &periods)?;
        let last_period = *periods.last().expect("non-empty");
        let with_z = records.iter().filter(|r| r.instrument.is_some()).count();
        if with_z != 0 && with_z != records.len() {
            return Err(Error::InvalidPanel(
                "instrument is present on some records but not others".into(),
            ));
        }
        let derive = with_z == 0;

        let mut by_unit: BTreeMap<String, Vec<PanelRecord>> = BTreeMap::new();
        for r in records {
            if r.treatment > max_treatment {
                return Err(Error::InvalidPanel(format!(
                    "unit `{}` has treatment {} above the declared maximum {max_treatment}",
                    r.unit_id, r.treatment
                )));
            }
            if !r.outcome.is_finite() {
                return Err(Error::InvalidPanel(format!(
                    "unit `{}` has a non-finite outcome",
                    r.unit_id
                )));
            }
            by_unit.entry(r.unit_id.clone()).or_default().push(r);
        }

        let n_periods = periods.len();
        let mut units = Vec::with_capacity(by_unit.len());
        for (id, mut rows) in by_unit {
            rows.sort_by_key(|r| r.time);
            if rows.len() != n_periods || rows.iter().zip(&periods).any(|(r, &t)| r.time != t) {
                return Err(Error::UnbalancedPanel(id));
            }
            let group_a = rows[0].group_a;
            let cohort = rows[0].cohort;
            if rows.iter().any(|r| r.group_a != group_a) {
                return Err(Error::NonConstantUnitAttribute { unit: id, attribute: "group_a" });
            }
            if rows.iter().any(|r| r.cohort != cohort) {
                return Err(Error::NonConstantUnitAttribute { unit: id, attribute: "cohort" });
            }
            check_cohort(mode, cohort, last_period)
                .map_err(|e| Error::InvalidPanel(format!("unit `{id}`: {e}")))?;
            let instrument = rows
                .iter()
                .map(|r| match r.instrument {
                    Some(z) if !derive => z,
                    _ => design_instrument(mode, group_a, cohort, r.time),
                })
                .collect();
            units.push(Unit {
                id,
                group_a,
                cohort,
                outcome: rows.iter().map(|r| r.outcome).collect(),
                treatment: rows.iter().map(|r| r.treatment).collect(),
                instrument,
            });
        }
        Ok(Self { mode, periods, max_treatment, units })
    }

    /// Builds a panel from complete unit paths, sorted by id. Instruments
    /// are taken as given.
    pub fn from_units(
        mut units: Vec<Unit>,
        periods: Vec<i64>,
        mode: Mode,
        max_treatment: u32,
    ) -> Result<Self> {
        if max_treatment == 0 {
            return Err(Error::InvalidPanel("maximum treatment level must be at least 1".into()));
        }
        if units.is_empty() {
            return Err(Error::InvalidPanel("no units".into()));
        }
        check_periods(mode, &periods)?;
        let last_period = *periods.last().expect("non-empty");
        let t = periods.len();
        for u in &units {
            if u.outcome.len() != t || u.treatment.len() != t || u.instrument.len() != t {
                return Err(Error::UnbalancedPanel(u.id.clone()));
            }
            check_cohort(mode, u.cohort, last_period)
                .map_err(|e| Error::InvalidPanel(format!("unit `{}`: {e}", u.id)))?;
            if u.treatment.iter().any(|&d| d > max_treatment) {
                return Err(Error::InvalidPanel(format!(
                    "unit `{}` has treatment above the declared maximum {max_treatment}",
                    u.id
                )));
            }
            if u.outcome.iter().any(|y| !y.is_finite()) {
                return Err(Error::InvalidPanel(format!("unit `{}` has a non-finite outcome", u.id)));
            }
        }
        units.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = units.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::UnbalancedPanel(w[0].id.clone()));
        }
        Ok(Self { mode, periods, max_treatment, units })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    pub fn max_treatment(&self) -> u32 {
        self.max_treatment
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_records(&self) -> usize {
        self.units.len() * self.periods.len()
    }

    pub fn period_index(&self, t: i64) -> Option<usize> {
        self.periods.binary_search(&t).ok()
    }

    /// Records in canonical order (unit id, then time).
    pub fn records(&self) -> impl Iterator<Item = PanelRecord> + '_ {
        self.units.iter().flat_map(move |u| {
            self.periods.iter().enumerate().map(move |(k, &time)| PanelRecord {
                unit_id: u.id.clone(),
                time,
                outcome: u.outcome[k],
                treatment: u.treatment[k],
                instrument: Some(u.instrument[k]),
                group_a: u.group_a,
                cohort: u.cohort,
            })
        })
    }

    pub fn require_mode(&self, expected: Mode) -> Result<()> {
        if self.mode == expected {
            Ok(())
        } else {
            Err(Error::ModeMismatch { expected, found: self.mode })
        }
    }

    /// Returns a copy with the instrument overwritten by the design rule.
    pub fn derive_instrument(&self) -> PanelDataset {
        let mut out = self.clone();
        for u in &mut out.units {
            for (z, &t) in u.instrument.iter_mut().zip(&self.periods) {
                *z = design_instrument(self.mode, u.group_a, u.cohort, t);
            }
        }
        out
    }

    /// Checks the observed instrument against the design. An empty result
    /// means the instrument starts at zero, never switches off (staggered)
    /// and matches the `A x C` assignment rule everywhere.
    pub fn validate_design(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for u in &self.units {
            for (k, &t) in self.periods.iter().enumerate() {
                let z = u.instrument[k];
                let expected = design_instrument(self.mode, u.group_a, u.cohort, t);
                let rule = if k == 0 && z {
                    Some(Rule::InitialExposure)
                } else if self.mode == Mode::Staggered && k > 0 && u.instrument[k - 1] && !z {
                    Some(Rule::NonMonotoneInstrument)
                } else if z && !expected {
                    Some(Rule::InstrumentOutsideDesign)
                } else if !z && expected {
                    Some(Rule::MissingExposure)
                } else {
                    None
                };
                if let Some(rule) = rule {
                    out.push(Violation { rule, unit: u.id.clone(), time: t });
                }
            }
        }
        out
    }

    /// Partition of units by cohort (staggered designs only).
    pub fn cohort_index(&self) -> Result<CohortIndex> {
        self.require_mode(Mode::Staggered)?;
        let mut cohorts: BTreeMap<Cohort, Vec<usize>> = BTreeMap::new();
        for (i, u) in self.units.iter().enumerate() {
            cohorts.entry(u.cohort).or_default().push(i);
        }
        let has_never = cohorts.contains_key(&Cohort::Never);
        let last_exposed = cohorts.keys().filter_map(|c| c.finite()).max();
        Ok(CohortIndex { cohorts, has_never, last_exposed })
    }

    /// Number of units in each `(cohort, group)` cell.
    pub fn cell_counts(&self) -> BTreeMap<(Cohort, bool), usize> {
        let mut counts = BTreeMap::new();
        for u in &self.units {
            *counts.entry((u.cohort, u.group_a)).or_insert(0) += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortIndex {
    pub cohorts: BTreeMap<Cohort, Vec<usize>>,
    pub has_never: bool,
    pub last_exposed: Option<u32>,
}

impl CohortIndex {
    pub fn finite_cohorts(&self) -> impl Iterator<Item = u32> + '_ {
        self.cohorts.keys().filter_map(|c| c.finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    /// Instrument switched on in the first period.
    InitialExposure,
    /// Instrument switched off after being on.
    NonMonotoneInstrument,
    /// Instrument on where the design says off.
    InstrumentOutsideDesign,
    /// Instrument off where the design says on.
    MissingExposure,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::InitialExposure => "InitialExposure",
            Rule::NonMonotoneInstrument => "NonMonotoneInstrument",
            Rule::InstrumentOutsideDesign => "InstrumentOutsideDesign",
            Rule::MissingExposure => "MissingExposure",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    pub unit: String,
    pub time: i64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} unit={} t={}", self.rule, self.unit, self.time)
    }
}

/// Column names for each panel field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub unit: String,
    pub time: String,
    pub outcome: String,
    pub treatment: String,
    /// Derived from the design when `None`.
    pub instrument: Option<String>,
    pub group_a: String,
    pub cohort: String,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            time: "time".into(),
            outcome: "y".into(),
            treatment: "d".into(),
            instrument: None,
            group_a: "a".into(),
            cohort: "cohort".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub schema: Schema,
    pub mode: Mode,
    pub max_treatment: u32,
    pub delimiter: u8,
}

impl LoadOptions {
    pub fn new(mode: Mode) -> Self {
        Self { schema: Schema::default(), mode, max_treatment: 1, delimiter: b',' }
    }
}

fn malformed(row: usize, column: &str, value: &str, reason: impl Into<String>) -> Error {
    Error::MalformedValue {
        row,
        column: column.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn parse_flag(row: usize, column: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(malformed(row, column, value, "expected 0 or 1")),
    }
}

fn parse_treatment(row: usize, column: &str, value: &str) -> Result<u32> {
    let v = value.trim();
    if let Ok(d) = v.parse::<u32>() {
        return Ok(d);
    }
    match v.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x <= f64::from(u32::MAX) => Ok(x as u32),
        _ => Err(malformed(row, column, value, "expected a non-negative integer")),
    }
}

/// Reads a delimited long-format panel with a header row.
///
/// Row numbers in errors count data rows from 1 (the header is row 0).
pub fn load_panel<R: Read>(source: R, options: &LoadOptions) -> Result<PanelDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let s = &options.schema;
    let (iu, it, iy, id, ia, ic) = (
        col(&s.unit)?,
        col(&s.time)?,
        col(&s.outcome)?,
        col(&s.treatment)?,
        col(&s.group_a)?,
        col(&s.cohort)?,
    );
    let iz = s.instrument.as_deref().map(col).transpose()?;

    let mut records = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let row_no = k + 1;
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let unit_id = field(iu).to_string();
        if unit_id.is_empty() {
            return Err(malformed(row_no, &s.unit, "", "empty unit identifier"));
        }
        let time = field(it)
            .parse::<i64>()
            .map_err(|_| malformed(row_no, &s.time, field(it), "expected an integer period"))?;
        let outcome = field(iy)
            .parse::<f64>()
            .ok()
            .filter(|y| y.is_finite())
            .ok_or_else(|| malformed(row_no, &s.outcome, field(iy), "expected a finite number"))?;
        let treatment = parse_treatment(row_no, &s.treatment, field(id))?;
        if treatment > options.max_treatment {
            return Err(malformed(
                row_no,
                &s.treatment,
                field(id),
                format!("treatment exceeds the declared maximum {}", options.max_treatment),
            ));
        }
        let instrument = match iz {
            Some(iz) => Some(parse_flag(row_no, s.instrument.as_deref().unwrap_or(""), field(iz))?),
            None => None,
        };
        let group_a = parse_flag(row_no, &s.group_a, field(ia))?;
        let cohort: Cohort = field(ic)
            .parse()
            .map_err(|e: String| malformed(row_no, &s.cohort, field(ic), e))?;
        if options.mode == Mode::TwoPeriod && !matches!(cohort, Cohort::Finite(0 | 1)) {
            return Err(malformed(row_no, &s.cohort, field(ic), "two-period cohort must be 0 or 1"));
        }
        if options.mode == Mode::Staggered && matches!(cohort, Cohort::Finite(c) if c < 2) {
            return Err(malformed(row_no, &s.cohort, field(ic), "staggered cohort must be >= 2 or `inf`"));
        }
        records.push(PanelRecord { unit_id, time, outcome, treatment, instrument, group_a, cohort });
    }
    PanelDataset::from_records(records, options.mode, options.max_treatment)
}

/// Writes the dataset in canonical order. Reals use the shortest
/// representation that parses back to the same bits.
pub fn write_panel<W: Write>(dataset: &PanelDataset, sink: W, options: &LoadOptions) -> Result<()> {
    let s = &options.schema;
    let mut w = csv::WriterBuilder::new().delimiter(options.delimiter).from_writer(sink);
    w.write_record([
        s.unit.as_str(),
        s.time.as_str(),
        s.outcome.as_str(),
        s.treatment.as_str(),
        s.instrument.as_deref().unwrap_or("z"),
        s.group_a.as_str(),
        s.cohort.as_str(),
    ])?;
    for r in dataset.records() {
        w.write_record([
            r.unit_id,
            r.time.to_string(),
            format!("{:?}", r.outcome),
            r.treatment.to_string(),
            u8::from(r.instrument.unwrap_or(false)).to_string(),
            u8::from(r.group_a).to_string(),
            r.cohort.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
