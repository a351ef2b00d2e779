//! Cell-level first differences, DDD contrasts and the triple Wald-DID ratio.
//!
//! Every estimator in the crate is a [`Contrast`]: a treated cohort, a
//! control cohort and a (pre, post) period pair. The two-period estimator
//! is the contrast `C=1` vs `C=0` over periods `0 -> 1`; the staggered
//! estimators are built from the same machinery, so a staggered panel with
//! `T = 2` and one exposed cohort reproduces the two-period numbers exactly.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::InferenceResult;
use crate::numeric::CompensatedSum;
use crate::panel::{Cohort, Mode, PanelDataset};

/// Treated vs control cohort over one period pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Contrast {
    pub treated: Cohort,
    pub control: Cohort,
    pub pre: i64,
    pub post: i64,
}

impl Contrast {
    pub const TWO_PERIOD: Contrast = Contrast {
        treated: Cohort::Finite(1),
        control: Cohort::Finite(0),
        pre: 0,
        post: 1,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorConfig {
    /// `|DDD of D|` below this is treated as no first stage.
    pub relevance_tol: f64,
    /// `|DDD of D|` below this raises a weak-first-stage diagnostic.
    pub weak_threshold: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { relevance_tol: 1e-10, weak_threshold: 0.01 }
    }
}

/// Within-unit change between the contrast's two periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitDiff {
    /// Index into [`PanelDataset::units`].
    pub unit: usize,
    pub treated: bool,
    pub group_a: bool,
    pub dy: f64,
    pub dd: f64,
}

impl UnitDiff {
    /// Position in [`CellQuad`] order: (treated, A=1), (control, A=1),
    /// (treated, A=0), (control, A=0).
    pub fn cell_slot(&self) -> usize {
        match (self.treated, self.group_a) {
            (true, true) => 0,
            (false, true) => 1,
            (true, false) => 2,
            (false, false) => 3,
        }
    }
}

/// Sign of each [`CellQuad`] slot in the DDD contrast.
pub const CELL_SIGNS: [f64; 4] = [1.0, -1.0, -1.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellStats {
    pub cohort: Cohort,
    pub group_a: bool,
    pub n: usize,
    /// Mean of `Y_post - Y_pre` over the cell.
    pub did_y: f64,
    /// Mean of `D_post - D_pre` over the cell.
    pub did_d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellQuad {
    pub treated_a1: CellStats,
    pub control_a1: CellStats,
    pub treated_a0: CellStats,
    pub control_a0: CellStats,
}

impl CellQuad {
    pub fn as_array(&self) -> [&CellStats; 4] {
        [&self.treated_a1, &self.control_a1, &self.treated_a0, &self.control_a0]
    }

    pub fn n_total(&self) -> usize {
        self.as_array().iter().map(|c| c.n).sum()
    }
}

/// The DDD contrasts of Y and D:
/// `(treated_a1 - control_a1) - (treated_a0 - control_a0)`.
pub fn ddd(cells: &CellQuad) -> (f64, f64) {
    let y = (cells.treated_a1.did_y - cells.control_a1.did_y)
        - (cells.treated_a0.did_y - cells.control_a0.did_y);
    let d = (cells.treated_a1.did_d - cells.control_a1.did_d)
        - (cells.treated_a0.did_d - cells.control_a0.did_d);
    (y, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    /// First-stage DDD is non-zero but below the warning threshold.
    WeakFirstStage,
    /// First-stage DDD is negative.
    SignWarning,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Diagnostic::WeakFirstStage => "weak_first_stage",
            Diagnostic::SignWarning => "sign_warning",
        })
    }
}

/// Ratio of the outcome DDD to the treatment DDD for one contrast.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripleWaldEstimate {
    pub contrast: Contrast,
    pub estimate: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub cells: CellQuad,
    pub n_total: usize,
    pub diagnostics: Vec<Diagnostic>,
    pub inference: Option<InferenceResult>,
}

impl TripleWaldEstimate {
    pub fn se(&self) -> Option<f64> {
        self.inference.as_ref().map(|i| i.se)
    }

    pub fn ci(&self) -> Option<(f64, f64)> {
        self.inference.as_ref().map(|i| i.ci)
    }
}

/// Per-unit differences for the units in the contrast's two cohorts.
pub fn unit_diffs(dataset: &PanelDataset, contrast: &Contrast) -> Result<Vec<UnitDiff>> {
    let pre = dataset
        .period_index(contrast.pre)
        .ok_or_else(|| Error::InvalidTarget(format!("period {} not in panel", contrast.pre)))?;
    let post = dataset
        .period_index(contrast.post)
        .ok_or_else(|| Error::InvalidTarget(format!("period {} not in panel", contrast.post)))?;
    Ok(dataset
        .units()
        .iter()
        .enumerate()
        .filter(|(_, u)| u.cohort == contrast.treated || u.cohort == contrast.control)
        .map(|(i, u)| UnitDiff {
            unit: i,
            treated: u.cohort == contrast.treated,
            group_a: u.group_a,
            dy: u.outcome[post] - u.outcome[pre],
            dd: f64::from(u.treatment[post]) - f64::from(u.treatment[pre]),
        })
        .collect())
}

/// Cell means over a set of unit differences.
pub fn cells_from_diffs(diffs: &[UnitDiff], contrast: &Contrast) -> Result<CellQuad> {
    let mut n = [0usize; 4];
    let mut sy = [CompensatedSum::new(); 4];
    let mut sd = [CompensatedSum::new(); 4];
    for d in diffs {
        let k = d.cell_slot();
        n[k] += 1;
        sy[k].add(d.dy);
        sd[k].add(d.dd);
    }
    let make = |k: usize, cohort: Cohort, group_a: bool| -> Result<CellStats> {
        if n[k] == 0 {
            return Err(Error::EmptyCell { cohort, group: u8::from(group_a) });
        }
        let m = n[k] as f64;
        Ok(CellStats { cohort, group_a, n: n[k], did_y: sy[k].value() / m, did_d: sd[k].value() / m })
    };
    Ok(CellQuad {
        treated_a1: make(0, contrast.treated, true)?,
        control_a1: make(1, contrast.control, true)?,
        treated_a0: make(2, contrast.treated, false)?,
        control_a0: make(3, contrast.control, false)?,
    })
}

/// Ratio estimate from unit differences.
pub fn wald_from_diffs(
    diffs: &[UnitDiff],
    contrast: &Contrast,
    config: &EstimatorConfig,
) -> Result<TripleWaldEstimate> {
    let cells = cells_from_diffs(diffs, contrast)?;
    let (numerator, denominator) = ddd(&cells);
    if denominator.is_nan() || denominator.abs() < config.relevance_tol {
        return Err(Error::WeakOrZeroFirstStage { denominator });
    }
    let mut diagnostics = Vec::new();
    if denominator.abs() < config.weak_threshold {
        diagnostics.push(Diagnostic::WeakFirstStage);
    }
    if denominator < 0.0 {
        diagnostics.push(Diagnostic::SignWarning);
    }
    Ok(TripleWaldEstimate {
        contrast: *contrast,
        estimate: numerator / denominator,
        numerator,
        denominator,
        n_total: cells.n_total(),
        cells,
        diagnostics,
        inference: None,
    })
}

/// Sample mean changes of Y and D over the `(c, a)` cell.
pub fn cell_stats(
    dataset: &PanelDataset,
    cohort: Cohort,
    group_a: bool,
    pre: i64,
    post: i64,
) -> Result<CellStats> {
    let contrast = Contrast { treated: cohort, control: cohort, pre, post };
    let (mut n, mut sy, mut sd) = (0usize, CompensatedSum::new(), CompensatedSum::new());
    for d in unit_diffs(dataset, &contrast)?.iter().filter(|d| d.group_a == group_a) {
        n += 1;
        sy.add(d.dy);
        sd.add(d.dd);
    }
    if n == 0 {
        return Err(Error::EmptyCell { cohort, group: u8::from(group_a) });
    }
    Ok(CellStats { cohort, group_a, n, did_y: sy.value() / n as f64, did_d: sd.value() / n as f64 })
}

/// Triple Wald-DID for any contrast on the panel.
pub fn contrast_wald(
    dataset: &PanelDataset,
    contrast: &Contrast,
    config: &EstimatorConfig,
) -> Result<TripleWaldEstimate> {
    let diffs = unit_diffs(dataset, contrast)?;
    wald_from_diffs(&diffs, contrast, config)
}

/// Two-period triple Wald-DID estimate with default tolerances.
pub fn triple_wald_did(dataset: &PanelDataset) -> Result<TripleWaldEstimate> {
    triple_wald_did_with(dataset, &EstimatorConfig::default())
}

pub fn triple_wald_did_with(
    dataset: &PanelDataset,
    config: &EstimatorConfig,
) -> Result<TripleWaldEstimate> {
    dataset.require_mode(Mode::TwoPeriod)?;
    contrast_wald(dataset, &Contrast::TWO_PERIOD, config)
}

/// Single-difference Wald-DID within group `a`, for robustness comparisons.
pub fn plain_wald(
    dataset: &PanelDataset,
    contrast: &Contrast,
    group_a: bool,
    config: &EstimatorConfig,
) -> Result<f64> {
    let treated = cell_stats(dataset, contrast.treated, group_a, contrast.pre, contrast.post)?;
    let control = cell_stats(dataset, contrast.control, group_a, contrast.pre, contrast.post)?;
    let den = treated.did_d - control.did_d;
    if den.is_nan() || den.abs() < config.relevance_tol {
        return Err(Error::WeakOrZeroFirstStage { denominator: den });
    }
    Ok((treated.did_y - control.did_y) / den)
}

pub fn plain_wald_did(dataset: &PanelDataset, group_a: bool) -> Result<f64> {
    dataset.require_mode(Mode::TwoPeriod)?;
    plain_wald(dataset, &Contrast::TWO_PERIOD, group_a, &EstimatorConfig::default())
}
