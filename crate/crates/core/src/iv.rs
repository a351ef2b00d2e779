//! Saturated two-stage least squares on the unit-period rows of a contrast.
//!
//! The first stage regresses `D` on all eight `(C, T, A)` cell indicators,
//! so fitted treatment equals the cell mean of `D`. The second stage keeps
//! the seven lower-order indicators and the fitted treatment; the triple
//! interaction is the excluded instrument. The coefficient on fitted
//! treatment reproduces the cell-mean triple Wald-DID ratio.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimand::Contrast;
use crate::inference::EstimatorSpec;
use crate::panel::{Mode, PanelDataset};

pub const FIRST_STAGE_COLUMNS: [&str; 8] = ["1", "C", "T", "A", "C*T", "C*A", "T*A", "C*T*A"];
pub const SECOND_STAGE_COLUMNS: [&str; 8] = ["1", "C", "T", "A", "C*T", "C*A", "T*A", "D"];

/// Cell of a design row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowCell {
    pub treated: bool,
    pub post: bool,
    pub group_a: bool,
}

impl RowCell {
    fn indicators(self) -> [f64; 8] {
        let f = |b: bool| if b { 1.0 } else { 0.0 };
        let (c, t, a) = (self.treated, self.post, self.group_a);
        [1.0, f(c), f(t), f(a), f(c && t), f(c && a), f(t && a), f(c && t && a)]
    }

    fn slot(self) -> usize {
        usize::from(self.treated) * 4 + usize::from(self.post) * 2 + usize::from(self.group_a)
    }

    fn from_slot(k: usize) -> Self {
        Self { treated: k & 4 != 0, post: k & 2 != 0, group_a: k & 1 != 0 }
    }
}

#[derive(Debug, Clone)]
pub struct DesignMatrixSpec {
    pub contrast: Contrast,
    /// `(unit index, period)` for each row, in dataset order.
    pub rows: Vec<(usize, i64)>,
    pub cells: Vec<RowCell>,
    /// All eight cell indicators.
    pub first_stage: DMatrix<f64>,
    /// The seven indicators without the triple interaction.
    pub included: DMatrix<f64>,
    pub y: DVector<f64>,
    pub d: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IvFit {
    /// Second-stage coefficients in [`SECOND_STAGE_COLUMNS`] order.
    pub beta: Vec<f64>,
    /// First-stage coefficients in [`FIRST_STAGE_COLUMNS`] order.
    pub pi: Vec<f64>,
    pub beta_iv: f64,
    /// `|| D - D_hat ||`.
    pub first_stage_residual_norm: f64,
    /// `|| Y - X beta ||` with observed `D` in `X`.
    pub structural_residual_norm: f64,
    pub fitted_d: Vec<f64>,
}

/// Subsets the panel to the contrast's two cohorts and two periods.
pub fn build_design(dataset: &PanelDataset, target: &EstimatorSpec) -> Result<DesignMatrixSpec> {
    match target {
        EstimatorSpec::TwoPeriod => dataset.require_mode(Mode::TwoPeriod)?,
        EstimatorSpec::Staggered(_) => dataset.require_mode(Mode::Staggered)?,
    }
    let contrast = target.contrast();
    let pre = dataset
        .period_index(contrast.pre)
        .ok_or_else(|| Error::InvalidTarget(format!("period {} not in panel", contrast.pre)))?;
    let post = dataset
        .period_index(contrast.post)
        .ok_or_else(|| Error::InvalidTarget(format!("period {} not in panel", contrast.post)))?;

    let mut rows = Vec::new();
    let mut cells = Vec::new();
    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut seen = [false; 4];
    for (i, u) in dataset.units().iter().enumerate() {
        let treated = u.cohort == contrast.treated;
        if !treated && u.cohort != contrast.control {
            continue;
        }
        seen[usize::from(treated) * 2 + usize::from(u.group_a)] = true;
        for (k, is_post) in [(pre, false), (post, true)] {
            rows.push((i, dataset.periods()[k]));
            cells.push(RowCell { treated, post: is_post, group_a: u.group_a });
            y.push(u.outcome[k]);
            d.push(f64::from(u.treatment[k]));
        }
    }
    for (k, ok) in seen.iter().enumerate() {
        if !ok {
            let treated = k >= 2;
            let cohort = if treated { contrast.treated } else { contrast.control };
            return Err(Error::EmptyCell { cohort, group: (k % 2) as u8 });
        }
    }

    let n = rows.len();
    let first_stage = DMatrix::from_fn(n, 8, |r, c| cells[r].indicators()[c]);
    let included = first_stage.columns(0, 7).into_owned();
    Ok(DesignMatrixSpec {
        contrast,
        rows,
        cells,
        first_stage,
        included,
        y: DVector::from_vec(y),
        d: DVector::from_vec(d),
    })
}

/// Least squares through the normal equations with a column-pivoted QR.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let gram = x.tr_mul(x);
    let rhs = x.tr_mul(y);
    let qr = gram.col_piv_qr();
    let r = qr.r();
    let lead = r[(0, 0)].abs();
    let k = r.nrows().min(r.ncols());
    if lead == 0.0 || (0..k).any(|i| r[(i, i)].abs() <= 1e-12 * lead) {
        return Err(Error::SingularDesign(format!("{what} is rank deficient")));
    }
    qr.solve(&rhs)
        .ok_or_else(|| Error::SingularDesign(format!("{what} normal equations are singular")))
}

pub fn first_stage(spec: &DesignMatrixSpec) -> Result<DVector<f64>> {
    first_stage_on(spec, &spec.d)
}

/// First-stage coefficients for an arbitrary left-hand side.
pub fn first_stage_on(spec: &DesignMatrixSpec, lhs: &DVector<f64>) -> Result<DVector<f64>> {
    let mut present = [false; 8];
    for c in &spec.cells {
        present[c.slot()] = true;
    }
    if let Some(k) = present.iter().position(|p| !p) {
        let c = RowCell::from_slot(k);
        return Err(Error::SingularDesign(format!(
            "no rows in cell C={} T={} A={}",
            u8::from(c.treated),
            u8::from(c.post),
            u8::from(c.group_a)
        )));
    }
    least_squares(&spec.first_stage, lhs, "first stage")
}

pub fn two_stage_ls(spec: &DesignMatrixSpec) -> Result<IvFit> {
    let pi = first_stage(spec)?;
    let fitted = &spec.first_stage * &pi;
    let n = spec.rows.len();
    let mut x_hat = DMatrix::zeros(n, 8);
    x_hat.columns_mut(0, 7).copy_from(&spec.included);
    x_hat.set_column(7, &fitted);
    let beta = least_squares(&x_hat, &spec.y, "second stage (fitted treatment collinear with the included indicators)")?;

    let mut x = x_hat;
    x.set_column(7, &spec.d);
    let structural = &spec.y - &x * &beta;
    let first_resid = &spec.d - &fitted;
    Ok(IvFit {
        beta_iv: beta[7],
        beta: beta.iter().copied().collect(),
        pi: pi.iter().copied().collect(),
        first_stage_residual_norm: first_resid.norm(),
        structural_residual_norm: structural.norm(),
        fitted_d: fitted.iter().copied().collect(),
    })
}
