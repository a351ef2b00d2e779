//! Influence-function standard errors and a unit bootstrap cross-check.
//!
//! For a contrast with ratio estimate `w`, each contributing unit gets
//! `delta_i = dY_i - w * dD_i`. Within its cell `(c, a)` the unit's
//! deviation from the cell mean of `delta` is scaled by the cell's sample
//! share `p_ca`, signed as in the DDD contrast and divided by the DDD of
//! `D`. The variance of these values over `n` gives the asymptotic
//! variance of the ratio estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimand::{
    unit_diffs, wald_from_diffs, Contrast, EstimatorConfig, TripleWaldEstimate, UnitDiff, CELL_SIGNS,
};
use crate::numeric::{centered, normal_critical_value, sample_sd};
use crate::panel::{Mode, PanelDataset};
use crate::staggered::{StaggeredEstimate, StaggeredTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceEstimator {
    InfluenceFunction,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceResult {
    pub se: f64,
    pub ci_level: f64,
    pub ci: (f64, f64),
    pub variance_estimator: VarianceEstimator,
    pub n: usize,
    /// Zero dispersion: the standard error carries no information.
    pub degenerate: bool,
    /// Bootstrap draws rejected because a cell emptied or the first stage vanished.
    pub rejected_draws: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceVector {
    pub contrast: Contrast,
    /// Point estimate the values linearise around.
    pub estimate: f64,
    /// Indices into [`PanelDataset::units`] of the contributing units.
    pub units: Vec<usize>,
    pub values: Vec<f64>,
}

impl InfluenceVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Influence values for a ratio estimate computed from `diffs`.
pub fn influence_from_diffs(diffs: &[UnitDiff], estimate: &TripleWaldEstimate) -> Result<InfluenceVector> {
    let den = estimate.denominator;
    if den == 0.0 || !den.is_finite() {
        return Err(Error::ZeroDenominator);
    }
    let w = estimate.estimate;
    let n = diffs.len() as f64;
    let mut slots: [Vec<usize>; 4] = Default::default();
    for (k, d) in diffs.iter().enumerate() {
        slots[d.cell_slot()].push(k);
    }
    let mut values = vec![0.0; diffs.len()];
    for (slot, members) in slots.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let delta: Vec<f64> = members.iter().map(|&k| diffs[k].dy - w * diffs[k].dd).collect();
        let share = members.len() as f64 / n;
        for (&k, dev) in members.iter().zip(centered(&delta)) {
            values[k] = CELL_SIGNS[slot] * (dev / share) / den;
        }
    }
    Ok(InfluenceVector {
        contrast: estimate.contrast,
        estimate: w,
        units: diffs.iter().map(|d| d.unit).collect(),
        values,
    })
}

pub fn influence_two_period(dataset: &PanelDataset, estimate: &TripleWaldEstimate) -> Result<InfluenceVector> {
    dataset.require_mode(Mode::TwoPeriod)?;
    influence_from_diffs(&unit_diffs(dataset, &estimate.contrast)?, estimate)
}

pub fn influence_staggered(dataset: &PanelDataset, estimate: &StaggeredEstimate) -> Result<InfluenceVector> {
    dataset.require_mode(Mode::Staggered)?;
    influence_from_diffs(&unit_diffs(dataset, &estimate.wald.contrast)?, &estimate.wald)
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("confidence level must lie in (0, 1), got {level}")))
    }
}

/// `se = sd(psi) / sqrt(n)` and a normal confidence interval.
pub fn se_and_ci(iv: &InfluenceVector, level: f64) -> Result<InferenceResult> {
    check_level(level)?;
    let n = iv.len();
    if n < 2 {
        return Err(Error::DegenerateSample(format!("{n} contributing units")));
    }
    let se = sample_sd(&iv.values) / (n as f64).sqrt();
    let z = normal_critical_value(level);
    Ok(InferenceResult {
        se,
        ci_level: level,
        ci: (iv.estimate - z * se, iv.estimate + z * se),
        variance_estimator: VarianceEstimator::InfluenceFunction,
        n,
        degenerate: se == 0.0,
        rejected_draws: 0,
    })
}

/// Attaches influence-function inference to an estimate computed on `dataset`.
pub fn with_influence_inference(
    dataset: &PanelDataset,
    mut estimate: TripleWaldEstimate,
    level: f64,
) -> Result<TripleWaldEstimate> {
    let iv = influence_from_diffs(&unit_diffs(dataset, &estimate.contrast)?, &estimate)?;
    estimate.inference = Some(se_and_ci(&iv, level)?);
    Ok(estimate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EstimatorSpec {
    TwoPeriod,
    Staggered(StaggeredTarget),
}

impl EstimatorSpec {
    pub fn contrast(&self) -> Contrast {
        match self {
            EstimatorSpec::TwoPeriod => Contrast::TWO_PERIOD,
            EstimatorSpec::Staggered(t) => t.contrast(),
        }
    }
}

pub const MIN_BOOTSTRAP_REPS: usize = 100;

/// Whole-unit nonparametric bootstrap of the ratio estimate.
///
/// Replicate `b` draws from its own ChaCha stream `(seed, b)`, so the
/// result does not depend on how replicates are scheduled. Draws that empty
/// a cell or kill the first stage are rejected and redrawn.
pub fn bootstrap_se(
    dataset: &PanelDataset,
    spec: &EstimatorSpec,
    reps: usize,
    seed: u64,
    level: f64,
) -> Result<InferenceResult> {
    if reps < MIN_BOOTSTRAP_REPS {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP_REPS} replicates, got {reps}"
        )));
    }
    check_level(level)?;
    match spec {
        EstimatorSpec::TwoPeriod => dataset.require_mode(Mode::TwoPeriod)?,
        EstimatorSpec::Staggered(_) => dataset.require_mode(Mode::Staggered)?,
    }
    let contrast = spec.contrast();
    let config = EstimatorConfig::default();
    let diffs = unit_diffs(dataset, &contrast)?;
    let point = wald_from_diffs(&diffs, &contrast, &config)?;

    let n_units = dataset.n_units();
    let mut by_unit: Vec<Option<UnitDiff>> = vec![None; n_units];
    for d in &diffs {
        by_unit[d.unit] = Some(*d);
    }
    const MAX_REJECTS_PER_REP: usize = 1000;

    let draws: Vec<Result<(f64, usize)>> = (0..reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut rejected = 0;
            let mut sample = Vec::with_capacity(diffs.len() + 16);
            loop {
                sample.clear();
                for _ in 0..n_units {
                    if let Some(d) = by_unit[rng.random_range(0..n_units)] {
                        sample.push(d);
                    }
                }
                match wald_from_diffs(&sample, &contrast, &config) {
                    Ok(est) => return Ok((est.estimate, rejected)),
                    Err(Error::EmptyCell { .. } | Error::WeakOrZeroFirstStage { .. }) => {
                        rejected += 1;
                        if rejected > MAX_REJECTS_PER_REP {
                            return Err(Error::ResampleDegenerate(format!(
                                "replicate {b} rejected {rejected} consecutive draws"
                            )));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        })
        .collect();

    let mut estimates = Vec::with_capacity(reps);
    let mut rejected_draws = 0;
    for d in draws {
        let (est, rej) = d?;
        estimates.push(est);
        rejected_draws += rej;
    }
    let se = sample_sd(&estimates);
    let z = normal_critical_value(level);
    Ok(InferenceResult {
        se,
        ci_level: level,
        ci: (point.estimate - z * se, point.estimate + z * se),
        variance_estimator: VarianceEstimator::Bootstrap,
        n: diffs.len(),
        degenerate: se == 0.0,
        rejected_draws,
    })
}
