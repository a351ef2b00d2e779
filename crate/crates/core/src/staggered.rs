//! Staggered-adoption targets `(c, l)` and their triple Wald-DID estimates.
//!
//! Each target compares cohort `c` against a control cohort (never exposed,
//! or the last exposed cohort) between the anchor period `c - 1` and the
//! post period `c + l`. Units from any other cohort are ignored.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimand::{contrast_wald, Contrast, EstimatorConfig, TripleWaldEstimate};
use crate::panel::{Cohort, Mode, PanelDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlPolicy {
    NeverExposed,
    LastExposed,
}

impl ControlPolicy {
    pub fn label(self) -> &'static str {
        match self {
            ControlPolicy::NeverExposed => "never",
            ControlPolicy::LastExposed => "last",
        }
    }
}

impl fmt::Display for ControlPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct StaggeredTarget {
    pub cohort: u32,
    pub rel_period: u32,
    pub control: ControlPolicy,
    /// `Never`, or `Finite(max C)` for the last-exposed policy.
    pub control_cohort: Cohort,
}

impl StaggeredTarget {
    pub fn pre_period(&self) -> i64 {
        i64::from(self.cohort) - 1
    }

    pub fn post_period(&self) -> i64 {
        i64::from(self.cohort) + i64::from(self.rel_period)
    }

    pub fn contrast(&self) -> Contrast {
        Contrast {
            treated: Cohort::Finite(self.cohort),
            control: self.control_cohort,
            pre: self.pre_period(),
            post: self.post_period(),
        }
    }
}

impl fmt::Display for StaggeredTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c={} l={} control={}", self.cohort, self.rel_period, self.control)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaggeredEstimate {
    pub target: StaggeredTarget,
    pub wald: TripleWaldEstimate,
}

impl StaggeredEstimate {
    pub fn estimate(&self) -> f64 {
        self.wald.estimate
    }
}

fn control_cohort(dataset: &PanelDataset, policy: ControlPolicy) -> Result<Cohort> {
    let idx = dataset.cohort_index()?;
    match policy {
        ControlPolicy::NeverExposed if idx.has_never && idx.last_exposed.is_some() => Ok(Cohort::Never),
        ControlPolicy::LastExposed if idx.finite_cohorts().count() >= 2 => {
            Ok(Cohort::Finite(idx.last_exposed.expect("at least two finite cohorts")))
        }
        _ => Err(Error::NoControlCohort(policy.label())),
    }
}

/// Every `(c, l)` in the policy's validity window for the cohorts present
/// in the panel, whether or not its cells are populated.
pub fn candidate_targets(dataset: &PanelDataset, policy: ControlPolicy) -> Result<Vec<StaggeredTarget>> {
    dataset.require_mode(Mode::Staggered)?;
    let control = control_cohort(dataset, policy)?;
    let last_period = *dataset.periods().last().expect("non-empty panel");
    let idx = dataset.cohort_index()?;
    let mut out = Vec::new();
    for c in idx.finite_cohorts() {
        let max_post = match control {
            Cohort::Never => last_period,
            Cohort::Finite(m) => i64::from(m) - 1,
        };
        if i64::from(c) > max_post {
            continue;
        }
        for l in 0..=(max_post - i64::from(c)) as u32 {
            out.push(StaggeredTarget { cohort: c, rel_period: l, control: policy, control_cohort: control });
        }
    }
    Ok(out)
}

/// Targets whose four cells are all non-empty, ordered by `c` then `l`.
pub fn enumerate_targets(dataset: &PanelDataset, policy: ControlPolicy) -> Result<Vec<StaggeredTarget>> {
    let counts = dataset.cell_counts();
    let present = |c: Cohort, a: bool| counts.get(&(c, a)).copied().unwrap_or(0) > 0;
    Ok(candidate_targets(dataset, policy)?
        .into_iter()
        .filter(|t| {
            let tc = Cohort::Finite(t.cohort);
            [true, false]
                .iter()
                .all(|&a| present(tc, a) && present(t.control_cohort, a))
        })
        .collect())
}

fn check_target(dataset: &PanelDataset, target: &StaggeredTarget) -> Result<()> {
    let last_period = *dataset.periods().last().expect("non-empty panel");
    let invalid = |why: String| Err(Error::InvalidTarget(format!("{target}: {why}")));
    if target.cohort < 2 {
        return invalid("cohort must be at least 2".into());
    }
    match (target.control, target.control_cohort) {
        (ControlPolicy::NeverExposed, Cohort::Never) => {
            if target.post_period() > last_period {
                return invalid(format!("post period exceeds T = {last_period}"));
            }
        }
        (ControlPolicy::LastExposed, Cohort::Finite(m)) => {
            let idx = dataset.cohort_index()?;
            if idx.last_exposed != Some(m) {
                return invalid(format!("control cohort {m} is not the last exposed cohort"));
            }
            if target.cohort >= m || target.post_period() > i64::from(m) - 1 {
                return invalid(format!("post period must precede the control's exposure at {m}"));
            }
        }
        _ => return invalid("control cohort does not match the policy".into()),
    }
    Ok(())
}

pub fn staggered_triple_wald(dataset: &PanelDataset, target: &StaggeredTarget) -> Result<StaggeredEstimate> {
    staggered_triple_wald_with(dataset, target, &EstimatorConfig::default())
}

pub fn staggered_triple_wald_with(
    dataset: &PanelDataset,
    target: &StaggeredTarget,
    config: &EstimatorConfig,
) -> Result<StaggeredEstimate> {
    dataset.require_mode(Mode::Staggered)?;
    check_target(dataset, target)?;
    let wald = contrast_wald(dataset, &target.contrast(), config)?;
    Ok(StaggeredEstimate { target: *target, wald })
}

#[derive(Debug)]
pub struct TargetOutcome {
    pub target: StaggeredTarget,
    pub result: Result<StaggeredEstimate>,
}

/// Estimates every candidate target. Failures stay attached to their
/// target; the output order does not depend on scheduling.
pub fn estimate_all(
    dataset: &PanelDataset,
    policy: ControlPolicy,
    config: &EstimatorConfig,
) -> Result<Vec<TargetOutcome>> {
    let targets = candidate_targets(dataset, policy)?;
    Ok(targets
        .into_par_iter()
        .map(|target| TargetOutcome {
            target,
            result: staggered_triple_wald_with(dataset, &target, config),
        })
        .collect())
}

/// Convenience summary across targets. Not an identified parameter of the
/// design: just an unweighted mean and a mean weighted by the size of the
/// treated `A = 1` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub n_targets: usize,
    pub unweighted: f64,
    pub cohort_weighted: f64,
}

pub fn aggregate<'a>(estimates: impl IntoIterator<Item = &'a StaggeredEstimate>) -> Option<Aggregate> {
    let (mut n, mut sum, mut wsum, mut w) = (0usize, 0.0, 0.0, 0.0);
    for e in estimates {
        let weight = e.wald.cells.treated_a1.n as f64;
        n += 1;
        sum += e.wald.estimate;
        wsum += weight * e.wald.estimate;
        w += weight;
    }
    (n > 0).then(|| Aggregate { n_targets: n, unweighted: sum / n as f64, cohort_weighted: wsum / w })
}
