//! Checks each implementable identifying assumption on a latent table.
//!
//! Population tables are checked exactly (gaps within `1e-9`); sampled
//! tables allow equality gaps of up to four standard errors.

use std::fmt;

use crate::estimand::Contrast;
use crate::panel::{Cohort, Mode};

use super::latent::{LatentTable, LatentUnit, TableKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Assumption {
    /// `D^E_t >= D∞_t` for every exposed period.
    Monotonicity,
    /// `D^E_t = D∞_t` before exposure.
    NoAnticipation,
    /// Positive population DDD of treatment for every target.
    Relevance,
    /// Equal group-A acceleration of `D∞` across treated and control cohorts.
    CommonAccelerationTreatment,
    /// Equal group-A acceleration of `Y(D∞)` across treated and control cohorts.
    CommonAccelerationOutcome,
}

impl Assumption {
    pub fn label(self) -> &'static str {
        match self {
            Assumption::Monotonicity => "monotonicity",
            Assumption::NoAnticipation => "no_anticipation",
            Assumption::Relevance => "relevance",
            Assumption::CommonAccelerationTreatment => "common_acceleration_treatment",
            Assumption::CommonAccelerationOutcome => "common_acceleration_outcome",
        }
    }
}

/// One evaluated contrast: for the acceleration checks the one-period
/// change ending at `period`, for relevance the target's post period.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditItem {
    pub treated: Cohort,
    pub control: Cohort,
    pub period: i64,
    pub value: f64,
    pub se: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditCheck {
    pub assumption: Assumption,
    pub passed: bool,
    /// Largest violation: a gap, a probability mass, or the smallest
    /// first-stage DDD for relevance.
    pub magnitude: f64,
    /// Violating units (monotonicity, anticipation) or items.
    pub violations: usize,
    pub items: Vec<AuditItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub kind: TableKind,
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn get(&self, assumption: Assumption) -> &AuditCheck {
        self.checks.iter().find(|c| c.assumption == assumption).expect("every assumption is audited")
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<Assumption> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.assumption).collect()
    }
}

const EXACT_TOL: f64 = 1e-9;
const SAMPLED_SE_MULTIPLE: f64 = 4.0;

/// `(treated, control, t)` triples for the acceleration equalities, and
/// the `(treated, control, pre, post)` targets for relevance.
fn contrasts(table: &LatentTable) -> (Vec<(Cohort, Cohort, i64)>, Vec<Contrast>) {
    let present = |c: Cohort| table.units.iter().any(|u| u.cohort == c && u.weight > 0.0);
    match table.mode {
        Mode::TwoPeriod => (vec![(Cohort::Finite(1), Cohort::Finite(0), 1)], vec![Contrast::TWO_PERIOD]),
        Mode::Staggered => {
            let last = *table.periods.last().expect("periods");
            let mut finite: Vec<u32> = table.units.iter().filter_map(|u| u.cohort.finite()).collect();
            finite.sort_unstable();
            finite.dedup();
            let mut steps = Vec::new();
            let mut targets = Vec::new();
            let mut push = |c: u32, ctrl: Cohort, max_t: i64| {
                for t in i64::from(c)..=max_t {
                    steps.push((Cohort::Finite(c), ctrl, t));
                    targets.push(Contrast { treated: Cohort::Finite(c), control: ctrl, pre: i64::from(c) - 1, post: t });
                }
            };
            if present(Cohort::Never) {
                for &c in &finite {
                    push(c, Cohort::Never, last);
                }
            }
            if let Some(&m) = finite.last() {
                for &c in finite.iter().filter(|&&c| c < m) {
                    push(c, Cohort::Finite(m), i64::from(m) - 1);
                }
            }
            (steps, targets)
        }
    }
}

fn unit_check(table: &LatentTable, assumption: Assumption, bad: impl Fn(&LatentUnit, i64, i64) -> bool) -> AuditCheck {
    let (mut violations, mut mass, mut total) = (0usize, 0.0, 0.0);
    for u in &table.units {
        let Some(e) = table.exposure(u) else { continue };
        total += u.weight;
        if table.periods.iter().any(|&t| bad(u, e, t)) {
            violations += 1;
            mass += u.weight;
        }
    }
    AuditCheck {
        assumption,
        passed: violations == 0,
        magnitude: if total > 0.0 { mass / total } else { 0.0 },
        violations,
        items: Vec::new(),
    }
}

fn tolerance(kind: TableKind, se: f64) -> f64 {
    match kind {
        TableKind::Population => EXACT_TOL,
        TableKind::Sampled => (SAMPLED_SE_MULTIPLE * se).max(EXACT_TOL),
    }
}

fn acceleration_check<F>(table: &LatentTable, assumption: Assumption, steps: &[(Cohort, Cohort, i64)], q: F) -> AuditCheck
where
    F: Fn(&LatentUnit, usize) -> f64 + Copy,
{
    let mut items = Vec::new();
    for &(treated, control, t) in steps {
        let contrast = Contrast { treated, control, pre: t - 1, post: t };
        if let Some((value, se)) = table.ddd_of(&contrast, q) {
            let passed = value.abs() <= tolerance(table.kind, se);
            items.push(AuditItem { treated, control, period: t, value, se, passed });
        }
    }
    let violations = items.iter().filter(|i| !i.passed).count();
    AuditCheck {
        assumption,
        passed: violations == 0,
        magnitude: items.iter().map(|i| i.value.abs()).fold(0.0, f64::max),
        violations,
        items,
    }
}

pub fn assumption_audit(table: &LatentTable) -> AuditReport {
    let (steps, targets) = contrasts(table);
    let idx = |u: &LatentUnit, t: i64| table.period_index(t).map(|k| (u.d_exposed[k], u.d_never[k]));

    let monotonicity = unit_check(table, Assumption::Monotonicity, |u, e, t| {
        t >= e && idx(u, t).is_some_and(|(x, n)| x < n)
    });
    let anticipation = unit_check(table, Assumption::NoAnticipation, |u, e, t| {
        t < e && idx(u, t).is_some_and(|(x, n)| x != n)
    });

    let mut items = Vec::new();
    for c in &targets {
        let d = |u: &LatentUnit, k: usize| f64::from(table.observed_treatment(u, k));
        if let Some((value, se)) = table.ddd_of(c, d) {
            items.push(AuditItem { treated: c.treated, control: c.control, period: c.post, value, se, passed: value > 0.0 });
        }
    }
    let violations = items.iter().filter(|i| !i.passed).count();
    let relevance = AuditCheck {
        assumption: Assumption::Relevance,
        passed: !items.is_empty() && violations == 0,
        magnitude: items.iter().map(|i| i.value).fold(f64::INFINITY, f64::min),
        violations,
        items,
    };

    let ca_d = acceleration_check(table, Assumption::CommonAccelerationTreatment, &steps, |u, k| {
        f64::from(u.d_never[k])
    });
    let ca_y = acceleration_check(table, Assumption::CommonAccelerationOutcome, &steps, |u, k| {
        table.outcome(u, k, u.d_never[k])
    });

    AuditReport { kind: table.kind, checks: vec![monotonicity, anticipation, relevance, ca_d, ca_y] }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<30} {} magnitude={:e} violations={}",
                c.assumption.label(),
                if c.passed { "PASS" } else { "FAIL" },
                c.magnitude,
                c.violations
            )?;
        }
        Ok(())
    }
}
