//! Ground-truth causal parameters computed from a latent table.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::panel::{Cohort, Mode};

use super::latent::LatentTable;

/// A complier-weighted causal response at one `(c, l)`.
///
/// `weights[j-1]` is `Pr(D^E ≥ j > D∞ | C = c, A = 1)` normalised over `j`;
/// `step_effects[j-1]` is `E[Y(j) - Y(j-1) | D^E ≥ j > D∞, C = c, A = 1]`
/// (zero where the weight is zero). For binary treatment this is the
/// CLATT / LATET.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalResponse {
    pub value: f64,
    pub weights: Vec<f64>,
    pub step_effects: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub mode: Mode,
    pub max_treatment: u32,
    /// Two-period binary designs only.
    pub latet: Option<f64>,
    /// Binary designs only; keyed `(c, l)`. Two-period designs use `(1, 0)`.
    pub clatt: BTreeMap<(u32, u32), f64>,
    /// Two-period designs only.
    pub acrt: Option<CausalResponse>,
    pub cacrt: BTreeMap<(u32, u32), CausalResponse>,
    /// `Pr(D^E_{c+l} > D∞_{c+l} | C = c, A = 1)`.
    pub complier_shares: BTreeMap<(u32, u32), f64>,
}

impl OracleReport {
    /// The parameter the triple Wald-DID ratio identifies at `(c, l)`:
    /// CLATT for binary treatment, CACRT for ordered treatment.
    pub fn target(&self, cohort: u32, rel_period: u32) -> Option<f64> {
        self.cacrt.get(&(cohort, rel_period)).map(|r| r.value)
    }
}

/// Enumerates every `(c, l)` with `c + l` inside the panel, keyed as in
/// [`OracleReport`].
pub(crate) fn exposure_targets(table: &LatentTable) -> Vec<(Cohort, u32, u32, usize)> {
    let last = *table.periods.last().expect("non-empty periods");
    let mut cohorts: Vec<Cohort> = table.units.iter().map(|u| u.cohort).collect();
    cohorts.sort();
    cohorts.dedup();
    let mut out = Vec::new();
    for c in cohorts {
        let Some(e) = crate::panel::exposure_date(table.mode, c) else { continue };
        let key = c.finite().expect("exposed cohorts are finite");
        for t in e..=last {
            let k = table.period_index(t).expect("period in table");
            out.push((c, key, (t - e) as u32, k));
        }
    }
    out
}

pub fn compute_oracle(table: &LatentTable) -> Result<OracleReport> {
    let j = table.j();
    let mut clatt = BTreeMap::new();
    let mut cacrt = BTreeMap::new();
    let mut complier_shares = BTreeMap::new();

    for (cohort, c, l, k) in exposure_targets(table) {
        let mut total = CompensatedSum::new();
        let mut compliers = CompensatedSum::new();
        let mut mass = vec![CompensatedSum::new(); j];
        let mut effect = vec![CompensatedSum::new(); j];
        for u in table.units.iter().filter(|u| u.cohort == cohort && u.group_a) {
            total.add(u.weight);
            let (x, n) = (u.d_exposed[k], u.d_never[k]);
            if x > n {
                compliers.add(u.weight);
                for s in n..x {
                    mass[s as usize].add(u.weight);
                    effect[s as usize].add(u.weight * u.effects[k * j + s as usize]);
                }
            }
        }
        let total = total.value();
        if total <= 0.0 {
            continue;
        }
        complier_shares.insert((c, l), compliers.value() / total);
        let mass: Vec<f64> = mass.iter().map(|m| m.value()).collect();
        let all: f64 = mass.iter().sum();
        if all <= 0.0 {
            continue;
        }
        let effect: Vec<f64> = effect.iter().map(|e| e.value()).collect();
        let step_effects = mass.iter().zip(&effect).map(|(&m, &e)| if m > 0.0 { e / m } else { 0.0 }).collect();
        let value = effect.iter().copied().collect::<CompensatedSum>().value() / all;
        if j == 1 {
            clatt.insert((c, l), value);
        }
        cacrt.insert((c, l), CausalResponse { value, weights: mass.iter().map(|m| m / all).collect(), step_effects });
    }

    let (latet, acrt) = match table.mode {
        Mode::TwoPeriod => {
            let Some(r) = cacrt.get(&(1, 0)) else {
                return Err(Error::NoCompliers("cohort 1, group A=1 at t=1".into()));
            };
            ((j == 1).then_some(r.value), Some(r.clone()))
        }
        Mode::Staggered => {
            if cacrt.is_empty() {
                return Err(Error::NoCompliers("every exposed cohort and relative period".into()));
            }
            (None, None)
        }
    };
    Ok(OracleReport { mode: table.mode, max_treatment: table.max_treatment, latet, clatt, acrt, cacrt, complier_shares })
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode = {}", self.mode)?;
        writeln!(f, "max_treatment = {}", self.max_treatment)?;
        if let Some(v) = self.latet {
            writeln!(f, "latet = {v:?}")?;
        }
        if let Some(r) = &self.acrt {
            writeln!(f, "acrt = {:?}", r.value)?;
            writeln!(f, "acrt.weights = {}", join(&r.weights))?;
        }
        for (&(c, l), r) in &self.cacrt {
            let name = if self.max_treatment == 1 { "clatt" } else { "cacrt" };
            write!(f, "{name} c={c} l={l} value={:?} complier_share={:?}", r.value, self.complier_shares[&(c, l)])?;
            if self.max_treatment > 1 {
                write!(f, " weights={} step_effects={}", join(&r.weights), join(&r.step_effects))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}
