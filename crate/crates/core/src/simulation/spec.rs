//! Data-generating process specification.
//!
//! Every unit carries four persistent uniforms:
//!
//! * `U` sets the never-exposed treatment path:
//!   `D∞_t = #{j : U < π_j(c, a, t)}` with
//!   `π_j(c, a, t) = baseline_j + Σ uptake trend terms`.
//! * `R` selects compliers: an exposed unit with `D∞_t < J` complies at
//!   relative period `l` iff `R < κ(c, l)`. `κ` is non-decreasing in `l`, so a
//!   unit that complies at `t` still complies at `t + 1`. `R` also enters the
//!   unit effect (confounding) and the treatment effect (selection on gains).
//! * `S` selects defiers: `S < defier_share` with `D∞_t > 0` moves down one
//!   level once exposed.
//! * `Q` picks the size of a complier's step up.
//!
//! Trend terms are keyed by cohort, group, both or neither. Terms keyed by
//! both cohort and group are the ones that break common acceleration.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::panel::{exposure_date, Cohort, Mode};

pub const MAX_ORDERED_LEVELS: u32 = 10;
pub const SPEC_VERSION: u32 = 1;

/// Accepts `2`, `"2"`, `"inf"` or `""` for a cohort.
mod cohort_key {
    use serde::{de, Deserialize, Deserializer};

    use crate::panel::Cohort;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Str(String),
    }

    fn convert<E: de::Error>(raw: Raw) -> Result<Cohort, E> {
        match raw {
            Raw::Int(c) => u32::try_from(c)
                .map(Cohort::Finite)
                .map_err(|_| E::custom(format!("cohort must be non-negative, got {c}"))),
            Raw::Str(s) => s.parse().map_err(E::custom),
        }
    }

    pub fn required<'de, D: Deserializer<'de>>(d: D) -> Result<Cohort, D::Error> {
        convert(Raw::deserialize(d)?)
    }

    pub fn optional<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Cohort>, D::Error> {
        Option::<Raw>::deserialize(d)?.map(convert).transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    #[serde(deserialize_with = "cohort_key::required")]
    pub cohort: Cohort,
    pub share: f64,
    #[serde(default = "half")]
    pub group_a_share: f64,
}

/// An additive term over periods, restricted to one cohort and/or group.
/// Either `values` (one per period) or `slope` (value `slope * t`).
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendTerm {
    #[serde(default, deserialize_with = "cohort_key::optional")]
    pub cohort: Option<Cohort>,
    #[serde(default)]
    pub group_a: Option<u8>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub slope: Option<f64>,
}

impl TrendTerm {
    fn applies(&self, cohort: Cohort, group_a: bool) -> bool {
        self.cohort.is_none_or(|c| c == cohort) && self.group_a.is_none_or(|a| (a == 1) == group_a)
    }

    fn value(&self, k: usize, t: i64) -> f64 {
        match (&self.values, self.slope) {
            (Some(v), _) => v[k],
            (None, Some(s)) => s * t as f64,
            (None, None) => 0.0,
        }
    }

    /// Keyed by both cohort and group: a `h(c, a, t)` term.
    pub fn is_interaction(&self) -> bool {
        self.cohort.is_some() && self.group_a.is_some()
    }
}

fn sum_terms(terms: &[TrendTerm], cohort: Cohort, group_a: bool, k: usize, t: i64) -> f64 {
    terms.iter().filter(|x| x.applies(cohort, group_a)).map(|x| x.value(k, t)).sum()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortRates {
    #[serde(deserialize_with = "cohort_key::required")]
    pub cohort: Cohort,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreatmentSpec {
    /// `π_j` before trends, `j = 1..=J`; non-increasing. Zeros when absent.
    pub baseline: Option<Vec<f64>>,
    pub uptake_trend: Vec<TrendTerm>,
    /// `κ(l)` for `l = 0, 1, ...`; the last value carries forward.
    pub complier_rates: Vec<f64>,
    pub cohort_complier_rates: Vec<CohortRates>,
    pub defier_share: f64,
    /// Probabilities of stepping up `1..=J` levels. All mass on 1 when absent.
    pub step_probs: Option<Vec<f64>>,
    /// Periods of first-stage response before exposure.
    pub anticipation: u32,
    /// Anticipating units are those with `R < anticipation_share * κ(c, 0)`.
    pub anticipation_share: f64,
}

impl Default for TreatmentSpec {
    fn default() -> Self {
        Self {
            baseline: None,
            uptake_trend: Vec::new(),
            complier_rates: vec![0.5],
            cohort_complier_rates: Vec::new(),
            defier_share: 0.0,
            step_probs: None,
            anticipation: 0,
            anticipation_share: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutcomeSpec {
    /// `λ_t`, one per period. Zeros when absent.
    pub period_effects: Option<Vec<f64>>,
    pub unit_sd: f64,
    /// Unit effect shifts by `confounding * (0.5 - R)`.
    pub confounding: f64,
    pub noise_sd: f64,
    pub trend: Vec<TrendTerm>,
}

impl Default for OutcomeSpec {
    fn default() -> Self {
        Self { period_effects: None, unit_sd: 1.0, confounding: 0.0, noise_sd: 1.0, trend: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EffectSpec {
    pub mean: f64,
    pub sd: f64,
    /// Effect shifts by `selection * (0.5 - R)`: selection on gains.
    pub selection: f64,
    /// Effect grows by `time_slope` per calendar period.
    pub time_slope: f64,
    /// Multiplier per treatment step `j = 1..=J`. Ones when absent.
    pub step_scale: Option<Vec<f64>>,
}

impl Default for EffectSpec {
    fn default() -> Self {
        Self { mean: 1.0, sd: 0.0, selection: 0.0, time_slope: 0.0, step_scale: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub version: u32,
    pub mode: Mode,
    /// `T` for staggered designs; two-period designs always use `{0, 1}`.
    #[serde(default)]
    pub periods: Option<u32>,
    #[serde(default = "one")]
    pub max_treatment: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    pub cohorts: Vec<CohortSpec>,
    #[serde(default)]
    pub treatment: TreatmentSpec,
    #[serde(default)]
    pub outcome: OutcomeSpec,
    #[serde(default)]
    pub effect: EffectSpec,
}

fn half() -> f64 {
    0.5
}

fn one() -> u32 {
    1
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidSpec(msg.into()))
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        invalid(format!("{name} must lie in [0, 1], got {p}"))
    }
}

fn check_prob_vector(name: &str, v: &[f64]) -> Result<()> {
    for &p in v {
        check_prob(name, p)?;
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return invalid(format!("{name} must sum to 1, sums to {total}"));
    }
    Ok(())
}

const TOL: f64 = 1e-12;

impl DgpSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: DgpSpec = toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Period labels: `[0, 1]` or `[1, ..., T]`.
    pub fn period_labels(&self) -> Vec<i64> {
        match self.mode {
            Mode::TwoPeriod => vec![0, 1],
            Mode::Staggered => (1..=i64::from(self.periods.unwrap_or(0))).collect(),
        }
    }

    pub fn n_periods(&self) -> usize {
        self.period_labels().len()
    }

    pub fn exposure(&self, cohort: Cohort) -> Option<i64> {
        exposure_date(self.mode, cohort)
    }

    /// Cohorts with positive share, in specification order.
    pub fn active_cohorts(&self) -> impl Iterator<Item = &CohortSpec> {
        self.cohorts.iter().filter(|c| c.share > 0.0)
    }

    pub fn has_cohort(&self, cohort: Cohort) -> bool {
        self.active_cohorts().any(|c| c.cohort == cohort)
    }

    pub(crate) fn j(&self) -> usize {
        self.max_treatment as usize
    }

    /// `π_j(c, a, t)` for `j = 1..=J` (index `j - 1`).
    pub(crate) fn uptake(&self, cohort: Cohort, group_a: bool, k: usize, t: i64, j: usize) -> f64 {
        let base = self.treatment.baseline.as_ref().map_or(0.0, |b| b[j]);
        base + sum_terms(&self.treatment.uptake_trend, cohort, group_a, k, t)
    }

    /// `κ(c, l)`.
    pub(crate) fn complier_rate(&self, cohort: Cohort, l: usize) -> f64 {
        let rates = self
            .treatment
            .cohort_complier_rates
            .iter()
            .find(|r| r.cohort == cohort)
            .map_or(&self.treatment.complier_rates, |r| &r.rates);
        rates[l.min(rates.len() - 1)]
    }

    pub(crate) fn anticipation_rate(&self, cohort: Cohort) -> f64 {
        self.treatment.anticipation_share * self.complier_rate(cohort, 0)
    }

    /// Mean untreated outcome at period index `k`, before the unit effect.
    pub(crate) fn untreated_mean(&self, cohort: Cohort, group_a: bool, k: usize, t: i64) -> f64 {
        let lambda = self.outcome.period_effects.as_ref().map_or(0.0, |v| v[k]);
        lambda + sum_terms(&self.outcome.trend, cohort, group_a, k, t)
    }

    pub(crate) fn step_scale(&self, j: usize) -> f64 {
        self.effect.step_scale.as_ref().map_or(1.0, |v| v[j])
    }

    /// Cumulative step probabilities, ending at 1.
    pub(crate) fn step_cdf(&self) -> Vec<f64> {
        let j = self.j();
        let mut out = Vec::with_capacity(j);
        let mut acc = 0.0;
        for s in 0..j {
            acc += self.treatment.step_probs.as_ref().map_or(if s == 0 { 1.0 } else { 0.0 }, |p| p[s]);
            out.push(acc);
        }
        *out.last_mut().expect("J >= 1") = 1.0;
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SPEC_VERSION {
            return invalid(format!("unsupported spec version {} (expected {SPEC_VERSION})", self.version));
        }
        match (self.mode, self.periods) {
            (Mode::TwoPeriod, None | Some(2)) => {}
            (Mode::TwoPeriod, Some(t)) => return invalid(format!("two-period designs have 2 periods, got {t}")),
            (Mode::Staggered, Some(t)) if t >= 2 => {}
            (Mode::Staggered, _) => return invalid("staggered designs need `periods` >= 2"),
        }
        if !(1..=MAX_ORDERED_LEVELS).contains(&self.max_treatment) {
            return invalid(format!(
                "max_treatment must lie in 1..={MAX_ORDERED_LEVELS}, got {}",
                self.max_treatment
            ));
        }
        let n_periods = self.n_periods();
        let last = *self.period_labels().last().expect("periods");
        let j = self.j();

        if self.cohorts.is_empty() {
            return invalid("at least one cohort is required");
        }
        let mut seen = Vec::new();
        for c in &self.cohorts {
            let ok = match (self.mode, c.cohort) {
                (Mode::TwoPeriod, Cohort::Finite(0 | 1)) => true,
                (Mode::Staggered, Cohort::Never) => true,
                (Mode::Staggered, Cohort::Finite(v)) => v >= 2 && i64::from(v) <= last,
                _ => false,
            };
            if !ok {
                return invalid(format!("cohort {} is not valid for {} designs with {n_periods} periods", c.cohort, self.mode));
            }
            if seen.contains(&c.cohort) {
                return invalid(format!("cohort {} listed twice", c.cohort));
            }
            seen.push(c.cohort);
            check_prob("cohort group_a_share", c.group_a_share)?;
        }
        check_prob_vector("cohort shares", &self.cohorts.iter().map(|c| c.share).collect::<Vec<_>>())?;

        let tr = &self.treatment;
        if let Some(b) = &tr.baseline {
            if b.len() != j {
                return invalid(format!("treatment.baseline needs {j} values, got {}", b.len()));
            }
        }
        let check_terms = |name: &str, terms: &[TrendTerm]| -> Result<()> {
            for term in terms {
                match (&term.values, term.slope) {
                    (Some(v), None) if v.len() == n_periods => {}
                    (Some(v), None) => {
                        return invalid(format!("{name} values need {n_periods} entries, got {}", v.len()))
                    }
                    (None, Some(_)) => {}
                    _ => return invalid(format!("{name} needs exactly one of `values` or `slope`")),
                }
                if term.group_a.is_some_and(|a| a > 1) {
                    return invalid(format!("{name} group_a must be 0 or 1"));
                }
                if let Some(c) = term.cohort {
                    if !seen.contains(&c) {
                        return invalid(format!("{name} refers to unknown cohort {c}"));
                    }
                }
            }
            Ok(())
        };
        check_terms("treatment.uptake_trend", &tr.uptake_trend)?;
        check_terms("outcome.trend", &self.outcome.trend)?;

        let labels = self.period_labels();
        for c in &self.cohorts {
            for a in [false, true] {
                for (k, &t) in labels.iter().enumerate() {
                    let mut prev = 1.0;
                    for jj in 0..j {
                        let p = self.uptake(c.cohort, a, k, t, jj);
                        if !(-TOL..=1.0 + TOL).contains(&p) {
                            return invalid(format!(
                                "uptake probability for level {} is {p} (cohort {}, A={}, period index {k}); must lie in [0, 1]",
                                jj + 1,
                                c.cohort,
                                u8::from(a)
                            ));
                        }
                        if p > prev + TOL {
                            return invalid(format!(
                                "uptake probabilities must be non-increasing in the level (cohort {}, A={}, period index {k})",
                                c.cohort,
                                u8::from(a)
                            ));
                        }
                        prev = p;
                    }
                }
            }
        }

        let check_rates = |name: String, rates: &[f64]| -> Result<()> {
            if rates.is_empty() {
                return invalid(format!("{name} must not be empty"));
            }
            for &r in rates {
                check_prob(&name, r)?;
            }
            if rates.windows(2).any(|w| w[1] < w[0]) {
                return invalid(format!("{name} must be non-decreasing in the relative period"));
            }
            Ok(())
        };
        check_rates("treatment.complier_rates".into(), &tr.complier_rates)?;
        for r in &tr.cohort_complier_rates {
            if !seen.contains(&r.cohort) {
                return invalid(format!("treatment.cohort_complier_rates refers to unknown cohort {}", r.cohort));
            }
            check_rates(format!("complier rates for cohort {}", r.cohort), &r.rates)?;
        }
        check_prob("treatment.defier_share", tr.defier_share)?;
        check_prob("treatment.anticipation_share", tr.anticipation_share)?;
        if i64::from(tr.anticipation) >= n_periods as i64 {
            return invalid(format!("treatment.anticipation must be below the number of periods ({n_periods})"));
        }
        if let Some(p) = &tr.step_probs {
            if p.len() != j {
                return invalid(format!("treatment.step_probs needs {j} values, got {}", p.len()));
            }
            check_prob_vector("treatment.step_probs", p)?;
        }

        let out = &self.outcome;
        if let Some(v) = &out.period_effects {
            if v.len() != n_periods {
                return invalid(format!("outcome.period_effects needs {n_periods} values, got {}", v.len()));
            }
        }
        let finite = [out.unit_sd, out.confounding, out.noise_sd, self.effect.mean, self.effect.sd, self.effect.selection, self.effect.time_slope];
        if finite.iter().any(|x| !x.is_finite()) {
            return invalid("outcome and effect parameters must be finite");
        }
        if out.unit_sd < 0.0 || out.noise_sd < 0.0 || self.effect.sd < 0.0 {
            return invalid("standard deviations must be non-negative");
        }
        if let Some(s) = &self.effect.step_scale {
            if s.len() != j {
                return invalid(format!("effect.step_scale needs {j} values, got {}", s.len()));
            }
        }
        Ok(())
    }
}
