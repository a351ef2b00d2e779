//! Repeated-sampling study of the estimators against exact oracles.
//!
//! Replicate `r` draws from ChaCha8 stream `(seed, r)`, so every replicate
//! is reproducible on its own and the summary does not depend on thread
//! scheduling.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimand::{plain_wald, triple_wald_did, Contrast, EstimatorConfig};
use crate::inference::with_influence_inference;
use crate::numeric::{mean, sample_sd};
use crate::panel::{Cohort, Mode};
use crate::staggered::{staggered_triple_wald, ControlPolicy, StaggeredTarget};

use super::latent::{enumerate_population, generate_with, replicate_rng, table_ddd, table_plain_wald};
use super::oracle::{compute_oracle, OracleReport};
use super::spec::DgpSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub n_units: usize,
    pub reps: usize,
    pub seed: u64,
    pub ci_level: f64,
    /// Two-period designs: also run the plain Wald-DID within `A = 1`.
    pub include_plain: bool,
    /// Staggered designs: control policies to run (skipped if unavailable).
    pub policies: Vec<ControlPolicy>,
}

impl McConfig {
    pub fn new(n_units: usize, reps: usize, seed: u64) -> Self {
        Self {
            n_units,
            reps,
            seed,
            ci_level: 0.95,
            include_plain: true,
            policies: vec![ControlPolicy::NeverExposed, ControlPolicy::LastExposed],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McEstimator {
    Triple,
    Plain,
    Staggered(StaggeredTarget),
}

impl fmt::Display for McEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            McEstimator::Triple => f.write_str("triple"),
            McEstimator::Plain => f.write_str("plain"),
            McEstimator::Staggered(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McRow {
    pub estimator: McEstimator,
    /// The causal parameter the estimator targets.
    pub oracle: f64,
    /// Population value of the estimand (differs from `oracle` when an
    /// identifying assumption fails).
    pub plim: f64,
    pub n_ok: usize,
    pub failures: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    pub empirical_sd: f64,
    /// `empirical_sd / sqrt(n_ok)`.
    pub se_of_mean: f64,
    /// NaN for estimators without an influence-function SE.
    pub mean_se: f64,
    pub coverage: f64,
    pub mean_denominator: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub mode: Mode,
    pub config: McConfig,
    pub oracle: OracleReport,
    pub rows: Vec<McRow>,
}

impl MonteCarloSummary {
    pub fn row(&self, estimator: &McEstimator) -> Option<&McRow> {
        self.rows.iter().find(|r| &r.estimator == estimator)
    }
}

struct Planned {
    estimator: McEstimator,
    contrast: Contrast,
    oracle: f64,
    plim: f64,
}

fn plan(spec: &DgpSpec, config: &McConfig, oracle: &OracleReport) -> Result<Vec<Planned>> {
    let population = enumerate_population(spec, 1)?;
    let ratio = |c: &Contrast| -> Result<f64> {
        let (y, d) = table_ddd(&population, c)?;
        Ok(y / d)
    };
    let mut out = Vec::new();
    match spec.mode {
        Mode::TwoPeriod => {
            let contrast = Contrast::TWO_PERIOD;
            let target = oracle.target(1, 0).ok_or_else(|| Error::NoCompliers("cohort 1, group A=1".into()))?;
            out.push(Planned { estimator: McEstimator::Triple, contrast, oracle: target, plim: ratio(&contrast)? });
            if config.include_plain {
                let plim = table_plain_wald(&population, &contrast, true)?;
                out.push(Planned { estimator: McEstimator::Plain, contrast, oracle: target, plim });
            }
        }
        Mode::Staggered => {
            let last = i64::from(spec.periods.unwrap_or(0));
            let mut finite: Vec<u32> = spec.active_cohorts().filter_map(|c| c.cohort.finite()).collect();
            finite.sort_unstable();
            for &policy in &config.policies {
                let (control, max_post) = match policy {
                    ControlPolicy::NeverExposed if spec.has_cohort(Cohort::Never) => (Cohort::Never, last),
                    ControlPolicy::LastExposed if finite.len() >= 2 => {
                        let m = *finite.last().expect("two cohorts");
                        (Cohort::Finite(m), i64::from(m) - 1)
                    }
                    _ => continue,
                };
                for &c in &finite {
                    for post in i64::from(c)..=max_post {
                        let l = (post - i64::from(c)) as u32;
                        let target = StaggeredTarget { cohort: c, rel_period: l, control: policy, control_cohort: control };
                        let Some(value) = oracle.target(c, l) else { continue };
                        let contrast = target.contrast();
                        let (_, d) = table_ddd(&population, &contrast)?;
                        if d <= 0.0 {
                            continue;
                        }
                        out.push(Planned { estimator: McEstimator::Staggered(target), contrast, oracle: value, plim: ratio(&contrast)? });
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidSpec("the design has no estimable target".into()));
    }
    Ok(out)
}

/// `(estimate, se, denominator)` for one replicate.
type Draw = Option<(f64, f64, f64)>;

fn run_rep(spec: &DgpSpec, config: &McConfig, planned: &[Planned], rep: usize) -> Result<Vec<Draw>> {
    let (ds, _) = generate_with(spec, config.n_units, &mut replicate_rng(config.seed, rep as u64))?;
    let est = EstimatorConfig::default();
    Ok(planned
        .iter()
        .map(|p| {
            let wald = match p.estimator {
                McEstimator::Triple => triple_wald_did(&ds),
                McEstimator::Plain => {
                    return plain_wald(&ds, &p.contrast, true, &est).ok().map(|w| (w, f64::NAN, f64::NAN));
                }
                McEstimator::Staggered(t) => staggered_triple_wald(&ds, &t).map(|s| s.wald),
            };
            let w = with_influence_inference(&ds, wald.ok()?, config.ci_level).ok()?;
            Some((w.estimate, w.se().unwrap_or(f64::NAN), w.denominator))
        })
        .collect())
}

pub fn run_monte_carlo(spec: &DgpSpec, config: &McConfig) -> Result<MonteCarloSummary> {
    if config.reps < 2 {
        return Err(Error::InvalidArgument(format!("Monte Carlo needs at least 2 replications, got {}", config.reps)));
    }
    if config.n_units == 0 {
        return Err(Error::InvalidArgument("n_units must be at least 1".into()));
    }
    if !(config.ci_level > 0.0 && config.ci_level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level must lie in (0, 1), got {}", config.ci_level)));
    }
    spec.validate()?;
    let oracle = compute_oracle(&enumerate_population(spec, 1)?)?;
    let planned = plan(spec, config, &oracle)?;
    let z = crate::numeric::normal_critical_value(config.ci_level);

    let draws: Vec<Vec<Draw>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_rep(spec, config, &planned, rep))
        .collect::<Result<_>>()?;

    let rows = planned
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let ok: Vec<(f64, f64, f64)> = draws.iter().filter_map(|d| d[i]).collect();
            let est: Vec<f64> = ok.iter().map(|d| d.0).collect();
            let ses: Vec<f64> = ok.iter().map(|d| d.1).collect();
            let dens: Vec<f64> = ok.iter().map(|d| d.2).collect();
            let sd = sample_sd(&est);
            let covered = ok.iter().filter(|d| (d.0 - p.oracle).abs() <= z * d.1).count();
            let has_se = ses.iter().all(|s| s.is_finite());
            let m = mean(&est);
            McRow {
                estimator: p.estimator,
                oracle: p.oracle,
                plim: p.plim,
                n_ok: ok.len(),
                failures: config.reps - ok.len(),
                mean_estimate: m,
                bias: m - p.oracle,
                empirical_sd: sd,
                se_of_mean: sd / (ok.len() as f64).sqrt(),
                mean_se: if has_se { mean(&ses) } else { f64::NAN },
                coverage: if has_se && !ok.is_empty() { covered as f64 / ok.len() as f64 } else { f64::NAN },
                mean_denominator: mean(&dens),
            }
        })
        .collect();
    Ok(MonteCarloSummary { mode: spec.mode, config: config.clone(), oracle, rows })
}

impl fmt::Display for MonteCarloSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "# mode={} n_units={} reps={} seed={} ci_level={}",
            self.mode, c.n_units, c.reps, c.seed, c.ci_level
        )?;
        writeln!(
            f,
            "{:<28} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8} {:>10} {:>6}",
            "estimator", "oracle", "plim", "mean", "bias", "emp_sd", "se_mean", "mean_se", "cover", "mean_den", "fail"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<28} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>8.4} {:>10.5} {:>6}",
                r.estimator.to_string(),
                r.oracle,
                r.plim,
                r.mean_estimate,
                r.bias,
                r.empirical_sd,
                r.se_of_mean,
                r.mean_se,
                r.coverage,
                r.mean_denominator,
                r.failures
            )?;
        }
        Ok(())
    }
}
