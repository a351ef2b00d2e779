//! Latent potential-treatment / potential-outcome tables.
//!
//! A sampled table holds one row per drawn unit. A population table is an
//! exact weighted enumeration of the latent space: every uniform is cut at
//! each threshold it is compared against, noise is integrated out, and each
//! row's weight is the probability mass of its stratum. Because outcomes
//! and effects are affine in the remaining draw `R`, evaluating a stratum at
//! its midpoint gives exact conditional means, so population contrasts
//! carry no sampling error at all.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimand::Contrast;
use crate::numeric::CompensatedSum;
use crate::panel::{design_instrument, exposure_date, Cohort, Mode, PanelDataset, Unit};

use super::spec::DgpSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Sampled,
    Population,
}

/// One unit's potential objects. Period vectors are indexed by position in
/// [`LatentTable::periods`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatentUnit {
    pub cohort: Cohort,
    pub group_a: bool,
    pub weight: f64,
    /// `Y_t(0)`.
    pub untreated: Vec<f64>,
    /// `Y_t(j) - Y_t(j - 1)` at `[k * J + (j - 1)]`.
    pub effects: Vec<f64>,
    /// `D∞_t`.
    pub d_never: Vec<u32>,
    /// `D^E_t` had the unit been exposed at its cohort's date; empty for
    /// cohorts that are never exposed.
    pub d_exposed: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentTable {
    pub kind: TableKind,
    pub mode: Mode,
    pub periods: Vec<i64>,
    pub max_treatment: u32,
    pub units: Vec<LatentUnit>,
}

impl LatentTable {
    pub fn j(&self) -> usize {
        self.max_treatment as usize
    }

    pub fn period_index(&self, t: i64) -> Option<usize> {
        self.periods.iter().position(|&p| p == t)
    }

    pub fn exposure(&self, u: &LatentUnit) -> Option<i64> {
        exposure_date(self.mode, u.cohort)
    }

    /// `Y_t(d)`.
    pub fn outcome(&self, u: &LatentUnit, k: usize, d: u32) -> f64 {
        let j = self.j();
        let mut y = u.untreated[k];
        for s in 0..d as usize {
            y += u.effects[k * j + s];
        }
        y
    }

    /// Whether the design exposes the unit.
    pub fn is_exposed(&self, u: &LatentUnit) -> bool {
        u.group_a && self.exposure(u).is_some()
    }

    /// Revealed treatment `D_t`.
    pub fn observed_treatment(&self, u: &LatentUnit, k: usize) -> u32 {
        if self.is_exposed(u) {
            u.d_exposed[k]
        } else {
            u.d_never[k]
        }
    }

    /// Revealed outcome `Y_t = Y_t(D_t)`.
    pub fn observed_outcome(&self, u: &LatentUnit, k: usize) -> f64 {
        self.outcome(u, k, self.observed_treatment(u, k))
    }

    /// The observable panel: `(Y, D, Z)` through the switching equation.
    /// Weights are dropped, so this is meaningful for sampled tables only.
    pub fn reveal(&self) -> Result<PanelDataset> {
        let width = self.units.len().max(1).to_string().len();
        let units = self
            .units
            .iter()
            .enumerate()
            .map(|(i, u)| Unit {
                id: format!("u{:0width$}", i + 1),
                group_a: u.group_a,
                cohort: u.cohort,
                outcome: (0..self.periods.len()).map(|k| self.observed_outcome(u, k)).collect(),
                treatment: (0..self.periods.len()).map(|k| self.observed_treatment(u, k)).collect(),
                instrument: self
                    .periods
                    .iter()
                    .map(|&t| design_instrument(self.mode, u.group_a, u.cohort, t))
                    .collect(),
            })
            .collect();
        PanelDataset::from_units(units, self.periods.clone(), self.mode, self.max_treatment)
    }

    /// Weighted mean of `q(unit, post) - q(unit, pre)` over cell `(c, a)`,
    /// with the variance of that mean (meaningful for sampled tables).
    /// `None` for an empty cell.
    pub fn cell_change<F>(&self, cohort: Cohort, group_a: bool, pre: usize, post: usize, q: F) -> Option<(f64, f64)>
    where
        F: Fn(&LatentUnit, usize) -> f64,
    {
        let (mut w, mut s, mut n) = (CompensatedSum::new(), CompensatedSum::new(), 0usize);
        for u in self.units.iter().filter(|u| u.cohort == cohort && u.group_a == group_a) {
            w.add(u.weight);
            s.add(u.weight * (q(u, post) - q(u, pre)));
            n += 1;
        }
        let total = w.value();
        if n == 0 || total <= 0.0 {
            return None;
        }
        let mean = s.value() / total;
        let var = if n > 1 {
            let ss: CompensatedSum = self
                .units
                .iter()
                .filter(|u| u.cohort == cohort && u.group_a == group_a)
                .map(|u| u.weight * (q(u, post) - q(u, pre) - mean).powi(2))
                .collect();
            ss.value() / total * (n as f64 / (n as f64 - 1.0)) / n as f64
        } else {
            0.0
        };
        Some((mean, var))
    }

    /// DDD of `q` changes in the standard cell order, with its standard
    /// error. `None` if a cell is empty.
    pub fn ddd_of<F>(&self, contrast: &Contrast, q: F) -> Option<(f64, f64)>
    where
        F: Fn(&LatentUnit, usize) -> f64 + Copy,
    {
        let pre = self.period_index(contrast.pre)?;
        let post = self.period_index(contrast.post)?;
        let (t1, vt1) = self.cell_change(contrast.treated, true, pre, post, q)?;
        let (c1, vc1) = self.cell_change(contrast.control, true, pre, post, q)?;
        let (t0, vt0) = self.cell_change(contrast.treated, false, pre, post, q)?;
        let (c0, vc0) = self.cell_change(contrast.control, false, pre, post, q)?;
        Some(((t1 - c1) - (t0 - c0), (vt1 + vc1 + vt0 + vc0).sqrt()))
    }
}

/// Population (weighted) DDD of revealed `Y` and `D` for a contrast.
pub fn table_ddd(table: &LatentTable, contrast: &Contrast) -> Result<(f64, f64)> {
    let cells = |k: usize| -> Result<()> {
        let (c, a) = match k {
            0 => (contrast.treated, true),
            1 => (contrast.control, true),
            2 => (contrast.treated, false),
            _ => (contrast.control, false),
        };
        if table.units.iter().any(|u| u.cohort == c && u.group_a == a && u.weight > 0.0) {
            Ok(())
        } else {
            Err(Error::EmptyCell { cohort: c, group: u8::from(a) })
        }
    };
    (0..4).try_for_each(cells)?;
    let missing = || Error::InvalidTarget(format!("periods {} / {} not in table", contrast.pre, contrast.post));
    let (y, _) = table.ddd_of(contrast, |u, k| table.observed_outcome(u, k)).ok_or_else(missing)?;
    let (d, _) = table
        .ddd_of(contrast, |u, k| f64::from(table.observed_treatment(u, k)))
        .ok_or_else(missing)?;
    Ok((y, d))
}

/// Population single-difference Wald-DID within group `a`.
pub fn table_plain_wald(table: &LatentTable, contrast: &Contrast, group_a: bool) -> Result<f64> {
    let missing = || Error::InvalidTarget(format!("periods {} / {} not in table", contrast.pre, contrast.post));
    let pre = table.period_index(contrast.pre).ok_or_else(missing)?;
    let post = table.period_index(contrast.post).ok_or_else(missing)?;
    let change = |c: Cohort, q: &dyn Fn(&LatentUnit, usize) -> f64| {
        table
            .cell_change(c, group_a, pre, post, q)
            .map(|(m, _)| m)
            .ok_or(Error::EmptyCell { cohort: c, group: u8::from(group_a) })
    };
    let y = |u: &LatentUnit, k: usize| table.observed_outcome(u, k);
    let d = |u: &LatentUnit, k: usize| f64::from(table.observed_treatment(u, k));
    let num = change(contrast.treated, &y)? - change(contrast.control, &y)?;
    let den = change(contrast.treated, &d)? - change(contrast.control, &d)?;
    if den == 0.0 {
        return Err(Error::WeakOrZeroFirstStage { denominator: den });
    }
    Ok(num / den)
}

/// Per-cell parameters resolved once from a spec.
struct Cell {
    cohort: Cohort,
    group_a: bool,
    prob: f64,
    exposure: Option<i64>,
    /// `π_j` at `[k * J + j]`.
    uptake: Vec<f64>,
    untreated_mean: Vec<f64>,
    /// `κ(c, t - e)` for `t >= e`, NaN before.
    complier: Vec<f64>,
    anticipation: f64,
}

struct Prepared<'a> {
    spec: &'a DgpSpec,
    periods: Vec<i64>,
    j: usize,
    cells: Vec<Cell>,
    step_cdf: Vec<f64>,
    step_scale: Vec<f64>,
}

impl<'a> Prepared<'a> {
    fn new(spec: &'a DgpSpec) -> Result<Self> {
        spec.validate()?;
        let periods = spec.period_labels();
        let j = spec.j();
        let mut cells = Vec::new();
        for c in &spec.cohorts {
            for a in [true, false] {
                let prob = c.share * if a { c.group_a_share } else { 1.0 - c.group_a_share };
                let exposure = spec.exposure(c.cohort);
                let mut uptake = Vec::with_capacity(periods.len() * j);
                for (k, &t) in periods.iter().enumerate() {
                    uptake.extend((0..j).map(|s| spec.uptake(c.cohort, a, k, t, s)));
                }
                cells.push(Cell {
                    cohort: c.cohort,
                    group_a: a,
                    prob,
                    exposure,
                    uptake,
                    untreated_mean: periods
                        .iter()
                        .enumerate()
                        .map(|(k, &t)| spec.untreated_mean(c.cohort, a, k, t))
                        .collect(),
                    complier: periods
                        .iter()
                        .map(|&t| match exposure {
                            Some(e) if t >= e => spec.complier_rate(c.cohort, (t - e) as usize),
                            _ => f64::NAN,
                        })
                        .collect(),
                    anticipation: spec.anticipation_rate(c.cohort),
                });
            }
        }
        Ok(Self {
            spec,
            j,
            cells,
            step_cdf: spec.step_cdf(),
            step_scale: (0..j).map(|s| spec.step_scale(s)).collect(),
            periods,
        })
    }

    fn unit(&self, cell: &Cell, d: &Draws<'_>, weight: f64) -> LatentUnit {
        let (spec, j, t_len) = (self.spec, self.j, self.periods.len());
        let jj = j as u32;
        let step = 1 + self.step_cdf.iter().position(|&p| d.q < p).unwrap_or(j - 1) as u32;
        let d_never: Vec<u32> = (0..t_len)
            .map(|k| cell.uptake[k * j..(k + 1) * j].iter().filter(|&&p| d.u < p).count() as u32)
            .collect();
        let d_exposed = match cell.exposure {
            None => Vec::new(),
            Some(e) => {
                let lead = i64::from(spec.treatment.anticipation);
                let defier = d.s < spec.treatment.defier_share;
                self.periods
                    .iter()
                    .enumerate()
                    .map(|(k, &t)| {
                        let dn = d_never[k];
                        if t >= e {
                            if defier && dn > 0 {
                                dn - 1
                            } else if d.r < cell.complier[k] && dn < jj {
                                (dn + step).min(jj)
                            } else {
                                dn
                            }
                        } else if t >= e - lead && d.r < cell.anticipation && dn < jj {
                            (dn + step).min(jj)
                        } else {
                            dn
                        }
                    })
                    .collect()
            }
        };
        let out = &spec.outcome;
        let eff = &spec.effect;
        let alpha = out.unit_sd * d.xi + out.confounding * (0.5 - d.r);
        let tau = eff.mean + eff.sd * d.eta + eff.selection * (0.5 - d.r);
        let untreated = (0..t_len)
            .map(|k| cell.untreated_mean[k] + alpha + out.noise_sd * d.eps.get(k).copied().unwrap_or(0.0))
            .collect();
        let mut effects = Vec::with_capacity(t_len * j);
        for &t in &self.periods {
            let base = tau + eff.time_slope * t as f64;
            effects.extend(self.step_scale.iter().map(|s| base * s));
        }
        LatentUnit { cohort: cell.cohort, group_a: cell.group_a, weight, untreated, effects, d_never, d_exposed }
    }

    fn table(&self, kind: TableKind, units: Vec<LatentUnit>) -> LatentTable {
        LatentTable {
            kind,
            mode: self.spec.mode,
            periods: self.periods.clone(),
            max_treatment: self.spec.max_treatment,
            units,
        }
    }
}

struct Draws<'a> {
    u: f64,
    r: f64,
    s: f64,
    q: f64,
    xi: f64,
    eta: f64,
    eps: &'a [f64],
}

/// Draws `n_units` units. The same spec, size and RNG state always give the
/// same table.
pub fn sample_table<R: Rng + ?Sized>(spec: &DgpSpec, n_units: usize, rng: &mut R) -> Result<LatentTable> {
    if n_units == 0 {
        return Err(Error::InvalidSpec("n_units must be at least 1".into()));
    }
    let prep = Prepared::new(spec)?;
    let mut cdf = Vec::with_capacity(prep.cells.len());
    let mut acc = 0.0;
    for c in &prep.cells {
        acc += c.prob;
        cdf.push(acc);
    }
    let mut eps = vec![0.0; prep.periods.len()];
    let mut units = Vec::with_capacity(n_units);
    for _ in 0..n_units {
        let pick: f64 = rng.random::<f64>() * acc;
        let idx = cdf.iter().position(|&p| pick < p).unwrap_or(cdf.len() - 1);
        let (u, r, s, q) = (rng.random(), rng.random(), rng.random(), rng.random());
        let xi = rng.sample(StandardNormal);
        let eta = rng.sample(StandardNormal);
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        units.push(prep.unit(&prep.cells[idx], &Draws { u, r, s, q, xi, eta, eps: &eps }, 1.0));
    }
    Ok(prep.table(TableKind::Sampled, units))
}

/// ChaCha8 generator for replicate `stream` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws a sample and reveals it: the observable panel together with the
/// latent table behind it.
pub fn generate(spec: &DgpSpec, n_units: usize, seed: u64) -> Result<(PanelDataset, LatentTable)> {
    generate_with(spec, n_units, &mut replicate_rng(seed, 0))
}

pub fn generate_with<R: Rng + ?Sized>(
    spec: &DgpSpec,
    n_units: usize,
    rng: &mut R,
) -> Result<(PanelDataset, LatentTable)> {
    let table = sample_table(spec, n_units, rng)?;
    Ok((table.reveal()?, table))
}

/// Midpoints and lengths of the intervals cut by `points` in `[0, 1]`.
fn strata(points: impl IntoIterator<Item = f64>, subdivisions: usize) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = points.into_iter().filter(|p| p.is_finite()).map(|p| p.clamp(0.0, 1.0)).collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let parts = subdivisions.max(1);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let len = (w[1] - w[0]) / parts as f64;
        if len <= 0.0 {
            continue;
        }
        for p in 0..parts {
            out.push((w[0] + (p as f64 + 0.5) * len, len));
        }
    }
    out
}

/// Exact enumeration of the population. `subdivisions` splits each stratum
/// of `R` further; the result is unchanged, only the row count grows.
pub fn enumerate_population(spec: &DgpSpec, subdivisions: usize) -> Result<LatentTable> {
    let prep = Prepared::new(spec)?;
    let phi = spec.treatment.defier_share;
    let q_strata = strata(prep.step_cdf.iter().copied(), 1);
    let s_strata = strata([phi], 1);
    let mut units = Vec::new();
    for cell in prep.cells.iter().filter(|c| c.prob > 0.0) {
        let u_strata = strata(cell.uptake.iter().copied(), 1);
        let r_strata = strata(cell.complier.iter().copied().chain([cell.anticipation]), subdivisions);
        for &(u, wu) in &u_strata {
            for &(r, wr) in &r_strata {
                for &(s, ws) in &s_strata {
                    for &(q, wq) in &q_strata {
                        let draws = Draws { u, r, s, q, xi: 0.0, eta: 0.0, eps: &[] };
                        units.push(prep.unit(cell, &draws, cell.prob * wu * wr * ws * wq));
                    }
                }
            }
        }
    }
    Ok(prep.table(TableKind::Population, units))
}
