//! Invariance properties shared by the property suite and the acceptance
//! run.
//!
//! Outcomes are drawn on a dyadic grid (multiples of 1/64, bounded well
//! inside 2^20), so sums of shifted values are exact in floating point and
//! the estimates can be compared bit for bit; standard errors, which go
//! through square roots, are compared to within 8 ulps.

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tripleiv_core::estimand::{triple_wald_did, TripleWaldEstimate};
use tripleiv_core::inference::with_influence_inference;
use tripleiv_core::panel::{Cohort, Mode, PanelDataset, PanelRecord, Unit};
use tripleiv_core::staggered::{enumerate_targets, staggered_triple_wald, ControlPolicy};

use super::{rng, ulps, unit};

fn grid(rng: &mut ChaCha8Rng, half_range: i32) -> f64 {
    f64::from(rng.random_range(-half_range..=half_range)) / 64.0
}

fn cell_size(rng: &mut ChaCha8Rng, pow2: bool) -> usize {
    if pow2 {
        1 << rng.random_range(1..=5)
    } else {
        rng.random_range(2..=20)
    }
}

/// Two-period panel on the grid; `pow2` restricts cell sizes to powers of
/// two so cell means of shifted values are exact too.
pub fn grid_two_period(rng: &mut ChaCha8Rng, pow2: bool) -> PanelDataset {
    let j = rng.random_range(1..=3u32);
    loop {
        let mut units = Vec::new();
        for (k, (c, a)) in [(1, true), (0, true), (1, false), (0, false)].into_iter().enumerate() {
            let p = if c == 1 && a { 0.7 } else { 0.3 };
            for i in 0..cell_size(rng, pow2) {
                let d0 = rng.random_range(0..=j);
                let d1 = if rng.random_bool(p) { rng.random_range(d0..=j) } else { d0 };
                let y0 = grid(rng, 4096);
                let y1 = y0 + grid(rng, 256) + f64::from(d1) * 1.5;
                units.push(unit(Mode::TwoPeriod, format!("k{k}u{i:02}"), Cohort::Finite(c), a, vec![y0, y1], vec![d0, d1]));
            }
        }
        let ds = PanelDataset::from_units(units, vec![0, 1], Mode::TwoPeriod, j).unwrap();
        if triple_wald_did(&ds).is_ok_and(|e| e.denominator.abs() > 1e-3) {
            return ds;
        }
    }
}

pub fn grid_staggered(rng: &mut ChaCha8Rng, pow2: bool) -> PanelDataset {
    let t = rng.random_range(3..=5usize);
    let mut cohorts: Vec<Cohort> = (2..=t as u32).filter(|_| rng.random_bool(0.6)).map(Cohort::Finite).collect();
    if cohorts.is_empty() || rng.random_bool(0.7) {
        cohorts.push(Cohort::Never);
    }
    let mut units = Vec::new();
    for &c in &cohorts {
        for a in [true, false] {
            for i in 0..cell_size(rng, pow2) {
                let mut on = false;
                let mut d = Vec::with_capacity(t);
                let mut y = Vec::with_capacity(t);
                let alpha = grid(rng, 4096);
                for p in 1..=t as i64 {
                    let exposed = a && c.finite().is_some_and(|e| p >= i64::from(e));
                    on |= rng.random_bool(if exposed { 0.5 } else { 0.1 });
                    d.push(u32::from(on));
                    y.push(alpha + grid(rng, 256) + if on { 2.0 } else { 0.0 });
                }
                units.push(unit(Mode::Staggered, format!("{c}-{}-{i:02}", u8::from(a)), c, a, y, d));
            }
        }
    }
    PanelDataset::from_units(units, (1..=t as i64).collect(), Mode::Staggered, 1).unwrap()
}

/// Estimate (with IF standard error) for every estimable target, or the
/// single two-period contrast.
pub fn estimates(ds: &PanelDataset) -> Vec<TripleWaldEstimate> {
    let with_se = |w: TripleWaldEstimate| with_influence_inference(ds, w, 0.95).ok();
    match ds.mode() {
        Mode::TwoPeriod => triple_wald_did(ds).ok().and_then(with_se).into_iter().collect(),
        Mode::Staggered => {
            let mut out = Vec::new();
            for policy in [ControlPolicy::NeverExposed, ControlPolicy::LastExposed] {
                for target in enumerate_targets(ds, policy).unwrap_or_default() {
                    if let Some(w) = staggered_triple_wald(ds, &target).ok().and_then(|s| with_se(s.wald)) {
                        out.push(w);
                    }
                }
            }
            out
        }
    }
}

fn assert_same(a: &[TripleWaldEstimate], b: &[TripleWaldEstimate]) -> Result<(), TestCaseError> {
    prop_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        prop_assert_eq!(x.estimate.to_bits(), y.estimate.to_bits(), "estimate {} vs {}", x.estimate, y.estimate);
        prop_assert!(ulps(x.se().unwrap(), y.se().unwrap()) <= 8, "se {:?} vs {:?}", x.se(), y.se());
    }
    Ok(())
}

fn map_units(ds: &PanelDataset, f: impl Fn(&Unit) -> Unit) -> PanelDataset {
    PanelDataset::from_units(ds.units().iter().map(f).collect(), ds.periods().to_vec(), ds.mode(), ds.max_treatment()).unwrap()
}

pub fn panel(rng: &mut ChaCha8Rng, staggered: bool, pow2: bool) -> PanelDataset {
    if staggered {
        grid_staggered(rng, pow2)
    } else {
        grid_two_period(rng, pow2)
    }
}


type Check = Result<(), TestCaseError>;

pub fn unit_fixed_effects_cancel(seed: u64, staggered: bool) -> Check {
    let mut r = rng(seed);
    let ds = panel(&mut r, staggered, false);
    let shifted = map_units(&ds, |u| {
        let mut u = u.clone();
        let alpha = f64::from(rng_for(&u.id, seed).random_range(-2048..=2048)) / 16.0;
        u.outcome.iter_mut().for_each(|y| *y += alpha);
        u
    });
    assert_same(&estimates(&ds), &estimates(&shifted))
}

/// Cell sizes are powers of two here so the shifted cell means are exact.
pub fn additive_trends_cancel(seed: u64, staggered: bool) -> Check {
    let mut r = rng(seed);
    let ds = panel(&mut r, staggered, true);
    let t = ds.periods().len();
    let mut draw = || -> Vec<f64> { (0..t).map(|_| grid(&mut r, 1024)).collect() };
    let (f_never, g0, g1) = (draw(), draw(), draw());
    let f: Vec<Vec<f64>> = (0..=6).map(|_| draw()).collect();
    let shifted = map_units(&ds, |u| {
        let mut u = u.clone();
        let fc = match u.cohort {
            Cohort::Finite(c) => &f[c as usize],
            Cohort::Never => &f_never,
        };
        let g = if u.group_a { &g1 } else { &g0 };
        for k in 0..t {
            u.outcome[k] += fc[k] + g[k];
        }
        u
    });
    let (a, b) = (estimates(&ds), estimates(&shifted));
    prop_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        prop_assert_eq!(x.estimate.to_bits(), y.estimate.to_bits());
    }
    Ok(())
}

pub fn group_swap_negates_contrasts(seed: u64, staggered: bool) -> Check {
    let mut r = rng(seed);
    let ds = panel(&mut r, staggered, false);
    let swapped = map_units(&ds, |u| unit(ds.mode(), u.id.clone(), u.cohort, !u.group_a, u.outcome.clone(), u.treatment.clone()));
    let (a, b) = (estimates(&ds), estimates(&swapped));
    assert_same(&a, &b)?;
    for (x, y) in a.iter().zip(&b) {
        prop_assert_eq!(x.numerator.to_bits(), (-y.numerator).to_bits());
        prop_assert_eq!(x.denominator.to_bits(), (-y.denominator).to_bits());
    }
    Ok(())
}

pub fn row_order_is_irrelevant(seed: u64, staggered: bool) -> Check {
    let mut r = rng(seed);
    let ds = panel(&mut r, staggered, false);
    let mut records: Vec<PanelRecord> = ds.records().collect();
    records.shuffle(&mut r);
    let reloaded = PanelDataset::from_records(records, ds.mode(), ds.max_treatment()).unwrap();
    prop_assert_eq!(&reloaded, &ds);

    // Renaming units reorders them internally, which changes the order of
    // every accumulation.
    let mut order: Vec<usize> = (0..ds.n_units()).collect();
    order.shuffle(&mut r);
    let renamed = map_units(&ds, |u| {
        let pos = ds.units().iter().position(|v| v.id == u.id).unwrap();
        let mut u = u.clone();
        u.id = format!("r{:04}", order[pos]);
        u
    });
    assert_same(&estimates(&ds), &estimates(&renamed))
}

pub fn outcome_scale_is_equivariant(seed: u64, staggered: bool, power: i32) -> Check {
    let mut r = rng(seed);
    let ds = panel(&mut r, staggered, false);
    let k = 2f64.powi(power);
    let scaled = map_units(&ds, |u| {
        let mut u = u.clone();
        u.outcome.iter_mut().for_each(|y| *y *= k);
        u
    });
    let (a, b) = (estimates(&ds), estimates(&scaled));
    prop_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        prop_assert_eq!((x.estimate * k).to_bits(), y.estimate.to_bits());
        prop_assert!(ulps(x.se().unwrap() * k, y.se().unwrap()) <= 8);
    }
    Ok(())
}

/// Per-unit stream so a shift depends only on the unit, not on visit order.
fn rng_for(id: &str, seed: u64) -> ChaCha8Rng {
    let h = id.bytes().fold(seed, |acc, b| acc.wrapping_mul(1_099_511_628_211).wrapping_add(u64::from(b)));
    rng(h)
}
