#![allow(dead_code)]

pub mod props;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tripleiv_core::panel::{design_instrument, Cohort, Mode, PanelDataset, Unit};
use tripleiv_core::simulation::DgpSpec;

pub const SEED: u64 = 20261014;

pub fn fixture(name: &str) -> DgpSpec {
    let path = format!("{}/tests/fixtures/{name}.toml", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    DgpSpec::from_toml_str(&text).unwrap()
}

pub fn periods(mode: Mode, t: usize) -> Vec<i64> {
    match mode {
        Mode::TwoPeriod => vec![0, 1],
        Mode::Staggered => (1..=t as i64).collect(),
    }
}

/// A unit whose instrument follows the design rule.
pub fn unit(mode: Mode, id: String, cohort: Cohort, group_a: bool, outcome: Vec<f64>, treatment: Vec<u32>) -> Unit {
    let ps = periods(mode, outcome.len());
    Unit {
        instrument: ps.iter().map(|&t| design_instrument(mode, group_a, cohort, t)).collect(),
        id,
        group_a,
        cohort,
        outcome,
        treatment,
    }
}

/// Two-period panel with one `(cells[k].0, cells[k].1)` entry per unit:
/// the four cells are (C=1,A=1), (C=0,A=1), (C=1,A=0), (C=0,A=0) and each
/// unit is given as `(dy, d_post)` with zero baseline outcome and treatment.
pub fn two_period_from_changes(cells: [&[(f64, u32)]; 4]) -> PanelDataset {
    let keys = [(1, true), (0, true), (1, false), (0, false)];
    let mut units = Vec::new();
    for (k, members) in cells.iter().enumerate() {
        let (c, a) = keys[k];
        for (i, &(dy, d)) in members.iter().enumerate() {
            units.push(unit(Mode::TwoPeriod, format!("k{k}u{i:03}"), Cohort::Finite(c), a, vec![0.0, dy], vec![0, d]));
        }
    }
    PanelDataset::from_units(units, vec![0, 1], Mode::TwoPeriod, 1).unwrap()
}

/// `n` units whose mean outcome change is `dy` and mean treatment change
/// is `share` (the first `share * n` units switch on).
pub fn cell_with(n: usize, dy: f64, share: f64) -> Vec<(f64, u32)> {
    let on = (share * n as f64).round() as usize;
    (0..n).map(|i| (dy, u32::from(i < on))).collect()
}

/// Random two-period panel with every cell populated and a non-degenerate
/// first stage.
pub fn random_two_period(rng: &mut ChaCha8Rng, max_treatment: u32) -> PanelDataset {
    loop {
        let mut units = Vec::new();
        let per_cell: [usize; 4] = std::array::from_fn(|_| rng.random_range(2..25));
        let keys = [(1, true), (0, true), (1, false), (0, false)];
        for (k, &n) in per_cell.iter().enumerate() {
            let (c, a) = keys[k];
            let p_on = if c == 1 && a { 0.7 } else { 0.25 };
            for i in 0..n {
                let alpha: f64 = rng.random_range(-5.0..5.0);
                let d0 = rng.random_range(0..=max_treatment);
                let d1 = if rng.random_bool(p_on) { rng.random_range(d0..=max_treatment) } else { d0 };
                let y0 = alpha + rng.random_range(-1.0..1.0);
                let y1 = alpha + 0.3 + 1.7 * f64::from(d1) + rng.random_range(-1.0..1.0);
                units.push(unit(Mode::TwoPeriod, format!("k{k}u{i:03}"), Cohort::Finite(c), a, vec![y0, y1], vec![d0, d1]));
            }
        }
        let ds = PanelDataset::from_units(units, vec![0, 1], Mode::TwoPeriod, max_treatment).unwrap();
        if tripleiv_core::estimand::triple_wald_did(&ds).is_ok_and(|e| e.denominator.abs() > 0.05) {
            return ds;
        }
    }
}

/// Random staggered panel over `t` periods with the given cohorts; binary
/// treatment that switches on with higher probability once exposed.
pub fn random_staggered(rng: &mut ChaCha8Rng, t: usize, cohorts: &[Cohort], per_cell: std::ops::Range<usize>) -> PanelDataset {
    let mut units = Vec::new();
    let mut id = 0;
    for &c in cohorts {
        for a in [true, false] {
            for _ in 0..rng.random_range(per_cell.clone()) {
                id += 1;
                let alpha: f64 = rng.random_range(-5.0..5.0);
                let mut d = vec![0u32; t];
                let mut y = vec![0.0; t];
                let mut on = rng.random_bool(0.1);
                for k in 0..t {
                    let period = k as i64 + 1;
                    let exposed = design_instrument(Mode::Staggered, a, c, period);
                    if !on && rng.random_bool(if exposed { 0.5 } else { 0.05 }) {
                        on = true;
                    }
                    d[k] = u32::from(on);
                    y[k] = alpha + 0.2 * period as f64 + 2.0 * f64::from(d[k]) + rng.random_range(-1.0..1.0);
                }
                units.push(unit(Mode::Staggered, format!("u{id:04}"), c, a, y, d));
            }
        }
    }
    PanelDataset::from_units(units, (1..=t as i64).collect(), Mode::Staggered, 1).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Distance in units in the last place.
pub fn ulps(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    let key = |x: f64| {
        let bits = x.to_bits() as i64;
        if bits < 0 { i64::MIN - bits } else { bits }
    };
    key(a).abs_diff(key(b))
}
