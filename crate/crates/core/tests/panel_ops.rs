mod common;

use tripleiv_core::error::Error;
use tripleiv_core::panel::{load_panel, write_panel, Cohort, LoadOptions, Mode, PanelDataset, Rule, Unit};

const TWO_PERIOD: &str = "\
unit,time,y,d,a,cohort
u1,0,1.0,0,1,1
u1,1,2.5,1,1,1
u2,0,0.5,0,1,0
u2,1,0.7,0,1,0
u3,0,1.5,0,0,1
u3,1,1.9,0,0,1
u4,0,0.1,0,0,0
u4,1,0.4,1,0,0
";

fn load(text: &str, mode: Mode) -> tripleiv_core::error::Result<PanelDataset> {
    load_panel(text.as_bytes(), &LoadOptions::new(mode))
}

#[test]
fn well_formed_two_period_file_loads() {
    let ds = load(TWO_PERIOD, Mode::TwoPeriod).unwrap();
    assert_eq!(ds.n_units(), 4);
    assert_eq!(ds.n_records(), 8);
    assert_eq!(ds.periods(), &[0, 1]);
    assert!(ds.validate_design().is_empty());
}

#[test]
fn write_then_load_round_trips() {
    let opts = LoadOptions::new(Mode::TwoPeriod);
    let ds = load(TWO_PERIOD, Mode::TwoPeriod).unwrap();
    let mut buf = Vec::new();
    write_panel(&ds, &mut buf, &opts).unwrap();
    let mut with_z = opts.clone();
    with_z.schema.instrument = Some("z".into());
    let back = load_panel(buf.as_slice(), &with_z).unwrap();
    assert_eq!(back, ds);

    let mut rng = common::rng(7);
    let random = common::random_two_period(&mut rng, 3);
    let mut buf = Vec::new();
    let mut opts3 = with_z.clone();
    opts3.max_treatment = 3;
    write_panel(&random, &mut buf, &opts3).unwrap();
    assert_eq!(load_panel(buf.as_slice(), &opts3).unwrap(), random);
}

#[test]
fn missing_period_is_unbalanced() {
    let text: String = TWO_PERIOD.lines().filter(|l| !l.starts_with("u3,1")).map(|l| format!("{l}\n")).collect();
    match load(&text, Mode::TwoPeriod) {
        Err(Error::UnbalancedPanel(u)) => assert_eq!(u, "u3"),
        other => panic!("expected UnbalancedPanel, got {other:?}"),
    }
}

#[test]
fn group_must_be_constant() {
    let text = TWO_PERIOD.replace("u4,1,0.4,1,0,0", "u4,1,0.4,1,1,0");
    assert!(matches!(load(&text, Mode::TwoPeriod), Err(Error::NonConstantUnitAttribute { .. })));
}

#[test]
fn load_errors() {
    let no_cohort = TWO_PERIOD.replace(",cohort", ",c");
    assert!(matches!(load(&no_cohort, Mode::TwoPeriod), Err(Error::MissingColumn(c)) if c == "cohort"));
    let bad_flag = TWO_PERIOD.replace("u1,0,1.0,0,1,1", "u1,0,1.0,0,2,1");
    assert!(matches!(load(&bad_flag, Mode::TwoPeriod), Err(Error::MalformedValue { row: 1, .. })));
    let bad_y = TWO_PERIOD.replace("u2,1,0.7", "u2,1,abc");
    assert!(matches!(load(&bad_y, Mode::TwoPeriod), Err(Error::MalformedValue { row: 4, .. })));
    let over = TWO_PERIOD.replace("u1,1,2.5,1", "u1,1,2.5,2");
    assert!(matches!(load(&over, Mode::TwoPeriod), Err(Error::MalformedValue { .. })));
    let bad_cohort = TWO_PERIOD.replace("u4,0,0.1,0,0,0\nu4,1,0.4,1,0,0", "u4,0,0.1,0,0,3\nu4,1,0.4,1,0,3");
    assert!(matches!(load(&bad_cohort, Mode::TwoPeriod), Err(Error::MalformedValue { .. })));
}

#[test]
fn semicolon_delimiter_and_custom_columns() {
    let text = TWO_PERIOD.replace(',', ";").replace("unit;time;y;d;a;cohort", "id;period;outcome;treat;grp;coh");
    let mut opts = LoadOptions::new(Mode::TwoPeriod);
    opts.delimiter = b';';
    opts.schema.unit = "id".into();
    opts.schema.time = "period".into();
    opts.schema.outcome = "outcome".into();
    opts.schema.treatment = "treat".into();
    opts.schema.group_a = "grp".into();
    opts.schema.cohort = "coh".into();
    assert_eq!(load_panel(text.as_bytes(), &opts).unwrap(), load(TWO_PERIOD, Mode::TwoPeriod).unwrap());
}

fn raw_unit(id: &str, cohort: Cohort, a: bool, z: Vec<bool>) -> Unit {
    let t = z.len();
    Unit { id: id.into(), group_a: a, cohort, outcome: vec![0.0; t], treatment: vec![0; t], instrument: z }
}

fn z_path(ds: &PanelDataset, id: &str) -> Vec<bool> {
    ds.units().iter().find(|u| u.id == id).unwrap().instrument.clone()
}

#[test]
fn derived_instrument_paths() {
    let ds = PanelDataset::from_units(
        vec![
            raw_unit("a", Cohort::Finite(1), true, vec![true, false]),
            raw_unit("b", Cohort::Finite(0), true, vec![true, true]),
        ],
        vec![0, 1],
        Mode::TwoPeriod,
        1,
    )
    .unwrap()
    .derive_instrument();
    assert_eq!(z_path(&ds, "a"), vec![false, true]);
    assert_eq!(z_path(&ds, "b"), vec![false, false]);
    assert!(ds.validate_design().is_empty());

    let st = PanelDataset::from_units(
        vec![raw_unit("s", Cohort::Finite(3), true, vec![false; 4])],
        vec![1, 2, 3, 4],
        Mode::Staggered,
        1,
    )
    .unwrap()
    .derive_instrument();
    assert_eq!(z_path(&st, "s"), vec![false, false, true, true]);
}

#[test]
fn design_violations() {
    let nonmono = PanelDataset::from_units(
        vec![raw_unit("s", Cohort::Finite(2), true, vec![false, true, false])],
        vec![1, 2, 3],
        Mode::Staggered,
        1,
    )
    .unwrap();
    let v = nonmono.validate_design();
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].rule, Rule::NonMonotoneInstrument);
    assert_eq!((v[0].unit.as_str(), v[0].time), ("s", 3));

    let outside = PanelDataset::from_units(
        vec![raw_unit("g", Cohort::Finite(2), false, vec![false, true, true])],
        vec![1, 2, 3],
        Mode::Staggered,
        1,
    )
    .unwrap();
    let v = outside.validate_design();
    assert!(!v.is_empty());
    assert!(v.iter().all(|x| x.rule == Rule::InstrumentOutsideDesign));

    let initial = PanelDataset::from_units(
        vec![raw_unit("i", Cohort::Finite(1), true, vec![true, true])],
        vec![0, 1],
        Mode::TwoPeriod,
        1,
    )
    .unwrap();
    assert_eq!(initial.validate_design()[0].rule, Rule::InitialExposure);
}

fn staggered_with(cohorts: &[Cohort]) -> PanelDataset {
    let units = cohorts
        .iter()
        .enumerate()
        .map(|(i, &c)| raw_unit(&format!("u{i}"), c, i % 2 == 0, vec![false; 4]))
        .collect();
    PanelDataset::from_units(units, vec![1, 2, 3, 4], Mode::Staggered, 1).unwrap().derive_instrument()
}

#[test]
fn cohort_partition() {
    use Cohort::{Finite, Never};
    let idx = staggered_with(&[Finite(2), Finite(4), Never, Finite(2)]).cohort_index().unwrap();
    assert_eq!(idx.cohorts.len(), 3);
    assert_eq!(idx.cohorts[&Finite(2)], vec![0, 3]);
    assert!(idx.has_never);
    assert_eq!(idx.last_exposed, Some(4));

    let idx = staggered_with(&[Finite(2), Finite(3)]).cohort_index().unwrap();
    assert!(!idx.has_never);
    assert_eq!(idx.last_exposed, Some(3));

    let idx = staggered_with(&[Finite(3), Never]).cohort_index().unwrap();
    assert_eq!(idx.finite_cohorts().collect::<Vec<_>>(), vec![3]);
    assert!(idx.has_never);

    let two = load(TWO_PERIOD, Mode::TwoPeriod).unwrap();
    assert!(matches!(two.cohort_index(), Err(Error::ModeMismatch { .. })));
}

#[test]
fn staggered_cohort_beyond_panel_is_rejected() {
    let r = PanelDataset::from_units(vec![raw_unit("x", Cohort::Finite(6), true, vec![false; 4])], vec![1, 2, 3, 4], Mode::Staggered, 1);
    assert!(matches!(r, Err(Error::InvalidPanel(_))));
}
