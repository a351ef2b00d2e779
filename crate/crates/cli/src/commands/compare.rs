use tripleiv_core::estimand::{contrast_wald, plain_wald, Contrast, EstimatorConfig};
use tripleiv_core::inference::with_influence_inference;
use tripleiv_core::panel::{Mode, PanelDataset};
use tripleiv_core::staggered::candidate_targets;

use crate::args::CompareArgs;
use crate::failure::CliError;
use crate::manifest::OutputDir;

fn cell(x: Option<f64>) -> String {
    x.map_or_else(|| format!("{:>12}", "NA"), |v| format!("{v:>12.6}"))
}

/// One table row; `None` when the triple estimate itself failed.
fn row(ds: &PanelDataset, label: &str, contrast: &Contrast, level: f64, config: &EstimatorConfig) -> (String, bool) {
    let triple = contrast_wald(ds, contrast, config).and_then(|w| with_influence_inference(ds, w, level));
    let plain = |a| plain_wald(ds, contrast, a, config).ok();
    let (est, se) = match &triple {
        Ok(w) => (Some(w.estimate), w.se()),
        Err(_) => (None, None),
    };
    let mut line = format!("{label:<28}{}{}{}{}", cell(est), cell(se), cell(plain(true)), cell(plain(false)));
    if let Err(e) = &triple {
        line.push_str(&format!("  error=\"{e}\""));
    }
    (line, triple.is_ok())
}

pub fn run(a: &CompareArgs) -> Result<(), CliError> {
    super::check_level(a.ci_level)?;
    let (input, ds) = super::load(&a.data)?;
    let policy = super::policy(ds.mode(), a.control)?;
    if !a.skip_validate {
        super::require_valid(&ds)?;
    }
    let config = EstimatorConfig::default();

    let mut table = format!("{:<28}{:>12}{:>12}{:>12}{:>12}\n", "target", "triple", "se", "plain_a1", "plain_a0");
    let mut failed = 0;
    let rows: Vec<(String, Contrast)> = match ds.mode() {
        Mode::TwoPeriod => vec![("two_period".into(), Contrast::TWO_PERIOD)],
        Mode::Staggered => candidate_targets(&ds, policy)?.into_iter().map(|t| (t.to_string(), t.contrast())).collect(),
    };
    for (label, contrast) in &rows {
        let (line, ok) = row(&ds, label, contrast, a.ci_level, &config);
        failed += usize::from(!ok);
        table.push_str(&line);
        table.push('\n');
    }
    table.push_str("# plain_a1 / plain_a0: single-group Wald-DID within A=1 / A=0; se is for the triple estimate\n");
    print!("{table}");

    if let Some(dir) = &a.out {
        let mut out = OutputDir::create(dir)?;
        out.write("compare.txt", table.as_bytes())?;
        out.finish("compare", a, &[input.digest])?;
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{failed} triple estimate(s) failed")))
    }
}
