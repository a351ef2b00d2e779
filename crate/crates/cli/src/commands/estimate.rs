use serde_json::{json, Value};
use tripleiv_core::estimand::{triple_wald_did_with, EstimatorConfig, TripleWaldEstimate};
use tripleiv_core::inference::{bootstrap_se, with_influence_inference, EstimatorSpec, MIN_BOOTSTRAP_REPS};
use tripleiv_core::iv::{build_design, two_stage_ls, IvFit};
use tripleiv_core::panel::{Mode, PanelDataset};
use tripleiv_core::report::{batch_line, estimate_document, fmt_f64, staggered_document, Document};
use tripleiv_core::staggered::{aggregate, estimate_all, StaggeredEstimate};
use tripleiv_core::Result as CoreResult;

use crate::args::{Engine, EstimateArgs, Variance};
use crate::failure::CliError;
use crate::manifest::OutputDir;

/// The two engines must agree to this tolerance, relative to `max(1, |estimate|)`.
const ENGINE_TOL: f64 = 1e-10;
const DEFAULT_BOOT_REPS: usize = 500;

struct Fitted {
    wald: TripleWaldEstimate,
    iv: Option<IvFit>,
    gap: Option<f64>,
}

impl Fitted {
    fn engines_agree(&self) -> bool {
        self.gap.is_none_or(|g| g <= ENGINE_TOL * self.wald.estimate.abs().max(1.0))
    }

    fn annotate(&self, engine: Engine, doc: &mut Document) {
        doc.push(
            "engine",
            match engine {
                Engine::Cells => "cells",
                Engine::Iv => "iv",
                Engine::Both => "both",
            },
        );
        if let Some(iv) = &self.iv {
            doc.push_f64("iv.beta", iv.beta_iv);
            doc.push_f64("iv.first_stage_residual_norm", iv.first_stage_residual_norm);
        }
        if let Some(g) = self.gap {
            doc.push_f64("engine_gap", g);
            doc.push("engines_agree", self.engines_agree());
        }
    }

    fn json(&self) -> Value {
        json!({ "estimate": self.wald, "iv": self.iv, "engine_gap": self.gap })
    }
}

fn fit(ds: &PanelDataset, spec: EstimatorSpec, mut wald: TripleWaldEstimate, a: &EstimateArgs) -> CoreResult<Fitted> {
    let iv = match a.engine {
        Engine::Cells => None,
        Engine::Iv | Engine::Both => Some(two_stage_ls(&build_design(ds, &spec)?)?),
    };
    let gap = match (&iv, a.engine) {
        (Some(f), Engine::Both) => Some((f.beta_iv - wald.estimate).abs()),
        _ => None,
    };
    if let (Some(f), Engine::Iv) = (&iv, a.engine) {
        wald.estimate = f.beta_iv;
    }
    let wald = match a.variance {
        Variance::If => with_influence_inference(ds, wald, a.ci_level)?,
        Variance::Bootstrap => {
            let reps = a.boot_reps.unwrap_or(DEFAULT_BOOT_REPS);
            wald.inference = Some(bootstrap_se(ds, &spec, reps, a.seed.unwrap_or(0), a.ci_level)?);
            wald
        }
    };
    Ok(Fitted { wald, iv, gap })
}

fn check_flags(a: &EstimateArgs) -> Result<(), CliError> {
    super::check_level(a.ci_level)?;
    if a.variance != Variance::Bootstrap && (a.boot_reps.is_some() || a.seed.is_some()) {
        return Err(CliError::Usage("--boot-reps and --seed apply only with --variance bootstrap".into()));
    }
    if a.boot_reps.is_some_and(|b| b < MIN_BOOTSTRAP_REPS) {
        return Err(CliError::Usage(format!("--boot-reps must be at least {MIN_BOOTSTRAP_REPS}")));
    }
    Ok(())
}

pub fn run(a: &EstimateArgs) -> Result<(), CliError> {
    check_flags(a)?;
    let (input, ds) = super::load(&a.data)?;
    let policy = super::policy(ds.mode(), a.control)?;
    if !a.skip_validate {
        super::require_valid(&ds)?;
    }
    let config = EstimatorConfig::default();

    let mut report = String::new();
    let mut summary = String::new();
    let mut failures = Vec::new();
    let json = match ds.mode() {
        Mode::TwoPeriod => {
            let wald = triple_wald_did_with(&ds, &config)?;
            let f = fit(&ds, EstimatorSpec::TwoPeriod, wald, a)?;
            let mut doc = estimate_document(&f.wald);
            f.annotate(a.engine, &mut doc);
            report.push_str(&doc.to_string());
            let se = f.wald.se().map_or("NA".into(), fmt_f64);
            summary.push_str(&format!("two_period est={} se={se} n={}\n", fmt_f64(f.wald.estimate), f.wald.n_total));
            if !f.engines_agree() {
                failures.push(format!("engines disagree by {}", fmt_f64(f.gap.unwrap_or(f64::NAN))));
            }
            json!({ "mode": "two-period", "result": f.json() })
        }
        Mode::Staggered => {
            let mut targets = Vec::new();
            let mut estimates = Vec::new();
            for outcome in estimate_all(&ds, policy, &config)? {
                let t = outcome.target;
                let fitted = outcome.result.and_then(|s| fit(&ds, EstimatorSpec::Staggered(t), s.wald, a));
                report.push_str(&format!("[{t}]\n"));
                match fitted {
                    Ok(f) => {
                        let est = StaggeredEstimate { target: t, wald: f.wald.clone() };
                        let mut doc = staggered_document(&est);
                        f.annotate(a.engine, &mut doc);
                        report.push_str(&doc.to_string());
                        let mut line = batch_line(&t, Ok(&est));
                        if !f.engines_agree() {
                            line.push_str(" engines_disagree");
                            failures.push(format!("{t}: engines disagree"));
                        }
                        summary.push_str(&line);
                        targets.push(json!({ "target": t, "result": f.json() }));
                        estimates.push(est);
                    }
                    Err(e) => {
                        report.push_str(&format!("error = {e}\n"));
                        summary.push_str(&batch_line(&t, Err(&e)));
                        targets.push(json!({ "target": t, "error": e.to_string() }));
                        failures.push(format!("{t}: {e}"));
                    }
                }
                report.push('\n');
                summary.push('\n');
            }
            let agg = aggregate(&estimates);
            if let Some(g) = &agg {
                summary.push_str(&format!(
                    "# descriptive summary, not an identified parameter: targets={} unweighted={} cohort_weighted={}\n",
                    g.n_targets,
                    fmt_f64(g.unweighted),
                    fmt_f64(g.cohort_weighted)
                ));
            }
            json!({ "mode": "staggered", "control": policy, "targets": targets, "aggregate": agg })
        }
    };
    let mut json = serde_json::to_string_pretty(&json).expect("report serializes");
    json.push('\n');

    match (&a.out, a.json) {
        (None, true) => print!("{json}"),
        _ => print!("{report}# summary\n{summary}"),
    }
    if let Some(dir) = &a.out {
        let mut out = OutputDir::create(dir)?;
        out.write("report.txt", report.as_bytes())?;
        out.write("summary.txt", summary.as_bytes())?;
        if a.json {
            out.write("report.json", json.as_bytes())?;
        }
        out.finish("estimate", a, &[input.digest])?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        for f in &failures {
            eprintln!("{f}");
        }
        Err(CliError::Failed(format!("{} target(s) failed", failures.len())))
    }
}
