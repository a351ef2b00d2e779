//! Plain-text reports: `key = value` documents and one-line batch summaries.
//!
//! Floats are written in shortest round-trip form, so parsing a document
//! back recovers every value bit for bit.

use std::fmt;

use crate::error::{Error, Result};
use crate::estimand::{CellStats, TripleWaldEstimate};
use crate::inference::VarianceEstimator;
use crate::staggered::{StaggeredEstimate, StaggeredTarget};

/// Ordered `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    entries: Vec<(String, String)>,
}

impl Document {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn push_f64(&mut self, key: impl Into<String>, value: f64) {
        self.push(key, fmt_f64(value));
    }

    pub fn extend(&mut self, other: Document) {
        self.entries.extend(other.entries);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = Document::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::InvalidArgument(format!("line {}: expected `key = value`", i + 1)))?;
            doc.push(k.trim(), v.trim());
        }
        Ok(doc)
    }
}

impl fmt::Display for Document {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:?}")
    }
}

fn push_cell(doc: &mut Document, name: &str, c: &CellStats) {
    doc.push(format!("cell.{name}.cohort"), c.cohort);
    doc.push(format!("cell.{name}.group_a"), u8::from(c.group_a));
    doc.push(format!("cell.{name}.n"), c.n);
    doc.push_f64(format!("cell.{name}.did_y"), c.did_y);
    doc.push_f64(format!("cell.{name}.did_d"), c.did_d);
}

/// Estimate, numerator, denominator, the four cells, diagnostics and
/// inference fields when present.
pub fn estimate_document(est: &TripleWaldEstimate) -> Document {
    let mut doc = Document::new();
    let c = &est.contrast;
    doc.push("treated_cohort", c.treated);
    doc.push("control_cohort", c.control);
    doc.push("pre_period", c.pre);
    doc.push("post_period", c.post);
    doc.push_f64("estimate", est.estimate);
    doc.push_f64("numerator", est.numerator);
    doc.push_f64("denominator", est.denominator);
    doc.push("n_total", est.n_total);
    push_cell(&mut doc, "treated_a1", &est.cells.treated_a1);
    push_cell(&mut doc, "control_a1", &est.cells.control_a1);
    push_cell(&mut doc, "treated_a0", &est.cells.treated_a0);
    push_cell(&mut doc, "control_a0", &est.cells.control_a0);
    let diags: Vec<String> = est.diagnostics.iter().map(|d| d.to_string()).collect();
    doc.push("diagnostics", if diags.is_empty() { "none".to_string() } else { diags.join(",") });
    if let Some(inf) = &est.inference {
        doc.push(
            "variance_estimator",
            match inf.variance_estimator {
                VarianceEstimator::InfluenceFunction => "influence_function",
                VarianceEstimator::Bootstrap => "bootstrap",
            },
        );
        doc.push_f64("se", inf.se);
        doc.push_f64("ci_level", inf.ci_level);
        doc.push_f64("ci_lower", inf.ci.0);
        doc.push_f64("ci_upper", inf.ci.1);
        doc.push("n", inf.n);
        doc.push("degenerate", inf.degenerate);
        if inf.variance_estimator == VarianceEstimator::Bootstrap {
            doc.push("rejected_draws", inf.rejected_draws);
        }
    }
    doc
}

pub fn staggered_document(est: &StaggeredEstimate) -> Document {
    let mut doc = Document::new();
    doc.push("cohort", est.target.cohort);
    doc.push("rel_period", est.target.rel_period);
    doc.push("control", est.target.control);
    doc.extend(estimate_document(&est.wald));
    doc
}

fn flags(est: &TripleWaldEstimate) -> Vec<String> {
    let mut out: Vec<String> = est.diagnostics.iter().map(|d| d.to_string()).collect();
    if est.inference.as_ref().is_some_and(|i| i.degenerate) {
        out.push("degenerate_se".into());
    }
    out
}

/// `c=<c> l=<l> control=<never|last> est=<v> se=<v> n=<v> [flags]`.
pub fn batch_line(target: &StaggeredTarget, result: std::result::Result<&StaggeredEstimate, &Error>) -> String {
    match result {
        Ok(e) => {
            let w = &e.wald;
            let se = w.se().map_or("NA".to_string(), fmt_f64);
            let mut line = format!("{target} est={} se={se} n={}", fmt_f64(w.estimate), w.n_total);
            for f in flags(w) {
                line.push(' ');
                line.push_str(&f);
            }
            line
        }
        Err(err) => format!("{target} est=NA se=NA n=0 error=\"{err}\""),
    }
}
