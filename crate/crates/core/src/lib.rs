//! Triple instrumented difference-in-differences (triple DID-IV).
//!
//! Two-period and staggered triple Wald-DID estimators on long-format
//! panels, influence-function inference, the equivalent saturated 2SLS
//! regression, and a simulator with exact ground truth for checking the
//! estimators against the parameters they identify.

pub mod error;
pub mod estimand;
pub mod inference;
pub mod iv;
pub mod numeric;
pub mod panel;
pub mod report;
pub mod simulation;
pub mod staggered;

pub use error::{Error, Result};
