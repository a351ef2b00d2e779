mod compare;
mod estimate;
mod simulate;
mod validate;

use tripleiv_core::panel::{load_panel, Mode, PanelDataset};
use tripleiv_core::staggered::ControlPolicy;

use crate::args::{ControlArg, DataArgs, Command};
use crate::failure::CliError;
use crate::manifest::Input;

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate(a) => validate::run(&a),
        Command::Estimate(a) => estimate::run(&a),
        Command::Simulate(a) => simulate::run(&a),
        Command::Compare(a) => compare::run(&a),
    }
}

fn load(data: &DataArgs) -> Result<(Input, PanelDataset), CliError> {
    let options = data.load_options()?;
    let input = Input::read(&data.input)?;
    let ds = load_panel(input.bytes.as_slice(), &options)?;
    Ok((input, ds))
}

/// Rejects a design whose instrument breaks the rules, printing each violation.
fn require_valid(ds: &PanelDataset) -> Result<(), CliError> {
    let violations = ds.validate_design();
    if violations.is_empty() {
        return Ok(());
    }
    for v in &violations {
        eprintln!("{v}");
    }
    Err(CliError::Failed(format!(
        "{} design violation(s); run `validate` for the report or pass --skip-validate",
        violations.len()
    )))
}

fn policy(mode: Mode, control: Option<ControlArg>) -> Result<ControlPolicy, CliError> {
    match (mode, control) {
        (Mode::TwoPeriod, Some(_)) => Err(CliError::Usage("--control applies only with --mode staggered".into())),
        (_, c) => Ok(c.unwrap_or(ControlArg::Never).into()),
    }
}

fn check_level(level: f64) -> Result<(), CliError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--ci-level must lie in (0, 1), got {level}")))
    }
}
