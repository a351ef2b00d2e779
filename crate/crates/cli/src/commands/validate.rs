use crate::args::ValidateArgs;
use crate::failure::CliError;
use crate::manifest::OutputDir;

pub fn run(a: &ValidateArgs) -> Result<(), CliError> {
    let (input, ds) = super::load(&a.data)?;
    let violations = ds.validate_design();
    let report: String = violations.iter().map(|v| format!("{v}\n")).collect();
    print!("{report}");
    eprintln!("{} units, {} periods, {} violation(s)", ds.n_units(), ds.periods().len(), violations.len());

    if let Some(dir) = &a.out {
        let mut out = OutputDir::create(dir)?;
        out.write("validation.txt", report.as_bytes())?;
        out.finish("validate", a, &[input.digest])?;
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} design violation(s)", violations.len())))
    }
}
