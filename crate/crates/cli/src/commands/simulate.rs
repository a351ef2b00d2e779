use tripleiv_core::panel::{write_panel, LoadOptions};
use tripleiv_core::simulation::{assumption_audit, enumerate_population, generate, run_monte_carlo, DgpSpec, McConfig};

use crate::args::SimulateArgs;
use crate::failure::CliError;
use crate::manifest::{Input, OutputDir};

pub fn run(a: &SimulateArgs) -> Result<(), CliError> {
    super::check_level(a.ci_level)?;
    let input = Input::read(&a.spec)?;
    let text = std::str::from_utf8(&input.bytes)
        .map_err(|e| CliError::Usage(format!("{}: not UTF-8: {e}", a.spec.display())))?;
    let spec = DgpSpec::from_toml_str(text)?;
    let seed = a.seed.or(spec.seed).unwrap_or(0);

    // Everything is computed before anything is written, so a failing run
    // leaves no partial output behind.
    let mut config = McConfig::new(a.n, a.reps, seed);
    config.ci_level = a.ci_level;
    let summary = run_monte_carlo(&spec, &config)?;
    let (dataset, _) = generate(&spec, a.n, seed)?;
    let audit = assumption_audit(&enumerate_population(&spec, 1)?);

    let mut csv = Vec::new();
    write_panel(&dataset, &mut csv, &LoadOptions::new(spec.mode))?;
    let oracle = format!("{}\n# assumption audit (population)\n{audit}", summary.oracle);
    let mc = summary.to_string();

    let mut out = OutputDir::create(&a.out)?;
    out.write("dataset.csv", &csv)?;
    out.write("oracle.txt", oracle.as_bytes())?;
    out.write("monte_carlo.txt", mc.as_bytes())?;
    #[derive(serde::Serialize)]
    struct Effective<'a> {
        #[serde(flatten)]
        args: &'a SimulateArgs,
        effective_seed: u64,
    }
    out.finish("simulate", &Effective { args: a, effective_seed: seed }, &[input.digest])?;
    print!("{mc}");
    Ok(())
}
