//! Synthetic populations with explicit potential treatments and outcomes,
//! exact oracles, assumption audits and Monte Carlo studies.

mod audit;
mod latent;
mod monte_carlo;
mod oracle;
mod spec;

pub use audit::{assumption_audit, Assumption, AuditCheck, AuditItem, AuditReport};
pub use latent::{
    enumerate_population, generate, generate_with, replicate_rng, sample_table, table_ddd, table_plain_wald,
    LatentTable, LatentUnit, TableKind,
};
pub use monte_carlo::{run_monte_carlo, McConfig, McEstimator, McRow, MonteCarloSummary};
pub use oracle::{compute_oracle, CausalResponse, OracleReport};
pub use spec::{
    CohortRates, CohortSpec, DgpSpec, EffectSpec, OutcomeSpec, TreatmentSpec, TrendTerm, MAX_ORDERED_LEVELS,
    SPEC_VERSION,
};

/// Counts unit-periods where the panel disagrees with the switching
/// equation applied to the latent table (`D = D^E` if exposed else `D∞`,
/// `Y = Y(D)`). Units are matched by position.
pub fn switching_mismatches(table: &LatentTable, dataset: &crate::panel::PanelDataset) -> usize {
    let mut bad = table.units.len().abs_diff(dataset.n_units()) * table.periods.len();
    for (u, obs) in table.units.iter().zip(dataset.units()) {
        for k in 0..table.periods.len() {
            let d = if table.is_exposed(u) { u.d_exposed[k] } else { u.d_never[k] };
            if obs.treatment[k] != d || obs.outcome[k].to_bits() != table.outcome(u, k, d).to_bits() {
                bad += 1;
            }
        }
    }
    bad
}
