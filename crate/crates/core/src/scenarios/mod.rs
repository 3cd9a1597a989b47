//! End-to-end Monte Carlo studies of the worked examples.

mod config;
mod glm;
mod run;
mod verdicts;

pub use config::{
    atoms_default, lognormal_default, CheckSpec, DispersionModel, GlmFamily, GlmSpec, OrthoSpec, RotationSpec, ScenarioConfig,
    ScenarioKind, WDesign,
};
pub use glm::{glm_fit, GlmData, GlmDesign, GlmModel};
pub use run::{
    glm_design, lambda_dim, run_scenario, simulate_pairs, MonteCarloReport, RepRecord, Summary, DEGRADED_FRACTION,
};
pub use verdicts::{lambda_grid, rotation_check, scenario_conditions, tensor_grid};
